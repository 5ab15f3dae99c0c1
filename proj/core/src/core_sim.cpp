#include "idtsim/core_sim.hpp"

#include <fstream>
#include <sstream>

namespace idtsim {

void EventQueue::push(Event ev) {
    ev.seq = next_seq_++;
    heap_.push(ev);
}

Event EventQueue::pop() {
    Event ev = heap_.top();
    heap_.pop();
    return ev;
}

std::string SimLog::to_csv() const {
    std::ostringstream out;
    out << "time_cycles,kind,vector_or_addr,detail\n";
    for (const auto& r : records_) {
        out << r.time_cycles << ',' << r.kind << ',';
        if (r.addr_form)
            out << "0x" << std::hex << r.vector_or_addr << std::dec;
        else
            out << r.vector_or_addr;
        out << ',' << r.detail << '\n';
    }
    return out.str();
}

void SimLog::write_csv(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw SimError("cannot write log: " + path);
    f << to_csv();
}

namespace {

std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdULL;
    x ^= x >> 33;
    x *= 0xc4ceb9fe1a85ec53ULL;
    x ^= x >> 33;
    return x;
}

}  // namespace

Core::Core(const SimConfig& config, std::uint64_t seed, const KernelLayout& layout)
    : config_(config),
      layout_(layout),
      space_(build_kpti_space(config, layout)),
      idt_(IdtLayout::with_default_handlers(config.idt_base)),
      mtrrs_(config.mtrr_budget),
      cache_(CacheGeometry{config.l1d_sets, config.l1d_ways, 64}),
      costs_(config.costs),
      noise_p_(config.noise_p),
      noise_rng_(mix64(seed ^ 0x9e3779b97f4a7c15ULL)) {
    cache_.attach_mtrrs(&mtrrs_);

    // Handler footprints: 4 kernel-entry lines per vector. Three sit in sets
    // offset 8/24/40 from the vector's IDT line; the last is the handler
    // entry code aliasing the vector's own set. The descriptor line is
    // always the freshest fill of its set when the footprint lands, so the
    // aliasing line pressures the set without evicting it.
    const std::uint64_t entry_pages = config.kernel_ranges[0];
    for (unsigned v = 0; v < kIdtVectors; ++v) {
        const std::uint32_t home_set = cache_line_of(idt_entry_addr(idt_, v)).set_index;
        for (unsigned k = 0; k < 4; ++k) {
            const std::uint32_t set = k < 3 ? (home_set + 8 + 16 * k) % 64 : home_set;
            const std::uint64_t page = (v + k) % entry_pages;
            footprint_[v].push_back(
                VirtAddr{layout.entry_base.value + page * kPageBytes + set * kLineBytes});
        }
    }
}

PhysAddr Core::phys_of(VirtAddr a) const {
    auto p = space_.translate_kernel(a);
    if (!p) throw SimError("address not mapped in kernel view");
    return *p;
}

void Core::deliver_interrupt(unsigned vector) {
    if (vector >= kIdtVectors) throw SimError("interrupt vector out of range");
    const VirtAddr entry_line = cache_line_of(idt_entry_addr(idt_, vector)).line_addr;
    cache_.demand_fill_with_prefetch(entry_line, phys_of(entry_line));
    for (const VirtAddr line : footprint_[vector]) {
        cache_.access(line, phys_of(line));
    }
    clock_ += costs_.isr_cost;
}

std::uint8_t Core::transient_read(VirtAddr kaddr) {
    ++transient_reads_;
    const PageMapping* m = space_.find_user(kaddr);
    if (!m) {
        ++unmapped_faults_;
        return 0x00;
    }
    const VirtAddr line = line_base(kaddr);
    if (!cache_.contains(line)) return 0x00;
    return architectural_byte(kaddr);
}

Core::Latency Core::user_access(VirtAddr vaddr) {
    if (!space_.user_accessible(vaddr))
        throw ProtectionFault("user access to non-user-accessible address");
    auto phys = space_.translate_user(vaddr);
    const auto res = cache_.access(line_base(vaddr), line_base(*phys));
    clock_ += res.hit ? costs_.hit_latency : costs_.miss_latency;
    return res.hit ? Latency::Hit : Latency::Miss;
}

void Core::touch_line(VirtAddr vaddr) {
    const PageMapping* m = space_.find_kernel(vaddr);
    if (!m) throw SimError("workload touch of unmapped address");
    cache_.access(line_base(vaddr), line_base(phys_of(vaddr)));
}

MachineConfigDelta Core::install_uncachable(const UncachableRegion& region) {
    MachineConfigDelta delta = mtrrs_.install(region);
    for (const auto& r : delta.added) cache_.flush_phys_range(r);
    return delta;
}

std::uint8_t Core::architectural_byte(VirtAddr a) const {
    if (idt_.covers(a)) return idt_.byte_at(a.value - idt_.base().value);
    // Pseudo-content for everything else, stable per address.
    return static_cast<std::uint8_t>(mix64(a.value) & 0xff);
}

bool Core::noise_flip(bool outcome) {
    if (noise_p_ <= 0.0) return outcome;
    std::bernoulli_distribution flip(noise_p_);
    return flip(noise_rng_) ? !outcome : outcome;
}

std::uint64_t Core::noise_gap() {
    if (noise_p_ <= 0.0) return UINT64_MAX;
    std::geometric_distribution<std::uint64_t> gap(noise_p_);
    return gap(noise_rng_);
}

SimLog run(Core& core, EventQueue& queue, Cycle until, const AttackerHook& hook) {
    SimLog log;
    while (!queue.empty() && queue.top().time <= until) {
        const Event ev = queue.pop();
        core.advance_to(ev.time);
        switch (ev.kind) {
            case EventKind::Interrupt:
                core.deliver_interrupt(ev.vector);
                log.add({ev.time, "interrupt", ev.vector, false, ""});
                break;
            case EventKind::WorkloadTick:
                if (ev.touch.value != 0) core.touch_line(ev.touch);
                log.add({ev.time, "tick", ev.touch.value, ev.touch.value != 0, ""});
                break;
            case EventKind::AttackerStep:
                if (hook) hook(core, queue, log);
                break;
        }
    }
    return log;
}

}  // namespace idtsim
