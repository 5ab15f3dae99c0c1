#include "idtsim/attacks.hpp"

#include <algorithm>
#include <cmath>

namespace idtsim {

namespace {

// Delivers every queued interrupt/tick that would land before `horizon`
// (events preempt the in-flight attacker iteration). Each delivery can push
// the clock, so the horizon is re-evaluated against the new clock.
void deliver_due(Core& core, EventQueue& queue, Cycle horizon_gap, SimLog* log) {
    while (!queue.empty() && queue.top().time < core.clock() + horizon_gap) {
        const Event ev = queue.pop();
        core.advance_to(ev.time);
        switch (ev.kind) {
            case EventKind::Interrupt:
                core.deliver_interrupt(ev.vector);
                if (log) log->add({ev.time, "interrupt", ev.vector, false, ""});
                break;
            case EventKind::WorkloadTick:
                if (ev.touch.value != 0) core.touch_line(ev.touch);
                if (log) log->add({ev.time, "tick", ev.touch.value, ev.touch.value != 0, ""});
                break;
            case EventKind::AttackerStep:
                throw SimError("attacker steps cannot be queued under a monitor");
        }
    }
}

}  // namespace

ProbePages make_probe_pages(const Core& core, std::uint32_t target_set) {
    const std::uint64_t heap = core.layout().user_heap_base.value;
    const std::uint64_t ways = core.cache().geometry().ways;
    if (core.config().user_heap_pages < ways + 2)
        throw InsufficientUserMemory("user heap too small for probe pages");
    // Heap pages [0, ways) feed eviction sets; take the next two.
    const std::uint32_t set_a = (target_set + 21) % 64;
    const std::uint32_t set_b = (target_set + 43) % 64;
    ProbePages p;
    p.page_a = VirtAddr{heap + ways * kPageBytes + set_a * kLineBytes};
    p.page_b = VirtAddr{heap + (ways + 1) * kPageBytes + set_b * kLineBytes};
    return p;
}

EvictionSet build_eviction_set(const Core& core, VirtAddr target_line) {
    const std::uint64_t ways = core.cache().geometry().ways;
    if (core.config().user_heap_pages < ways)
        throw InsufficientUserMemory("user heap smaller than associativity");
    const std::uint32_t set = cache_line_of(target_line).set_index;
    EvictionSet eset;
    eset.target_line = line_base(target_line);
    for (std::uint64_t i = 0; i < ways; ++i) {
        eset.members.push_back(VirtAddr{core.layout().user_heap_base.value +
                                        i * kPageBytes + set * kLineBytes});
    }
    return eset;
}

void evict(Core& core, const EvictionSet& eset) {
    const Cycle start = core.clock();
    for (int pass = 0; pass < 2; ++pass) {
        for (const VirtAddr m : eset.members) core.user_access(m);
    }
    core.advance_to(start + core.costs().evict_cost);
}

bool leakidt_probe(Core& core, VirtAddr target_kaddr, const ProbePages& probes,
                   bool require_nonzero, bool apply_noise) {
    if (require_nonzero && core.architectural_byte(target_kaddr) == 0)
        throw ZeroTargetByte("oracle target byte is architecturally zero");
    const Cycle start = core.clock();

    core.cache().flush(line_base(probes.page_a));
    core.cache().flush(line_base(probes.page_b));

    const std::uint8_t leaked = core.transient_read(target_kaddr);
    core.user_access(leaked != 0 ? probes.page_b : probes.page_a);

    // Flush+Reload decode: a hit on page B means the nonzero path ran.
    core.user_access(probes.page_a);
    const bool cached = core.user_access(probes.page_b) == Core::Latency::Hit;

    core.cache().flush(line_base(probes.page_a));
    core.cache().flush(line_base(probes.page_b));

    core.advance_to(start + core.costs().probe_cost);
    return apply_noise ? core.noise_flip(cached) : cached;
}

DetectionTrace monitor(Core& core, EventQueue& queue, unsigned vector,
                       Cycle duration, SimLog* log) {
    const VirtAddr target_kaddr = idt_entry_addr(core.idt(), vector);
    const VirtAddr target_line = cache_line_of(target_kaddr).line_addr;
    const EvictionSet eset = build_eviction_set(core, target_line);
    const ProbePages probes = make_probe_pages(core, cache_line_of(target_kaddr).set_index);
    if (core.architectural_byte(target_kaddr) == 0)
        throw ZeroTargetByte("oracle target byte is architecturally zero");

    const Cycle probe_cost = core.costs().probe_cost;
    const Cycle t_end = core.clock() + duration;
    DetectionTrace trace;
    trace.vector = vector;

    auto record = [&](Cycle t) {
        trace.times.push_back(t);
        if (log) log->add({t, "detect", vector, false, ""});
        evict(core, eset);
    };

    while (core.clock() + probe_cost <= t_end) {
        deliver_due(core, queue, probe_cost, log);
        if (core.clock() + probe_cost > t_end) break;

        if (!core.cache().contains(target_line)) {
            // Quiet stretch: nothing to observe until the next event, so the
            // probes can only fire through noise. Skip them in one step,
            // placing a possible false positive by the geometric law.
            const Cycle next_ev = queue.empty() ? t_end : std::min(queue.top().time, t_end);
            if (next_ev > core.clock() + probe_cost) {
                const std::uint64_t quiet = (next_ev - core.clock()) / probe_cost;
                const std::uint64_t gap = core.noise_gap();
                if (gap >= quiet) {
                    core.advance(quiet * probe_cost);
                    continue;
                }
                core.advance(gap * probe_cost);
                if (core.clock() + probe_cost > t_end) break;
                // This probe is the drawn false positive: run it for its
                // side effects, then record the flipped verdict.
                leakidt_probe(core, target_kaddr, probes, false, false);
                record(core.clock());
                continue;
            }
        }
        if (leakidt_probe(core, target_kaddr, probes)) record(core.clock());
    }
    return trace;
}

DetectionTrace prime_probe_monitor(Core& core, EventQueue& queue,
                                   std::uint32_t set_index, Cycle duration,
                                   SimLog* log) {
    // Prime lines reuse the eviction-set construction for the set.
    const EvictionSet prime =
        build_eviction_set(core, VirtAddr{core.idt().base().value + set_index * kLineBytes});
    const Cycle round_cost = core.costs().probe_cost;
    const Cycle t_end = core.clock() + duration;
    DetectionTrace trace;
    trace.vector = set_index;

    // Initial prime; afterwards each probe pass doubles as the next prime.
    // Every round is simulated: even an all-hit sweep reshapes the set's
    // replacement state, which decides whether the next foreign fill leaves
    // a hole that survives into a second round.
    {
        const Cycle start = core.clock();
        for (int pass = 0; pass < 2; ++pass) {
            for (const VirtAddr m : prime.members) core.user_access(m);
        }
        core.advance_to(start + core.costs().evict_cost);
    }

    bool prev_miss = false;
    std::uint64_t round_idx = 0;
    while (core.clock() + round_cost <= t_end) {
        deliver_due(core, queue, round_cost, log);
        if (core.clock() + round_cost > t_end) break;

        const Cycle start = core.clock();
        // Rotating start point, as a pointer-chasing probe loop would walk.
        const std::size_t n = prime.members.size();
        const std::size_t first = static_cast<std::size_t>(round_idx % n);
        unsigned misses = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (core.user_access(prime.members[(first + i) % n]) == Core::Latency::Miss)
                ++misses;
        }
        core.advance_to(start + round_cost);
        ++round_idx;

        if (misses > 0 && prev_miss) {
            trace.times.push_back(core.clock());
            if (log) log->add({core.clock(), "detect", set_index, false, "pp"});
        }
        prev_miss = misses > 0;
    }
    return trace;
}

TemplateResult template_idt(const CoreFactory& factory, const SimConfig& cfg,
                            std::uint64_t seed, const InterruptSource& induce,
                            Cycle window,
                            const std::vector<InterruptSource>& background) {
    constexpr unsigned kLines = 64;
    std::vector<double> quiet(kLines, 0.0);
    std::vector<double> active(kLines, 0.0);

    auto run_window = [&](unsigned line, bool with_induced) {
        Core core = factory();
        EventQueue queue;
        push_sources(queue, background, window, cfg, seed ^ (line * 2 + 1));
        if (with_induced) {
            std::vector<InterruptSource> one{induce};
            push_sources(queue, one, window, cfg, seed ^ (0x1d7 + line));
        }
        const DetectionTrace t = monitor(core, queue, line * 4, window);
        return static_cast<double>(t.times.size());
    };

    for (unsigned line = 0; line < kLines; ++line) {
        quiet[line] = run_window(line, false);
        active[line] = run_window(line, true);
    }

    double mean = 0.0;
    for (double q : quiet) mean += q;
    mean /= kLines;
    double var = 0.0;
    for (double q : quiet) var += (q - mean) * (q - mean);
    const double sigma = std::sqrt(var / kLines);

    unsigned best_line = 0;
    double best_diff = -1.0;
    for (unsigned line = 0; line < kLines; ++line) {
        const double d = active[line] - quiet[line];
        if (d > best_diff) {
            best_diff = d;
            best_line = line;
        }
    }
    if (best_diff <= 0.0 || best_diff <= 5.0 * sigma)
        throw NoDistinctEntry("no IDT line shows a clear induced differential");

    const unsigned pair_first = best_line & ~1u;
    TemplateResult result;
    result.block_first = pair_first * 4;
    result.block_last = pair_first * 4 + 7;
    result.differential = best_diff;
    // If the block was quiet without the induced source, every detection is
    // attributable to it and the induced vector itself is pinned down.
    const double quiet_block = quiet[pair_first] + quiet[pair_first + 1];
    result.ambiguous = quiet_block > std::max(1.0, 0.1 * best_diff);
    result.vector = result.ambiguous ? result.block_first : induce.vector;
    return result;
}

}  // namespace idtsim
