#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include "idtsim/cache.hpp"
#include "idtsim/config.hpp"
#include "idtsim/mem_model.hpp"
#include "idtsim/types.hpp"

namespace idtsim {

enum class EventKind { Interrupt, WorkloadTick, AttackerStep };

struct Event {
    Cycle time = 0;
    EventKind kind = EventKind::Interrupt;
    unsigned vector = 0;       // Interrupt
    VirtAddr touch{0};         // WorkloadTick: line the workload loads, 0 = none
    std::uint64_t seq = 0;     // FIFO tiebreak, assigned by the queue
};

/// Time-ordered event queue. Ties break Interrupt < WorkloadTick <
/// AttackerStep, then FIFO.
class EventQueue {
public:
    void push(Event ev);
    bool empty() const { return heap_.empty(); }
    const Event& top() const { return heap_.top(); }
    Event pop();
    std::size_t size() const { return heap_.size(); }

private:
    struct Later {
        bool operator()(const Event& a, const Event& b) const {
            if (a.time != b.time) return a.time > b.time;
            if (a.kind != b.kind) return static_cast<int>(a.kind) > static_cast<int>(b.kind);
            return a.seq > b.seq;
        }
    };
    std::priority_queue<Event, std::vector<Event>, Later> heap_;
    std::uint64_t next_seq_ = 0;
};

struct SimRecord {
    Cycle time_cycles = 0;
    std::string kind;            // interrupt | tick | detect | fault
    std::uint64_t vector_or_addr = 0;
    bool addr_form = false;      // print as hex address instead of decimal
    std::string detail;
};

/// Flat run log, serialized as CSV `time_cycles,kind,vector_or_addr,detail`.
class SimLog {
public:
    void add(SimRecord r) { records_.push_back(std::move(r)); }
    const std::vector<SimRecord>& records() const { return records_; }
    std::string to_csv() const;
    void write_csv(const std::string& path) const;

private:
    std::vector<SimRecord> records_;
};

/// Single simulated core: clock, L1D, KPTI address space, IDT and the
/// transient-read oracle. Interrupt handling is atomic with respect to
/// attacker steps.
class Core {
public:
    Core(const SimConfig& config, std::uint64_t seed,
         const KernelLayout& layout = {});

    Cycle clock() const { return clock_; }
    void advance(Cycle cycles) { clock_ += cycles; }
    void advance_to(Cycle t) {
        if (t > clock_) clock_ = t;
    }

    /// Interrupt delivery: the descriptor lookup demand-fills the vector's
    /// IDT line (plus prefetch partner), the handler touches its kernel-text
    /// footprint, and the attacker loses isr_cost cycles.
    void deliver_interrupt(unsigned vector);

    /// Faulting kernel read observed transiently: returns the architectural
    /// byte iff the line is resident in L1D, otherwise 0x00. Never changes
    /// residency. Unmapped addresses fault and read as 0x00.
    std::uint8_t transient_read(VirtAddr kaddr);

    enum class Latency { Hit, Miss };

    /// Architectural load from a user-accessible address; advances the clock
    /// by the hit or miss latency.
    Latency user_access(VirtAddr vaddr);

    /// Plain line load on the victim's behalf (WorkloadTick). No clock cost.
    void touch_line(VirtAddr vaddr);

    /// Marks a physical range uncachable and drops any resident lines in it.
    MachineConfigDelta install_uncachable(const UncachableRegion& region);

    std::uint8_t architectural_byte(VirtAddr a) const;

    bool noise_flip(bool outcome);
    /// Failures before the next noise flip; returns UINT64_MAX if noise_p=0.
    std::uint64_t noise_gap();

    L1dCache& cache() { return cache_; }
    const L1dCache& cache() const { return cache_; }
    const AddressSpace& space() const { return space_; }
    const IdtLayout& idt() const { return idt_; }
    const CostTable& costs() const { return costs_; }
    double noise_p() const { return noise_p_; }
    void set_noise_p(double p) { noise_p_ = p; }
    const KernelLayout& layout() const { return layout_; }
    const SimConfig& config() const { return config_; }
    std::uint64_t unmapped_faults() const { return unmapped_faults_; }
    std::uint64_t transient_reads() const { return transient_reads_; }

    /// Kernel-text lines the vector's handler touches, placed away from the
    /// vector's own IDT pair.
    const std::vector<VirtAddr>& isr_footprint(unsigned vector) const {
        return footprint_[vector];
    }

    PhysAddr phys_of(VirtAddr a) const;

private:
    SimConfig config_;
    KernelLayout layout_;
    AddressSpace space_;
    IdtLayout idt_;
    MtrrSet mtrrs_;
    L1dCache cache_;
    CostTable costs_;
    double noise_p_;
    Cycle clock_ = 0;
    std::mt19937_64 noise_rng_;
    std::uint64_t unmapped_faults_ = 0;
    std::uint64_t transient_reads_ = 0;
    std::array<std::vector<VirtAddr>, kIdtVectors> footprint_;
};

using AttackerHook = std::function<void(Core&, EventQueue&, SimLog&)>;

/// Drains events up to `until` in queue order. Interrupts are delivered and
/// logged at their event time; AttackerStep events invoke `hook`. Identical
/// (seed, config, queue) inputs give a byte-identical log.
SimLog run(Core& core, EventQueue& queue, Cycle until, const AttackerHook& hook = {});

}  // namespace idtsim
