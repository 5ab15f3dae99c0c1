#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "idtsim/core_sim.hpp"
#include "idtsim/workloads.hpp"

namespace idtsim {

/// The two user decode pages of the transient encoder. Page A is touched on
/// a zero read, page B on a nonzero read; their lines live in cache sets
/// distinct from each other and from the target's set.
struct ProbePages {
    VirtAddr page_a{0};
    VirtAddr page_b{0};
};

ProbePages make_probe_pages(const Core& core, std::uint32_t target_set);

struct EvictionSet {
    VirtAddr target_line{0};
    std::vector<VirtAddr> members;  // user lines sharing the target's set index
};

/// User addresses congruent to the target line (same bits 6..11), one line
/// per heap page, `ways` of them.
EvictionSet build_eviction_set(const Core& core, VirtAddr target_line);

/// Two sequential passes over the members; under Tree-PLRU this removes
/// every line of the set that is not a member, including the target.
void evict(Core& core, const EvictionSet& eset);

/// One transient-oracle iteration: flush both probe lines, read the kernel
/// byte transiently, touch page B iff the leaked value is nonzero, then
/// decode with a timed reload of both pages. Reports whether the target line
/// was cached; leaves the probe lines flushed and the target untouched.
/// Costs exactly probe_cost cycles.
bool leakidt_probe(Core& core, VirtAddr target_kaddr, const ProbePages& probes,
                   bool require_nonzero = true, bool apply_noise = true);

struct DetectionTrace {
    unsigned vector = 0;
    std::vector<Cycle> times;  // strictly increasing
};

/// Probe loop at probe_cost cadence over [clock, clock + duration): on a
/// cached verdict the timestamp is recorded and the entry evicted. Queued
/// interrupts and workload ticks preempt probes. Quiet stretches are
/// fast-forwarded; with noise the skip draws the flip position from the
/// matching geometric law.
DetectionTrace monitor(Core& core, EventQueue& queue, unsigned vector,
                       Cycle duration, SimLog* log = nullptr);

/// Prime+Probe baseline on one L1D set. Rounds run at probe_cost cadence:
/// each probe pass reloads the prime lines and counts misses, and an
/// interrupt is reported only when two consecutive rounds miss, timestamped
/// at the second. After a report the set is fully re-primed.
DetectionTrace prime_probe_monitor(Core& core, EventQueue& queue,
                                   std::uint32_t set_index, Cycle duration,
                                   SimLog* log = nullptr);

struct TemplateResult {
    unsigned vector = 0;       // induced vector when unambiguous, else block_first
    unsigned block_first = 0;  // 8-entry prefetch block bounds
    unsigned block_last = 0;
    bool ambiguous = false;
    double differential = 0.0;
};

using CoreFactory = std::function<Core()>;

/// Finds the IDT block behind an induced interrupt: per IDT line, compare
/// detection counts over a window with and without the induced source. The
/// winning differential must clear 5 sigma of the quiet counts, else
/// NoDistinctEntry. Granularity is the 8-entry prefetch block; the exact
/// vector is reported only when nothing else is active in that block.
TemplateResult template_idt(const CoreFactory& factory, const SimConfig& cfg,
                            std::uint64_t seed, const InterruptSource& induce,
                            Cycle window,
                            const std::vector<InterruptSource>& background = {});

}  // namespace idtsim
