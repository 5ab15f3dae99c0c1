#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "idtsim/types.hpp"

namespace idtsim {

/// Plain-text key/value config with [section] headers. Values keep their
/// raw text; typed accessors convert on demand. Unknown keys are preserved
/// so experiment scenarios can carry their own knobs.
class Ini {
public:
    static Ini parse_file(const std::string& path);
    static Ini parse_text(const std::string& text);

    bool has(const std::string& section, const std::string& key) const;
    std::string get_str(const std::string& section, const std::string& key,
                        const std::string& fallback) const;
    std::uint64_t get_u64(const std::string& section, const std::string& key,
                          std::uint64_t fallback) const;
    double get_f64(const std::string& section, const std::string& key,
                   double fallback) const;
    std::vector<std::uint64_t> get_u64_list(const std::string& section,
                                            const std::string& key) const;

    void set(const std::string& section, const std::string& key,
             const std::string& value);

    /// Canonical dump: sections and keys sorted, one `key = value` per line.
    std::string canonical_text() const;

private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
};

struct CostTable {
    Cycle probe_cost = 2000;
    Cycle evict_cost = 1500;
    Cycle isr_cost = 4000;
    Cycle softirq_delay = 3000;  // deferred handler work after the hard IRQ
    std::uint64_t cycles_per_us = 3000;
    Cycle hit_latency = 4;
    Cycle miss_latency = 40;
};

/// Resolved simulator configuration. The raw Ini is kept for experiment
/// scenario keys that live outside the core sections.
struct SimConfig {
    // [mem]
    VirtAddr idt_base{0xfffffe0000000000ULL};
    std::uint64_t phys_mem_bytes = 1ULL << 30;
    std::vector<std::uint64_t> kernel_ranges{2, 2, 4};  // entry, descriptor, direct-map pages
    std::uint64_t mtrr_budget = 8;
    std::uint64_t user_heap_pages = 64;
    std::uint64_t secret_pages = 4;

    // [cache]
    std::uint32_t l1d_sets = 64;
    std::uint32_t l1d_ways = 8;

    // [core]
    CostTable costs;
    double noise_p = 0.004;

    Ini raw;

    static SimConfig defaults();
    static SimConfig from_file(const std::string& path);
    static SimConfig from_ini(Ini ini);

    /// Canonical text of the resolved core fields plus raw extras; hashed
    /// into experiment manifests.
    std::string canonical_text() const;

    Cycle us_to_cycles(double us) const {
        return static_cast<Cycle>(us * static_cast<double>(costs.cycles_per_us));
    }
};

std::uint64_t fnv1a64(const std::string& data);

}  // namespace idtsim
