#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "idtsim/mem_model.hpp"
#include "idtsim/types.hpp"

namespace idtsim {

struct CacheGeometry {
    std::uint32_t sets = 64;
    std::uint32_t ways = 8;
    std::uint32_t line_bytes = 64;

    void validate() const;
};

/// Tree-PLRU direction bits for one set: ways-1 bits in heap order, bit 0 at
/// the root. A bit of 0 sends the victim walk left, 1 sends it right; a
/// touch repoints every node on the accessed way's path at the other side.
class TreePlru {
public:
    explicit TreePlru(std::uint32_t ways);

    void touch(std::uint32_t way);
    std::uint32_t victim() const;

    const std::vector<std::uint8_t>& bits() const { return bits_; }

private:
    std::uint32_t ways_;
    std::vector<std::uint8_t> bits_;
};

/// Virtually indexed L1D model. Residency is keyed by virtual line address;
/// physical tags are carried for the uncachable-region check. Fills whose
/// physical line falls inside an installed uncachable region are suppressed
/// with no state change.
class L1dCache {
public:
    explicit L1dCache(CacheGeometry geo = {});

    void attach_mtrrs(const MtrrSet* mtrrs) { mtrrs_ = mtrrs; }

    struct AccessResult {
        bool hit = false;
        std::optional<VirtAddr> evicted;
    };

    /// Plain demand access: hit updates PLRU, miss fills via the PLRU victim
    /// unless the fill is suppressed.
    AccessResult access(VirtAddr line_addr, PhysAddr phys_line);

    /// Demand fill plus the adjacent-line prefetch partner within the
    /// 128-byte-aligned pair. Used on the interrupt path only.
    void demand_fill_with_prefetch(VirtAddr line_addr, PhysAddr phys_line);

    /// Drops the line if resident. PLRU bits of the set are left unchanged.
    void flush(VirtAddr line_addr);

    bool contains(VirtAddr line_addr) const;

    std::uint32_t set_of(VirtAddr line_addr) const {
        return static_cast<std::uint32_t>((line_addr.value >> 6) & (geo_.sets - 1));
    }

    std::vector<VirtAddr> resident_lines(std::uint32_t set) const;
    void flush_phys_range(const UncachableRegion& region);

    const CacheGeometry& geometry() const { return geo_; }
    const TreePlru& plru(std::uint32_t set) const { return plru_[set]; }

private:
    struct Way {
        bool valid = false;
        std::uint64_t vline = 0;
        std::uint64_t pline = 0;
    };

    Way* find(std::uint32_t set, std::uint64_t vline);
    const Way* find(std::uint32_t set, std::uint64_t vline) const;
    bool fill_suppressed(PhysAddr phys_line) const;

    CacheGeometry geo_;
    std::vector<Way> ways_;  // sets * ways, set-major
    std::vector<TreePlru> plru_;
    const MtrrSet* mtrrs_ = nullptr;
};

}  // namespace idtsim
