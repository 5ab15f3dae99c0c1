#include "idtsim/cache.hpp"

namespace idtsim {

namespace {
bool power_of_two(std::uint32_t v) { return v != 0 && (v & (v - 1)) == 0; }
}

void CacheGeometry::validate() const {
    if (line_bytes != 64) throw ConfigError("line_bytes must be 64");
    if (!power_of_two(sets)) throw ConfigError("l1d_sets must be a power of two");
    if (!power_of_two(ways)) throw ConfigError("l1d_ways must be a power of two");
}

TreePlru::TreePlru(std::uint32_t ways) : ways_(ways), bits_(ways > 0 ? ways - 1 : 0, 0) {}

void TreePlru::touch(std::uint32_t way) {
    // Walk the tree from the root toward the accessed leaf, repointing each
    // node at the subtree not taken.
    std::uint32_t node = 0;
    std::uint32_t lo = 0;
    std::uint32_t hi = ways_;
    while (hi - lo > 1) {
        const std::uint32_t mid = lo + (hi - lo) / 2;
        if (way < mid) {
            bits_[node] = 1;  // victim side is now the right subtree
            node = 2 * node + 1;
            hi = mid;
        } else {
            bits_[node] = 0;
            node = 2 * node + 2;
            lo = mid;
        }
    }
}

std::uint32_t TreePlru::victim() const {
    std::uint32_t node = 0;
    std::uint32_t lo = 0;
    std::uint32_t hi = ways_;
    while (hi - lo > 1) {
        const std::uint32_t mid = lo + (hi - lo) / 2;
        if (bits_[node] == 0) {
            node = 2 * node + 1;
            hi = mid;
        } else {
            node = 2 * node + 2;
            lo = mid;
        }
    }
    return lo;
}

L1dCache::L1dCache(CacheGeometry geo) : geo_(geo) {
    geo_.validate();
    ways_.resize(static_cast<std::size_t>(geo_.sets) * geo_.ways);
    plru_.reserve(geo_.sets);
    for (std::uint32_t s = 0; s < geo_.sets; ++s) plru_.emplace_back(geo_.ways);
}

L1dCache::Way* L1dCache::find(std::uint32_t set, std::uint64_t vline) {
    Way* base = &ways_[static_cast<std::size_t>(set) * geo_.ways];
    for (std::uint32_t w = 0; w < geo_.ways; ++w) {
        if (base[w].valid && base[w].vline == vline) return &base[w];
    }
    return nullptr;
}

const L1dCache::Way* L1dCache::find(std::uint32_t set, std::uint64_t vline) const {
    return const_cast<L1dCache*>(this)->find(set, vline);
}

bool L1dCache::fill_suppressed(PhysAddr phys_line) const {
    return mtrrs_ != nullptr && mtrrs_->suppressed(phys_line);
}

L1dCache::AccessResult L1dCache::access(VirtAddr line_addr, PhysAddr phys_line) {
    const std::uint64_t vline = line_base(line_addr).value;
    const std::uint64_t pline = line_base(phys_line).value;
    const std::uint32_t set = set_of(line_addr);
    Way* base = &ways_[static_cast<std::size_t>(set) * geo_.ways];

    if (Way* hit = find(set, vline)) {
        plru_[set].touch(static_cast<std::uint32_t>(hit - base));
        return {true, std::nullopt};
    }
    if (fill_suppressed(PhysAddr{pline})) return {false, std::nullopt};

    // Prefer an invalid way; otherwise evict the PLRU victim.
    std::uint32_t slot = geo_.ways;
    for (std::uint32_t w = 0; w < geo_.ways; ++w) {
        if (!base[w].valid) {
            slot = w;
            break;
        }
    }
    std::optional<VirtAddr> evicted;
    if (slot == geo_.ways) {
        slot = plru_[set].victim();
        evicted = VirtAddr{base[slot].vline};
    }
    base[slot] = Way{true, vline, pline};
    plru_[set].touch(slot);
    return {false, evicted};
}

void L1dCache::demand_fill_with_prefetch(VirtAddr line_addr, PhysAddr phys_line) {
    access(line_addr, phys_line);
    // Spatial partner: the other 64-byte line of the 128-byte-aligned pair.
    const VirtAddr partner{line_base(line_addr).value ^ kLineBytes};
    const PhysAddr partner_phys{line_base(phys_line).value ^ kLineBytes};
    access(partner, partner_phys);
}

void L1dCache::flush(VirtAddr line_addr) {
    const std::uint64_t vline = line_base(line_addr).value;
    if (Way* w = find(set_of(line_addr), vline)) w->valid = false;
}

bool L1dCache::contains(VirtAddr line_addr) const {
    return find(set_of(line_addr), line_base(line_addr).value) != nullptr;
}

std::vector<VirtAddr> L1dCache::resident_lines(std::uint32_t set) const {
    std::vector<VirtAddr> out;
    const Way* base = &ways_[static_cast<std::size_t>(set) * geo_.ways];
    for (std::uint32_t w = 0; w < geo_.ways; ++w) {
        if (base[w].valid) out.push_back(VirtAddr{base[w].vline});
    }
    return out;
}

void L1dCache::flush_phys_range(const UncachableRegion& region) {
    const std::uint64_t lo = region.start.value;
    const std::uint64_t hi = lo + region.len;
    for (auto& w : ways_) {
        if (w.valid && w.pline >= lo && w.pline < hi) w.valid = false;
    }
}

}  // namespace idtsim
