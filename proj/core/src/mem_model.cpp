#include "idtsim/mem_model.hpp"

#include <algorithm>
#include <string>

namespace idtsim {

void AddressSpace::add(const PageMapping& m, bool user_visible) {
    if ((m.virt_page.value & (kPageBytes - 1)) != 0)
        throw ConfigError("mapping virt_page not page-aligned");
    if ((m.phys_page.value & (kPageBytes - 1)) != 0)
        throw ConfigError("mapping phys_page not page-aligned");
    if (!is_canonical(m.virt_page))
        throw ConfigError("mapping virt_page not canonical");
    if (kernel_.count(m.virt_page.value))
        throw ConfigError("duplicate mapping for virt page");
    kernel_[m.virt_page.value] = m;
    if (user_visible) user_[m.virt_page.value] = m;
}

const PageMapping* AddressSpace::find_user(VirtAddr a) const {
    auto it = user_.find(page_base(a).value);
    return it == user_.end() ? nullptr : &it->second;
}

const PageMapping* AddressSpace::find_kernel(VirtAddr a) const {
    auto it = kernel_.find(page_base(a).value);
    return it == kernel_.end() ? nullptr : &it->second;
}

bool AddressSpace::user_accessible(VirtAddr a) const {
    const PageMapping* m = find_user(a);
    return m != nullptr && m->user_accessible;
}

std::optional<PhysAddr> AddressSpace::translate_user(VirtAddr a) const {
    const PageMapping* m = find_user(a);
    if (!m) return std::nullopt;
    return PhysAddr{m->phys_page.value + (a.value & (kPageBytes - 1))};
}

std::optional<PhysAddr> AddressSpace::translate_kernel(VirtAddr a) const {
    const PageMapping* m = find_kernel(a);
    if (!m) return std::nullopt;
    return PhysAddr{m->phys_page.value + (a.value & (kPageBytes - 1))};
}

IdtLayout::IdtLayout(VirtAddr base, std::array<IdtEntry, kIdtVectors> entries)
    : base_(base), entries_(entries) {
    if ((base_.value & (kPageBytes - 1)) != 0)
        throw ConfigError("IDT base must be page-aligned");
    for (unsigned v = 0; v < kIdtVectors; ++v) {
        if (entries_[v].isr_pointer == 0)
            throw ConfigError("IDT entry " + std::to_string(v) + " has null ISR pointer");
    }
}

IdtLayout IdtLayout::with_default_handlers(VirtAddr base) {
    std::array<IdtEntry, kIdtVectors> entries{};
    for (unsigned v = 0; v < kIdtVectors; ++v) {
        // Spread handlers through kernel text; low byte in [1, 251].
        const std::uint64_t low = (static_cast<std::uint64_t>(v) * 37) % 251 + 1;
        entries[v].isr_pointer =
            0xffffffff81a00000ULL + (static_cast<std::uint64_t>(v) << 12) + low;
        entries[v].meta = 0x00008e0000000000ULL | v;
    }
    return IdtLayout(base, entries);
}

std::uint8_t IdtLayout::byte_at(std::uint64_t offset) const {
    const unsigned vector = static_cast<unsigned>(offset / kIdtEntryBytes);
    const unsigned byte = static_cast<unsigned>(offset % kIdtEntryBytes);
    const IdtEntry& e = entries_[vector];
    const std::uint64_t field = byte < 8 ? e.isr_pointer : e.meta;
    const unsigned shift = (byte % 8) * 8;
    return static_cast<std::uint8_t>((field >> shift) & 0xff);
}

VirtAddr idt_entry_addr(const IdtLayout& idt, unsigned vector) {
    return VirtAddr{idt.base().value + kIdtEntryBytes * vector};
}

LineInfo cache_line_of(VirtAddr a) {
    return LineInfo{line_base(a), static_cast<std::uint32_t>((a.value >> 6) & 0x3f)};
}

MachineConfigDelta MtrrSet::install(const UncachableRegion& region) {
    if ((region.start.value & (kPageBytes - 1)) != 0 ||
        (region.len & (kPageBytes - 1)) != 0)
        throw ConfigError("uncachable region must cover whole physical pages");
    if (region.len == 0) return MachineConfigDelta{};
    const std::uint64_t lo = region.start.value;
    const std::uint64_t hi = lo + region.len;
    for (const auto& r : regions_) {
        const std::uint64_t rlo = r.start.value;
        const std::uint64_t rhi = rlo + r.len;
        if (lo < rhi && rlo < hi) throw RegionOverlap("uncachable regions overlap");
    }
    if (regions_.size() >= budget_)
        throw BudgetExceeded("range-register budget exhausted");
    regions_.push_back(region);
    return MachineConfigDelta{{region}};
}

bool MtrrSet::suppressed(PhysAddr line) const {
    for (const auto& r : regions_) {
        if (line.value >= r.start.value && line.value < r.start.value + r.len)
            return true;
    }
    return false;
}

namespace {

struct VirtRange {
    std::uint64_t lo;
    std::uint64_t hi;
    const char* name;
};

void check_disjoint(const std::vector<VirtRange>& ranges) {
    for (std::size_t i = 0; i < ranges.size(); ++i) {
        for (std::size_t j = i + 1; j < ranges.size(); ++j) {
            if (ranges[i].lo < ranges[j].hi && ranges[j].lo < ranges[i].hi)
                throw ConfigError(std::string("address ranges overlap: ") +
                                  ranges[i].name + " and " + ranges[j].name);
        }
    }
}

}  // namespace

AddressSpace build_kpti_space(const SimConfig& config, const KernelLayout& layout) {
    if (config.kernel_ranges.size() != 3)
        throw ConfigError("expected 3 kernel range page counts");
    const std::uint64_t entry_pages = config.kernel_ranges[0];
    const std::uint64_t desc_pages = config.kernel_ranges[1];
    const std::uint64_t direct_pages = config.kernel_ranges[2];
    if (entry_pages == 0 || desc_pages == 0)
        throw ConfigError("kernel entry/descriptor ranges must be non-empty");

    const std::uint64_t desc_base = config.idt_base.value;
    std::vector<VirtRange> ranges{
        {layout.entry_base.value, layout.entry_base.value + entry_pages * kPageBytes,
         "kernel_entry"},
        {desc_base, desc_base + desc_pages * kPageBytes, "descriptor_tables"},
        {layout.direct_map_base.value,
         layout.direct_map_base.value + direct_pages * kPageBytes, "direct_map"},
        {layout.secret_base.value,
         layout.secret_base.value + config.secret_pages * kPageBytes, "secret"},
        {layout.user_heap_base.value,
         layout.user_heap_base.value + config.user_heap_pages * kPageBytes,
         "user_heap"},
    };
    check_disjoint(ranges);

    const std::uint64_t kernel_pages =
        entry_pages + desc_pages + direct_pages + config.secret_pages;
    const std::uint64_t kernel_window =
        config.phys_mem_bytes - kernel_pages * kPageBytes;
    if (kernel_window >= config.phys_mem_bytes ||
        config.user_heap_pages * kPageBytes + (1ULL << 20) > kernel_window)
        throw ConfigError("phys_mem_bytes too small for configured ranges");

    AddressSpace space;
    std::uint64_t next_kphys = kernel_window;
    auto map_kernel = [&](std::uint64_t vbase, std::uint64_t pages, ContentTag tag,
                          bool user_visible) {
        for (std::uint64_t i = 0; i < pages; ++i) {
            PageMapping m;
            m.virt_page = VirtAddr{vbase + i * kPageBytes};
            m.phys_page = PhysAddr{next_kphys};
            next_kphys += kPageBytes;
            m.user_accessible = false;
            m.cacheable = true;
            m.tag = tag;
            space.add(m, user_visible);
        }
    };

    map_kernel(layout.entry_base.value, entry_pages, ContentTag::KernelEntry, true);
    // IDT page leads the descriptor range; remaining pages hold GDT/TSS-style
    // tables.
    map_kernel(desc_base, 1, ContentTag::IdtPage, true);
    if (desc_pages > 1)
        map_kernel(desc_base + kPageBytes, desc_pages - 1, ContentTag::DescriptorTable,
                   true);
    map_kernel(layout.direct_map_base.value, direct_pages, ContentTag::DirectMap, true);
    map_kernel(layout.secret_base.value, config.secret_pages, ContentTag::DirectMap,
               false);

    std::uint64_t next_uphys = 1ULL << 20;
    for (std::uint64_t i = 0; i < config.user_heap_pages; ++i) {
        PageMapping m;
        m.virt_page = VirtAddr{layout.user_heap_base.value + i * kPageBytes};
        m.phys_page = PhysAddr{next_uphys};
        next_uphys += kPageBytes;
        m.user_accessible = true;
        m.cacheable = true;
        m.tag = ContentTag::UserData;
        space.add(m, true);
    }
    return space;
}

}  // namespace idtsim
