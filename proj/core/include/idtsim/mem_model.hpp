#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "idtsim/config.hpp"
#include "idtsim/types.hpp"

namespace idtsim {

enum class ContentTag { IdtPage, KernelEntry, DescriptorTable, DirectMap, UserData };

struct PageMapping {
    VirtAddr virt_page;
    PhysAddr phys_page;
    bool user_accessible = false;
    bool cacheable = true;
    ContentTag tag = ContentTag::UserData;
};

/// Two page-table views: the user view active while unprivileged code runs
/// and the full kernel view. The user view is always a subset of the kernel
/// view; the IDT page stays mapped in both.
class AddressSpace {
public:
    void add(const PageMapping& m, bool user_visible);

    const PageMapping* find_user(VirtAddr a) const;
    const PageMapping* find_kernel(VirtAddr a) const;

    bool user_mapped(VirtAddr a) const { return find_user(a) != nullptr; }
    bool user_accessible(VirtAddr a) const;
    std::optional<PhysAddr> translate_user(VirtAddr a) const;
    std::optional<PhysAddr> translate_kernel(VirtAddr a) const;

    const std::map<std::uint64_t, PageMapping>& user_view() const { return user_; }
    const std::map<std::uint64_t, PageMapping>& kernel_view() const { return kernel_; }

private:
    std::map<std::uint64_t, PageMapping> user_;
    std::map<std::uint64_t, PageMapping> kernel_;
};

/// One interrupt descriptor: service-routine pointer plus type/priv bits.
struct IdtEntry {
    std::uint64_t isr_pointer = 0;
    std::uint64_t meta = 0;
};

inline constexpr unsigned kIdtVectors = 256;
inline constexpr std::uint64_t kIdtEntryBytes = 16;

/// 256 x 16-byte descriptor table occupying one 4 KiB page.
class IdtLayout {
public:
    IdtLayout(VirtAddr base, std::array<IdtEntry, kIdtVectors> entries);

    /// Table with generated handler pointers; every ISR pointer's low byte
    /// is nonzero so a zero-vs-nonzero read is meaningful on any entry.
    static IdtLayout with_default_handlers(VirtAddr base);

    VirtAddr base() const { return base_; }
    const IdtEntry& entry(unsigned vector) const { return entries_[vector]; }

    /// Byte at `offset` into the table, little-endian field serialization.
    std::uint8_t byte_at(std::uint64_t offset) const;
    bool covers(VirtAddr a) const {
        return a.value >= base_.value && a.value < base_.value + kPageBytes;
    }

private:
    VirtAddr base_;
    std::array<IdtEntry, kIdtVectors> entries_;
};

/// Virtual address of IDT entry `vector` (base + 16 * vector).
VirtAddr idt_entry_addr(const IdtLayout& idt, unsigned vector);

struct LineInfo {
    VirtAddr line_addr;
    std::uint32_t set_index;  // bits 6..11
};

/// 64-byte line base and L1D set index (virtual bits 6..11) of an address.
LineInfo cache_line_of(VirtAddr a);

struct UncachableRegion {
    PhysAddr start;
    std::uint64_t len = 0;
};

struct MachineConfigDelta {
    std::vector<UncachableRegion> added;
};

/// Range-register file marking physical ranges uncachable. Regions are
/// immutable once installed and may not overlap.
class MtrrSet {
public:
    explicit MtrrSet(std::uint64_t budget = 8) : budget_(budget) {}

    MachineConfigDelta install(const UncachableRegion& region);
    bool suppressed(PhysAddr line) const;
    const std::vector<UncachableRegion>& regions() const { return regions_; }
    std::uint64_t budget() const { return budget_; }

private:
    std::uint64_t budget_;
    std::vector<UncachableRegion> regions_;
};

struct KernelLayout {
    VirtAddr entry_base{0xffffffff82000000ULL};
    VirtAddr direct_map_base{0xffff888000000000ULL};
    VirtAddr secret_base{0xffffffff84000000ULL};
    VirtAddr user_heap_base{0x0000700000000000ULL};
};

/// Builds the KPTI-split space: user pages plus the kernel-entry range, the
/// descriptor-table range (IDT page first) and the direct-map residue stay
/// in the user view; secret pages exist only in the kernel view.
AddressSpace build_kpti_space(const SimConfig& config,
                              const KernelLayout& layout = {});

}  // namespace idtsim
