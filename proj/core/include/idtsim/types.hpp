#pragma once

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace idtsim {

/// Simulated CPU cycles. Monotonically non-decreasing within a run.
using Cycle = std::uint64_t;

/// 64-bit virtual byte address. Kernel/user split follows the canonical
/// x86-64 layout (bits 63..48 mirror bit 47).
struct VirtAddr {
    std::uint64_t value = 0;
    auto operator<=>(const VirtAddr&) const = default;
};

/// Physical byte address, bounded by the configured memory size.
struct PhysAddr {
    std::uint64_t value = 0;
    auto operator<=>(const PhysAddr&) const = default;
};

inline constexpr std::uint64_t kPageBytes = 4096;
inline constexpr std::uint64_t kLineBytes = 64;

constexpr bool is_canonical(VirtAddr a) {
    const std::uint64_t top = a.value >> 47;
    return top == 0 || top == 0x1ffff;
}

constexpr VirtAddr page_base(VirtAddr a) { return {a.value & ~(kPageBytes - 1)}; }
constexpr VirtAddr line_base(VirtAddr a) { return {a.value & ~(kLineBytes - 1)}; }
constexpr PhysAddr page_base(PhysAddr a) { return {a.value & ~(kPageBytes - 1)}; }
constexpr PhysAddr line_base(PhysAddr a) { return {a.value & ~(kLineBytes - 1)}; }

struct SimError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : SimError { using SimError::SimError; };
struct RegionOverlap : SimError { using SimError::SimError; };
struct BudgetExceeded : SimError { using SimError::SimError; };
struct ProtectionFault : SimError { using SimError::SimError; };
struct ZeroTargetByte : SimError { using SimError::SimError; };
struct InsufficientUserMemory : SimError { using SimError::SimError; };
struct NoDistinctEntry : SimError { using SimError::SimError; };
struct DegenerateDataset : SimError { using SimError::SimError; };
struct LengthMismatch : SimError { using SimError::SimError; };
struct EmptyTruth : SimError { using SimError::SimError; };
struct UsageError : SimError { using SimError::SimError; };
struct ProfileLibraryMissing : SimError { using SimError::SimError; };

}  // namespace idtsim
