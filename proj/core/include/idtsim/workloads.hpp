#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "idtsim/config.hpp"
#include "idtsim/core_sim.hpp"
#include "idtsim/types.hpp"

namespace idtsim {

struct PeriodicSchedule {
    Cycle period = 0;
    Cycle phase = 0;
};

struct PoissonSchedule {
    double events_per_s = 0.0;
};

struct TraceSchedule {
    std::vector<Cycle> times;  // sorted
};

/// One interrupt-generating device: a vector plus a firing schedule.
struct InterruptSource {
    unsigned vector = 0;
    std::variant<PeriodicSchedule, PoissonSchedule, TraceSchedule> schedule;
};

/// Concrete firing times in [0, until). Poisson schedules draw from `rng`;
/// periodic and trace schedules ignore it.
std::vector<Cycle> expand_schedule(const InterruptSource& src, Cycle until,
                                   const SimConfig& cfg, std::mt19937_64& rng);

/// Queues every firing of `sources` within [0, until) as Interrupt events.
void push_sources(EventQueue& queue, const std::vector<InterruptSource>& sources,
                  Cycle until, const SimConfig& cfg, std::uint64_t seed);

/// Expected network-interrupt counts for one site: 400 bins of 5 ms.
struct WebsiteProfile {
    std::string label;
    std::vector<double> bins;  // length 400
    double dispersion = 1.0;   // 0 = deterministic counts, 1 = full Poisson
};

inline constexpr unsigned kProfileBins = 400;
inline constexpr std::uint64_t kBinUs = 5000;

/// Interrupt times for one page load, deterministic per seed. Per bin the
/// count interpolates between the profile mean (dispersion 0) and a Poisson
/// draw (dispersion 1); events fall uniformly inside their bin.
std::vector<Cycle> gen_website_trace(const WebsiteProfile& profile,
                                     const SimConfig& cfg, std::uint64_t seed);

/// Library of synthetic site profiles. `separability` in (0, 1] scales how
/// much of each profile is its own random walk versus a shared base shape.
std::vector<WebsiteProfile> make_profile_library(unsigned n_profiles,
                                                 double separability,
                                                 double dispersion,
                                                 std::uint64_t seed);

void write_profile_file(const WebsiteProfile& profile, const std::string& path);
WebsiteProfile read_profile_file(const std::string& path);

struct KeystrokeScript {
    std::vector<Cycle> key_times;  // ground truth, strictly increasing
    Cycle hold_min = 0;
    Cycle hold_max = 0;
};

struct KeystrokeTimingModel {
    double gap_median_ms = 170.0;
    double gap_sigma = 0.35;       // log-normal shape
    double gap_min_ms = 80.0;
    double gap_max_ms = 300.0;
    double hold_min_ms = 15.0;
    double hold_max_ms = 30.0;
};

struct KeystrokeWorkload {
    KeystrokeScript script;
    std::vector<Cycle> interrupts;  // 2 per key: down at t, up at t + hold
};

KeystrokeWorkload gen_keystrokes(unsigned n_keys, const KeystrokeTimingModel& model,
                                 const SimConfig& cfg, std::uint64_t seed);

void write_keystroke_truth_csv(const KeystrokeScript& script, const std::string& path);

enum class BackgroundLevel { Quiet, Realistic, Stress };

struct BackgroundConfig {
    BackgroundLevel level = BackgroundLevel::Quiet;
    unsigned timer_vector = 236;
    double timer_hz = 250.0;
    unsigned nic_vector = 178;
    double nic_period_s = 2.0;
    std::vector<unsigned> stress_vectors{100, 110};
    double stress_hz = 50.0;
};

/// System interrupt load: the timer tick always, the peripheral NIC from
/// Realistic up, plus Poisson stress sources at Stress level.
std::vector<InterruptSource> gen_background(const BackgroundConfig& config,
                                            const SimConfig& cfg);

}  // namespace idtsim
