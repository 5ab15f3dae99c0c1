#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "idtsim/attacks.hpp"
#include "idtsim/forest.hpp"
#include "idtsim/workloads.hpp"

namespace idtsim {

/// Interrupt counts per 5 ms bin over a 2 s observation, 400 bins.
using FeatureVector = std::vector<std::uint32_t>;

/// Counts detections per bin; events at or past the window end are dropped.
FeatureVector bin_trace(const DetectionTrace& trace, const SimConfig& cfg,
                        std::uint64_t bin_us = 5000, unsigned n_bins = 400);

struct ConfusionReport {
    std::vector<std::vector<std::uint64_t>> matrix;  // [true][predicted]
    std::vector<double> precision_per_class;
    std::vector<double> recall_per_class;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double micro_accuracy = 0.0;
};

ConfusionReport confusion_and_pr(std::span<const int> labels_true,
                                 std::span<const int> labels_pred, int n_classes);

struct MatchReport {
    double recall = 0.0;
    double precision = 0.0;
    double f_score = 0.0;
    double delay_median_us = 0.0;
    double delay_std_us = 0.0;
    std::uint64_t matched = 0;
    std::uint64_t false_positives = 0;
    std::uint64_t false_negatives = 0;
    bool empty_detections = false;
};

enum class MatchMode {
    Nearest,  // detection goes to its closest truth time
    Causal,   // detection goes to the latest truth time at or before it
};

/// Truth/detection matching. Ambiguous (equidistant between two truths,
/// Nearest mode only) or out-of-window detections count as false positives,
/// as do detections beyond `expected_per_truth` for one truth. Shortfalls
/// count as false negatives. Delay statistics run over matched pairs,
/// signed microseconds (detection minus truth).
MatchReport match_events(std::span<const Cycle> truth_times,
                         std::span<const Cycle> detections, Cycle window_cycles,
                         unsigned expected_per_truth, const SimConfig& cfg,
                         MatchMode mode = MatchMode::Nearest);

/// Keystroke scoring: two interrupts expected per key (down and up).
MatchReport match_keystrokes(const DetectionTrace& detected,
                             const KeystrokeScript& truth, double window_us,
                             const SimConfig& cfg);

struct CurvePoint {
    Cycle spacing = 0;
    std::int64_t missed_leakidt = 0;
    std::int64_t missed_pp = 0;
};

/// Per spacing, fires `n_interrupts` on `vector` with that busy-wait gap and
/// counts how many each monitor fails to report. Fresh cores per run come
/// from `factory`; spacings must be sorted ascending.
std::vector<CurvePoint> detection_curve(const CoreFactory& factory,
                                        const SimConfig& cfg,
                                        std::span<const Cycle> spacings,
                                        std::uint64_t n_interrupts = 10000,
                                        unsigned vector = 33,
                                        std::uint64_t seed = 0);

}  // namespace idtsim
