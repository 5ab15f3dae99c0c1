#include "idtsim/analysis.hpp"

#include <algorithm>
#include <cmath>

namespace idtsim {

FeatureVector bin_trace(const DetectionTrace& trace, const SimConfig& cfg,
                        std::uint64_t bin_us, unsigned n_bins) {
    FeatureVector bins(n_bins, 0);
    const Cycle bin_cycles = cfg.us_to_cycles(static_cast<double>(bin_us));
    for (const Cycle t : trace.times) {
        const std::uint64_t b = t / bin_cycles;
        if (b < n_bins) ++bins[b];
    }
    return bins;
}

ConfusionReport confusion_and_pr(std::span<const int> labels_true,
                                 std::span<const int> labels_pred, int n_classes) {
    if (labels_true.size() != labels_pred.size())
        throw LengthMismatch("label vectors differ in length");
    ConfusionReport rep;
    rep.matrix.assign(n_classes, std::vector<std::uint64_t>(n_classes, 0));
    std::uint64_t correct = 0;
    for (std::size_t i = 0; i < labels_true.size(); ++i) {
        const int t = labels_true[i];
        const int p = labels_pred[i];
        if (t < 0 || t >= n_classes || p < 0 || p >= n_classes)
            throw LengthMismatch("label outside class range");
        ++rep.matrix[t][p];
        if (t == p) ++correct;
    }
    rep.precision_per_class.resize(n_classes, 0.0);
    rep.recall_per_class.resize(n_classes, 0.0);
    for (int c = 0; c < n_classes; ++c) {
        std::uint64_t col = 0;
        std::uint64_t row = 0;
        for (int k = 0; k < n_classes; ++k) {
            col += rep.matrix[k][c];
            row += rep.matrix[c][k];
        }
        rep.precision_per_class[c] =
            col ? static_cast<double>(rep.matrix[c][c]) / static_cast<double>(col) : 0.0;
        rep.recall_per_class[c] =
            row ? static_cast<double>(rep.matrix[c][c]) / static_cast<double>(row) : 0.0;
        rep.macro_precision += rep.precision_per_class[c];
        rep.macro_recall += rep.recall_per_class[c];
    }
    rep.macro_precision /= n_classes;
    rep.macro_recall /= n_classes;
    rep.micro_accuracy = labels_true.empty()
                             ? 0.0
                             : static_cast<double>(correct) /
                                   static_cast<double>(labels_true.size());
    return rep;
}

MatchReport match_events(std::span<const Cycle> truth_times,
                         std::span<const Cycle> detections, Cycle window_cycles,
                         unsigned expected_per_truth, const SimConfig& cfg,
                         MatchMode mode) {
    if (truth_times.empty()) throw EmptyTruth("ground truth is empty");

    struct Assignment {
        std::size_t truth;
        Cycle det;
        std::uint64_t dist;
    };
    std::vector<Assignment> assigned;
    std::uint64_t unassigned = 0;

    for (const Cycle d : detections) {
        auto it = std::lower_bound(truth_times.begin(), truth_times.end(), d);
        std::size_t best = truth_times.size();
        std::uint64_t best_dist = UINT64_MAX;
        bool tie = false;
        auto consider = [&](std::size_t i) {
            const std::uint64_t dist =
                d >= truth_times[i] ? d - truth_times[i] : truth_times[i] - d;
            if (dist < best_dist) {
                best_dist = dist;
                best = i;
                tie = false;
            } else if (dist == best_dist && best != i) {
                tie = true;
            }
        };
        if (mode == MatchMode::Nearest) {
            if (it != truth_times.end()) consider(it - truth_times.begin());
            if (it != truth_times.begin()) consider(it - truth_times.begin() - 1);
        } else {
            // Causal: only the latest truth at or before the detection.
            if (it != truth_times.begin() || (it != truth_times.end() && *it == d)) {
                if (it == truth_times.end() || *it != d) --it;
                consider(it - truth_times.begin());
            }
        }
        if (best == truth_times.size() || tie || best_dist > window_cycles) {
            ++unassigned;  // ambiguous or outside the window: false positive
            continue;
        }
        assigned.push_back({best, d, best_dist});
    }

    // Keep the `expected_per_truth` closest detections per truth event.
    std::sort(assigned.begin(), assigned.end(), [](const Assignment& a, const Assignment& b) {
        if (a.truth != b.truth) return a.truth < b.truth;
        if (a.dist != b.dist) return a.dist < b.dist;
        return a.det < b.det;
    });
    std::vector<double> delays_us;
    std::uint64_t matched = 0;
    std::uint64_t overflow = 0;
    std::size_t i = 0;
    while (i < assigned.size()) {
        std::size_t j = i;
        while (j < assigned.size() && assigned[j].truth == assigned[i].truth) ++j;
        const std::size_t keep = std::min<std::size_t>(expected_per_truth, j - i);
        for (std::size_t k = i; k < i + keep; ++k) {
            const double delta =
                static_cast<double>(static_cast<std::int64_t>(assigned[k].det) -
                                    static_cast<std::int64_t>(truth_times[assigned[k].truth]));
            delays_us.push_back(delta / static_cast<double>(cfg.costs.cycles_per_us));
        }
        matched += keep;
        overflow += (j - i) - keep;
        i = j;
    }

    MatchReport rep;
    rep.matched = matched;
    rep.false_positives = unassigned + overflow;
    const std::uint64_t expected_total =
        static_cast<std::uint64_t>(truth_times.size()) * expected_per_truth;
    rep.false_negatives = expected_total - matched;
    rep.recall = static_cast<double>(matched) / static_cast<double>(expected_total);
    if (detections.empty()) {
        rep.empty_detections = true;
        rep.precision = 0.0;
    } else {
        rep.precision =
            static_cast<double>(matched) / static_cast<double>(detections.size());
    }
    rep.f_score = (rep.precision + rep.recall) > 0.0
                      ? 2.0 * rep.precision * rep.recall / (rep.precision + rep.recall)
                      : 0.0;

    if (!delays_us.empty()) {
        std::sort(delays_us.begin(), delays_us.end());
        const std::size_t n = delays_us.size();
        rep.delay_median_us = n % 2 ? delays_us[n / 2]
                                    : 0.5 * (delays_us[n / 2 - 1] + delays_us[n / 2]);
        double mean = 0.0;
        for (double d : delays_us) mean += d;
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (double d : delays_us) var += (d - mean) * (d - mean);
        rep.delay_std_us = n > 1 ? std::sqrt(var / static_cast<double>(n - 1)) : 0.0;
    }
    return rep;
}

MatchReport match_keystrokes(const DetectionTrace& detected,
                             const KeystrokeScript& truth, double window_us,
                             const SimConfig& cfg) {
    if (truth.key_times.empty()) throw EmptyTruth("keystroke script has no keys");
    return match_events(truth.key_times, detected.times, cfg.us_to_cycles(window_us),
                        2, cfg);
}

std::vector<CurvePoint> detection_curve(const CoreFactory& factory,
                                        const SimConfig& cfg,
                                        std::span<const Cycle> spacings,
                                        std::uint64_t n_interrupts, unsigned vector,
                                        std::uint64_t seed) {
    if (!std::is_sorted(spacings.begin(), spacings.end()))
        throw UsageError("spacings must be sorted ascending");
    std::vector<CurvePoint> out;
    for (const Cycle spacing : spacings) {
        if (spacing == 0) throw UsageError("spacing must be positive");
        const Cycle start = 10 * spacing;  // settle before the burst
        const Cycle until = start + n_interrupts * spacing + cfg.costs.probe_cost * 4;

        // Delivery jitter of up to 10% of the busy wait keeps the stream
        // from phase-locking with the probe loop.
        auto schedule = [&](EventQueue& q) {
            std::mt19937_64 rng(seed ^ (spacing * 0x9e3779b97f4a7c15ULL));
            std::uniform_int_distribution<Cycle> jitter(0, spacing / 10);
            for (std::uint64_t i = 0; i < n_interrupts; ++i) {
                q.push(Event{start + i * spacing + jitter(rng), EventKind::Interrupt,
                             vector, VirtAddr{0}, 0});
            }
        };

        CurvePoint p;
        p.spacing = spacing;
        {
            Core core = factory();
            EventQueue q;
            schedule(q);
            const DetectionTrace t = monitor(core, q, vector, until);
            p.missed_leakidt = static_cast<std::int64_t>(n_interrupts) -
                               static_cast<std::int64_t>(t.times.size());
        }
        {
            Core core = factory();
            EventQueue q;
            schedule(q);
            const std::uint32_t set =
                cache_line_of(idt_entry_addr(core.idt(), vector)).set_index;
            const DetectionTrace t = prime_probe_monitor(core, q, set, until);
            p.missed_pp = static_cast<std::int64_t>(n_interrupts) -
                          static_cast<std::int64_t>(t.times.size());
        }
        out.push_back(p);
    }
    return out;
}

}  // namespace idtsim
