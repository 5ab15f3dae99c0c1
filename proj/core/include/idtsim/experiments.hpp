#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "idtsim/analysis.hpp"

namespace idtsim {

using Json = nlohmann::ordered_json;

/// A named, seeded experiment run. Every run writes `manifest.txt` and
/// `metrics.json` under `out_dir`; some add plot CSVs.
struct ExperimentSpec {
    std::string name;
    std::string config_path;  // empty = built-in defaults
    std::uint64_t seed = 0;
    std::string out_dir;
    unsigned profiles = 15;
    std::optional<double> noise_p;  // overrides [core] noise_p
    bool mitigate = false;
    bool full = false;  // fingerprint: 100-profile mode
};

Json run_distinguish(const ExperimentSpec& spec);
Json run_curve(const ExperimentSpec& spec);
Json run_compare(const ExperimentSpec& spec);
Json run_template(const ExperimentSpec& spec);
Json run_fingerprint(const ExperimentSpec& spec);
Json run_keystrokes(const ExperimentSpec& spec);
Json run_mitigate(const ExperimentSpec& spec);

/// Dispatch on spec.name; throws UsageError for unknown names.
Json run_experiment(const ExperimentSpec& spec);

SimConfig load_config(const ExperimentSpec& spec);

}  // namespace idtsim
