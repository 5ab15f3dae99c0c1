#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "idtsim/experiments.hpp"
#include "idtsim/version.hpp"

int main(int argc, char** argv) {
    CLI::App app{"L1D interrupt side-channel simulator and experiment runner"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(idtsim::kToolVersion));

    idtsim::ExperimentSpec spec;
    double noise_p = -1.0;

    const char* names[] = {"distinguish", "curve",      "compare",  "template",
                           "fingerprint", "keystrokes", "mitigate"};
    const char* blurbs[] = {
        "cached vs uncached oracle rates",
        "missed interrupts vs interrupt spacing, both attacks",
        "LeakIDT vs Prime+Probe against one victim schedule",
        "locate the IDT block behind an induced interrupt",
        "website fingerprinting with a random forest",
        "keystroke timing recovery, lab and realistic scenarios",
        "uncachable-IDT mitigation on/off comparison",
    };
    for (unsigned i = 0; i < 7; ++i) {
        CLI::App* sub = app.add_subcommand(names[i], blurbs[i]);
        sub->add_option("--config", spec.config_path, "config file (key/value sections)");
        sub->add_option("--seed", spec.seed, "master seed, required")->required();
        sub->add_option("--out", spec.out_dir, "output directory")->required();
        sub->add_option("--profiles", spec.profiles, "fingerprint: profile count");
        sub->add_option("--noise-p", noise_p, "override oracle flip probability");
        sub->add_flag("--mitigate", spec.mitigate, "install the uncachable IDT region");
        sub->add_flag("--full", spec.full, "fingerprint: full 100-profile mode");
        sub->callback([&spec, i, names] { spec.name = names[i]; });
    }

    CLI11_PARSE(app, argc, argv);
    if (noise_p >= 0.0) spec.noise_p = noise_p;

    try {
        const idtsim::Json metrics = idtsim::run_experiment(spec);
        std::cout << metrics.dump(2) << '\n';
        std::cout << "wrote " << spec.out_dir << "/manifest.txt and metrics.json\n";
    } catch (const idtsim::UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
