#include "idtsim/experiments.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "idtsim/version.hpp"

namespace idtsim {

namespace {

namespace fs = std::filesystem;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t x = seed ^ (salt * 0x9e3779b97f4a7c15ULL);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw SimError("cannot write " + path);
    f << content;
}

void write_manifest(const ExperimentSpec& spec, const SimConfig& cfg) {
    std::ostringstream out;
    out << "tool = " << kToolName << ' ' << kToolVersion << '\n';
    out << "experiment = " << spec.name << '\n';
    out << "seed = " << spec.seed << '\n';
    out << "profiles = " << spec.profiles << '\n';
    out << "noise_p_override = ";
    if (spec.noise_p)
        out << *spec.noise_p;
    else
        out << "none";
    out << '\n';
    out << "mitigate = " << (spec.mitigate ? "true" : "false") << '\n';
    out << "full = " << (spec.full ? "true" : "false") << '\n';
    const std::string resolved = cfg.canonical_text();
    out << "config_hash = 0x" << std::hex << fnv1a64(resolved) << std::dec << '\n';
    out << "--- resolved config ---\n" << resolved;
    write_file((fs::path(spec.out_dir) / "manifest.txt").string(), out.str());
}

void write_metrics(const ExperimentSpec& spec, const Json& metrics) {
    write_file((fs::path(spec.out_dir) / "metrics.json").string(),
               metrics.dump(2) + "\n");
}

void prepare_out_dir(const std::string& dir) {
    if (dir.empty()) throw UsageError("output directory is required");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw UsageError("cannot create output directory: " + dir);
}

UncachableRegion idt_region(const Core& core) {
    const PhysAddr page = page_base(core.phys_of(core.idt().base()));
    return UncachableRegion{page, kPageBytes};
}

Core make_core(const SimConfig& cfg, std::uint64_t seed, bool mitigate,
               std::optional<double> noise_override) {
    Core core(cfg, seed);
    if (noise_override) core.set_noise_p(*noise_override);
    if (mitigate) core.install_uncachable(idt_region(core));
    return core;
}

Json report_json(const MatchReport& r) {
    Json j;
    j["recall"] = r.recall;
    j["precision"] = r.precision;
    j["f_score"] = r.f_score;
    j["delay_median_us"] = r.delay_median_us;
    j["delay_std_us"] = r.delay_std_us;
    j["matched"] = r.matched;
    j["false_positives"] = r.false_positives;
    j["false_negatives"] = r.false_negatives;
    return j;
}

}  // namespace

SimConfig load_config(const ExperimentSpec& spec) {
    SimConfig cfg = spec.config_path.empty() ? SimConfig::defaults()
                                             : SimConfig::from_file(spec.config_path);
    return cfg;
}

Json run_distinguish(const ExperimentSpec& spec) {
    prepare_out_dir(spec.out_dir);
    SimConfig cfg = load_config(spec);
    const std::uint64_t trials = cfg.raw.get_u64("distinguish", "trials", 100000);
    const unsigned vector =
        static_cast<unsigned>(cfg.raw.get_u64("distinguish", "vector", 33));
    if (trials == 0) throw UsageError("distinguish needs a positive trial count");
    write_manifest(spec, cfg);

    Core core = make_core(cfg, spec.seed, spec.mitigate, spec.noise_p);
    const VirtAddr target = idt_entry_addr(core.idt(), vector);
    const VirtAddr target_line = cache_line_of(target).line_addr;
    const ProbePages probes = make_probe_pages(core, cache_line_of(target).set_index);

    core.touch_line(target_line);
    std::uint64_t cached_hits = 0;
    for (std::uint64_t i = 0; i < trials; ++i) {
        if (leakidt_probe(core, target, probes)) ++cached_hits;
    }

    core.cache().flush(target_line);
    std::uint64_t uncached_hits = 0;
    for (std::uint64_t i = 0; i < trials; ++i) {
        if (leakidt_probe(core, target, probes)) ++uncached_hits;
    }

    Json m;
    m["experiment"] = "distinguish";
    m["trials"] = trials;
    m["noise_p"] = core.noise_p();
    m["cached_detect_rate"] = static_cast<double>(cached_hits) / trials;
    m["uncached_false_positive_rate"] = static_cast<double>(uncached_hits) / trials;
    write_metrics(spec, m);
    return m;
}

Json run_curve(const ExperimentSpec& spec) {
    prepare_out_dir(spec.out_dir);
    SimConfig cfg = load_config(spec);
    std::vector<Cycle> spacings = cfg.raw.get_u64_list("curve", "spacings");
    if (spacings.empty())
        spacings = {2000,  3000,  4000,  5000,  6000,  8000,   10000,
                    15000, 20000, 25000, 30000, 40000, 50000, 75000, 100000};
    if (!std::is_sorted(spacings.begin(), spacings.end()))
        throw UsageError("curve spacings must be sorted ascending");
    const std::uint64_t n = cfg.raw.get_u64("curve", "n_interrupts", 10000);
    const unsigned vector = static_cast<unsigned>(cfg.raw.get_u64("curve", "vector", 33));
    // The curve isolates the loop mechanics, so the oracle runs noiseless
    // unless overridden.
    const double noise = spec.noise_p.value_or(cfg.raw.get_f64("curve", "noise_p", 0.0));
    write_manifest(spec, cfg);

    std::uint64_t run_idx = 0;
    CoreFactory factory = [&]() {
        return make_core(cfg, mix_seed(spec.seed, run_idx++), spec.mitigate, noise);
    };
    const auto points = detection_curve(factory, cfg, spacings, n, vector, spec.seed);

    std::ostringstream csv;
    csv << "spacing_cycles,missed_leakidt,missed_pp\n";
    Json rows = Json::array();
    for (const auto& p : points) {
        csv << p.spacing << ',' << p.missed_leakidt << ',' << p.missed_pp << '\n';
        Json row;
        row["spacing_cycles"] = p.spacing;
        row["missed_leakidt"] = p.missed_leakidt;
        row["missed_pp"] = p.missed_pp;
        rows.push_back(row);
    }
    write_file((fs::path(spec.out_dir) / "curve.csv").string(), csv.str());

    Json m;
    m["experiment"] = "curve";
    m["n_interrupts"] = n;
    m["points"] = rows;
    write_metrics(spec, m);
    return m;
}

Json run_compare(const ExperimentSpec& spec) {
    prepare_out_dir(spec.out_dir);
    SimConfig cfg = load_config(spec);
    const std::uint64_t measurements =
        cfg.raw.get_u64("compare", "measurements", 100000);
    const std::uint64_t victim_accesses =
        cfg.raw.get_u64("compare", "victim_accesses", 50000);
    const unsigned vector = static_cast<unsigned>(cfg.raw.get_u64("compare", "vector", 33));
    const double stress_share = cfg.raw.get_f64("compare", "stress_share", 0.1);
    const unsigned stress_slices =
        static_cast<unsigned>(cfg.raw.get_u64("compare", "stress_slices", 8));
    write_manifest(spec, cfg);

    const Cycle duration = measurements * cfg.costs.probe_cost;
    Core probe_geom(cfg, 0);
    const VirtAddr victim_line =
        cache_line_of(idt_entry_addr(probe_geom.idt(), vector)).line_addr;
    const std::uint32_t set = cache_line_of(victim_line).set_index;
    const std::uint64_t off = static_cast<std::uint64_t>(set) * kLineBytes;
    // Each victim access touches the target line plus one line of its own
    // working data that happens to alias the set. The stress load streams
    // through several other aliasing lines. Only the target line itself is
    // visible to the line-granular oracle; Prime+Probe sees all of them.
    const VirtAddr victim_buf{probe_geom.layout().direct_map_base.value + off};
    const VirtAddr stress_lines[3] = {
        VirtAddr{cfg.idt_base.value + kPageBytes + off},
        VirtAddr{probe_geom.layout().direct_map_base.value + kPageBytes + off},
        VirtAddr{probe_geom.layout().direct_map_base.value + 2 * kPageBytes + off},
    };

    // Single core: the victim and the stress hog time-slice. Victim accesses
    // spread over the victim quanta; the stress quanta stream over the set
    // every probe round.
    const Cycle slice_period = stress_slices ? duration / stress_slices : duration;
    const Cycle stress_len =
        static_cast<Cycle>(stress_share * static_cast<double>(slice_period));
    auto in_stress = [&](Cycle t) {
        return stress_len > 0 && (t % slice_period) >= slice_period - stress_len;
    };

    std::vector<Cycle> victim_times;
    if (victim_accesses > 0) {
        const Cycle spacing =
            static_cast<Cycle>((1.0 - stress_share) * static_cast<double>(duration)) /
            victim_accesses;
        std::mt19937_64 jitter_rng(mix_seed(spec.seed, 0x71));
        std::uniform_int_distribution<Cycle> jitter(0, spacing / 4);
        Cycle t = spacing / 4;
        while (victim_times.size() < victim_accesses) {
            while (in_stress(t)) t += cfg.costs.probe_cost;
            victim_times.push_back(t + jitter(jitter_rng));
            t += spacing;
        }
    }

    auto build_queue = [&](EventQueue& q) {
        for (const Cycle t : victim_times) {
            q.push(Event{t, EventKind::WorkloadTick, 0, victim_line, 0});
            q.push(Event{t + 200, EventKind::WorkloadTick, 0, victim_buf, 0});
        }
        unsigned k = 0;
        for (Cycle t = 0; t < duration; t += cfg.costs.probe_cost) {
            if (in_stress(t)) {
                q.push(Event{t, EventKind::WorkloadTick, 0, stress_lines[k % 3], 0});
                ++k;
            }
        }
    };

    DetectionTrace leak_trace;
    {
        Core core = make_core(cfg, mix_seed(spec.seed, 1), spec.mitigate, spec.noise_p);
        EventQueue q;
        build_queue(q);
        leak_trace = monitor(core, q, vector, duration);
    }
    DetectionTrace pp_trace;
    {
        Core core = make_core(cfg, mix_seed(spec.seed, 2), spec.mitigate, spec.noise_p);
        EventQueue q;
        build_queue(q);
        pp_trace = prime_probe_monitor(core, q, set, duration);
    }

    Json m;
    m["experiment"] = "compare";
    m["measurements"] = measurements;
    m["victim_accesses"] = victim_accesses;
    if (victim_times.empty()) {
        Json empty;
        empty["recall"] = 0.0;
        empty["precision"] = 0.0;
        empty["f_score"] = 0.0;
        empty["undefined_recall"] = true;
        m["leakidt"] = empty;
        m["prime_probe"] = empty;
        m["empty_victim"] = true;
    } else {
        // A detection can only stem from a preceding access, so attribution
        // is causal with one victim gap as the window.
        const Cycle window = duration / victim_accesses;
        m["leakidt"] = report_json(match_events(victim_times, leak_trace.times, window,
                                                1, cfg, MatchMode::Causal));
        m["prime_probe"] = report_json(match_events(victim_times, pp_trace.times, window,
                                                    1, cfg, MatchMode::Causal));
        m["leakidt"]["detections"] = leak_trace.times.size();
        m["prime_probe"]["detections"] = pp_trace.times.size();
    }
    write_metrics(spec, m);
    return m;
}

Json run_template(const ExperimentSpec& spec) {
    prepare_out_dir(spec.out_dir);
    SimConfig cfg = load_config(spec);
    const unsigned induce_vector =
        static_cast<unsigned>(cfg.raw.get_u64("template", "induce_vector", 35));
    const double induce_hz = cfg.raw.get_f64("template", "induce_rate_hz", 2000.0);
    const double window_ms = cfg.raw.get_f64("template", "window_ms", 50.0);
    const double noise = spec.noise_p.value_or(cfg.raw.get_f64("template", "noise_p", 0.0));
    write_manifest(spec, cfg);

    InterruptSource induce;
    induce.vector = induce_vector;
    induce.schedule = PoissonSchedule{induce_hz};

    std::uint64_t n_cores = 0;
    CoreFactory factory = [&]() {
        return make_core(cfg, mix_seed(spec.seed, 0x7e0 + n_cores++), spec.mitigate,
                         noise);
    };

    Json m;
    m["experiment"] = "template";
    m["induce_vector"] = induce_vector;
    try {
        const TemplateResult r = template_idt(
            factory, cfg, spec.seed, induce, cfg.us_to_cycles(window_ms * 1000.0));
        m["found_vector"] = r.vector;
        m["block_first"] = r.block_first;
        m["block_last"] = r.block_last;
        m["ambiguous"] = r.ambiguous;
        m["differential"] = r.differential;
        m["distinct_entry"] = true;
    } catch (const NoDistinctEntry&) {
        m["distinct_entry"] = false;
    }
    write_metrics(spec, m);
    return m;
}

Json run_fingerprint(const ExperimentSpec& spec) {
    prepare_out_dir(spec.out_dir);
    SimConfig cfg = load_config(spec);
    const unsigned n_profiles = spec.full ? 100 : spec.profiles;
    const unsigned traces_per_profile =
        static_cast<unsigned>(cfg.raw.get_u64("fingerprint", "traces_per_profile", 100));
    const double separability = cfg.raw.get_f64("fingerprint", "separability", 0.16);
    const double dispersion = cfg.raw.get_f64("fingerprint", "dispersion", 1.0);
    const unsigned nic_vector =
        static_cast<unsigned>(cfg.raw.get_u64("fingerprint", "nic_vector", 160));
    const double noise =
        spec.noise_p.value_or(cfg.raw.get_f64("fingerprint", "noise_p", 0.0));
    if (n_profiles == 0) throw UsageError("fingerprint needs at least one profile");
    write_manifest(spec, cfg);

    const auto library =
        make_profile_library(n_profiles, separability, dispersion, mix_seed(spec.seed, 1));
    const Cycle window = cfg.us_to_cycles(2'000'000.0) + cfg.costs.probe_cost * 8;

    Dataset all;
    all.n_classes = static_cast<int>(n_profiles);
    for (unsigned p = 0; p < n_profiles; ++p) {
        for (unsigned i = 0; i < traces_per_profile; ++i) {
            const std::uint64_t s = mix_seed(spec.seed, 0x10000 + p * 1000 + i);
            const auto events = gen_website_trace(library[p], cfg, s);
            Core core = make_core(cfg, s, spec.mitigate, noise);
            EventQueue q;
            for (const Cycle t : events) {
                q.push(Event{t, EventKind::Interrupt, nic_vector, VirtAddr{0}, 0});
            }
            const DetectionTrace trace = monitor(core, q, nic_vector, window);
            const FeatureVector fv = bin_trace(trace, cfg);
            std::vector<double> row(fv.begin(), fv.end());
            all.features.push_back(std::move(row));
            all.labels.push_back(static_cast<int>(p));
        }
    }

    // Per-profile 70/30 split, seeded shuffle.
    Dataset train, test;
    train.n_classes = test.n_classes = all.n_classes;
    std::mt19937_64 split_rng(mix_seed(spec.seed, 0x5b11));
    for (unsigned p = 0; p < n_profiles; ++p) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < all.labels.size(); ++i) {
            if (all.labels[i] == static_cast<int>(p)) idx.push_back(i);
        }
        std::shuffle(idx.begin(), idx.end(), split_rng);
        const std::size_t n_train = (idx.size() * 7) / 10;
        for (std::size_t k = 0; k < idx.size(); ++k) {
            Dataset& dst = k < n_train ? train : test;
            dst.features.push_back(all.features[idx[k]]);
            dst.labels.push_back(all.labels[idx[k]]);
        }
    }

    ForestParams params;
    params.n_trees =
        static_cast<unsigned>(cfg.raw.get_u64("fingerprint", "n_trees", 100));
    const RandomForestModel model = train_forest(train, params, mix_seed(spec.seed, 0xf0));

    std::vector<int> pred;
    pred.reserve(test.labels.size());
    for (const auto& x : test.features) pred.push_back(model.predict(x).first);
    const ConfusionReport rep = confusion_and_pr(test.labels, pred, all.n_classes);

    std::ostringstream csv;
    for (unsigned p = 0; p < n_profiles; ++p) {
        csv << (p ? "," : "") << library[p].label;
    }
    csv << '\n';
    for (int t = 0; t < all.n_classes; ++t) {
        for (int q = 0; q < all.n_classes; ++q) {
            csv << (q ? "," : "") << rep.matrix[t][q];
        }
        csv << '\n';
    }
    write_file((fs::path(spec.out_dir) / "confusion.csv").string(), csv.str());

    std::ostringstream ds;
    ds << "label";
    for (unsigned b = 0; b < kProfileBins; ++b) ds << ",bin" << b;
    ds << '\n';
    for (std::size_t i = 0; i < all.features.size(); ++i) {
        ds << library[all.labels[i]].label;
        for (double v : all.features[i]) ds << ',' << static_cast<std::uint64_t>(v);
        ds << '\n';
    }
    write_file((fs::path(spec.out_dir) / "dataset.csv").string(), ds.str());
    model.save((fs::path(spec.out_dir) / "model.rf").string());

    Json m;
    m["experiment"] = "fingerprint";
    m["profiles"] = n_profiles;
    m["traces_per_profile"] = traces_per_profile;
    m["train_size"] = train.labels.size();
    m["test_size"] = test.labels.size();
    m["n_trees"] = params.n_trees;
    m["macro_precision"] = rep.macro_precision;
    m["macro_recall"] = rep.macro_recall;
    m["micro_accuracy"] = rep.micro_accuracy;
    write_metrics(spec, m);
    return m;
}

Json run_keystrokes(const ExperimentSpec& spec) {
    prepare_out_dir(spec.out_dir);
    SimConfig cfg = load_config(spec);
    const unsigned n_keys = static_cast<unsigned>(cfg.raw.get_u64("keystrokes", "keys", 200));
    const unsigned n_runs = static_cast<unsigned>(cfg.raw.get_u64("keystrokes", "runs", 3));
    const unsigned xhci_vector =
        static_cast<unsigned>(cfg.raw.get_u64("keystrokes", "xhci_vector", 176));
    const double window_ms = cfg.raw.get_f64("keystrokes", "window_ms", 35.0);
    const double lab_noise = cfg.raw.get_f64("keystrokes", "lab_noise_p", 6e-7);
    const double realistic_noise =
        cfg.raw.get_f64("keystrokes", "realistic_noise_p", 1.2e-6);
    write_manifest(spec, cfg);

    KeystrokeTimingModel model;
    model.gap_median_ms = cfg.raw.get_f64("keystrokes", "gap_median_ms", 170.0);
    model.hold_min_ms = cfg.raw.get_f64("keystrokes", "hold_min_ms", 15.0);
    model.hold_max_ms = cfg.raw.get_f64("keystrokes", "hold_max_ms", 30.0);

    auto run_scenario = [&](const std::string& label, BackgroundLevel level,
                            double noise) {
        Json runs = Json::array();
        double f_sum = 0.0;
        for (unsigned r = 0; r < n_runs; ++r) {
            const std::uint64_t s = mix_seed(spec.seed, fnv1a64(label) + r);
            const KeystrokeWorkload work = gen_keystrokes(n_keys, model, cfg, s);
            const Cycle duration =
                work.interrupts.back() + cfg.us_to_cycles(200000.0);

            BackgroundConfig bg;
            bg.level = level;
            EventQueue q;
            push_sources(q, gen_background(bg, cfg), duration, cfg, s);
            InterruptSource keys;
            keys.vector = xhci_vector;
            keys.schedule = TraceSchedule{work.interrupts};
            push_sources(q, {keys}, duration, cfg, s ^ 1);

            Core core = make_core(cfg, s, spec.mitigate,
                                  spec.noise_p ? spec.noise_p : std::optional<double>(noise));
            const DetectionTrace trace = monitor(core, q, xhci_vector, duration);
            const MatchReport rep =
                match_keystrokes(trace, work.script, window_ms * 1000.0, cfg);
            f_sum += rep.f_score;
            Json jr = report_json(rep);
            jr["run"] = r;
            jr["detections"] = trace.times.size();
            runs.push_back(jr);

            write_keystroke_truth_csv(
                work.script, (fs::path(spec.out_dir) /
                              (label + "_run" + std::to_string(r) + "_truth.csv"))
                                 .string());
        }
        Json out;
        out["runs"] = runs;
        out["mean_f_score"] = f_sum / n_runs;
        return out;
    };

    Json m;
    m["experiment"] = "keystrokes";
    m["keys"] = n_keys;
    m["lab"] = run_scenario("lab", BackgroundLevel::Quiet, lab_noise);
    m["realistic"] = run_scenario("realistic", BackgroundLevel::Stress, realistic_noise);
    write_metrics(spec, m);
    return m;
}

Json run_mitigate(const ExperimentSpec& spec) {
    prepare_out_dir(spec.out_dir);
    SimConfig cfg = load_config(spec);
    const std::uint64_t n = cfg.raw.get_u64("mitigate", "n_interrupts", 10000);
    const unsigned vector = static_cast<unsigned>(cfg.raw.get_u64("mitigate", "vector", 33));
    const Cycle spacing = cfg.raw.get_u64("mitigate", "spacing", 50000);
    const double noise = spec.noise_p.value_or(cfg.raw.get_f64("mitigate", "noise_p", 0.0));
    write_manifest(spec, cfg);

    auto run_arm = [&](bool mitigated) {
        Core core = make_core(cfg, mix_seed(spec.seed, mitigated ? 2 : 1), mitigated, noise);
        EventQueue q;
        for (std::uint64_t i = 0; i < n; ++i) {
            q.push(Event{(i + 1) * spacing, EventKind::Interrupt, vector, VirtAddr{0}, 0});
        }
        const Cycle duration = (n + 2) * spacing;
        const DetectionTrace t = monitor(core, q, vector, duration);
        return t.times.size();
    };

    const std::size_t with_mitigation = run_arm(true);
    const std::size_t without_mitigation = run_arm(false);

    Json m;
    m["experiment"] = "mitigate";
    m["n_interrupts"] = n;
    m["noise_p"] = noise;
    m["detections_mitigated"] = with_mitigation;
    m["detections_unmitigated"] = without_mitigation;
    m["detect_rate_unmitigated"] =
        static_cast<double>(without_mitigation) / static_cast<double>(n);
    m["expected_noise_floor"] =
        noise * static_cast<double>((n + 2) * spacing / cfg.costs.probe_cost);
    write_metrics(spec, m);
    return m;
}

Json run_experiment(const ExperimentSpec& spec) {
    if (spec.name == "distinguish") return run_distinguish(spec);
    if (spec.name == "curve") return run_curve(spec);
    if (spec.name == "compare") return run_compare(spec);
    if (spec.name == "template") return run_template(spec);
    if (spec.name == "fingerprint") return run_fingerprint(spec);
    if (spec.name == "keystrokes") return run_keystrokes(spec);
    if (spec.name == "mitigate") return run_mitigate(spec);
    throw UsageError("unknown experiment: " + spec.name);
}

}  // namespace idtsim
