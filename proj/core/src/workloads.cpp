#include "idtsim/workloads.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace idtsim {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t x = seed ^ (salt * 0x9e3779b97f4a7c15ULL);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

}  // namespace

std::vector<Cycle> expand_schedule(const InterruptSource& src, Cycle until,
                                   const SimConfig& cfg, std::mt19937_64& rng) {
    std::vector<Cycle> out;
    if (const auto* p = std::get_if<PeriodicSchedule>(&src.schedule)) {
        if (p->period == 0) throw ConfigError("periodic schedule needs a nonzero period");
        for (Cycle t = p->phase; t < until; t += p->period) out.push_back(t);
    } else if (const auto* po = std::get_if<PoissonSchedule>(&src.schedule)) {
        if (po->events_per_s <= 0.0)
            throw ConfigError("poisson schedule needs a positive rate");
        const double cycles_per_s = 1e6 * static_cast<double>(cfg.costs.cycles_per_us);
        std::exponential_distribution<double> gap(po->events_per_s / cycles_per_s);
        double t = gap(rng);
        while (t < static_cast<double>(until)) {
            out.push_back(static_cast<Cycle>(t));
            t += gap(rng);
        }
    } else {
        const auto& tr = std::get<TraceSchedule>(src.schedule);
        for (Cycle t : tr.times) {
            if (t < until) out.push_back(t);
        }
        if (!std::is_sorted(out.begin(), out.end()))
            throw ConfigError("trace schedule times must be sorted");
    }
    return out;
}

void push_sources(EventQueue& queue, const std::vector<InterruptSource>& sources,
                  Cycle until, const SimConfig& cfg, std::uint64_t seed) {
    for (std::size_t i = 0; i < sources.size(); ++i) {
        std::mt19937_64 rng(mix_seed(seed, 0x5ce1 + i));
        for (Cycle t : expand_schedule(sources[i], until, cfg, rng)) {
            queue.push(Event{t, EventKind::Interrupt, sources[i].vector, VirtAddr{0}, 0});
        }
    }
}

std::vector<Cycle> gen_website_trace(const WebsiteProfile& profile,
                                     const SimConfig& cfg, std::uint64_t seed) {
    if (profile.bins.size() != kProfileBins)
        throw ConfigError("website profile must have 400 bins");
    std::mt19937_64 rng(mix_seed(seed, fnv1a64(profile.label)));
    const Cycle bin_cycles = cfg.us_to_cycles(static_cast<double>(kBinUs));
    std::vector<Cycle> out;
    for (unsigned b = 0; b < kProfileBins; ++b) {
        const double mean = profile.bins[b];
        if (mean < 0.0) throw ConfigError("profile bin means must be non-negative");
        double blended = mean;
        if (profile.dispersion > 0.0 && mean > 0.0) {
            std::poisson_distribution<long> draw(mean);
            const double noisy = static_cast<double>(draw(rng));
            blended = (1.0 - profile.dispersion) * mean + profile.dispersion * noisy;
        }
        const long count = std::lround(std::max(0.0, blended));
        const Cycle bin_start = static_cast<Cycle>(b) * bin_cycles;
        std::uniform_int_distribution<Cycle> inside(0, bin_cycles - 1);
        std::vector<Cycle> times;
        times.reserve(count);
        for (long i = 0; i < count; ++i) times.push_back(bin_start + inside(rng));
        std::sort(times.begin(), times.end());
        out.insert(out.end(), times.begin(), times.end());
    }
    return out;
}

std::vector<WebsiteProfile> make_profile_library(unsigned n_profiles,
                                                 double separability,
                                                 double dispersion,
                                                 std::uint64_t seed) {
    if (n_profiles == 0) throw ConfigError("profile library needs at least one profile");
    std::vector<WebsiteProfile> lib;
    lib.reserve(n_profiles);

    auto walk = [](std::mt19937_64& rng) {
        std::vector<double> bins(kProfileBins);
        std::uniform_real_distribution<double> level(4.0, 16.0);
        std::normal_distribution<double> step(0.0, 1.2);
        double v = level(rng);
        for (unsigned b = 0; b < kProfileBins; ++b) {
            v = std::clamp(v + step(rng), 0.0, 40.0);
            bins[b] = v;
        }
        return bins;
    };

    std::mt19937_64 base_rng(mix_seed(seed, 0xba5e));
    const std::vector<double> base = walk(base_rng);
    for (unsigned p = 0; p < n_profiles; ++p) {
        std::mt19937_64 rng(mix_seed(seed, 0x700f + p));
        std::vector<double> own = walk(rng);
        WebsiteProfile profile;
        profile.label = "site" + std::to_string(p);
        profile.dispersion = dispersion;
        profile.bins.resize(kProfileBins);
        for (unsigned b = 0; b < kProfileBins; ++b) {
            profile.bins[b] = (1.0 - separability) * base[b] + separability * own[b];
        }
        lib.push_back(std::move(profile));
    }
    return lib;
}

void write_profile_file(const WebsiteProfile& profile, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw SimError("cannot write profile file: " + path);
    f << profile.label << '\n';
    for (unsigned b = 0; b < kProfileBins; ++b) {
        if (b) f << ',';
        f << profile.bins[b];
    }
    f << '\n' << profile.dispersion << '\n';
}

WebsiteProfile read_profile_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ProfileLibraryMissing("cannot open profile file: " + path);
    WebsiteProfile profile;
    std::string line;
    if (!std::getline(f, line) || line.empty())
        throw ProfileLibraryMissing("profile file missing label: " + path);
    profile.label = line;
    if (!std::getline(f, line))
        throw ProfileLibraryMissing("profile file missing bins: " + path);
    std::istringstream bins(line);
    std::string item;
    while (std::getline(bins, item, ',')) profile.bins.push_back(std::stod(item));
    if (profile.bins.size() != kProfileBins)
        throw ProfileLibraryMissing("profile file needs 400 bin means: " + path);
    if (!std::getline(f, line))
        throw ProfileLibraryMissing("profile file missing dispersion: " + path);
    profile.dispersion = std::stod(line);
    return profile;
}

KeystrokeWorkload gen_keystrokes(unsigned n_keys, const KeystrokeTimingModel& model,
                                 const SimConfig& cfg, std::uint64_t seed) {
    if (n_keys == 0) throw ConfigError("keystroke workload needs at least one key");
    std::mt19937_64 rng(mix_seed(seed, 0x4b45));

    const double mu = std::log(model.gap_median_ms);
    std::lognormal_distribution<double> gap_ms(mu, model.gap_sigma);
    auto draw_gap = [&]() {
        for (int i = 0; i < 100; ++i) {
            const double g = gap_ms(rng);
            if (g >= model.gap_min_ms && g <= model.gap_max_ms) return g;
        }
        return std::clamp(gap_ms(rng), model.gap_min_ms, model.gap_max_ms);
    };
    std::uniform_real_distribution<double> hold_ms(model.hold_min_ms, model.hold_max_ms);

    KeystrokeWorkload out;
    out.script.hold_min = cfg.us_to_cycles(model.hold_min_ms * 1000.0);
    out.script.hold_max = cfg.us_to_cycles(model.hold_max_ms * 1000.0);
    double t_ms = model.gap_max_ms;  // settle time before the first key
    for (unsigned k = 0; k < n_keys; ++k) {
        const Cycle press = cfg.us_to_cycles(t_ms * 1000.0);
        const Cycle hold = cfg.us_to_cycles(hold_ms(rng) * 1000.0);
        out.script.key_times.push_back(press);
        out.interrupts.push_back(press);
        out.interrupts.push_back(press + hold);
        t_ms += draw_gap();
    }
    std::sort(out.interrupts.begin(), out.interrupts.end());
    return out;
}

void write_keystroke_truth_csv(const KeystrokeScript& script, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw SimError("cannot write keystroke truth: " + path);
    f << "key_index,time_cycles\n";
    for (std::size_t i = 0; i < script.key_times.size(); ++i) {
        f << i << ',' << script.key_times[i] << '\n';
    }
}

std::vector<InterruptSource> gen_background(const BackgroundConfig& config,
                                            const SimConfig& cfg) {
    std::vector<InterruptSource> out;
    const double cycles_per_s = 1e6 * static_cast<double>(cfg.costs.cycles_per_us);
    InterruptSource timer;
    timer.vector = config.timer_vector;
    timer.schedule =
        PeriodicSchedule{static_cast<Cycle>(cycles_per_s / config.timer_hz), 0};
    out.push_back(timer);
    if (config.level == BackgroundLevel::Quiet) return out;

    InterruptSource nic;
    nic.vector = config.nic_vector;
    nic.schedule = PeriodicSchedule{
        static_cast<Cycle>(cycles_per_s * config.nic_period_s),
        static_cast<Cycle>(cycles_per_s * 0.5)};
    out.push_back(nic);
    if (config.level == BackgroundLevel::Realistic) return out;

    for (unsigned v : config.stress_vectors) {
        InterruptSource s;
        s.vector = v;
        s.schedule = PoissonSchedule{config.stress_hz};
        out.push_back(s);
    }
    return out;
}

}  // namespace idtsim
