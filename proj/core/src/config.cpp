#include "idtsim/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace idtsim {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::uint64_t parse_u64(const std::string& text, const std::string& where) {
    std::string t = trim(text);
    int base = 10;
    std::size_t off = 0;
    if (t.size() > 2 && t[0] == '0' && (t[1] == 'x' || t[1] == 'X')) {
        base = 16;
        off = 2;
    }
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(t.data() + off, t.data() + t.size(), out, base);
    if (ec != std::errc{} || p != t.data() + t.size())
        throw ConfigError("bad integer for " + where + ": '" + text + "'");
    return out;
}

double parse_f64(const std::string& text, const std::string& where) {
    std::string t = trim(text);
    try {
        std::size_t pos = 0;
        double v = std::stod(t, &pos);
        if (pos != t.size()) throw std::invalid_argument(t);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("bad number for " + where + ": '" + text + "'");
    }
}

}  // namespace

Ini Ini::parse_text(const std::string& text) {
    Ini ini;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError("unterminated section header at line " + std::to_string(lineno));
            section = trim(t.substr(1, t.size() - 2));
            if (section.empty())
                throw ConfigError("empty section name at line " + std::to_string(lineno));
            ini.sections_[section];
            continue;
        }
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected key = value at line " + std::to_string(lineno));
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty())
            throw ConfigError("empty key at line " + std::to_string(lineno));
        ini.sections_[section][key] = value;
    }
    return ini;
}

Ini Ini::parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << f.rdbuf();
    return parse_text(buf.str());
}

bool Ini::has(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    return s != sections_.end() && s->second.count(key) > 0;
}

std::string Ini::get_str(const std::string& section, const std::string& key,
                         const std::string& fallback) const {
    auto s = sections_.find(section);
    if (s == sections_.end()) return fallback;
    auto k = s->second.find(key);
    return k == s->second.end() ? fallback : k->second;
}

std::uint64_t Ini::get_u64(const std::string& section, const std::string& key,
                           std::uint64_t fallback) const {
    if (!has(section, key)) return fallback;
    return parse_u64(get_str(section, key, ""), section + "." + key);
}

double Ini::get_f64(const std::string& section, const std::string& key,
                    double fallback) const {
    if (!has(section, key)) return fallback;
    return parse_f64(get_str(section, key, ""), section + "." + key);
}

std::vector<std::uint64_t> Ini::get_u64_list(const std::string& section,
                                             const std::string& key) const {
    std::vector<std::uint64_t> out;
    std::string raw = get_str(section, key, "");
    if (raw.empty()) return out;
    std::istringstream in(raw);
    std::string item;
    while (std::getline(in, item, ',')) {
        out.push_back(parse_u64(item, section + "." + key));
    }
    return out;
}

void Ini::set(const std::string& section, const std::string& key,
              const std::string& value) {
    sections_[section][key] = value;
}

std::string Ini::canonical_text() const {
    std::ostringstream out;
    for (const auto& [name, kv] : sections_) {
        out << '[' << name << "]\n";
        for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
    }
    return out.str();
}

SimConfig SimConfig::defaults() { return SimConfig{}; }

SimConfig SimConfig::from_ini(Ini ini) {
    SimConfig c;
    c.idt_base = VirtAddr{ini.get_u64("mem", "idt_base", c.idt_base.value)};
    c.phys_mem_bytes = ini.get_u64("mem", "phys_mem_bytes", c.phys_mem_bytes);
    if (ini.has("mem", "kernel_ranges")) {
        c.kernel_ranges = ini.get_u64_list("mem", "kernel_ranges");
        if (c.kernel_ranges.size() != 3)
            throw ConfigError("mem.kernel_ranges must list 3 page counts");
    }
    c.mtrr_budget = ini.get_u64("mem", "mtrr_budget", c.mtrr_budget);
    c.user_heap_pages = ini.get_u64("mem", "user_heap_pages", c.user_heap_pages);
    c.secret_pages = ini.get_u64("mem", "secret_pages", c.secret_pages);

    c.l1d_sets = static_cast<std::uint32_t>(ini.get_u64("cache", "l1d_sets", c.l1d_sets));
    c.l1d_ways = static_cast<std::uint32_t>(ini.get_u64("cache", "l1d_ways", c.l1d_ways));

    c.costs.probe_cost = ini.get_u64("core", "probe_cost", c.costs.probe_cost);
    c.costs.evict_cost = ini.get_u64("core", "evict_cost", c.costs.evict_cost);
    c.costs.isr_cost = ini.get_u64("core", "isr_cost", c.costs.isr_cost);
    c.costs.cycles_per_us = ini.get_u64("core", "cycles_per_us", c.costs.cycles_per_us);
    c.costs.hit_latency = ini.get_u64("core", "hit_latency", c.costs.hit_latency);
    c.costs.miss_latency = ini.get_u64("core", "miss_latency", c.costs.miss_latency);
    c.noise_p = ini.get_f64("core", "noise_p", c.noise_p);
    if (c.noise_p < 0.0 || c.noise_p >= 1.0)
        throw ConfigError("core.noise_p must be in [0, 1)");

    c.raw = std::move(ini);
    return c;
}

SimConfig SimConfig::from_file(const std::string& path) {
    return from_ini(Ini::parse_file(path));
}

std::string SimConfig::canonical_text() const {
    std::ostringstream out;
    out << "resolved.idt_base = 0x" << std::hex << idt_base.value << std::dec << '\n'
        << "resolved.phys_mem_bytes = " << phys_mem_bytes << '\n'
        << "resolved.kernel_ranges = " << kernel_ranges[0] << ',' << kernel_ranges[1]
        << ',' << kernel_ranges[2] << '\n'
        << "resolved.mtrr_budget = " << mtrr_budget << '\n'
        << "resolved.user_heap_pages = " << user_heap_pages << '\n'
        << "resolved.secret_pages = " << secret_pages << '\n'
        << "resolved.l1d_sets = " << l1d_sets << '\n'
        << "resolved.l1d_ways = " << l1d_ways << '\n'
        << "resolved.probe_cost = " << costs.probe_cost << '\n'
        << "resolved.evict_cost = " << costs.evict_cost << '\n'
        << "resolved.isr_cost = " << costs.isr_cost << '\n'
        << "resolved.cycles_per_us = " << costs.cycles_per_us << '\n'
        << "resolved.hit_latency = " << costs.hit_latency << '\n'
        << "resolved.miss_latency = " << costs.miss_latency << '\n'
        << "resolved.noise_p = " << noise_p << '\n';
    out << raw.canonical_text();
    return out.str();
}

std::uint64_t fnv1a64(const std::string& data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : data) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace idtsim
