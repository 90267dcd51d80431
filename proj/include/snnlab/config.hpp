#ifndef SNNLAB_CONFIG_HPP
#define SNNLAB_CONFIG_HPP

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "snnlab/activation.hpp"
#include "snnlab/data.hpp"
#include "snnlab/model.hpp"
#include "snnlab/optim.hpp"

namespace snnlab {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace cfg_detail {

inline std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

}  // namespace cfg_detail

// Flat sectioned text format: [section] headers, key = value lines, '#'
// comments.  Unknown sections and keys are errors.
class RawConfig {
public:
    static RawConfig parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        std::stringstream buffer;
        buffer << in.rdbuf();
        return parse_string(buffer.str());
    }

    static RawConfig parse_string(const std::string& text) {
        RawConfig cfg;
        cfg.text_ = text;
        std::istringstream in(text);
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string t = cfg_detail::trim(line);
            if (t.empty() || t[0] == '#') continue;
            if (t.front() == '[') {
                if (t.back() != ']')
                    throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
                section = cfg_detail::trim(t.substr(1, t.size() - 2));
                cfg.sections_[section];
                continue;
            }
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
            if (section.empty())
                throw ConfigError("line " + std::to_string(lineno) + ": key outside any section");
            const std::string key = cfg_detail::trim(t.substr(0, eq));
            const std::string value = cfg_detail::trim(t.substr(eq + 1));
            if (key.empty())
                throw ConfigError("line " + std::to_string(lineno) + ": empty key");
            cfg.sections_[section][key] = value;
        }
        return cfg;
    }

    bool has(const std::string& section, const std::string& key) const {
        auto s = sections_.find(section);
        return s != sections_.end() && s->second.count(key) > 0;
    }

    std::string get(const std::string& section, const std::string& key) const {
        auto s = sections_.find(section);
        if (s == sections_.end() || !s->second.count(key))
            throw ConfigError("missing required field " + section + "." + key);
        return s->second.at(key);
    }

    std::string get_or(const std::string& section, const std::string& key,
                       const std::string& fallback) const {
        return has(section, key) ? get(section, key) : fallback;
    }

    const std::map<std::string, std::map<std::string, std::string>>& sections() const {
        return sections_;
    }

    const std::string& text() const { return text_; }

private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
    std::string text_;
};

namespace cfg_detail {

inline double to_double(const std::string& section, const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("field " + section + "." + key + ": not a number: " + v);
    }
}

inline std::uint64_t to_u64(const std::string& section, const std::string& key,
                            const std::string& v) {
    try {
        std::size_t pos = 0;
        const unsigned long long u = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return u;
    } catch (const std::exception&) {
        throw ConfigError("field " + section + "." + key + ": not an integer: " + v);
    }
}

inline bool to_bool(const std::string& section, const std::string& key, const std::string& v) {
    if (v == "true" || v == "on" || v == "1") return true;
    if (v == "false" || v == "off" || v == "0") return false;
    throw ConfigError("field " + section + "." + key + ": not a boolean: " + v);
}

inline std::vector<std::size_t> to_size_list(const std::string& section, const std::string& key,
                                             const std::string& v) {
    std::vector<std::size_t> out;
    std::istringstream in(v);
    std::string cell;
    while (std::getline(in, cell, ',')) {
        cell = trim(cell);
        if (cell.empty()) continue;
        out.push_back(static_cast<std::size_t>(to_u64(section, key, cell)));
    }
    if (out.empty()) throw ConfigError("field " + section + "." + key + ": empty list");
    return out;
}

}  // namespace cfg_detail

enum class SweepMode { stability, rate };

// Everything one experiment needs; every derived per-task seed is a
// deterministic function of master_seed and task coordinates.
struct ExperimentConfig {
    // [experiment]
    std::uint64_t master_seed = 1;
    std::size_t mc_samples = 100000;

    // [distribution]
    std::size_t d = 5;
    std::size_t teacher_width = 8;
    std::uint64_t teacher_seed = 7;
    double teacher_scale = 1.0;
    InputLaw input_law = InputLaw::sphere;
    double noise_std = 0.0;
    double c_x = 1.0;
    double c_y = 1.0;

    // [model]
    std::size_t m = 256;
    ActivationKind activation = ActivationKind::tanh;
    SignPattern sign_pattern = SignPattern::alternating;
    InitPolicy init_policy = InitPolicy::zeros;
    double init_scale = 0.0;

    // [training]
    Algorithm algorithm = Algorithm::gd;
    double eta = 0.1;
    std::size_t horizon = 100;
    std::size_t n = 64;
    bool strict_mode = true;
    std::size_t checkpoint_stride = 0;

    // [stability]
    std::size_t replicates = 4;

    // [sweep]
    SweepMode sweep_mode = SweepMode::stability;
    std::vector<std::size_t> n_grid = {64, 128, 256, 512};
    double rate_eta = 0.25;
    std::size_t rate_t_per_n = 16;   // T = n / rate_t_per_n ... see labcli
    double rate_m_scale = 16.0;      // m = rate_m_scale * (eta T)^3
    std::size_t rate_m_cap = 8192;

    // [budget]
    double max_total_steps = 2e9;

    // [output]
    std::string out_dir = "out";
};

namespace cfg_detail {

inline const std::map<std::string, std::set<std::string>>& known_keys() {
    static const std::map<std::string, std::set<std::string>> keys = {
        {"experiment", {"master_seed", "mc_samples"}},
        {"distribution",
         {"d", "teacher_width", "teacher_seed", "teacher_scale", "input_law", "noise_std", "c_x",
          "c_y"}},
        {"model", {"m", "activation", "sign_pattern", "init_policy", "init_scale"}},
        {"training", {"algorithm", "eta", "horizon", "n", "strict_mode", "checkpoint_stride"}},
        {"stability", {"replicates"}},
        {"sweep", {"mode", "n_grid", "rate_eta", "rate_t_per_n", "rate_m_scale", "rate_m_cap"}},
        {"budget", {"max_total_steps"}},
        {"output", {"dir"}},
    };
    return keys;
}

}  // namespace cfg_detail

inline ExperimentConfig bind_experiment_config(const RawConfig& raw) {
    const auto& known = cfg_detail::known_keys();
    for (const auto& [section, entries] : raw.sections()) {
        auto it = known.find(section);
        if (it == known.end()) throw ConfigError("unknown section [" + section + "]");
        for (const auto& [key, value] : entries) {
            (void)value;
            if (!it->second.count(key))
                throw ConfigError("unknown key " + section + "." + key);
        }
    }
    if (!raw.sections().count("distribution"))
        throw ConfigError("missing required field distribution.d");

    using namespace cfg_detail;
    ExperimentConfig cfg;
    auto u64 = [&](const std::string& s, const std::string& k, std::uint64_t fb) {
        return raw.has(s, k) ? to_u64(s, k, raw.get(s, k)) : fb;
    };
    auto dbl = [&](const std::string& s, const std::string& k, double fb) {
        return raw.has(s, k) ? to_double(s, k, raw.get(s, k)) : fb;
    };
    auto bol = [&](const std::string& s, const std::string& k, bool fb) {
        return raw.has(s, k) ? to_bool(s, k, raw.get(s, k)) : fb;
    };

    cfg.master_seed = u64("experiment", "master_seed", cfg.master_seed);
    cfg.mc_samples = u64("experiment", "mc_samples", cfg.mc_samples);

    cfg.d = u64("distribution", "d", cfg.d);
    cfg.teacher_width = u64("distribution", "teacher_width", cfg.teacher_width);
    cfg.teacher_seed = u64("distribution", "teacher_seed", cfg.teacher_seed);
    cfg.teacher_scale = dbl("distribution", "teacher_scale", cfg.teacher_scale);
    cfg.noise_std = dbl("distribution", "noise_std", cfg.noise_std);
    cfg.c_x = dbl("distribution", "c_x", cfg.c_x);
    cfg.c_y = dbl("distribution", "c_y", cfg.c_y);
    if (raw.has("distribution", "input_law")) {
        const std::string law = raw.get("distribution", "input_law");
        if (law == "sphere")
            cfg.input_law = InputLaw::sphere;
        else if (law == "truncated_gaussian")
            cfg.input_law = InputLaw::truncated_gaussian;
        else
            throw ConfigError("field distribution.input_law: unknown law " + law);
    }

    cfg.m = u64("model", "m", cfg.m);
    if (raw.has("model", "activation"))
        cfg.activation = activation_from_string(raw.get("model", "activation"));
    if (raw.has("model", "sign_pattern")) {
        const std::string p = raw.get("model", "sign_pattern");
        if (p == "alternating")
            cfg.sign_pattern = SignPattern::alternating;
        else if (p == "random")
            cfg.sign_pattern = SignPattern::random;
        else
            throw ConfigError("field model.sign_pattern: unknown pattern " + p);
    }
    if (raw.has("model", "init_policy")) {
        const std::string p = raw.get("model", "init_policy");
        if (p == "zeros")
            cfg.init_policy = InitPolicy::zeros;
        else if (p == "gaussian")
            cfg.init_policy = InitPolicy::gaussian;
        else
            throw ConfigError("field model.init_policy: unknown policy " + p);
    }
    cfg.init_scale = dbl("model", "init_scale", cfg.init_scale);

    if (raw.has("training", "algorithm")) {
        const std::string a = raw.get("training", "algorithm");
        if (a == "gd")
            cfg.algorithm = Algorithm::gd;
        else if (a == "sgd")
            cfg.algorithm = Algorithm::sgd;
        else
            throw ConfigError("field training.algorithm: unknown algorithm " + a);
    }
    cfg.eta = dbl("training", "eta", cfg.eta);
    cfg.horizon = u64("training", "horizon", cfg.horizon);
    cfg.n = u64("training", "n", cfg.n);
    cfg.strict_mode = bol("training", "strict_mode", cfg.strict_mode);
    cfg.checkpoint_stride = u64("training", "checkpoint_stride", cfg.checkpoint_stride);

    cfg.replicates = u64("stability", "replicates", cfg.replicates);

    if (raw.has("sweep", "mode")) {
        const std::string mode = raw.get("sweep", "mode");
        if (mode == "stability")
            cfg.sweep_mode = SweepMode::stability;
        else if (mode == "rate")
            cfg.sweep_mode = SweepMode::rate;
        else
            throw ConfigError("field sweep.mode: unknown mode " + mode);
    }
    if (raw.has("sweep", "n_grid"))
        cfg.n_grid = cfg_detail::to_size_list("sweep", "n_grid", raw.get("sweep", "n_grid"));
    cfg.rate_eta = dbl("sweep", "rate_eta", cfg.rate_eta);
    cfg.rate_t_per_n = u64("sweep", "rate_t_per_n", cfg.rate_t_per_n);
    cfg.rate_m_scale = dbl("sweep", "rate_m_scale", cfg.rate_m_scale);
    cfg.rate_m_cap = u64("sweep", "rate_m_cap", cfg.rate_m_cap);

    cfg.max_total_steps = dbl("budget", "max_total_steps", cfg.max_total_steps);
    cfg.out_dir = raw.get_or("output", "dir", cfg.out_dir);

    if (cfg.eta <= 0.0) throw ConfigError("field training.eta must be positive");
    if (cfg.d == 0 || cfg.m == 0 || cfg.n == 0)
        throw ConfigError("dimensions d, m, n must be positive");
    return cfg;
}

// Materialize the teacher distribution and the student model for a config.
inline TeacherDistribution make_distribution(const ExperimentConfig& cfg) {
    const ActivationSpec act = certify_bounds(cfg.activation);
    TeacherDistribution dist;
    dist.teacher = make_model(static_cast<Eigen::Index>(cfg.d),
                              static_cast<Eigen::Index>(cfg.teacher_width), act,
                              SignPattern::alternating, InitPolicy::gaussian, cfg.teacher_scale,
                              cfg.teacher_seed);
    // teacher weights are its Gaussian init
    dist.input_law = cfg.input_law;
    dist.sphere_radius = cfg.c_x;
    dist.noise_std = cfg.noise_std;
    dist.c_x = cfg.c_x;
    dist.c_y = cfg.c_y;
    return dist;
}

inline ModelState make_student(const ExperimentConfig& cfg) {
    const ActivationSpec act = certify_bounds(cfg.activation);
    return make_model(static_cast<Eigen::Index>(cfg.d), static_cast<Eigen::Index>(cfg.m), act,
                      cfg.sign_pattern, cfg.init_policy, cfg.init_scale,
                      rng::derive(cfg.master_seed, {0x111}));
}

inline TrainConfig make_train_config(const ExperimentConfig& cfg) {
    TrainConfig tc;
    tc.eta = cfg.eta;
    tc.horizon = cfg.horizon;
    tc.algorithm = cfg.algorithm;
    tc.seed = rng::derive(cfg.master_seed, {0x222});
    tc.checkpoint_stride = cfg.checkpoint_stride;
    tc.record_scalars = true;
    tc.strict_mode = cfg.strict_mode;
    return tc;
}

}  // namespace snnlab

#endif  // SNNLAB_CONFIG_HPP
