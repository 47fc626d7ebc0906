#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "nrsfm/errors.hpp"

namespace nrsfm {

// Which hypothesis the data term trains on.
enum class SelectionStrategy { Best, Worst, MixtureDensity };

inline const char* to_string(SelectionStrategy s) {
    switch (s) {
        case SelectionStrategy::Best: return "best";
        case SelectionStrategy::Worst: return "worst";
        case SelectionStrategy::MixtureDensity: return "mixture-density";
    }
    return "?";
}

inline SelectionStrategy strategy_from_string(const std::string& s) {
    if (s == "best") return SelectionStrategy::Best;
    if (s == "worst") return SelectionStrategy::Worst;
    if (s == "mixture-density") return SelectionStrategy::MixtureDensity;
    throw ConfigError("strategy: unknown value '" + s +
                      "' (want best|worst|mixture-density)");
}

struct TrainConfig {
    // model
    int n_p = 15;
    int k_b = 4;
    int k_d = 8;
    int n_m = 10;
    int dim_z = 32;
    int feature_width = 256;
    // loss
    double lambda_b = 0.8;
    double lambda_f = 0.2;
    double lambda_res = 0.1;
    double lambda_cano = 1.0;
    double epsilon = 0.15;
    bool intermediate_loss = true; // false: train on the selected hypothesis only
    SelectionStrategy strategy = SelectionStrategy::Best;
    // optimizer
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_opt = 1e-8;
    // loop
    int batch_size = 32;
    int epochs = 50;
    uint64_t seed = 1;
    bool cache_noise = false; // debugging aid: fixed per-frame noise across steps

    void validate() const {
        auto positive = [](int v, const char* name) {
            if (v < 1) throw ConfigError(std::string(name) + ": must be >= 1");
        };
        positive(n_p, "n_p");
        positive(k_b, "k_b");
        positive(k_d, "k_d");
        positive(n_m, "n_m");
        positive(dim_z, "dim_z");
        positive(feature_width, "feature_width");
        positive(batch_size, "batch_size");
        if (epochs < 0) throw ConfigError("epochs: must be >= 0");
        if (k_b >= k_d) throw ConfigError("k_b: must be smaller than k_d");
        if (!(lambda_b > 0.0) || lambda_b > 1.0)
            throw ConfigError("lambda_b: must be in (0, 1]");
        if (lambda_f < 0.0 || !(lambda_f < 1.0))
            throw ConfigError("lambda_f: must be in [0, 1)");
        if (std::fabs(lambda_b + lambda_f - 1.0) > 1e-12)
            throw ConfigError("lambda_b: lambda_b + lambda_f must equal 1");
        if (lambda_res < 0.0) throw ConfigError("lambda_res: must be >= 0");
        if (lambda_cano < 0.0) throw ConfigError("lambda_cano: must be >= 0");
        if (!(epsilon > 0.0)) throw ConfigError("epsilon: must be > 0");
        if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate: must be >= 0");
        if (beta1 < 0.0 || beta1 >= 1.0) throw ConfigError("beta1: must be in [0, 1)");
        if (beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("beta2: must be in [0, 1)");
        if (!(eps_opt > 0.0)) throw ConfigError("eps_opt: must be > 0");
        if (lambda_res > 0.0 && batch_size < 2)
            throw ConfigError("batch_size: must be >= 2 when lambda_res > 0");
    }
};

struct SynthConfig {
    int n_f = 500;
    int n_p = 15;
    int k_b_true = 4;
    int k_d_true = 8;
    double deformation_scale = 0.2;   // deformation-to-basis Frobenius ratio
    double rotation_walk_step = 0.05; // radians per frame
    uint64_t seed = 7;

    void validate() const {
        if (n_f < 1) throw ConfigError("n_f: must be >= 1");
        if (n_p < 1) throw ConfigError("n_p: must be >= 1");
        if (k_b_true < 1) throw ConfigError("k_b_true: must be >= 1");
        if (k_d_true < 1) throw ConfigError("k_d_true: must be >= 1");
        if (deformation_scale < 0.0 || !(deformation_scale < 1.0))
            throw ConfigError("deformation_scale: must be in [0, 1)");
        if (rotation_walk_step < 0.0)
            throw ConfigError("rotation_walk_step: must be >= 0");
    }
};

// One flat key=value document drives both dataset generation and training.
struct FullConfig {
    TrainConfig train;
    SynthConfig synth;
};

namespace detail {

inline int parse_int(const std::string& key, const std::string& s) {
    size_t pos = 0;
    int v = 0;
    try {
        v = std::stoi(s, &pos);
    } catch (...) {
        throw ConfigError(key + ": expected integer, got '" + s + "'");
    }
    if (pos != s.size()) throw ConfigError(key + ": expected integer, got '" + s + "'");
    return v;
}

inline uint64_t parse_u64(const std::string& key, const std::string& s) {
    size_t pos = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(s, &pos);
    } catch (...) {
        throw ConfigError(key + ": expected unsigned integer, got '" + s + "'");
    }
    if (pos != s.size()) throw ConfigError(key + ": expected unsigned integer, got '" + s + "'");
    return v;
}

inline double parse_double(const std::string& key, const std::string& s) {
    size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &pos);
    } catch (...) {
        throw ConfigError(key + ": expected number, got '" + s + "'");
    }
    if (pos != s.size()) throw ConfigError(key + ": expected number, got '" + s + "'");
    return v;
}

inline bool parse_bool(const std::string& key, const std::string& s) {
    if (s == "1" || s == "true" || s == "yes") return true;
    if (s == "0" || s == "false" || s == "no") return false;
    throw ConfigError(key + ": expected boolean, got '" + s + "'");
}

inline std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

} // namespace detail

// Apply one key=value assignment; unknown keys are rejected.
inline void apply_config_key(FullConfig& cfg, const std::string& key, const std::string& value) {
    using namespace detail;
    TrainConfig& t = cfg.train;
    SynthConfig& s = cfg.synth;
    if (key == "n_p") { t.n_p = parse_int(key, value); s.n_p = t.n_p; }
    else if (key == "k_b") t.k_b = parse_int(key, value);
    else if (key == "k_d") t.k_d = parse_int(key, value);
    else if (key == "n_m") t.n_m = parse_int(key, value);
    else if (key == "dim_z") t.dim_z = parse_int(key, value);
    else if (key == "feature_width") t.feature_width = parse_int(key, value);
    else if (key == "lambda_b") t.lambda_b = parse_double(key, value);
    else if (key == "lambda_f") t.lambda_f = parse_double(key, value);
    else if (key == "lambda_res") t.lambda_res = parse_double(key, value);
    else if (key == "lambda_cano") t.lambda_cano = parse_double(key, value);
    else if (key == "epsilon") t.epsilon = parse_double(key, value);
    else if (key == "intermediate_loss") t.intermediate_loss = parse_bool(key, value);
    else if (key == "strategy") t.strategy = strategy_from_string(value);
    else if (key == "learning_rate") t.learning_rate = parse_double(key, value);
    else if (key == "beta1") t.beta1 = parse_double(key, value);
    else if (key == "beta2") t.beta2 = parse_double(key, value);
    else if (key == "eps_opt") t.eps_opt = parse_double(key, value);
    else if (key == "batch_size") t.batch_size = parse_int(key, value);
    else if (key == "epochs") t.epochs = parse_int(key, value);
    else if (key == "seed") t.seed = parse_u64(key, value);
    else if (key == "cache_noise") t.cache_noise = parse_bool(key, value);
    else if (key == "n_f") s.n_f = parse_int(key, value);
    else if (key == "k_b_true") s.k_b_true = parse_int(key, value);
    else if (key == "k_d_true") s.k_d_true = parse_int(key, value);
    else if (key == "deformation_scale") s.deformation_scale = parse_double(key, value);
    else if (key == "rotation_walk_step") s.rotation_walk_step = parse_double(key, value);
    else if (key == "synth_seed") s.seed = parse_u64(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
}

inline FullConfig parse_config_text(std::istream& in, FullConfig base = {}) {
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": expected key=value, got '" + line + "'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": expected key=value, got '" + line + "'");
        apply_config_key(base, key, value);
    }
    return base;
}

inline FullConfig load_config_file(const std::string& path, FullConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    FullConfig cfg = parse_config_text(in, std::move(base));
    cfg.train.validate();
    cfg.synth.validate();
    if (cfg.train.n_p != cfg.synth.n_p)
        throw ConfigError("n_p: train and synth point counts must agree");
    return cfg;
}

// Key/value echo of every training field, in fixed order (checkpoints).
inline std::map<std::string, std::string> train_config_entries(const TrainConfig& t) {
    auto fmt = [](double v) {
        std::ostringstream os;
        os.precision(17);
        os << v;
        return os.str();
    };
    std::map<std::string, std::string> kv;
    kv["n_p"] = std::to_string(t.n_p);
    kv["k_b"] = std::to_string(t.k_b);
    kv["k_d"] = std::to_string(t.k_d);
    kv["n_m"] = std::to_string(t.n_m);
    kv["dim_z"] = std::to_string(t.dim_z);
    kv["feature_width"] = std::to_string(t.feature_width);
    kv["lambda_b"] = fmt(t.lambda_b);
    kv["lambda_f"] = fmt(t.lambda_f);
    kv["lambda_res"] = fmt(t.lambda_res);
    kv["lambda_cano"] = fmt(t.lambda_cano);
    kv["epsilon"] = fmt(t.epsilon);
    kv["intermediate_loss"] = t.intermediate_loss ? "1" : "0";
    kv["strategy"] = to_string(t.strategy);
    kv["learning_rate"] = fmt(t.learning_rate);
    kv["beta1"] = fmt(t.beta1);
    kv["beta2"] = fmt(t.beta2);
    kv["eps_opt"] = fmt(t.eps_opt);
    kv["batch_size"] = std::to_string(t.batch_size);
    kv["epochs"] = std::to_string(t.epochs);
    kv["seed"] = std::to_string(t.seed);
    kv["cache_noise"] = t.cache_noise ? "1" : "0";
    return kv;
}

// Strict setter for TrainConfig keys only (checkpoint config echo).
inline void set_train_config_entry(TrainConfig& t, const std::string& key,
                                   const std::string& value) {
    static const std::map<std::string, std::string> known = train_config_entries(TrainConfig{});
    if (known.find(key) == known.end())
        throw ConfigError("unknown train config key '" + key + "'");
    FullConfig tmp;
    tmp.train = t;
    apply_config_key(tmp, key, value);
    t = tmp.train;
}

} // namespace nrsfm
