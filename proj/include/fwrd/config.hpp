// RunConfig as an INI file: [section] headers and key = value lines.
#pragma once

#include <charconv>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "fwrd/experiment.hpp"

namespace fwrd {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline bool operator==(const LossConfig& a, const LossConfig& b) {
    return a.alpha == b.alpha && a.gamma == b.gamma && a.eps_s == b.eps_s;
}
inline bool operator==(const AdamConfig& a, const AdamConfig& b) {
    return a.lr == b.lr && a.beta1 == b.beta1 && a.beta2 == b.beta2 && a.eps == b.eps;
}
inline bool operator==(const TrainConfig& a, const TrainConfig& b) {
    return a.adam == b.adam && a.batch_size == b.batch_size && a.epochs == b.epochs;
}
inline bool operator==(const TeacherConfig& a, const TeacherConfig& b) {
    return a.per_class == b.per_class && a.classes == b.classes && a.epochs == b.epochs;
}
inline bool operator==(const RunConfig& a, const RunConfig& b) {
    return a.dataset_spec() == b.dataset_spec() && a.encoder == b.encoder && a.loss == b.loss && a.train == b.train &&
           a.teacher == b.teacher && a.threshold_mode == b.threshold_mode &&
           a.fixed_threshold == b.fixed_threshold && a.infer_stride == b.infer_stride && a.seed == b.seed &&
           a.out_dir == b.out_dir;
}

namespace detail {

inline std::string fmt(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}
inline std::string fmt(std::uint64_t v) { return std::to_string(v); }

inline double parse_double(const std::string& key, const std::string& s) {
    double v = 0.0;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size()) throw ConfigError(key + ": not a number: '" + s + "'");
    return v;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& s) {
    std::uint64_t v = 0;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size())
        throw ConfigError(key + ": not a non-negative integer: '" + s + "'");
    return v;
}

struct Field {
    std::string path;  // section.key
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

#define FWRD_UINT(path, member)                                                                   \
    Field {                                                                                       \
        path, [](const RunConfig& c) { return fmt(static_cast<std::uint64_t>(c.member)); },        \
            [](RunConfig& c, const std::string& s) {                                              \
                c.member = static_cast<decltype(c.member)>(parse_uint(path, s));                  \
            }                                                                                     \
    }
#define FWRD_REAL(path, member)                                                                   \
    Field {                                                                                       \
        path, [](const RunConfig& c) { return fmt(static_cast<double>(c.member)); },               \
            [](RunConfig& c, const std::string& s) { c.member = parse_double(path, s); }          \
    }

inline const std::vector<Field>& fields() {
    static const std::vector<Field> f{
        FWRD_UINT("run.seed", seed),
        {"run.out_dir", [](const RunConfig& c) { return c.out_dir; },
         [](RunConfig& c, const std::string& s) { c.out_dir = s; }},
        {"run.threshold_mode",
         [](const RunConfig& c) {
             return std::string(c.threshold_mode == ThresholdMode::fixed ? "fixed" : "calibrated");
         },
         [](RunConfig& c, const std::string& s) {
             if (s == "fixed") c.threshold_mode = ThresholdMode::fixed;
             else if (s == "calibrated") c.threshold_mode = ThresholdMode::calibrated;
             else throw ConfigError("run.threshold_mode: expected fixed or calibrated, got '" + s + "'");
         }},
        FWRD_REAL("run.fixed_threshold", fixed_threshold),
        FWRD_UINT("run.infer_stride", infer_stride),

        FWRD_UINT("dataset.n_normal_train", dataset.n_normal_train),
        FWRD_UINT("dataset.n_tumor_train", dataset.n_tumor_train),
        FWRD_UINT("dataset.n_val_per_class", dataset.n_val_per_class),
        FWRD_UINT("dataset.n_test_per_class", dataset.n_test_per_class),
        FWRD_UINT("dataset.n_train_slides", dataset.n_train_slides),
        FWRD_UINT("dataset.n_test_tumor_slides", dataset.n_test_tumor_slides),
        FWRD_UINT("dataset.n_test_normal_slides", dataset.n_test_normal_slides),
        FWRD_UINT("dataset.slide_size", dataset.slide.size),
        FWRD_UINT("dataset.lesion_count_min", dataset.slide.lesion_count_min),
        FWRD_UINT("dataset.lesion_count_max", dataset.slide.lesion_count_max),
        FWRD_REAL("dataset.lesion_fraction_min", dataset.slide.lesion_fraction_min),
        FWRD_REAL("dataset.lesion_fraction_max", dataset.slide.lesion_fraction_max),
        FWRD_UINT("dataset.min_lesion_radius", dataset.slide.min_lesion_radius),
        FWRD_UINT("dataset.grid_stride", dataset.extraction.grid_stride),
        FWRD_REAL("dataset.tau_lesion", dataset.extraction.tau_lesion),

        {"encoder.channels",
         [](const RunConfig& c) {
             std::string s;
             for (std::size_t i = 0; i < kNumScales; ++i) s += (i ? "," : "") + std::to_string(c.encoder.channels[i]);
             return s;
         },
         [](RunConfig& c, const std::string& s) {
             std::vector<std::string> parts;
             std::stringstream ss(s);
             for (std::string p; std::getline(ss, p, ',');) parts.push_back(p);
             if (parts.size() != kNumScales)
                 throw ConfigError("encoder.channels: expected " + std::to_string(kNumScales) + " comma-separated values");
             for (std::size_t i = 0; i < kNumScales; ++i)
                 c.encoder.channels[i] = parse_uint("encoder.channels", parts[i]);
         }},
        FWRD_UINT("encoder.input_size", encoder.input_size),
        FWRD_UINT("encoder.in_channels", encoder.in_channels),
        FWRD_UINT("encoder.fusion_channels", encoder.fusion_channels),

        FWRD_REAL("loss.alpha", loss.alpha),
        FWRD_REAL("loss.gamma", loss.gamma),
        FWRD_REAL("loss.eps_s", loss.eps_s),

        FWRD_REAL("optimizer.lr", train.adam.lr),
        FWRD_REAL("optimizer.beta1", train.adam.beta1),
        FWRD_REAL("optimizer.beta2", train.adam.beta2),
        FWRD_REAL("optimizer.eps", train.adam.eps),
        FWRD_UINT("optimizer.batch_size", train.batch_size),
        FWRD_UINT("optimizer.epochs", train.epochs),

        FWRD_UINT("teacher.per_class", teacher.per_class),
        FWRD_UINT("teacher.classes", teacher.classes),
        FWRD_UINT("teacher.epochs", teacher.epochs),
    };
    return f;
}

#undef FWRD_UINT
#undef FWRD_REAL

}  // namespace detail

inline std::string serialize_config(const RunConfig& cfg) {
    boost::property_tree::ptree pt;
    for (const auto& f : detail::fields()) pt.put(f.path, f.get(cfg));
    std::ostringstream os;
    boost::property_tree::write_ini(os, pt);
    return os.str();
}

/// Starts from defaults and applies every key present; unknown keys are errors.
inline RunConfig parse_config(const std::string& text) {
    boost::property_tree::ptree pt;
    std::istringstream is(text);
    try {
        boost::property_tree::read_ini(is, pt);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(std::string("malformed config: ") + e.message() + " at line " + std::to_string(e.line()));
    }
    RunConfig cfg;
    for (const auto& [section, keys] : pt) {
        if (keys.empty() && !keys.data().empty())
            throw ConfigError("key '" + section + "' must be inside a [section]");
        for (const auto& [key, value] : keys) {
            const std::string path = section + "." + key;
            auto it = std::find_if(detail::fields().begin(), detail::fields().end(),
                                   [&](const detail::Field& f) { return f.path == path; });
            if (it == detail::fields().end()) throw ConfigError("unknown config key '" + path + "'");
            it->set(cfg, value.data());
        }
    }
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

inline void save_config(const std::string& path, const RunConfig& cfg) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw ConfigError("cannot write config " + path);
    f << serialize_config(cfg);
}

}  // namespace fwrd
