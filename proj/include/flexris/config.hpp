#pragma once

// Experiment configuration as flat "section.key = value" text. Lines starting
// with '#' are comments. Unknown keys and malformed values are errors.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "flexris/channel.hpp"
#include "flexris/estimator_nls.hpp"
#include "flexris/estimator_nn.hpp"
#include "flexris/geometry.hpp"
#include "flexris/measurement.hpp"

namespace flexris {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct ExperimentConfig {
    // scene.*; the RIS grid is rebuilt from these in scene()
    Scene base;
    int ris_ny = 40;
    int ris_nz = 10;
    std::optional<double> spacing_y;  // unset: half a wavelength
    std::optional<double> spacing_z;
    Scheme scheme = Scheme::Diagonal;
    double measurement_r = 10.0;
    bool rician = false;

    // train.*: dataset and optimizer
    std::size_t samples = 18225;
    double sigma = 0.8;
    DatasetOptions features;
    TrainConfig train;

    // sweep.*
    std::vector<double> sweep_sigmas{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
    std::vector<double> sweep_epsilons{0.0, 0.1, 0.2, 0.4};
    double sweep_sigma = 0.8;  // geometry spread of the location-error sweep
    std::size_t trials = 50;

    // nls.*
    NlsOptions nls;

    std::uint64_t seed = 2026;
    std::string output_dir = ".";

    Scene scene() const {
        Scene s = base;
        const double half = s.radio.wavelength() / 2.0;
        s.grid = RisGrid(ris_ny, ris_nz, spacing_y.value_or(half), spacing_z.value_or(half));
        return s;
    }

    MeasurementPlan plan() const { return default_plan(scene(), scheme, measurement_r); }

    void validate() const {
        try {
            scene().validate();
            if (!(measurement_r > 0.0)) throw std::invalid_argument("scene.measurement_r_m must be positive");
            if (!(sigma >= 0.0)) throw std::invalid_argument("train.sigma must be >= 0");
            if (samples < 1) throw std::invalid_argument("train.samples must be >= 1");
            train.validate();
            if (trials < 1) throw std::invalid_argument("sweep.trials must be >= 1");
            if (!(sweep_sigma >= 0.0)) throw std::invalid_argument("sweep.sigma must be >= 0");
            for (double v : sweep_sigmas)
                if (!(v >= 0.0)) throw std::invalid_argument("sweep.sigmas entries must be >= 0");
            for (double v : sweep_epsilons)
                if (!(v >= 0.0)) throw std::invalid_argument("sweep.epsilons entries must be >= 0");
            nls.validate();
        } catch (const ConfigError&) {
            throw;
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("invalid config: ") + e.what());
        }
    }
};

namespace config_detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& key, std::string_view v) {
    const std::string t = trim(v);
    double out = 0.0;
    const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
    if (ec != std::errc{} || p != t.data() + t.size() || t.empty() || !std::isfinite(out))
        throw ConfigError(key + ": expected a number, got '" + t + "'");
    return out;
}

template <class Int>
Int parse_int(const std::string& key, std::string_view v) {
    const std::string t = trim(v);
    Int out{};
    const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
    if (ec != std::errc{} || p != t.data() + t.size() || t.empty())
        throw ConfigError(key + ": expected a non-negative integer, got '" + t + "'");
    return out;
}

inline bool parse_bool(const std::string& key, std::string_view v) {
    const std::string t = trim(v);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw ConfigError(key + ": expected true/false, got '" + t + "'");
}

inline std::vector<double> parse_list(const std::string& key, std::string_view v) {
    std::vector<double> out;
    const std::string t = trim(v);
    if (t.empty()) return out;
    std::size_t start = 0;
    while (true) {
        const auto comma = t.find(',', start);
        out.push_back(parse_double(key, std::string_view(t).substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

inline Vec3 parse_vec3(const std::string& key, std::string_view v) {
    const auto l = parse_list(key, v);
    if (l.size() != 3) throw ConfigError(key + ": expected x,y,z");
    return {l[0], l[1], l[2]};
}

// Shortest text that parses back to the same double; plain decimals when
// they stay short, so 0.0003 does not print as 3e-04.
inline std::string fmt(double v) {
    char buf[400];
    auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed);
    if (res.ec == std::errc{} && res.ptr - buf <= 16) return std::string(buf, res.ptr);
    res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string fmt(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
    return s;
}

inline std::string fmt(const Vec3& v) { return fmt(v.x) + "," + fmt(v.y) + "," + fmt(v.z); }
inline std::string fmt(bool b) { return b ? "true" : "false"; }

struct Entry {
    std::string key;
    std::function<void(const std::string&)> set;
    std::function<std::string()> get;
};

inline std::vector<Entry> entries(ExperimentConfig& c) {
    std::vector<Entry> e;
    auto num = [&e](std::string key, double& ref) {
        e.push_back({key, [&ref, key](const std::string& v) { ref = parse_double(key, v); }, [&ref] { return fmt(ref); }});
    };
    auto flag = [&e](std::string key, bool& ref) {
        e.push_back({key, [&ref, key](const std::string& v) { ref = parse_bool(key, v); }, [&ref] { return fmt(ref); }});
    };
    auto vec = [&e](std::string key, Vec3& ref) {
        e.push_back({key, [&ref, key](const std::string& v) { ref = parse_vec3(key, v); }, [&ref] { return fmt(ref); }});
    };
    auto list = [&e](std::string key, std::vector<double>& ref) {
        e.push_back({key, [&ref, key](const std::string& v) { ref = parse_list(key, v); }, [&ref] { return fmt(ref); }});
    };
    auto integer = [&e](std::string key, auto& ref) {
        using T = std::remove_reference_t<decltype(ref)>;
        e.push_back({key, [&ref, key](const std::string& v) { ref = parse_int<T>(key, v); }, [&ref] { return std::to_string(ref); }});
    };
    auto spacing = [&e, &c](std::string key, std::optional<double>& ref) {
        e.push_back({key, [&ref, key](const std::string& v) { ref = parse_double(key, v); },
                     [&ref, &c] { return fmt(ref.value_or(c.base.radio.wavelength() / 2.0)); }});
    };

    auto& r = c.base.radio;
    num("scene.frequency_hz", r.carrier_freq);
    num("scene.tx_power_w", r.tx_power);
    num("scene.pathloss_ref_db", r.pathloss_ref_db);
    num("scene.ref_distance_m", r.ref_distance);
    num("scene.pathloss_exponent_bs_ris", r.pathloss_exponent.bs_ris);
    num("scene.pathloss_exponent_ris_mu", r.pathloss_exponent.ris_mu);
    num("scene.pathloss_exponent_bs_mu", r.pathloss_exponent.bs_mu);
    integer("scene.ris_ny", c.ris_ny);
    integer("scene.ris_nz", c.ris_nz);
    spacing("scene.spacing_y_m", c.spacing_y);
    spacing("scene.spacing_z_m", c.spacing_z);
    vec("scene.bs_position", c.base.u_bs);
    vec("scene.coverage_min", c.base.coverage.lo);
    vec("scene.coverage_max", c.base.coverage.hi);
    num("scene.bandwidth_hz", c.base.bandwidth);
    num("scene.noise_density_dbm_hz", c.base.noise_density_dbm_hz);
    num("scene.noise_figure_db", c.base.noise_figure_db);
    e.push_back({"scene.scheme",
                 [&c](const std::string& v) {
                     const auto t = trim(v);
                     if (t == "diagonal") c.scheme = Scheme::Diagonal;
                     else if (t == "full") c.scheme = Scheme::Full;
                     else throw ConfigError("scene.scheme: expected diagonal or full, got '" + t + "'");
                 },
                 [&c] { return std::string(c.scheme == Scheme::Full ? "full" : "diagonal"); }});
    num("scene.measurement_r_m", c.measurement_r);
    flag("scene.rician", c.rician);
    num("scene.k_factor_bs_ris", c.base.rician.k_factor.bs_ris);
    num("scene.k_factor_ris_mu", c.base.rician.k_factor.ris_mu);
    integer("scene.scatterers", c.base.rician.scatterer_count);
    vec("scene.scatterer_min", c.base.rician.scatterer_region.lo);
    vec("scene.scatterer_max", c.base.rician.scatterer_region.hi);

    integer("train.samples", c.samples);
    num("train.sigma", c.sigma);
    flag("train.include_coords", c.features.include_coords);
    flag("train.noisy", c.features.noisy);
    flag("train.power_db", c.features.power_db);
    integer("train.max_epochs", c.train.max_epochs);
    integer("train.batch_size", c.train.batch_size);
    integer("train.patience", c.train.patience);
    num("train.learning_rate", c.train.learning_rate);
    e.push_back({"train.hidden",
                 [&c](const std::string& v) {
                     std::vector<std::size_t> h;
                     for (double x : parse_list("train.hidden", v)) {
                         if (!(x >= 1.0) || x != std::floor(x)) throw ConfigError("train.hidden: layer widths must be positive integers");
                         h.push_back(static_cast<std::size_t>(x));
                     }
                     c.train.hidden = h;
                 },
                 [&c] {
                     std::string s;
                     for (std::size_t i = 0; i < c.train.hidden.size(); ++i) s += (i ? "," : "") + std::to_string(c.train.hidden[i]);
                     return s;
                 }});

    list("sweep.sigmas", c.sweep_sigmas);
    list("sweep.epsilons", c.sweep_epsilons);
    num("sweep.sigma", c.sweep_sigma);
    integer("sweep.trials", c.trials);

    integer("nls.multistart", c.nls.multistart);
    integer("nls.max_iterations", c.nls.max_iterations);
    num("nls.prior_sigma", c.nls.prior_sigma);
    integer("nls.prescreen", c.nls.prescreen);

    integer("seed", c.seed);
    e.push_back({"output_dir", [&c](const std::string& v) { c.output_dir = trim(v); }, [&c] { return c.output_dir; }});
    return e;
}

}  // namespace config_detail

/// Sets one key; throws ConfigError for unknown keys or bad values.
inline void set_config_value(ExperimentConfig& c, const std::string& key, const std::string& value) {
    for (auto& e : config_detail::entries(c))
        if (e.key == key) return e.set(value);
    throw ConfigError("unknown config key '" + key + "'");
}

inline std::vector<std::string> config_keys() {
    ExperimentConfig c;
    std::vector<std::string> out;
    for (const auto& e : config_detail::entries(c)) out.push_back(e.key);
    return out;
}

inline void parse_config(std::istream& is, ExperimentConfig& c) {
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto t = config_detail::trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        set_config_value(c, config_detail::trim(std::string_view(t).substr(0, eq)), std::string(t.substr(eq + 1)));
    }
}

inline void load_config(const std::filesystem::path& path, ExperimentConfig& c) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config " + path.string());
    parse_config(is, c);
}

/// Every key with its resolved value, one "key = value" per line; the output
/// parses back into an identical configuration.
inline void write_config(std::ostream& os, const ExperimentConfig& c) {
    ExperimentConfig copy = c;
    for (const auto& e : config_detail::entries(copy)) os << e.key << " = " << e.get() << '\n';
}

}  // namespace flexris
