#pragma once

// Received-power forward model, measurement plans and power tables, and the
// training-set pipeline (generation, min-max scaling, partitioning, files).

#include <algorithm>
#include <charconv>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "flexris/binary_io.hpp"
#include "flexris/channel.hpp"
#include "flexris/geometry.hpp"
#include "flexris/parallel.hpp"
#include "flexris/phase_design.hpp"
#include "flexris/rng.hpp"

namespace flexris {

/// Deployment shared by every experiment: RIS lattice at the origin, BS
/// position, radio and noise parameters, and the user coverage area.
struct Scene {
    RadioParams radio;
    RisGrid grid;
    Vec3 u_bs{40.0, 20.0, 5.0};
    Box coverage{{6.0, 1.0, -5.0}, {14.0, 3.0, -5.0}};
    double bandwidth = 20e6;
    double noise_density_dbm_hz = -174.0;
    double noise_figure_db = 6.0;
    RicianSpec rician;

    Scene() : grid(40, 10, radio.wavelength() / 2.0, radio.wavelength() / 2.0) {}

    double kappa() const { return radio.wave_number(); }
    double noise_power() const { return flexris::noise_power(bandwidth, noise_density_dbm_hz, noise_figure_db); }

    /// Total LOS amplitude of the BS -> RIS -> u_mu cascade per element,
    /// including sqrt(P_t); both hops use centre-to-centre distances.
    double cascade_amplitude(const Vec3& u_mu) const {
        return std::sqrt(radio.tx_power) * pathloss_amplitude(u_bs.norm(), radio, radio.pathloss_exponent.bs_ris) *
               pathloss_amplitude(u_mu.norm(), radio, radio.pathloss_exponent.ris_mu);
    }

    /// Power when all N reflections add in phase at u_mu.
    double coherent_max(const Vec3& u_mu) const {
        const double a = static_cast<double>(grid.size()) * cascade_amplitude(u_mu);
        return a * a;
    }

    void validate() const {
        grid.validate();
        radio.validate();
        if (!u_bs.finite()) throw std::invalid_argument("Scene: non-finite BS position");
        if (!coverage.valid()) throw std::invalid_argument("Scene: empty coverage box");
        if (!(bandwidth > 0.0)) throw std::invalid_argument("Scene: bandwidth must be positive");
        rician.validate();
    }
};

/// Noiseless LOS power at u_mu: |alpha0 sum_n exp(j(w_n + kappa D_n))|^2 with
/// D_n = |u_n - u_bs| + |u_n - u_mu| over the elements on surface `coeffs`.
template <class Surface>
double received_power(const Surface& coeffs, const PhaseConfig& phase, const Vec3& u_bs, const Vec3& u_mu,
                      const RisGrid& grid, const RadioParams& radio) {
    const auto pos = element_positions(grid, coeffs);
    if (phase.size() != pos.size()) throw std::invalid_argument("received_power: phase config size mismatch");
    const double kappa = radio.wave_number();
    cplx field{0.0, 0.0};
    for (std::size_t n = 0; n < pos.size(); ++n) {
        const double d_bs = distance(pos[n], u_bs);
        const double d_mu = distance(pos[n], u_mu);
        if (!(d_bs > 0.0) || !(d_mu > 0.0)) throw std::invalid_argument("received_power: zero distance");
        field += std::polar(1.0, phase.phases[n] + kappa * (d_bs + d_mu));
    }
    const double alpha0 = std::sqrt(radio.tx_power) * pathloss_amplitude(u_bs.norm(), radio, radio.pathloss_exponent.bs_ris) *
                          pathloss_amplitude(u_mu.norm(), radio, radio.pathloss_exponent.ris_mu);
    return std::norm(alpha0 * field);
}

template <class Surface>
double received_power(const Surface& coeffs, const PhaseConfig& phase, const Vec3& u_mu, const Scene& scene) {
    return received_power(coeffs, phase, scene.u_bs, u_mu, scene.grid, scene.radio);
}

/// Neighbouring-sample distance at which a focused beam has dropped off.
inline double min_spacing(double r, int n_t) {
    if (!(r > 0.0) || n_t < 1) throw std::invalid_argument("min_spacing: need r > 0 and N_t >= 1");
    return 2.0 * r / n_t;
}

/// Regular grid over `area`. The y pitch is at least min_spacing(r, N_y);
/// the x and z pitches at least min_spacing(r, N_z). Points are spread evenly
/// so the extremes of every non-degenerate axis are included.
inline std::vector<Vec3> measurement_grid(const Box& area, double r, const RisGrid& grid) {
    if (!area.valid()) throw std::invalid_argument("measurement_grid: area too small to hold a point");
    const auto axis = [](double lo, double hi, double pitch) {
        const double extent = hi - lo;
        const int count = static_cast<int>(std::floor(extent / pitch + 1e-9)) + 1;
        std::vector<double> v;
        for (int i = 0; i < count; ++i) v.push_back(count == 1 ? 0.5 * (lo + hi) : lo + extent * i / (count - 1));
        return v;
    };
    const auto xs = axis(area.lo.x, area.hi.x, min_spacing(r, grid.n_z));
    const auto ys = axis(area.lo.y, area.hi.y, min_spacing(r, grid.n_y));
    const auto zs = axis(area.lo.z, area.hi.z, min_spacing(r, grid.n_z));
    std::vector<Vec3> out;
    for (double x : xs)
        for (double y : ys)
            for (double z : zs) out.push_back({x, y, z});
    return out;
}

enum class Scheme { Diagonal, Full };

/// K user locations probed with M phase configurations. With the diagonal
/// scheme only the pairs (k, k) are measured.
struct MeasurementPlan {
    std::vector<Vec3> locations;
    std::vector<PhaseConfig> configs;
    Scheme scheme = Scheme::Diagonal;

    std::size_t k() const { return locations.size(); }
    std::size_t m() const { return configs.size(); }
    std::size_t entry_count() const { return scheme == Scheme::Diagonal ? k() : k() * m(); }

    std::pair<std::size_t, std::size_t> entry(std::size_t i) const {
        return scheme == Scheme::Diagonal ? std::pair{i, i} : std::pair{i / m(), i % m()};
    }

    void validate(const RisGrid& grid) const {
        if (locations.empty()) throw std::invalid_argument("MeasurementPlan: need at least one location");
        if (configs.empty()) throw std::invalid_argument("MeasurementPlan: need at least one phase configuration");
        if (scheme == Scheme::Diagonal && configs.size() != locations.size())
            throw std::invalid_argument("MeasurementPlan: diagonal scheme requires M == K");
        for (const auto& c : configs)
            if (c.size() != grid.size()) throw std::invalid_argument("MeasurementPlan: phase config size mismatch");
    }

    /// Configuration m is the flat-surface focus on location m.
    static MeasurementPlan planar_beams(std::vector<Vec3> locations, const Scene& scene, Scheme scheme) {
        MeasurementPlan plan;
        plan.scheme = scheme;
        for (const auto& loc : locations) plan.configs.push_back(planar_phase(scene.grid, scene.u_bs, loc, scene.kappa()));
        plan.locations = std::move(locations);
        plan.validate(scene.grid);
        return plan;
    }
};

/// Default measurement set: the full-size grid over the coverage area with
/// spacing chosen for users about 10 m from the surface.
inline MeasurementPlan default_plan(const Scene& scene, Scheme scheme = Scheme::Diagonal, double r = 10.0) {
    return MeasurementPlan::planar_beams(measurement_grid(scene.coverage, r, scene.grid), scene, scheme);
}

struct PowerTable {
    std::size_t rows = 0;  // K
    std::size_t cols = 0;  // M
    Scheme scheme = Scheme::Diagonal;
    std::vector<double> values;  // one per plan entry, plan order

    double at(std::size_t k, std::size_t m) const {
        if (scheme == Scheme::Diagonal) {
            if (k != m) throw std::out_of_range("PowerTable: off-diagonal entry not measured");
            return values.at(k);
        }
        return values.at(k * cols + m);
    }
};

/// Evaluates every plan entry for arbitrary surfaces. The phasors of the M
/// configurations are cached, so one table costs K*N complex exponentials
/// plus one complex matrix product.
class PowerModel {
public:
    PowerModel(const MeasurementPlan& plan, const Scene& scene) : plan_(plan), scene_(scene) {
        scene.validate();
        plan.validate(scene.grid);
        const std::size_t n = scene.grid.size();
        phasors_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(plan.m()));
        for (std::size_t m = 0; m < plan.m(); ++m)
            for (std::size_t i = 0; i < n; ++i)
                phasors_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m)) = std::polar(1.0, plan.configs[m].phases[i]);
        for (const auto& loc : plan.locations) {
            const double a = scene.cascade_amplitude(loc);
            alpha_.push_back(a);
            scale_.push_back(scene.coherent_max(loc));
        }
    }

    const MeasurementPlan& plan() const { return plan_; }
    const Scene& scene() const { return scene_; }
    std::size_t entry_count() const { return plan_.entry_count(); }

    /// Coherent maximum at the location of each entry.
    double entry_scale(std::size_t i) const { return scale_[plan_.entry(i).first]; }

    /// Complex received fields, one per plan entry (before |.|^2).
    template <class Surface>
    std::vector<cplx> fields(const Surface& surface) const {
        const auto pos = element_positions(scene_.grid, surface);
        const auto n = static_cast<Eigen::Index>(pos.size());
        const auto kk = static_cast<Eigen::Index>(plan_.k());
        const double kappa = scene_.kappa();
        std::vector<double> d_bs(pos.size());
        for (std::size_t i = 0; i < pos.size(); ++i) {
            d_bs[i] = distance(pos[i], scene_.u_bs);
            if (!(d_bs[i] > 0.0)) throw std::invalid_argument("PowerModel: zero distance to BS");
        }
        // paths(k, n) = exp(j kappa D_kn)
        Eigen::MatrixXcd paths(kk, n);
        for (Eigen::Index k = 0; k < kk; ++k) {
            const Vec3& u = plan_.locations[static_cast<std::size_t>(k)];
            for (Eigen::Index i = 0; i < n; ++i) {
                const double d_mu = distance(pos[static_cast<std::size_t>(i)], u);
                if (!(d_mu > 0.0)) throw std::invalid_argument("PowerModel: zero distance to user");
                paths(k, i) = std::polar(1.0, kappa * (d_bs[static_cast<std::size_t>(i)] + d_mu));
            }
        }
        std::vector<cplx> out(plan_.entry_count());
        if (plan_.scheme == Scheme::Diagonal) {
            for (Eigen::Index k = 0; k < kk; ++k)
                out[static_cast<std::size_t>(k)] = alpha_[static_cast<std::size_t>(k)] * paths.row(k).transpose().cwiseProduct(phasors_.col(k)).sum();
        } else {
            const Eigen::MatrixXcd f = paths * phasors_;
            const auto mm = static_cast<Eigen::Index>(plan_.m());
            for (Eigen::Index k = 0; k < kk; ++k)
                for (Eigen::Index m = 0; m < mm; ++m)
                    out[static_cast<std::size_t>(k * mm + m)] = alpha_[static_cast<std::size_t>(k)] * f(k, m);
        }
        return out;
    }

    /// Power table; with `noise_power` > 0 circular Gaussian noise is added to
    /// each field before squaring.
    template <class Surface>
    PowerTable table(const Surface& surface, double noise_power = 0.0, Rng* rng = nullptr) const {
        PowerTable t{plan_.k(), plan_.m(), plan_.scheme, {}};
        const auto f = fields(surface);
        t.values.resize(f.size());
        std::normal_distribution<double> gauss(0.0, std::sqrt(noise_power / 2.0));
        for (std::size_t i = 0; i < f.size(); ++i) {
            cplx e = f[i];
            if (noise_power > 0.0) {
                if (!rng) throw std::invalid_argument("PowerModel: noisy table needs an rng");
                const double re = gauss(*rng);
                const double im = gauss(*rng);
                e += cplx{re, im};
            }
            t.values[i] = std::norm(e);
        }
        return t;
    }

    /// Entries divided by the coherent maximum of their location.
    template <class Surface>
    std::vector<double> normalized(const Surface& surface) const {
        auto f = fields(surface);
        std::vector<double> out(f.size());
        for (std::size_t i = 0; i < f.size(); ++i) out[i] = std::norm(f[i]) / entry_scale(i);
        return out;
    }

private:
    MeasurementPlan plan_;
    Scene scene_;
    Eigen::MatrixXcd phasors_;  // (n, m) = exp(j w_mn)
    std::vector<double> alpha_;
    std::vector<double> scale_;
};

template <class Surface>
PowerTable build_power_table(const Surface& coeffs, const MeasurementPlan& plan, const Scene& scene) {
    return PowerModel(plan, scene).table(coeffs);
}

/// Power-table CSV: one row per location, one column per configuration;
/// unmeasured cells are left empty.
inline void write_power_table_csv(std::ostream& os, const PowerTable& t, const MeasurementPlan& plan) {
    os << "k,x,y,z";
    for (std::size_t m = 0; m < t.cols; ++m) os << ",omega_" << (m + 1);
    os << '\n';
    os.precision(17);
    for (std::size_t k = 0; k < t.rows; ++k) {
        const auto& u = plan.locations[k];
        os << (k + 1) << ',' << u.x << ',' << u.y << ',' << u.z;
        for (std::size_t m = 0; m < t.cols; ++m) {
            os << ',';
            if (t.scheme == Scheme::Full || k == m) os << t.at(k, m);
        }
        os << '\n';
    }
}

struct MeasuredTable {
    MeasurementPlan plan;
    PowerTable table;
};

/// Parses the CSV written by write_power_table_csv. Configurations are taken
/// to be the planar beams toward the listed locations, so M must equal K.
inline MeasuredTable read_power_table_csv(std::istream& is, const Scene& scene) {
    const auto split_csv = [](const std::string& line) {
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            const auto c = line.find(',', start);
            cells.push_back(line.substr(start, c == std::string::npos ? std::string::npos : c - start));
            if (c == std::string::npos) break;
            start = c + 1;
        }
        return cells;
    };
    const auto number = [](const std::string& cell) {
        double v = 0.0;
        const auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (cell.empty() || ec != std::errc{} || p != cell.data() + cell.size() || !std::isfinite(v))
            throw FormatError("power table: bad number '" + cell + "'");
        return v;
    };

    std::string line;
    if (!std::getline(is, line)) throw FormatError("power table: empty file");
    const auto header = split_csv(line);
    if (header.size() < 5 || header[0] != "k" || header[1] != "x" || header[2] != "y" || header[3] != "z")
        throw FormatError("power table: header must start with k,x,y,z,omega_1");
    const std::size_t m = header.size() - 4;
    for (std::size_t j = 0; j < m; ++j)
        if (header[4 + j] != "omega_" + std::to_string(j + 1)) throw FormatError("power table: bad column '" + header[4 + j] + "'");

    std::vector<Vec3> locations;
    std::vector<std::vector<std::string>> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto cells = split_csv(line);
        if (cells.size() != header.size()) throw FormatError("power table: row with wrong column count");
        if (number(cells[0]) != static_cast<double>(rows.size() + 1)) throw FormatError("power table: rows out of order");
        locations.push_back({number(cells[1]), number(cells[2]), number(cells[3])});
        rows.push_back(std::move(cells));
    }
    if (rows.size() != m) throw FormatError("power table: expected one configuration per location (M == K)");

    bool any_off_diagonal = false;
    for (std::size_t k = 0; k < m; ++k)
        for (std::size_t j = 0; j < m; ++j)
            if (k != j && !rows[k][4 + j].empty()) any_off_diagonal = true;
    const Scheme scheme = any_off_diagonal ? Scheme::Full : Scheme::Diagonal;

    MeasuredTable out{MeasurementPlan::planar_beams(std::move(locations), scene, scheme), {}};
    out.table = {m, m, scheme, {}};
    for (std::size_t i = 0; i < out.plan.entry_count(); ++i) {
        const auto [k, j] = out.plan.entry(i);
        const double v = number(rows[k][4 + j]);
        if (v < 0.0) throw FormatError("power table: negative power");
        out.table.values.push_back(v);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Datasets

namespace dataset_flags {
inline constexpr std::uint32_t full_scheme = 1u << 0;
inline constexpr std::uint32_t with_coords = 1u << 1;
inline constexpr std::uint32_t noisy = 1u << 2;
inline constexpr std::uint32_t power_db = 1u << 3;
}  // namespace dataset_flags

struct Dataset {
    std::size_t input_dim = 0;
    std::uint32_t flags = 0;
    std::vector<double> inputs;  // size() x input_dim, row-major
    std::vector<SurfaceCoeffs> targets;

    std::size_t size() const { return targets.size(); }
    std::span<const double> input(std::size_t i) const { return {inputs.data() + i * input_dim, input_dim}; }
    std::span<double> input(std::size_t i) { return {inputs.data() + i * input_dim, input_dim}; }

    Dataset subset(std::span<const std::size_t> idx) const {
        Dataset out{input_dim, flags, {}, {}};
        out.inputs.reserve(idx.size() * input_dim);
        for (auto i : idx) {
            auto row = input(i);
            out.inputs.insert(out.inputs.end(), row.begin(), row.end());
            out.targets.push_back(targets[i]);
        }
        return out;
    }

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct DatasetOptions {
    bool include_coords = false;  // append (x, y) of every measurement location
    bool noisy = false;           // AWGN on each received field
    bool power_db = false;        // powers as 10 log10(P / 1 W) instead of watts

    std::uint32_t flags(Scheme scheme) const {
        return (scheme == Scheme::Full ? dataset_flags::full_scheme : 0u) | (include_coords ? dataset_flags::with_coords : 0u) |
               (noisy ? dataset_flags::noisy : 0u) | (power_db ? dataset_flags::power_db : 0u);
    }

    static DatasetOptions from_flags(std::uint32_t f) {
        return {(f & dataset_flags::with_coords) != 0, (f & dataset_flags::noisy) != 0, (f & dataset_flags::power_db) != 0};
    }
};

inline std::size_t feature_dim(const MeasurementPlan& plan, const DatasetOptions& opts) {
    return plan.entry_count() + (opts.include_coords ? 2 * plan.k() : 0);
}

/// Network input for one power table: the plan entries (optionally in dB),
/// then the measurement coordinates if requested.
inline void measurement_features(const PowerTable& t, const MeasurementPlan& plan, const DatasetOptions& opts,
                                 std::span<double> out) {
    if (out.size() != feature_dim(plan, opts) || t.values.size() != plan.entry_count())
        throw std::invalid_argument("measurement_features: dimension mismatch");
    std::size_t j = 0;
    for (double p : t.values) out[j++] = opts.power_db ? 10.0 * std::log10(std::max(p, 1e-300)) : p;
    if (opts.include_coords) {
        for (const auto& u : plan.locations) {
            out[j++] = u.x;
            out[j++] = u.y;
        }
    }
}

inline std::vector<double> measurement_features(const PowerTable& t, const MeasurementPlan& plan, const DatasetOptions& opts) {
    std::vector<double> out(feature_dim(plan, opts));
    measurement_features(t, plan, opts, out);
    return out;
}

/// S samples with coefficients from sample_coeffs(sigma). Sample i uses the
/// substream (seed, i) so the result does not depend on the thread count.
inline Dataset generate_dataset(std::size_t count, double sigma, const MeasurementPlan& plan, const Scene& scene,
                                std::uint64_t seed, DatasetOptions opts = {}) {
    if (count < 1) throw std::invalid_argument("generate_dataset: need at least one sample");
    if (!(sigma >= 0.0)) throw std::invalid_argument("generate_dataset: sigma must be >= 0");
    const PowerModel model(plan, scene);
    Dataset ds;
    ds.input_dim = feature_dim(plan, opts);
    ds.flags = opts.flags(plan.scheme);
    ds.inputs.assign(count * ds.input_dim, 0.0);
    ds.targets.resize(count);
    const double noise = opts.noisy ? scene.noise_power() : 0.0;
    parallel_for(count, [&](std::size_t i) {
        Rng rng = substream(seed, i);
        const SurfaceCoeffs c = sample_coeffs(sigma, rng);
        measurement_features(model.table(c, noise, &rng), plan, opts, ds.input(i));
        ds.targets[i] = c;
    });
    return ds;
}

/// Per-dimension min-max scaling. Dimensions with max == min are degenerate
/// and map to 0.
struct MinMaxScaler {
    std::vector<double> min;
    std::vector<double> max;

    std::size_t dim() const { return min.size(); }
    bool degenerate(std::size_t j) const { return !(max[j] > min[j]); }

    static MinMaxScaler fit(const Dataset& ds) {
        if (ds.size() == 0) throw std::invalid_argument("MinMaxScaler: empty dataset");
        MinMaxScaler s;
        s.min.assign(ds.input_dim, std::numeric_limits<double>::infinity());
        s.max.assign(ds.input_dim, -std::numeric_limits<double>::infinity());
        for (std::size_t i = 0; i < ds.size(); ++i) {
            auto row = ds.input(i);
            for (std::size_t j = 0; j < ds.input_dim; ++j) {
                s.min[j] = std::min(s.min[j], row[j]);
                s.max[j] = std::max(s.max[j], row[j]);
            }
        }
        return s;
    }

    void transform(std::span<const double> x, std::span<double> out) const {
        if (x.size() != dim() || out.size() != dim()) throw std::invalid_argument("MinMaxScaler: dimension mismatch");
        for (std::size_t j = 0; j < dim(); ++j) out[j] = degenerate(j) ? 0.0 : (x[j] - min[j]) / (max[j] - min[j]);
    }

    std::vector<double> transform(std::span<const double> x) const {
        std::vector<double> out(x.size());
        transform(x, out);
        return out;
    }

    std::vector<double> inverse(std::span<const double> x) const {
        if (x.size() != dim()) throw std::invalid_argument("MinMaxScaler: dimension mismatch");
        std::vector<double> out(dim());
        for (std::size_t j = 0; j < dim(); ++j) out[j] = degenerate(j) ? min[j] : min[j] + x[j] * (max[j] - min[j]);
        return out;
    }

    Dataset apply(const Dataset& ds) const {
        Dataset out = ds;
        for (std::size_t i = 0; i < ds.size(); ++i) transform(ds.input(i), out.input(i));
        return out;
    }

    friend bool operator==(const MinMaxScaler&, const MinMaxScaler&) = default;
};

/// Scales `ds` by its own min/max. For train/val/test use, fit on the training
/// partition and apply the same scaler everywhere.
inline std::pair<Dataset, MinMaxScaler> normalize_minmax(const Dataset& ds) {
    auto scaler = MinMaxScaler::fit(ds);
    return {scaler.apply(ds), scaler};
}

struct Partition {
    Dataset train;
    Dataset validation;
    Dataset test;
};

struct SplitFractions {
    double train = 0.8;
    double validation = 0.1;
    double test = 0.1;
};

/// Shuffled disjoint split; validation and test get floor(f * S) samples and
/// the remainder goes to training.
inline Partition split(const Dataset& ds, std::uint64_t seed, SplitFractions f = {}) {
    if (std::abs(f.train + f.validation + f.test - 1.0) > 1e-9 || f.train < 0 || f.validation < 0 || f.test < 0)
        throw std::invalid_argument("split: fractions must be non-negative and sum to 1");
    if (ds.size() < 10) throw std::invalid_argument("split: need at least 10 samples");
    const std::size_t s = ds.size();
    const auto n_val = static_cast<std::size_t>(std::floor(f.validation * static_cast<double>(s) + 1e-9));
    const auto n_test = static_cast<std::size_t>(std::floor(f.test * static_cast<double>(s) + 1e-9));
    const std::size_t n_train = s - n_val - n_test;

    std::vector<std::size_t> idx(s);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng = substream(seed, 0, 0x5b17);
    for (std::size_t i = s - 1; i > 0; --i) std::swap(idx[i], idx[uniform_index(rng, i + 1)]);

    std::span<const std::size_t> all(idx);
    return {ds.subset(all.subspan(0, n_train)), ds.subset(all.subspan(n_train, n_val)),
            ds.subset(all.subspan(n_train + n_val, n_test))};
}

// File layout: "FRIS", u32 version, u64 S, u32 input_dim, u32 flags, then S
// records of input_dim + 5 f64 (inputs, then a_yy a_zz a_yz a_y a_z).
inline constexpr std::uint32_t dataset_version = 1;

inline void write_dataset(std::ostream& os, const Dataset& ds) {
    io::write_magic(os, "FRIS", 4);
    io::write_le<std::uint32_t>(os, dataset_version);
    io::write_le<std::uint64_t>(os, ds.size());
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(ds.input_dim));
    io::write_le<std::uint32_t>(os, ds.flags);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (double v : ds.input(i)) io::write_le(os, v);
        write_coeffs(os, ds.targets[i]);
    }
}

inline Dataset read_dataset(std::istream& is) {
    io::expect_magic(is, "FRIS", 4);
    if (io::read_le<std::uint32_t>(is) != dataset_version) throw FormatError("dataset: unsupported version");
    const auto s = io::read_le<std::uint64_t>(is);
    Dataset ds;
    ds.input_dim = io::read_le<std::uint32_t>(is);
    ds.flags = io::read_le<std::uint32_t>(is);
    if (ds.input_dim == 0 || ds.input_dim > (1u << 20) || s > (1ull << 32)) throw FormatError("dataset: implausible header");
    // Grow while reading so a corrupt count cannot trigger a huge allocation.
    for (std::uint64_t i = 0; i < s; ++i) {
        for (std::size_t j = 0; j < ds.input_dim; ++j) ds.inputs.push_back(io::read_le<double>(is));
        ds.targets.push_back(read_coeffs(is));
    }
    if (is.peek() != std::char_traits<char>::eof()) throw FormatError("dataset: trailing bytes");
    return ds;
}

inline void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_dataset(os, ds);
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

inline Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path.string());
    return read_dataset(is);
}

// Scaler file: min[0..D) then max[0..D) as f64, no header.
inline void write_scaler(std::ostream& os, const MinMaxScaler& s) {
    for (double v : s.min) io::write_le(os, v);
    for (double v : s.max) io::write_le(os, v);
}

inline MinMaxScaler read_scaler(std::istream& is, std::size_t dim) {
    MinMaxScaler s;
    s.min.resize(dim);
    s.max.resize(dim);
    for (auto& v : s.min) v = io::read_le<double>(is);
    for (auto& v : s.max) v = io::read_le<double>(is);
    return s;
}

/// FNV-1a over the serialized dataset; printed by the CLI for quick
/// reproducibility checks.
inline std::uint64_t checksum(const Dataset& ds) {
    std::ostringstream os(std::ios::binary);
    write_dataset(os, ds);
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : os.str()) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace flexris
