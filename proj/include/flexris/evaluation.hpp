#pragma once

// End-to-end comparison of the flat-surface design, the learned estimate and
// the perfect-knowledge design, and the Monte Carlo sweeps built on it.

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "flexris/channel.hpp"
#include "flexris/estimator_nn.hpp"
#include "flexris/geometry.hpp"
#include "flexris/measurement.hpp"
#include "flexris/parallel.hpp"
#include "flexris/phase_design.hpp"
#include "flexris/rng.hpp"

namespace flexris {

enum class DesignKind { Planar, Proposed, Oracle };

inline constexpr std::array<DesignKind, 3> all_designs{DesignKind::Planar, DesignKind::Proposed, DesignKind::Oracle};

inline const char* to_string(DesignKind d) {
    switch (d) {
        case DesignKind::Planar: return "planar";
        case DesignKind::Proposed: return "proposed";
        case DesignKind::Oracle: return "oracle";
    }
    return "?";
}

/// Learned estimator in deployment: measures the scene with the training
/// plan, builds the same features the model was trained on and predicts.
class ProposedEstimator {
public:
    ProposedEstimator(SurfaceModel model, MeasurementPlan plan, const Scene& scene)
        : model_(std::move(model)), power_(plan, scene), features_(DatasetOptions::from_flags(model_.dataset_flags)) {
        const bool full = (model_.dataset_flags & dataset_flags::full_scheme) != 0;
        if (full != (plan.scheme == Scheme::Full))
            throw std::invalid_argument("ProposedEstimator: plan scheme differs from the model's training data");
        if (feature_dim(plan, features_) != model_.params.input_dim())
            throw std::invalid_argument("ProposedEstimator: plan does not match the model input");
    }

    /// Uses the default measurement grid with the scheme recorded in the model.
    ProposedEstimator(SurfaceModel model, const Scene& scene, double r = 10.0)
        : ProposedEstimator(model, default_plan(scene, (model.dataset_flags & dataset_flags::full_scheme) ? Scheme::Full : Scheme::Diagonal, r),
                            scene) {}

    SurfaceCoeffs estimate(const SurfaceCoeffs& truth, Rng* noise_rng = nullptr) const {
        const double noise = features_.noisy ? power_.scene().noise_power() : 0.0;
        const auto table = power_.table(truth, noise, noise_rng);
        return model_.predict(measurement_features(table, power_.plan(), features_));
    }

    const SurfaceModel& model() const { return model_; }
    const MeasurementPlan& plan() const { return power_.plan(); }

private:
    SurfaceModel model_;
    PowerModel power_;
    DatasetOptions features_;
};

struct EvalOptions {
    bool rician = false;  // add scattered paths to the BS-RIS and RIS-MU links
};

/// Received power through BS -> RIS -> MU with Rician links built from the
/// channel module; the blocked direct link is omitted.
inline double rician_received_power(const SurfaceCoeffs& truth, const PhaseConfig& phase, const Vec3& u_mu,
                                    const Scene& scene, Rng& rng) {
    const auto ris = element_positions(scene.grid, truth);
    const double kappa = scene.kappa();
    const std::array<Vec3, 1> bs{scene.u_bs};
    const std::array<Vec3, 1> mu{u_mu};
    const double c_t = pathloss_amplitude(scene.u_bs.norm(), scene.radio, scene.radio.pathloss_exponent.bs_ris);
    const double c_r = pathloss_amplitude(u_mu.norm(), scene.radio, scene.radio.pathloss_exponent.ris_mu);
    const auto scat_t = draw_scatterers(scene.rician, c_t, rng);
    const auto scat_r = draw_scatterers(scene.rician, c_r, rng);
    const ChannelMatrix h_t = rician_channel(los_channel(ris, bs, c_t, kappa), nlos_channel(scat_t, ris, bs, kappa),
                                             scene.rician.k_factor.bs_ris);
    const ChannelMatrix h_r = rician_channel(los_channel(mu, ris, c_r, kappa), nlos_channel(scat_r, mu, ris, kappa),
                                             scene.rician.k_factor.ris_mu);
    ComplexVector gamma(static_cast<Eigen::Index>(phase.size()));
    for (std::size_t n = 0; n < phase.size(); ++n) gamma(static_cast<Eigen::Index>(n)) = std::polar(1.0, phase.phases[n]);
    const cplx y = std::sqrt(scene.radio.tx_power) * (h_r * gamma.asDiagonal() * h_t)(0, 0);
    return std::norm(y);
}

/// Phase profile of `design` aimed at `u_design`.
inline PhaseConfig design_phase(DesignKind design, const SurfaceCoeffs& truth, const Vec3& u_design, const Scene& scene,
                                const ProposedEstimator* proposed, Rng* noise_rng = nullptr) {
    switch (design) {
        case DesignKind::Planar: return planar_phase(scene.grid, scene.u_bs, u_design, scene.kappa());
        case DesignKind::Oracle: return geometry_aware_phase(scene.grid, truth, scene.u_bs, u_design, scene.kappa());
        case DesignKind::Proposed:
            if (!proposed) throw std::invalid_argument("eval: the proposed design needs a trained model");
            return geometry_aware_phase(scene.grid, proposed->estimate(truth, noise_rng), scene.u_bs, u_design, scene.kappa());
    }
    throw std::invalid_argument("eval: unknown design");
}

/// Received SNR (dB) at the true u_mu on the true surface, for a design
/// aimed at `u_design` (defaults to u_mu).
inline double eval_snr(const SurfaceCoeffs& truth, DesignKind design, const Vec3& u_mu, const Scene& scene,
                       double noise_power, const ProposedEstimator* proposed = nullptr,
                       std::optional<Vec3> u_design = std::nullopt, const EvalOptions& opts = {}, Rng* rng = nullptr) {
    if (!(noise_power > 0.0)) throw std::invalid_argument("eval_snr: noise power must be positive");
    const auto phase = design_phase(design, truth, u_design.value_or(u_mu), scene, proposed, rng);
    double p = 0.0;
    if (opts.rician) {
        if (!rng) throw std::invalid_argument("eval_snr: Rician evaluation needs an rng");
        p = rician_received_power(truth, phase, u_mu, scene, *rng);
    } else {
        p = received_power(truth, phase, u_mu, scene);
    }
    return linear_to_db(p / noise_power);
}

struct SweepPoint {
    double value = 0.0;
    std::array<double, 3> mean_db{};    // indexed like all_designs
    std::array<double, 3> stderr_db{};
};

struct SweepResult {
    std::string variable;  // "sigma" or "epsilon"
    std::vector<SweepPoint> points;
    std::size_t trials = 0;
    std::uint64_t seed = 0;

    double mean(std::size_t point, DesignKind d) const { return points.at(point).mean_db[static_cast<std::size_t>(d)]; }

    /// First sweep value at which `a` has a higher mean than `b`, if any.
    std::optional<double> crossover(DesignKind a, DesignKind b) const {
        for (const auto& p : points)
            if (p.mean_db[static_cast<std::size_t>(a)] > p.mean_db[static_cast<std::size_t>(b)]) return p.value;
        return std::nullopt;
    }
};

/// Per-trial SNRs for every design at one sweep value, [trial][design].
using TrialTable = std::vector<std::array<double, 3>>;

struct SweepSetup {
    Scene scene;
    const ProposedEstimator* proposed = nullptr;  // null: proposed rows are skipped (NaN)
    std::size_t trials = 50;
    std::uint64_t seed = 2026;
    EvalOptions eval;
};

namespace detail {
// Stream salts: trial t always draws its surface, target and location error
// from the same substreams, whatever the sweep variable.
inline constexpr std::uint64_t salt_surface = 0x5af;
inline constexpr std::uint64_t salt_target = 0x7a6;
inline constexpr std::uint64_t salt_error = 0xe66;
inline constexpr std::uint64_t salt_channel = 0xc4a;

inline SweepPoint aggregate(double value, const TrialTable& t) {
    SweepPoint p;
    p.value = value;
    for (std::size_t d = 0; d < 3; ++d) {
        double sum = 0.0;
        for (const auto& row : t) sum += row[d];
        const double mean = sum / static_cast<double>(t.size());
        double ss = 0.0;
        for (const auto& row : t) ss += (row[d] - mean) * (row[d] - mean);
        p.mean_db[d] = mean;
        p.stderr_db[d] = t.size() > 1 ? std::sqrt(ss / static_cast<double>(t.size() - 1) / static_cast<double>(t.size())) : 0.0;
    }
    return p;
}
}  // namespace detail

/// Trials at geometry spread `sigma` and location error bound `epsilon`.
inline TrialTable run_trials(const SweepSetup& setup, double sigma, double epsilon) {
    if (setup.trials < 1) throw std::invalid_argument("sweep: need at least one trial");
    if (!(epsilon >= 0.0)) throw std::invalid_argument("sweep: location error bound must be >= 0");
    const Scene& scene = setup.scene;
    const double noise = scene.noise_power();
    TrialTable out(setup.trials);
    parallel_for(setup.trials, [&](std::size_t t) {
        Rng surface_rng = substream(setup.seed, t, detail::salt_surface);
        Rng target_rng = substream(setup.seed, t, detail::salt_target);
        Rng error_rng = substream(setup.seed, t, detail::salt_error);
        const SurfaceCoeffs truth = sample_coeffs(sigma, surface_rng);
        const Vec3 u_mu = scene.coverage.sample(target_rng);
        const Vec3 u_est{u_mu.x + uniform(error_rng, -1.0, 1.0) * epsilon, u_mu.y + uniform(error_rng, -1.0, 1.0) * epsilon, u_mu.z};
        for (std::size_t d = 0; d < 3; ++d) {
            const DesignKind kind = all_designs[d];
            if (kind == DesignKind::Proposed && !setup.proposed) {
                out[t][d] = std::numeric_limits<double>::quiet_NaN();
                continue;
            }
            Rng channel_rng = substream(setup.seed, t, detail::salt_channel);
            out[t][d] = eval_snr(truth, kind, u_mu, scene, noise, setup.proposed, u_est, setup.eval, &channel_rng);
        }
    });
    return out;
}

inline SweepResult sweep_sigma(std::span<const double> sigmas, const SweepSetup& setup) {
    SweepResult r{"sigma", {}, setup.trials, setup.seed};
    for (double s : sigmas) r.points.push_back(detail::aggregate(s, run_trials(setup, s, 0.0)));
    return r;
}

inline SweepResult sweep_location_error(std::span<const double> epsilons, double sigma, const SweepSetup& setup) {
    SweepResult r{"epsilon", {}, setup.trials, setup.seed};
    for (double e : epsilons) r.points.push_back(detail::aggregate(e, run_trials(setup, sigma, e)));
    return r;
}

/// CSV rows (sweep_value, design, mean_snr_db, stderr_db, trials).
inline void write_sweep_csv(std::ostream& os, const SweepResult& r) {
    os << "sweep_value,design,mean_snr_db,stderr_db,trials\n";
    os.precision(10);
    for (const auto& p : r.points)
        for (std::size_t d = 0; d < 3; ++d) {
            if (std::isnan(p.mean_db[d])) continue;
            os << p.value << ',' << to_string(all_designs[d]) << ',' << p.mean_db[d] << ',' << p.stderr_db[d] << ',' << r.trials << '\n';
        }
}

/// CSV with epoch, raw train/validation MSE and both normalized by epoch 1.
inline void write_training_curves(std::ostream& os, const TrainHistory& h) {
    if (h.epochs() == 0) throw std::invalid_argument("export_training_curves: empty history");
    os << "epoch,train_mse,val_mse,train_mse_norm,val_mse_norm\n";
    os.precision(12);
    for (std::size_t e = 0; e < h.epochs(); ++e)
        os << (e + 1) << ',' << h.train_mse[e] << ',' << h.val_mse[e] << ',' << h.train_mse[e] / h.train_mse[0] << ','
           << h.val_mse[e] / h.val_mse[0] << '\n';
}

inline void export_training_curves(const TrainHistory& h, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_training_curves(os, h);
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace flexris
