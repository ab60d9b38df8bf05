#pragma once

// Direct surface estimation by nonlinear least squares on a power table.
//
// Residuals are measured powers minus modelled powers, each divided by the
// coherent maximum at its location so that near and far users weigh alike.
// The solver is Levenberg-Marquardt with Marquardt diagonal scaling and a
// central-difference Jacobian, restarted from several points because the
// phase-wrapped cost surface is multimodal.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "flexris/geometry.hpp"
#include "flexris/measurement.hpp"
#include "flexris/parallel.hpp"
#include "flexris/rng.hpp"

namespace flexris {

class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct NlsOptions {
    SurfaceCoeffs init{};
    int max_iterations = 100;
    double damping_init = 1e-3;
    double damping_up = 10.0;
    double damping_down = 10.0;
    double cost_tolerance = 1e-9;  // relative cost decrease that counts as stalled
    double step_tolerance = 1e-13;  // max |delta coeff|
    double cost_floor = 1e-30;      // absolute cost treated as an exact fit
    double fd_step_quadratic = 1e-6;
    double fd_step_linear = 1e-7;
    int multistart = 8;
    double prior_sigma = 0.8;  // sigma of the prior the extra starts are drawn from
    int prescreen = 256;       // if > 0, rank this many prior draws by cost and start from the best
    std::uint64_t seed = 0x4e4c53;

    void validate() const {
        if (max_iterations < 0) throw std::invalid_argument("NlsOptions: negative iteration limit");
        if (!(damping_init > 0) || !(damping_up > 1) || !(damping_down > 1))
            throw std::invalid_argument("NlsOptions: damping must be positive with up/down factors > 1");
        if (!(cost_tolerance > 0) || !(step_tolerance > 0) || !(fd_step_quadratic > 0) || !(fd_step_linear > 0))
            throw std::invalid_argument("NlsOptions: tolerances and steps must be positive");
        if (multistart < 1) throw std::invalid_argument("NlsOptions: need at least one start");
        if (prescreen < 0) throw std::invalid_argument("NlsOptions: negative prescreen count");
    }

    std::array<double, 5> fd_steps() const {
        return {fd_step_quadratic, fd_step_quadratic, fd_step_quadratic, fd_step_linear, fd_step_linear};
    }
};

struct NlsRun {
    SurfaceCoeffs start;
    SurfaceCoeffs coeffs;
    double cost = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
    bool failed = false;  // non-finite cost encountered
    std::vector<double> cost_trace;  // cost after every accepted step, starting with the initial cost
};

struct NlsResult {
    SurfaceCoeffs coeffs;
    double cost = 0.0;
    int iterations = 0;
    bool converged = false;
    /// Two or more starts reached the same (minimal) cost at different coefficients.
    bool ambiguous = false;
    std::vector<NlsRun> runs;
};

/// Normalized residual vector (measured - model) / coherent max.
inline std::vector<double> nls_residuals(const SurfaceCoeffs& c, const PowerTable& table, const PowerModel& model) {
    if (table.values.size() != model.entry_count()) throw std::invalid_argument("nls: table does not match plan");
    auto pred = model.normalized(c);
    for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = table.values[i] / model.entry_scale(i) - pred[i];
    return pred;
}

inline double nls_cost(const SurfaceCoeffs& c, const PowerTable& table, const PowerModel& model) {
    double s = 0.0;
    for (double r : nls_residuals(c, table, model)) s += r * r;
    return s;
}

inline double nls_cost(const SurfaceCoeffs& c, const PowerTable& table, const MeasurementPlan& plan, const Scene& scene) {
    return nls_cost(c, table, PowerModel(plan, scene));
}

/// Central-difference Jacobian of the residual vector (entries x 5).
inline Eigen::MatrixXd nls_jacobian(const SurfaceCoeffs& c, const PowerTable& table, const PowerModel& model,
                                    const std::array<double, 5>& steps) {
    const auto base = c.to_array();
    Eigen::MatrixXd jac(static_cast<Eigen::Index>(model.entry_count()), 5);
    for (int p = 0; p < 5; ++p) {
        auto plus = base, minus = base;
        plus[p] += steps[p];
        minus[p] -= steps[p];
        const auto rp = nls_residuals(SurfaceCoeffs::from_array(plus), table, model);
        const auto rm = nls_residuals(SurfaceCoeffs::from_array(minus), table, model);
        for (std::size_t i = 0; i < rp.size(); ++i)
            jac(static_cast<Eigen::Index>(i), p) = (rp[i] - rm[i]) / (2.0 * steps[p]);
    }
    return jac;
}

/// Gradient of nls_cost assembled from the solver's Jacobian: 2 J^T r.
inline std::array<double, 5> nls_gradient(const SurfaceCoeffs& c, const PowerTable& table, const PowerModel& model,
                                          const NlsOptions& opts = {}) {
    const auto r = nls_residuals(c, table, model);
    const auto jac = nls_jacobian(c, table, model, opts.fd_steps());
    const Eigen::Map<const Eigen::VectorXd> rv(r.data(), static_cast<Eigen::Index>(r.size()));
    const Eigen::VectorXd g = 2.0 * jac.transpose() * rv;
    return {g(0), g(1), g(2), g(3), g(4)};
}

/// One Levenberg-Marquardt descent from `start`.
inline NlsRun nls_local_fit(const SurfaceCoeffs& start, const PowerTable& table, const PowerModel& model,
                            const NlsOptions& opts) {
    NlsRun run;
    run.start = start;
    Eigen::Matrix<double, 5, 1> x;
    for (int p = 0; p < 5; ++p) x(p) = start[p];
    const auto to_coeffs = [](const Eigen::Matrix<double, 5, 1>& v) { return SurfaceCoeffs{v(0), v(1), v(2), v(3), v(4)}; };

    auto r = nls_residuals(start, table, model);
    double cost = 0.0;
    for (double v : r) cost += v * v;
    if (!std::isfinite(cost)) {
        run.failed = true;
        return run;
    }
    run.cost_trace.push_back(cost);
    double lambda = opts.damping_init;

    for (int it = 0; it < opts.max_iterations; ++it) {
        if (cost <= opts.cost_floor) {
            run.converged = true;
            break;
        }
        const auto jac = nls_jacobian(to_coeffs(x), table, model, opts.fd_steps());
        const Eigen::Map<const Eigen::VectorXd> rv(r.data(), static_cast<Eigen::Index>(r.size()));
        const Eigen::Matrix<double, 5, 5> jtj = jac.transpose() * jac;
        const Eigen::Matrix<double, 5, 1> grad = jac.transpose() * rv;

        bool accepted = false;
        while (lambda < 1e16) {
            Eigen::Matrix<double, 5, 5> a = jtj;
            for (int p = 0; p < 5; ++p) a(p, p) += lambda * std::max(jtj(p, p), 1e-12);
            const Eigen::Matrix<double, 5, 1> step = a.ldlt().solve(-grad);
            const Eigen::Matrix<double, 5, 1> x_new = x + step;
            auto r_new = nls_residuals(to_coeffs(x_new), table, model);
            double cost_new = 0.0;
            for (double v : r_new) cost_new += v * v;
            if (!std::isfinite(cost_new)) {
                run.failed = true;
                run.iterations = it + 1;
                return run;
            }
            if (cost_new < cost) {
                const double decrease = cost - cost_new;
                const double step_max = step.cwiseAbs().maxCoeff();
                x = x_new;
                r = std::move(r_new);
                cost = cost_new;
                run.cost_trace.push_back(cost);
                lambda = std::max(lambda / opts.damping_down, 1e-15);
                accepted = true;
                if (decrease <= opts.cost_tolerance * cost_new || step_max <= opts.step_tolerance) run.converged = true;
                break;
            }
            lambda *= opts.damping_up;
        }
        run.iterations = it + 1;
        if (!accepted) {
            // No descent direction left at any damping: a (local) minimum.
            run.converged = true;
            break;
        }
        if (run.converged) break;
    }
    if (cost <= opts.cost_floor) run.converged = true;
    run.coeffs = to_coeffs(x);
    run.cost = cost;
    return run;
}

/// Start points: opts.init first, then the lowest-cost prior draws out of
/// `prescreen` candidates (or plain prior draws when prescreen is 0).
inline std::vector<SurfaceCoeffs> nls_starts(const PowerTable& table, const PowerModel& model, const NlsOptions& opts) {
    std::vector<SurfaceCoeffs> starts{opts.init};
    const auto extra = static_cast<std::size_t>(opts.multistart - 1);
    if (extra == 0) return starts;
    Rng rng = substream(opts.seed, 0, 0x57a7);
    const std::size_t pool = std::max<std::size_t>(extra, static_cast<std::size_t>(opts.prescreen));
    std::vector<SurfaceCoeffs> candidates(pool);
    for (auto& c : candidates) c = sample_coeffs(opts.prior_sigma, rng);
    if (opts.prescreen > 0) {
        std::vector<double> costs(pool);
        parallel_for(pool, [&](std::size_t i) { costs[i] = nls_cost(candidates[i], table, model); });
        std::vector<std::size_t> order(pool);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return costs[a] < costs[b]; });
        for (std::size_t i = 0; i < extra; ++i) starts.push_back(candidates[order[i]]);
    } else {
        starts.insert(starts.end(), candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(extra));
    }
    return starts;
}

inline NlsResult nls_fit(const PowerTable& table, const PowerModel& model, const NlsOptions& opts = {}) {
    opts.validate();
    const auto starts = nls_starts(table, model, opts);
    NlsResult res;
    res.runs.resize(starts.size());
    parallel_for(starts.size(), [&](std::size_t i) { res.runs[i] = nls_local_fit(starts[i], table, model, opts); });

    const NlsRun* best = nullptr;
    for (const auto& r : res.runs)
        if (!r.failed && (!best || r.cost < best->cost)) best = &r;
    if (!best) throw SolverError("nls_fit: every start failed with a non-finite cost");

    res.coeffs = best->coeffs;
    res.cost = best->cost;
    res.iterations = best->iterations;
    res.converged = best->converged;
    const double cost_eq = std::max(1e-20, 1e-6 * best->cost);
    for (const auto& r : res.runs) {
        if (r.failed || &r == best || !(std::abs(r.cost - best->cost) <= cost_eq)) continue;
        double diff = 0.0;
        for (std::size_t p = 0; p < 5; ++p) diff = std::max(diff, std::abs(r.coeffs[p] - best->coeffs[p]));
        if (diff > 1e-3) res.ambiguous = true;
    }
    return res;
}

inline NlsResult nls_fit(const PowerTable& table, const MeasurementPlan& plan, const Scene& scene, const NlsOptions& opts = {}) {
    return nls_fit(table, PowerModel(plan, scene), opts);
}

}  // namespace flexris
