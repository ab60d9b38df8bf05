#pragma once

// Near-field LOS / scattered / Rician channel synthesis and link budget.

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "flexris/geometry.hpp"
#include "flexris/rng.hpp"

namespace flexris {

using cplx = std::complex<double>;
using ChannelMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

inline constexpr double speed_of_light = 299792458.0;

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

/// Per-link exponent / K-factor triple, ordered (BS-MU, BS-RIS, RIS-MU).
struct LinkTriple {
    double bs_mu = 0.0;
    double bs_ris = 0.0;
    double ris_mu = 0.0;
};

struct RadioParams {
    double carrier_freq = 28e9;    // Hz
    double pathloss_ref_db = -61;  // power gain at ref_distance
    double ref_distance = 1.0;     // m
    LinkTriple pathloss_exponent{2.0, 2.0, 2.0};
    double tx_power = 1.0;  // W

    double wavelength() const { return speed_of_light / carrier_freq; }
    double wave_number() const { return 2.0 * std::numbers::pi / wavelength(); }

    void validate() const {
        if (!(carrier_freq > 0.0)) throw std::invalid_argument("RadioParams: carrier frequency must be positive");
        if (!(ref_distance > 0.0)) throw std::invalid_argument("RadioParams: reference distance must be positive");
        if (!(tx_power > 0.0)) throw std::invalid_argument("RadioParams: transmit power must be positive");
    }
};

struct Scatterer {
    Vec3 position;
    cplx amplitude;
};

/// Axis-aligned box; a zero extent along an axis is allowed.
struct Box {
    Vec3 lo;
    Vec3 hi;

    bool valid() const { return lo.x <= hi.x && lo.y <= hi.y && lo.z <= hi.z; }
    Vec3 sample(Rng& rng) const {
        return {uniform(rng, lo.x, hi.x), uniform(rng, lo.y, hi.y), uniform(rng, lo.z, hi.z)};
    }
};

struct RicianSpec {
    LinkTriple k_factor{0.0, 10.0, 10.0};
    int scatterer_count = 5;
    Box scatterer_region{{2.0, -10.0, -6.0}, {30.0, 25.0, 6.0}};

    void validate() const {
        if (k_factor.bs_mu < 0 || k_factor.bs_ris < 0 || k_factor.ris_mu < 0)
            throw std::invalid_argument("RicianSpec: K-factor must be non-negative");
        if (scatterer_count < 0) throw std::invalid_argument("RicianSpec: negative scatterer count");
        if (!scatterer_region.valid()) throw std::invalid_argument("RicianSpec: empty scatterer region");
    }
};

namespace detail {
inline double checked_distance(const Vec3& a, const Vec3& b) {
    const double d = distance(a, b);
    if (!(d > 0.0)) throw std::invalid_argument("channel: coincident points (zero distance)");
    return d;
}
}  // namespace detail

/// [H]_{m,n} = c0 exp(j kappa |u_rx,m - u_tx,n|).
inline ChannelMatrix los_channel(std::span<const Vec3> rx, std::span<const Vec3> tx, double c0, double kappa) {
    if (rx.empty() || tx.empty()) throw std::invalid_argument("los_channel: empty position list");
    ChannelMatrix h(static_cast<Eigen::Index>(rx.size()), static_cast<Eigen::Index>(tx.size()));
    for (std::size_t m = 0; m < rx.size(); ++m)
        for (std::size_t n = 0; n < tx.size(); ++n)
            h(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n)) =
                std::polar(c0, kappa * detail::checked_distance(rx[m], tx[n]));
    return h;
}

/// Near-field array response toward a point: [a]_n = exp(j kappa |u_n - u_s|).
inline ComplexVector steering_vector(std::span<const Vec3> positions, const Vec3& point, double kappa) {
    ComplexVector a(static_cast<Eigen::Index>(positions.size()));
    for (std::size_t n = 0; n < positions.size(); ++n)
        a(static_cast<Eigen::Index>(n)) = std::polar(1.0, kappa * detail::checked_distance(positions[n], point));
    return a;
}

/// Sum of rank-one single-bounce terms c_s a_rx(u_s) a_tx(u_s)^T.
inline ChannelMatrix nlos_channel(std::span<const Scatterer> scatterers, std::span<const Vec3> rx,
                                  std::span<const Vec3> tx, double kappa) {
    ChannelMatrix h = ChannelMatrix::Zero(static_cast<Eigen::Index>(rx.size()), static_cast<Eigen::Index>(tx.size()));
    for (const auto& s : scatterers) {
        if (!std::isfinite(s.amplitude.real()) || !std::isfinite(s.amplitude.imag()))
            throw std::invalid_argument("nlos_channel: non-finite scatterer amplitude");
        h += s.amplitude * steering_vector(rx, s.position, kappa) * steering_vector(tx, s.position, kappa).transpose();
    }
    return h;
}

inline ChannelMatrix rician_channel(const ChannelMatrix& los, const ChannelMatrix& nlos, double k_factor) {
    if (los.rows() != nlos.rows() || los.cols() != nlos.cols())
        throw std::invalid_argument("rician_channel: LOS/NLOS shape mismatch");
    if (!(k_factor >= 0.0)) throw std::invalid_argument("rician_channel: K-factor must be non-negative");
    if (std::isinf(k_factor)) return los;
    return std::sqrt(k_factor / (k_factor + 1.0)) * los + std::sqrt(1.0 / (k_factor + 1.0)) * nlos;
}

/// Amplitude of the rho (d0/d)^exponent power law.
inline double pathloss_amplitude(double dist, const RadioParams& radio, double exponent) {
    if (!(dist > 0.0)) throw std::invalid_argument("pathloss_amplitude: distance must be positive");
    return std::sqrt(db_to_linear(radio.pathloss_ref_db) * std::pow(radio.ref_distance / dist, exponent));
}

/// Thermal noise power in watts from bandwidth (Hz), density (dBm/Hz) and noise figure (dB).
inline double noise_power(double bandwidth, double density_dbm_hz = -174.0, double noise_figure_db = 6.0) {
    if (!(bandwidth > 0.0)) throw std::invalid_argument("noise_power: bandwidth must be positive");
    return db_to_linear(density_dbm_hz + 10.0 * std::log10(bandwidth) + noise_figure_db - 30.0);
}

/// Scatterers uniform in `region` with c_s ~ CN(0, c0^2 / count), which makes
/// E|H_nlos|_F^2 equal |H_los|_F^2 for a LOS amplitude c0.
inline std::vector<Scatterer> draw_scatterers(const RicianSpec& spec, double c0, Rng& rng) {
    std::vector<Scatterer> out;
    if (spec.scatterer_count == 0) return out;
    std::normal_distribution<double> gauss(0.0, c0 / std::sqrt(2.0 * spec.scatterer_count));
    for (int s = 0; s < spec.scatterer_count; ++s) {
        Vec3 p = spec.scatterer_region.sample(rng);
        const double re = gauss(rng);
        const double im = gauss(rng);
        out.push_back({p, {re, im}});
    }
    return out;
}

}  // namespace flexris
