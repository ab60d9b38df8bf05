#pragma once

// RIS phase profiles: the flat-surface focusing rule and its curvature-aware
// counterpart evaluated at the true (or estimated) element positions.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "flexris/binary_io.hpp"
#include "flexris/geometry.hpp"

namespace flexris {

/// Wraps an angle into [-pi, pi).
inline double wrap_phase(double phi) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double w = std::fmod(phi + std::numbers::pi, two_pi);
    if (w < 0.0) w += two_pi;
    w -= std::numbers::pi;
    return w >= std::numbers::pi ? -std::numbers::pi : w;
}

/// Per-element phase shifts in canonical element order; reflection
/// amplitudes are fixed at one.
struct PhaseConfig {
    int n_y = 0;
    int n_z = 0;
    std::vector<double> phases;

    std::size_t size() const { return phases.size(); }

    PhaseConfig offset(double delta) const {
        PhaseConfig out = *this;
        for (auto& p : out.phases) p = wrap_phase(p + delta);
        return out;
    }

    friend bool operator==(const PhaseConfig&, const PhaseConfig&) = default;
};

namespace detail {
inline PhaseConfig focusing_phase(const RisGrid& grid, const std::vector<Vec3>& positions, const Vec3& u_bs,
                                  const Vec3& u_mu, double kappa) {
    PhaseConfig cfg{grid.n_y, grid.n_z, {}};
    cfg.phases.reserve(positions.size());
    for (const auto& p : positions) {
        const double d_bs = distance(p, u_bs);
        const double d_mu = distance(p, u_mu);
        if (!(d_bs > 0.0) || !(d_mu > 0.0)) throw std::invalid_argument("phase design: target coincides with an element");
        cfg.phases.push_back(wrap_phase(-kappa * d_bs - kappa * d_mu));
    }
    return cfg;
}
}  // namespace detail

/// Focuses the BS -> RIS -> MU path at u_mu as if the surface were flat.
inline PhaseConfig planar_phase(const RisGrid& grid, const Vec3& u_bs, const Vec3& u_mu, double kappa) {
    return detail::focusing_phase(grid, planar_positions(grid), u_bs, u_mu, kappa);
}

/// Same focusing rule applied to the element positions on surface `coeffs`.
inline PhaseConfig geometry_aware_phase(const RisGrid& grid, const SurfaceCoeffs& coeffs, const Vec3& u_bs,
                                        const Vec3& u_mu, double kappa) {
    return detail::focusing_phase(grid, element_positions(grid, coeffs), u_bs, u_mu, kappa);
}

// File layout: "FRISPHS\0", u32 N_y, u32 N_z, then N f64 phases.
inline constexpr char phase_magic[8] = {'F', 'R', 'I', 'S', 'P', 'H', 'S', '\0'};

inline void write_phase_config(std::ostream& os, const PhaseConfig& cfg) {
    if (cfg.size() != static_cast<std::size_t>(cfg.n_y) * static_cast<std::size_t>(cfg.n_z))
        throw std::invalid_argument("PhaseConfig: size does not match N_y x N_z");
    io::write_magic(os, phase_magic, 8);
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(cfg.n_y));
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(cfg.n_z));
    for (double p : cfg.phases) io::write_le(os, p);
}

inline PhaseConfig read_phase_config(std::istream& is) {
    io::expect_magic(is, phase_magic, 8);
    PhaseConfig cfg;
    cfg.n_y = static_cast<int>(io::read_le<std::uint32_t>(is));
    cfg.n_z = static_cast<int>(io::read_le<std::uint32_t>(is));
    if (cfg.n_y <= 0 || cfg.n_z <= 0 || cfg.n_y > (1 << 16) || cfg.n_z > (1 << 16))
        throw FormatError("PhaseConfig: implausible grid size");
    cfg.phases.resize(static_cast<std::size_t>(cfg.n_y) * static_cast<std::size_t>(cfg.n_z));
    for (auto& p : cfg.phases) {
        p = io::read_le<double>(is);
        if (!std::isfinite(p)) throw FormatError("PhaseConfig: non-finite phase");
    }
    return cfg;
}

inline void save_phase_config(const std::filesystem::path& path, const PhaseConfig& cfg) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_phase_config(os, cfg);
}

inline PhaseConfig load_phase_config(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path.string());
    return read_phase_config(is);
}

}  // namespace flexris
