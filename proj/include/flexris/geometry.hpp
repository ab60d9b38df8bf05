#pragma once

// Surface model of a conformal RIS: a height field x = g(y, z) over the
// y-z aperture, plus the element lattice that sits on it.

#include <array>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <stdexcept>
#include <utility>
#include <vector>

#include "flexris/binary_io.hpp"
#include "flexris/rng.hpp"

namespace flexris {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    friend Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
    friend Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
    friend Vec3 operator*(double s, const Vec3& a) { return {s * a.x, s * a.y, s * a.z}; }
    friend bool operator==(const Vec3&, const Vec3&) = default;

    double norm() const { return std::sqrt(x * x + y * y + z * z); }
    bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

inline double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

/// Quadratic surface x = a_yy y^2 + a_zz z^2 + a_yz y z + a_y y + a_z z.
/// The all-zero value is the planar surface.
struct SurfaceCoeffs {
    double a_yy = 0.0;
    double a_zz = 0.0;
    double a_yz = 0.0;
    double a_y = 0.0;
    double a_z = 0.0;

    static constexpr std::size_t size = 5;

    std::array<double, 5> to_array() const { return {a_yy, a_zz, a_yz, a_y, a_z}; }
    static SurfaceCoeffs from_array(const std::array<double, 5>& v) { return {v[0], v[1], v[2], v[3], v[4]}; }

    double operator[](std::size_t i) const { return to_array()[i]; }

    SurfaceCoeffs scaled(double t) const { return {t * a_yy, t * a_zz, t * a_yz, t * a_y, t * a_z}; }

    bool finite() const {
        for (double v : to_array())
            if (!std::isfinite(v)) return false;
        return true;
    }

    friend bool operator==(const SurfaceCoeffs&, const SurfaceCoeffs&) = default;
};

inline const std::array<const char*, 5>& coeff_names() {
    static const std::array<const char*, 5> names{"a_yy", "a_zz", "a_yz", "a_y", "a_z"};
    return names;
}

inline double surface_height(const SurfaceCoeffs& c, double y, double z) {
    return c.a_yy * y * y + c.a_zz * z * z + c.a_yz * y * z + c.a_y * y + c.a_z * z;
}

/// Truncated Taylor expansion of the surface of arbitrary total order.
/// Keys are exponent pairs (m_y, m_z); the constant term is excluded since
/// it only translates the whole array.
class PolySurface {
public:
    using Exponents = std::pair<int, int>;

    explicit PolySurface(int max_total_order = 2) : max_order_(max_total_order) {
        if (max_total_order < 0) throw std::invalid_argument("PolySurface: negative total order");
    }

    PolySurface(int max_total_order, std::map<Exponents, double> coeffs) : PolySurface(max_total_order) {
        for (const auto& [e, v] : coeffs) set(e.first, e.second, v);
    }

    static PolySurface from_quadratic(const SurfaceCoeffs& c) {
        return PolySurface(2, {{{2, 0}, c.a_yy}, {{0, 2}, c.a_zz}, {{1, 1}, c.a_yz}, {{1, 0}, c.a_y}, {{0, 1}, c.a_z}});
    }

    void set(int m_y, int m_z, double value) {
        if (m_y < 0 || m_z < 0) throw std::invalid_argument("PolySurface: negative exponent");
        if (m_y + m_z > max_order_) throw std::invalid_argument("PolySurface: exponent sum exceeds total order");
        if (m_y + m_z == 0) throw std::invalid_argument("PolySurface: constant term is not part of the model");
        coeffs_[{m_y, m_z}] = value;
    }

    int max_total_order() const { return max_order_; }
    const std::map<Exponents, double>& coeffs() const { return coeffs_; }

    /// Number of free coefficients, i.e. (M+1)(M+2)/2 minus the constant.
    static int parameter_count(int max_total_order) { return (max_total_order + 1) * (max_total_order + 2) / 2 - 1; }

private:
    int max_order_;
    std::map<Exponents, double> coeffs_;
};

inline double surface_height(const PolySurface& s, double y, double z) {
    double x = 0.0;
    for (const auto& [e, a] : s.coeffs()) x += a * std::pow(y, e.first) * std::pow(z, e.second);
    return x;
}

inline double poly_surface_height(const PolySurface& s, double y, double z) { return surface_height(s, y, z); }

/// Element lattice on the y-z plane, centred at the origin.
struct RisGrid {
    int n_y = 40;
    int n_z = 10;
    double d_y = 0.0;
    double d_z = 0.0;

    RisGrid() = default;
    RisGrid(int ny, int nz, double dy, double dz) : n_y(ny), n_z(nz), d_y(dy), d_z(dz) { validate(); }

    void validate() const {
        if (n_y <= 0 || n_z <= 0) throw std::invalid_argument("RisGrid: element counts must be positive");
        if (!(d_y > 0.0) || !(d_z > 0.0)) throw std::invalid_argument("RisGrid: spacings must be positive");
    }

    std::size_t size() const { return static_cast<std::size_t>(n_y) * static_cast<std::size_t>(n_z); }
    double length_y() const { return n_y * d_y; }
    double length_z() const { return n_z * d_z; }

    /// Canonical index: row-major over (i_y, i_z) with i_z fastest.
    std::size_t index(int iy, int iz) const { return static_cast<std::size_t>(iy) * n_z + static_cast<std::size_t>(iz); }

    double y_of(int iy) const { return (iy - 0.5 * (n_y - 1)) * d_y; }
    double z_of(int iz) const { return (iz - 0.5 * (n_z - 1)) * d_z; }
};

/// Flat-projection element positions u = (g(y,z), y, z) in canonical order.
template <class Surface>
std::vector<Vec3> element_positions(const RisGrid& grid, const Surface& surface) {
    grid.validate();
    std::vector<Vec3> out;
    out.reserve(grid.size());
    for (int iy = 0; iy < grid.n_y; ++iy) {
        const double y = grid.y_of(iy);
        for (int iz = 0; iz < grid.n_z; ++iz) {
            const double z = grid.z_of(iz);
            out.push_back({surface_height(surface, y, z), y, z});
        }
    }
    return out;
}

inline std::vector<Vec3> planar_positions(const RisGrid& grid) { return element_positions(grid, SurfaceCoeffs{}); }

/// Quadratic terms ~ U(0, sigma), linear terms ~ U(-sigma/10, sigma/10).
inline SurfaceCoeffs sample_coeffs(double sigma, Rng& rng) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("sample_coeffs: sigma must be >= 0");
    SurfaceCoeffs c;
    c.a_yy = uniform(rng, 0.0, sigma);
    c.a_zz = uniform(rng, 0.0, sigma);
    c.a_yz = uniform(rng, 0.0, sigma);
    c.a_y = uniform(rng, -sigma / 10.0, sigma / 10.0);
    c.a_z = uniform(rng, -sigma / 10.0, sigma / 10.0);
    return c;
}

inline void write_coeffs(std::ostream& os, const SurfaceCoeffs& c) {
    for (double v : c.to_array()) io::write_le(os, v);
}

inline SurfaceCoeffs read_coeffs(std::istream& is) {
    std::array<double, 5> v{};
    for (auto& x : v) x = io::read_le<double>(is);
    return SurfaceCoeffs::from_array(v);
}

}  // namespace flexris
