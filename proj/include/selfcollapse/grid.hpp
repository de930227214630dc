#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "errors.hpp"

namespace selfcollapse {

/// Closed position interval [left, right].
struct Interval {
    double left = 0.0;
    double right = 0.0;

    [[nodiscard]] double width() const { return right - left; }
    [[nodiscard]] bool contains(double x) const { return x >= left && x <= right; }
    [[nodiscard]] bool contains(const Interval& other) const
    {
        return other.left >= left && other.right <= right;
    }
};

/// Uniform 1D mesh, natural units (hbar = m = 1). Nodes x_j = x_min + j*dx;
/// the two end nodes are hard walls where the wave function vanishes.
struct Grid {
    double x_min = 0.0;
    double x_max = 0.0;
    std::size_t n_points = 0;
    double dx = 0.0;

    [[nodiscard]] double x(std::size_t j) const
    {
        return j + 1 == n_points ? x_max : x_min + static_cast<double>(j) * dx;
    }

    /// Index of the node closest to position xp, clamped to the grid.
    [[nodiscard]] std::size_t nearest(double xp) const
    {
        const double s = std::round((xp - x_min) / dx);
        if (s <= 0.0) return 0;
        return std::min(static_cast<std::size_t>(s), n_points - 1);
    }

    [[nodiscard]] bool same_as(const Grid& o) const
    {
        return n_points == o.n_points && dx == o.dx && x_min == o.x_min;
    }
};

inline constexpr std::size_t kMinGridPoints = 16;

inline Grid build_grid(double x_min, double x_max, std::size_t n_points)
{
    if (!(x_max > x_min)) {
        throw ConfigError("grid: x_max must be greater than x_min");
    }
    if (n_points < kMinGridPoints) {
        throw ConfigError("grid: n_points must be >= " + std::to_string(kMinGridPoints));
    }
    return Grid{x_min, x_max, n_points, (x_max - x_min) / static_cast<double>(n_points - 1)};
}

struct SquareWell {
    double depth = 10.0;
    double width = 2.0;
    double center = 0.0;
};

struct GaussianWell {
    double depth = 5.0;
    double sigma = 1.0;
    double center = 0.0;
};

/// Potential given directly as one sample per grid node.
struct CustomPotential {
    std::vector<double> samples;
};

using PotentialShape = std::variant<SquareWell, GaussianWell, CustomPotential>;

struct PotentialSpec {
    PotentialShape shape = SquareWell{};
    /// Explicit detector region; derived from the well support plus `margin` when empty.
    std::optional<Interval> detector_region;
    double margin = 2.0;
};

/// Sampled detector potential together with its support and detector region.
struct PotentialField {
    std::vector<double> values;
    Interval support;
    Interval detector_region;
    double depth = 0.0;  // max |V|
};

namespace detail {

// Fraction of the depth below which the potential counts as absent.
inline constexpr double kSupportFraction = 1e-6;

inline double gaussian_support_halfwidth(double sigma)
{
    return sigma * std::sqrt(2.0 * std::log(1.0 / kSupportFraction));
}

}  // namespace detail

/// Samples the detector well on the grid. Square-well edges that land on a
/// node take half the depth there.
inline PotentialField sample_potential(const PotentialSpec& spec, const Grid& grid)
{
    PotentialField field;
    field.values.assign(grid.n_points, 0.0);
    double char_width = 0.0;

    if (const auto* sq = std::get_if<SquareWell>(&spec.shape)) {
        if (!(sq->depth > 0.0)) throw ConfigError("potential: depth must be > 0");
        if (!(sq->width > 0.0)) throw ConfigError("potential: width must be > 0");
        const double half = 0.5 * sq->width;
        const double edge_tol = 1e-9 * grid.dx;
        for (std::size_t j = 0; j < grid.n_points; ++j) {
            const double r = std::abs(grid.x(j) - sq->center);
            if (r < half - edge_tol) {
                field.values[j] = -sq->depth;
            } else if (r <= half + edge_tol) {
                field.values[j] = -0.5 * sq->depth;
            }
        }
        field.depth = sq->depth;
        field.support = {sq->center - half, sq->center + half};
        char_width = sq->width;
    } else if (const auto* g = std::get_if<GaussianWell>(&spec.shape)) {
        if (!(g->depth > 0.0)) throw ConfigError("potential: depth must be > 0");
        if (!(g->sigma > 0.0)) throw ConfigError("potential: sigma must be > 0");
        for (std::size_t j = 0; j < grid.n_points; ++j) {
            const double u = (grid.x(j) - g->center) / g->sigma;
            field.values[j] = -g->depth * std::exp(-0.5 * u * u);
        }
        const double h = detail::gaussian_support_halfwidth(g->sigma);
        field.depth = g->depth;
        field.support = {g->center - h, g->center + h};
        char_width = 2.0 * g->sigma;
    } else {
        const auto& c = std::get<CustomPotential>(spec.shape);
        if (c.samples.size() != grid.n_points) {
            throw ConfigError("potential: custom samples length " + std::to_string(c.samples.size()) +
                              " does not match n_points " + std::to_string(grid.n_points));
        }
        double depth = 0.0;
        for (double v : c.samples) {
            if (!std::isfinite(v)) throw ConfigError("potential: custom samples must be finite");
            if (v > 0.0) throw ConfigError("potential: custom samples must be <= 0");
            depth = std::max(depth, -v);
        }
        if (!(depth > 0.0)) throw ConfigError("potential: custom samples are identically zero");
        const double thresh = detail::kSupportFraction * depth;
        std::size_t lo = grid.n_points, hi = 0;
        for (std::size_t j = 0; j < grid.n_points; ++j) {
            if (-c.samples[j] > thresh) {
                lo = std::min(lo, j);
                hi = j;
            }
        }
        field.values = c.samples;
        field.depth = depth;
        field.support = {grid.x(lo), grid.x(hi)};
        char_width = std::max(field.support.width(), grid.dx);
    }

    const double clearance = 5.0 * char_width;
    if (field.support.left - grid.x_min < clearance || grid.x_max - field.support.right < clearance) {
        throw ConfigError("potential: well support must stay at least 5 widths away from the domain walls");
    }

    if (spec.margin < 0.0) throw ConfigError("detector: margin must be >= 0");
    if (spec.detector_region) {
        const Interval r = *spec.detector_region;
        if (!(r.right > r.left)) throw ConfigError("detector: region must have right > left");
        if (!r.contains(field.support)) {
            throw ConfigError("detector: region must contain the well support");
        }
        field.detector_region = r;
    } else {
        field.detector_region = {field.support.left - spec.margin, field.support.right + spec.margin};
    }
    const Interval inner{grid.x(2), grid.x(grid.n_points - 3)};
    if (!inner.contains(field.detector_region)) {
        throw ConfigError("detector: region must lie strictly inside the domain");
    }
    return field;
}

/// Node-snapped view of an interval: nodes lo..hi, where the two end nodes
/// sit on the interval boundary and carry half weight in region sums.
struct NodeRange {
    std::size_t lo = 0;
    std::size_t hi = 0;
};

inline NodeRange node_range(const Grid& grid, const Interval& region)
{
    const NodeRange r{grid.nearest(region.left), grid.nearest(region.right)};
    if (r.hi <= r.lo) throw ConfigError("region: interval spans fewer than two grid nodes");
    return r;
}

/// dx * (f_lo/2 + sum_{lo<j<hi} f_j + f_hi/2) for f_j = weight(j).
template <class F>
double region_sum(const Grid& grid, NodeRange r, F&& weight)
{
    double s = 0.5 * (weight(r.lo) + weight(r.hi));
    for (std::size_t j = r.lo + 1; j < r.hi; ++j) s += weight(j);
    return s * grid.dx;
}

/// Static environment coupling added to the evolution Hamiltonian only. It
/// stands in for the detector/environment noise terms that make the incident
/// state leak into the detector's bound subspace.
struct CouplingSpec {
    enum class Kind { None, Gaussian };
    Kind kind = Kind::None;
    double strength = 0.0;
    double center = 0.0;
    double sigma = 1.0;
};

inline std::vector<double> sample_coupling(const CouplingSpec& spec, const Grid& grid)
{
    std::vector<double> v(grid.n_points, 0.0);
    if (spec.kind == CouplingSpec::Kind::None) return v;
    if (!(spec.sigma > 0.0)) throw ConfigError("coupling: sigma must be > 0");
    for (std::size_t j = 0; j < grid.n_points; ++j) {
        const double u = (grid.x(j) - spec.center) / spec.sigma;
        v[j] = spec.strength * std::exp(-0.5 * u * u);
    }
    const double edge = std::max(std::abs(v.front()), std::abs(v.back()));
    if (edge > 1e-12 * std::max(1.0, std::abs(spec.strength))) {
        throw ConfigError("coupling: potential must vanish at the domain walls");
    }
    return v;
}

/// Real symmetric tridiagonal H = -1/2 d^2/dx^2 + V on the 3-point stencil.
/// Only interior nodes 1..n-2 are dynamical; the end nodes are walls.
struct HamiltonianMatrix {
    std::vector<double> diagonal;  // 1/dx^2 + V_j
    double off_diagonal = 0.0;     // -1/(2 dx^2)
    double dx = 0.0;

    [[nodiscard]] std::size_t order() const { return diagonal.size(); }

    /// Gershgorin bounds on the interior spectrum.
    [[nodiscard]] double spectral_min() const
    {
        const auto [lo, hi] = std::minmax_element(diagonal.begin() + 1, diagonal.end() - 1);
        (void)hi;
        return *lo - 2.0 * std::abs(off_diagonal);
    }
    [[nodiscard]] double spectral_max() const
    {
        return *std::max_element(diagonal.begin() + 1, diagonal.end() - 1) + 2.0 * std::abs(off_diagonal);
    }
};

inline HamiltonianMatrix build_hamiltonian(const Grid& grid, std::span<const double> potential)
{
    if (potential.size() != grid.n_points) {
        throw ConfigError("hamiltonian: potential length does not match grid");
    }
    HamiltonianMatrix h;
    const double inv_dx2 = 1.0 / (grid.dx * grid.dx);
    h.diagonal.resize(grid.n_points);
    for (std::size_t j = 0; j < grid.n_points; ++j) h.diagonal[j] = inv_dx2 + potential[j];
    h.off_diagonal = -0.5 * inv_dx2;
    h.dx = grid.dx;
    return h;
}

/// out = H * in on interior nodes; wall entries of `out` are zero.
template <class T>
void apply_hamiltonian(const HamiltonianMatrix& h, std::span<const T> in, std::span<T> out)
{
    const std::size_t n = h.order();
    if (in.size() != n || out.size() != n) {
        throw ConfigError("hamiltonian: vector length does not match matrix order");
    }
    out[0] = T{};
    out[n - 1] = T{};
    for (std::size_t j = 1; j + 1 < n; ++j) {
        T nb = T{};
        if (j > 1) nb += in[j - 1];
        if (j + 2 < n) nb += in[j + 1];
        out[j] = h.diagonal[j] * in[j] + h.off_diagonal * nb;
    }
}

template <class T>
std::vector<T> apply_hamiltonian(const HamiltonianMatrix& h, std::span<const T> in)
{
    std::vector<T> out(in.size());
    apply_hamiltonian<T>(h, in, std::span<T>(out));
    return out;
}

}  // namespace selfcollapse
