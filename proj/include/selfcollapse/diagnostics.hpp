#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "errors.hpp"
#include "grid.hpp"
#include "wavefunction.hpp"

namespace selfcollapse {

/// Probability flux j = Im(conj(psi) dpsi/dx) at the node nearest x_b,
/// central difference; positive means rightward.
inline double flux_at(const WaveFunction& psi, double x_b)
{
    const Grid& g = psi.grid;
    if (!(x_b > g.x_min && x_b < g.x_max)) throw ConfigError("flux_at: boundary outside the domain");
    const std::size_t j = g.nearest(x_b);
    if (j < 2 || j + 3 > g.n_points) throw ConfigError("flux_at: boundary too close to a wall");
    return std::imag(std::conj(psi[j]) * (psi[j + 1] - psi[j - 1])) / (2.0 * g.dx);
}

struct RegionProbability {
    double p_in = 0.0;
    double p_out = 0.0;
};

/// Split of ||psi||^2 into the part inside `region` and the rest. Boundary
/// nodes count half on each side, which makes d(p_in)/dt equal the
/// central-difference boundary fluxes exactly in the semi-discrete system.
inline RegionProbability region_probability(const WaveFunction& psi, const Interval& region)
{
    const NodeRange r = node_range(psi.grid, region);
    RegionProbability p;
    p.p_in = region_sum(psi.grid, r, [&](std::size_t j) { return std::norm(psi[j]); });
    p.p_out = psi.norm_squared() - p.p_in;
    return p;
}

struct FluxSample {
    double t = 0.0;
    double j_left = 0.0;
    double j_right = 0.0;
    double p_in = 0.0;
    double p_out = 0.0;
    double q_bound = 0.0;
    /// Number of collapses applied before this sample; samples from different
    /// segments are separated by a collapse.
    std::size_t segment = 0;

    /// Net probability current into the region.
    [[nodiscard]] double inflow() const { return j_left - j_right; }
};

inline FluxSample flux_sample(const WaveFunction& psi, const Interval& region, double t, double q_bound,
                              std::size_t segment)
{
    FluxSample s;
    s.t = t;
    const NodeRange r = node_range(psi.grid, region);
    s.j_left = flux_at(psi, psi.grid.x(r.lo));
    s.j_right = flux_at(psi, psi.grid.x(r.hi));
    const auto p = region_probability(psi, region);
    s.p_in = p.p_in;
    s.p_out = p.p_out;
    s.q_bound = q_bound;
    s.segment = segment;
    return s;
}

/// (p_in(b) - p_in(a))/dt - trapezoid mean of the net inflow.
inline double continuity_pair_residual(const FluxSample& a, const FluxSample& b)
{
    const double dt = b.t - a.t;
    if (!(dt > 0.0)) throw ConfigError("continuity: samples must be strictly increasing in time");
    return (b.p_in - a.p_in) / dt - 0.5 * (a.inflow() + b.inflow());
}

/// Max |residual| of dp_in/dt = j_left - j_right over consecutive samples of
/// one collapse-free segment with uniform spacing.
inline double continuity_residual(std::span<const FluxSample> samples)
{
    if (samples.size() < 2) throw ConfigError("continuity: need at least two samples");
    const double spacing = samples[1].t - samples[0].t;
    double worst = 0.0;
    for (std::size_t i = 1; i < samples.size(); ++i) {
        if (samples[i].segment != samples[0].segment) {
            throw ConfigError("continuity: samples straddle a collapse event");
        }
        const double d = samples[i].t - samples[i - 1].t;
        if (std::abs(d - spacing) > 1e-9 * std::max(1.0, std::abs(spacing))) {
            throw ConfigError("continuity: sample spacing is not uniform");
        }
        worst = std::max(worst, std::abs(continuity_pair_residual(samples[i - 1], samples[i])));
    }
    return worst;
}

}  // namespace selfcollapse
