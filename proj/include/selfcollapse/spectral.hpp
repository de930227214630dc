#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "grid.hpp"
#include "wavefunction.hpp"

namespace selfcollapse {

namespace tridiag {

/// Number of eigenvalues of the symmetric tridiagonal (diag, constant off)
/// strictly below `shift`, by the Sturm sequence of LDL^T pivots.
inline std::size_t count_below(std::span<const double> diag, double off, double shift)
{
    const double off2 = off * off;
    const double tiny = std::numeric_limits<double>::min() * 1e4;
    std::size_t count = 0;
    double q = 1.0;
    for (std::size_t i = 0; i < diag.size(); ++i) {
        q = (diag[i] - shift) - (i == 0 ? 0.0 : off2 / q);
        if (q == 0.0) q = -tiny;
        if (q < 0.0) ++count;
    }
    return count;
}

/// k-th smallest eigenvalue (0-based) by bisection on [lo, hi].
inline double bisect_eigenvalue(std::span<const double> diag, double off, std::size_t k, double lo, double hi,
                                int max_iterations = 200)
{
    const double scale = std::max(std::abs(lo), std::abs(hi));
    const double tol = 4.0 * std::numeric_limits<double>::epsilon() * scale;
    for (int it = 0; it < max_iterations; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (hi - lo <= tol || mid == lo || mid == hi) return mid;
        if (count_below(diag, off, mid) > k) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    throw NumericalError("eigensolver: bisection did not converge");
}

/// LU factorisation with partial pivoting of a general tridiagonal matrix
/// (sub, main, super diagonals), same scheme as LAPACK dgttrf/dgttrs.
class PivotedLU {
public:
    PivotedLU(std::vector<double> sub, std::vector<double> main, std::vector<double> super, double pivot_floor)
        : dl_(std::move(sub)), d_(std::move(main)), du_(std::move(super)), du2_(d_.size(), 0.0),
          swapped_(d_.size(), false)
    {
        const std::size_t n = d_.size();
        for (std::size_t i = 0; i + 1 < n; ++i) {
            if (std::abs(d_[i]) >= std::abs(dl_[i])) {
                if (d_[i] == 0.0) d_[i] = pivot_floor;
                const double fact = dl_[i] / d_[i];
                dl_[i] = fact;
                d_[i + 1] -= fact * du_[i];
            } else {
                const double fact = d_[i] / dl_[i];
                d_[i] = dl_[i];
                dl_[i] = fact;
                const double temp = du_[i];
                du_[i] = d_[i + 1];
                d_[i + 1] = temp - fact * d_[i + 1];
                if (i + 2 < n) {
                    du2_[i] = du_[i + 1];
                    du_[i + 1] = -fact * du_[i + 1];
                }
                swapped_[i] = true;
            }
        }
        for (auto& v : d_) {
            if (v == 0.0) v = pivot_floor;
        }
    }

    void solve_in_place(std::span<double> b) const
    {
        const std::size_t n = d_.size();
        for (std::size_t i = 0; i + 1 < n; ++i) {
            if (!swapped_[i]) {
                b[i + 1] -= dl_[i] * b[i];
            } else {
                const double temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - dl_[i] * b[i];
            }
        }
        b[n - 1] /= d_[n - 1];
        if (n >= 2) b[n - 2] = (b[n - 2] - du_[n - 2] * b[n - 1]) / d_[n - 2];
        for (std::size_t i = n - 2; i-- > 0;) {
            b[i] = (b[i] - du_[i] * b[i + 1] - du2_[i] * b[i + 2]) / d_[i];
        }
    }

private:
    std::vector<double> dl_, d_, du_, du2_;
    std::vector<bool> swapped_;
};

}  // namespace tridiag

struct SpectralOptions {
    /// Max probability a bound state may keep outside the detector region.
    double localization_threshold = 1e-3;
    /// ||H phi - E phi|| / ||phi|| acceptance.
    double residual_tolerance = 1e-8;
    /// Eigenvalues closer than this are treated as a degeneracy error.
    double degeneracy_gap = 1e-10;
    int max_inverse_iterations = 8;
};

/// A negative-energy eigenpair dropped by the localization test.
struct RejectedState {
    double energy = 0.0;
    double outside_probability = 0.0;
};

/// Orthonormal (dx-weighted) bound eigenpairs of the detector Hamiltonian,
/// ascending in energy. States are real and zero on the walls.
struct BoundBasis {
    Grid grid;
    std::vector<double> energies;
    std::vector<std::vector<double>> states;
    std::vector<double> residuals;
    std::vector<double> outside_probability;
    std::vector<RejectedState> rejected;

    [[nodiscard]] std::size_t count() const { return energies.size(); }
};

namespace detail {

inline double dot_weighted(std::span<const double> a, std::span<const double> b, double dx)
{
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * b[j];
    return s * dx;
}

inline double eigen_residual(const HamiltonianMatrix& h, std::span<const double> v, double e)
{
    const auto hv = apply_hamiltonian<double>(h, v);
    double r2 = 0.0, v2 = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) {
        const double r = hv[j] - e * v[j];
        r2 += r * r;
        v2 += v[j] * v[j];
    }
    return std::sqrt(r2 / v2);
}

}  // namespace detail

/// All eigenpairs of H with E < 0 that are localized inside `region`.
inline BoundBasis bound_states(const HamiltonianMatrix& h, const Grid& grid, const Interval& region,
                               const SpectralOptions& opt = {})
{
    if (h.order() != grid.n_points || h.dx != grid.dx) {
        throw ConfigError("bound_states: Hamiltonian does not match grid");
    }
    const std::size_t n = grid.n_points;
    const std::span<const double> interior(h.diagonal.data() + 1, n - 2);
    const double off = h.off_diagonal;

    BoundBasis basis;
    basis.grid = grid;
    const std::size_t n_negative = tridiag::count_below(interior, off, 0.0);
    if (n_negative == 0) return basis;

    const double lo = h.spectral_min();
    std::vector<double> evals(n_negative);
    for (std::size_t k = 0; k < n_negative; ++k) {
        evals[k] = tridiag::bisect_eigenvalue(interior, off, k, lo, 0.0);
    }
    for (std::size_t k = 0; k + 1 < n_negative; ++k) {
        if (evals[k + 1] - evals[k] < opt.degeneracy_gap) {
            throw NumericalError("bound_states: eigenvalues " + show(evals[k]) + " and " +
                                 show(evals[k + 1]) + " are degenerate within tolerance");
        }
    }

    const double norm_t = std::max(std::abs(lo), std::abs(h.spectral_max()));
    const double pivot_floor = std::numeric_limits<double>::epsilon() * norm_t;
    const NodeRange range = node_range(grid, region);
    const std::size_t m = n - 2;

    for (std::size_t k = 0; k < n_negative; ++k) {
        const double e = evals[k];
        std::vector<double> sub(m - 1, off), super(m - 1, off), main(m);
        for (std::size_t i = 0; i < m; ++i) main[i] = interior[i] - e;
        const tridiag::PivotedLU lu(std::move(sub), std::move(main), std::move(super), pivot_floor);

        // Deterministic start vector with no special symmetry.
        std::vector<double> v(m);
        std::uint64_t state = 0x9E3779B97F4A7C15ULL + k;
        for (auto& x : v) {
            state = state * 6364136223846793005ULL + 1442695040888963407ULL;
            x = 0.5 + static_cast<double>(state >> 11) * 0x1.0p-53;
        }

        std::vector<double> full(n, 0.0);
        double residual = std::numeric_limits<double>::infinity();
        for (int it = 0; it < opt.max_inverse_iterations; ++it) {
            lu.solve_in_place(v);
            double nrm = 0.0;
            for (double x : v) nrm += x * x;
            nrm = std::sqrt(nrm);
            if (!std::isfinite(nrm) || nrm == 0.0) {
                throw NumericalError("bound_states: inverse iteration broke down");
            }
            for (auto& x : v) x /= nrm;
            std::copy(v.begin(), v.end(), full.begin() + 1);
            residual = detail::eigen_residual(h, full, e);
            if (it >= 1 && residual < opt.residual_tolerance) break;
        }
        if (!(residual < opt.residual_tolerance)) {
            throw NumericalError("bound_states: inverse iteration did not converge for E = " + show(e));
        }

        const double scale = 1.0 / std::sqrt(grid.dx);
        for (auto& x : full) x *= scale;

        // Orthogonalise against states already accepted (modified Gram-Schmidt).
        for (const auto& prev : basis.states) {
            const double c = detail::dot_weighted(prev, full, grid.dx);
            for (std::size_t j = 0; j < n; ++j) full[j] -= c * prev[j];
        }
        const double nrm = std::sqrt(detail::dot_weighted(full, full, grid.dx));
        for (auto& x : full) x /= nrm;

        // Sign: first node above 1e-3 of the peak is positive.
        const double peak = std::abs(*std::max_element(full.begin(), full.end(),
                                                       [](double a, double b) { return std::abs(a) < std::abs(b); }));
        for (double x : full) {
            if (std::abs(x) > 1e-3 * peak) {
                if (x < 0.0) {
                    for (auto& y : full) y = -y;
                }
                break;
            }
        }

        const double inside = region_sum(grid, range, [&](std::size_t j) { return full[j] * full[j]; });
        const double outside = std::max(0.0, 1.0 - inside);
        if (outside >= opt.localization_threshold) {
            basis.rejected.push_back({e, outside});
            continue;
        }
        basis.energies.push_back(e);
        basis.residuals.push_back(detail::eigen_residual(h, full, e));
        basis.outside_probability.push_back(outside);
        basis.states.push_back(std::move(full));
    }
    return basis;
}

/// Bound-subspace coefficients c_i = <phi_i|psi>.
struct BoundAmplitudes {
    std::vector<complex> c;

    [[nodiscard]] double occupancy() const
    {
        double s = 0.0;
        for (const auto& x : c) s += std::norm(x);
        return s;
    }
};

inline BoundAmplitudes project_bound(const BoundBasis& basis, const WaveFunction& psi)
{
    require_same_grid(basis.grid, psi.grid, "project_bound");
    BoundAmplitudes a;
    a.c.reserve(basis.count());
    for (const auto& phi : basis.states) {
        complex s{};
        for (std::size_t j = 0; j < psi.size(); ++j) s += phi[j] * psi[j];
        a.c.push_back(s * basis.grid.dx);
    }
    return a;
}

/// psi - sum_i c_i phi_i, not renormalised.
inline WaveFunction complementary(const BoundBasis& basis, const WaveFunction& psi)
{
    const auto a = project_bound(basis, psi);
    WaveFunction out = psi;
    for (std::size_t i = 0; i < basis.count(); ++i) {
        const auto& phi = basis.states[i];
        for (std::size_t j = 0; j < out.size(); ++j) out[j] -= a.c[i] * phi[j];
    }
    return out;
}

/// Bound state i as a wave function.
inline WaveFunction bound_wavefunction(const BoundBasis& basis, std::size_t i)
{
    WaveFunction w(basis.grid);
    for (std::size_t j = 0; j < w.size(); ++j) w[j] = basis.states.at(i)[j];
    return w;
}

}  // namespace selfcollapse
