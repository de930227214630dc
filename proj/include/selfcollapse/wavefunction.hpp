#pragma once

#include <cmath>
#include <complex>
#include <span>
#include <vector>

#include "errors.hpp"
#include "grid.hpp"

namespace selfcollapse {

using complex = std::complex<double>;

/// Complex amplitudes on a grid. The wall nodes are kept at zero.
struct WaveFunction {
    Grid grid;
    std::vector<complex> amplitudes;

    WaveFunction() = default;
    explicit WaveFunction(const Grid& g) : grid(g), amplitudes(g.n_points, complex{}) {}
    WaveFunction(const Grid& g, std::vector<complex> amps) : grid(g), amplitudes(std::move(amps))
    {
        if (amplitudes.size() != grid.n_points) {
            throw ConfigError("wave function: amplitude count does not match grid");
        }
    }

    [[nodiscard]] std::size_t size() const { return amplitudes.size(); }
    complex& operator[](std::size_t j) { return amplitudes[j]; }
    const complex& operator[](std::size_t j) const { return amplitudes[j]; }

    /// dx * sum |psi_j|^2
    [[nodiscard]] double norm_squared() const
    {
        double s = 0.0;
        for (const auto& a : amplitudes) s += std::norm(a);
        return s * grid.dx;
    }

    void scale(double f)
    {
        for (auto& a : amplitudes) a *= f;
    }

    void normalize()
    {
        const double n2 = norm_squared();
        if (!(n2 > 0.0)) throw NumericalError("wave function: cannot normalize a zero state");
        scale(1.0 / std::sqrt(n2));
    }

    void enforce_walls()
    {
        amplitudes.front() = complex{};
        amplitudes.back() = complex{};
    }
};

inline void require_same_grid(const Grid& a, const Grid& b, const char* what)
{
    if (!a.same_as(b)) throw ConfigError(std::string(what) + ": grid mismatch");
}

/// dx-weighted inner product <a|b>.
inline complex inner(const WaveFunction& a, const WaveFunction& b)
{
    require_same_grid(a.grid, b.grid, "inner product");
    complex s{};
    for (std::size_t j = 0; j < a.size(); ++j) s += std::conj(a[j]) * b[j];
    return s * a.grid.dx;
}

/// Centroid <x> of |psi|^2.
inline double mean_position(const WaveFunction& psi)
{
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < psi.size(); ++j) {
        const double p = std::norm(psi[j]);
        num += psi.grid.x(j) * p;
        den += p;
    }
    return den > 0.0 ? num / den : 0.0;
}

/// <p> = dx * sum Im(conj(psi) dpsi/dx) with central differences.
inline double mean_momentum(const WaveFunction& psi)
{
    double s = 0.0;
    for (std::size_t j = 1; j + 1 < psi.size(); ++j) {
        s += std::imag(std::conj(psi[j]) * (psi[j + 1] - psi[j - 1]));
    }
    return s * 0.5 / psi.norm_squared();
}

}  // namespace selfcollapse
