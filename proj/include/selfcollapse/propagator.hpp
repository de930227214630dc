#pragma once

#include <cmath>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "grid.hpp"
#include "wavefunction.hpp"

namespace selfcollapse {

struct PacketSpec {
    double x0 = -25.0;
    double sigma = 2.0;
    double k0 = 1.5;
};

/// Normalised Gaussian packet exp(-(x-x0)^2/(4 sigma^2)) exp(i k0 x).
/// With `keep_clear_of` set, the packet centre must sit at least 5 sigma
/// away from that interval.
inline WaveFunction gaussian_packet(const PacketSpec& spec, const Grid& grid,
                                    std::optional<Interval> keep_clear_of = std::nullopt)
{
    if (!(spec.sigma > 0.0)) throw ConfigError("packet: sigma must be > 0");
    const double reach = 5.0 * spec.sigma;
    if (spec.x0 - reach < grid.x_min || spec.x0 + reach > grid.x_max) {
        throw ConfigError("packet: centre must be at least 5 sigma from the domain walls");
    }
    if (keep_clear_of) {
        const Interval r = *keep_clear_of;
        if (!(spec.x0 + reach <= r.left || spec.x0 - reach >= r.right)) {
            throw ConfigError("packet: centre must be at least 5 sigma from the detector region");
        }
    }
    WaveFunction psi(grid);
    const double inv4s2 = 1.0 / (4.0 * spec.sigma * spec.sigma);
    for (std::size_t j = 1; j + 1 < grid.n_points; ++j) {
        const double x = grid.x(j);
        const double d = x - spec.x0;
        psi[j] = std::exp(-d * d * inv4s2) * std::polar(1.0, spec.k0 * x);
    }
    psi.normalize();
    return psi;
}

/// dx * Re sum conj(psi) (H psi) over interior nodes.
inline double energy_expectation(const HamiltonianMatrix& h, const WaveFunction& psi)
{
    if (psi.size() != h.order() || psi.grid.dx != h.dx) {
        throw ConfigError("energy_expectation: grid mismatch");
    }
    const auto hpsi = apply_hamiltonian<complex>(h, psi.amplitudes);
    complex s{};
    for (std::size_t j = 0; j < psi.size(); ++j) s += std::conj(psi[j]) * hpsi[j];
    return std::real(s) * h.dx;
}

/// Crank-Nicolson propagator: (I + i dt H/2) psi' = (I - i dt H/2) psi. The
/// left-hand operator is factored once; each step is one tridiagonal sweep.
class CrankNicolson {
public:
    CrankNicolson(const HamiltonianMatrix& h, double dt) : dt_(dt), diag_(h.diagonal), off_(h.off_diagonal)
    {
        if (!(dt > 0.0)) throw ConfigError("propagator: dt must be > 0");
        const std::size_t n = h.order();
        if (n < 3) throw ConfigError("propagator: grid too small");
        const double alpha = 0.5 * dt;
        const complex b{0.0, alpha * off_};
        const std::size_t m = n - 2;
        cprime_.resize(m);
        inv_denom_.resize(m);
        for (std::size_t i = 0; i < m; ++i) {
            const complex a{1.0, alpha * diag_[i + 1]};
            const complex denom = i == 0 ? a : a - b * cprime_[i - 1];
            if (std::abs(denom) < 1e-14) {
                throw NumericalError("propagator: singular tridiagonal solve");
            }
            inv_denom_[i] = 1.0 / denom;
            cprime_[i] = b * inv_denom_[i];
        }
        b_ = b;
        const double e_max = std::max(std::abs(h.spectral_min()), std::abs(h.spectral_max()));
        if (dt * e_max > 0.5) {
            warning_ = "propagator: dt*|E_max| = " + show(dt * e_max) +
                       " exceeds 0.5; high-energy components are phase-inaccurate";
        }
    }

    [[nodiscard]] double dt() const { return dt_; }
    [[nodiscard]] const std::optional<std::string>& accuracy_warning() const { return warning_; }

    void step(WaveFunction& psi) const
    {
        std::vector<complex> scratch;
        step(psi, scratch);
    }

    /// Same as step(psi) with a caller-owned buffer, so one factorisation can
    /// be shared read-only by many trajectories.
    void step(WaveFunction& psi, std::vector<complex>& work) const
    {
        const std::size_t n = diag_.size();
        if (psi.size() != n) throw ConfigError("propagator: grid mismatch");
        const std::size_t m = n - 2;
        work.resize(m);
        const double alpha = 0.5 * dt_;
        const complex mi_alpha{0.0, -alpha};
        for (std::size_t i = 0; i < m; ++i) {
            const std::size_t j = i + 1;
            complex nb = (j > 1 ? psi[j - 1] : complex{}) + (j + 2 < n ? psi[j + 1] : complex{});
            work[i] = psi[j] + mi_alpha * (diag_[j] * psi[j] + off_ * nb);
        }
        work[0] *= inv_denom_[0];
        for (std::size_t i = 1; i < m; ++i) work[i] = (work[i] - b_ * work[i - 1]) * inv_denom_[i];
        for (std::size_t i = m - 1; i-- > 0;) work[i] -= cprime_[i] * work[i + 1];
        for (std::size_t i = 0; i < m; ++i) psi[i + 1] = work[i];
        psi.enforce_walls();
    }

private:
    double dt_;
    std::vector<double> diag_;
    double off_;
    complex b_{};
    std::vector<complex> cprime_;
    std::vector<complex> inv_denom_;
    std::optional<std::string> warning_;
};

/// One Crank-Nicolson step; builds the factorisation each call.
inline WaveFunction step(const HamiltonianMatrix& h, const WaveFunction& psi, double dt)
{
    WaveFunction out = psi;
    CrankNicolson(h, dt).step(out);
    return out;
}

}  // namespace selfcollapse
