#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "propagator.hpp"
#include "rng.hpp"
#include "spectral.hpp"

namespace selfcollapse {

/// Breakdown times: spacings drawn uniformly from [tau(1-jitter), tau(1+jitter)].
struct CollapseSchedule {
    double tau = 0.2;
    double jitter = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t trajectory = 0;
};

struct ScheduleTimes {
    std::vector<double> times;
    std::optional<std::string> warning;
};

inline ScheduleTimes schedule_times(const CollapseSchedule& s, double t_max)
{
    if (!(s.tau > 0.0)) throw ConfigError("schedule: tau must be > 0");
    if (!(t_max > 0.0)) throw ConfigError("schedule: t_max must be > 0");
    if (!(s.jitter >= 0.0 && s.jitter < 1.0)) throw ConfigError("schedule: jitter must be in [0, 1)");
    ScheduleTimes out;
    if (s.tau >= t_max) {
        out.warning = "schedule: tau >= t_max, no breakdowns scheduled";
        return out;
    }
    const double slack = 1e-12 * t_max;
    if (s.jitter == 0.0) {
        for (std::size_t k = 1;; ++k) {
            const double t = static_cast<double>(k) * s.tau;
            if (t > t_max + slack) break;
            out.times.push_back(std::min(t, t_max));
        }
        return out;
    }
    CounterRng rng(s.seed, s.trajectory, kScheduleStream);
    double t = 0.0;
    for (;;) {
        t += s.tau * (1.0 + s.jitter * (2.0 * rng.next() - 1.0));
        if (t > t_max + slack) break;
        out.times.push_back(std::min(t, t_max));
    }
    return out;
}

enum class CollapseKind { Detection, Complementary };

struct CollapseEvent {
    double time = 0.0;
    CollapseKind kind = CollapseKind::Complementary;
    std::size_t state_index = 0;      // 0-based bound-state index (detection)
    double occupancy = 0.0;           // q = sum |c_i|^2 before the transition
    double energy_before = 0.0;
    double photon_energy = 0.0;       // E_before - E_k (detection); > 0 is emission
    double energy_delta = 0.0;        // E_before - E_after (complementary)
    double complementary_norm = 0.0;  // ||psi_c|| discarded by renormalisation
    double post_occupancy = 0.0;      // occupancy of the post-collapse state
    bool forced = false;              // complementary part vanished; detection forced
};

/// Born partition: index k with sum_{i<k} w_i <= u < sum_{i<=k} w_i, or
/// nothing when u falls beyond the total weight.
inline std::optional<std::size_t> born_select(std::span<const double> weights, double u)
{
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        if (u < acc) return i;
    }
    return std::nullopt;
}

inline std::vector<double> born_weights(const BoundAmplitudes& a)
{
    std::vector<double> w;
    w.reserve(a.c.size());
    for (const auto& c : a.c) w.push_back(std::norm(c));
    return w;
}

struct CollapseOutcome {
    WaveFunction state;
    CollapseEvent event;
    std::vector<std::string> anomalies;
};

inline constexpr double kNormTolerance = 1e-6;
inline constexpr double kDegenerateComplementary = 1e-12;

/// Instantaneous transition of psi: to bound state k with probability
/// |c_k|^2, otherwise to the renormalised complementary wave function.
/// `detector` is the Hamiltonian whose bound states form `basis`; it prices
/// the energy ledger.
inline CollapseOutcome collapse_step(const BoundBasis& basis, const HamiltonianMatrix& detector,
                                     const WaveFunction& psi_in, double u)
{
    if (!(u >= 0.0 && u < 1.0)) throw ConfigError("collapse_step: u must be in [0, 1)");
    CollapseOutcome out;
    WaveFunction psi = psi_in;
    const double n2 = psi.norm_squared();
    if (std::abs(n2 - 1.0) > kNormTolerance) {
        out.anomalies.push_back("collapse: pre-collapse norm^2 " + show(n2) + " renormalised");
        psi.normalize();
    }

    const auto amps = project_bound(basis, psi);
    const auto weights = born_weights(amps);
    auto& ev = out.event;
    ev.occupancy = amps.occupancy();
    ev.energy_before = energy_expectation(detector, psi);

    auto detect = [&](std::size_t k) {
        ev.kind = CollapseKind::Detection;
        ev.state_index = k;
        ev.photon_energy = ev.energy_before - basis.energies[k];
        ev.post_occupancy = 1.0;
        out.state = bound_wavefunction(basis, k);
    };

    if (auto k = born_select(weights, u)) {
        detect(*k);
        return out;
    }

    WaveFunction rest = complementary(basis, psi);
    const double rest2 = rest.norm_squared();
    ev.complementary_norm = std::sqrt(rest2);
    if (rest2 < kDegenerateComplementary) {
        out.anomalies.push_back("collapse: complementary norm^2 " + show(rest2) +
                                " below threshold; forced detection");
        if (weights.empty()) throw NumericalError("collapse: zero state with empty bound basis");
        ev.forced = true;
        const auto k = born_select(weights, u * ev.occupancy);
        detect(k.value_or(weights.size() - 1));
        return out;
    }
    rest.scale(1.0 / ev.complementary_norm);
    ev.kind = CollapseKind::Complementary;
    ev.post_occupancy = project_bound(basis, rest).occupancy();
    ev.energy_delta = ev.energy_before - energy_expectation(detector, rest);
    out.state = std::move(rest);
    return out;
}

}  // namespace selfcollapse
