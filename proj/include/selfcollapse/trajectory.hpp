#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "collapse.hpp"
#include "diagnostics.hpp"
#include "errors.hpp"
#include "grid.hpp"
#include "propagator.hpp"
#include "rng.hpp"
#include "spectral.hpp"

namespace selfcollapse {

enum class InitialState { Packet, Orthogonalized };
enum class EventDetail { Detections, All };

/// Every parameter of a run. Defaults are the standard scenario.
struct RunConfig {
    double x_min = -60.0;
    double x_max = 60.0;
    std::size_t n_points = 4801;

    PotentialSpec potential{SquareWell{10.0, 2.0, 0.0}, std::nullopt, 2.0};
    SpectralOptions spectral{};
    CouplingSpec coupling{CouplingSpec::Kind::Gaussian, 5.0, 0.3, 0.5};
    PacketSpec packet{-25.0, 2.0, 1.5};
    InitialState initial_state = InitialState::Packet;

    double tau = 0.2;  // 0 disables breakdowns
    double jitter = 0.0;
    std::optional<double> dt;  // default min(0.001, tau/20)
    double t_max = 40.0;
    std::size_t sample_every = 10;

    std::size_t n_trajectories = 2000;
    std::uint64_t seed = 12345;
    std::size_t threads = 0;  // 0 = hardware concurrency
    EventDetail events = EventDetail::Detections;

    std::vector<double> sweep_taus{0.01, 0.05, 0.2, 1.0};
    std::size_t fit_points = 3;

    [[nodiscard]] double effective_dt() const
    {
        if (dt) return *dt;
        return tau > 0.0 ? std::min(0.001, tau / 20.0) : 0.001;
    }
};

inline constexpr double kInitialOccupancyLimit = 1e-6;
inline constexpr double kWallDensityLimit = 1e-8;
inline constexpr std::size_t kWallBand = 5;
inline constexpr double kDriftLimit = 1e-6;

/// Read-only state shared by every trajectory of a run.
struct Scenario {
    RunConfig config;
    Grid grid;
    PotentialField potential;
    std::vector<double> coupling;
    HamiltonianMatrix detector;   // bound basis and energy ledger
    HamiltonianMatrix evolution;  // detector + environment coupling
    BoundBasis basis;
    double dt = 0.0;
    std::size_t n_steps = 0;
    std::size_t sample_every = 1;
    std::unique_ptr<CrankNicolson> propagator;
    WaveFunction initial;
    double packet_occupancy = 0.0;   // bound occupancy of the raw packet
    double initial_occupancy = 0.0;  // after optional orthogonalisation
    std::vector<std::string> warnings;

    [[nodiscard]] const Interval& region() const { return potential.detector_region; }
};

inline std::shared_ptr<const Scenario> prepare_scenario(const RunConfig& cfg)
{
    auto sc = std::make_shared<Scenario>();
    sc->config = cfg;
    sc->grid = build_grid(cfg.x_min, cfg.x_max, cfg.n_points);
    sc->potential = sample_potential(cfg.potential, sc->grid);
    sc->coupling = sample_coupling(cfg.coupling, sc->grid);
    sc->detector = build_hamiltonian(sc->grid, sc->potential.values);
    std::vector<double> v_total(sc->grid.n_points);
    for (std::size_t j = 0; j < v_total.size(); ++j) v_total[j] = sc->potential.values[j] + sc->coupling[j];
    sc->evolution = build_hamiltonian(sc->grid, v_total);
    sc->basis = bound_states(sc->detector, sc->grid, sc->region(), cfg.spectral);

    if (cfg.tau < 0.0) throw ConfigError("schedule: tau must be >= 0");
    if (!(cfg.t_max > 0.0)) throw ConfigError("time: t_max must be > 0");
    if (cfg.sample_every == 0) throw ConfigError("time: sample_every must be >= 1");
    sc->dt = cfg.effective_dt();
    if (!(sc->dt > 0.0)) throw ConfigError("time: dt must be > 0");
    sc->n_steps = static_cast<std::size_t>(std::llround(cfg.t_max / sc->dt));
    if (sc->n_steps == 0) throw ConfigError("time: t_max shorter than one step");
    sc->sample_every = cfg.sample_every;
    if (cfg.tau > 0.0) {
        const auto per_interval = static_cast<std::size_t>(std::max(1.0, std::floor(cfg.tau / sc->dt + 1e-9)));
        sc->sample_every = std::min(sc->sample_every, per_interval);
        if (cfg.tau / sc->dt < 20.0 - 1e-9) {
            sc->warnings.push_back("time: tau/dt < 20, breakdown intervals are poorly resolved");
        }
    }

    sc->propagator = std::make_unique<CrankNicolson>(sc->evolution, sc->dt);
    if (const auto& w = sc->propagator->accuracy_warning()) sc->warnings.push_back(*w);

    const bool orthogonal = cfg.initial_state == InitialState::Orthogonalized;
    auto packet = gaussian_packet(cfg.packet, sc->grid,
                                  orthogonal ? std::nullopt : std::optional<Interval>(sc->region()));
    sc->packet_occupancy = project_bound(sc->basis, packet).occupancy();
    if (orthogonal) {
        auto rest = complementary(sc->basis, packet);
        if (rest.norm_squared() < kDegenerateComplementary) {
            throw ConfigError("initial_state: packet lies entirely in the bound subspace");
        }
        rest.normalize();
        sc->initial = std::move(rest);
    } else {
        if (sc->packet_occupancy >= kInitialOccupancyLimit) {
            throw ConfigError("packet: initial bound occupancy " + show(sc->packet_occupancy) +
                              " exceeds 1e-6");
        }
        sc->initial = std::move(packet);
    }
    sc->initial_occupancy = project_bound(sc->basis, sc->initial).occupancy();

    if (!orthogonal && cfg.packet.k0 != 0.0) {
        const double far_edge = cfg.packet.k0 > 0.0 ? sc->region().right : sc->region().left;
        const double transit = std::abs(far_edge - cfg.packet.x0) / std::abs(cfg.packet.k0);
        if (transit > cfg.t_max) {
            sc->warnings.push_back("time: t_max shorter than the packet transit time through the detector region");
        }
    }
    if (sc->basis.count() == 0) sc->warnings.push_back("spectrum: no bound states, detections are impossible");
    return sc;
}

/// One survivor-branch breakdown: what the state looked like just before it
/// and what the complementary transition did.
struct BranchCollapse {
    std::size_t step = 0;
    double time = 0.0;
    double scheduled_time = 0.0;
    std::vector<double> weights;  // |c_i|^2
    double occupancy = 0.0;
    double energy_before = 0.0;
    double energy_after = 0.0;
    double complementary_norm = 0.0;
    double post_occupancy = 0.0;
    bool degenerate = false;  // nothing left outside the bound subspace
};

struct SampleRow {
    std::size_t step = 0;
    FluxSample flux;
    double norm = 0.0;  // ||psi||^2
    double energy = 0.0;  // evolution Hamiltonian
    double residual = std::numeric_limits<double>::quiet_NaN();
};

/// The trajectory conditioned on never being detected. Breakdowns that do
/// not detect always map the state to its renormalised complementary part,
/// so this path depends on the schedule only, never on the Born draws.
struct SurvivorBranch {
    std::vector<BranchCollapse> collapses;
    std::vector<SampleRow> samples;
    double max_snap_error = 0.0;
    double final_norm = 1.0;
    bool terminated = false;
    std::vector<std::string> warnings;
};

namespace detail {

inline double wall_density(const WaveFunction& psi)
{
    const std::size_t n = psi.size();
    double worst = 0.0;
    for (std::size_t k = 1; k <= kWallBand && k + 1 < n; ++k) {
        worst = std::max({worst, std::norm(psi[k]), std::norm(psi[n - 1 - k])});
    }
    return worst;
}

}  // namespace detail

inline SurvivorBranch simulate_branch(const Scenario& sc, std::span<const double> times)
{
    SurvivorBranch br;
    std::vector<std::size_t> steps;
    steps.reserve(times.size());
    for (double t : times) {
        const auto s = static_cast<std::size_t>(
            std::clamp<long long>(std::llround(t / sc.dt), 1, static_cast<long long>(sc.n_steps)));
        steps.push_back(s);
        br.max_snap_error = std::max(br.max_snap_error, std::abs(t - static_cast<double>(s) * sc.dt));
    }

    WaveFunction psi = sc.initial;
    std::vector<complex> work;
    std::size_t segment = 0;
    bool wall_warned = false;

    auto take_sample = [&](std::size_t step) {
        SampleRow row;
        row.step = step;
        const double t = static_cast<double>(step) * sc.dt;
        row.flux = flux_sample(psi, sc.region(), t, project_bound(sc.basis, psi).occupancy(), segment);
        row.norm = psi.norm_squared();
        row.energy = energy_expectation(sc.evolution, psi);
        if (!br.samples.empty() && br.samples.back().flux.segment == segment) {
            row.residual = continuity_pair_residual(br.samples.back().flux, row.flux);
        }
        if (std::abs(row.norm - 1.0) > kDriftLimit) {
            std::ostringstream msg;
            msg << "propagation unstable: norm^2 = " << row.norm << " at t = " << t << " (step " << step
                << ", segment " << segment << ", p_in = " << row.flux.p_in << ")";
            throw NumericalError(msg.str());
        }
        if (!wall_warned && detail::wall_density(psi) >= kWallDensityLimit) {
            wall_warned = true;
            std::ostringstream msg;
            msg << "boundary: |psi|^2 near a wall reached " << detail::wall_density(psi) << " at t = " << t
                << "; hard-wall reflections may contaminate the run";
            br.warnings.push_back(msg.str());
        }
        br.samples.push_back(row);
    };

    take_sample(0);
    std::size_t next = 0;
    for (std::size_t s = 1; s <= sc.n_steps && !br.terminated; ++s) {
        sc.propagator->step(psi, work);
        while (next < steps.size() && steps[next] == s) {
            BranchCollapse c;
            c.step = s;
            c.time = static_cast<double>(s) * sc.dt;
            c.scheduled_time = times[next];
            const auto amps = project_bound(sc.basis, psi);
            c.weights = born_weights(amps);
            c.occupancy = amps.occupancy();
            c.energy_before = energy_expectation(sc.detector, psi);
            WaveFunction rest = complementary(sc.basis, psi);
            const double rest2 = rest.norm_squared();
            c.complementary_norm = std::sqrt(rest2);
            if (rest2 < kDegenerateComplementary) {
                c.degenerate = true;
                br.terminated = true;
                br.warnings.push_back("collapse: complementary part vanished at t = " + show(c.time) +
                                      "; any surviving trajectory is forced to detect");
                br.collapses.push_back(std::move(c));
                break;
            }
            rest.scale(1.0 / c.complementary_norm);
            psi = std::move(rest);
            c.post_occupancy = project_bound(sc.basis, psi).occupancy();
            c.energy_after = energy_expectation(sc.detector, psi);
            br.collapses.push_back(std::move(c));
            ++segment;
            ++next;
        }
        if (br.terminated) break;
        if (s % sc.sample_every == 0 || s == sc.n_steps) take_sample(s);
    }
    br.final_norm = psi.norm_squared();
    return br;
}

inline ScheduleTimes trajectory_schedule(const Scenario& sc, std::uint64_t index)
{
    if (sc.config.tau == 0.0) return {};
    return schedule_times({sc.config.tau, sc.config.jitter, sc.config.seed, index}, sc.config.t_max);
}

/// Outcome of one trajectory: its events and the branch it lives on.
struct TrajectoryResult {
    std::uint64_t index = 0;
    std::shared_ptr<const SurvivorBranch> branch;
    std::vector<CollapseEvent> events;
    std::optional<CollapseEvent> detection;
    /// Number of branch collapses this trajectory went through, including
    /// the detecting one.
    std::size_t collapses_seen = 0;
    /// Branch sample rows observed before the trajectory ended.
    std::size_t samples_seen = 0;
    /// 1 - prod_k (1 - q_k) over the full branch.
    double detection_probability = 0.0;
    std::vector<std::string> warnings;

    [[nodiscard]] bool detected() const { return detection.has_value(); }
};

inline CollapseEvent complementary_event(const BranchCollapse& c)
{
    CollapseEvent ev;
    ev.time = c.time;
    ev.kind = CollapseKind::Complementary;
    ev.occupancy = c.occupancy;
    ev.energy_before = c.energy_before;
    ev.energy_delta = c.energy_before - c.energy_after;
    ev.complementary_norm = c.complementary_norm;
    ev.post_occupancy = c.post_occupancy;
    return ev;
}

/// Plays the Born draws of trajectory `index` against a survivor branch.
inline TrajectoryResult realize_trajectory(const Scenario& sc, std::shared_ptr<const SurvivorBranch> branch,
                                           std::uint64_t index)
{
    TrajectoryResult r;
    r.index = index;
    const CounterRng rng(sc.config.seed, index, kCollapseStream);

    double survive = 1.0;
    for (const auto& c : branch->collapses) survive *= c.degenerate ? 0.0 : 1.0 - c.occupancy;
    r.detection_probability = 1.0 - survive;

    std::size_t end_step = std::numeric_limits<std::size_t>::max();
    for (std::size_t k = 0; k < branch->collapses.size(); ++k) {
        const auto& c = branch->collapses[k];
        const double u = rng.uniform(k);
        std::optional<std::size_t> hit = born_select(c.weights, u);
        bool forced = false;
        if (!hit && c.degenerate) {
            hit = born_select(c.weights, u * c.occupancy).value_or(c.weights.size() - 1);
            forced = true;
        }
        if (hit) {
            CollapseEvent ev;
            ev.time = c.time;
            ev.kind = CollapseKind::Detection;
            ev.state_index = *hit;
            ev.occupancy = c.occupancy;
            ev.energy_before = c.energy_before;
            ev.photon_energy = c.energy_before - sc.basis.energies[*hit];
            ev.complementary_norm = c.complementary_norm;
            ev.post_occupancy = 1.0;
            ev.forced = forced;
            r.events.push_back(ev);
            r.detection = ev;
            r.collapses_seen = k + 1;
            end_step = c.step;
            break;
        }
        r.events.push_back(complementary_event(c));
        r.collapses_seen = k + 1;
    }
    for (const auto& row : branch->samples) {
        if (row.step >= end_step) break;
        ++r.samples_seen;
    }
    r.warnings = branch->warnings;
    r.branch = std::move(branch);
    return r;
}

inline TrajectoryResult run_trajectory(const Scenario& sc, std::uint64_t index)
{
    auto sched = trajectory_schedule(sc, index);
    auto branch = std::make_shared<SurvivorBranch>(simulate_branch(sc, sched.times));
    if (sched.warning) branch->warnings.insert(branch->warnings.begin(), *sched.warning);
    return realize_trajectory(sc, std::move(branch), index);
}

inline TrajectoryResult run_trajectory(const RunConfig& cfg, std::uint64_t index = 0)
{
    const auto sc = prepare_scenario(cfg);
    return run_trajectory(*sc, index);
}

}  // namespace selfcollapse
