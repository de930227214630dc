#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "errors.hpp"
#include "trajectory.hpp"

namespace selfcollapse {

/// Detection-rate bin (t_start, t_start + tau]. A breakdown at the end of an
/// interval is attributed to the interval whose inflow fed it.
struct RateBin {
    double t_start = 0.0;
    std::size_t n_alive = 0;
    std::size_t detections = 0;
    double detection_rate = 0.0;  // detections / (n_alive tau)
    double flux_in = std::numeric_limits<double>::quiet_NaN();  // mean j_left - j_right
    double ratio = std::numeric_limits<double>::quiet_NaN();    // detection_rate / flux_in
};

/// Ensemble mean of the trajectory time series over trajectories still alive.
struct EnsembleRow {
    double t = 0.0;
    std::size_t n_alive = 0;
    double norm = 0.0;
    double energy = 0.0;
    double p_in = 0.0;
    double p_out = 0.0;
    double q_bound = 0.0;
    double j_left = 0.0;
    double j_right = 0.0;
    double residual = std::numeric_limits<double>::quiet_NaN();
};

struct DetectionRecord {
    std::uint64_t trajectory = 0;
    CollapseEvent event;
};

struct EnsembleStats {
    std::size_t n_trajectories = 0;
    std::size_t n_detected = 0;
    std::size_t n_survived = 0;
    std::size_t n_forced = 0;
    double tau = 0.0;
    double dt = 0.0;
    bool shared_branch = false;

    std::vector<std::size_t> detections_per_state;
    std::vector<DetectionRecord> detections;   // trajectory order
    std::vector<DetectionRecord> all_events;   // only with EventDetail::All

    /// Mean over trajectories of 1 - prod(1 - q_k) on their survivor branch.
    double bookkeeping_probability = 0.0;
    /// Mean over trajectories of the mean branch occupancy per breakdown.
    double mean_interval_probability = 0.0;
    std::size_t mean_collapses = 0;
    double max_post_complementary_occupancy = 0.0;
    double max_snap_error = 0.0;
    double initial_occupancy = 0.0;
    double packet_occupancy = 0.0;

    std::vector<RateBin> rates;
    std::vector<EnsembleRow> timeseries;
    std::vector<std::string> warnings;

    [[nodiscard]] double detection_frequency() const
    {
        return n_trajectories ? static_cast<double>(n_detected) / static_cast<double>(n_trajectories) : 0.0;
    }
    [[nodiscard]] double peak_detection_rate() const
    {
        double m = 0.0;
        for (const auto& b : rates) m = std::max(m, b.detection_rate);
        return m;
    }
    [[nodiscard]] double peak_flux() const
    {
        double m = 0.0;
        for (const auto& b : rates) {
            if (std::isfinite(b.flux_in)) m = std::max(m, b.flux_in);
        }
        return m;
    }
};

namespace detail {

/// Folds trajectories into ensemble statistics; must be fed in index order
/// so floating-point sums do not depend on scheduling.
class EnsembleAccumulator {
public:
    EnsembleAccumulator(const Scenario& sc, EnsembleStats& stats) : sc_(sc), stats_(stats)
    {
        const double tau = sc.config.tau;
        const std::size_t n_bins =
            tau > 0.0 ? static_cast<std::size_t>(std::ceil(sc.config.t_max / tau - 1e-9)) : 0;
        stats_.rates.resize(n_bins);
        for (std::size_t b = 0; b < n_bins; ++b) stats_.rates[b].t_start = static_cast<double>(b) * tau;
        flux_sum_.assign(n_bins, 0.0);
        flux_count_.assign(n_bins, 0);
        stats_.detections_per_state.assign(sc.basis.count(), 0);
    }

    void add(const TrajectoryResult& r)
    {
        const auto& br = *r.branch;
        ++stats_.n_trajectories;
        prob_sum_ += r.detection_probability;
        double qsum = 0.0;
        for (const auto& c : br.collapses) {
            qsum += c.occupancy;
            if (!c.degenerate) {
                stats_.max_post_complementary_occupancy =
                    std::max(stats_.max_post_complementary_occupancy, c.post_occupancy);
            }
        }
        if (!br.collapses.empty()) interval_sum_ += qsum / static_cast<double>(br.collapses.size());
        collapse_sum_ += br.collapses.size();
        stats_.max_snap_error = std::max(stats_.max_snap_error, br.max_snap_error);
        for (const auto& w : br.warnings) note(w);

        if (sc_.config.events == EventDetail::All) {
            for (const auto& ev : r.events) stats_.all_events.push_back({r.index, ev});
        }

        const double tau = sc_.config.tau;
        const double t_det = r.detection ? r.detection->time : std::numeric_limits<double>::infinity();
        if (r.detection) {
            ++stats_.n_detected;
            if (r.detection->forced) ++stats_.n_forced;
            ++stats_.detections_per_state.at(r.detection->state_index);
            stats_.detections.push_back({r.index, *r.detection});
        } else {
            ++stats_.n_survived;
        }

        for (std::size_t b = 0; b < stats_.rates.size(); ++b) {
            auto& bin = stats_.rates[b];
            if (t_det <= bin.t_start + 1e-9 * tau) break;
            ++bin.n_alive;
            if (t_det <= bin.t_start + tau * (1.0 + 1e-9)) ++bin.detections;
        }

        if (rows_.size() < br.samples.size()) rows_.resize(br.samples.size());
        for (std::size_t i = 0; i < r.samples_seen; ++i) {
            const auto& s = br.samples[i];
            auto& row = rows_[i];
            row.t = s.flux.t;
            ++row.n_alive;
            row.norm += s.norm;
            row.energy += s.energy;
            row.p_in += s.flux.p_in;
            row.p_out += s.flux.p_out;
            row.q_bound += s.flux.q_bound;
            row.j_left += s.flux.j_left;
            row.j_right += s.flux.j_right;
            if (std::isfinite(s.residual)) {
                row.residual_sum += s.residual;
                ++row.residual_count;
            }
            if (tau > 0.0 && s.flux.t > 0.0) {
                const auto b = static_cast<std::size_t>(std::ceil(s.flux.t / tau - 1e-9)) - 1;
                if (b < flux_sum_.size()) {
                    flux_sum_[b] += s.flux.inflow();
                    ++flux_count_[b];
                }
            }
        }
    }

    void finish()
    {
        const double n = static_cast<double>(stats_.n_trajectories);
        if (n > 0) {
            stats_.bookkeeping_probability = prob_sum_ / n;
            stats_.mean_interval_probability = interval_sum_ / n;
            stats_.mean_collapses = collapse_sum_ / stats_.n_trajectories;
        }
        const double tau = sc_.config.tau;
        for (std::size_t b = 0; b < stats_.rates.size(); ++b) {
            auto& bin = stats_.rates[b];
            bin.detection_rate =
                bin.n_alive ? static_cast<double>(bin.detections) / (static_cast<double>(bin.n_alive) * tau) : 0.0;
            if (flux_count_[b]) bin.flux_in = flux_sum_[b] / static_cast<double>(flux_count_[b]);
            if (std::isfinite(bin.flux_in) && bin.flux_in > 0.0) bin.ratio = bin.detection_rate / bin.flux_in;
        }
        for (const auto& a : rows_) {
            if (a.n_alive == 0) break;
            const double k = static_cast<double>(a.n_alive);
            EnsembleRow row;
            row.t = a.t;
            row.n_alive = a.n_alive;
            row.norm = a.norm / k;
            row.energy = a.energy / k;
            row.p_in = a.p_in / k;
            row.p_out = a.p_out / k;
            row.q_bound = a.q_bound / k;
            row.j_left = a.j_left / k;
            row.j_right = a.j_right / k;
            if (a.residual_count) row.residual = a.residual_sum / static_cast<double>(a.residual_count);
            stats_.timeseries.push_back(row);
        }
    }

private:
    struct RowSum {
        double t = 0.0;
        std::size_t n_alive = 0;
        double norm = 0.0, energy = 0.0, p_in = 0.0, p_out = 0.0, q_bound = 0.0, j_left = 0.0, j_right = 0.0;
        double residual_sum = 0.0;
        std::size_t residual_count = 0;
    };

    void note(const std::string& w)
    {
        if (std::find(stats_.warnings.begin(), stats_.warnings.end(), w) == stats_.warnings.end()) {
            stats_.warnings.push_back(w);
        }
    }

    const Scenario& sc_;
    EnsembleStats& stats_;
    std::vector<RowSum> rows_;
    std::vector<double> flux_sum_;
    std::vector<std::size_t> flux_count_;
    double prob_sum_ = 0.0;
    double interval_sum_ = 0.0;
    std::size_t collapse_sum_ = 0;
};

/// Runs fn(i) for i in [begin, end) on `threads` workers. The first
/// exception (lowest index) is rethrown.
template <class Fn>
void parallel_for(std::size_t begin, std::size_t end, std::size_t threads, Fn&& fn)
{
    const std::size_t count = end - begin;
    threads = std::max<std::size_t>(1, std::min(threads, count));
    if (threads == 1) {
        for (std::size_t i = begin; i < end; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{begin};
    std::mutex err_mu;
    std::size_t err_index = std::numeric_limits<std::size_t>::max();
    std::exception_ptr err;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < end; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(err_mu);
                    if (i < err_index) {
                        err_index = i;
                        err = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

inline std::size_t resolve_threads(std::size_t requested)
{
    if (requested > 0) return requested;
    return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace detail

struct EnsembleOptions {
    /// Simulate every trajectory's branch even when all schedules coincide.
    bool force_independent = false;
};

inline EnsembleStats run_ensemble(const Scenario& sc, const EnsembleOptions& opt = {})
{
    const auto& cfg = sc.config;
    if (cfg.n_trajectories == 0) throw ConfigError("ensemble: n_trajectories must be >= 1");
    EnsembleStats stats;
    stats.tau = cfg.tau;
    stats.dt = sc.dt;
    stats.initial_occupancy = sc.initial_occupancy;
    stats.packet_occupancy = sc.packet_occupancy;
    stats.warnings = sc.warnings;
    detail::EnsembleAccumulator acc(sc, stats);
    const std::size_t threads = detail::resolve_threads(cfg.threads);

    const bool shared = !opt.force_independent && (cfg.tau == 0.0 || cfg.jitter == 0.0);
    stats.shared_branch = shared;
    if (shared) {
        auto sched = trajectory_schedule(sc, 0);
        std::shared_ptr<SurvivorBranch> branch;
        try {
            branch = std::make_shared<SurvivorBranch>(simulate_branch(sc, sched.times));
        } catch (const NumericalError& e) {
            throw NumericalError(std::string("ensemble: shared survivor branch (all trajectories): ") + e.what());
        }
        if (sched.warning) branch->warnings.insert(branch->warnings.begin(), *sched.warning);
        std::shared_ptr<const SurvivorBranch> cbranch = std::move(branch);
        for (std::size_t i = 0; i < cfg.n_trajectories; ++i) acc.add(realize_trajectory(sc, cbranch, i));
    } else {
        const std::size_t chunk = std::max<std::size_t>(threads * 4, 1);
        std::vector<TrajectoryResult> batch;
        for (std::size_t begin = 0; begin < cfg.n_trajectories; begin += chunk) {
            const std::size_t end = std::min(cfg.n_trajectories, begin + chunk);
            batch.assign(end - begin, {});
            detail::parallel_for(begin, end, threads, [&](std::size_t i) {
                try {
                    batch[i - begin] = run_trajectory(sc, i);
                } catch (const NumericalError& e) {
                    throw NumericalError("ensemble: trajectory " + std::to_string(i) + ": " + e.what());
                }
            });
            for (const auto& r : batch) acc.add(r);
        }
    }
    acc.finish();
    return stats;
}

inline EnsembleStats run_ensemble(const RunConfig& cfg, const EnsembleOptions& opt = {})
{
    return run_ensemble(*prepare_scenario(cfg), opt);
}

/// Orthogonal-start variant: the packet is projected off the bound subspace
/// before evolution starts, and may sit over the detector.
inline EnsembleStats orthogonal_start_experiment(RunConfig cfg, const EnsembleOptions& opt = {})
{
    cfg.initial_state = InitialState::Orthogonalized;
    return run_ensemble(cfg, opt);
}

/// Least-squares fit of log y = beta log x + c.
struct PowerFit {
    double exponent = 0.0;
    double log_prefactor = 0.0;
    double stderr_exponent = std::numeric_limits<double>::quiet_NaN();
    double ci95_halfwidth = std::numeric_limits<double>::quiet_NaN();
    std::size_t points = 0;

    [[nodiscard]] double prefactor() const { return std::exp(log_prefactor); }
};

inline PowerFit fit_power_law(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size() || x.size() < 2) throw ConfigError("fit: need at least two matching points");
    const std::size_t n = x.size();
    std::vector<double> lx(n), ly(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw ConfigError("fit: power-law fit needs positive data");
        lx[i] = std::log(x[i]);
        ly[i] = std::log(y[i]);
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    if (!(sxx > 0.0)) throw ConfigError("fit: x values must not all coincide");
    PowerFit f;
    f.points = n;
    f.exponent = sxy / sxx;
    f.log_prefactor = my - f.exponent * mx;
    if (n > 2) {
        double ssr = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = ly[i] - (f.log_prefactor + f.exponent * lx[i]);
            ssr += r * r;
        }
        const double dof = static_cast<double>(n - 2);
        f.stderr_exponent = std::sqrt(ssr / dof / sxx);
        const boost::math::students_t dist(dof);
        f.ci95_halfwidth = boost::math::quantile(boost::math::complement(dist, 0.025)) * f.stderr_exponent;
    }
    return f;
}

struct SweepRow {
    double tau = 0.0;
    double dt = 0.0;
    std::size_t n_trajectories = 0;
    std::size_t n_detected = 0;
    double detection_probability = 0.0;     // ensemble frequency
    double bookkeeping_probability = 0.0;   // 1 - prod(1 - q) oracle
    double interval_probability = 0.0;      // mean q per breakdown
    double peak_detection_rate = 0.0;
    double peak_flux = 0.0;
    double ratio = std::numeric_limits<double>::quiet_NaN();
    std::size_t collapses = 0;
    std::vector<RateBin> rates;
};

struct SweepTable {
    std::vector<SweepRow> rows;
    PowerFit fit;  // interval_probability ~ tau^beta over the smallest taus
    std::vector<std::string> warnings;
};

inline SweepTable tau_sweep(const RunConfig& base, std::span<const double> taus, const EnsembleOptions& opt = {})
{
    if (taus.size() < 4) throw ConfigError("sweep: at least 4 tau values are required for the exponent fit");
    for (std::size_t i = 0; i < taus.size(); ++i) {
        if (!(taus[i] > 0.0)) throw ConfigError("sweep: tau values must be > 0");
        if (i > 0 && taus[i] < taus[i - 1]) throw ConfigError("sweep: tau values must be sorted ascending");
    }
    if (base.fit_points < 3 || base.fit_points > taus.size()) {
        throw ConfigError("sweep: fit_points must be between 3 and the number of tau values");
    }
    SweepTable table;
    for (double tau : taus) {
        RunConfig cfg = base;
        cfg.tau = tau;
        const auto st = run_ensemble(cfg, opt);
        SweepRow row;
        row.tau = tau;
        row.dt = st.dt;
        row.n_trajectories = st.n_trajectories;
        row.n_detected = st.n_detected;
        row.detection_probability = st.detection_frequency();
        row.bookkeeping_probability = st.bookkeeping_probability;
        row.interval_probability = st.mean_interval_probability;
        row.peak_detection_rate = st.peak_detection_rate();
        row.peak_flux = st.peak_flux();
        if (row.peak_flux > 0.0) row.ratio = row.peak_detection_rate / row.peak_flux;
        row.collapses = st.mean_collapses;
        row.rates = st.rates;
        for (const auto& w : st.warnings) {
            const std::string tagged = "tau=" + show(tau) + ": " + w;
            table.warnings.push_back(tagged);
        }
        table.rows.push_back(std::move(row));
    }
    std::vector<double> fx, fy;
    for (std::size_t i = 0; i < base.fit_points; ++i) {
        fx.push_back(table.rows[i].tau);
        fy.push_back(table.rows[i].interval_probability);
    }
    table.fit = fit_power_law(fx, fy);
    return table;
}

/// Bound occupancy of the orthogonalised initial state after collapse-free
/// evolution for each of `times`, stepping with `dt`.
struct RegrowthCurve {
    std::vector<double> times;
    std::vector<double> occupancy;
    PowerFit fit;
};

inline RegrowthCurve measure_regrowth(RunConfig cfg, std::span<const double> times, double dt)
{
    if (times.empty()) throw ConfigError("regrowth: need sample times");
    cfg.initial_state = InitialState::Orthogonalized;
    cfg.dt = dt;
    cfg.tau = 0.0;
    cfg.t_max = times.back();
    const auto sc = prepare_scenario(cfg);
    RegrowthCurve curve;
    WaveFunction psi = sc->initial;
    std::vector<complex> work;
    std::size_t done = 0;
    for (double t : times) {
        const auto target = static_cast<std::size_t>(std::llround(t / dt));
        if (target < done) throw ConfigError("regrowth: times must be ascending");
        for (; done < target; ++done) sc->propagator->step(psi, work);
        curve.times.push_back(static_cast<double>(target) * dt);
        curve.occupancy.push_back(project_bound(sc->basis, psi).occupancy());
    }
    curve.fit = fit_power_law(curve.times, curve.occupancy);
    return curve;
}

}  // namespace selfcollapse
