// Command-line driver: config ingestion, subcommand dispatch, output files.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "selfcollapse/config.hpp"
#include "selfcollapse/harness.hpp"
#include "selfcollapse/io.hpp"

namespace fs = std::filesystem;
using namespace selfcollapse;

namespace {

struct Invocation {
    std::string subcommand;
    std::string config_path;
    std::vector<std::string> overrides;
    fs::path out_dir = "out";
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::uint64_t index = 0;
    int verbosity = 0;
};

LoadedConfig load(const Invocation& inv)
{
    std::vector<std::string> overrides = inv.overrides;
    if (inv.seed) overrides.push_back("ensemble.seed=" + std::to_string(*inv.seed));
    if (inv.threads) overrides.push_back("ensemble.threads=" + std::to_string(*inv.threads));
    if (inv.config_path.empty()) {
        auto loaded = config_from_json(ordered_json::object(), overrides);
        prepare_scenario(loaded.config);
        return loaded;
    }
    return load_config(inv.config_path, overrides);
}

void warn_all(const std::vector<std::string>& warnings)
{
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

void write_common(const Invocation& inv, const LoadedConfig& lc, double dt, double snap,
                  const std::vector<std::string>& warnings)
{
    // Thread count never changes results, so it is left out of the archived config.
    ordered_json eff = lc.effective;
    eff["ensemble"].erase("threads");
    write_json_atomic(inv.out_dir / "effective_config.json", eff);
    write_json_atomic(inv.out_dir / "run_metadata.json",
                      run_metadata_json(inv.subcommand, lc.config.seed, dt, snap, warnings));
    warn_all(warnings);
}

void note(const Invocation& inv, const std::string& msg)
{
    if (inv.verbosity > 0) std::cerr << msg << '\n';
}

int cmd_spectrum(const Invocation& inv, const LoadedConfig& lc, bool write_states)
{
    const auto sc = prepare_scenario(lc.config);
    write_text_atomic(inv.out_dir / "spectrum.csv", spectrum_csv(sc->basis));
    if (write_states) write_text_atomic(inv.out_dir / "states.csv", states_csv(sc->basis));
    for (std::size_t i = 0; i < sc->basis.count(); ++i) {
        std::cout << "E_" << i + 1 << " = " << format_number(sc->basis.energies[i]) << '\n';
    }
    write_common(inv, lc, sc->dt, 0.0, sc->warnings);
    return 0;
}

int cmd_evolve(const Invocation& inv, const LoadedConfig& lc)
{
    RunConfig cfg = lc.config;
    cfg.tau = 0.0;
    const auto sc = prepare_scenario(cfg);
    WaveFunction psi = sc->initial;
    std::vector<complex> work;
    CsvBuilder csv{"t", "norm", "energy", "mean_x"};
    auto row = [&](std::size_t s) {
        csv.cell(static_cast<double>(s) * sc->dt).cell(psi.norm_squared());
        csv.cell(energy_expectation(sc->evolution, psi)).cell(mean_position(psi)).end_row();
    };
    row(0);
    for (std::size_t s = 1; s <= sc->n_steps; ++s) {
        sc->propagator->step(psi, work);
        if (s % sc->sample_every == 0 || s == sc->n_steps) row(s);
    }
    write_text_atomic(inv.out_dir / "evolve.csv", csv.str());
    write_common(inv, lc, sc->dt, 0.0, sc->warnings);
    return 0;
}

int cmd_trajectory(const Invocation& inv, const LoadedConfig& lc)
{
    const auto sc = prepare_scenario(lc.config);
    const auto r = run_trajectory(*sc, inv.index);
    write_text_atomic(inv.out_dir / "timeseries.csv", trajectory_timeseries_csv(*r.branch, r.samples_seen));
    write_text_atomic(inv.out_dir / "events.jsonl", events_jsonl(r));
    ordered_json j;
    j["trajectory"] = r.index;
    j["detected"] = r.detected();
    j["detection"] = r.detection ? event_json(r.index, *r.detection) : ordered_json(nullptr);
    j["collapses"] = r.collapses_seen;
    j["bookkeeping_probability"] = r.detection_probability;
    write_json_atomic(inv.out_dir / "trajectory_summary.json", j);
    std::cout << (r.detected() ? "detected in state " + std::to_string(r.detection->state_index + 1) + " at t = " +
                                     format_number(r.detection->time)
                               : std::string("not detected"))
              << '\n';
    std::vector<std::string> warnings = sc->warnings;
    warnings.insert(warnings.end(), r.warnings.begin(), r.warnings.end());
    write_common(inv, lc, sc->dt, r.branch->max_snap_error, warnings);
    return 0;
}

int cmd_ensemble(const Invocation& inv, const LoadedConfig& lc)
{
    const auto sc = prepare_scenario(lc.config);
    note(inv, "ensemble: " + std::to_string(lc.config.n_trajectories) + " trajectories");
    const auto st = run_ensemble(*sc);
    write_text_atomic(inv.out_dir / "timeseries.csv", ensemble_timeseries_csv(st.timeseries));
    write_text_atomic(inv.out_dir / "rates.csv", rates_csv(st.tau, st.rates));
    write_text_atomic(inv.out_dir / "events.jsonl",
                      events_jsonl(lc.config.events == EventDetail::All ? st.all_events : st.detections));
    write_json_atomic(inv.out_dir / "ensemble_summary.json", ensemble_summary_json(st, sc->basis));
    std::cout << "detected " << st.n_detected << " / " << st.n_trajectories << " (bookkeeping "
              << format_number(st.bookkeeping_probability) << ")\n";
    write_common(inv, lc, sc->dt, st.max_snap_error, st.warnings);
    return 0;
}

int cmd_sweep(const Invocation& inv, const LoadedConfig& lc)
{
    const auto& cfg = lc.config;
    const auto table = tau_sweep(cfg, cfg.sweep_taus);
    write_text_atomic(inv.out_dir / "sweep.csv", sweep_csv(table));
    write_text_atomic(inv.out_dir / "rates.csv", sweep_rates_csv(table));
    write_json_atomic(inv.out_dir / "sweep_summary.json", sweep_summary_json(table));
    std::cout << "beta = " << format_number(table.fit.exponent) << " +/- " << format_number(table.fit.ci95_halfwidth)
              << " (95%)\n";
    double dt_min = table.rows.front().dt;
    for (const auto& r : table.rows) dt_min = std::min(dt_min, r.dt);
    write_common(inv, lc, dt_min, 0.0, table.warnings);
    return 0;
}

/// Grid-convergence and eigenpair report for the configured potential.
int cmd_validate(const Invocation& inv, const LoadedConfig& lc)
{
    const auto& cfg = lc.config;
    ordered_json report;
    auto levels = ordered_json::array();
    std::vector<std::vector<double>> energies;
    std::size_t n = cfg.n_points;
    const bool custom = std::holds_alternative<CustomPotential>(cfg.potential.shape);
    const int n_levels = custom ? 1 : 3;
    for (int lvl = 0; lvl < n_levels; ++lvl) {
        RunConfig c = cfg;
        c.n_points = n;
        const Grid g = build_grid(c.x_min, c.x_max, c.n_points);
        const auto pot = sample_potential(c.potential, g);
        const auto h = build_hamiltonian(g, pot.values);
        const auto basis = bound_states(h, g, pot.detector_region, c.spectral);
        double ortho = 0.0;
        for (std::size_t i = 0; i < basis.count(); ++i) {
            for (std::size_t k = 0; k <= i; ++k) {
                double dot = 0.0;
                for (std::size_t j = 0; j < g.n_points; ++j) dot += basis.states[i][j] * basis.states[k][j];
                dot *= g.dx;
                ortho = std::max(ortho, std::abs(dot - (i == k ? 1.0 : 0.0)));
            }
        }
        double resid = 0.0;
        for (double r : basis.residuals) resid = std::max(resid, r);
        ordered_json l;
        l["n_points"] = n;
        l["dx"] = g.dx;
        l["energies"] = basis.energies;
        l["max_residual"] = resid;
        l["orthonormality_error"] = ortho;
        levels.push_back(l);
        energies.push_back(basis.energies);
        std::cout << "n = " << n << "  dx = " << format_number(g.dx) << "  bound states = " << basis.count()
                  << "  max residual = " << format_number(resid) << "  orthonormality = " << format_number(ortho)
                  << '\n';
        n = 2 * n - 1;
    }
    report["levels"] = levels;

    if (n_levels == 3) {
        auto conv = ordered_json::array();
        const std::size_t m = std::min({energies[0].size(), energies[1].size(), energies[2].size()});
        for (std::size_t i = 0; i < m; ++i) {
            const double e0 = energies[0][i], e1 = energies[1][i], e2 = energies[2][i];
            const double order = std::log2(std::abs((e0 - e1) / (e1 - e2)));
            const double extrap = e2 + (e2 - e1) / 3.0;
            ordered_json s;
            s["index"] = i + 1;
            s["observed_order"] = json_number(order);
            s["richardson"] = extrap;
            s["error_estimate"] = std::abs(e0 - extrap);
            conv.push_back(s);
            std::cout << "E_" << i + 1 << ": observed order " << format_number(order) << ", extrapolated "
                      << format_number(extrap) << ", base-grid error " << format_number(std::abs(e0 - extrap))
                      << '\n';
        }
        report["convergence"] = conv;
    }

    // Unitarity of the propagator on the base grid.
    RunConfig c = cfg;
    c.tau = 0.0;
    const auto sc = prepare_scenario(c);
    WaveFunction psi = sc->initial;
    std::vector<complex> work;
    const double e0 = energy_expectation(sc->evolution, psi);
    const std::size_t steps = std::min<std::size_t>(1000, sc->n_steps);
    for (std::size_t s = 0; s < steps; ++s) sc->propagator->step(psi, work);
    const double norm_drift = std::abs(psi.norm_squared() - 1.0);
    const double energy_drift = std::abs(energy_expectation(sc->evolution, psi) - e0) / std::max(1.0, std::abs(e0));
    ordered_json prop;
    prop["steps"] = steps;
    prop["dt"] = sc->dt;
    prop["norm_drift"] = norm_drift;
    prop["relative_energy_drift"] = energy_drift;
    report["propagator"] = prop;
    std::cout << "propagator: " << steps << " steps, norm drift " << format_number(norm_drift)
              << ", relative energy drift " << format_number(energy_drift) << '\n';

    write_json_atomic(inv.out_dir / "validate_report.json", report);
    write_common(inv, lc, sc->dt, 0.0, sc->warnings);
    return 0;
}

int dispatch(const Invocation& inv, bool write_states)
{
    const auto lc = load(inv);
    fs::create_directories(inv.out_dir);
    if (inv.subcommand == "spectrum") return cmd_spectrum(inv, lc, write_states);
    if (inv.subcommand == "evolve") return cmd_evolve(inv, lc);
    if (inv.subcommand == "trajectory") return cmd_trajectory(inv, lc);
    if (inv.subcommand == "ensemble") return cmd_ensemble(inv, lc);
    if (inv.subcommand == "sweep") return cmd_sweep(inv, lc);
    return cmd_validate(inv, lc);
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Quantum-trajectory simulator of detection by self-induced collapse"};
    app.require_subcommand(1);
    Invocation inv;
    bool write_states = false;

    const std::vector<std::pair<std::string, std::string>> subs = {
        {"spectrum", "bound states of the detector well"},
        {"evolve", "collapse-free propagation dump"},
        {"trajectory", "one quantum trajectory"},
        {"ensemble", "ensemble of trajectories with rate/flux report"},
        {"sweep", "ensembles over the sweep tau values with exponent fit"},
        {"validate", "grid convergence and eigenpair report"},
    };
    for (const auto& [name, help] : subs) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("config", inv.config_path, "JSON config file (defaults: standard scenario)")
            ->check(CLI::ExistingFile);
        sub->add_option("-s,--set", inv.overrides, "override key=value (repeatable)")->take_all();
        sub->add_option("-o,--out", inv.out_dir, "output directory")->capture_default_str();
        sub->add_option("--seed", inv.seed, "override ensemble.seed");
        sub->add_option("--threads", inv.threads, "override ensemble.threads");
        sub->add_flag("-v,--verbose", inv.verbosity, "progress on stderr");
        if (name == "trajectory") sub->add_option("--index", inv.index, "trajectory index")->capture_default_str();
        if (name == "spectrum") sub->add_flag("--states", write_states, "also write states.csv");
        sub->callback([&inv, sub] { inv.subcommand = sub->get_name(); });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        return dispatch(inv, write_states);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
