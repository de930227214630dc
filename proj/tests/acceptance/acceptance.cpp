// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <sys/wait.h>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "json.hpp"
#include "oracles/finite_well.hpp"
#include "selfcollapse/harness.hpp"

using namespace selfcollapse;
namespace fs = std::filesystem;

namespace {

// Tolerances, pinned.
constexpr double kA1EnergyRel = 1e-6;
constexpr double kA1Dx = 0.005;
constexpr double kA1Seconds = 5.0;
constexpr double kA2NormDrift = 1e-10;
constexpr double kA2EnergyRel = 1e-8;
constexpr std::size_t kA2Steps = 10000;
constexpr double kA2Seconds = 10.0;
constexpr double kA3Residual = 1e-4;
constexpr double kA3Reduction = 3.0;
constexpr std::size_t kA4Draws = 100000;
constexpr double kA4Sigmas = 3.0;
constexpr double kA4MinP = 0.001;
constexpr std::size_t kA5Trajectories = 2000;
constexpr double kA5Sigmas = 3.0;
constexpr double kA5Seconds = 300.0;
constexpr double kA6Occupancy = 1e-10;
constexpr double kA7Beta = 2.0;
constexpr double kA7BetaTol = 0.2;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(const char* id, const char* title, const std::function<Verdict()>& check)
{
    Verdict v;
    try {
        v = check();
    } catch (const std::exception& e) {
        v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failures;
    std::printf("%s %s  %s  [%s]\n", id, v.pass ? "PASS" : "FAIL", title, v.detail.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

int run_cli(const std::string& args)
{
    const std::string cmd = std::string(SELFCOLLAPSE_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

/// Names of files that differ (or are missing) between two output directories.
std::vector<std::string> diff_dirs(const fs::path& a, const fs::path& b)
{
    std::vector<std::string> bad;
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(a)) {
        ++n;
        const auto name = e.path().filename();
        if (!fs::exists(b / name) || slurp(e.path()) != slurp(b / name)) bad.push_back(name.string());
    }
    if (n == 0) bad.push_back("<empty>");
    return bad;
}

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / "selfcollapse_acceptance" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string write_config(const std::string& name, const std::string& json)
{
    const fs::path p = fs::temp_directory_path() / "selfcollapse_acceptance" / name;
    fs::create_directories(p.parent_path());
    std::ofstream(p) << json;
    return p.string();
}

Verdict a1()
{
    const auto t0 = Clock::now();
    const double half = 15.0;
    const auto n = static_cast<std::size_t>(std::llround(2.0 * half / kA1Dx)) + 1;
    const Grid g = build_grid(-half, half, n);
    const auto f = sample_potential({SquareWell{10.0, 2.0, 0.0}, std::nullopt, 2.0}, g);
    const auto basis = bound_states(build_hamiltonian(g, f.values), g, f.detector_region);
    const double secs = seconds_since(t0);
    const auto exact = oracle::finite_well_energies(10.0, 2.0);
    if (basis.count() != 3) return {false, fmt("found %zu bound states", basis.count())};
    double worst = 0.0;
    std::string per;
    for (std::size_t i = 0; i < 3; ++i) {
        const double rel = std::abs(basis.energies[i] - exact[i]) / std::abs(exact[i]);
        worst = std::max(worst, rel);
        per += fmt("%sE%zu rel err %.2e", i ? ", " : "", i + 1, rel);
    }
    return {worst < kA1EnergyRel && secs < kA1Seconds,
            fmt("3 states; %s; tol %.0e; %.2f s", per.c_str(), kA1EnergyRel, secs)};
}

Verdict a2()
{
    const auto t0 = Clock::now();
    RunConfig cfg;
    cfg.tau = 0.0;
    cfg.dt = 0.001;
    cfg.t_max = static_cast<double>(kA2Steps) * 0.001;
    const auto sc = prepare_scenario(cfg);
    WaveFunction psi = sc->initial;
    std::vector<complex> work;
    const double e0 = energy_expectation(sc->evolution, psi);
    const double n0 = psi.norm_squared();
    for (std::size_t s = 0; s < kA2Steps; ++s) sc->propagator->step(psi, work);
    const double dn = std::abs(psi.norm_squared() - n0);
    const double de = std::abs(energy_expectation(sc->evolution, psi) - e0) / std::abs(e0);
    const double secs = seconds_since(t0);
    return {dn < kA2NormDrift && de < kA2EnergyRel && secs < kA2Seconds,
            fmt("norm drift %.2e (tol %.0e), energy drift %.2e (tol %.0e), %.2f s", dn, kA2NormDrift, de,
                kA2EnergyRel, secs)};
}

double continuity_run(double dx, double dt)
{
    const double half = 30.0;
    const Grid g = build_grid(-half, half, static_cast<std::size_t>(std::llround(2.0 * half / dx)) + 1);
    const auto h = build_hamiltonian(g, std::vector<double>(g.n_points, 0.0));
    const Interval region{-3.0, 3.0};
    auto psi = gaussian_packet({-12.0, 1.5, 3.0}, g, region);
    const CrankNicolson cn(h, dt);
    std::vector<complex> work;
    const auto steps = static_cast<std::size_t>(std::llround(8.0 / dt));
    std::vector<FluxSample> samples{flux_sample(psi, region, 0.0, 0.0, 0)};
    for (std::size_t s = 1; s <= steps; ++s) {
        cn.step(psi, work);
        if (s % 10 == 0) samples.push_back(flux_sample(psi, region, static_cast<double>(s) * dt, 0.0, 0));
    }
    return continuity_residual(samples);
}

Verdict a3()
{
    const double r1 = continuity_run(0.005, 0.0005);
    const double r2 = continuity_run(0.0025, 0.00025);
    const double red = r1 / r2;
    return {r1 < kA3Residual && red >= kA3Reduction,
            fmt("residual %.2e (tol %.0e), halved-grid residual %.2e, reduction %.2fx (need >= %.0fx)", r1,
                kA3Residual, r2, red, kA3Reduction)};
}

Verdict a4()
{
    // A state with bound weights exactly (0.3, 0.2, 0) and the rest outside.
    const Grid g = build_grid(-30.0, 30.0, 601);
    const auto f = sample_potential({SquareWell{10.0, 2.0, 0.0}, std::nullopt, 2.0}, g);
    const auto h = build_hamiltonian(g, f.values);
    const auto basis = bound_states(h, g, f.detector_region);
    auto chi = complementary(basis, gaussian_packet({0.5, 1.0, 2.0}, g));
    chi.normalize();
    WaveFunction psi(g);
    for (std::size_t j = 0; j < g.n_points; ++j) {
        psi[j] = std::sqrt(0.3) * basis.states[0][j] + std::sqrt(0.2) * basis.states[1][j] + std::sqrt(0.5) * chi[j];
    }
    std::array<double, 4> counts{};
    for (std::size_t k = 0; k < kA4Draws; ++k) {
        const CounterRng rng(2718, k, kCollapseStream);
        const auto out = collapse_step(basis, h, psi, rng.uniform(0));
        ++counts[out.event.kind == CollapseKind::Detection ? out.event.state_index : 3];
    }
    const std::array<double, 4> p{0.3, 0.2, 0.0, 0.5};
    double chi2 = 0.0;
    bool in_band = counts[2] == 0.0;
    std::string freqs;
    for (std::size_t i : {0u, 1u, 3u}) {
        const double n = static_cast<double>(kA4Draws);
        const double expect = p[i] * n;
        const double sigma = std::sqrt(n * p[i] * (1.0 - p[i]));
        in_band = in_band && std::abs(counts[i] - expect) < kA4Sigmas * sigma;
        chi2 += (counts[i] - expect) * (counts[i] - expect) / expect;
        freqs += fmt("%s%.4f", freqs.empty() ? "" : "/", counts[i] / n);
    }
    const double pval = boost::math::cdf(boost::math::complement(boost::math::chi_squared(2.0), chi2));
    return {in_band && pval > kA4MinP,
            fmt("frequencies %s vs 0.3/0.2/0.5, all within %.0f sigma: %s, chi2 %.3f, p = %.3f", freqs.c_str(),
                kA4Sigmas, in_band ? "yes" : "no", chi2, pval)};
}

struct StandardEnsemble {
    EnsembleStats stats;
    double seconds = 0.0;
};

const StandardEnsemble& standard_ensemble()
{
    static const StandardEnsemble e = [] {
        const auto t0 = Clock::now();
        RunConfig cfg;
        cfg.n_trajectories = kA5Trajectories;
        StandardEnsemble out;
        out.stats = run_ensemble(cfg);
        out.seconds = seconds_since(t0);
        return out;
    }();
    return e;
}

Verdict a5()
{
    const auto& e = standard_ensemble();
    const auto& st = e.stats;
    const double p = st.bookkeeping_probability;
    const double sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(st.n_trajectories));
    const double dev = std::abs(st.detection_frequency() - p);
    const bool sums = st.n_detected + st.n_survived == kA5Trajectories;
    return {sums && dev < kA5Sigmas * sigma && e.seconds < kA5Seconds,
            fmt("%zu detected + %zu survived = %zu; frequency %.4f vs oracle %.4f (%.2f sigma); %.1f s", st.n_detected,
                st.n_survived, st.n_detected + st.n_survived, st.detection_frequency(), p,
                sigma > 0 ? dev / sigma : 0.0, e.seconds)};
}

Verdict a6()
{
    const auto& st = standard_ensemble().stats;
    // Independent branches as well: jittered schedules, fewer trajectories.
    RunConfig cfg;
    cfg.jitter = 0.3;
    cfg.n_trajectories = 8;
    cfg.t_max = 25.0;
    const auto jit = run_ensemble(cfg);
    const double worst = std::max(st.max_post_complementary_occupancy, jit.max_post_complementary_occupancy);
    return {worst < kA6Occupancy && st.mean_collapses > 0,
            fmt("max post-complementary occupancy %.2e over %zu + %zu trajectories (tol %.0e)", worst,
                st.n_trajectories, jit.n_trajectories, kA6Occupancy)};
}

Verdict a7()
{
    RunConfig cfg;
    cfg.packet = {0.0, 1.0, 0.0};
    const std::vector<double> times{0.001, 0.002, 0.003, 0.005, 0.007, 0.01};
    const auto curve = measure_regrowth(cfg, times, 1e-4);
    const double b = curve.fit.exponent;
    return {std::abs(b - kA7Beta) <= kA7BetaTol,
            fmt("beta = %.4f (95%% CI +/- %.4f) on [1e-3, 1e-2], need %.1f +/- %.1f", b, curve.fit.ci95_halfwidth,
                kA7Beta, kA7BetaTol)};
}

std::string standard_config_path()
{
    return write_config("standard.json", "{}");
}

Verdict a8()
{
    const auto a = scratch("sweep_a");
    const auto b = scratch("sweep_b");
    const std::string cfg = standard_config_path();
    const std::string base = "sweep " + cfg + " --set sweep.taus=0.01,0.05,0.2,1.0 --seed 12345 --threads 1 -o ";
    if (run_cli(base + a.string()) != 0) return {false, "first sweep run failed"};
    if (run_cli(base + b.string()) != 0) return {false, "second sweep run failed"};
    const auto diff = diff_dirs(a, b);

    // Consistency: each tau's ensemble frequency against its bookkeeping oracle.
    std::istringstream csv(slurp(a / "sweep.csv"));
    std::string line;
    std::getline(csv, line);
    std::size_t rows = 0, consistent = 0;
    while (std::getline(csv, line)) {
        std::vector<double> v;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) v.push_back(std::stod(cell));
        const double n = v[2], freq = v[4], book = v[5];
        const double sigma = std::sqrt(std::max(book * (1.0 - book), 1e-300) / n);
        ++rows;
        if (std::abs(freq - book) < kA5Sigmas * sigma) ++consistent;
    }
    const std::string summary = slurp(a / "sweep_summary.json");
    const auto fit = nlohmann::json::parse(summary)["fit"];
    const bool has_rates = fs::exists(a / "rates.csv") && fs::file_size(a / "rates.csv") > 100;
    const bool beta_ok = fit["exponent"].is_number();
    return {diff.empty() && rows == 4 && consistent == rows && has_rates && beta_ok,
            fmt("%zu tau rows, %zu consistent with bookkeeping, beta = %.3f, rerun %s", rows, consistent,
                beta_ok ? fit["exponent"].get<double>() : NAN,
                diff.empty() ? "byte-identical" : ("differs in " + diff.front()).c_str())};
}

Verdict a9()
{
    const std::string cfg = standard_config_path();
    struct Case {
        std::string name, args;
    };
    const std::vector<Case> cases = {
        {"spectrum", "spectrum " + cfg + " --states"},
        {"evolve", "evolve " + cfg + " --set t_max=5"},
        {"trajectory", "trajectory " + cfg + " --index 11"},
        {"ensemble", "ensemble " + cfg},
        {"ensemble-jitter", "ensemble " + cfg + " --set jitter=0.25 --set n_trajectories=12 --set t_max=25"},
        {"sweep", "sweep " + cfg + " --set n_trajectories=200 --set t_max=25"},
        {"validate", "validate " + cfg},
    };
    std::string bad;
    for (const auto& c : cases) {
        const auto s = scratch(c.name + "_serial");
        const auto p = scratch(c.name + "_parallel");
        if (run_cli(c.args + " --seed 4242 --threads 1 -o " + s.string()) != 0 ||
            run_cli(c.args + " --seed 4242 --threads 4 -o " + p.string()) != 0) {
            bad += " " + c.name + "(run failed)";
            continue;
        }
        const auto diff = diff_dirs(s, p);
        if (!diff.empty()) bad += " " + c.name + "(" + diff.front() + ")";
    }
    return {bad.empty(), bad.empty() ? fmt("%zu subcommand runs byte-identical at 1 and 4 threads", cases.size())
                                     : "differences:" + bad};
}

}  // namespace

int main()
{
    report("A1", "bound spectrum vs analytic finite-well roots", a1);
    report("A2", "unitarity and energy conservation", a2);
    report("A3", "discrete continuity", a3);
    report("A4", "Born sampling", a4);
    report("A5", "norm accounting", a5);
    report("A6", "post-complementary orthogonality", a6);
    report("A7", "short-time regrowth exponent", a7);
    report("A8", "rate/flux sweep report", a8);
    report("A9", "determinism serial vs parallel", a9);
    std::printf("%d of 9 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
