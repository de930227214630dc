#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "errors.hpp"
#include "harness.hpp"
#include "spectral.hpp"
#include "trajectory.hpp"

namespace selfcollapse {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

/// Shortest round-trip decimal; "nan" and "inf" for non-finite values.
inline std::string format_number(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

/// JSON number, or null when not finite.
inline nlohmann::ordered_json json_number(double v)
{
    if (!std::isfinite(v)) return nullptr;
    return v;
}

/// Writes via a sibling temporary and rename, so readers never see a partial file.
inline void write_text_atomic(const std::filesystem::path& path, const std::string& text)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("io: cannot write " + tmp.string());
        out << text;
        out.flush();
        if (!out) throw std::runtime_error("io: write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw std::runtime_error("io: cannot rename " + tmp.string() + ": " + ec.message());
}

class CsvBuilder {
public:
    explicit CsvBuilder(std::initializer_list<const char*> header)
    {
        bool first = true;
        for (const char* h : header) {
            if (!first) text_ += ',';
            text_ += h;
            first = false;
        }
        text_ += '\n';
    }

    CsvBuilder& cell(double v) { return raw(format_number(v)); }
    CsvBuilder& cell(std::size_t v) { return raw(std::to_string(v)); }
    CsvBuilder& end_row()
    {
        text_ += '\n';
        fresh_ = true;
        return *this;
    }
    [[nodiscard]] const std::string& str() const { return text_; }

private:
    CsvBuilder& raw(const std::string& s)
    {
        if (!fresh_) text_ += ',';
        text_ += s;
        fresh_ = false;
        return *this;
    }
    std::string text_;
    bool fresh_ = true;
};

inline std::string spectrum_csv(const BoundBasis& basis)
{
    CsvBuilder csv{"i", "energy", "outside_probability", "residual"};
    for (std::size_t i = 0; i < basis.count(); ++i) {
        csv.cell(i + 1).cell(basis.energies[i]).cell(basis.outside_probability[i]).cell(basis.residuals[i]).end_row();
    }
    return csv.str();
}

/// x followed by one column per bound state.
inline std::string states_csv(const BoundBasis& basis)
{
    std::string text = "x";
    for (std::size_t i = 0; i < basis.count(); ++i) text += ",phi_" + std::to_string(i + 1);
    text += '\n';
    for (std::size_t j = 0; j < basis.grid.n_points; ++j) {
        text += format_number(basis.grid.x(j));
        for (const auto& s : basis.states) text += "," + format_number(s[j]);
        text += '\n';
    }
    return text;
}

inline std::string trajectory_timeseries_csv(const SurvivorBranch& br, std::size_t rows)
{
    CsvBuilder csv{"t", "norm", "energy", "p_in", "p_out", "q_bound", "j_left", "j_right", "residual"};
    for (std::size_t i = 0; i < std::min(rows, br.samples.size()); ++i) {
        const auto& s = br.samples[i];
        csv.cell(s.flux.t).cell(s.norm).cell(s.energy).cell(s.flux.p_in).cell(s.flux.p_out).cell(s.flux.q_bound);
        csv.cell(s.flux.j_left).cell(s.flux.j_right).cell(s.residual).end_row();
    }
    return csv.str();
}

inline std::string ensemble_timeseries_csv(std::span<const EnsembleRow> rows)
{
    CsvBuilder csv{"t", "norm", "energy", "p_in", "p_out", "q_bound", "j_left", "j_right", "residual", "n_alive"};
    for (const auto& r : rows) {
        csv.cell(r.t).cell(r.norm).cell(r.energy).cell(r.p_in).cell(r.p_out).cell(r.q_bound).cell(r.j_left);
        csv.cell(r.j_right).cell(r.residual).cell(r.n_alive).end_row();
    }
    return csv.str();
}

inline void append_rates(CsvBuilder& csv, double tau, std::span<const RateBin> bins)
{
    for (const auto& b : bins) {
        csv.cell(tau).cell(b.t_start).cell(b.t_start + tau).cell(b.n_alive).cell(b.detections);
        csv.cell(b.detection_rate).cell(b.flux_in).cell(b.ratio).end_row();
    }
}

inline CsvBuilder rates_builder()
{
    return CsvBuilder{"tau", "t_start", "t_end", "n_alive", "detections", "detection_rate", "flux_in", "ratio"};
}

inline std::string rates_csv(double tau, std::span<const RateBin> bins)
{
    auto csv = rates_builder();
    append_rates(csv, tau, bins);
    return csv.str();
}

inline std::string sweep_rates_csv(const SweepTable& table)
{
    auto csv = rates_builder();
    for (const auto& r : table.rows) append_rates(csv, r.tau, r.rates);
    return csv.str();
}

inline std::string sweep_csv(const SweepTable& table)
{
    CsvBuilder csv{"tau",  "dt", "n_trajectories", "n_detected", "detection_probability", "bookkeeping_probability",
                   "interval_probability", "peak_detection_rate", "peak_flux", "ratio", "collapses"};
    for (const auto& r : table.rows) {
        csv.cell(r.tau).cell(r.dt).cell(r.n_trajectories).cell(r.n_detected).cell(r.detection_probability);
        csv.cell(r.bookkeeping_probability).cell(r.interval_probability).cell(r.peak_detection_rate);
        csv.cell(r.peak_flux).cell(r.ratio).cell(r.collapses).end_row();
    }
    return csv.str();
}

inline nlohmann::ordered_json event_json(std::uint64_t trajectory, const CollapseEvent& ev)
{
    nlohmann::ordered_json j;
    j["trajectory"] = trajectory;
    j["t"] = ev.time;
    const bool det = ev.kind == CollapseKind::Detection;
    j["kind"] = det ? "detection" : "complementary";
    j["index"] = det ? nlohmann::ordered_json(ev.state_index + 1) : nlohmann::ordered_json(nullptr);
    j["photon_energy"] = det ? json_number(ev.photon_energy) : nlohmann::ordered_json(nullptr);
    j["q"] = json_number(ev.occupancy);
    j["energy_before"] = json_number(ev.energy_before);
    j["energy_delta"] = det ? nlohmann::ordered_json(nullptr) : json_number(ev.energy_delta);
    j["complementary_norm"] = json_number(ev.complementary_norm);
    j["post_q"] = json_number(ev.post_occupancy);
    j["forced"] = ev.forced;
    return j;
}

inline std::string events_jsonl(std::span<const DetectionRecord> records)
{
    std::string text;
    for (const auto& r : records) text += event_json(r.trajectory, r.event).dump() + '\n';
    return text;
}

inline std::string events_jsonl(const TrajectoryResult& r)
{
    std::string text;
    for (const auto& ev : r.events) text += event_json(r.index, ev).dump() + '\n';
    return text;
}

inline nlohmann::ordered_json fit_json(const PowerFit& f)
{
    nlohmann::ordered_json j;
    j["exponent"] = json_number(f.exponent);
    j["prefactor"] = json_number(f.prefactor());
    j["stderr"] = json_number(f.stderr_exponent);
    j["ci95_low"] = json_number(f.exponent - f.ci95_halfwidth);
    j["ci95_high"] = json_number(f.exponent + f.ci95_halfwidth);
    j["points"] = f.points;
    return j;
}

inline nlohmann::ordered_json ensemble_summary_json(const EnsembleStats& st, const BoundBasis& basis)
{
    nlohmann::ordered_json j;
    j["n_trajectories"] = st.n_trajectories;
    j["n_detected"] = st.n_detected;
    j["n_survived"] = st.n_survived;
    j["n_forced"] = st.n_forced;
    j["detection_probability"] = st.detection_frequency();
    j["bookkeeping_probability"] = st.bookkeeping_probability;
    j["interval_probability"] = st.mean_interval_probability;
    j["mean_collapses"] = st.mean_collapses;
    j["tau"] = st.tau;
    j["dt"] = st.dt;
    j["shared_branch"] = st.shared_branch;
    auto states = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < st.detections_per_state.size(); ++i) {
        nlohmann::ordered_json s;
        s["index"] = i + 1;
        s["energy"] = basis.energies[i];
        s["detections"] = st.detections_per_state[i];
        s["fraction"] = st.n_detected ? static_cast<double>(st.detections_per_state[i]) /
                                            static_cast<double>(st.n_detected)
                                      : 0.0;
        states.push_back(s);
    }
    j["states"] = states;
    j["peak_detection_rate"] = st.peak_detection_rate();
    j["peak_flux"] = st.peak_flux();
    j["initial_occupancy"] = st.initial_occupancy;
    j["packet_occupancy"] = st.packet_occupancy;
    j["max_post_complementary_occupancy"] = st.max_post_complementary_occupancy;
    return j;
}

inline nlohmann::ordered_json sweep_summary_json(const SweepTable& t)
{
    nlohmann::ordered_json j;
    auto taus = nlohmann::ordered_json::array();
    for (const auto& r : t.rows) taus.push_back(r.tau);
    j["taus"] = taus;
    j["fit_quantity"] = "interval_probability";
    j["fit"] = fit_json(t.fit);
    return j;
}

inline nlohmann::ordered_json run_metadata_json(const std::string& subcommand, std::uint64_t seed, double dt,
                                                double max_snap_error, std::span<const std::string> warnings)
{
    nlohmann::ordered_json j;
    j["version"] = kVersion;
    j["schema_version"] = kSchemaVersion;
    j["subcommand"] = subcommand;
    j["seed"] = seed;
    j["dt"] = dt;
    j["max_snap_error"] = max_snap_error;
    j["warnings"] = std::vector<std::string>(warnings.begin(), warnings.end());
    return j;
}

inline void write_json_atomic(const std::filesystem::path& path, const nlohmann::ordered_json& j)
{
    write_text_atomic(path, j.dump(2) + '\n');
}

}  // namespace selfcollapse
