#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "errors.hpp"
#include "trajectory.hpp"

namespace selfcollapse {

using ordered_json = nlohmann::ordered_json;

enum class KeyType { Number, Count, Seed, Enum, NumberList, NullableNumber, NullableInterval };

/// One leaf of the config schema.
struct ConfigKey {
    std::string path;
    KeyType type;
    ordered_json fallback;
    std::vector<std::string> choices;  // Enum only
    std::string description;
};

/// The full schema; key order is the order keys appear in effective configs.
/// Potential keys are listed separately because they depend on potential.kind.
inline const std::vector<ConfigKey>& config_schema()
{
    static const std::vector<ConfigKey> keys = {
        {"grid.x_min", KeyType::Number, -60.0, {}, "left wall position"},
        {"grid.x_max", KeyType::Number, 60.0, {}, "right wall position"},
        {"grid.n_points", KeyType::Count, 4801, {}, "grid nodes including both walls (>= 16)"},
        {"detector.region", KeyType::NullableInterval, nullptr, {}, "[left, right]; null = well support +/- margin"},
        {"detector.margin", KeyType::Number, 2.0, {}, "padding around the well support when region is null"},
        {"detector.localization_threshold", KeyType::Number, 1e-3, {}, "max outside probability of a bound state"},
        {"detector.residual_tolerance", KeyType::Number, 1e-8, {}, "eigenpair residual acceptance"},
        {"coupling.kind", KeyType::Enum, "gaussian", {"none", "gaussian"}, "environment coupling added to evolution"},
        {"coupling.strength", KeyType::Number, 5.0, {}, "coupling amplitude (energy)"},
        {"coupling.center", KeyType::Number, 0.3, {}, "coupling centre"},
        {"coupling.sigma", KeyType::Number, 0.5, {}, "coupling width"},
        {"packet.x0", KeyType::Number, -25.0, {}, "initial packet centre"},
        {"packet.sigma", KeyType::Number, 2.0, {}, "initial packet width"},
        {"packet.k0", KeyType::Number, 1.5, {}, "mean wavenumber (= group velocity)"},
        {"initial_state", KeyType::Enum, "packet", {"packet", "orthogonalized"}, "start from the packet or its complementary part"},
        {"schedule.tau", KeyType::Number, 0.2, {}, "mean breakdown interval; 0 = none"},
        {"schedule.jitter", KeyType::Number, 0.0, {}, "relative interval jitter in [0, 1)"},
        {"time.dt", KeyType::NullableNumber, nullptr, {}, "time step; null = min(0.001, tau/20)"},
        {"time.t_max", KeyType::Number, 40.0, {}, "end time"},
        {"time.sample_every", KeyType::Count, 10, {}, "diagnostic cadence in steps (capped at one per interval)"},
        {"ensemble.n_trajectories", KeyType::Count, 2000, {}, "trajectories per ensemble"},
        {"ensemble.seed", KeyType::Seed, 12345, {}, "master seed"},
        {"ensemble.threads", KeyType::Count, 0, {}, "worker threads; 0 = all cores"},
        {"ensemble.events", KeyType::Enum, "detections", {"detections", "all"}, "events written by ensemble runs"},
        {"sweep.taus", KeyType::NumberList, ordered_json::array({0.01, 0.05, 0.2, 1.0}), {}, "tau values, ascending"},
        {"sweep.fit_points", KeyType::Count, 3, {}, "smallest taus used for the exponent fit"},
    };
    return keys;
}

struct PotentialKeys {
    std::string kind;
    std::vector<std::pair<std::string, ordered_json>> keys;  // name, default
};

inline const std::vector<PotentialKeys>& potential_schema()
{
    static const std::vector<PotentialKeys> kinds = {
        {"square", {{"depth", 10.0}, {"width", 2.0}, {"center", 0.0}}},
        {"gaussian", {{"depth", 5.0}, {"sigma", 1.0}, {"center", 0.0}}},
        {"custom", {{"samples", nullptr}}},
    };
    return kinds;
}

struct LoadedConfig {
    RunConfig config;
    ordered_json effective;
};

namespace detail {

inline std::string type_name(KeyType t)
{
    switch (t) {
    case KeyType::Number: return "a number";
    case KeyType::Count: return "a non-negative integer";
    case KeyType::Seed: return "a non-negative integer";
    case KeyType::Enum: return "a string";
    case KeyType::NumberList: return "an array of numbers";
    case KeyType::NullableNumber: return "a number or null";
    case KeyType::NullableInterval: return "null or [left, right]";
    }
    return "?";
}

inline bool matches(const ConfigKey& k, const ordered_json& v)
{
    switch (k.type) {
    case KeyType::Number: return v.is_number();
    case KeyType::Count:
    case KeyType::Seed: return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
    case KeyType::Enum:
        return v.is_string() && std::find(k.choices.begin(), k.choices.end(), v.get<std::string>()) != k.choices.end();
    case KeyType::NumberList:
        if (!v.is_array()) return false;
        for (const auto& x : v) {
            if (!x.is_number()) return false;
        }
        return true;
    case KeyType::NullableNumber: return v.is_null() || v.is_number();
    case KeyType::NullableInterval:
        return v.is_null() || (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number());
    }
    return false;
}

inline void type_check(const ConfigKey& k, const ordered_json& v)
{
    if (matches(k, v)) return;
    std::string msg = "config: " + k.path + " must be " + type_name(k.type);
    if (k.type == KeyType::Enum) {
        msg += " (one of:";
        for (const auto& c : k.choices) msg += " " + c;
        msg += ")";
    }
    throw ConfigError(msg);
}

inline const ConfigKey* find_key(const std::string& path)
{
    for (const auto& k : config_schema()) {
        if (k.path == path) return &k;
    }
    return nullptr;
}

inline void flatten(const ordered_json& node, const std::string& prefix, std::map<std::string, ordered_json>& out)
{
    for (auto it = node.begin(); it != node.end(); ++it) {
        const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (it.value().is_object()) {
            flatten(it.value(), path, out);
        } else {
            out[path] = it.value();
        }
    }
}

inline std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t byte)
{
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < text.size() && i + 1 < byte; ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

/// Resolves an override key: a dotted path, or a leaf name that is unique
/// across the schema ("tau" -> "schedule.tau").
inline std::string resolve_override_key(const std::string& key)
{
    if (key.find('.') != std::string::npos) return key;
    std::vector<std::string> hits;
    for (const auto& k : config_schema()) {
        const auto dot = k.path.rfind('.');
        const std::string leaf = dot == std::string::npos ? k.path : k.path.substr(dot + 1);
        if (leaf == key) hits.push_back(k.path);
    }
    for (const auto& kind : potential_schema()) {
        for (const auto& [name, _] : kind.keys) {
            if (name == key && std::find(hits.begin(), hits.end(), "potential." + name) == hits.end()) {
                hits.push_back("potential." + name);
            }
        }
    }
    if (key == "kind") throw ConfigError("config: override key 'kind' is ambiguous; use a dotted path");
    if (hits.size() == 1) return hits.front();
    if (hits.empty()) throw ConfigError("config: unknown override key '" + key + "'");
    throw ConfigError("config: override key '" + key + "' is ambiguous; use a dotted path");
}

inline double num(const ordered_json& v) { return v.get<double>(); }
inline std::size_t count(const ordered_json& v) { return v.get<std::size_t>(); }

}  // namespace detail

/// Parses "key=value" where value is read as JSON when possible, else as a string.
inline std::pair<std::string, ordered_json> parse_override(const std::string& text)
{
    const auto eq = text.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("config: override '" + text + "' is not key=value");
    const std::string key = detail::resolve_override_key(text.substr(0, eq));
    const std::string raw = text.substr(eq + 1);
    ordered_json value;
    try {
        value = ordered_json::parse(raw);
    } catch (const nlohmann::json::parse_error&) {
        std::string list = raw;
        if (raw.find(',') != std::string::npos) {
            try {
                value = ordered_json::parse("[" + raw + "]");
                return {key, value};
            } catch (const nlohmann::json::parse_error&) {
            }
        }
        value = raw;
    }
    return {key, value};
}

/// Builds a validated RunConfig from a parsed document plus overrides.
inline LoadedConfig config_from_json(const ordered_json& doc, const std::vector<std::string>& overrides = {})
{
    if (!doc.is_object()) throw ConfigError("config: top level must be a JSON object");
    std::map<std::string, ordered_json> flat;
    detail::flatten(doc, "", flat);
    for (const auto& o : overrides) {
        auto [k, v] = parse_override(o);
        flat[k] = v;
    }

    // Potential section, keyed by kind.
    const std::string kind = flat.count("potential.kind") ? (flat["potential.kind"].is_string()
                                                                  ? flat["potential.kind"].get<std::string>()
                                                                  : std::string("?"))
                                                          : std::string("square");
    const PotentialKeys* pkeys = nullptr;
    for (const auto& p : potential_schema()) {
        if (p.kind == kind) pkeys = &p;
    }
    if (!pkeys) throw ConfigError("config: potential.kind must be one of: square gaussian custom");

    ordered_json pot = ordered_json::object();
    pot["kind"] = kind;
    for (const auto& [name, fallback] : pkeys->keys) {
        const std::string path = "potential." + name;
        ordered_json v = flat.count(path) ? flat[path] : fallback;
        if (name == "samples") {
            if (!v.is_array() || v.empty()) throw ConfigError("config: potential.samples must be a non-empty array");
            for (const auto& x : v) {
                if (!x.is_number()) throw ConfigError("config: potential.samples must be an array of numbers");
            }
        } else if (!v.is_number()) {
            throw ConfigError("config: " + path + " must be a number");
        }
        pot[name] = v;
    }

    ordered_json eff = ordered_json::object();
    for (const auto& [path, value] : flat) {
        if (path.rfind("potential.", 0) == 0) {
            const std::string name = path.substr(10);
            if (name == "kind") continue;
            bool known = false;
            for (const auto& [n, _] : pkeys->keys) known = known || n == name;
            if (!known) throw ConfigError("config: unknown key '" + path + "' for potential kind " + kind);
        } else if (!detail::find_key(path)) {
            throw ConfigError("config: unknown key '" + path + "'");
        }
    }
    auto put = [&eff](const std::string& path, const ordered_json& v) {
        const auto dot = path.find('.');
        if (dot == std::string::npos) {
            eff[path] = v;
        } else {
            eff[path.substr(0, dot)][path.substr(dot + 1)] = v;
        }
    };
    for (const auto& k : config_schema()) {
        const ordered_json v = flat.count(k.path) ? flat[k.path] : k.fallback;
        detail::type_check(k, v);
        put(k.path, v);
        if (k.path == "grid.n_points") eff["potential"] = pot;
    }

    // Range checks.
    LoadedConfig out;
    out.effective = eff;
    RunConfig& c = out.config;
    using detail::count;
    using detail::num;
    c.x_min = num(eff["grid"]["x_min"]);
    c.x_max = num(eff["grid"]["x_max"]);
    c.n_points = count(eff["grid"]["n_points"]);
    if (!(c.x_max > c.x_min)) throw ConfigError("config: grid.x_max must be > grid.x_min");
    if (c.n_points < kMinGridPoints) throw ConfigError("config: grid.n_points must be >= 16");

    if (kind == "square") {
        SquareWell w{num(pot["depth"]), num(pot["width"]), num(pot["center"])};
        if (!(w.depth > 0.0)) throw ConfigError("config: potential.depth must be > 0");
        if (!(w.width > 0.0)) throw ConfigError("config: potential.width must be > 0");
        c.potential.shape = w;
    } else if (kind == "gaussian") {
        GaussianWell w{num(pot["depth"]), num(pot["sigma"]), num(pot["center"])};
        if (!(w.depth > 0.0)) throw ConfigError("config: potential.depth must be > 0");
        if (!(w.sigma > 0.0)) throw ConfigError("config: potential.sigma must be > 0");
        c.potential.shape = w;
    } else {
        c.potential.shape = CustomPotential{pot["samples"].get<std::vector<double>>()};
    }
    const auto& det = eff["detector"];
    if (!det["region"].is_null()) c.potential.detector_region = Interval{num(det["region"][0]), num(det["region"][1])};
    c.potential.margin = num(det["margin"]);
    if (c.potential.margin < 0.0) throw ConfigError("config: detector.margin must be >= 0");
    c.spectral.localization_threshold = num(det["localization_threshold"]);
    c.spectral.residual_tolerance = num(det["residual_tolerance"]);
    if (!(c.spectral.localization_threshold > 0.0 && c.spectral.localization_threshold < 1.0)) {
        throw ConfigError("config: detector.localization_threshold must be in (0, 1)");
    }
    if (!(c.spectral.residual_tolerance > 0.0)) throw ConfigError("config: detector.residual_tolerance must be > 0");

    const auto& cp = eff["coupling"];
    c.coupling.kind = cp["kind"] == "none" ? CouplingSpec::Kind::None : CouplingSpec::Kind::Gaussian;
    c.coupling.strength = num(cp["strength"]);
    c.coupling.center = num(cp["center"]);
    c.coupling.sigma = num(cp["sigma"]);
    if (!(c.coupling.sigma > 0.0)) throw ConfigError("config: coupling.sigma must be > 0");

    c.packet = {num(eff["packet"]["x0"]), num(eff["packet"]["sigma"]), num(eff["packet"]["k0"])};
    if (!(c.packet.sigma > 0.0)) throw ConfigError("config: packet.sigma must be > 0");
    c.initial_state = eff["initial_state"] == "orthogonalized" ? InitialState::Orthogonalized : InitialState::Packet;

    c.tau = num(eff["schedule"]["tau"]);
    c.jitter = num(eff["schedule"]["jitter"]);
    if (c.tau < 0.0) throw ConfigError("config: schedule.tau must be >= 0");
    if (!(c.jitter >= 0.0 && c.jitter < 1.0)) throw ConfigError("config: schedule.jitter must be in [0, 1)");
    if (!eff["time"]["dt"].is_null()) {
        c.dt = num(eff["time"]["dt"]);
        if (!(*c.dt > 0.0)) throw ConfigError("config: time.dt must be > 0");
    }
    c.t_max = num(eff["time"]["t_max"]);
    if (!(c.t_max > 0.0)) throw ConfigError("config: time.t_max must be > 0");
    c.sample_every = count(eff["time"]["sample_every"]);
    if (c.sample_every == 0) throw ConfigError("config: time.sample_every must be >= 1");

    c.n_trajectories = count(eff["ensemble"]["n_trajectories"]);
    if (c.n_trajectories == 0) throw ConfigError("config: ensemble.n_trajectories must be >= 1");
    c.seed = eff["ensemble"]["seed"].get<std::uint64_t>();
    c.threads = count(eff["ensemble"]["threads"]);
    c.events = eff["ensemble"]["events"] == "all" ? EventDetail::All : EventDetail::Detections;

    c.sweep_taus = eff["sweep"]["taus"].get<std::vector<double>>();
    c.fit_points = count(eff["sweep"]["fit_points"]);
    return out;
}

/// Reads, schema-checks and physics-validates a config file.
inline LoadedConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {})
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    ordered_json doc;
    try {
        doc = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        const auto [line, col] = detail::line_column(text, e.byte);
        throw ConfigError("config: parse error in " + path.string() + " at line " + std::to_string(line) +
                          ", column " + std::to_string(col) + ": " + e.what());
    }
    auto loaded = config_from_json(doc, overrides);
    prepare_scenario(loaded.config);  // physics validation
    return loaded;
}

}  // namespace selfcollapse
