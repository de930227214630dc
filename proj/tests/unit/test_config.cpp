#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "selfcollapse/config.hpp"

using namespace selfcollapse;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& text)
{
    const fs::path dir = fs::temp_directory_path() / "selfcollapse_config_test";
    fs::create_directories(dir);
    const fs::path p = dir / name;
    std::ofstream(p) << text;
    return p;
}

std::string config_error(const ordered_json& doc, const std::vector<std::string>& overrides = {})
{
    try {
        config_from_json(doc, overrides);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(Config, EmptyDocumentGivesStandardScenario)
{
    const auto lc = config_from_json(ordered_json::object());
    const RunConfig& c = lc.config;
    const RunConfig d;
    EXPECT_EQ(c.n_points, d.n_points);
    EXPECT_EQ(c.x_min, d.x_min);
    EXPECT_EQ(c.tau, d.tau);
    EXPECT_FALSE(c.dt.has_value());
    EXPECT_EQ(c.seed, d.seed);
    EXPECT_EQ(c.sweep_taus, d.sweep_taus);
    ASSERT_TRUE(std::holds_alternative<SquareWell>(c.potential.shape));
    EXPECT_EQ(std::get<SquareWell>(c.potential.shape).depth, 10.0);

    // Every schema key is echoed.
    const auto& e = lc.effective;
    for (const auto& k : config_schema()) {
        const auto dot = k.path.find('.');
        if (dot == std::string::npos) {
            EXPECT_TRUE(e.contains(k.path)) << k.path;
        } else {
            EXPECT_TRUE(e[k.path.substr(0, dot)].contains(k.path.substr(dot + 1))) << k.path;
        }
    }
    EXPECT_EQ(e["potential"]["kind"], "square");
    EXPECT_EQ(e["potential"]["width"], 2.0);
    EXPECT_TRUE(e["time"]["dt"].is_null());
}

TEST(Config, MinimalDocumentFillsDefaults)
{
    const auto doc = ordered_json::parse(R"({"potential": {"kind": "gaussian", "depth": 4},
                                             "packet": {"x0": -20, "k0": 2}})");
    const auto lc = config_from_json(doc);
    const auto& g = std::get<GaussianWell>(lc.config.potential.shape);
    EXPECT_EQ(g.depth, 4.0);
    EXPECT_EQ(g.sigma, 1.0);
    EXPECT_EQ(lc.config.packet.x0, -20.0);
    EXPECT_EQ(lc.config.packet.sigma, 2.0);
    EXPECT_EQ(lc.effective["potential"]["sigma"], 1.0);
}

TEST(Config, OverridesTakePrecedence)
{
    const auto doc = ordered_json::parse(R"({"schedule": {"tau": 0.5}})");
    EXPECT_EQ(config_from_json(doc, {"tau=0.05"}).config.tau, 0.05);
    EXPECT_EQ(config_from_json(doc, {"schedule.tau=0.05"}).config.tau, 0.05);
    EXPECT_EQ(config_from_json(doc, {"n_trajectories=17"}).config.n_trajectories, 17u);
    EXPECT_EQ(config_from_json(doc, {"ensemble.events=all"}).config.events, EventDetail::All);
    EXPECT_EQ(config_from_json(doc, {"time.dt=0.002"}).config.dt, 0.002);
    const auto taus = config_from_json(doc, {"sweep.taus=0.1,0.2,0.3,0.4"}).config.sweep_taus;
    EXPECT_EQ(taus, (std::vector<double>{0.1, 0.2, 0.3, 0.4}));
    EXPECT_EQ(config_from_json(doc, {"detector.region=[-4,4]"}).config.potential.detector_region->right, 4.0);
    EXPECT_EQ(std::get<SquareWell>(config_from_json(doc, {"potential.depth=12"}).config.potential.shape).depth, 12.0);
}

TEST(Config, OverrideErrors)
{
    const auto doc = ordered_json::object();
    EXPECT_NE(config_error(doc, {"bogus=1"}).find("unknown override key 'bogus'"), std::string::npos);
    EXPECT_NE(config_error(doc, {"center=1"}).find("ambiguous"), std::string::npos);
    EXPECT_NE(config_error(doc, {"kind=gaussian"}).find("ambiguous"), std::string::npos);
    EXPECT_NE(config_error(doc, {"tau"}).find("key=value"), std::string::npos);
    EXPECT_NE(config_error(doc, {"n_points=abc"}).find("grid.n_points must be"), std::string::npos);
    EXPECT_NE(config_error(doc, {"n_points=12.5"}).find("grid.n_points must be"), std::string::npos);
    EXPECT_NE(config_error(doc, {"events=some"}).find("one of: detections all"), std::string::npos);
}

TEST(Config, SchemaErrorsNameTheKey)
{
    EXPECT_NE(config_error(ordered_json::parse(R"({"grid": {"bogus": 1}})")).find("'grid.bogus'"),
              std::string::npos);
    EXPECT_NE(config_error(ordered_json::parse(R"({"potential": {"kind": "square", "sigma": 1}})"))
                  .find("'potential.sigma'"),
              std::string::npos);
    EXPECT_NE(config_error(ordered_json::parse(R"({"potential": {"kind": "lorentzian"}})")).find("potential.kind"),
              std::string::npos);
    EXPECT_NE(config_error(ordered_json::parse(R"({"potential": {"depth": -3}})")).find("depth must be > 0"),
              std::string::npos);
    EXPECT_NE(config_error(ordered_json::parse(R"({"schedule": {"jitter": 1.5}})")).find("schedule.jitter"),
              std::string::npos);
    EXPECT_NE(config_error(ordered_json::parse(R"({"grid": {"x_min": 5, "x_max": 1}})")).find("x_max"),
              std::string::npos);
    EXPECT_NE(config_error(ordered_json::parse("[1, 2]")).find("object"), std::string::npos);
}

TEST(Config, ParseErrorReportsLineAndColumn)
{
    const auto p = write_temp("broken.json", "{\n  \"grid\": {\n    \"x_min\": ,\n  }\n}\n");
    try {
        load_config(p);
        FAIL() << "broken JSON accepted";
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
        EXPECT_NE(msg.find("column"), std::string::npos) << msg;
    }
    EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, PhysicsValidation)
{
    const auto p = write_temp("overlap.json", R"({"packet": {"x0": -2}})");
    EXPECT_THROW(load_config(p), ConfigError);
    const auto ok = write_temp("ok.json", R"({"time": {"t_max": 1}})");
    const std::string before = [&] {
        std::ifstream in(ok);
        return std::string(std::istreambuf_iterator<char>(in), {});
    }();
    EXPECT_NO_THROW(load_config(ok, {"n_trajectories=3"}));
    std::ifstream in(ok);
    EXPECT_EQ(std::string(std::istreambuf_iterator<char>(in), {}), before);
}

TEST(Config, CustomPotential)
{
    ordered_json doc;
    doc["grid"] = {{"x_min", -30}, {"x_max", 30}, {"n_points", 601}};
    std::vector<double> v(601, 0.0);
    for (std::size_t j = 290; j <= 310; ++j) v[j] = -8.0;
    doc["potential"] = {{"kind", "custom"}, {"samples", v}};
    doc["packet"] = {{"x0", -15}, {"sigma", 1.0}};
    const auto lc = config_from_json(doc);
    EXPECT_EQ(std::get<CustomPotential>(lc.config.potential.shape).samples.size(), 601u);
    doc["potential"]["samples"] = "nope";
    EXPECT_NE(config_error(doc).find("potential.samples"), std::string::npos);
}
