#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "selfcollapse/grid.hpp"
#include "selfcollapse/wavefunction.hpp"

using namespace selfcollapse;

TEST(Grid, NodesAndSpacing)
{
    const Grid g = build_grid(-10.0, 10.0, 2001);
    EXPECT_DOUBLE_EQ(g.dx, 0.01);
    EXPECT_DOUBLE_EQ(g.x(0), -10.0);
    EXPECT_DOUBLE_EQ(g.x(2000), 10.0);
    EXPECT_NEAR(g.x(1000), 0.0, 1e-12);
    EXPECT_EQ(g.nearest(0.004), 1000u);
    EXPECT_EQ(g.nearest(-50.0), 0u);
    EXPECT_EQ(g.nearest(50.0), 2000u);
}

TEST(Grid, RejectsBadShape)
{
    EXPECT_THROW(build_grid(1.0, 1.0, 100), ConfigError);
    EXPECT_THROW(build_grid(1.0, -1.0, 100), ConfigError);
    EXPECT_THROW(build_grid(-1.0, 1.0, 15), ConfigError);
    EXPECT_NO_THROW(build_grid(-1.0, 1.0, 16));
}

// Sine modes are exact eigenvectors of the Dirichlet 3-point Laplacian.
TEST(Hamiltonian, FreeBoxModesAreExact)
{
    const Grid g = build_grid(0.0, 1.0, 201);
    const std::vector<double> v(g.n_points, 0.0);
    const auto h = build_hamiltonian(g, v);
    const double n = static_cast<double>(g.n_points - 1);
    for (int k : {1, 2, 7, 50}) {
        std::vector<double> phi(g.n_points);
        for (std::size_t j = 0; j < g.n_points; ++j) phi[j] = std::sin(k * std::numbers::pi * j / n);
        phi.back() = 0.0;
        const auto hphi = apply_hamiltonian<double>(h, phi);
        const double e = (1.0 - std::cos(k * std::numbers::pi / n)) / (g.dx * g.dx);
        for (std::size_t j = 1; j + 1 < g.n_points; ++j) ASSERT_NEAR(hphi[j], e * phi[j], 1e-8 * e);
        EXPECT_EQ(hphi.front(), 0.0);
        EXPECT_EQ(hphi.back(), 0.0);
    }
}

TEST(Hamiltonian, GroundStateConvergesQuadratically)
{
    // E_1 = pi^2 / (2 L^2) in the continuum.
    const double exact = std::numbers::pi * std::numbers::pi / 2.0;
    double prev_err = 0.0;
    for (std::size_t n : {51u, 101u, 201u}) {
        const Grid g = build_grid(0.0, 1.0, n);
        const double e = (1.0 - std::cos(std::numbers::pi / static_cast<double>(n - 1))) / (g.dx * g.dx);
        const double err = std::abs(e - exact);
        if (prev_err > 0.0) {
            EXPECT_NEAR(prev_err / err, 4.0, 0.05);
        }
        prev_err = err;
    }
}

TEST(Hamiltonian, Hermitian)
{
    const Grid g = build_grid(-5.0, 5.0, 301);
    std::vector<double> v(g.n_points);
    for (std::size_t j = 0; j < g.n_points; ++j) v[j] = -3.0 * std::exp(-g.x(j) * g.x(j));
    const auto h = build_hamiltonian(g, v);
    std::mt19937_64 rng(7);
    std::normal_distribution<double> nd;
    std::vector<complex> a(g.n_points), b(g.n_points);
    for (std::size_t j = 1; j + 1 < g.n_points; ++j) {
        a[j] = {nd(rng), nd(rng)};
        b[j] = {nd(rng), nd(rng)};
    }
    const auto ha = apply_hamiltonian<complex>(h, a);
    const auto hb = apply_hamiltonian<complex>(h, b);
    complex lhs{}, rhs{};
    for (std::size_t j = 0; j < g.n_points; ++j) {
        lhs += std::conj(a[j]) * hb[j];
        rhs += std::conj(ha[j]) * b[j];
    }
    EXPECT_NEAR(std::abs(lhs - rhs), 0.0, 1e-9 * std::abs(lhs));
}

TEST(Hamiltonian, GershgorinBounds)
{
    const Grid g = build_grid(-5.0, 5.0, 101);
    std::vector<double> v(g.n_points, 0.0);
    v[50] = -2.0;
    const auto h = build_hamiltonian(g, v);
    EXPECT_DOUBLE_EQ(h.spectral_max(), 2.0 / (g.dx * g.dx));
    EXPECT_DOUBLE_EQ(h.spectral_min(), -2.0);
    EXPECT_THROW(build_hamiltonian(g, std::vector<double>(10, 0.0)), ConfigError);
}

TEST(Potential, SquareWellEdgesTakeHalfDepth)
{
    const Grid g = build_grid(-20.0, 20.0, 4001);
    const auto f = sample_potential({SquareWell{10.0, 2.0, 0.0}, std::nullopt, 2.0}, g);
    EXPECT_DOUBLE_EQ(f.values[g.nearest(0.0)], -10.0);
    EXPECT_DOUBLE_EQ(f.values[g.nearest(-1.0)], -5.0);
    EXPECT_DOUBLE_EQ(f.values[g.nearest(1.0)], -5.0);
    EXPECT_DOUBLE_EQ(f.values[g.nearest(1.01)], 0.0);
    EXPECT_DOUBLE_EQ(f.detector_region.left, -3.0);
    EXPECT_DOUBLE_EQ(f.detector_region.right, 3.0);
    EXPECT_DOUBLE_EQ(f.depth, 10.0);
}

TEST(Potential, GaussianSupportAndRegion)
{
    const Grid g = build_grid(-40.0, 40.0, 1601);
    const auto f = sample_potential({GaussianWell{5.0, 1.0, 0.0}, std::nullopt, 1.0}, g);
    const double h = std::sqrt(2.0 * std::log(1e6));
    EXPECT_NEAR(f.support.right, h, 1e-12);
    EXPECT_NEAR(f.detector_region.left, -h - 1.0, 1e-12);
    EXPECT_NEAR(f.values[g.nearest(0.0)], -5.0, 1e-12);
}

TEST(Potential, ValidationErrors)
{
    const Grid g = build_grid(-20.0, 20.0, 801);
    try {
        sample_potential({SquareWell{-3.0, 2.0, 0.0}, std::nullopt, 2.0}, g);
        FAIL() << "negative depth accepted";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("depth must be > 0"), std::string::npos);
    }
    EXPECT_THROW(sample_potential({SquareWell{10.0, 0.0, 0.0}, std::nullopt, 2.0}, g), ConfigError);
    // Too close to the right wall.
    EXPECT_THROW(sample_potential({SquareWell{10.0, 2.0, 15.0}, std::nullopt, 2.0}, g), ConfigError);
    // Region that cuts into the well.
    EXPECT_THROW(sample_potential({SquareWell{10.0, 2.0, 0.0}, Interval{-0.5, 3.0}, 2.0}, g), ConfigError);
    // Region that reaches the walls.
    EXPECT_THROW(sample_potential({SquareWell{10.0, 2.0, 0.0}, Interval{-20.0, 3.0}, 2.0}, g), ConfigError);
    std::vector<double> custom(g.n_points, 0.0);
    EXPECT_THROW(sample_potential({CustomPotential{custom}, std::nullopt, 2.0}, g), ConfigError);
    custom[400] = 1.0;
    EXPECT_THROW(sample_potential({CustomPotential{custom}, std::nullopt, 2.0}, g), ConfigError);
    custom[400] = -1.0;
    EXPECT_NO_THROW(sample_potential({CustomPotential{custom}, std::nullopt, 2.0}, g));
    EXPECT_THROW(sample_potential({CustomPotential{std::vector<double>(5, -1.0)}, std::nullopt, 2.0}, g),
                 ConfigError);
}

TEST(Region, HalfWeightedEnds)
{
    const Grid g = build_grid(0.0, 20.0, 21);
    const NodeRange r = node_range(g, {2.0, 5.0});
    EXPECT_EQ(r.lo, 2u);
    EXPECT_EQ(r.hi, 5u);
    EXPECT_DOUBLE_EQ(region_sum(g, r, [](std::size_t) { return 1.0; }), 3.0);
    EXPECT_THROW(node_range(g, {2.0, 2.2}), ConfigError);
}

TEST(Coupling, VanishesAtWalls)
{
    const Grid g = build_grid(-60.0, 60.0, 4801);
    const auto v = sample_coupling({CouplingSpec::Kind::Gaussian, 5.0, 0.3, 0.5}, g);
    EXPECT_NEAR(v[g.nearest(0.3)], 5.0, 1e-12);
    EXPECT_EQ(v.front(), 0.0);
    const auto none = sample_coupling({}, g);
    for (double x : none) ASSERT_EQ(x, 0.0);
    EXPECT_THROW(sample_coupling({CouplingSpec::Kind::Gaussian, 5.0, 0.0, 50.0}, g), ConfigError);
}
