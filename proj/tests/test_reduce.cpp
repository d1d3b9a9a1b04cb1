#include <doctest.h>

#include <cmath>

#include "am/reduce.hpp"

using namespace am;
using namespace am::reduce;

namespace {

// synthetic piecewise-linear cellular curve: elastic ramp, plateau,
// densification rise; returns the curve and the designed properties
StressStrainCurve cellular_curve(double e_mod, double plateau, double eps_d,
                                 double de = 0.002) {
    // densification line passes through (eps_d, plateau) with a steep slope
    double dens_slope = 40.0 * plateau;  // MPa per strain
    double eps_yield = plateau / e_mod;
    StressStrainCurve c;
    for (double e = 0.0; e <= 0.7 + 1e-12; e += de) {
        double s;
        if (e < eps_yield) s = e_mod * e;
        else s = plateau;
        double dens = plateau + dens_slope * (e - eps_d);
        s = std::max(s, dens);
        c.strain.push_back(e);
        c.stress.push_back(s);
    }
    return c;
}

}  // namespace

TEST_CASE("savgol reproduces polynomials up to the fit order") {
    std::vector<double> poly;
    for (int i = 0; i < 101; ++i) {
        double x = i * 0.01;
        poly.push_back(2.0 - 3.0 * x + 0.5 * x * x + 0.25 * x * x * x);
    }
    auto out = savgol(poly, 21, 3);
    REQUIRE(out.size() == poly.size());
    for (size_t i = 0; i < out.size(); ++i)
        CHECK(std::abs(out[i] - poly[i]) <= 1e-10);
}

TEST_CASE("savgol leaves constants unchanged") {
    std::vector<double> c(50, 3.25);
    auto out = savgol(c, 11, 2);
    for (double v : out) CHECK(v == doctest::Approx(3.25).epsilon(1e-12));
}

TEST_CASE("savgol denoises a known sine") {
    Rng rng(99);
    std::vector<double> clean, noisy;
    for (int i = 0; i < 400; ++i) {
        double x = i * 0.01;
        clean.push_back(std::sin(2.0 * x));
        noisy.push_back(clean.back() + 0.05 * rng.uniform(-1, 1));
    }
    auto smooth = savgol(noisy, 21, 3);
    double rms_raw = 0, rms_smooth = 0;
    for (size_t i = 0; i < clean.size(); ++i) {
        rms_raw += std::pow(noisy[i] - clean[i], 2);
        rms_smooth += std::pow(smooth[i] - clean[i], 2);
    }
    CHECK(std::sqrt(rms_raw) >= 2.0 * std::sqrt(rms_smooth));
}

TEST_CASE("savgol rejects bad window and order") {
    std::vector<double> s(50, 1.0);
    CHECK_THROWS_AS(savgol(s, 10, 3), Error);   // even window
    CHECK_THROWS_AS(savgol(s, 11, 11), Error);  // order >= window
    CHECK_THROWS_AS(savgol(std::vector<double>(5, 1.0), 11, 2), Error);  // short
}

TEST_CASE("savgol commutes with affine transforms") {
    Rng rng(4);
    std::vector<double> s;
    for (int i = 0; i < 120; ++i) s.push_back(rng.uniform(0, 2));
    auto base = savgol(s, 15, 2);
    std::vector<double> scaled(s.size());
    for (size_t i = 0; i < s.size(); ++i) scaled[i] = 3.0 * s[i] + 1.5;
    auto out = savgol(scaled, 15, 2);
    for (size_t i = 0; i < s.size(); ++i)
        CHECK(out[i] == doctest::Approx(3.0 * base[i] + 1.5).epsilon(1e-9));
}

TEST_CASE("elastic modulus: exact linear curve") {
    StressStrainCurve c;
    for (double e = 0; e <= 0.1; e += 0.001) {
        c.strain.push_back(e);
        c.stress.push_back(2.0 * e);
    }
    c.smoothed = c.stress;
    auto [e_mod, fit] = elastic_modulus(c);
    CHECK(e_mod == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(fit.mean_residual < 1e-12);
}

TEST_CASE("elastic modulus: bilinear curve uses only the elastic window") {
    StressStrainCurve c;
    for (double e = 0; e <= 0.3; e += 0.001) {
        double s = e < 0.05 ? 1.0 * e : 0.05 + 0.1 * (e - 0.05);
        c.strain.push_back(e);
        c.stress.push_back(s);
    }
    c.smoothed = c.stress;
    auto [e_mod, fit] = elastic_modulus(c);
    (void)fit;
    CHECK(e_mod == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("elastic modulus: sparse window is an error") {
    StressStrainCurve c;
    c.strain = {0.0, 0.1, 0.2};
    c.stress = {0.0, 0.1, 0.2};
    c.smoothed = c.stress;
    CHECK_THROWS_AS(elastic_modulus(c), Error);
}

TEST_CASE("plateau stress: designed plateau at the table value") {
    auto c = cellular_curve(10.0, 0.228, 0.543);
    c.smoothed = c.stress;
    auto [e_mod, efit] = elastic_modulus(c);
    (void)efit;
    auto [p, pfit] = plateau_stress(c, e_mod);
    CHECK(p == doctest::Approx(0.228).epsilon(0.01));
    CHECK(pfit.lo > 0.02);
    CHECK(pfit.hi < 0.6);
}

TEST_CASE("plateau stress: steep monotone line has no plateau") {
    StressStrainCurve c;
    for (double e = 0; e <= 0.5; e += 0.002) {
        c.strain.push_back(e);
        c.stress.push_back(3.0 * e);
    }
    c.smoothed = c.stress;
    CHECK_THROWS_AS(plateau_stress(c, 3.0), Error);
}

TEST_CASE("plateau region uses strict slope comparison") {
    double e_mod = 1.0;
    ReduceConfig cfg;
    double tol_slope = cfg.slope_tol * e_mod;
    auto ramp = [&](double slope) {
        StressStrainCurve c;
        for (double e = 0; e <= 0.6; e += 0.002) {
            c.strain.push_back(e);
            c.stress.push_back(slope * e);
        }
        c.smoothed = c.stress;
        return c;
    };
    // just above the tolerance: excluded, no plateau anywhere
    auto above = ramp(tol_slope * (1.0 + 1e-6));
    CHECK_THROWS_AS(plateau_stress(above, e_mod, cfg), Error);
    // just below: the whole post-elastic ramp qualifies
    auto below = ramp(tol_slope * (1.0 - 1e-6));
    auto [p, fit] = plateau_stress(below, e_mod, cfg);
    (void)fit;
    CHECK(p > 0);
}

TEST_CASE("densification strain: designed intersection at the table value") {
    auto c = cellular_curve(10.0, 0.228, 0.543);
    c.smoothed = c.stress;
    auto [e_mod, efit] = elastic_modulus(c);
    (void)efit;
    auto [p, pfit] = plateau_stress(c, e_mod);
    (void)pfit;
    auto [eps_d, dfit] = densification_strain(c, e_mod, p);
    (void)dfit;
    CHECK(std::abs(eps_d - 0.543) <= 0.005);
}

TEST_CASE("densification: plateau to the very end is an error") {
    StressStrainCurve c;
    for (double e = 0; e <= 0.6; e += 0.002) {
        c.strain.push_back(e);
        c.stress.push_back(e < 0.02 ? 10.0 * e : 0.2);
    }
    c.smoothed = c.stress;
    CHECK_THROWS_AS(densification_strain(c, 10.0, 0.2), Error);
}

TEST_CASE("full reduction recovers all three designed properties") {
    // yield strain must clear the elastic fit window [0.005, 0.04]
    auto c = cellular_curve(5.0, 0.3, 0.533, 0.0005);
    auto props = reduce_curve(c);
    CHECK(props.elastic_modulus_mpa == doctest::Approx(5.0).epsilon(0.01));
    CHECK(props.plateau_stress_mpa == doctest::Approx(0.3).epsilon(0.01));
    CHECK(std::abs(props.densification_strain - 0.533) <= 0.005);
}

TEST_CASE("reduction is deterministic and scale equivariant") {
    auto c = cellular_curve(8.0, 0.15, 0.52);
    auto p1 = reduce_curve(c);
    auto p2 = reduce_curve(c);
    CHECK(p1.elastic_modulus_mpa == p2.elastic_modulus_mpa);
    CHECK(p1.plateau_stress_mpa == p2.plateau_stress_mpa);
    CHECK(p1.densification_strain == p2.densification_strain);

    auto scaled = c;
    for (auto& s : scaled.stress) s *= 3.0;
    auto p3 = reduce_curve(scaled);
    CHECK(p3.elastic_modulus_mpa == doctest::Approx(3.0 * p1.elastic_modulus_mpa).epsilon(1e-9));
    CHECK(p3.plateau_stress_mpa == doctest::Approx(3.0 * p1.plateau_stress_mpa).epsilon(1e-9));
    CHECK(p3.densification_strain ==
          doctest::Approx(p1.densification_strain).epsilon(1e-9));
}

TEST_CASE("properties CSV header and rows") {
    auto c = cellular_curve(5.0, 0.1, 0.5);
    auto props = reduce_curve(c);
    auto csv = properties_csv({{"run1", props}});
    CHECK(csv.find("run_id,E_MPa,plateau_MPa,densification_strain,elastic_resid,"
                   "plateau_resid") == 0);
    CHECK(csv.find("run1,") != std::string::npos);
}

TEST_CASE("curve svg contains the annotation layers") {
    auto c = cellular_curve(5.0, 0.1, 0.5);
    auto props = reduce_curve(c);
    auto svg = curve_svg(c, props);
    CHECK(svg.find("<svg") == 0);
    CHECK(svg.find("polyline") != std::string::npos);
    CHECK(svg.find("E=") != std::string::npos);
}

TEST_CASE("heartbeat conversion dedups strain") {
    std::vector<fea::HeartbeatRow> rows = {
        {0, 0, 0, 0.0, 0.0, 10}, {1, 0, 0, 0.0, 0.1, 10}, {2, 0, 0, 0.01, 0.2, 10}};
    auto c = StressStrainCurve::from_heartbeat(rows, "x");
    REQUIRE(c.strain.size() == 2);
    CHECK(c.strain[0] == 0.0);
    CHECK(c.stress[0] == 0.1);  // later sample wins
    for (size_t i = 1; i < c.strain.size(); ++i) CHECK(c.strain[i] > c.strain[i - 1]);
}
