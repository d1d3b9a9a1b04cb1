#include <doctest.h>

#include <cmath>

#include "am/asprinted.hpp"

using namespace am;
using namespace am::asprinted;

namespace {

Bead make_bead(Vec3 a, Vec3 b, double rh, double rv) {
    Bead bead;
    bead.start = a;
    bead.end = b;
    bead.radius_h = rh;
    bead.radius_v = rv;
    return bead;
}

// Membership oracle for an elliptical bead: closest axis point, then the
// normal-plane ellipse test (plus ellipsoidal caps), written independently of
// the production SDF.
bool inside_oracle(const Vec3& p, const Bead& b) {
    Vec3 axis = b.end - b.start;
    double t = 0.0;
    double len2 = norm2(axis);
    if (len2 > 0) t = std::clamp(dot(p - b.start, axis) / len2, 0.0, 1.0);
    Vec3 c = b.start + axis * t;
    Vec3 d = p - c;
    Vec3 u = len2 > 0 ? normalized(axis) : Vec3{1, 0, 0};
    Vec3 vert = normalized(Vec3{0, 0, 1} - u * u.z);
    if (norm(vert) < 0.5) vert = {1, 0, 0};
    Vec3 lat = cross(u, vert);
    double axial = dot(d, u), v = dot(d, vert), l = dot(d, lat);
    double q = (axial * axial + l * l) / (b.radius_h * b.radius_h) +
               (v * v) / (b.radius_v * b.radius_v);
    return q < 1.0;
}

}  // namespace

TEST_CASE("bead sdf: circular capsule is exact") {
    Bead b = make_bead({0, 0, 0}, {10, 0, 0}, 0.2, 0.2);
    CHECK(bead_sdf({5, 0, 0}, b) == doctest::Approx(-0.2));
    CHECK(bead_sdf({5, 1.0, 0}, b) == doctest::Approx(0.8));
    CHECK(bead_sdf({-0.5, 0, 0}, b) == doctest::Approx(0.3));  // cap region
    CHECK(bead_sdf({5, 0, 0.2}, b) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("bead sdf: elliptical sign matches membership oracle") {
    Bead b = make_bead({0, 0, 0}, {8, 3, 0.5}, 0.25, 0.15);
    Rng rng(2024);
    for (int i = 0; i < 10000; ++i) {
        Vec3 p{rng.uniform(-1, 9), rng.uniform(-1, 4), rng.uniform(-1, 1.5)};
        double d = bead_sdf(p, b);
        bool inside = inside_oracle(p, b);
        if (std::abs(d) < 1e-9) continue;  // measure-zero boundary
        CHECK(inside == (d < 0.0));
    }
}

TEST_CASE("body sdf: empty body is +inf") {
    PrintedBody body;
    CHECK(std::isinf(body.sdf({0, 0, 0})));
}

TEST_CASE("body sdf: single bead matches bead sdf") {
    Bead b = make_bead({0, 0, 0}, {5, 0, 0}, 0.2, 0.2);
    PrintedBody body({b});
    Rng rng(5);
    for (int i = 0; i < 500; ++i) {
        Vec3 p{rng.uniform(-2, 7), rng.uniform(-2, 2), rng.uniform(-2, 2)};
        CHECK(body.sdf(p) == doctest::Approx(bead_sdf(p, b)).epsilon(1e-12));
    }
}

TEST_CASE("body sdf: overlapping beads union by OR of membership") {
    Bead b1 = make_bead({0, 0, 0}, {5, 0, 0}, 0.3, 0.3);
    Bead b2 = make_bead({2.5, 0.2, 0}, {2.5, 4, 0}, 0.3, 0.3);
    PrintedBody body({b1, b2});
    Rng rng(9);
    for (int i = 0; i < 2000; ++i) {
        Vec3 p{rng.uniform(-1, 6), rng.uniform(-1, 5), rng.uniform(-1, 1)};
        bool in_union = bead_sdf(p, b1) < 0 || bead_sdf(p, b2) < 0;
        double d = body.sdf(p);
        if (std::abs(d) < 1e-9) continue;
        CHECK(in_union == (d < 0));
    }
}

TEST_CASE("body sdf: union property and index completeness") {
    std::vector<Bead> beads;
    Rng rng(31);
    for (int i = 0; i < 40; ++i) {
        Vec3 a{rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform(0, 2)};
        Vec3 d{rng.uniform(-3, 3), rng.uniform(-3, 3), 0};
        beads.push_back(make_bead(a, a + d, 0.2, 0.15));
    }
    PrintedBody body(beads);
    for (int i = 0; i < 800; ++i) {
        Vec3 p{rng.uniform(-2, 12), rng.uniform(-2, 12), rng.uniform(-1, 3)};
        double indexed = body.sdf(p);
        double brute = body.sdf_brute(p);
        CHECK(indexed == doctest::Approx(brute).epsilon(1e-12));
        for (const auto& b : beads) CHECK(indexed <= bead_sdf(p, b) + 1e-12);
    }
}

TEST_CASE("printed volume: capsule matches closed form within 2%") {
    double L = 10, r = 0.2;
    Bead b = make_bead({0, 0, 0}, {L, 0, 0}, r, r);
    PrintedBody body({b});
    auto est = printed_volume(body, 0.02, 77);
    double exact = M_PI * r * r * L + (4.0 / 3.0) * M_PI * r * r * r;
    CHECK(exact == doctest::Approx(1.29015).epsilon(1e-3));
    CHECK(est.volume == doctest::Approx(exact).epsilon(0.02));
    CHECK(est.std_error > 0);
    CHECK(est.std_error < 0.05 * exact);
}

TEST_CASE("printed volume: disjoint beads are additive") {
    Bead b1 = make_bead({0, 0, 0}, {4, 0, 0}, 0.2, 0.2);
    Bead b2 = make_bead({0, 5, 0}, {4, 5, 0}, 0.2, 0.2);
    auto v1 = printed_volume(PrintedBody({b1}), 0.02, 3).volume;
    auto v2 = printed_volume(PrintedBody({b2}), 0.02, 3).volume;
    auto v12 = printed_volume(PrintedBody({b1, b2}), 0.02, 3).volume;
    CHECK(v12 == doctest::Approx(v1 + v2).epsilon(0.03));
}

TEST_CASE("printed volume: duplicate beads do not double count") {
    Bead b = make_bead({0, 0, 0}, {4, 0, 0}, 0.2, 0.2);
    auto v1 = printed_volume(PrintedBody({b}), 0.02, 3).volume;
    auto v2 = printed_volume(PrintedBody({b, b}), 0.02, 3).volume;
    CHECK(v2 == doctest::Approx(v1).epsilon(0.02));
}

TEST_CASE("from_toolpath keeps only extruding segments") {
    gcode::ToolpathProgram prog;
    gcode::ToolpathSegment ext;
    ext.start = {0, 0, 0.2};
    ext.end = {5, 0, 0.2};
    ext.extruding = true;
    gcode::ToolpathSegment travel = ext;
    travel.extruding = false;
    travel.start = {5, 0, 0.2};
    travel.end = {9, 4, 0.2};
    prog.segments = {ext, travel};
    auto body = PrintedBody::from_toolpath(prog, BeadShape{0.4, 0.3});
    REQUIRE(body.beads().size() == 1);
    // a point on the travel path stays outside
    CHECK(body.sdf({7, 2, 0.2}) > 0);
    CHECK(body.sdf({2.5, 0, 0.2}) < 0);
}
