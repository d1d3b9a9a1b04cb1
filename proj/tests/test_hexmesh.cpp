#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "am/asprinted.hpp"
#include "am/hexmesh.hpp"

using namespace am;
using namespace am::hexmesh;

namespace {

Sdf box_sdf(Vec3 lo, Vec3 hi) {
    return [lo, hi](const Vec3& p) {
        Vec3 c = (lo + hi) * 0.5;
        Vec3 half = (hi - lo) * 0.5;
        double dx = std::abs(p.x - c.x) - half.x;
        double dy = std::abs(p.y - c.y) - half.y;
        double dz = std::abs(p.z - c.z) - half.z;
        double outside = norm(Vec3{std::max(dx, 0.0), std::max(dy, 0.0), std::max(dz, 0.0)});
        double inside = std::min(0.0, std::max({dx, dy, dz}));
        return outside + inside;
    };
}

MeshParams coarse_params(double cell) {
    MeshParams p;
    p.cell_size = cell;
    p.smoothing_iters = 0;
    return p;
}

asprinted::PrintedBody capsule_body(double len, double r) {
    asprinted::Bead b;
    b.start = {0, 0, 0};
    b.end = {len, 0, 0};
    b.radius_h = r;
    b.radius_v = r;
    return asprinted::PrintedBody({b});
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("voxelize unit box with cell 0.5 gives 8 hexes and 27 nodes") {
    Aabb box;
    box.expand({0, 0, 0});
    box.expand({1, 1, 1});
    auto mesh = voxelize(box_sdf({0, 0, 0}, {1, 1, 1}), box, coarse_params(0.5));
    CHECK(mesh.hex_count() == 8);
    CHECK(mesh.node_count() == 27);
    for (size_t e = 0; e < mesh.hex_count(); ++e)
        CHECK(hex_volume(mesh.corners(int(e))) == doctest::Approx(0.125));
}

TEST_CASE("voxelize matches exhaustive center classification on a bead") {
    auto body = capsule_body(3.0, 0.2);
    Aabb box = body.bounds();
    MeshParams params = coarse_params(0.1);
    auto sdf = [&body](const Vec3& p) { return body.sdf(p); };
    auto mesh = voxelize(sdf, box, params);

    // oracle: count every cell center classified inside
    Vec3 ext = box.extent();
    int nx = std::max(1, int(std::ceil(ext.x / params.cell_size - 1e-9)));
    int ny = std::max(1, int(std::ceil(ext.y / params.cell_size - 1e-9)));
    int nz = std::max(1, int(std::ceil(ext.z / params.cell_size - 1e-9)));
    size_t inside = 0;
    for (int k = 0; k < nz; ++k)
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                Vec3 c{box.lo.x + (i + 0.5) * params.cell_size,
                       box.lo.y + (j + 0.5) * params.cell_size,
                       box.lo.z + (k + 0.5) * params.cell_size};
                if (body.sdf(c) < 0) inside++;
            }
    CHECK(mesh.hex_count() == inside);
}

TEST_CASE("halving cell size grows element count about 8x on a solid") {
    Aabb box;
    box.expand({0, 0, 0});
    box.expand({4, 4, 4});
    auto sdf = box_sdf({0.05, 0.05, 0.05}, {3.95, 3.95, 3.95});
    auto coarse = voxelize(sdf, box, coarse_params(0.4));
    auto fine = voxelize(sdf, box, coarse_params(0.2));
    double ratio = double(fine.hex_count()) / double(coarse.hex_count());
    CHECK(ratio > 6.0);
    CHECK(ratio < 10.0);
}

TEST_CASE("voxelize errors on empty classification") {
    Aabb box;
    box.expand({0, 0, 0});
    box.expand({1, 1, 1});
    auto sdf = [](const Vec3&) { return 1.0; };  // nothing inside
    CHECK_THROWS_AS(voxelize(sdf, box, coarse_params(0.5)), Error);
}

TEST_CASE("fraction rule demands the configured coverage") {
    // thin slab covering ~30% of each cell in z
    auto sdf = box_sdf({0, 0, 0}, {1, 1, 0.15});
    Aabb box;
    box.expand({0, 0, 0});
    box.expand({1, 1, 0.5});
    MeshParams strict = coarse_params(0.5);
    strict.inside_rule = InsideRule::Fraction;
    strict.fraction_tau = 0.5;
    strict.fraction_samples = 4;
    CHECK_THROWS_AS(voxelize(sdf, box, strict), Error);  // 30% < 50%

    MeshParams loose = strict;
    loose.fraction_tau = 0.2;
    auto mesh = voxelize(sdf, box, loose);
    CHECK(mesh.hex_count() == 4);
}

TEST_CASE("scaled jacobian: unit cube, inverted cube, sheared cube") {
    std::array<Vec3, 8> cube = {Vec3{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
    CHECK(scaled_jacobian(cube) == doctest::Approx(1.0));

    auto inverted = cube;
    std::swap(inverted[0], inverted[1]);
    CHECK(scaled_jacobian(inverted) <= 0.0);

    // shear x by 0.5*z: corner dets stay det([1,0,0],[0,1,0],[0.5,0,1]) = 1,
    // but the z edge norm grows to sqrt(1.25)
    auto sheared = cube;
    for (auto& p : sheared) p.x += 0.5 * p.z;
    double expected = 1.0 / std::sqrt(1.25);
    CHECK(scaled_jacobian(sheared) == doctest::Approx(expected));
}

TEST_CASE("smoothing: grid-aligned box is a fixed point") {
    Aabb box;
    box.expand({0, 0, 0});
    box.expand({1, 1, 1});
    auto sdf = box_sdf({0, 0, 0}, {1, 1, 1});
    auto mesh = voxelize(sdf, box, coarse_params(0.25));
    MeshParams params = coarse_params(0.25);
    params.smoothing_iters = 5;
    auto smoothed = smooth_boundary(mesh, sdf, params);
    REQUIRE(smoothed.node_count() == mesh.node_count());
    for (size_t n = 0; n < mesh.node_count(); ++n)
        CHECK(norm(smoothed.nodes[n] - mesh.nodes[n]) < 1e-9);
}

TEST_CASE("smoothing pulls boundary nodes to the isosurface") {
    auto body = capsule_body(4.0, 0.4);
    auto sdf = [&body](const Vec3& p) { return body.sdf(p); };
    MeshParams params = coarse_params(0.1);
    auto mesh = voxelize(sdf, body.bounds(), params);
    params.smoothing_iters = 5;
    auto smoothed = smooth_boundary(mesh, sdf, params);
    CHECK(smoothed.hex_count() == mesh.hex_count());

    auto bf = boundary_faces(smoothed);
    std::vector<bool> is_boundary(smoothed.node_count(), false);
    for (auto [e, f] : bf)
        for (int i = 0; i < 4; ++i)
            is_boundary[size_t(smoothed.hexes[size_t(e)][size_t(kHexFaces[f][i])])] = true;

    double before = 0, after = 0;
    size_t count = 0;
    for (size_t n = 0; n < smoothed.node_count(); ++n) {
        if (!is_boundary[n]) continue;
        before += std::abs(sdf(mesh.nodes[n]));
        after += std::abs(sdf(smoothed.nodes[n]));
        count++;
    }
    REQUIRE(count > 0);
    CHECK(after / double(count) < 0.2 * params.cell_size);
    CHECK(after < before);
}

TEST_CASE("smoothing never drops quality below the floor") {
    auto body = capsule_body(4.0, 0.4);
    auto sdf = [&body](const Vec3& p) { return body.sdf(p); };
    MeshParams params = coarse_params(0.12);
    params.smoothing_iters = 8;
    auto mesh = smooth_boundary(voxelize(sdf, body.bounds(), params), sdf, params);
    for (double q : element_quality(mesh)) CHECK(q >= params.quality_floor);
}

TEST_CASE("tag_sets: bottom nodes and top faces of a 2x2x2 block") {
    Aabb box;
    box.expand({0, 0, 0});
    box.expand({1, 1, 1});
    auto mesh = voxelize(box_sdf({0, 0, 0}, {1, 1, 1}), box, coarse_params(0.5));
    mesh = tag_sets(std::move(mesh), builtin_min_max_z(mesh, 1e-6));
    CHECK(mesh.node_sets.at("min_z").size() == 9);
    CHECK(mesh.node_sets.at("max_z").size() == 9);
    CHECK(mesh.side_sets.at("max_z").size() == 4);
    CHECK(mesh.side_sets.at("min_z").size() == 4);
}

TEST_CASE("tag_sets: half-space predicate matches brute-force filter") {
    Aabb box;
    box.expand({0, 0, 0});
    box.expand({1, 1, 1});
    auto mesh = voxelize(box_sdf({0, 0, 0}, {1, 1, 1}), box, coarse_params(0.25));
    SetPredicate half{"x_hi", [](const Vec3& p) { return p.x > 0.5; }};
    auto tagged = tag_sets(mesh, {half});
    std::vector<int> expected;
    for (size_t n = 0; n < mesh.node_count(); ++n)
        if (mesh.nodes[n].x > 0.5) expected.push_back(int(n));
    CHECK(tagged.node_sets.at("x_hi") == expected);
}

TEST_CASE("tag_sets: empty selection warns instead of failing") {
    Aabb box;
    box.expand({0, 0, 0});
    box.expand({1, 1, 1});
    auto mesh = voxelize(box_sdf({0, 0, 0}, {1, 1, 1}), box, coarse_params(0.5));
    SetPredicate never{"void", [](const Vec3&) { return false; }};
    auto tagged = tag_sets(mesh, {never});
    CHECK(tagged.node_sets.at("void").empty());
    REQUIRE(!tagged.warnings.empty());
    CHECK(tagged.warnings.back().find("void") != std::string::npos);
}

TEST_CASE("manifoldness: faces shared by one or two hexes only") {
    auto body = capsule_body(3.0, 0.35);
    auto sdf = [&body](const Vec3& p) { return body.sdf(p); };
    auto mesh = voxelize(sdf, body.bounds(), coarse_params(0.1));
    size_t boundary = boundary_faces(mesh).size();
    // total face incidences = 6*hexes = 2*interior + boundary
    size_t interior2 = 6 * mesh.hex_count() - boundary;
    CHECK(interior2 % 2 == 0);
}

TEST_CASE("export native round trip is identity") {
    auto body = capsule_body(2.0, 0.3);
    auto sdf = [&body](const Vec3& p) { return body.sdf(p); };
    auto mesh = voxelize(sdf, body.bounds(), coarse_params(0.15));
    mesh = tag_sets(std::move(mesh), builtin_min_max_z(mesh, 1e-6));

    auto path = temp_path("roundtrip.amh");
    export_mesh(mesh, path, MeshFormat::Native);
    auto back = import_mesh(path);
    REQUIRE(back.node_count() == mesh.node_count());
    REQUIRE(back.hex_count() == mesh.hex_count());
    for (size_t n = 0; n < mesh.node_count(); ++n)
        CHECK(norm(back.nodes[n] - mesh.nodes[n]) == 0.0);
    CHECK(back.hexes == mesh.hexes);
    CHECK(back.node_sets == mesh.node_sets);
    CHECK(back.side_sets == mesh.side_sets);

    // determinism: export of the re-import is byte-identical
    CHECK(export_mesh_string(back, MeshFormat::Native) ==
          export_mesh_string(mesh, MeshFormat::Native));
    std::remove(path.c_str());
}

TEST_CASE("vtk export lists one cell per hex") {
    Aabb box;
    box.expand({0, 0, 0});
    box.expand({1, 1, 1});
    auto mesh = voxelize(box_sdf({0, 0, 0}, {1, 1, 1}), box, coarse_params(0.5));
    auto vtk = export_mesh_string(mesh, MeshFormat::VtkLegacy);
    CHECK(vtk.find("CELLS 8 72") != std::string::npos);
    CHECK(vtk.find("CELL_TYPES 8") != std::string::npos);
    CHECK(vtk.find("POINTS 27 double") != std::string::npos);
}

TEST_CASE("single hex export has 8 node lines and 1 hex line") {
    Aabb box;
    box.expand({0, 0, 0});
    box.expand({1, 1, 1});
    auto mesh = voxelize(box_sdf({0, 0, 0}, {1, 1, 1}), box, coarse_params(1.0));
    REQUIRE(mesh.hex_count() == 1);
    CHECK(mesh.node_count() == 8);
    auto text = export_mesh_string(mesh, MeshFormat::Native);
    CHECK(text.find("nodes 8\n") != std::string::npos);
    CHECK(text.find("hexes 1\n") != std::string::npos);
}

TEST_CASE("voxel volume convergence against the sdf volume estimate") {
    auto body = capsule_body(6.0, 0.5);
    auto sdf = [&body](const Vec3& p) { return body.sdf(p); };
    double bead_diam = 1.0;
    auto est = asprinted::printed_volume(body, 0.04, 9);

    for (double cell : {0.2, 0.1}) {
        auto mesh = voxelize(sdf, body.bounds(), coarse_params(cell));
        double vol = 0;
        for (size_t e = 0; e < mesh.hex_count(); ++e) vol += hex_volume(mesh.corners(int(e)));
        double tol = 3.0 * cell / bead_diam;
        CHECK(vol > est.volume * (1 - tol));
        CHECK(vol < est.volume * (1 + tol));
    }
}

TEST_CASE("refinement drives boundary nodes toward the surface") {
    auto body = capsule_body(4.0, 0.5);
    auto sdf = [&body](const Vec3& p) { return body.sdf(p); };
    std::vector<double> mean_dist;
    for (double cell : {0.25, 0.125, 0.0625}) {
        MeshParams params = coarse_params(cell);
        params.smoothing_iters = 5;
        auto mesh = smooth_boundary(voxelize(sdf, body.bounds(), params), sdf, params);
        auto bf = boundary_faces(mesh);
        std::vector<bool> onb(mesh.node_count(), false);
        for (auto [e, f] : bf)
            for (int i = 0; i < 4; ++i)
                onb[size_t(mesh.hexes[size_t(e)][size_t(kHexFaces[f][i])])] = true;
        double sum = 0;
        size_t cnt = 0;
        for (size_t n = 0; n < mesh.node_count(); ++n)
            if (onb[n]) { sum += std::abs(sdf(mesh.nodes[n])); cnt++; }
        mean_dist.push_back(sum / double(cnt));
    }
    CHECK(mean_dist[1] < mean_dist[0]);
    CHECK(mean_dist[2] < mean_dist[1]);
}

TEST_CASE("component report flags disconnected strands") {
    asprinted::Bead b1, b2;
    b1.start = {0, 0, 0};
    b1.end = {3, 0, 0};
    b1.radius_h = b1.radius_v = 0.2;
    b2 = b1;
    b2.start = {0, 3, 0};
    b2.end = {3, 3, 0};
    asprinted::PrintedBody body({b1, b2});
    auto sdf = [&body](const Vec3& p) { return body.sdf(p); };
    auto mesh = voxelize(sdf, body.bounds(), coarse_params(0.1));
    auto comps = component_sizes(mesh);
    REQUIRE(comps.size() == 2);
    CHECK(comps[0] + comps[1] == mesh.hex_count());
    REQUIRE(!mesh.warnings.empty());
    CHECK(mesh.warnings[0].find("2 disconnected components") != std::string::npos);
}
