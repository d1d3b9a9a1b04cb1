#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "am/fea_modal.hpp"
#include "am/hexmesh.hpp"
#include "support/beam_oracle.hpp"

using namespace am;
using namespace am::modal;

namespace {

fea::MaterialParams table_material() { return fea::MaterialParams{1130.0, 2.18e6, 920.0e6}; }

hexmesh::HexMesh block_mesh(int nx, int ny, int nz, double cell_mm) {
    Aabb box;
    box.expand({0, 0, 0});
    box.expand({nx * cell_mm, ny * cell_mm, nz * cell_mm});
    hexmesh::MeshParams params;
    params.cell_size = cell_mm;
    params.smoothing_iters = 0;
    auto sdf = [&box](const Vec3& p) {
        Vec3 c = box.center(), half = box.extent() * 0.5;
        return std::max({std::abs(p.x - c.x) - half.x, std::abs(p.y - c.y) - half.y,
                         std::abs(p.z - c.z) - half.z});
    };
    return hexmesh::voxelize(sdf, box, params);
}

}  // namespace

TEST_CASE("assembly: stiffness rows sum to zero (translation nullspace)") {
    auto mesh = block_mesh(1, 1, 1, 1.0);
    auto sys = assemble(mesh, table_material());
    Eigen::VectorXd ones = Eigen::VectorXd::Zero(sys.n_dof());
    for (int i = 0; i < sys.n_dof(); i += 3) ones[i] = 1.0;  // rigid x translation
    Eigen::VectorXd r = sys.stiffness * ones;
    double scale = sys.stiffness.coeff(0, 0);
    CHECK(r.cwiseAbs().maxCoeff() < 1e-10 * scale);
}

TEST_CASE("assembly: stiffness is symmetric") {
    auto mesh = block_mesh(2, 2, 2, 0.7);
    auto sys = assemble(mesh, table_material());
    Eigen::SparseMatrix<double> diff = sys.stiffness;
    diff = diff - Eigen::SparseMatrix<double>(sys.stiffness.transpose());
    double scale = sys.stiffness.coeff(0, 0);
    CHECK(Eigen::Map<const Eigen::VectorXd>(diff.valuePtr(), diff.nonZeros())
              .cwiseAbs()
              .maxCoeff() < 1e-10 * scale);
}

TEST_CASE("assembly: patch test, linear field gives zero interior residual") {
    auto mesh = block_mesh(2, 2, 2, 1.0);
    auto sys = assemble(mesh, table_material());

    // u = a + B x with an arbitrary constant-strain B
    Mat3 B;
    B.m[0][0] = 1e-3; B.m[0][1] = 2e-4; B.m[0][2] = -3e-4;
    B.m[1][0] = 5e-4; B.m[1][1] = -8e-4; B.m[1][2] = 1e-4;
    B.m[2][0] = -2e-4; B.m[2][1] = 4e-4; B.m[2][2] = 6e-4;
    Eigen::VectorXd u(sys.n_dof());
    for (size_t n = 0; n < mesh.node_count(); ++n) {
        Vec3 X = mesh.nodes[n] * 1e-3;
        Vec3 disp = B * X + Vec3{1e-4, -2e-4, 3e-4};
        for (int d = 0; d < 3; ++d) u[3 * int(n) + d] = disp[d];
    }
    Eigen::VectorXd r = sys.stiffness * u;
    // the single interior node of the 3x3x3 grid sits at (1,1,1) mm
    int interior = -1;
    for (size_t n = 0; n < mesh.node_count(); ++n)
        if (norm(mesh.nodes[n] - Vec3{1, 1, 1}) < 1e-9) interior = int(n);
    REQUIRE(interior >= 0);
    double force_scale = sys.stiffness.coeff(0, 0) * 1e-3;
    for (int d = 0; d < 3; ++d)
        CHECK(std::abs(r[3 * interior + d]) <= 1e-10 * force_scale);
}

TEST_CASE("assembly: lumped mass equals density times volume") {
    auto mesh = block_mesh(3, 2, 2, 0.8);
    auto mat = table_material();
    auto sys = assemble(mesh, mat);
    double total = sys.lumped_mass.sum() / 3.0;  // 3 dofs share each nodal mass
    double volume = 3 * 2 * 2 * std::pow(0.8e-3, 3);
    CHECK(total == doctest::Approx(mat.density * volume).epsilon(1e-12));
}

TEST_CASE("free-free block has exactly six rigid modes") {
    auto mesh = block_mesh(4, 2, 2, 1.0);
    auto sys = assemble(mesh, table_material());
    auto modes = solve_modes(sys, 10);
    CHECK(modes.rigid_mode_count == 6);
    REQUIRE(modes.frequencies_hz.size() >= 8);
    for (int i = 0; i < 6; ++i)
        CHECK(modes.frequencies_hz[size_t(i)] < 1e-3 * modes.frequencies_hz[6]);
    CHECK(modes.frequencies_hz[6] > 0);
    // ascending order
    for (size_t i = 1; i < modes.frequencies_hz.size(); ++i)
        CHECK(modes.frequencies_hz[i] >= modes.frequencies_hz[i - 1]);
}

TEST_CASE("modes are M-orthonormal and satisfy the Rayleigh identity") {
    auto mesh = block_mesh(3, 2, 2, 1.0);
    auto sys = assemble(mesh, table_material());
    auto modes = solve_modes(sys, 8);
    for (size_t a = 0; a < modes.mode_shapes.size(); ++a) {
        const auto& xa = modes.mode_shapes[a];
        for (size_t b = 0; b <= a; ++b) {
            double m = xa.dot(sys.lumped_mass.cwiseProduct(modes.mode_shapes[b]));
            CHECK(std::abs(m - (a == b ? 1.0 : 0.0)) < 1e-8);
        }
        double xkx = xa.dot(sys.stiffness * xa);
        double omega2 = std::pow(2 * M_PI * modes.frequencies_hz[a], 2);
        double xmx = xa.dot(sys.lumped_mass.cwiseProduct(xa));
        if (int(a) < modes.rigid_mode_count) {
            // rigid: the quotient itself is roundoff-level
            CHECK(std::abs(xkx) < 1e-8 * sys.stiffness.coeff(0, 0));
        } else {
            CHECK(std::abs(xkx - omega2 * xmx) <= 1e-6 * xkx);
        }
    }
}

TEST_CASE("doubling density scales frequencies by 1/sqrt(2)") {
    auto mesh = block_mesh(3, 2, 2, 1.0);
    auto mat = table_material();
    auto m1 = solve_modes(assemble(mesh, mat), 8);
    mat.density *= 2.0;
    auto m2 = solve_modes(assemble(mesh, mat), 8);
    double f1 = m1.frequencies_hz[6], f2 = m2.frequencies_hz[6];
    CHECK(f2 == doctest::Approx(f1 / std::sqrt(2.0)).epsilon(1e-6));
}

TEST_CASE("slender bar first flexible frequency matches the beam oracle") {
    // solid 5 x 5 x 20 mm bar, free-free
    auto mesh = block_mesh(8, 8, 32, 0.625);
    auto mat = table_material();
    auto sys = assemble(mesh, mat);
    auto modes = solve_modes(sys, 10);
    REQUIRE(modes.rigid_mode_count == 6);
    double f_fe = first_flexible(modes);

    double nu = (3 * mat.bulk_modulus - 2 * mat.shear_modulus) /
                (2 * (3 * mat.bulk_modulus + mat.shear_modulus));
    beam_oracle::BeamSpec spec{0.020, 0.005, 0.005, mat.youngs_modulus(),
                               mat.shear_modulus, mat.density,
                               beam_oracle::kappa_rect(nu)};
    double f_beam = beam_oracle::first_bending_hz(spec);
    CHECK(f_fe == doctest::Approx(f_beam).epsilon(0.10));
}

TEST_CASE("beam oracle approaches the Euler formula in the slender limit") {
    auto mat = table_material();
    double nu = (3 * mat.bulk_modulus - 2 * mat.shear_modulus) /
                (2 * (3 * mat.bulk_modulus + mat.shear_modulus));
    beam_oracle::BeamSpec slender{0.100, 0.005, 0.005, mat.youngs_modulus(),
                                  mat.shear_modulus, mat.density,
                                  beam_oracle::kappa_rect(nu)};
    double f_t = beam_oracle::first_bending_hz(slender);
    double f_e = beam_oracle::euler_first_bending_hz(slender);
    CHECK(f_t == doctest::Approx(f_e).epsilon(0.02));
    CHECK(f_t < f_e);  // shear always softens
}

TEST_CASE("first flexible frequency selection") {
    auto mesh = block_mesh(4, 2, 2, 1.0);
    auto sys = assemble(mesh, table_material());
    auto modes = solve_modes(sys, 10);
    CHECK(first_flexible(modes) == modes.frequencies_hz[6]);

    // fully constrained base: no rigid modes, first mode is flexible
    auto tagged = hexmesh::tag_sets(mesh, hexmesh::builtin_min_max_z(mesh, 1e-6));
    auto fixed_sys = assemble(tagged, table_material(), {"min_z"});
    auto fixed_modes = solve_modes(fixed_sys, 6);
    CHECK(fixed_modes.rigid_mode_count == 0);
    CHECK(first_flexible(fixed_modes) == fixed_modes.frequencies_hz[0]);
    CHECK(fixed_modes.frequencies_hz[0] > 1.0);
}

TEST_CASE("all-rigid result is an error") {
    auto mesh = block_mesh(2, 1, 1, 1.0);
    auto sys = assemble(mesh, table_material());
    auto modes = solve_modes(sys, 3);  // only rigid modes requested
    CHECK(modes.rigid_mode_count == 3);
    CHECK_THROWS_AS(first_flexible(modes), Error);
}

TEST_CASE("mesh refinement changes the bar frequency by under 3 percent") {
    auto mat = table_material();
    auto coarse = block_mesh(4, 4, 16, 1.25);   // 5 x 5 x 20 mm
    auto fine = block_mesh(8, 8, 32, 0.625);
    double f_c = first_flexible(solve_modes(assemble(coarse, mat), 8));
    double f_f = first_flexible(solve_modes(assemble(fine, mat), 8));
    CHECK(std::abs(f_c - f_f) / f_f <= 0.03);
}

TEST_CASE("frequency table CSV lists rigid flags") {
    auto mesh = block_mesh(3, 2, 2, 1.0);
    auto modes = solve_modes(assemble(mesh, table_material()), 8);
    auto csv = frequency_table_csv(modes);
    CHECK(csv.find("mode_index,frequency_hz,is_rigid") == 0);
    CHECK(csv.find("0,") != std::string::npos);
    // six rigid rows flagged 1
    size_t rigid_rows = 0;
    std::istringstream is(csv);
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line))
        if (line.size() > 2 && line.substr(line.size() - 2) == ",1") rigid_rows++;
    CHECK(rigid_rows == 6);
}
