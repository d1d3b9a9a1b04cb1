#include "am/fea_modal.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "am/hexshape.hpp"

namespace am::modal {

namespace {

constexpr double kMm = 1e-3;

// 6x24 strain-displacement matrix in Voigt order (xx, yy, zz, xy, yz, zx).
struct BMatrix {
    double b[6][24] = {};
};

void fill_b(const double grad[8][3], BMatrix& B) {
    for (int i = 0; i < 8; ++i) {
        double gx = grad[i][0], gy = grad[i][1], gz = grad[i][2];
        int c = 3 * i;
        B.b[0][c + 0] = gx;
        B.b[1][c + 1] = gy;
        B.b[2][c + 2] = gz;
        B.b[3][c + 0] = gy;
        B.b[3][c + 1] = gx;
        B.b[4][c + 1] = gz;
        B.b[4][c + 2] = gy;
        B.b[5][c + 0] = gz;
        B.b[5][c + 2] = gx;
    }
}

}  // namespace

LinearSystem assemble(const hexmesh::HexMesh& mesh, const fea::MaterialParams& mat,
                      const std::vector<std::string>& fixed_node_sets) {
    mat.validate();
    if (mesh.hex_count() == 0) throw Error("fea-modal", "mesh has no elements");

    const size_t nn = mesh.node_count();
    const int n_dof_full = int(3 * nn);
    const double lambda = mat.bulk_modulus - 2.0 * mat.shear_modulus / 3.0;
    const double mu = mat.shear_modulus;

    // Voigt elasticity, deviatoric/volumetric split for the B-bar treatment
    Eigen::Matrix<double, 6, 6> D = Eigen::Matrix<double, 6, 6>::Zero();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) D(i, j) = lambda;
    for (int i = 0; i < 3; ++i) D(i, i) += 2.0 * mu;
    for (int i = 3; i < 6; ++i) D(i, i) = mu;

    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(mesh.hex_count() * 24 * 24);
    Eigen::VectorXd mass = Eigen::VectorXd::Zero(n_dof_full);

    const double g = hexshape::kGauss2;
    const double gp[2] = {-g, g};

    for (size_t e = 0; e < mesh.hex_count(); ++e) {
        auto corners = mesh.corners(int(e));
        std::array<Vec3, 8> x;
        for (int i = 0; i < 8; ++i) x[size_t(i)] = corners[size_t(i)] * kMm;

        // gauss-point gradients and volume
        double grads[8][8][3];
        double detw[8];
        double Nvals[8][8];
        double vol = 0.0;
        int q = 0;
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
                for (int c = 0; c < 2; ++c, ++q) {
                    double dN[8][3];
                    hexshape::shape_deriv(gp[a], gp[b], gp[c], dN);
                    hexshape::shape(gp[a], gp[b], gp[c], Nvals[q]);
                    Mat3 J = hexshape::jacobian(x, dN);
                    double dj = J.det();
                    if (dj <= 0.0)
                        throw Error("fea-modal", "element " + std::to_string(e) +
                                                 " has non-positive Jacobian");
                    Mat3 Ji = J.inverse();
                    for (int i = 0; i < 8; ++i) {
                        grads[q][i][0] = Ji.m[0][0] * dN[i][0] + Ji.m[1][0] * dN[i][1] +
                                         Ji.m[2][0] * dN[i][2];
                        grads[q][i][1] = Ji.m[0][1] * dN[i][0] + Ji.m[1][1] * dN[i][1] +
                                         Ji.m[2][1] * dN[i][2];
                        grads[q][i][2] = Ji.m[0][2] * dN[i][0] + Ji.m[1][2] * dN[i][1] +
                                         Ji.m[2][2] * dN[i][2];
                    }
                    detw[q] = dj;  // unit gauss weights
                    vol += dj;
                }

        // volume-averaged gradients give the mean (B-bar) dilatational part
        double gbar[8][3] = {};
        for (int qq = 0; qq < 8; ++qq)
            for (int i = 0; i < 8; ++i)
                for (int d = 0; d < 3; ++d) gbar[i][d] += grads[qq][i][d] * detw[qq] / vol;

        Eigen::Matrix<double, 24, 24> ke = Eigen::Matrix<double, 24, 24>::Zero();
        for (int qq = 0; qq < 8; ++qq) {
            BMatrix B;
            fill_b(grads[qq], B);
            // replace the dilatational column part: B <- B_dev + B-bar_vol
            for (int i = 0; i < 8; ++i) {
                double dvol[3] = {
                    (grads[qq][i][0] - gbar[i][0]) / 3.0,
                    (grads[qq][i][1] - gbar[i][1]) / 3.0,
                    (grads[qq][i][2] - gbar[i][2]) / 3.0,
                };
                for (int r = 0; r < 3; ++r) {
                    B.b[r][3 * i + 0] -= dvol[0];
                    B.b[r][3 * i + 1] -= dvol[1];
                    B.b[r][3 * i + 2] -= dvol[2];
                }
            }
            Eigen::Matrix<double, 6, 24> Bm;
            for (int r = 0; r < 6; ++r)
                for (int cc = 0; cc < 24; ++cc) Bm(r, cc) = B.b[r][cc];
            ke += Bm.transpose() * D * Bm * detw[qq];

            for (int i = 0; i < 8; ++i) {
                double m = mat.density * Nvals[qq][i] * detw[qq];  // row-sum lump
                for (int d = 0; d < 3; ++d)
                    mass[3 * mesh.hexes[e][size_t(i)] + d] += m;
            }
        }

        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j)
                for (int di = 0; di < 3; ++di)
                    for (int dj2 = 0; dj2 < 3; ++dj2)
                        triplets.emplace_back(3 * mesh.hexes[e][size_t(i)] + di,
                                              3 * mesh.hexes[e][size_t(j)] + dj2,
                                              ke(3 * i + di, 3 * j + dj2));
    }

    // constraints by elimination
    std::vector<int> constrained;
    for (const auto& set_name : fixed_node_sets) {
        auto it = mesh.node_sets.find(set_name);
        if (it == mesh.node_sets.end())
            throw Error("fea-modal", "mesh has no node set '" + set_name + "'");
        for (int n : it->second)
            for (int d = 0; d < 3; ++d) constrained.push_back(3 * n + d);
    }
    std::sort(constrained.begin(), constrained.end());
    constrained.erase(std::unique(constrained.begin(), constrained.end()),
                      constrained.end());

    std::vector<int> full_to_red(size_t(n_dof_full), -1);
    int n_red = 0;
    {
        size_t ci = 0;
        for (int d = 0; d < n_dof_full; ++d) {
            if (ci < constrained.size() && constrained[ci] == d) {
                ci++;
                continue;
            }
            full_to_red[size_t(d)] = n_red++;
        }
    }

    LinearSystem sys;
    sys.n_nodes = nn;
    sys.constrained_dofs = constrained;
    sys.lumped_mass.resize(n_red);
    for (int d = 0; d < n_dof_full; ++d)
        if (full_to_red[size_t(d)] >= 0) sys.lumped_mass[full_to_red[size_t(d)]] = mass[d];

    std::vector<Eigen::Triplet<double>> reduced;
    reduced.reserve(triplets.size());
    for (const auto& t : triplets) {
        int r = full_to_red[size_t(t.row())], c = full_to_red[size_t(t.col())];
        if (r >= 0 && c >= 0) reduced.emplace_back(r, c, t.value());
    }
    sys.stiffness.resize(n_red, n_red);
    sys.stiffness.setFromTriplets(reduced.begin(), reduced.end());
    sys.stiffness.makeCompressed();
    return sys;
}

ModalResult solve_modes(const LinearSystem& sys, int n_modes, double shift_hz) {
    if (n_modes < 1) throw Error("fea-modal", "n_modes must be >= 1");
    const int n = sys.n_dof();
    if (n == 0) throw Error("fea-modal", "system has no free dofs");
    n_modes = std::min(n_modes, n);

    // shift keeps K + sigma M positive definite for free-free bodies
    double kappa = 0.0;
    for (int i = 0; i < n; ++i)
        kappa = std::max(kappa, sys.stiffness.coeff(i, i) / sys.lumped_mass[i]);
    double sigma = std::max(std::pow(2.0 * M_PI * shift_hz, 2), 1e-8 * kappa);

    Eigen::SparseMatrix<double> A = sys.stiffness;
    for (int i = 0; i < n; ++i) A.coeffRef(i, i) += sigma * sys.lumped_mass[i];
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(A);
    if (solver.info() != Eigen::Success)
        throw Error("fea-modal",
                    "factorization failed; try a larger shift (current " +
                        std::to_string(shift_hz) + " Hz)");

    // Lanczos in the M inner product on Op = (K + sigma M)^-1 M
    const int m = std::min(n, std::max({2 * n_modes + 20, 40}));
    std::vector<Eigen::VectorXd> basis;
    basis.reserve(size_t(m));
    std::vector<double> alpha, beta;

    Eigen::VectorXd Mdiag = sys.lumped_mass;
    auto m_dot = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        return double(a.dot(Mdiag.cwiseProduct(b)));
    };

    Rng rng(777);
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = rng.uniform(-1, 1);
    v /= std::sqrt(m_dot(v, v));
    basis.push_back(v);

    Eigen::VectorXd w;
    for (int j = 0; j < m; ++j) {
        w = solver.solve(Mdiag.cwiseProduct(basis[size_t(j)]));
        double a = m_dot(w, basis[size_t(j)]);
        alpha.push_back(a);
        w -= a * basis[size_t(j)];
        if (j > 0) w -= beta[size_t(j - 1)] * basis[size_t(j - 1)];
        // full reorthogonalization keeps the basis clean at these sizes
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& q : basis) w -= m_dot(w, q) * q;
        double b = std::sqrt(std::max(m_dot(w, w), 0.0));
        beta.push_back(b);
        if (b < 1e-14 || j + 1 >= m) break;
        basis.push_back(w / b);
    }

    const int k = int(alpha.size());
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(k, k);
    for (int i = 0; i < k; ++i) {
        T(i, i) = alpha[size_t(i)];
        if (i + 1 < k) {
            T(i, i + 1) = beta[size_t(i)];
            T(i + 1, i) = beta[size_t(i)];
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);

    // largest theta of T correspond to the smallest lambda of (K, M)
    struct Pair {
        double lambda;
        Eigen::VectorXd x;
    };
    std::vector<Pair> pairs;
    int want = std::min(n_modes, k);
    for (int idx = k - 1; idx >= 0 && int(pairs.size()) < want; --idx) {
        Eigen::VectorXd s = es.eigenvectors().col(idx);
        Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
        for (int j = 0; j < k && j < int(basis.size()); ++j) x += s[j] * basis[size_t(j)];
        double xmx = m_dot(x, x);
        if (xmx <= 0) continue;
        x /= std::sqrt(xmx);
        // Rayleigh quotient gives the reported eigenvalue
        double xkx = double(x.dot(sys.stiffness * x));
        pairs.push_back({std::max(xkx, 0.0), x});
    }
    std::sort(pairs.begin(), pairs.end(),
              [](const Pair& a, const Pair& b) { return a.lambda < b.lambda; });

    ModalResult result;
    for (const auto& p : pairs) {
        result.frequencies_hz.push_back(std::sqrt(p.lambda) / (2.0 * M_PI));
        result.mode_shapes.push_back(p.x);
    }

    // rigid threshold: far below the first flexible estimate (mode 7); with
    // fewer modes computed, fall back to a matrix-scale proxy
    double f7 = result.frequencies_hz.size() > 6
                    ? result.frequencies_hz[6]
                    : 1e-3 * std::sqrt(kappa) / (2.0 * M_PI);
    double threshold = std::max(1e-6, 1e-3 * f7);
    result.rigid_mode_count = 0;
    for (double f : result.frequencies_hz)
        if (f < threshold) result.rigid_mode_count++;
    return result;
}

double first_flexible(const ModalResult& result) {
    if (int(result.frequencies_hz.size()) <= result.rigid_mode_count)
        throw Error("fea-modal", "all computed modes are rigid; request more modes");
    return result.frequencies_hz[size_t(result.rigid_mode_count)];
}

std::vector<Vec3> ModalResult::mode_as_vectors(const LinearSystem& sys, int mode) const {
    const auto& x = mode_shapes.at(size_t(mode));
    std::vector<Vec3> out(sys.n_nodes, Vec3{0, 0, 0});
    std::vector<int> full_to_red(3 * sys.n_nodes, -1);
    {
        size_t ci = 0;
        int r = 0;
        for (int d = 0; d < int(3 * sys.n_nodes); ++d) {
            if (ci < sys.constrained_dofs.size() && sys.constrained_dofs[ci] == d) {
                ci++;
                continue;
            }
            full_to_red[size_t(d)] = r++;
        }
    }
    for (size_t node = 0; node < sys.n_nodes; ++node)
        for (int d = 0; d < 3; ++d) {
            int r = full_to_red[3 * node + size_t(d)];
            if (r >= 0) out[node][d] = x[r];
        }
    return out;
}

std::string frequency_table_csv(const ModalResult& result) {
    std::ostringstream os;
    os << "mode_index,frequency_hz,is_rigid\n";
    for (size_t i = 0; i < result.frequencies_hz.size(); ++i)
        os << i << "," << format_full(result.frequencies_hz[i]) << ","
           << (int(i) < result.rigid_mode_count ? 1 : 0) << "\n";
    return os.str();
}

void export_mode_shapes(const hexmesh::HexMesh& mesh, const LinearSystem& sys,
                        const ModalResult& result, int count,
                        const std::string& path_prefix) {
    count = std::min<int>(count, int(result.frequencies_hz.size()));
    for (int m = 0; m < count; ++m) {
        auto shape = result.mode_as_vectors(sys, m);
        std::ostringstream path;
        path << path_prefix << "_mode" << m << ".vtk";
        hexmesh::write_vtk(mesh, path.str(), {{"mode_shape", shape}}, {});
    }
}

}  // namespace am::modal
