#pragma once

// Test-only Timoshenko beam oracle: 1D two-node beam elements (transverse
// deflection + section rotation) with shear deformation and rotary inertia,
// assembled densely and solved with Eigen. Free-free boundary conditions.
// Independent of the 3D solid assembly it cross-checks.

#include <Eigen/Dense>
#include <cmath>

namespace beam_oracle {

struct BeamSpec {
    double length;     // m
    double width;      // m (section b)
    double height;     // m (section h, bending direction)
    double youngs;     // Pa
    double shear;      // Pa
    double density;    // kg/m^3
    double kappa;      // shear correction factor
};

inline double kappa_rect(double poisson) {
    return 10.0 * (1.0 + poisson) / (12.0 + 11.0 * poisson);
}

// First flexible (bending) natural frequency of the free-free beam, Hz.
inline double first_bending_hz(const BeamSpec& s, int elements = 200) {
    const double A = s.width * s.height;
    const double I = s.width * std::pow(s.height, 3) / 12.0;
    const double L = s.length / elements;
    const double phi = 12.0 * s.youngs * I / (s.kappa * s.shear * A * L * L);

    const int n = 2 * (elements + 1);  // (w, theta) per node
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);

    // standard shear-deformable element stiffness and consistent mass
    double kc = s.youngs * I / ((1.0 + phi) * L * L * L);
    double ke[4][4] = {
        {12 * kc, 6 * L * kc, -12 * kc, 6 * L * kc},
        {6 * L * kc, (4 + phi) * L * L * kc, -6 * L * kc, (2 - phi) * L * L * kc},
        {-12 * kc, -6 * L * kc, 12 * kc, -6 * L * kc},
        {6 * L * kc, (2 - phi) * L * L * kc, -6 * L * kc, (4 + phi) * L * L * kc}};

    // translational мass (lumped) + rotary inertia (lumped); a fine mesh makes
    // the lumping error negligible
    double m_t = s.density * A * L / 2.0;
    double m_r = s.density * I * L / 2.0;

    for (int e = 0; e < elements; ++e) {
        int dofs[4] = {2 * e, 2 * e + 1, 2 * e + 2, 2 * e + 3};
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) K(dofs[i], dofs[j]) += ke[i][j];
        M(dofs[0], dofs[0]) += m_t;
        M(dofs[2], dofs[2]) += m_t;
        M(dofs[1], dofs[1]) += m_r;
        M(dofs[3], dofs[3]) += m_r;
    }

    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(K, M);
    const auto& vals = es.eigenvalues();
    // skip the two rigid modes (translation, rotation)
    int count = 0;
    for (int i = 0; i < vals.size(); ++i) {
        if (vals[i] < 1e-3) continue;  // rad^2/s^2, rigid-mode numerical zeros
        count++;
        if (count == 1) return std::sqrt(vals[i]) / (2.0 * M_PI);
    }
    return 0.0;
}

// Euler-Bernoulli closed form for the free-free fundamental (slender limit).
inline double euler_first_bending_hz(const BeamSpec& s) {
    const double A = s.width * s.height;
    const double I = s.width * std::pow(s.height, 3) / 12.0;
    const double beta_l = 4.73004074;
    return beta_l * beta_l / (2.0 * M_PI * s.length * s.length) *
           std::sqrt(s.youngs * I / (s.density * A));
}

}  // namespace beam_oracle
