#pragma once

#include <array>

#include "am/core.hpp"

namespace am::hexshape {

// Corner parent coordinates for the standard hex ordering (bottom 0-3 CCW,
// top 4-7).
inline constexpr double kXi[8] = {-1, 1, 1, -1, -1, 1, 1, -1};
inline constexpr double kEta[8] = {-1, -1, 1, 1, -1, -1, 1, 1};
inline constexpr double kZeta[8] = {-1, -1, -1, -1, 1, 1, 1, 1};

inline void shape(double xi, double eta, double zeta, double N[8]) {
    for (int i = 0; i < 8; ++i)
        N[i] = 0.125 * (1 + xi * kXi[i]) * (1 + eta * kEta[i]) * (1 + zeta * kZeta[i]);
}

inline void shape_deriv(double xi, double eta, double zeta, double dN[8][3]) {
    for (int i = 0; i < 8; ++i) {
        dN[i][0] = 0.125 * kXi[i] * (1 + eta * kEta[i]) * (1 + zeta * kZeta[i]);
        dN[i][1] = 0.125 * kEta[i] * (1 + xi * kXi[i]) * (1 + zeta * kZeta[i]);
        dN[i][2] = 0.125 * kZeta[i] * (1 + xi * kXi[i]) * (1 + eta * kEta[i]);
    }
}

// Jacobian of the isoparametric map at a parent point.
inline am::Mat3 jacobian(const std::array<Vec3, 8>& x, const double dN[8][3]) {
    am::Mat3 J;
    for (int i = 0; i < 8; ++i) {
        J.m[0][0] += x[size_t(i)].x * dN[i][0];
        J.m[0][1] += x[size_t(i)].x * dN[i][1];
        J.m[0][2] += x[size_t(i)].x * dN[i][2];
        J.m[1][0] += x[size_t(i)].y * dN[i][0];
        J.m[1][1] += x[size_t(i)].y * dN[i][1];
        J.m[1][2] += x[size_t(i)].y * dN[i][2];
        J.m[2][0] += x[size_t(i)].z * dN[i][0];
        J.m[2][1] += x[size_t(i)].z * dN[i][1];
        J.m[2][2] += x[size_t(i)].z * dN[i][2];
    }
    return J;
}

inline constexpr double kGauss2 = 0.57735026918962576;  // 1/sqrt(3)

// Volume by 2x2x2 quadrature (exact for trilinear hexes).
inline double volume(const std::array<Vec3, 8>& x) {
    double v = 0.0;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 2; ++c) {
                double dN[8][3];
                shape_deriv((2 * a - 1) * kGauss2, (2 * b - 1) * kGauss2,
                            (2 * c - 1) * kGauss2, dN);
                v += jacobian(x, dN).det();
            }
    return v;
}

// Mean spatial gradient operators b_i = (1/V) * integral of grad(N_i): the
// uniform-gradient element's discrete derivative. Returns element volume.
inline double mean_gradients(const std::array<Vec3, 8>& x, std::array<Vec3, 8>& b) {
    for (auto& v : b) v = {0, 0, 0};
    double vol = 0.0;
    for (int a = 0; a < 2; ++a)
        for (int bq = 0; bq < 2; ++bq)
            for (int c = 0; c < 2; ++c) {
                double dN[8][3];
                shape_deriv((2 * a - 1) * kGauss2, (2 * bq - 1) * kGauss2,
                            (2 * c - 1) * kGauss2, dN);
                am::Mat3 J = jacobian(x, dN);
                double dj = J.det();
                am::Mat3 Ji = J.inverse();
                vol += dj;
                for (int i = 0; i < 8; ++i) {
                    // grad N_i = J^-T dN_i
                    b[size_t(i)].x += (Ji.m[0][0] * dN[i][0] + Ji.m[1][0] * dN[i][1] +
                                       Ji.m[2][0] * dN[i][2]) * dj;
                    b[size_t(i)].y += (Ji.m[0][1] * dN[i][0] + Ji.m[1][1] * dN[i][1] +
                                       Ji.m[2][1] * dN[i][2]) * dj;
                    b[size_t(i)].z += (Ji.m[0][2] * dN[i][0] + Ji.m[1][2] * dN[i][1] +
                                       Ji.m[2][2] * dN[i][2]) * dj;
                }
            }
    for (auto& v : b) v *= 1.0 / vol;
    return vol;
}

}  // namespace am::hexshape
