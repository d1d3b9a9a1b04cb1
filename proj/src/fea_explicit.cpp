#include "am/fea_explicit.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "am/hexshape.hpp"

namespace am::fea {

namespace {

constexpr double kMm = 1e-3;  // mesh mm -> solver m

// Flanagan-Belytschko hourglass base vectors for the standard hex ordering.
const double kHourglass[4][8] = {
    {1, 1, -1, -1, -1, -1, 1, 1},
    {1, -1, -1, 1, -1, 1, 1, -1},
    {1, -1, 1, -1, 1, -1, 1, -1},
    {-1, 1, -1, 1, 1, -1, 1, -1},
};

double quad_area(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
    return 0.5 * norm(cross(c - a, d - b));
}

}  // namespace

void MaterialParams::validate() const {
    if (density <= 0 || shear_modulus <= 0 || bulk_modulus <= 0)
        throw Error("fea-explicit", "material constants must be positive");
    if (bulk_modulus < (2.0 / 3.0) * shear_modulus)
        throw Error("fea-explicit", "bulk modulus below 2G/3 (negative Poisson ratio)");
}

void ContactSpec::validate() const {
    if (friction < 0) throw Error("fea-explicit", "friction must be >= 0");
    if (penalty_scale <= 0) throw Error("fea-explicit", "penalty must be positive");
}

StressResult neo_hookean_stress(const Mat3& F, const MaterialParams& mat) {
    StressResult result;
    result.J = F.det();
    if (result.J <= 0.0) {
        result.inverted = true;
        return result;
    }
    const double J = result.J;
    Mat3 B = F * F.transpose();
    double p = 0.5 * mat.bulk_modulus * (J - 1.0 / J);
    double iso = std::pow(J, -5.0 / 3.0) * mat.shear_modulus;
    double tr3 = B.trace() / 3.0;
    Mat3 sigma = B * iso;
    sigma.m[0][0] += p - iso * tr3;
    sigma.m[1][1] += p - iso * tr3;
    sigma.m[2][2] += p - iso * tr3;
    result.cauchy = sigma;
    return result;
}

double neo_hookean_energy(const Mat3& F, const MaterialParams& mat) {
    double J = F.det();
    if (J <= 0.0) return std::numeric_limits<double>::infinity();
    Mat3 B = F * F.transpose();
    double i1_bar = std::pow(J, -2.0 / 3.0) * B.trace();
    double w_vol = 0.25 * mat.bulk_modulus * (J * J - 1.0) -
                   0.5 * mat.bulk_modulus * std::log(J);
    double w_iso = 0.5 * mat.shear_modulus * (i1_bar - 3.0);
    return w_vol + w_iso;
}

std::string heartbeat_csv(const std::vector<HeartbeatRow>& rows) {
    std::ostringstream os;
    os << "time_s,platen_disp_mm,platen_force_N,eng_strain,eng_stress_MPa,active_elements\n";
    for (const auto& r : rows) {
        os << format_full(r.time_s) << "," << format_full(r.platen_disp_mm) << ","
           << format_full(r.platen_force_N) << "," << format_full(r.eng_strain) << ","
           << format_full(r.eng_stress_MPa) << "," << r.active_elements << "\n";
    }
    return os.str();
}

std::vector<HeartbeatRow> read_heartbeat_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("reduce", "cannot open heartbeat CSV: " + path);
    std::string line;
    std::getline(in, line);
    if (line.rfind("time_s,", 0) != 0)
        throw Error("reduce", "not a heartbeat CSV (bad header): " + path);
    std::vector<HeartbeatRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        HeartbeatRow r;
        unsigned long long active = 0;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf,%llu", &r.time_s,
                        &r.platen_disp_mm, &r.platen_force_N, &r.eng_strain,
                        &r.eng_stress_MPa, &active) != 6)
            throw Error("reduce", "bad heartbeat row: " + line);
        r.active_elements = size_t(active);
        rows.push_back(r);
    }
    return rows;
}

ExplicitSim::ExplicitSim(const hexmesh::HexMesh& mesh, const MaterialParams& mat,
                         const SimOptions& options)
    : mat_(mat), opt_(options) {
    mat_.validate();
    if (opt_.mass_scale < 1.0)
        throw Error("fea-explicit", "mass_scale must be >= 1");
    mat_.density *= opt_.mass_scale;
    opt_.contact.validate();
    if (mesh.hex_count() == 0) throw Error("fea-explicit", "mesh has no elements");
    build_elements(mesh);
    if (opt_.contact.stable_cap) {
        // spring stiffness each node can carry at the element-CFL step
        double dt0 = critical_timestep();
        penalty_cap_.resize(node_count());
        for (size_t n = 0; n < node_count(); ++n)
            penalty_cap_[n] = 0.125 * state_.mass[n] / (dt0 * dt0);
    }
}

void ExplicitSim::build_elements(const hexmesh::HexMesh& mesh) {
    const size_t nn = mesh.node_count();
    const size_t ne = mesh.hex_count();
    state_.reference.resize(nn);
    for (size_t n = 0; n < nn; ++n) state_.reference[n] = mesh.nodes[n] * kMm;
    state_.u.assign(nn, {0, 0, 0});
    state_.v.assign(nn, {0, 0, 0});
    state_.mass.assign(nn, 0.0);
    state_.active.assign(ne, 1);
    state_.def_grad.assign(ne, Mat3::identity());

    conn_ = mesh.hexes;
    grad0_.resize(ne);
    hg_gamma_.resize(ne);
    vol0_.resize(ne);
    hsize0_.resize(ne);
    inverted_.assign(ne, 0);

    double h_sum = 0.0;
    for (size_t e = 0; e < ne; ++e) {
        std::array<Vec3, 8> x;
        for (int i = 0; i < 8; ++i) x[size_t(i)] = state_.reference[size_t(conn_[e][size_t(i)])];
        std::array<Vec3, 8> b;
        double v0 = hexshape::mean_gradients(x, b);
        if (v0 <= 0.0)
            throw Error("fea-explicit",
                        "element " + std::to_string(e) + " has non-positive volume");
        grad0_[e] = b;
        vol0_[e] = v0;
        hsize0_[e] = std::cbrt(v0);
        h_sum += hsize0_[e];

        // orthogonalize the hourglass base against the linear field
        for (int a = 0; a < 4; ++a) {
            Vec3 xh{0, 0, 0};
            for (int i = 0; i < 8; ++i) xh += x[size_t(i)] * kHourglass[a][i];
            for (int i = 0; i < 8; ++i)
                hg_gamma_[e][size_t(a * 8 + i)] = kHourglass[a][i] - dot(xh, b[size_t(i)]);
        }

        double m_node = mat_.density * v0 / 8.0;
        for (int i = 0; i < 8; ++i) state_.mass[size_t(conn_[e][size_t(i)])] += m_node;
    }
    mean_h_ = h_sum / double(ne);
    penalty_k_ = opt_.contact.penalty_scale * mat_.dilatational_modulus() * mean_h_;
    surface_dirty_ = true;
}

std::vector<Vec3> ExplicitSim::internal_forces() {
    const size_t nn = node_count();
    f_int_.assign(nn, {0, 0, 0});
    std::fill(inverted_.begin(), inverted_.end(), 0);

    const double hg_k_coeff = opt_.hourglass_stiffness * mat_.dilatational_modulus();
    const double hg_c_coeff = opt_.hourglass_viscosity * mat_.density * mat_.wave_speed();
    const double K = mat_.bulk_modulus;
    const double G = mat_.shear_modulus;

    for (size_t e = 0; e < conn_.size(); ++e) {
        if (!state_.active[e]) continue;
        const auto& c = conn_[e];
        const auto& b = grad0_[e];

        Vec3 ue[8], ve[8];
        for (int i = 0; i < 8; ++i) {
            ue[i] = state_.u[size_t(c[size_t(i)])];
            ve[i] = state_.v[size_t(c[size_t(i)])];
        }

        double f00 = 1, f01 = 0, f02 = 0;
        double f10 = 0, f11 = 1, f12 = 0;
        double f20 = 0, f21 = 0, f22 = 1;
        for (int i = 0; i < 8; ++i) {
            const Vec3& bi = b[size_t(i)];
            f00 += ue[i].x * bi.x; f01 += ue[i].x * bi.y; f02 += ue[i].x * bi.z;
            f10 += ue[i].y * bi.x; f11 += ue[i].y * bi.y; f12 += ue[i].y * bi.z;
            f20 += ue[i].z * bi.x; f21 += ue[i].z * bi.y; f22 += ue[i].z * bi.z;
        }
        Mat3& Fg = state_.def_grad[e];
        Fg.m[0][0] = f00; Fg.m[0][1] = f01; Fg.m[0][2] = f02;
        Fg.m[1][0] = f10; Fg.m[1][1] = f11; Fg.m[1][2] = f12;
        Fg.m[2][0] = f20; Fg.m[2][1] = f21; Fg.m[2][2] = f22;

        // cofactors give J and J F^-T in one shot
        double c00 = f11 * f22 - f12 * f21;
        double c01 = f12 * f20 - f10 * f22;
        double c02 = f10 * f21 - f11 * f20;
        double c10 = f02 * f21 - f01 * f22;
        double c11 = f00 * f22 - f02 * f20;
        double c12 = f01 * f20 - f00 * f21;
        double c20 = f01 * f12 - f02 * f11;
        double c21 = f02 * f10 - f00 * f12;
        double c22 = f00 * f11 - f01 * f10;
        double J = f00 * c00 + f01 * c01 + f02 * c02;
        if (J <= 0.0 || !std::isfinite(J)) {
            inverted_[e] = 1;
            continue;
        }

        // P = (p - iso trB/3) cof(F) + (J iso) F, using B F^-T = F
        double trB = f00 * f00 + f01 * f01 + f02 * f02 + f10 * f10 + f11 * f11 +
                     f12 * f12 + f20 * f20 + f21 * f21 + f22 * f22;
        double cb = std::cbrt(J);
        double iso = G / (J * cb * cb);  // G J^(-5/3)
        double p = 0.5 * K * (J - 1.0 / J);
        double a1 = p - iso * trB / 3.0;
        double a2 = J * iso;

        double p00 = a1 * c00 + a2 * f00, p01 = a1 * c01 + a2 * f01,
               p02 = a1 * c02 + a2 * f02;
        double p10 = a1 * c10 + a2 * f10, p11 = a1 * c11 + a2 * f11,
               p12 = a1 * c12 + a2 * f12;
        double p20 = a1 * c20 + a2 * f20, p21 = a1 * c21 + a2 * f21,
               p22 = a1 * c22 + a2 * f22;

        const double v0 = vol0_[e];
        for (int i = 0; i < 8; ++i) {
            const Vec3& bi = b[size_t(i)];
            Vec3& fi = f_int_[size_t(c[size_t(i)])];
            fi.x += v0 * (p00 * bi.x + p01 * bi.y + p02 * bi.z);
            fi.y += v0 * (p10 * bi.x + p11 * bi.y + p12 * bi.z);
            fi.z += v0 * (p20 * bi.x + p21 * bi.y + p22 * bi.z);
        }

        // hourglass resistance (stiffness + viscous), orthogonal to affine
        // fields; the 1/8 keeps the mode's frequency and damping rate inside
        // the central-difference stability margin at the element CFL step
        const double k = hg_k_coeff * hsize0_[e] / 8.0;
        const double cv = hg_c_coeff * hsize0_[e] * hsize0_[e] / 8.0;
        if (k > 0.0 || cv > 0.0) {
            const auto& g = hg_gamma_[e];
            for (int a = 0; a < 4; ++a) {
                Vec3 q{0, 0, 0}, qdot{0, 0, 0};
                for (int i = 0; i < 8; ++i) {
                    q += ue[i] * g[size_t(a * 8 + i)];
                    qdot += ve[i] * g[size_t(a * 8 + i)];
                }
                Vec3 fh = q * k + qdot * cv;
                for (int i = 0; i < 8; ++i)
                    f_int_[size_t(c[size_t(i)])] += fh * g[size_t(a * 8 + i)];
            }
        }
    }
    return f_int_;
}

double ExplicitSim::critical_timestep() {
    double dt_min = std::numeric_limits<double>::infinity();
    for (size_t e = 0; e < conn_.size(); ++e) {
        if (!state_.active[e]) continue;
        std::array<Vec3, 8> x;
        for (int i = 0; i < 8; ++i)
            x[size_t(i)] = state_.reference[size_t(conn_[e][size_t(i)])] +
                           state_.u[size_t(conn_[e][size_t(i)])];
        double vol = hexshape::volume(x);
        double max_area = 0.0;
        for (int f = 0; f < 6; ++f) {
            const int* fc = hexmesh::kHexFaces[f];
            max_area = std::max(max_area, quad_area(x[size_t(fc[0])], x[size_t(fc[1])],
                                                    x[size_t(fc[2])], x[size_t(fc[3])]));
        }
        if (vol <= 0.0 || max_area <= 0.0) continue;  // dying element
        dt_min = std::min(dt_min, vol / max_area / element_wave_speed(e));
    }
    if (!std::isfinite(dt_min)) throw Error("fea-explicit", "no usable elements left");
    return opt_.timestep_safety * dt_min;
}

double ExplicitSim::element_wave_speed(size_t e) const {
    // the Neo-Hookean tangent stiffens under compression and large stretch;
    // the rest-state wave speed underestimates the stable step there
    const Mat3& F = state_.def_grad[e];
    double J = F.det();
    if (J <= 1e-6 || !std::isfinite(J)) return mat_.wave_speed();
    Mat3 B = F * F.transpose();
    double k_t = std::max(0.5 * (1.0 + 1.0 / (J * J)), 1.0);
    double g_t = std::max(std::pow(J, -5.0 / 3.0) * std::max(B.trace() / 3.0, 1.0), 1.0);
    double m_t = mat_.bulk_modulus * k_t + (4.0 / 3.0) * mat_.shear_modulus * g_t;
    return std::sqrt(m_t / mat_.density);
}

void ExplicitSim::fix_nodes(const std::vector<int>& nodes) {
    fixed_nodes_.insert(fixed_nodes_.end(), nodes.begin(), nodes.end());
}

void ExplicitSim::fix_lateral(const std::vector<int>& nodes) {
    lateral_fixed_nodes_.insert(lateral_fixed_nodes_.end(), nodes.begin(), nodes.end());
}

void ExplicitSim::drive_nodes(const std::vector<int>& nodes,
                              std::function<Vec3(double)> velocity) {
    driven_nodes_ = nodes;
    driven_velocity_ = std::move(velocity);
}

void ExplicitSim::enable_platens(std::function<double(double)> top_speed, double friction) {
    Aabb box;
    for (size_t n = 0; n < node_count(); ++n) box.expand(state_.reference[n]);
    platen_bottom_z_ = box.lo.z;
    platen_top_z_ = box.hi.z;
    platen_speed_ = std::move(top_speed);
    platen_mu_ = friction;
    platens_enabled_ = true;
}

void ExplicitSim::rebuild_surface() {
    struct Key {
        std::array<int, 4> v;
        bool operator==(const Key& o) const { return v == o.v; }
    };
    struct KeyHash {
        size_t operator()(const Key& k) const {
            size_t h = 1469598103934665603ull;
            for (int x : k.v) {
                h ^= size_t(x);
                h *= 1099511628211ull;
            }
            return h;
        }
    };
    std::unordered_map<Key, int, KeyHash> counts;
    counts.reserve(conn_.size() * 3);
    auto key_of = [&](size_t e, int f) {
        Key k;
        for (int i = 0; i < 4; ++i)
            k.v[size_t(i)] = conn_[e][size_t(hexmesh::kHexFaces[f][i])];
        std::sort(k.v.begin(), k.v.end());
        return k;
    };
    for (size_t e = 0; e < conn_.size(); ++e) {
        if (!state_.active[e]) continue;
        for (int f = 0; f < 6; ++f) counts[key_of(e, f)]++;
    }
    surface_.clear();
    surf_nodes_.clear();
    for (size_t e = 0; e < conn_.size(); ++e) {
        if (!state_.active[e]) continue;
        for (int f = 0; f < 6; ++f) {
            if (counts[key_of(e, f)] != 1) continue;
            surface_.emplace_back(int(e), f);
            std::array<int, 4> fn;
            for (int i = 0; i < 4; ++i)
                fn[size_t(i)] = conn_[e][size_t(hexmesh::kHexFaces[f][i])];
            surf_nodes_.push_back(fn);
        }
    }

    std::vector<uint8_t> on_surface(node_count(), 0);
    for (const auto& fn : surf_nodes_)
        for (int i = 0; i < 4; ++i) on_surface[size_t(fn[size_t(i)])] = 1;
    surf_of_node_.clear();
    for (size_t n = 0; n < node_count(); ++n)
        if (on_surface[n]) surf_of_node_.push_back(int(n));

    // contact exclusion: all nodes of elements incident to a surface node
    node_ring_.assign(node_count(), {});
    for (size_t e = 0; e < conn_.size(); ++e) {
        if (!state_.active[e]) continue;
        for (int i = 0; i < 8; ++i) {
            int ni = conn_[e][size_t(i)];
            if (!on_surface[size_t(ni)]) continue;
            for (int j = 0; j < 8; ++j)
                node_ring_[size_t(ni)].push_back(conn_[e][size_t(j)]);
        }
    }
    for (auto& ring : node_ring_) {
        std::sort(ring.begin(), ring.end());
        ring.erase(std::unique(ring.begin(), ring.end()), ring.end());
    }
    surface_dirty_ = false;
    grid_.steps_since_rebuild = 1 << 30;
}

void ExplicitSim::rebuild_contact_grid() {
    Aabb box;
    for (int n : surf_of_node_)
        box.expand(state_.reference[size_t(n)] + state_.u[size_t(n)]);
    box.pad(mean_h_);
    grid_.cell = 2.0 * mean_h_;
    grid_.origin = box.lo;
    Vec3 ext = box.extent();
    grid_.nx = std::max(1, int(std::ceil(ext.x / grid_.cell)));
    grid_.ny = std::max(1, int(std::ceil(ext.y / grid_.cell)));
    grid_.nz = std::max(1, int(std::ceil(ext.z / grid_.cell)));
    double cells = double(grid_.nx) * double(grid_.ny) * double(grid_.nz);
    if (!(cells < 2e8))
        throw Error("fea-explicit",
                    "contact grid exploded; the simulation has gone unstable");
    grid_.faces.assign(size_t(grid_.nx) * grid_.ny * grid_.nz, {});

    for (size_t fi = 0; fi < surf_nodes_.size(); ++fi) {
        Aabb fb;
        for (int i = 0; i < 4; ++i) {
            int n = surf_nodes_[fi][size_t(i)];
            fb.expand(state_.reference[size_t(n)] + state_.u[size_t(n)]);
        }
        fb.pad(0.5 * mean_h_);
        int x0 = std::clamp(int((fb.lo.x - grid_.origin.x) / grid_.cell), 0, grid_.nx - 1);
        int x1 = std::clamp(int((fb.hi.x - grid_.origin.x) / grid_.cell), 0, grid_.nx - 1);
        int y0 = std::clamp(int((fb.lo.y - grid_.origin.y) / grid_.cell), 0, grid_.ny - 1);
        int y1 = std::clamp(int((fb.hi.y - grid_.origin.y) / grid_.cell), 0, grid_.ny - 1);
        int z0 = std::clamp(int((fb.lo.z - grid_.origin.z) / grid_.cell), 0, grid_.nz - 1);
        int z1 = std::clamp(int((fb.hi.z - grid_.origin.z) / grid_.cell), 0, grid_.nz - 1);
        for (int z = z0; z <= z1; ++z)
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x)
                    grid_.faces[(size_t(z) * grid_.ny + y) * grid_.nx + x].push_back(int(fi));
    }
    grid_.steps_since_rebuild = 0;
}

void ExplicitSim::platen_contact(std::vector<Vec3>& f) {
    platen_force_ = 0.0;
    if (!platens_enabled_) return;
    const double z_top = platen_top_z_ - platen_travel_;
    const double z_bot = platen_bottom_z_;
    const double platen_v = -platen_speed_(state_.time);  // top platen moves down

    for (size_t n = 0; n < node_count(); ++n) {
        if (state_.mass[n] <= 0.0) continue;
        Vec3 x = state_.reference[n] + state_.u[n];
        const double k_pen = node_penalty(n);
        double pen_top = x.z - z_top;
        if (pen_top > 0.0) {
            double fn = k_pen * pen_top;
            Vec3 force{0, 0, -fn};
            Vec3 v_rel = state_.v[n] - Vec3{0, 0, platen_v};
            Vec3 v_t{v_rel.x, v_rel.y, 0};
            double vt = norm(v_t);
            if (platen_mu_ > 0.0 && vt > 1e-12)
                force -= v_t * (platen_mu_ * fn / (vt + 1e-4));
            f[n] += force;
            f_platen_[n] += force;
            platen_force_ += fn;
        }
        double pen_bot = z_bot - x.z;
        if (pen_bot > 0.0) {
            double fn = k_pen * pen_bot;
            Vec3 force{0, 0, fn};
            Vec3 v_t{state_.v[n].x, state_.v[n].y, 0};
            double vt = norm(v_t);
            if (platen_mu_ > 0.0 && vt > 1e-12)
                force -= v_t * (platen_mu_ * fn / (vt + 1e-4));
            f[n] += force;
            f_platen_[n] += force;
        }
    }
}

void ExplicitSim::self_contact(std::vector<Vec3>& f) {
    if (surf_nodes_.empty()) return;
    if (grid_.steps_since_rebuild >= grid_rebuild_interval_) {
        rebuild_contact_grid();
        rebuild_contact_pairs();
    }
    grid_.steps_since_rebuild++;

    const double depth_max = 0.5 * mean_h_;
    const double eps_v = 1e-4;
    const double mu = opt_.contact.friction;

    for (const auto& [n, fi] : contact_pairs_) {
        if (state_.mass[size_t(n)] <= 0.0) continue;
        Vec3 x = state_.reference[size_t(n)] + state_.u[size_t(n)];
        const auto& fn = surf_nodes_[size_t(fi)];

        Vec3 q[4];
        for (int i = 0; i < 4; ++i)
            q[i] = state_.reference[size_t(fn[size_t(i)])] +
                   state_.u[size_t(fn[size_t(i)])];
        Vec3 nrm = cross(q[2] - q[0], q[3] - q[1]);
        double nl = norm(nrm);
        if (nl < 1e-18) continue;
        nrm = nrm * (1.0 / nl);
        if (dot(nrm, node_normal_[size_t(n)]) > -0.2) continue;
        Vec3 centroid = (q[0] + q[1] + q[2] + q[3]) * 0.25;
        double sdist = dot(x - centroid, nrm);
        if (sdist >= 0.0 || sdist < -depth_max) continue;

        Vec3 p = x - nrm * sdist;
        double w[4] = {0, 0, 0, 0};
        bool inside = false;
        const int tris[2][3] = {{0, 1, 2}, {0, 2, 3}};
        for (const auto& t : tris) {
            Vec3 a = q[t[0]], bb = q[t[1]], cc = q[t[2]];
            Vec3 v0 = bb - a, v1 = cc - a, v2 = p - a;
            double d00 = dot(v0, v0), d01 = dot(v0, v1), d11 = dot(v1, v1);
            double d20 = dot(v2, v0), d21 = dot(v2, v1);
            double denom = d00 * d11 - d01 * d01;
            if (std::abs(denom) < 1e-24) continue;
            double bv = (d11 * d20 - d01 * d21) / denom;
            double cv = (d00 * d21 - d01 * d20) / denom;
            double av = 1.0 - bv - cv;
            const double tol = -1e-6;
            if (av >= tol && bv >= tol && cv >= tol) {
                w[t[0]] += av;
                w[t[1]] += bv;
                w[t[2]] += cv;
                inside = true;
                break;
            }
        }
        if (!inside) continue;

        double fn_mag = node_penalty(size_t(n)) * (-sdist);
        Vec3 force = nrm * fn_mag;
        if (mu > 0.0) {
            Vec3 v_face{0, 0, 0};
            for (int i = 0; i < 4; ++i)
                v_face += state_.v[size_t(fn[size_t(i)])] * w[i];
            Vec3 v_rel = state_.v[size_t(n)] - v_face;
            Vec3 v_t = v_rel - nrm * dot(v_rel, nrm);
            double vt = norm(v_t);
            if (vt > 1e-12) force -= v_t * (mu * fn_mag / (vt + eps_v));
        }
        f[size_t(n)] += force;
        f_self_[size_t(n)] += force;
        for (int i = 0; i < 4; ++i) {
            Vec3 share = force * (-w[i]);
            f[size_t(fn[size_t(i)])] += share;
            f_self_[size_t(fn[size_t(i)])] += share;
        }
    }
}

void ExplicitSim::update_node_normals() {
    // outward normals per surface node: contact requires opposing surfaces,
    // otherwise a gently curved patch would repel its own neighborhood
    node_normal_.assign(node_count(), Vec3{0, 0, 0});
    for (const auto& fn : surf_nodes_) {
        Vec3 q0 = state_.reference[size_t(fn[0])] + state_.u[size_t(fn[0])];
        Vec3 q1 = state_.reference[size_t(fn[1])] + state_.u[size_t(fn[1])];
        Vec3 q2 = state_.reference[size_t(fn[2])] + state_.u[size_t(fn[2])];
        Vec3 q3 = state_.reference[size_t(fn[3])] + state_.u[size_t(fn[3])];
        Vec3 an = cross(q2 - q0, q3 - q1);  // area-weighted outward normal
        for (int i = 0; i < 4; ++i) node_normal_[size_t(fn[size_t(i)])] += an;
    }
    for (auto& nn : node_normal_) nn = normalized(nn);
}

void ExplicitSim::rebuild_contact_pairs() {
    contact_pairs_.clear();
    // candidate window: close enough to touch within the cache lifetime
    const double window = 0.75 * mean_h_;
    update_node_normals();

    // face normals for the orientation prefilter
    face_normal_.resize(surf_nodes_.size());

    // face bounding spheres
    face_center_.resize(surf_nodes_.size());
    face_radius_.resize(surf_nodes_.size());
    for (size_t fi = 0; fi < surf_nodes_.size(); ++fi) {
        const auto& fn = surf_nodes_[fi];
        Vec3 c{0, 0, 0};
        Vec3 q[4];
        for (int i = 0; i < 4; ++i) {
            q[i] = state_.reference[size_t(fn[size_t(i)])] +
                   state_.u[size_t(fn[size_t(i)])];
            c += q[i];
        }
        c *= 0.25;
        double r2 = 0;
        for (int i = 0; i < 4; ++i) r2 = std::max(r2, norm2(q[i] - c));
        face_center_[fi] = c;
        face_radius_[fi] = std::sqrt(r2);
        face_normal_[fi] = normalized(cross(q[2] - q[0], q[3] - q[1]));
    }

    for (int n : surf_of_node_) {
        if (state_.mass[size_t(n)] <= 0.0) continue;
        Vec3 x = state_.reference[size_t(n)] + state_.u[size_t(n)];
        int cx = std::clamp(int((x.x - grid_.origin.x) / grid_.cell), 0, grid_.nx - 1);
        int cy = std::clamp(int((x.y - grid_.origin.y) / grid_.cell), 0, grid_.ny - 1);
        int cz = std::clamp(int((x.z - grid_.origin.z) / grid_.cell), 0, grid_.nz - 1);
        const auto& ring = node_ring_[size_t(n)];

        for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    int gx = cx + dx, gy = cy + dy, gz = cz + dz;
                    if (gx < 0 || gx >= grid_.nx || gy < 0 || gy >= grid_.ny ||
                        gz < 0 || gz >= grid_.nz)
                        continue;
                    const auto& bucket =
                        grid_.faces[(size_t(gz) * grid_.ny + gy) * grid_.nx + gx];
                    for (int fi : bucket) {
                        double reach = face_radius_[size_t(fi)] + window;
                        if (norm2(x - face_center_[size_t(fi)]) > reach * reach)
                            continue;
                        // orientation prefilter, looser than the eval threshold
                        // so slowly rotating surfaces stay cached
                        if (dot(face_normal_[size_t(fi)], node_normal_[size_t(n)]) > 0.1)
                            continue;
                        // plane-distance window (s > 0 means approaching)
                        double sd = dot(x - face_center_[size_t(fi)],
                                        face_normal_[size_t(fi)]);
                        if (sd > window || sd < -mean_h_) continue;
                        const auto& fn = surf_nodes_[size_t(fi)];
                        bool excluded = false;
                        for (int i = 0; i < 4 && !excluded; ++i)
                            excluded = std::binary_search(ring.begin(), ring.end(),
                                                          fn[size_t(i)]);
                        if (excluded) continue;
                        contact_pairs_.emplace_back(n, fi);
                    }
                }
    }
    // duplicate pairs arise when a face spans several buckets
    std::sort(contact_pairs_.begin(), contact_pairs_.end());
    contact_pairs_.erase(std::unique(contact_pairs_.begin(), contact_pairs_.end()),
                         contact_pairs_.end());
}

std::vector<Vec3> ExplicitSim::contact_forces() {
    if (surface_dirty_) rebuild_surface();
    std::vector<Vec3> f(node_count(), Vec3{0, 0, 0});
    f_platen_.assign(node_count(), Vec3{0, 0, 0});
    f_self_.assign(node_count(), Vec3{0, 0, 0});
    platen_contact(f);
    if (opt_.contact.self_contact) self_contact(f);
    return f;
}

void ExplicitSim::apply_element_death(const std::vector<int>& dying) {
    for (int e : dying) {
        if (!state_.active[size_t(e)]) continue;
        state_.active[size_t(e)] = 0;
        double m_node = mat_.density * vol0_[size_t(e)] / 8.0;
        for (int i = 0; i < 8; ++i) {
            size_t n = size_t(conn_[size_t(e)][size_t(i)]);
            state_.mass[n] = std::max(0.0, state_.mass[n] - m_node);
            if (state_.mass[n] < 1e-18) {
                state_.mass[n] = 0.0;
                state_.v[n] = {0, 0, 0};
            }
        }
        death_count_++;
    }
    if (!dying.empty()) surface_dirty_ = true;
}

void ExplicitSim::step(double dt) {
    if (dt <= 0.0) throw Error("fea-explicit", "step requires dt > 0");
    const size_t nn = node_count();

    auto f_int = internal_forces();
    auto f_con = contact_forces();

    for (size_t n = 0; n < nn; ++n) {
        double m = state_.mass[n];
        if (m <= 0.0) continue;
        Vec3 a = (f_con[n] - f_int[n]) * (1.0 / m) + opt_.body_accel -
                 state_.v[n] * opt_.mass_damping;
        state_.v[n] += a * dt;
    }
    for (int n : fixed_nodes_) state_.v[size_t(n)] = {0, 0, 0};
    for (int n : lateral_fixed_nodes_) {
        state_.v[size_t(n)].x = 0;
        state_.v[size_t(n)].y = 0;
    }
    if (!driven_nodes_.empty()) {
        Vec3 vset = driven_velocity_(state_.time);
        for (int n : driven_nodes_) state_.v[size_t(n)] = vset;
    }

    double dW_ext = 0.0, dW_int = 0.0;
    for (size_t n = 0; n < nn; ++n) {
        if (state_.mass[n] <= 0.0 && state_.v[n].x == 0 && state_.v[n].y == 0 &&
            state_.v[n].z == 0)
            continue;
        Vec3 du = state_.v[n] * dt;
        state_.u[n] += du;
        dW_int += dot(f_int[n], du) - dot(f_self_[n], du);
        dW_ext += dot(f_platen_[n], du) + dot(opt_.body_accel * state_.mass[n], du);
    }
    state_.internal_energy += dW_int;
    state_.external_work += dW_ext;
    state_.time += dt;
    if (platens_enabled_) platen_travel_ += platen_speed_(state_.time) * dt;

    // element death: inversion flagged during force evaluation plus the
    // timestep criterion on a cheap J-based size estimate
    std::vector<int> dying;
    const double c = mat_.wave_speed();
    for (size_t e = 0; e < conn_.size(); ++e) {
        if (!state_.active[e]) continue;
        if (opt_.death.on_inversion && inverted_[e]) {
            dying.push_back(int(e));
            continue;
        }
        if (opt_.death.on_timestep) {
            double J = state_.def_grad[e].det();
            double h_est = hsize0_[e] * std::cbrt(std::max(J, 1e-12));
            if (h_est / c < opt_.death.min_timestep) dying.push_back(int(e));
        }
    }
    apply_element_death(dying);
    if (state_.active_elements() == 0)
        throw Error("fea-explicit", "all elements removed by element death");
}

double ExplicitSim::kinetic_energy() const {
    double ke = 0.0;
    for (size_t n = 0; n < node_count(); ++n)
        ke += 0.5 * state_.mass[n] * norm2(state_.v[n]);
    return ke;
}

std::vector<double> ExplicitSim::von_mises() const {
    std::vector<double> vm(conn_.size(), 0.0);
    for (size_t e = 0; e < conn_.size(); ++e) {
        if (!state_.active[e]) continue;
        auto s = neo_hookean_stress(state_.def_grad[e], mat_);
        if (s.inverted) continue;
        const auto& m = s.cauchy.m;
        double p = s.cauchy.trace() / 3.0;
        double sxx = m[0][0] - p, syy = m[1][1] - p, szz = m[2][2] - p;
        vm[e] = std::sqrt(1.5 * (sxx * sxx + syy * syy + szz * szz +
                                 2 * (m[0][1] * m[0][1] + m[0][2] * m[0][2] +
                                      m[1][2] * m[1][2])));
    }
    return vm;
}

std::vector<Vec3> ExplicitSim::displacements_mm() const {
    std::vector<Vec3> out(node_count());
    for (size_t n = 0; n < node_count(); ++n) out[n] = state_.u[n] * (1.0 / kMm);
    return out;
}

CompressionResult run_compression(const hexmesh::HexMesh& mesh, const MaterialParams& mat,
                                  const PlatenSchedule& schedule, const SimOptions& options,
                                  size_t heartbeat_stride, const std::string& snapshot_dir,
                                  int snapshot_count) {
    hexmesh::HexMesh tagged = mesh;
    if (!tagged.node_sets.count("min_z") || !tagged.node_sets.count("max_z")) {
        Aabb box = tagged.bounds();
        double tol = 1e-9 + 1e-6 * norm(box.extent());
        tagged = hexmesh::tag_sets(std::move(tagged), hexmesh::builtin_min_max_z(tagged, tol));
    }
    if (tagged.node_sets.at("min_z").empty() || tagged.node_sets.at("max_z").empty())
        throw Error("fea-explicit", "mesh min_z/max_z node sets are empty");

    Aabb box = tagged.bounds();
    const double height_m = (box.hi.z - box.lo.z) * kMm;
    const double area_m2 = (box.hi.x - box.lo.x) * (box.hi.y - box.lo.y) * kMm * kMm;

    ExplicitSim sim(tagged, mat, options);

    const double t_ramp = schedule.ramp_strain * height_m / schedule.speed;
    auto speed = [&schedule, t_ramp](double t) {
        return schedule.speed * std::min(1.0, t / std::max(t_ramp, 1e-12));
    };
    sim.enable_platens(speed, schedule.friction);

    CompressionResult result;
    result.footprint_area_mm2 = area_m2 / (kMm * kMm);
    result.height_mm = height_m / kMm;

    // without the per-node stability cap, penalty springs tighten the step
    double dt_penalty = std::numeric_limits<double>::infinity();
    if (!options.contact.stable_cap) {
        double m_min = std::numeric_limits<double>::infinity();
        for (size_t n = 0; n < sim.node_count(); ++n)
            if (sim.state().mass[n] > 0.0) m_min = std::min(m_min, sim.state().mass[n]);
        dt_penalty = 0.5 * std::sqrt(2.0 * m_min / sim.penalty_stiffness());
    }

    if (!snapshot_dir.empty()) std::filesystem::create_directories(snapshot_dir);

    double dt = 0.0;
    size_t step_count = 0;
    int next_snapshot = 0;
    try {
        while (true) {
            double strain = sim.platen_travel() / height_m;
            if (strain >= schedule.target_strain) {
                result.termination = "completed";
                break;
            }
            if (step_count % 10 == 0)
                dt = std::min(sim.critical_timestep(), dt_penalty);
            if (step_count % heartbeat_stride == 0) {
                HeartbeatRow row;
                row.time_s = sim.state().time;
                row.platen_disp_mm = sim.platen_travel() / kMm;
                row.platen_force_N = sim.platen_force();
                row.eng_strain = strain;
                row.eng_stress_MPa = sim.platen_force() / area_m2 / 1e6;
                row.active_elements = sim.state().active_elements();
                result.heartbeat.push_back(row);

                if (!snapshot_dir.empty() && snapshot_count > 0 &&
                    strain >= schedule.target_strain * next_snapshot / snapshot_count) {
                    auto disp = sim.displacements_mm();
                    auto vm = sim.von_mises();
                    for (auto& v : vm) v /= 1e6;  // MPa
                    hexmesh::HexMesh deformed = tagged;
                    for (size_t n = 0; n < deformed.node_count(); ++n)
                        deformed.nodes[n] += disp[n];
                    std::ostringstream name;
                    name << snapshot_dir << "/snapshot_" << next_snapshot << ".vtk";
                    hexmesh::write_vtk(deformed, name.str(), {{"displacement_mm", disp}},
                                       {{"von_mises_MPa", vm}});
                    next_snapshot++;
                }
            }
            sim.step(dt);
            step_count++;
        }
    } catch (const Error& e) {
        result.termination = e.what();
    }
    result.steps = step_count;
    result.deaths = sim.death_count();
    return result;
}

}  // namespace am::fea
