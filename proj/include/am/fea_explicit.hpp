#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "am/core.hpp"
#include "am/hexmesh.hpp"

namespace am::fea {

// Neo-Hookean constants (SI).
struct MaterialParams {
    double density = 1130.0;        // kg/m^3
    double shear_modulus = 2.18e6;  // Pa
    double bulk_modulus = 920.0e6;  // Pa

    void validate() const;
    double dilatational_modulus() const { return bulk_modulus + 4.0 * shear_modulus / 3.0; }
    double wave_speed() const { return std::sqrt(dilatational_modulus() / density); }
    double youngs_modulus() const {
        return 9.0 * bulk_modulus * shear_modulus / (3.0 * bulk_modulus + shear_modulus);
    }
};

struct StressResult {
    Mat3 cauchy;
    double J = 1.0;
    bool inverted = false;
};

// Cauchy stress of the compressible Neo-Hookean model:
//   sigma = K/2 (J - 1/J) I + J^(-5/3) G (B - tr(B)/3 I)
StressResult neo_hookean_stress(const Mat3& F, const MaterialParams& mat);
// Strain-energy density consistent with the stress above (per reference volume).
double neo_hookean_energy(const Mat3& F, const MaterialParams& mat);

struct ContactSpec {
    double friction = 0.3;        // Coulomb coefficient
    double penalty_scale = 10.0;  // multiple of element dilatational stiffness
    double search_radius = 0.0;   // m; 0 = auto (one element size)
    bool self_contact = true;
    // Cap each node's penalty spring at its explicit stability bound so
    // contact never forces the timestep below the element CFL.
    bool stable_cap = true;

    void validate() const;
};

struct DeathSpec {
    double min_timestep = 1e-9;   // s; elements forcing dt below this die
    bool on_inversion = true;
    bool on_timestep = true;
};

struct SimOptions {
    double hourglass_stiffness = 0.03;  // fraction of element stiffness scale
    double hourglass_viscosity = 0.05;
    double mass_damping = 0.0;          // 1/s, mass-proportional
    // quasi-static runs may scale the density to stretch the stable timestep;
    // validated by the rate-independence check
    double mass_scale = 1.0;
    Vec3 body_accel{0, 0, 0};           // m/s^2, uniform body force b
    // The single-node mode of the uniform-gradient hex sits at sqrt(6) c/h,
    // so the h/c estimate needs a safety below 2/sqrt(6) = 0.816.
    double timestep_safety = 0.72;
    ContactSpec contact;
    DeathSpec death;
};

struct SimState {
    std::vector<Vec3> reference;   // node coords, m
    std::vector<Vec3> u;           // displacements, m
    std::vector<Vec3> v;           // velocities, m/s
    std::vector<double> mass;      // kg (updated by element death)
    double time = 0.0;
    std::vector<uint8_t> active;   // per element
    std::vector<Mat3> def_grad;    // last evaluated F per element
    double external_work = 0.0;    // J
    double internal_energy = 0.0;  // J (includes hourglass work)

    size_t active_elements() const {
        size_t n = 0;
        for (auto a : active) n += a;
        return n;
    }
};

// Heartbeat row matching the CSV contract:
// time_s, platen_disp_mm, platen_force_N, eng_strain, eng_stress_MPa, active_elements
struct HeartbeatRow {
    double time_s = 0;
    double platen_disp_mm = 0;
    double platen_force_N = 0;
    double eng_strain = 0;
    double eng_stress_MPa = 0;
    size_t active_elements = 0;
};
std::string heartbeat_csv(const std::vector<HeartbeatRow>& rows);
std::vector<HeartbeatRow> read_heartbeat_csv(const std::string& path);

class ExplicitSim {
public:
    // Mesh coordinates are mm; everything inside runs in SI.
    ExplicitSim(const hexmesh::HexMesh& mesh, const MaterialParams& mat,
                const SimOptions& options = {});

    const SimState& state() const { return state_; }
    SimState& state() { return state_; }
    const MaterialParams& material() const { return mat_; }
    size_t node_count() const { return state_.reference.size(); }
    size_t element_count() const { return conn_.size(); }

    // Internal nodal forces (element stress + hourglass resistance) for the
    // current displacement/velocity state; f = +dE/du, applied as -f.
    std::vector<Vec3> internal_forces();
    // Contact forces for the current state (self-contact and platens).
    std::vector<Vec3> contact_forces();

    // Stable explicit step estimate (safety factor applied).
    double critical_timestep();

    // Dirichlet machinery: fixed nodes never move; driven nodes follow v(t);
    // laterally fixed nodes keep x/y pinned but move freely in z.
    void fix_nodes(const std::vector<int>& nodes);
    void fix_lateral(const std::vector<int>& nodes);
    void drive_nodes(const std::vector<int>& nodes,
                     std::function<Vec3(double)> velocity);

    // Analytic rigid platens normal to z. The top platen moves down with the
    // given speed profile; both are penalty surfaces with Coulomb friction.
    void enable_platens(std::function<double(double)> top_speed, double friction);
    double platen_force() const { return platen_force_; }      // N, top platen
    double platen_travel() const { return platen_travel_; }    // m

    void step(double dt);

    double kinetic_energy() const;
    // Per-element von Mises stress of the last force evaluation (Pa).
    std::vector<double> von_mises() const;
    size_t death_count() const { return death_count_; }
    double mean_element_size() const { return mean_h_; }  // m
    size_t contact_pair_count() const { return contact_pairs_.size(); }
    double penalty_stiffness() const { return penalty_k_; }  // N/m

    // Current node positions in mm (for snapshot export).
    std::vector<Vec3> displacements_mm() const;

private:
    void build_elements(const hexmesh::HexMesh& mesh);
    void rebuild_surface();
    void rebuild_contact_grid();
    void rebuild_contact_pairs();
    void update_node_normals();
    void apply_element_death(const std::vector<int>& dying);
    double element_wave_speed(size_t element) const;
    void platen_contact(std::vector<Vec3>& f);
    void self_contact(std::vector<Vec3>& f);

    MaterialParams mat_;
    SimOptions opt_;
    SimState state_;

    // element data (reference configuration)
    std::vector<hexmesh::HexConn> conn_;
    std::vector<std::array<Vec3, 8>> grad0_;    // mean gradients, 1/m
    std::vector<std::array<double, 32>> hg_gamma_;  // 4 hourglass vectors
    std::vector<double> vol0_;                  // m^3
    std::vector<double> hsize0_;                // m
    std::vector<Vec3> f_int_;
    std::vector<Vec3> f_platen_;                // external contact, for work tracking
    std::vector<Vec3> f_self_;                  // self-contact, counted as internal
    std::vector<uint8_t> inverted_;

    // contact surface
    std::vector<hexmesh::SideRef> surface_;
    std::vector<std::array<int, 4>> surf_nodes_;
    std::vector<std::vector<int>> node_ring_;   // contact exclusion neighborhoods
    std::vector<Vec3> node_normal_;             // outward normals of surface nodes
    std::vector<std::pair<int, int>> contact_pairs_;  // cached (node, face)
    std::vector<Vec3> face_center_;
    std::vector<double> face_radius_;
    std::vector<Vec3> face_normal_;
    std::vector<int> surf_of_node_;             // boundary node list
    bool surface_dirty_ = true;

    // broadphase grid (rebuilt periodically)
    struct ContactGrid {
        double cell = 0;
        Vec3 origin;
        int nx = 0, ny = 0, nz = 0;
        std::vector<std::vector<int>> faces;
        int steps_since_rebuild = 1 << 30;
    } grid_;
    int grid_rebuild_interval_ = 20;

    // platens
    bool platens_enabled_ = false;
    std::function<double(double)> platen_speed_;
    double platen_mu_ = 0.0;
    double platen_bottom_z_ = 0.0;
    double platen_top_z_ = 0.0;
    double platen_travel_ = 0.0;
    double platen_force_ = 0.0;

    // Dirichlet sets
    std::vector<int> fixed_nodes_;
    std::vector<int> lateral_fixed_nodes_;
    std::vector<int> driven_nodes_;
    std::function<Vec3(double)> driven_velocity_;

    double penalty_k_ = 0.0;   // N/m, from contact spec
    std::vector<double> penalty_cap_;  // per-node stability cap, N/m
    double mean_h_ = 0.0;      // m
    size_t death_count_ = 0;

    double node_penalty(size_t n) const {
        return penalty_cap_.empty() ? penalty_k_
                                    : std::min(penalty_k_, penalty_cap_[n]);
    }
};

struct PlatenSchedule {
    double speed = 0.5;          // m/s steady platen speed
    double target_strain = 0.65;
    double ramp_strain = 0.02;   // strain over which speed ramps from 0
    double friction = 0.3;
};

struct CompressionResult {
    std::vector<HeartbeatRow> heartbeat;
    size_t steps = 0;
    size_t deaths = 0;
    std::string termination;  // "completed" or the terminal error
    double footprint_area_mm2 = 0;
    double height_mm = 0;
};

// Platen compression driver. `snapshot_dir` empty disables field output.
CompressionResult run_compression(const hexmesh::HexMesh& mesh, const MaterialParams& mat,
                                  const PlatenSchedule& schedule, const SimOptions& options,
                                  size_t heartbeat_stride = 200,
                                  const std::string& snapshot_dir = "",
                                  int snapshot_count = 0);

}  // namespace am::fea
