#pragma once

#include <string>
#include <vector>

#include "am/asprinted.hpp"
#include "am/fea_explicit.hpp"
#include "am/fea_modal.hpp"
#include "am/gcode.hpp"
#include "am/hexmesh.hpp"
#include "am/optimize.hpp"
#include "am/reduce.hpp"
#include "am/slicer.hpp"
#include "am/stl.hpp"

namespace am::pipeline {

struct CompressionConfig {
    double speed = 0.5;            // m/s platen speed
    double target_strain = 0.65;
    double ramp_strain = 0.02;
    double platen_friction = 0.3;
    double mass_damping = 3000.0;  // 1/s
    double mass_scale = 1.0;       // quasi-static mass scaling factor
    double min_timestep = 2e-9;    // s, element-death limit
    size_t heartbeat_stride = 200;
    int snapshots = 0;
};

struct ModalConfig {
    int n_modes = 10;
    bool free_free = true;  // otherwise min_z nodes are fixed
    double shift_hz = 0.0;
};

struct OptimizeConfig {
    std::string geometry = "box:5,5,20";
    opt::DesignBounds bounds;
    double initial_spacing = 1.0;
    double initial_angle = 60.0;
    std::string initial_pattern = "grid";
    double fd_spacing = 0.1;   // finite-difference steps, natural units
    double fd_angle = 2.0;
    double fd_pattern = 1.0;   // at least one bin width
    size_t budget = 40;
    double grad_tol_hz = 1e-3;
    double mesh_cell = 0.41;   // held fixed across evaluations
};

struct PipelineConfig {
    slicer::PrintConfig print;
    hexmesh::MeshParams mesh;
    fea::MaterialParams material;
    fea::ContactSpec contact;
    CompressionConfig compression;
    ModalConfig modal;
    OptimizeConfig optimize;
    std::string detector = "fff-delta-e";
    double bead_overbuild = 1.1;  // bead height factor over layer height
    uint64_t seed = 1234;

    BeadShape bead() const {
        return default_bead_shape(print.road_width(), print.layer_height,
                                  bead_overbuild);
    }
};

// INI-style config: [section] then key = value lines; '#' or ';' comments.
// Unknown sections or keys are rejected.
PipelineConfig parse_config_file(const std::string& path);
void apply_config_entry(PipelineConfig& cfg, const std::string& section,
                        const std::string& key, const std::string& value);
std::string config_reference();  // documented keys and defaults for --help

// Pipeline stages.
gcode::ToolpathProgram stage_toolpath(const std::string& gcode_text,
                                      const PipelineConfig& cfg);
asprinted::PrintedBody stage_body(const gcode::ToolpathProgram& program,
                                  const PipelineConfig& cfg);
hexmesh::HexMesh stage_mesh(const asprinted::PrintedBody& body,
                            const hexmesh::MeshParams& params);

// Geometry -> as-printed hex mesh (slice, emit, re-parse, SDF, voxel, smooth, tag).
hexmesh::HexMesh mesh_from_geometry(const stl::TriMesh& tri, const PipelineConfig& cfg);

struct ModalRun {
    hexmesh::HexMesh mesh;
    modal::LinearSystem system;
    modal::ModalResult result;
};
ModalRun run_modal(const stl::TriMesh& tri, const PipelineConfig& cfg);

fea::SimOptions sim_options(const PipelineConfig& cfg);

// First-flexible minimization over (spacing, angle, pattern) on the configured
// geometry; pipeline evaluations are memoized and counted.
opt::OptRecord optimize_first_flexible(const PipelineConfig& cfg);

}  // namespace am::pipeline
