#include "am/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace am::pipeline {

namespace {

double to_double(const std::string& section, const std::string& key,
                 const std::string& value) {
    try {
        size_t pos = 0;
        double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (...) {
        throw Error("config", "bad numeric value for [" + section + "] " + key + " = '" +
                              value + "'");
    }
}

long to_long(const std::string& section, const std::string& key, const std::string& value) {
    double v = to_double(section, key, value);
    if (std::abs(v - std::llround(v)) > 1e-12)
        throw Error("config", "[" + section + "] " + key + " must be an integer");
    return long(std::llround(v));
}

bool to_bool(const std::string& section, const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw Error("config", "[" + section + "] " + key + " must be a boolean");
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

void apply_config_entry(PipelineConfig& cfg, const std::string& section,
                        const std::string& key, const std::string& value) {
    auto unknown = [&]() -> Error {
        return Error("config", "unknown key [" + section + "] " + key);
    };
    if (section == "print") {
        if (key == "filament_diameter") cfg.print.filament_diameter = to_double(section, key, value);
        else if (key == "layer_height") cfg.print.layer_height = to_double(section, key, value);
        else if (key == "infill_spacing") cfg.print.infill_spacing = to_double(section, key, value);
        else if (key == "infill_angle") cfg.print.infill_angle = to_double(section, key, value);
        else if (key == "pattern") cfg.print.pattern = slicer::pattern_from_name(value);
        else if (key == "wall_line_count") cfg.print.wall_line_count = int(to_long(section, key, value));
        else if (key == "print_speed") cfg.print.print_speed = to_double(section, key, value);
        else if (key == "nozzle_area") cfg.print.nozzle_area = to_double(section, key, value);
        else if (key == "bead_width") cfg.print.bead_width = to_double(section, key, value);
        else if (key == "bead_overbuild") cfg.bead_overbuild = to_double(section, key, value);
        else if (key == "detector") cfg.detector = value;
        else throw unknown();
    } else if (section == "mesh") {
        if (key == "cell_size") cfg.mesh.cell_size = to_double(section, key, value);
        else if (key == "smoothing_iters") cfg.mesh.smoothing_iters = int(to_long(section, key, value));
        else if (key == "inside_rule") {
            if (value == "center") cfg.mesh.inside_rule = hexmesh::InsideRule::Center;
            else if (value == "fraction") cfg.mesh.inside_rule = hexmesh::InsideRule::Fraction;
            else throw Error("config", "inside_rule must be 'center' or 'fraction'");
        }
        else if (key == "fraction_tau") cfg.mesh.fraction_tau = to_double(section, key, value);
        else if (key == "fraction_samples") cfg.mesh.fraction_samples = int(to_long(section, key, value));
        else if (key == "quality_floor") cfg.mesh.quality_floor = to_double(section, key, value);
        else throw unknown();
    } else if (section == "material") {
        if (key == "density") cfg.material.density = to_double(section, key, value);
        else if (key == "shear_modulus_mpa") cfg.material.shear_modulus = 1e6 * to_double(section, key, value);
        else if (key == "bulk_modulus_mpa") cfg.material.bulk_modulus = 1e6 * to_double(section, key, value);
        else throw unknown();
    } else if (section == "compression") {
        if (key == "speed") cfg.compression.speed = to_double(section, key, value);
        else if (key == "target_strain") cfg.compression.target_strain = to_double(section, key, value);
        else if (key == "ramp_strain") cfg.compression.ramp_strain = to_double(section, key, value);
        else if (key == "platen_friction") cfg.compression.platen_friction = to_double(section, key, value);
        else if (key == "mass_damping") cfg.compression.mass_damping = to_double(section, key, value);
        else if (key == "mass_scale") cfg.compression.mass_scale = to_double(section, key, value);
        else if (key == "min_timestep") cfg.compression.min_timestep = to_double(section, key, value);
        else if (key == "heartbeat_stride") cfg.compression.heartbeat_stride = size_t(to_long(section, key, value));
        else if (key == "snapshots") cfg.compression.snapshots = int(to_long(section, key, value));
        else if (key == "friction") cfg.contact.friction = to_double(section, key, value);
        else if (key == "penalty_scale") cfg.contact.penalty_scale = to_double(section, key, value);
        else if (key == "self_contact") cfg.contact.self_contact = to_bool(section, key, value);
        else throw unknown();
    } else if (section == "modal") {
        if (key == "n_modes") cfg.modal.n_modes = int(to_long(section, key, value));
        else if (key == "free_free") cfg.modal.free_free = to_bool(section, key, value);
        else if (key == "shift_hz") cfg.modal.shift_hz = to_double(section, key, value);
        else throw unknown();
    } else if (section == "optimize") {
        if (key == "geometry") cfg.optimize.geometry = value;
        else if (key == "spacing_lo") cfg.optimize.bounds.spacing_lo = to_double(section, key, value);
        else if (key == "spacing_hi") cfg.optimize.bounds.spacing_hi = to_double(section, key, value);
        else if (key == "angle_lo") cfg.optimize.bounds.angle_lo = to_double(section, key, value);
        else if (key == "angle_hi") cfg.optimize.bounds.angle_hi = to_double(section, key, value);
        else if (key == "initial_spacing") cfg.optimize.initial_spacing = to_double(section, key, value);
        else if (key == "initial_angle") cfg.optimize.initial_angle = to_double(section, key, value);
        else if (key == "initial_pattern") cfg.optimize.initial_pattern = value;
        else if (key == "fd_spacing") cfg.optimize.fd_spacing = to_double(section, key, value);
        else if (key == "fd_angle") cfg.optimize.fd_angle = to_double(section, key, value);
        else if (key == "fd_pattern") cfg.optimize.fd_pattern = to_double(section, key, value);
        else if (key == "budget") cfg.optimize.budget = size_t(to_long(section, key, value));
        else if (key == "grad_tol_hz") cfg.optimize.grad_tol_hz = to_double(section, key, value);
        else if (key == "mesh_cell") cfg.optimize.mesh_cell = to_double(section, key, value);
        else throw unknown();
    } else if (section == "io") {
        if (key == "seed") cfg.seed = uint64_t(to_long(section, key, value));
        else throw unknown();
    } else {
        throw Error("config", "unknown config section [" + section + "]");
    }
}

PipelineConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("config", "cannot open config file: " + path);
    PipelineConfig cfg;
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
        line_no++;
        auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw Error("config", "bad section header at line " + std::to_string(line_no));
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error("config", "expected key = value at line " + std::to_string(line_no));
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (section.empty())
            throw Error("config", "key outside any [section] at line " + std::to_string(line_no));
        apply_config_entry(cfg, section, key, value);
    }
    return cfg;
}

std::string config_reference() {
    return
        "[print]        filament_diameter=0.41 layer_height=0.35 infill_spacing=1.0\n"
        "               infill_angle=45 pattern=lines|grid|triangle wall_line_count=1\n"
        "               print_speed=30 nozzle_area=0.132 bead_width=0 bead_overbuild=1.1\n"
        "               detector=fff-delta-e|diw-trigger:<on>:<off>\n"
        "[mesh]         cell_size=0.25 smoothing_iters=5 inside_rule=center|fraction\n"
        "               fraction_tau=0.5 fraction_samples=3 quality_floor=0.2\n"
        "[material]     density=1130 shear_modulus_mpa=2.18 bulk_modulus_mpa=920\n"
        "[compression]  speed=0.5 target_strain=0.65 ramp_strain=0.02\n"
        "               platen_friction=0.3 mass_damping=3000 mass_scale=1 min_timestep=2e-9\n"
        "               heartbeat_stride=200 snapshots=0 friction=0.3\n"
        "               penalty_scale=10 self_contact=true\n"
        "[modal]        n_modes=10 free_free=true shift_hz=0\n"
        "[optimize]     geometry=box:5,5,20 spacing_lo=0.5 spacing_hi=2.0\n"
        "               angle_lo=45 angle_hi=90 initial_spacing=1.0 initial_angle=60\n"
        "               initial_pattern=grid fd_spacing=0.1 fd_angle=2.0 fd_pattern=1.0\n"
        "               budget=40 grad_tol_hz=1e-3 mesh_cell=0.41\n"
        "[io]           seed=1234\n";
}

gcode::ToolpathProgram stage_toolpath(const std::string& gcode_text,
                                      const PipelineConfig& cfg) {
    auto commands = gcode::parse_text(gcode_text);
    auto detector = gcode::make_detector(cfg.detector);
    return gcode::extract_toolpath(commands, *detector, cfg.print.layer_height,
                                   cfg.print.filament_diameter);
}

asprinted::PrintedBody stage_body(const gcode::ToolpathProgram& program,
                                  const PipelineConfig& cfg) {
    auto body = asprinted::PrintedBody::from_toolpath(program, cfg.bead());
    if (body.empty())
        throw Error("asprinted", "toolpath has no extruding segments");
    return body;
}

hexmesh::HexMesh stage_mesh(const asprinted::PrintedBody& body,
                            const hexmesh::MeshParams& params) {
    auto sdf = [&body](const Vec3& p) { return body.sdf(p); };
    Aabb bounds = body.bounds();
    auto mesh = hexmesh::voxelize(sdf, bounds, params);
    mesh = hexmesh::smooth_boundary(std::move(mesh), sdf, params);
    double tol = 1e-9 + 1e-6 * norm(mesh.bounds().extent());
    mesh = hexmesh::tag_sets(std::move(mesh), hexmesh::builtin_min_max_z(mesh, tol));
    return mesh;
}

hexmesh::HexMesh mesh_from_geometry(const stl::TriMesh& tri, const PipelineConfig& cfg) {
    auto text = slicer::slice_to_gcode(tri, cfg.print);
    auto program = stage_toolpath(text, cfg);
    auto body = stage_body(program, cfg);
    return stage_mesh(body, cfg.mesh);
}

fea::SimOptions sim_options(const PipelineConfig& cfg) {
    fea::SimOptions opt;
    opt.contact = cfg.contact;
    opt.mass_damping = cfg.compression.mass_damping;
    opt.mass_scale = cfg.compression.mass_scale;
    opt.death.min_timestep = cfg.compression.min_timestep;
    return opt;
}

ModalRun run_modal(const stl::TriMesh& tri, const PipelineConfig& cfg) {
    ModalRun run;
    run.mesh = mesh_from_geometry(tri, cfg);
    std::vector<std::string> fixed;
    if (!cfg.modal.free_free) fixed.push_back("min_z");
    run.system = modal::assemble(run.mesh, cfg.material, fixed);
    run.result = modal::solve_modes(run.system, cfg.modal.n_modes, cfg.modal.shift_hz);
    return run;
}

opt::OptRecord optimize_first_flexible(const PipelineConfig& cfg) {
    const auto& oc = cfg.optimize;
    auto tri = stl::load_geometry(oc.geometry);
    const auto& bounds = oc.bounds;

    opt::CountingObjective objective([&](const std::vector<double>& x) {
        auto design = opt::DesignPoint::decode(x, bounds);
        PipelineConfig run_cfg = cfg;
        run_cfg.print.infill_spacing = design.spacing;
        run_cfg.print.infill_angle = design.angle;
        run_cfg.print.pattern = design.pattern();
        run_cfg.mesh.cell_size = oc.mesh_cell;  // fixed across evaluations
        auto run = run_modal(tri, run_cfg);
        return modal::first_flexible(run.result);
    });

    opt::DesignPoint x0;
    x0.spacing = oc.initial_spacing;
    x0.angle = oc.initial_angle;
    x0.pattern_coord =
        opt::DesignPoint::pattern_bin_center(slicer::pattern_from_name(oc.initial_pattern));

    opt::FrcgOptions fopt;
    fopt.max_evaluations = oc.budget;
    fopt.grad_tol = oc.grad_tol_hz;
    fopt.fd_steps = {oc.fd_spacing / (bounds.spacing_hi - bounds.spacing_lo),
                     oc.fd_angle / (bounds.angle_hi - bounds.angle_lo),
                     oc.fd_pattern / (bounds.pattern_hi - bounds.pattern_lo)};

    std::vector<double> lo{0, 0, 0}, hi{1, 1, 1};
    auto fn = [&objective](const std::vector<double>& x) { return objective(x); };
    auto res = opt::frcg_minimize(fn, x0.encode(bounds), lo, hi, fopt);

    opt::OptRecord record;
    record.termination = res.termination;
    record.evaluations = objective.evaluations();
    record.best_design = opt::DesignPoint::decode(res.best_x, bounds);
    record.best_objective = res.best_f;
    int iter = 0;
    for (const auto& it : res.accepted) {
        opt::IterationRecord row;
        row.iteration = iter++;
        row.design = opt::DesignPoint::decode(it.x, bounds);
        row.objective = it.f;
        row.gradient = it.gradient;
        row.evaluations = it.evaluations;
        record.history.push_back(row);
    }
    return record;
}

}  // namespace am::pipeline
