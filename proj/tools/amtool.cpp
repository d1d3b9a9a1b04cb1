// amtool: toolpath-to-simulation pipeline for extrusion printing.
//
// Subcommands mirror the pipeline stages: slice, toolpath, mesh, quality,
// compress, modal, optimize, reduce, and an end-to-end `pipeline` runner.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "am/pipeline.hpp"

using namespace am;
namespace fs = std::filesystem;

namespace {

void write_file(const std::string& path, const std::string& content) {
    if (!path.empty() && path.find('/') != std::string::npos)
        fs::create_directories(fs::path(path).parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("io", "cannot write " + path);
    out << content;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io", "cannot read " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

struct CommonOpts {
    std::string config_path;
    uint64_t seed = 1234;
    bool seed_set = false;
};

pipeline::PipelineConfig load_config(const CommonOpts& common) {
    pipeline::PipelineConfig cfg;
    if (!common.config_path.empty()) cfg = pipeline::parse_config_file(common.config_path);
    if (common.seed_set) cfg.seed = common.seed;
    return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& common) {
    cmd->add_option("--config", common.config_path, "pipeline config file (ini sections)");
    cmd->add_option("--seed", common.seed, "seed for randomized sampling")
        ->each([&common](const std::string&) { common.seed_set = true; });
}

hexmesh::HexMesh mesh_from_any(const std::string& input, pipeline::PipelineConfig& cfg) {
    if (input.size() > 4 && input.substr(input.size() - 4) == ".amh")
        return hexmesh::import_mesh(input);
    if (input.size() > 6 && input.substr(input.size() - 6) == ".gcode") {
        auto program = pipeline::stage_toolpath(read_file(input), cfg);
        auto body = pipeline::stage_body(program, cfg);
        return pipeline::stage_mesh(body, cfg.mesh);
    }
    return pipeline::mesh_from_geometry(stl::load_geometry(input), cfg);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"amtool: as-printed meshing and simulation of extrusion toolpaths"};
    app.require_subcommand(1);
    app.footer("Config file keys (defaults shown):\n" + pipeline::config_reference());

    std::string active_stage = "cli";

    // ---- slice ----
    auto* slice = app.add_subcommand("slice", "slice geometry into G-code");
    CommonOpts slice_common;
    std::string slice_input, slice_output = "out.gcode", slice_profile = "identity";
    double slice_spacing = -1, slice_angle = -1;
    std::string slice_pattern;
    add_common(slice, slice_common);
    slice->add_option("input", slice_input, "STL path or box:LX,LY,LZ")->required();
    slice->add_option("-o,--output", slice_output, "output G-code path");
    slice->add_option("--profile", slice_profile, "platform profile for the DIW transform");
    slice->add_option("--spacing", slice_spacing, "infill spacing multiple");
    slice->add_option("--angle", slice_angle, "infill angle, degrees");
    slice->add_option("--pattern", slice_pattern, "lines|grid|triangle");

    // ---- toolpath ----
    auto* toolpath = app.add_subcommand("toolpath", "parse G-code into segments");
    CommonOpts tp_common;
    std::string tp_input, tp_report, tp_detector;
    add_common(toolpath, tp_common);
    toolpath->add_option("input", tp_input, "G-code file")->required();
    toolpath->add_option("--detector", tp_detector, "fff-delta-e | diw-trigger:<on>:<off>");
    toolpath->add_option("--report", tp_report, "write per-segment CSV here");

    // ---- mesh ----
    auto* meshcmd = app.add_subcommand("mesh", "voxel-mesh a toolpath or geometry");
    CommonOpts mesh_common;
    std::string mesh_input, mesh_output = "out.amh", mesh_vtk;
    double mesh_cell = -1;
    int mesh_smooth = -1;
    std::string mesh_rule;
    add_common(meshcmd, mesh_common);
    meshcmd->add_option("input", mesh_input, "gcode/STL/box spec")->required();
    meshcmd->add_option("-o,--output", mesh_output, "native mesh output (.amh)");
    meshcmd->add_option("--vtk", mesh_vtk, "also write VTK legacy mesh");
    meshcmd->add_option("--cell-size", mesh_cell, "voxel size, mm");
    meshcmd->add_option("--smooth-iters", mesh_smooth, "boundary smoothing iterations");
    meshcmd->add_option("--inside-rule", mesh_rule, "center | fraction");

    // ---- quality ----
    auto* quality = app.add_subcommand("quality", "mesh quality report");
    CommonOpts q_common;
    std::string q_input;
    add_common(quality, q_common);
    quality->add_option("input", q_input, "native mesh (.amh)")->required();

    // ---- compress ----
    auto* compress = app.add_subcommand("compress", "platen compression run");
    CommonOpts comp_common;
    std::string comp_input, comp_output = "heartbeat.csv", comp_snapdir;
    int comp_snapshots = -1;
    double comp_speed = -1, comp_strain = -1;
    add_common(compress, comp_common);
    compress->add_option("input", comp_input, "mesh (.amh), gcode, STL or box spec")->required();
    compress->add_option("-o,--output", comp_output, "heartbeat CSV path");
    compress->add_option("--speed", comp_speed, "platen speed, m/s");
    compress->add_option("--strain", comp_strain, "target engineering strain");
    compress->add_option("--snapshots", comp_snapshots, "number of VTK snapshots");
    compress->add_option("--snapshot-dir", comp_snapdir, "snapshot directory");

    // ---- modal ----
    auto* modalcmd = app.add_subcommand("modal", "eigenfrequency analysis");
    CommonOpts modal_common;
    std::string modal_input, modal_output = "frequencies.csv", modal_modes_prefix;
    int modal_n = -1, modal_export = 0;
    bool modal_free_free = false, modal_fixed_base = false;
    add_common(modalcmd, modal_common);
    modalcmd->add_option("input", modal_input, "mesh (.amh), gcode, STL or box spec")->required();
    modalcmd->add_option("-o,--output", modal_output, "frequency table CSV");
    modalcmd->add_option("--n-modes", modal_n, "modes to extract");
    modalcmd->add_flag("--free-free", modal_free_free, "no constraints (default)");
    modalcmd->add_flag("--fixed-base", modal_fixed_base, "fix the min_z node set");
    modalcmd->add_option("--export-modes", modal_export, "export this many mode shapes");
    modalcmd->add_option("--modes-prefix", modal_modes_prefix, "VTK path prefix for shapes");

    // ---- optimize ----
    auto* optimize = app.add_subcommand("optimize", "minimize the first flexible frequency");
    CommonOpts opt_common;
    std::string opt_output = "opt_history.csv";
    add_common(optimize, opt_common);
    optimize->add_option("-o,--output", opt_output, "history CSV path");

    // ---- reduce ----
    auto* reducecmd = app.add_subcommand("reduce", "extract properties from heartbeat CSVs");
    CommonOpts red_common;
    std::vector<std::string> red_inputs;
    std::string red_output = "properties.csv", red_svg;
    add_common(reducecmd, red_common);
    reducecmd->add_option("inputs", red_inputs, "heartbeat CSV files")->required();
    reducecmd->add_option("-o,--output", red_output, "properties CSV path");
    reducecmd->add_option("--svg", red_svg, "annotated curve SVG (first input)");

    // ---- pipeline ----
    auto* pipe = app.add_subcommand("pipeline", "geometry to properties, end to end");
    CommonOpts pipe_common;
    std::string pipe_input, pipe_outdir = "out", pipe_goal = "compress";
    double pipe_spacing = -1, pipe_angle = -1;
    std::string pipe_pattern;
    add_common(pipe, pipe_common);
    pipe->add_option("input", pipe_input, "STL path or box:LX,LY,LZ")->required();
    pipe->add_option("-o,--outdir", pipe_outdir, "output directory");
    pipe->add_option("--goal", pipe_goal, "compress | modal | both");
    pipe->add_option("--spacing", pipe_spacing, "infill spacing multiple");
    pipe->add_option("--angle", pipe_angle, "infill angle, degrees");
    pipe->add_option("--pattern", pipe_pattern, "lines|grid|triangle");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*slice) {
            active_stage = "slicer";
            auto cfg = load_config(slice_common);
            if (slice_spacing > 0) cfg.print.infill_spacing = slice_spacing;
            if (slice_angle >= 0) cfg.print.infill_angle = slice_angle;
            if (!slice_pattern.empty()) cfg.print.pattern = slicer::pattern_from_name(slice_pattern);
            auto tri = stl::load_geometry(slice_input);
            auto text = slicer::slice_to_gcode(tri, cfg.print);
            text = slicer::diw_transform(text, slice_profile, cfg.print);
            write_file(slice_output, text);
            std::cout << "wrote " << slice_output << "\n";
        } else if (*toolpath) {
            active_stage = "gcode";
            auto cfg = load_config(tp_common);
            if (!tp_detector.empty()) cfg.detector = tp_detector;
            auto commands = gcode::parse_text(read_file(tp_input));
            auto detector = gcode::make_detector(cfg.detector);
            auto program = gcode::extract_toolpath(commands, *detector,
                                                   cfg.print.layer_height,
                                                   cfg.print.filament_diameter);
            for (const auto& w : program.warnings) std::cerr << "warning: " << w << "\n";
            std::cout << "segments: " << program.segments.size()
                      << " extruding: " << program.extruding_count() << "\n";
            if (!tp_report.empty()) {
                write_file(tp_report, gcode::toolpath_report_csv(commands, program));
                std::cout << "wrote " << tp_report << "\n";
            }
        } else if (*meshcmd) {
            active_stage = "hexmesh";
            auto cfg = load_config(mesh_common);
            if (mesh_cell > 0) cfg.mesh.cell_size = mesh_cell;
            if (mesh_smooth >= 0) cfg.mesh.smoothing_iters = mesh_smooth;
            if (!mesh_rule.empty())
                cfg.mesh.inside_rule = mesh_rule == "fraction" ? hexmesh::InsideRule::Fraction
                                                               : hexmesh::InsideRule::Center;
            auto mesh = mesh_from_any(mesh_input, cfg);
            for (const auto& w : mesh.warnings) std::cerr << "warning: " << w << "\n";
            hexmesh::export_mesh(mesh, mesh_output, hexmesh::MeshFormat::Native);
            std::cout << "wrote " << mesh_output << " (" << mesh.hex_count() << " hexes, "
                      << mesh.node_count() << " nodes)\n";
            if (!mesh_vtk.empty()) {
                hexmesh::export_mesh(mesh, mesh_vtk, hexmesh::MeshFormat::VtkLegacy);
                std::cout << "wrote " << mesh_vtk << "\n";
            }
        } else if (*quality) {
            active_stage = "hexmesh";
            auto mesh = hexmesh::import_mesh(q_input);
            auto q = hexmesh::element_quality(mesh);
            double qmin = 1e300, qsum = 0;
            for (double v : q) {
                qmin = std::min(qmin, v);
                qsum += v;
            }
            auto comps = hexmesh::component_sizes(mesh);
            std::cout << "elements: " << q.size() << "\n";
            std::cout << "scaled_jacobian_min: " << qmin << "\n";
            std::cout << "scaled_jacobian_mean: " << qsum / double(q.size()) << "\n";
            std::cout << "components: " << comps.size() << " (largest " << comps.front()
                      << ")\n";
        } else if (*compress) {
            active_stage = "fea-explicit";
            auto cfg = load_config(comp_common);
            if (comp_speed > 0) cfg.compression.speed = comp_speed;
            if (comp_strain > 0) cfg.compression.target_strain = comp_strain;
            if (comp_snapshots >= 0) cfg.compression.snapshots = comp_snapshots;
            auto mesh = mesh_from_any(comp_input, cfg);
            fea::PlatenSchedule sched;
            sched.speed = cfg.compression.speed;
            sched.target_strain = cfg.compression.target_strain;
            sched.ramp_strain = cfg.compression.ramp_strain;
            sched.friction = cfg.compression.platen_friction;
            std::string snapdir = comp_snapdir.empty() && cfg.compression.snapshots > 0
                                      ? fs::path(comp_output).parent_path() / "snapshots"
                                      : fs::path(comp_snapdir);
            auto result = fea::run_compression(mesh, cfg.material, sched,
                                               pipeline::sim_options(cfg),
                                               cfg.compression.heartbeat_stride, snapdir,
                                               cfg.compression.snapshots);
            write_file(comp_output, fea::heartbeat_csv(result.heartbeat));
            std::cout << "wrote " << comp_output << " (" << result.steps << " steps, "
                      << result.deaths << " dead elements, " << result.termination << ")\n";
            if (result.termination != "completed") {
                throw Error("fea-explicit", "compression did not complete: " + result.termination);
            }
        } else if (*modalcmd) {
            active_stage = "fea-modal";
            auto cfg = load_config(modal_common);
            if (modal_n > 0) cfg.modal.n_modes = modal_n;
            if (modal_free_free) cfg.modal.free_free = true;
            if (modal_fixed_base) cfg.modal.free_free = false;
            auto mesh = mesh_from_any(modal_input, cfg);
            std::vector<std::string> fixed;
            if (!cfg.modal.free_free) fixed.push_back("min_z");
            auto sys = modal::assemble(mesh, cfg.material, fixed);
            auto modes = modal::solve_modes(sys, cfg.modal.n_modes, cfg.modal.shift_hz);
            write_file(modal_output, modal::frequency_table_csv(modes));
            std::cout << "wrote " << modal_output << " (rigid modes: "
                      << modes.rigid_mode_count << ")\n";
            if (int(modes.frequencies_hz.size()) > modes.rigid_mode_count)
                std::cout << "first_flexible_hz: " << modal::first_flexible(modes) << "\n";
            if (modal_export > 0) {
                std::string prefix = modal_modes_prefix.empty()
                                         ? modal_output + "_shapes"
                                         : modal_modes_prefix;
                modal::export_mode_shapes(mesh, sys, modes, modal_export, prefix);
                std::cout << "wrote " << modal_export << " mode shapes at " << prefix
                          << "_mode*.vtk\n";
            }
        } else if (*optimize) {
            active_stage = "optimize";
            auto cfg = load_config(opt_common);
            auto record = pipeline::optimize_first_flexible(cfg);
            write_file(opt_output, opt::opt_history_csv(record));
            std::cout << "wrote " << opt_output << "\n";
            std::cout << "evaluations: " << record.evaluations << "\n";
            std::cout << "termination: " << record.termination << "\n";
            std::cout << "best: spacing " << record.best_design.spacing << ", angle "
                      << record.best_design.angle << ", pattern "
                      << slicer::pattern_name(record.best_design.pattern()) << ", "
                      << record.best_objective << " Hz\n";
        } else if (*reducecmd) {
            active_stage = "reduce";
            auto cfg = load_config(red_common);
            (void)cfg;
            std::vector<std::pair<std::string, reduce::ReducedProperties>> rows;
            reduce::StressStrainCurve first_curve;
            reduce::ReducedProperties first_props;
            for (const auto& path : red_inputs) {
                auto hb = fea::read_heartbeat_csv(path);
                auto curve = reduce::StressStrainCurve::from_heartbeat(
                    hb, fs::path(path).stem().string());
                auto props = reduce::reduce_curve(curve);
                if (rows.empty()) {
                    first_curve = curve;
                    reduce::smooth(first_curve, {});
                    first_props = props;
                }
                rows.emplace_back(curve.provenance, props);
            }
            write_file(red_output, reduce::properties_csv(rows));
            std::cout << "wrote " << red_output << "\n";
            if (!red_svg.empty()) {
                write_file(red_svg, reduce::curve_svg(first_curve, first_props));
                std::cout << "wrote " << red_svg << "\n";
            }
        } else if (*pipe) {
            auto cfg = load_config(pipe_common);
            if (pipe_spacing > 0) cfg.print.infill_spacing = pipe_spacing;
            if (pipe_angle >= 0) cfg.print.infill_angle = pipe_angle;
            if (!pipe_pattern.empty()) cfg.print.pattern = slicer::pattern_from_name(pipe_pattern);
            fs::create_directories(pipe_outdir);

            active_stage = "slicer";
            auto tri = stl::load_geometry(pipe_input);
            auto text = slicer::slice_to_gcode(tri, cfg.print);
            write_file(pipe_outdir + "/toolpath.gcode", text);

            active_stage = "gcode";
            auto program = pipeline::stage_toolpath(text, cfg);
            active_stage = "asprinted";
            auto body = pipeline::stage_body(program, cfg);
            active_stage = "hexmesh";
            auto mesh = pipeline::stage_mesh(body, cfg.mesh);
            for (const auto& w : mesh.warnings) std::cerr << "warning: " << w << "\n";
            hexmesh::export_mesh(mesh, pipe_outdir + "/mesh.amh", hexmesh::MeshFormat::Native);
            std::cout << "mesh: " << mesh.hex_count() << " hexes\n";

            if (pipe_goal == "compress" || pipe_goal == "both") {
                active_stage = "fea-explicit";
                fea::PlatenSchedule sched;
                sched.speed = cfg.compression.speed;
                sched.target_strain = cfg.compression.target_strain;
                sched.ramp_strain = cfg.compression.ramp_strain;
                sched.friction = cfg.compression.platen_friction;
                auto result = fea::run_compression(
                    mesh, cfg.material, sched, pipeline::sim_options(cfg),
                    cfg.compression.heartbeat_stride,
                    cfg.compression.snapshots > 0 ? pipe_outdir + "/snapshots" : "",
                    cfg.compression.snapshots);
                write_file(pipe_outdir + "/heartbeat.csv", fea::heartbeat_csv(result.heartbeat));
                if (result.termination != "completed")
                    throw Error("fea-explicit", "compression did not complete: " + result.termination);

                active_stage = "reduce";
                auto curve = reduce::StressStrainCurve::from_heartbeat(result.heartbeat,
                                                                       "pipeline");
                auto props = reduce::reduce_curve(curve);
                write_file(pipe_outdir + "/properties.csv",
                           reduce::properties_csv({{"pipeline", props}}));
                std::cout << "E_MPa: " << props.elastic_modulus_mpa << "\n";
                std::cout << "plateau_MPa: " << props.plateau_stress_mpa << "\n";
                std::cout << "densification_strain: " << props.densification_strain << "\n";
            }
            if (pipe_goal == "modal" || pipe_goal == "both") {
                active_stage = "fea-modal";
                std::vector<std::string> fixed;
                if (!cfg.modal.free_free) fixed.push_back("min_z");
                auto sys = modal::assemble(mesh, cfg.material, fixed);
                auto modes = modal::solve_modes(sys, cfg.modal.n_modes, cfg.modal.shift_hz);
                write_file(pipe_outdir + "/frequencies.csv",
                           modal::frequency_table_csv(modes));
                std::cout << "first_flexible_hz: " << modal::first_flexible(modes) << "\n";
            }
            std::cout << "outputs in " << pipe_outdir << "\n";
        }
    } catch (const Error& e) {
        nlohmann::json err{{"stage", e.stage()}, {"error", e.what()}};
        std::cerr << err.dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        nlohmann::json err{{"stage", active_stage}, {"error", e.what()}};
        std::cerr << err.dump() << "\n";
        return 1;
    }
    return 0;
}
