#pragma once

#include <map>
#include <string>
#include <vector>

#include "am/core.hpp"
#include "am/stl.hpp"

namespace am::slicer {

enum class InfillPattern { Lines, Grid, Triangle };

InfillPattern pattern_from_name(const std::string& name);
const char* pattern_name(InfillPattern p);

struct PrintConfig {
    double filament_diameter = 0.41;  // mm
    double layer_height = 0.35;       // mm, must be <= filament_diameter
    double infill_spacing = 1.0;      // multiple of filament diameter
    double infill_angle = 45.0;       // degrees, [0, 180)
    double bead_width = 0.0;          // deposited road width; 0 = filament diameter
    InfillPattern pattern = InfillPattern::Lines;
    int wall_line_count = 1;
    double print_speed = 30.0;        // mm/s
    double nozzle_area = 0.132;       // mm^2 (0.41 mm nozzle)

    double pitch() const { return infill_spacing * filament_diameter; }
    double road_width() const { return bead_width > 0 ? bead_width : filament_diameter; }
    void validate() const;
    // Effective raster angle for a layer: the repeating per-layer pattern
    // [0, angle, 0, 180 - angle].
    double layer_angle(int layer_index) const;
};

struct FlowModel {
    double nozzle_area = 0.0;       // A, mm^2
    double linear_flow_rate = 0.0;  // v, mm/s
    double volumetric_rate() const { return nozzle_area * linear_flow_rate; }  // V = A v
};

using Polygon = std::vector<Vec2>;   // closed; last edge connects back to front
using Polyline = std::vector<Vec2>;  // open

struct LayerContours {
    double z = 0.0;               // mm
    std::vector<Polygon> loops;   // CCW outer, CW holes (even-odd)
};

struct PlannedLayer {
    double z = 0.0;
    int index = 0;
    std::vector<Polyline> walls;   // closed wall loops, emitted first
    std::vector<Polyline> infill;  // raster polylines
};

// Geometric helpers shared with tests.
double polygon_signed_area(const Polygon& poly);
bool point_in_polygons(const Vec2& p, const std::vector<Polygon>& loops);  // even-odd
Vec2 polygon_centroid(const std::vector<Polygon>& loops);
// Miter inset of a loop toward the material side. Returns empty when the
// offset collapses the loop.
Polygon inset_polygon(const Polygon& poly, double distance);

std::vector<LayerContours> slice_mesh(const stl::TriMesh& mesh, const PrintConfig& cfg);

std::vector<Polyline> generate_infill(const LayerContours& layer, const PrintConfig& cfg,
                                      int layer_index);

PlannedLayer plan_layer(const LayerContours& layer, const PrintConfig& cfg, int layer_index);

// Assembles the full plan and emits absolute-positioning G-code. Extrusion
// obeys volume conservation: dE * A_filament = length * A_bead.
std::string emit_gcode(const std::vector<PlannedLayer>& layers, const PrintConfig& cfg);

// Convenience: slice + infill + emit for a whole mesh.
std::string slice_to_gcode(const stl::TriMesh& mesh, const PrintConfig& cfg);

struct PlatformProfile {
    std::string name;
    std::vector<std::string> header;  // lines prepended verbatim
    std::vector<std::string> footer;  // lines appended verbatim
    // When true, E words on motion lines are rewritten into volumetric flow
    // commands (V = A v from the flow model): "<prefix><rate mm^3/s>".
    bool rewrite_extrusion = false;
    std::string extrusion_word = "Q";
};

// Built-in profiles: "identity" and "diw-volumetric". Profile files may add
// more (see pipeline config).
const std::map<std::string, PlatformProfile>& builtin_profiles();
std::string diw_transform(const std::string& gcode_text, const PlatformProfile& profile,
                          const PrintConfig& cfg);
std::string diw_transform(const std::string& gcode_text, const std::string& profile_name,
                          const PrintConfig& cfg);

}  // namespace am::slicer
