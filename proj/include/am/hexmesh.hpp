#pragma once

#include <array>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "am/core.hpp"

namespace am::hexmesh {

using HexConn = std::array<int, 8>;      // standard corner ordering, +z top face
using SideRef = std::pair<int, int>;     // (hex id, local face 0..5)

struct HexMesh {
    std::vector<Vec3> nodes;             // mm
    std::vector<HexConn> hexes;
    std::map<std::string, std::vector<int>> node_sets;
    std::map<std::string, std::vector<SideRef>> side_sets;
    std::vector<std::string> warnings;

    size_t node_count() const { return nodes.size(); }
    size_t hex_count() const { return hexes.size(); }
    std::array<Vec3, 8> corners(int hex_id) const {
        std::array<Vec3, 8> c;
        for (int i = 0; i < 8; ++i) c[size_t(i)] = nodes[size_t(hexes[size_t(hex_id)][size_t(i)])];
        return c;
    }
    Aabb bounds() const {
        Aabb b;
        for (const auto& n : nodes) b.expand(n);
        return b;
    }
};

enum class InsideRule { Center, Fraction };

struct MeshParams {
    double cell_size = 0.25;        // mm, characteristic element size
    int smoothing_iters = 5;
    InsideRule inside_rule = InsideRule::Center;
    double fraction_tau = 0.5;      // fraction rule threshold, (0, 1]
    int fraction_samples = 3;       // sample points per axis
    double quality_floor = 0.2;     // smoothing keeps min scaled Jacobian above this
    // smoothing also keeps each element's characteristic size (volume over
    // largest face) above this fraction of cell_size; thin elements would
    // throttle the explicit solver's stable timestep
    double min_size_ratio = 0.5;

    void validate() const;
};

using Sdf = std::function<double(const Vec3&)>;

// Local face corner indices (outward-facing order) for the standard hex.
extern const int kHexFaces[6][4];
// Node -> the 3 edge-adjacent corners, per corner, for Jacobian evaluation.
extern const int kCornerEdges[8][3];

HexMesh voxelize(const Sdf& sdf, const Aabb& bounds, const MeshParams& params);

double scaled_jacobian(const std::array<Vec3, 8>& corners);
std::vector<double> element_quality(const HexMesh& mesh);

HexMesh smooth_boundary(HexMesh mesh, const Sdf& sdf, const MeshParams& params);

// Boundary faces: faces referenced by exactly one hex.
std::vector<SideRef> boundary_faces(const HexMesh& mesh);

struct SetPredicate {
    std::string name;
    // node predicate on position; face predicate on centroid
    std::function<bool(const Vec3&)> test;
};
// Built-in min_z/max_z predicates (within tol of the bbox extremes).
std::vector<SetPredicate> builtin_min_max_z(const HexMesh& mesh, double tol = 1e-6);
HexMesh tag_sets(HexMesh mesh, const std::vector<SetPredicate>& predicates);

// Connected-component sizes over face-adjacency (largest first).
std::vector<size_t> component_sizes(const HexMesh& mesh);

enum class MeshFormat { Native, VtkLegacy };
void export_mesh(const HexMesh& mesh, const std::string& path, MeshFormat format);
std::string export_mesh_string(const HexMesh& mesh, MeshFormat format);
HexMesh import_mesh(const std::string& path);

// VTK legacy writer with optional point vectors / cell scalars for results.
void write_vtk(const HexMesh& mesh, const std::string& path,
               const std::map<std::string, std::vector<Vec3>>& point_vectors = {},
               const std::map<std::string, std::vector<double>>& cell_scalars = {});

double hex_volume(const std::array<Vec3, 8>& corners);

}  // namespace am::hexmesh
