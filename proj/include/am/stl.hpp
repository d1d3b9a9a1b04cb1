#pragma once

#include <string>
#include <vector>

#include "am/core.hpp"

namespace am::stl {

struct Triangle {
    Vec3 a, b, c;
    Vec3 normal() const { return normalized(cross(b - a, c - a)); }
};

struct TriMesh {
    std::vector<Triangle> triangles;
    Aabb bounds() const {
        Aabb box;
        for (const auto& t : triangles) {
            box.expand(t.a); box.expand(t.b); box.expand(t.c);
        }
        return box;
    }
};

// Reads binary or ASCII STL files (auto-detected).
TriMesh read_stl(const std::string& path);
void write_stl_binary(const TriMesh& mesh, const std::string& path);

// Watertightness check: every edge must be shared by exactly two triangles.
// Returns the offending edges (empty when closed). Degenerate triangles are
// reported separately so callers can warn and skip them.
struct MeshCheck {
    std::vector<std::pair<Vec3, Vec3>> boundary_edges;
    size_t degenerate_triangles = 0;
    bool watertight() const { return boundary_edges.empty(); }
};
MeshCheck check_mesh(const TriMesh& mesh);

// Primitive generators used by tests, demos, and "box:LxWxH" geometry specs.
TriMesh make_box(double lx, double ly, double lz, Vec3 origin = {0, 0, 0});
TriMesh make_icosphere(double radius, int subdivisions, Vec3 center = {0, 0, 0});
// Star-shaped closed mesh: icosphere with seeded radial perturbation.
TriMesh make_blob(double radius, int subdivisions, double wobble, uint64_t seed);

// Parses "box:LX,LY,LZ" or treats the string as an STL path.
TriMesh load_geometry(const std::string& spec);

}  // namespace am::stl
