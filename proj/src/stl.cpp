#include "am/stl.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace am::stl {

namespace {

struct VKey {
    long long x, y, z;
    bool operator<(const VKey& o) const {
        if (x != o.x) return x < o.x;
        if (y != o.y) return y < o.y;
        return z < o.z;
    }
};

VKey vkey(const Vec3& v) {
    const double q = 1e7;  // 0.1 nm quantization for edge matching
    return {llround(v.x * q), llround(v.y * q), llround(v.z * q)};
}

TriMesh read_stl_ascii(std::istream& in) {
    TriMesh mesh;
    std::string word;
    std::vector<Vec3> verts;
    while (in >> word) {
        if (word == "vertex") {
            Vec3 v;
            in >> v.x >> v.y >> v.z;
            verts.push_back(v);
            if (verts.size() == 3) {
                mesh.triangles.push_back({verts[0], verts[1], verts[2]});
                verts.clear();
            }
        }
    }
    return mesh;
}

TriMesh read_stl_binary(std::istream& in) {
    char header[80];
    in.read(header, 80);
    uint32_t count = 0;
    in.read(reinterpret_cast<char*>(&count), 4);
    TriMesh mesh;
    mesh.triangles.reserve(count);
    for (uint32_t i = 0; i < count && in; ++i) {
        float data[12];
        in.read(reinterpret_cast<char*>(data), 48);
        uint16_t attr;
        in.read(reinterpret_cast<char*>(&attr), 2);
        Triangle t;
        t.a = {data[3], data[4], data[5]};
        t.b = {data[6], data[7], data[8]};
        t.c = {data[9], data[10], data[11]};
        mesh.triangles.push_back(t);
    }
    return mesh;
}

}  // namespace

TriMesh read_stl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("slicer", "cannot open STL file: " + path);

    // ASCII files start with "solid" and contain "facet" soon after; binary
    // files may also start with "solid", so sniff for the keyword.
    char head[512] = {0};
    in.read(head, sizeof(head) - 1);
    std::string prefix(head, size_t(in.gcount()));
    in.clear();
    in.seekg(0);
    bool ascii = prefix.rfind("solid", 0) == 0 &&
                 prefix.find("facet") != std::string::npos;
    TriMesh mesh = ascii ? read_stl_ascii(in) : read_stl_binary(in);
    if (mesh.triangles.empty()) throw Error("slicer", "STL file has no triangles: " + path);
    return mesh;
}

void write_stl_binary(const TriMesh& mesh, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("slicer", "cannot write STL file: " + path);
    char header[80] = {0};
    std::snprintf(header, sizeof(header), "binary stl");
    out.write(header, 80);
    uint32_t count = uint32_t(mesh.triangles.size());
    out.write(reinterpret_cast<char*>(&count), 4);
    for (const auto& t : mesh.triangles) {
        Vec3 n = t.normal();
        float data[12] = {float(n.x),   float(n.y),   float(n.z),
                          float(t.a.x), float(t.a.y), float(t.a.z),
                          float(t.b.x), float(t.b.y), float(t.b.z),
                          float(t.c.x), float(t.c.y), float(t.c.z)};
        out.write(reinterpret_cast<char*>(data), 48);
        uint16_t attr = 0;
        out.write(reinterpret_cast<char*>(&attr), 2);
    }
}

MeshCheck check_mesh(const TriMesh& mesh) {
    MeshCheck result;
    std::map<std::pair<VKey, VKey>, int> edges;
    for (const auto& t : mesh.triangles) {
        if (norm(cross(t.b - t.a, t.c - t.a)) < 1e-12) {
            result.degenerate_triangles++;
            continue;
        }
        const Vec3* v[3] = {&t.a, &t.b, &t.c};
        for (int e = 0; e < 3; ++e) {
            VKey k1 = vkey(*v[e]), k2 = vkey(*v[(e + 1) % 3]);
            if (k2 < k1) std::swap(k1, k2);
            edges[{k1, k2}]++;
        }
    }
    for (const auto& [edge, count] : edges) {
        if (count != 2) {
            Vec3 a{edge.first.x / 1e7, edge.first.y / 1e7, edge.first.z / 1e7};
            Vec3 b{edge.second.x / 1e7, edge.second.y / 1e7, edge.second.z / 1e7};
            result.boundary_edges.emplace_back(a, b);
        }
    }
    return result;
}

TriMesh make_box(double lx, double ly, double lz, Vec3 o) {
    Vec3 p[8] = {
        {o.x, o.y, o.z},           {o.x + lx, o.y, o.z},
        {o.x + lx, o.y + ly, o.z}, {o.x, o.y + ly, o.z},
        {o.x, o.y, o.z + lz},      {o.x + lx, o.y, o.z + lz},
        {o.x + lx, o.y + ly, o.z + lz}, {o.x, o.y + ly, o.z + lz}};
    // two triangles per face, outward winding
    const int f[12][3] = {{0, 2, 1}, {0, 3, 2},   // bottom (-z)
                          {4, 5, 6}, {4, 6, 7},   // top (+z)
                          {0, 1, 5}, {0, 5, 4},   // -y
                          {2, 3, 7}, {2, 7, 6},   // +y
                          {1, 2, 6}, {1, 6, 5},   // +x
                          {3, 0, 4}, {3, 4, 7}};  // -x
    TriMesh mesh;
    for (auto& tri : f) mesh.triangles.push_back({p[tri[0]], p[tri[1]], p[tri[2]]});
    return mesh;
}

namespace {

void subdivide(std::vector<Triangle>& tris) {
    std::vector<Triangle> out;
    out.reserve(tris.size() * 4);
    for (const auto& t : tris) {
        Vec3 ab = (t.a + t.b) * 0.5, bc = (t.b + t.c) * 0.5, ca = (t.c + t.a) * 0.5;
        out.push_back({t.a, ab, ca});
        out.push_back({t.b, bc, ab});
        out.push_back({t.c, ca, bc});
        out.push_back({ab, bc, ca});
    }
    tris = std::move(out);
}

}  // namespace

TriMesh make_icosphere(double radius, int subdivisions, Vec3 center) {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> v = {
        {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0},
        {0, -1, t}, {0, 1, t}, {0, -1, -t}, {0, 1, -t},
        {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    const int f[20][3] = {{0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11},
                          {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                          {3, 9, 4},  {3, 4, 2},  {3, 2, 6},  {3, 6, 8},  {3, 8, 9},
                          {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},  {9, 8, 1}};
    TriMesh mesh;
    for (auto& tri : f) mesh.triangles.push_back({v[tri[0]], v[tri[1]], v[tri[2]]});
    for (int s = 0; s < subdivisions; ++s) subdivide(mesh.triangles);
    for (auto& tri : mesh.triangles) {
        tri.a = center + normalized(tri.a) * radius;
        tri.b = center + normalized(tri.b) * radius;
        tri.c = center + normalized(tri.c) * radius;
    }
    return mesh;
}

TriMesh make_blob(double radius, int subdivisions, double wobble, uint64_t seed) {
    TriMesh sphere = make_icosphere(1.0, subdivisions);
    // Radial scale must be a pure function of direction so shared vertices of
    // adjacent triangles stay welded.
    auto warp = [&](const Vec3& p) {
        Vec3 d = normalized(p);
        double s = 1.0 + wobble * (std::sin(3.1 * d.x + double(seed % 7)) *
                                   std::cos(2.3 * d.y - double(seed % 5)) +
                                   0.5 * std::sin(4.7 * d.z + double(seed % 11)));
        return d * (radius * s);
    };
    for (auto& t : sphere.triangles) {
        t.a = warp(t.a);
        t.b = warp(t.b);
        t.c = warp(t.c);
    }
    return sphere;
}

TriMesh load_geometry(const std::string& spec) {
    if (spec.rfind("box:", 0) == 0) {
        double lx = 0, ly = 0, lz = 0;
        char sep1 = 0, sep2 = 0;
        std::istringstream is(spec.substr(4));
        is >> lx >> sep1 >> ly >> sep2 >> lz;
        if (!is || lx <= 0 || ly <= 0 || lz <= 0)
            throw Error("slicer", "bad geometry spec '" + spec + "'; expected box:LX,LY,LZ");
        return make_box(lx, ly, lz);
    }
    return read_stl(spec);
}

}  // namespace am::stl
