#include "am/hexmesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "am/hexshape.hpp"

namespace am::hexmesh {

const int kHexFaces[6][4] = {
    {0, 3, 2, 1},  // -z
    {4, 5, 6, 7},  // +z
    {0, 1, 5, 4},  // -y
    {1, 2, 6, 5},  // +x
    {2, 3, 7, 6},  // +y
    {3, 0, 4, 7},  // -x
};

const int kCornerEdges[8][3] = {{1, 3, 4}, {2, 0, 5}, {3, 1, 6}, {0, 2, 7},
                                {7, 5, 0}, {4, 6, 1}, {5, 7, 2}, {6, 4, 3}};

void MeshParams::validate() const {
    if (cell_size <= 0) throw Error("hexmesh", "cell_size must be positive");
    if (fraction_tau <= 0 || fraction_tau > 1)
        throw Error("hexmesh", "fraction threshold must be in (0, 1]");
    if (fraction_samples < 1) throw Error("hexmesh", "fraction_samples must be >= 1");
    if (quality_floor <= 0 || quality_floor > 1)
        throw Error("hexmesh", "quality_floor must be in (0, 1]");
    if (min_size_ratio <= 0 || min_size_ratio > 1)
        throw Error("hexmesh", "min_size_ratio must be in (0, 1]");
    if (smoothing_iters < 0) throw Error("hexmesh", "smoothing_iters must be >= 0");
}

double hex_volume(const std::array<Vec3, 8>& corners) { return hexshape::volume(corners); }

double scaled_jacobian(const std::array<Vec3, 8>& c) {
    double worst = 1.0;
    for (int i = 0; i < 8; ++i) {
        Vec3 e0 = c[size_t(kCornerEdges[i][0])] - c[size_t(i)];
        Vec3 e1 = c[size_t(kCornerEdges[i][1])] - c[size_t(i)];
        Vec3 e2 = c[size_t(kCornerEdges[i][2])] - c[size_t(i)];
        double scale = norm(e0) * norm(e1) * norm(e2);
        if (scale < 1e-30) return 0.0;
        double det = dot(cross(e0, e1), e2);
        worst = std::min(worst, det / scale);
    }
    return worst;
}

std::vector<double> element_quality(const HexMesh& mesh) {
    std::vector<double> q(mesh.hex_count());
    for (size_t e = 0; e < mesh.hex_count(); ++e)
        q[e] = scaled_jacobian(mesh.corners(int(e)));
    return q;
}

HexMesh voxelize(const Sdf& sdf, const Aabb& bounds, const MeshParams& params) {
    params.validate();
    if (!bounds.valid()) throw Error("hexmesh", "voxelize: invalid bounds");

    const double h = params.cell_size;
    Vec3 ext = bounds.extent();
    int nx = std::max(1, int(std::ceil(ext.x / h - 1e-9)));
    int ny = std::max(1, int(std::ceil(ext.y / h - 1e-9)));
    int nz = std::max(1, int(std::ceil(ext.z / h - 1e-9)));

    auto inside = [&](int i, int j, int k) {
        Vec3 base{bounds.lo.x + i * h, bounds.lo.y + j * h, bounds.lo.z + k * h};
        if (params.inside_rule == InsideRule::Center) {
            return sdf({base.x + 0.5 * h, base.y + 0.5 * h, base.z + 0.5 * h}) < 0.0;
        }
        int n = params.fraction_samples;
        int hits = 0, total = n * n * n;
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b)
                for (int c = 0; c < n; ++c) {
                    Vec3 p{base.x + (a + 0.5) * h / n, base.y + (b + 0.5) * h / n,
                           base.z + (c + 0.5) * h / n};
                    if (sdf(p) < 0.0) hits++;
                }
        return double(hits) >= params.fraction_tau * double(total);
    };

    HexMesh mesh;
    std::unordered_map<long long, int> node_ids;
    auto node_key = [&](int i, int j, int k) {
        return ((long long)k * (ny + 2) + j) * (long long)(nx + 2) + i;
    };
    auto get_node = [&](int i, int j, int k) {
        long long key = node_key(i, j, k);
        auto it = node_ids.find(key);
        if (it != node_ids.end()) return it->second;
        int id = int(mesh.nodes.size());
        mesh.nodes.push_back({bounds.lo.x + i * h, bounds.lo.y + j * h, bounds.lo.z + k * h});
        node_ids.emplace(key, id);
        return id;
    };

    for (int k = 0; k < nz; ++k)
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                if (!inside(i, j, k)) continue;
                HexConn conn = {get_node(i, j, k),         get_node(i + 1, j, k),
                                get_node(i + 1, j + 1, k), get_node(i, j + 1, k),
                                get_node(i, j, k + 1),     get_node(i + 1, j, k + 1),
                                get_node(i + 1, j + 1, k + 1), get_node(i, j + 1, k + 1)};
                mesh.hexes.push_back(conn);
            }

    if (mesh.hexes.empty())
        throw Error("hexmesh",
                    "empty mesh: no cell classified inside (cell_size likely larger "
                    "than the printed features)");

    auto comps = component_sizes(mesh);
    if (comps.size() > 1) {
        std::ostringstream os;
        os << "mesh has " << comps.size() << " disconnected components (sizes:";
        for (size_t i = 0; i < std::min<size_t>(comps.size(), 8); ++i) os << " " << comps[i];
        if (comps.size() > 8) os << " ...";
        os << ")";
        mesh.warnings.push_back(os.str());
    }
    return mesh;
}

namespace {

struct FaceKey {
    std::array<int, 4> sorted;
    bool operator==(const FaceKey& o) const { return sorted == o.sorted; }
};
struct FaceKeyHash {
    size_t operator()(const FaceKey& k) const {
        size_t h = 1469598103934665603ull;
        for (int v : k.sorted) {
            h ^= size_t(v);
            h *= 1099511628211ull;
        }
        return h;
    }
};

FaceKey face_key(const HexConn& conn, int face) {
    FaceKey k;
    for (int i = 0; i < 4; ++i) k.sorted[size_t(i)] = conn[size_t(kHexFaces[face][i])];
    std::sort(k.sorted.begin(), k.sorted.end());
    return k;
}

}  // namespace

std::vector<SideRef> boundary_faces(const HexMesh& mesh) {
    std::unordered_map<FaceKey, int, FaceKeyHash> counts;
    counts.reserve(mesh.hex_count() * 6);
    for (const auto& conn : mesh.hexes)
        for (int f = 0; f < 6; ++f) counts[face_key(conn, f)]++;
    std::vector<SideRef> out;
    for (size_t e = 0; e < mesh.hex_count(); ++e)
        for (int f = 0; f < 6; ++f)
            if (counts[face_key(mesh.hexes[e], f)] == 1) out.emplace_back(int(e), f);
    return out;
}

std::vector<size_t> component_sizes(const HexMesh& mesh) {
    std::vector<int> parent(mesh.hex_count());
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int a) {
        while (parent[size_t(a)] != a) {
            parent[size_t(a)] = parent[size_t(parent[size_t(a)])];
            a = parent[size_t(a)];
        }
        return a;
    };
    std::unordered_map<FaceKey, int, FaceKeyHash> first_owner;
    first_owner.reserve(mesh.hex_count() * 6);
    for (size_t e = 0; e < mesh.hex_count(); ++e) {
        for (int f = 0; f < 6; ++f) {
            FaceKey key = face_key(mesh.hexes[e], f);
            auto it = first_owner.find(key);
            if (it == first_owner.end()) {
                first_owner.emplace(key, int(e));
            } else {
                int ra = find(it->second), rb = find(int(e));
                if (ra != rb) parent[size_t(rb)] = ra;
            }
        }
    }
    std::unordered_map<int, size_t> sizes;
    for (size_t e = 0; e < mesh.hex_count(); ++e) sizes[find(int(e))]++;
    std::vector<size_t> out;
    out.reserve(sizes.size());
    for (const auto& [root, n] : sizes) out.push_back(n);
    std::sort(out.rbegin(), out.rend());
    return out;
}

HexMesh smooth_boundary(HexMesh mesh, const Sdf& sdf, const MeshParams& params) {
    params.validate();
    if (params.smoothing_iters == 0) return mesh;

    const size_t nn = mesh.node_count();
    std::vector<std::vector<int>> node_hexes(nn);
    for (size_t e = 0; e < mesh.hex_count(); ++e)
        for (int c = 0; c < 8; ++c) node_hexes[size_t(mesh.hexes[e][size_t(c)])].push_back(int(e));

    auto bfaces = boundary_faces(mesh);
    std::vector<bool> on_boundary(nn, false);
    std::vector<std::vector<int>> bneighbors(nn);
    for (const auto& [e, f] : bfaces) {
        const auto& conn = mesh.hexes[size_t(e)];
        for (int i = 0; i < 4; ++i) {
            int a = conn[size_t(kHexFaces[f][i])];
            int b = conn[size_t(kHexFaces[f][(i + 1) % 4])];
            on_boundary[size_t(a)] = true;
            bneighbors[size_t(a)].push_back(b);
            bneighbors[size_t(b)].push_back(a);
        }
    }
    static const int kEdges[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                      {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};
    std::vector<std::vector<int>> neighbors(nn);
    for (const auto& conn : mesh.hexes)
        for (const auto& ed : kEdges) {
            neighbors[size_t(conn[size_t(ed[0])])].push_back(conn[size_t(ed[1])]);
            neighbors[size_t(conn[size_t(ed[1])])].push_back(conn[size_t(ed[0])]);
        }

    const double grad_h = 0.01 * params.cell_size;
    auto gradient = [&](const Vec3& p) {
        return Vec3{(sdf({p.x + grad_h, p.y, p.z}) - sdf({p.x - grad_h, p.y, p.z})),
                    (sdf({p.x, p.y + grad_h, p.z}) - sdf({p.x, p.y - grad_h, p.z})),
                    (sdf({p.x, p.y, p.z + grad_h}) - sdf({p.x, p.y, p.z - grad_h}))} *
               (0.5 / grad_h);
    };

    const double min_h = params.min_size_ratio * params.cell_size;
    auto elem_size = [&](const std::array<Vec3, 8>& c) {
        double vol = hex_volume(c);
        double amax = 0.0;
        for (int f = 0; f < 6; ++f) {
            const int* fc = kHexFaces[f];
            amax = std::max(amax, 0.5 * norm(cross(c[size_t(fc[2])] - c[size_t(fc[0])],
                                                   c[size_t(fc[3])] - c[size_t(fc[1])])));
        }
        return amax > 0 ? vol / amax : 0.0;
    };
    auto quality_ok = [&](int node, const Vec3& candidate) {
        Vec3 saved = mesh.nodes[size_t(node)];
        mesh.nodes[size_t(node)] = candidate;
        bool ok = true;
        for (int e : node_hexes[size_t(node)]) {
            auto corners = mesh.corners(e);
            if (scaled_jacobian(corners) < params.quality_floor ||
                elem_size(corners) < min_h) {
                ok = false;
                break;
            }
        }
        mesh.nodes[size_t(node)] = saved;
        return ok;
    };

    const double newton_w = 0.5, laplace_w = 0.25;
    const double max_move = 0.45 * params.cell_size;  // keep nodes within their cell

    for (int iter = 0; iter < params.smoothing_iters; ++iter) {
        for (size_t n = 0; n < nn; ++n) {
            const Vec3 p = mesh.nodes[n];
            Vec3 candidate = p;
            if (on_boundary[n]) {
                double d = sdf(p);
                Vec3 g = gradient(p);
                double g2 = norm2(g);
                Vec3 newton = p;
                if (g2 > 1e-12) newton = p - g * (d / g2);
                Vec3 lap{0, 0, 0};
                const auto& nb = bneighbors[n];
                if (!nb.empty()) {
                    for (int b : nb) lap += mesh.nodes[size_t(b)];
                    lap *= 1.0 / double(nb.size());
                } else {
                    lap = p;
                }
                candidate = p + (newton - p) * newton_w + (lap - p) * laplace_w;
            } else {
                const auto& nb = neighbors[n];
                if (nb.empty()) continue;
                Vec3 lap{0, 0, 0};
                for (int b : nb) lap += mesh.nodes[size_t(b)];
                lap *= 1.0 / double(nb.size());
                candidate = p + (lap - p) * 0.5;
            }
            Vec3 step = candidate - p;
            double sl = norm(step);
            if (sl > max_move) candidate = p + step * (max_move / sl);
            if (norm2(candidate - p) < 1e-24) continue;
            // boundary moves must not drift off the isosurface (protects
            // already-captured sharp features like box edges)
            if (on_boundary[n]) {
                double tol = 0.02 * params.cell_size;
                if (std::abs(sdf(candidate)) > std::abs(sdf(p)) + tol) continue;
            }
            if (quality_ok(int(n), candidate)) mesh.nodes[n] = candidate;
        }
    }
    return mesh;
}

std::vector<SetPredicate> builtin_min_max_z(const HexMesh& mesh, double tol) {
    Aabb box = mesh.bounds();
    double zmin = box.lo.z, zmax = box.hi.z;
    return {
        {"min_z", [zmin, tol](const Vec3& p) { return std::abs(p.z - zmin) <= tol; }},
        {"max_z", [zmax, tol](const Vec3& p) { return std::abs(p.z - zmax) <= tol; }},
    };
}

HexMesh tag_sets(HexMesh mesh, const std::vector<SetPredicate>& predicates) {
    auto bfaces = boundary_faces(mesh);
    for (const auto& pred : predicates) {
        std::vector<int> nodes;
        for (size_t n = 0; n < mesh.node_count(); ++n)
            if (pred.test(mesh.nodes[n])) nodes.push_back(int(n));

        std::vector<SideRef> sides;
        for (const auto& [e, f] : bfaces) {
            Vec3 centroid{0, 0, 0};
            for (int i = 0; i < 4; ++i)
                centroid += mesh.nodes[size_t(mesh.hexes[size_t(e)][size_t(kHexFaces[f][i])])];
            centroid *= 0.25;
            if (pred.test(centroid)) sides.emplace_back(e, f);
        }
        if (nodes.empty() && sides.empty())
            mesh.warnings.push_back("predicate '" + pred.name + "' selected nothing");
        mesh.node_sets[pred.name] = std::move(nodes);
        mesh.side_sets[pred.name] = std::move(sides);
    }
    return mesh;
}

std::string export_mesh_string(const HexMesh& mesh, MeshFormat format) {
    std::ostringstream os;
    if (format == MeshFormat::Native) {
        os << "amhex 1\n";
        os << "nodes " << mesh.node_count() << "\n";
        for (size_t n = 0; n < mesh.node_count(); ++n)
            os << n << " " << format_full(mesh.nodes[n].x) << " "
               << format_full(mesh.nodes[n].y) << " " << format_full(mesh.nodes[n].z) << "\n";
        os << "hexes " << mesh.hex_count() << "\n";
        for (size_t e = 0; e < mesh.hex_count(); ++e) {
            os << e;
            for (int c = 0; c < 8; ++c) os << " " << mesh.hexes[e][size_t(c)];
            os << "\n";
        }
        for (const auto& [name, ids] : mesh.node_sets) {
            os << "nodeset " << name << " " << ids.size() << "\n";
            for (size_t i = 0; i < ids.size(); ++i)
                os << ids[i] << (i + 1 == ids.size() ? "\n" : " ");
            if (ids.empty()) os << "\n";
        }
        for (const auto& [name, sides] : mesh.side_sets) {
            os << "sideset " << name << " " << sides.size() << "\n";
            for (size_t i = 0; i < sides.size(); ++i)
                os << sides[i].first << " " << sides[i].second
                   << (i + 1 == sides.size() ? "\n" : " ");
            if (sides.empty()) os << "\n";
        }
        os << "end\n";
    } else {
        os << "# vtk DataFile Version 3.0\n";
        os << "amtool hex mesh\n";
        os << "ASCII\n";
        os << "DATASET UNSTRUCTURED_GRID\n";
        os << "POINTS " << mesh.node_count() << " double\n";
        for (const auto& p : mesh.nodes)
            os << format_full(p.x) << " " << format_full(p.y) << " " << format_full(p.z)
               << "\n";
        os << "CELLS " << mesh.hex_count() << " " << mesh.hex_count() * 9 << "\n";
        for (const auto& conn : mesh.hexes) {
            os << "8";
            for (int c = 0; c < 8; ++c) os << " " << conn[size_t(c)];
            os << "\n";
        }
        os << "CELL_TYPES " << mesh.hex_count() << "\n";
        for (size_t e = 0; e < mesh.hex_count(); ++e) os << "12\n";
    }
    return os.str();
}

void export_mesh(const HexMesh& mesh, const std::string& path, MeshFormat format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("hexmesh", "cannot write mesh file: " + path);
    out << export_mesh_string(mesh, format);
}

HexMesh import_mesh(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("hexmesh", "cannot open mesh file: " + path);
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != "amhex" || version != 1)
        throw Error("hexmesh", "not a native mesh file: " + path);

    HexMesh mesh;
    std::string word;
    while (in >> word) {
        if (word == "nodes") {
            size_t n = 0;
            in >> n;
            mesh.nodes.resize(n);
            for (size_t i = 0; i < n; ++i) {
                size_t id;
                Vec3 p;
                in >> id >> p.x >> p.y >> p.z;
                mesh.nodes[id] = p;
            }
        } else if (word == "hexes") {
            size_t m = 0;
            in >> m;
            mesh.hexes.resize(m);
            for (size_t i = 0; i < m; ++i) {
                size_t id;
                in >> id;
                for (int c = 0; c < 8; ++c) in >> mesh.hexes[id][size_t(c)];
            }
        } else if (word == "nodeset") {
            std::string name;
            size_t count;
            in >> name >> count;
            std::vector<int> ids(count);
            for (auto& id : ids) in >> id;
            mesh.node_sets[name] = std::move(ids);
        } else if (word == "sideset") {
            std::string name;
            size_t count;
            in >> name >> count;
            std::vector<SideRef> sides(count);
            for (auto& s : sides) in >> s.first >> s.second;
            mesh.side_sets[name] = std::move(sides);
        } else if (word == "end") {
            break;
        } else {
            throw Error("hexmesh", "unexpected token '" + word + "' in " + path);
        }
    }
    if (mesh.nodes.empty() || mesh.hexes.empty())
        throw Error("hexmesh", "mesh file has no geometry: " + path);
    return mesh;
}

void write_vtk(const HexMesh& mesh, const std::string& path,
               const std::map<std::string, std::vector<Vec3>>& point_vectors,
               const std::map<std::string, std::vector<double>>& cell_scalars) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("hexmesh", "cannot write VTK file: " + path);
    out << export_mesh_string(mesh, MeshFormat::VtkLegacy);
    if (!point_vectors.empty()) {
        out << "POINT_DATA " << mesh.node_count() << "\n";
        for (const auto& [name, vecs] : point_vectors) {
            out << "VECTORS " << name << " double\n";
            for (const auto& v : vecs)
                out << format_full(v.x) << " " << format_full(v.y) << " "
                    << format_full(v.z) << "\n";
        }
    }
    if (!cell_scalars.empty()) {
        out << "CELL_DATA " << mesh.hex_count() << "\n";
        for (const auto& [name, vals] : cell_scalars) {
            out << "SCALARS " << name << " double 1\n";
            out << "LOOKUP_TABLE default\n";
            for (double v : vals) out << format_full(v) << "\n";
        }
    }
}

}  // namespace am::hexmesh
