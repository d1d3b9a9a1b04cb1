#include "am/asprinted.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace am::asprinted {

double bead_sdf(const Vec3& p, const Bead& b) {
    Vec3 axis = b.end - b.start;
    double len2 = norm2(axis);
    Vec3 closest = b.start;
    if (len2 > 0.0) {
        double t = std::clamp(dot(p - b.start, axis) / len2, 0.0, 1.0);
        closest = b.start + axis * t;
    }
    Vec3 d = p - closest;

    if (std::abs(b.radius_h - b.radius_v) < 1e-12) {
        return norm(d) - b.radius_h;  // exact capsule
    }

    // elliptical cross-section: scale the normal plane; sign exact, magnitude
    // approximate (conservative, scaled by the minor radius)
    Vec3 u = len2 > 0.0 ? axis * (1.0 / std::sqrt(len2)) : Vec3{1, 0, 0};
    Vec3 vert = Vec3{0, 0, 1} - u * u.z;
    double vn = norm(vert);
    if (vn < 1e-9) vert = {1, 0, 0}; else vert = vert * (1.0 / vn);
    Vec3 lat = cross(u, vert);

    double da = dot(d, u);     // axial overshoot beyond caps
    double dv = dot(d, vert);  // vertical
    double dl = dot(d, lat);   // lateral
    double rmin = std::min(b.radius_h, b.radius_v);
    double s = std::sqrt((da * da + dl * dl) / (b.radius_h * b.radius_h) +
                         (dv * dv) / (b.radius_v * b.radius_v));
    return (s - 1.0) * rmin;
}

PrintedBody::PrintedBody(std::vector<Bead> beads) : beads_(std::move(beads)) {
    build_index();
}

PrintedBody PrintedBody::from_toolpath(const gcode::ToolpathProgram& program,
                                       const BeadShape& bead) {
    std::vector<Bead> beads;
    beads.reserve(program.segments.size());
    for (const auto& seg : program.segments) {
        if (!seg.extruding) continue;  // travel moves never become geometry
        Bead b;
        b.start = seg.start;
        b.end = seg.end;
        b.radius_h = bead.width * 0.5;
        b.radius_v = bead.height * 0.5;
        beads.push_back(b);
    }
    return PrintedBody(std::move(beads));
}

void PrintedBody::build_index() {
    bbox_ = Aabb{};
    if (beads_.empty()) return;
    double rmax = 0.0;
    scale_floor_ = 1.0;
    radius_ceiling_ = 0.0;
    for (const auto& b : beads_) {
        bbox_.expand(b.bounds());
        double rh = b.radius_h, rv = b.radius_v;
        rmax = std::max(rmax, std::max(rh, rv));
        // elliptical pseudo-distance can undershoot Euclidean distance by the
        // radius ratio; track the worst case for the ring-search bound
        scale_floor_ = std::min(scale_floor_, std::min(rh, rv) / std::max(rh, rv));
        radius_ceiling_ = std::max(radius_ceiling_, std::min(rh, rv));
    }
    // cell size about one bead diameter keeps candidate lists short
    cell_ = std::max(2.0 * rmax, 1e-6);
    Vec3 ext = bbox_.extent();
    nx_ = std::max(1, int(std::ceil(ext.x / cell_)));
    ny_ = std::max(1, int(std::ceil(ext.y / cell_)));
    nz_ = std::max(1, int(std::ceil(ext.z / cell_)));
    // cap the grid so pathological aspect ratios stay bounded
    const long long max_cells = 4'000'000;
    while ((long long)nx_ * ny_ * nz_ > max_cells) {
        cell_ *= 2.0;
        nx_ = std::max(1, (nx_ + 1) / 2);
        ny_ = std::max(1, (ny_ + 1) / 2);
        nz_ = std::max(1, (nz_ + 1) / 2);
    }
    cells_.assign(size_t(nx_) * ny_ * nz_, {});
    for (int i = 0; i < int(beads_.size()); ++i) {
        Aabb bb = beads_[size_t(i)].bounds();
        int x0 = std::clamp(int((bb.lo.x - bbox_.lo.x) / cell_), 0, nx_ - 1);
        int x1 = std::clamp(int((bb.hi.x - bbox_.lo.x) / cell_), 0, nx_ - 1);
        int y0 = std::clamp(int((bb.lo.y - bbox_.lo.y) / cell_), 0, ny_ - 1);
        int y1 = std::clamp(int((bb.hi.y - bbox_.lo.y) / cell_), 0, ny_ - 1);
        int z0 = std::clamp(int((bb.lo.z - bbox_.lo.z) / cell_), 0, nz_ - 1);
        int z1 = std::clamp(int((bb.hi.z - bbox_.lo.z) / cell_), 0, nz_ - 1);
        for (int z = z0; z <= z1; ++z)
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x)
                    cells_[(size_t(z) * ny_ + y) * nx_ + x].push_back(i);
    }
}

double PrintedBody::sdf_brute(const Vec3& p) const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& b : beads_) best = std::min(best, bead_sdf(p, b));
    return best;
}

double PrintedBody::sdf(const Vec3& p) const {
    if (beads_.empty()) return std::numeric_limits<double>::infinity();

    int cx = std::clamp(int((p.x - bbox_.lo.x) / cell_), 0, nx_ - 1);
    int cy = std::clamp(int((p.y - bbox_.lo.y) / cell_), 0, ny_ - 1);
    int cz = std::clamp(int((p.z - bbox_.lo.z) / cell_), 0, nz_ - 1);

    double best = std::numeric_limits<double>::infinity();
    int max_ring = std::max({nx_, ny_, nz_});
    for (int ring = 0; ring <= max_ring; ++ring) {
        // once the nearest possible point of this ring exceeds the current
        // best distance, no farther ring can improve the minimum
        // beads are indexed in every cell their box overlaps, so anything
        // reachable through ring r lies at least (r-1)*cell away in Euclidean
        // distance; convert that to the weakest possible pseudo-distance
        if (ring > 0) {
            double floor_dist = (ring - 1) * cell_ * scale_floor_ - radius_ceiling_;
            if (best <= floor_dist) break;
        }
        int x0 = cx - ring, x1 = cx + ring;
        int y0 = cy - ring, y1 = cy + ring;
        int z0 = cz - ring, z1 = cz + ring;
        for (int z = z0; z <= z1; ++z) {
            if (z < 0 || z >= nz_) continue;
            for (int y = y0; y <= y1; ++y) {
                if (y < 0 || y >= ny_) continue;
                for (int x = x0; x <= x1; ++x) {
                    if (x < 0 || x >= nx_) continue;
                    bool shell = (x == x0 || x == x1 || y == y0 || y == y1 ||
                                  z == z0 || z == z1);
                    if (!shell) continue;
                    for (int bi : cells_[(size_t(z) * ny_ + y) * nx_ + x])
                        best = std::min(best, bead_sdf(p, beads_[size_t(bi)]));
                }
            }
        }
    }
    // far outside the grid the rings may be exhausted before the bound check
    if (!std::isfinite(best)) return sdf_brute(p);
    return best;
}

VolumeEstimate printed_volume(const PrintedBody& body, double cell, uint64_t seed) {
    if (cell <= 0) throw Error("asprinted", "sampling cell must be positive");
    VolumeEstimate est;
    if (body.empty()) return est;

    Aabb box = body.bounds();
    Vec3 ext = box.extent();
    double vbox = ext.x * ext.y * ext.z;
    size_t n = size_t(std::clamp(vbox / (cell * cell * cell), 1e4, 4e6));

    Rng rng(seed);
    size_t hits = 0;
    for (size_t i = 0; i < n; ++i) {
        Vec3 p{rng.uniform(box.lo.x, box.hi.x), rng.uniform(box.lo.y, box.hi.y),
               rng.uniform(box.lo.z, box.hi.z)};
        if (body.sdf(p) < 0.0) hits++;
    }
    double frac = double(hits) / double(n);
    est.volume = frac * vbox;
    est.std_error = vbox * std::sqrt(std::max(frac * (1.0 - frac), 0.0) / double(n));
    est.samples = n;
    return est;
}

void dump_field(const PrintedBody& body, double spacing, const std::string& path) {
    if (spacing <= 0) throw Error("asprinted", "field spacing must be positive");
    Aabb box = body.bounds();
    Vec3 ext = box.extent();
    int nx = std::max(1, int(std::ceil(ext.x / spacing)) + 1);
    int ny = std::max(1, int(std::ceil(ext.y / spacing)) + 1);
    int nz = std::max(1, int(std::ceil(ext.z / spacing)) + 1);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("asprinted", "cannot write field dump: " + path);
    int32_t dims[3] = {nx, ny, nz};
    double meta[4] = {spacing, box.lo.x, box.lo.y, box.lo.z};
    out.write(reinterpret_cast<char*>(dims), sizeof(dims));
    out.write(reinterpret_cast<char*>(meta), sizeof(meta));
    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) {
                double v = body.sdf({box.lo.x + x * spacing, box.lo.y + y * spacing,
                                     box.lo.z + z * spacing});
                out.write(reinterpret_cast<char*>(&v), sizeof(v));
            }
}

}  // namespace am::asprinted
