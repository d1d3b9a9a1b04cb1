#include "am/slicer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "am/bead.hpp"
#include "am/gcode.hpp"

namespace am::slicer {

InfillPattern pattern_from_name(const std::string& name) {
    if (name == "lines") return InfillPattern::Lines;
    if (name == "grid") return InfillPattern::Grid;
    if (name == "triangle") return InfillPattern::Triangle;
    throw Error("slicer", "unknown infill pattern '" + name +
                          "' (available: lines, grid, triangle)");
}

const char* pattern_name(InfillPattern p) {
    switch (p) {
        case InfillPattern::Lines: return "lines";
        case InfillPattern::Grid: return "grid";
        case InfillPattern::Triangle: return "triangle";
    }
    return "?";
}

void PrintConfig::validate() const {
    if (filament_diameter <= 0) throw Error("slicer", "filament_diameter must be positive");
    if (infill_spacing <= 0) throw Error("slicer", "infill_spacing must be positive");
    if (infill_angle < 0 || infill_angle >= 180)
        throw Error("slicer", "infill_angle must be in [0, 180)");
    if (layer_height <= 0 || layer_height > filament_diameter)
        throw Error("slicer", "layer_height must be in (0, filament_diameter]");
    if (wall_line_count < 0) throw Error("slicer", "wall_line_count must be >= 0");
    if (bead_width < 0) throw Error("slicer", "bead_width must be >= 0");
    if (print_speed <= 0) throw Error("slicer", "print_speed must be positive");
}

double PrintConfig::layer_angle(int layer_index) const {
    const double cycle[4] = {0.0, infill_angle, 0.0, 180.0 - infill_angle};
    int k = layer_index % 4;
    if (k < 0) k += 4;
    return cycle[k];
}

double polygon_signed_area(const Polygon& poly) {
    double a = 0.0;
    for (size_t i = 0; i < poly.size(); ++i) {
        const Vec2& p = poly[i];
        const Vec2& q = poly[(i + 1) % poly.size()];
        a += cross(p, q);
    }
    return 0.5 * a;
}

bool point_in_polygons(const Vec2& p, const std::vector<Polygon>& loops) {
    int crossings = 0;
    for (const auto& loop : loops) {
        for (size_t i = 0; i < loop.size(); ++i) {
            const Vec2& a = loop[i];
            const Vec2& b = loop[(i + 1) % loop.size()];
            if ((a.y > p.y) != (b.y > p.y)) {
                double x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if (x > p.x) crossings++;
            }
        }
    }
    return (crossings % 2) == 1;
}

Vec2 polygon_centroid(const std::vector<Polygon>& loops) {
    double area_sum = 0.0;
    Vec2 weighted{0, 0};
    for (const auto& loop : loops) {
        double a = 0.0;
        Vec2 c{0, 0};
        for (size_t i = 0; i < loop.size(); ++i) {
            const Vec2& p = loop[i];
            const Vec2& q = loop[(i + 1) % loop.size()];
            double w = cross(p, q);
            a += w;
            c.x += (p.x + q.x) * w;
            c.y += (p.y + q.y) * w;
        }
        // signed: holes (CW) subtract naturally
        area_sum += a * 0.5;
        weighted.x += c.x / 6.0;
        weighted.y += c.y / 6.0;
    }
    if (std::abs(area_sum) < 1e-12) return {0, 0};
    return {weighted.x / area_sum, weighted.y / area_sum};
}

Polygon inset_polygon(const Polygon& poly, double distance) {
    const size_t n = poly.size();
    if (n < 3) return {};
    double area_before = polygon_signed_area(poly);
    Polygon out(n);
    for (size_t i = 0; i < n; ++i) {
        const Vec2& prev = poly[(i + n - 1) % n];
        const Vec2& cur = poly[i];
        const Vec2& next = poly[(i + 1) % n];
        Vec2 d1 = cur - prev, d2 = next - cur;
        double l1 = norm(d1), l2 = norm(d2);
        if (l1 < 1e-12 || l2 < 1e-12) return {};
        d1 = d1 * (1.0 / l1);
        d2 = d2 * (1.0 / l2);
        // material lies to the left for CCW outers and CW holes alike
        Vec2 n1{-d1.y, d1.x}, n2{-d2.y, d2.x};
        // intersect the two offset edge lines
        double denom = cross(d1, d2);
        if (std::abs(denom) < 1e-9) {
            out[i] = cur + n1 * distance;
        } else {
            Vec2 p1 = cur + n1 * distance;  // point on offset edge 1 (dir d1)
            Vec2 p2 = cur + n2 * distance;  // point on offset edge 2 (dir d2)
            double t = cross(p2 - p1, d2) / denom;
            out[i] = p1 + d1 * t;
        }
    }
    // reject collapsed offsets: every edge must keep its original direction
    for (size_t i = 0; i < n; ++i) {
        Vec2 old_edge = poly[(i + 1) % n] - poly[i];
        Vec2 new_edge = out[(i + 1) % n] - out[i];
        if (dot(old_edge, new_edge) <= 0.0) return {};
    }
    double area_after = polygon_signed_area(out);
    if (area_before * area_after <= 0.0) return {};
    if (std::abs(area_after) < 1e-9) return {};
    return out;
}

namespace {

struct PKey {
    long long x, y;
    bool operator<(const PKey& o) const { return x != o.x ? x < o.x : y < o.y; }
};
PKey pkey(const Vec2& p) {
    const double q = 1e7;
    return {llround(p.x * q), llround(p.y * q)};
}

}  // namespace

std::vector<LayerContours> slice_mesh(const stl::TriMesh& mesh, const PrintConfig& cfg) {
    cfg.validate();
    auto check = stl::check_mesh(mesh);
    if (!check.watertight()) {
        std::ostringstream os;
        os << "mesh is not watertight: " << check.boundary_edges.size()
           << " boundary edge(s);";
        size_t shown = std::min<size_t>(check.boundary_edges.size(), 4);
        for (size_t i = 0; i < shown; ++i) {
            const auto& [a, b] = check.boundary_edges[i];
            os << " (" << a.x << "," << a.y << "," << a.z << ")-(" << b.x << "," << b.y
               << "," << b.z << ")";
        }
        throw Error("slicer", os.str());
    }

    Aabb box = mesh.bounds();
    double height = box.hi.z - box.lo.z;
    int n_layers = std::max(1, int(std::floor(height / cfg.layer_height - 0.5)) + 1);

    std::vector<LayerContours> layers;
    layers.reserve(size_t(n_layers));

    for (int k = 0; k < n_layers; ++k) {
        double zp = box.lo.z + (k + 0.5) * cfg.layer_height;
        LayerContours layer;
        layer.z = zp;

        // gather oriented intersection segments (material to the left)
        std::vector<std::pair<Vec2, Vec2>> segs;
        for (const auto& t : mesh.triangles) {
            const Vec3* v[3] = {&t.a, &t.b, &t.c};
            if (norm(cross(t.b - t.a, t.c - t.a)) < 1e-12) continue;  // degenerate, skip
            bool above[3];
            int n_above = 0;
            for (int i = 0; i < 3; ++i) {
                above[i] = v[i]->z > zp;  // "on plane" counts as below: closed loops
                n_above += above[i] ? 1 : 0;
            }
            if (n_above == 0 || n_above == 3) continue;
            Vec2 pts[2];
            int np = 0;
            for (int i = 0; i < 3; ++i) {
                const Vec3& p = *v[i];
                const Vec3& q = *v[(i + 1) % 3];
                if (above[i] != above[(i + 1) % 3]) {
                    double s = (zp - p.z) / (q.z - p.z);
                    Vec3 x = p + (q - p) * s;
                    if (np < 2) pts[np++] = {x.x, x.y};
                }
            }
            if (np != 2) continue;
            Vec2 d = pts[1] - pts[0];
            if (norm(d) < 1e-12) continue;
            Vec3 nrm = cross(*v[1] - *v[0], *v[2] - *v[0]);
            Vec2 want{-nrm.y, nrm.x};  // walk direction keeping material left
            if (dot(d, want) < 0) std::swap(pts[0], pts[1]);
            segs.emplace_back(pts[0], pts[1]);
        }

        // chain segments into closed loops via quantized endpoints
        std::map<PKey, std::vector<size_t>> by_start;
        for (size_t i = 0; i < segs.size(); ++i) by_start[pkey(segs[i].first)].push_back(i);
        std::vector<bool> used(segs.size(), false);
        for (size_t i = 0; i < segs.size(); ++i) {
            if (used[i]) continue;
            Polygon loop;
            size_t cur = i;
            PKey start_key = pkey(segs[i].first);
            while (true) {
                used[cur] = true;
                loop.push_back(segs[cur].first);
                PKey next_key = pkey(segs[cur].second);
                if (next_key.x == start_key.x && next_key.y == start_key.y) break;
                auto it = by_start.find(next_key);
                size_t next = SIZE_MAX;
                if (it != by_start.end()) {
                    for (size_t cand : it->second)
                        if (!used[cand]) { next = cand; break; }
                }
                if (next == SIZE_MAX) { loop.clear(); break; }  // open chain: drop
                cur = next;
            }
            if (loop.size() >= 3) layer.loops.push_back(std::move(loop));
        }

        // normalize orientation by containment parity (outer CCW, holes CW)
        for (size_t i = 0; i < layer.loops.size(); ++i) {
            int depth = 0;
            Vec2 probe = layer.loops[i][0];
            for (size_t j = 0; j < layer.loops.size(); ++j) {
                if (j == i) continue;
                if (point_in_polygons(probe, {layer.loops[j]})) depth++;
            }
            double area = polygon_signed_area(layer.loops[i]);
            bool want_ccw = (depth % 2) == 0;
            if ((area > 0) != want_ccw)
                std::reverse(layer.loops[i].begin(), layer.loops[i].end());
        }
        layers.push_back(std::move(layer));
    }
    return layers;
}

namespace {

// Clips the infinite line {origin + t*dir} against loops by even-odd rule.
// Returns sorted inside intervals as (t0, t1) pairs.
std::vector<std::pair<double, double>> clip_line(const Vec2& origin, const Vec2& dir,
                                                 const std::vector<Polygon>& loops) {
    std::vector<double> ts;
    for (const auto& loop : loops) {
        for (size_t i = 0; i < loop.size(); ++i) {
            const Vec2& a = loop[i];
            const Vec2& b = loop[(i + 1) % loop.size()];
            Vec2 e = b - a;
            double denom = cross(dir, e);
            if (std::abs(denom) < 1e-14) continue;
            // solve origin + t*dir = a + s*e
            Vec2 w = a - origin;
            double t = cross(w, e) / denom;
            double s = cross(w, dir) / denom;
            if (s >= 0.0 && s < 1.0) ts.push_back(t);
        }
    }
    std::sort(ts.begin(), ts.end());
    std::vector<std::pair<double, double>> spans;
    for (size_t i = 0; i + 1 < ts.size(); i += 2) spans.emplace_back(ts[i], ts[i + 1]);
    return spans;
}

}  // namespace

std::vector<Polyline> generate_infill(const LayerContours& layer, const PrintConfig& cfg,
                                      int layer_index) {
    cfg.validate();
    double pitch = cfg.pitch();
    if (pitch < 1e-3)
        throw Error("slicer", "infill pitch below 1e-3 mm would over-extrude; "
                              "increase infill_spacing");
    if (layer.loops.empty()) return {};

    double base = cfg.layer_angle(layer_index);
    std::vector<double> family_angles{base};
    if (cfg.pattern == InfillPattern::Grid) family_angles.push_back(base + 90.0);
    if (cfg.pattern == InfillPattern::Triangle) {
        family_angles.push_back(base + 60.0);
        family_angles.push_back(base + 120.0);
    }

    // infill region: contour loops inset past the perimeter walls
    std::vector<Polygon> region;
    double wall_inset = cfg.wall_line_count * cfg.filament_diameter;
    if (wall_inset > 0) {
        for (const auto& loop : layer.loops) {
            Polygon ins = inset_polygon(loop, wall_inset);
            if (!ins.empty()) region.push_back(std::move(ins));
        }
    } else {
        region = layer.loops;
    }
    if (region.empty()) return {};

    Vec2 centroid = polygon_centroid(layer.loops);
    std::vector<Polyline> result;

    for (double ang_deg : family_angles) {
        double ang = ang_deg * M_PI / 180.0;
        Vec2 u{std::cos(ang), std::sin(ang)};
        Vec2 nrm{-std::sin(ang), std::cos(ang)};
        double c0 = dot(nrm, centroid);
        double cmin = 1e300, cmax = -1e300;
        for (const auto& loop : region) {
            for (const auto& p : loop) {
                double c = dot(nrm, p);
                cmin = std::min(cmin, c);
                cmax = std::max(cmax, c);
            }
        }
        int m_lo = int(std::ceil((cmin - c0) / pitch - 0.5));
        int m_hi = int(std::floor((cmax - c0) / pitch - 0.5));
        bool reverse = false;
        for (int m = m_lo; m <= m_hi; ++m) {
            double c = c0 + (m + 0.5) * pitch;
            Vec2 origin = nrm * c;
            auto spans = clip_line(origin, u, region);
            // serpentine ordering keeps travel moves short
            if (reverse) std::reverse(spans.begin(), spans.end());
            for (auto [t0, t1] : spans) {
                if (t1 - t0 < 1e-6) continue;
                Vec2 p0 = origin + u * (reverse ? t1 : t0);
                Vec2 p1 = origin + u * (reverse ? t0 : t1);
                result.push_back({p0, p1});
            }
            reverse = !reverse;
        }
    }
    return result;
}

PlannedLayer plan_layer(const LayerContours& layer, const PrintConfig& cfg, int layer_index) {
    PlannedLayer out;
    out.z = layer.z;
    out.index = layer_index;
    for (int w = 0; w < cfg.wall_line_count; ++w) {
        double inset = (w + 0.5) * cfg.filament_diameter;
        for (const auto& loop : layer.loops) {
            Polygon ins = inset_polygon(loop, inset);
            if (ins.empty()) continue;
            Polyline closed(ins.begin(), ins.end());
            closed.push_back(ins.front());
            out.walls.push_back(std::move(closed));
        }
    }
    out.infill = generate_infill(layer, cfg, layer_index);
    return out;
}

std::string emit_gcode(const std::vector<PlannedLayer>& layers, const PrintConfig& cfg) {
    cfg.validate();
    if (layers.empty()) throw Error("slicer", "no layers to emit");

    BeadShape bead = default_bead_shape(cfg.road_width(), cfg.layer_height);
    double a_fil = filament_area(cfg.filament_diameter);
    double e_per_mm = bead.area() / a_fil;
    double print_feed = cfg.print_speed * 60.0;   // mm/min
    double travel_feed = 120.0 * 60.0;
    FlowModel flow{cfg.nozzle_area, cfg.print_speed};

    std::ostringstream os;
    os << "; amtool toolpath\n";
    os << "; filament_diameter_mm = " << format_gcode(cfg.filament_diameter) << "\n";
    os << "; layer_height_mm = " << format_gcode(cfg.layer_height) << "\n";
    os << "; infill_spacing = " << format_gcode(cfg.infill_spacing) << "\n";
    os << "; infill_angle_deg = " << format_gcode(cfg.infill_angle) << "\n";
    os << "; infill_pattern = " << pattern_name(cfg.pattern) << "\n";
    os << "; bead_area_mm2 = " << format_gcode(bead.area()) << "\n";
    os << "; volumetric_rate_mm3_s = " << format_gcode(flow.volumetric_rate()) << "\n";
    os << "G90\n";
    os << "M82\n";
    os << "G92 E0\n";

    double e = 0.0;
    auto emit_polyline = [&](const Polyline& pl, double z) {
        if (pl.size() < 2) return;
        os << "G0 X" << format_gcode(pl[0].x) << " Y" << format_gcode(pl[0].y)
           << " Z" << format_gcode(z) << " F" << format_gcode(travel_feed) << "\n";
        for (size_t i = 1; i < pl.size(); ++i) {
            double len = norm(pl[i] - pl[i - 1]);
            e += len * e_per_mm;
            os << "G1 X" << format_gcode(pl[i].x) << " Y" << format_gcode(pl[i].y)
               << " E" << format_gcode(e) << " F" << format_gcode(print_feed) << "\n";
        }
    };

    for (const auto& layer : layers) {
        os << "; layer " << layer.index << " z=" << format_gcode(layer.z) << "\n";
        for (const auto& wall : layer.walls) emit_polyline(wall, layer.z);
        for (const auto& line : layer.infill) emit_polyline(line, layer.z);
    }
    os << "; end\n";
    return os.str();
}

std::string slice_to_gcode(const stl::TriMesh& mesh, const PrintConfig& cfg) {
    auto contours = slice_mesh(mesh, cfg);
    std::vector<PlannedLayer> planned;
    planned.reserve(contours.size());
    for (size_t k = 0; k < contours.size(); ++k)
        planned.push_back(plan_layer(contours[k], cfg, int(k)));
    return emit_gcode(planned, cfg);
}

const std::map<std::string, PlatformProfile>& builtin_profiles() {
    static const std::map<std::string, PlatformProfile> profiles = {
        {"identity", PlatformProfile{"identity", {}, {}, false, ""}},
        {"diw-volumetric",
         PlatformProfile{"diw-volumetric",
                         {"; platform: diw-volumetric", "PUMP ON"},
                         {"PUMP OFF", "; end of platform stream"},
                         true,
                         "Q"}},
    };
    return profiles;
}

std::string diw_transform(const std::string& gcode_text, const PlatformProfile& profile,
                          const PrintConfig& cfg) {
    bool passthrough = profile.header.empty() && profile.footer.empty() &&
                       !profile.rewrite_extrusion;
    if (passthrough) return gcode_text;

    // map line number -> volumetric rate for extruding moves
    std::map<int, double> rate_by_line;
    if (profile.rewrite_extrusion) {
        auto commands = gcode::parse_text(gcode_text);
        gcode::FffDeltaEDetector det;
        auto program = gcode::extract_toolpath(commands, det, cfg.layer_height,
                                               cfg.filament_diameter);
        double a_fil = filament_area(cfg.filament_diameter);
        for (const auto& seg : program.segments) {
            if (!seg.extruding) continue;
            double len = norm(seg.end - seg.start);
            if (len < 1e-12 || seg.feed <= 0) continue;
            // Eq-style conversion: linear filament feed v = feed * dE / L, then
            // volumetric rate V = A_filament * v.
            double v_lin = (seg.feed / 60.0) * seg.delta_e / len;
            rate_by_line[seg.line_no] = a_fil * v_lin;
        }
    }

    std::ostringstream os;
    for (const auto& h : profile.header) os << h << "\n";

    std::istringstream in(gcode_text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        line_no++;
        auto it = rate_by_line.find(line_no);
        if (it != rate_by_line.end()) {
            // swap the E word for the platform extrusion word
            size_t epos = line.find(" E");
            if (epos != std::string::npos) {
                size_t vend = epos + 2;
                while (vend < line.size() && line[vend] != ' ') vend++;
                line = line.substr(0, epos) + " " + profile.extrusion_word +
                       format_gcode(it->second) + line.substr(vend);
            }
        }
        os << line << "\n";
    }
    for (const auto& f : profile.footer) os << f << "\n";
    return os.str();
}

std::string diw_transform(const std::string& gcode_text, const std::string& profile_name,
                          const PrintConfig& cfg) {
    const auto& profiles = builtin_profiles();
    auto it = profiles.find(profile_name);
    if (it == profiles.end()) {
        std::ostringstream os;
        os << "unknown platform profile '" << profile_name << "'; available:";
        for (const auto& [name, p] : profiles) os << " " << name;
        throw Error("slicer", os.str());
    }
    return diw_transform(gcode_text, it->second, cfg);
}

}  // namespace am::slicer
