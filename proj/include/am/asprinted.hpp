#pragma once

#include <vector>

#include "am/bead.hpp"
#include "am/core.hpp"
#include "am/gcode.hpp"

namespace am::asprinted {

// One deposited line of material: a capsule along `axis` with an elliptical
// cross-section (radius_h wide, radius_v tall). Circular sections give the
// exact capsule SDF; elliptical ones a sign-correct approximation.
struct Bead {
    Vec3 start, end;       // mm
    double radius_h = 0.0; // horizontal half-width
    double radius_v = 0.0; // vertical half-height

    Aabb bounds() const {
        Aabb b;
        b.expand(start);
        b.expand(end);
        double r = std::max(radius_h, radius_v);
        b.pad(r);
        return b;
    }
};

double bead_sdf(const Vec3& p, const Bead& b);

class PrintedBody {
public:
    PrintedBody() = default;
    explicit PrintedBody(std::vector<Bead> beads);

    // Builds beads from the extruding segments of a toolpath.
    static PrintedBody from_toolpath(const gcode::ToolpathProgram& program,
                                     const BeadShape& bead);

    double sdf(const Vec3& p) const;
    // Reference evaluation without the spatial index (tests).
    double sdf_brute(const Vec3& p) const;

    const std::vector<Bead>& beads() const { return beads_; }
    const Aabb& bounds() const { return bbox_; }
    bool empty() const { return beads_.empty(); }

private:
    void build_index();

    std::vector<Bead> beads_;
    Aabb bbox_;
    // uniform grid of bead indices
    double cell_ = 1.0;
    int nx_ = 0, ny_ = 0, nz_ = 0;
    std::vector<std::vector<int>> cells_;
    double scale_floor_ = 1.0;     // min over beads of rmin/rmax
    double radius_ceiling_ = 0.0;  // max over beads of min radius
};

struct VolumeEstimate {
    double volume = 0.0;     // mm^3
    double std_error = 0.0;  // mm^3
    size_t samples = 0;
};

// Monte-Carlo volume of the region {sdf < 0}. `cell` sets the sampling budget
// (about one sample per cell^3 of bounding volume).
VolumeEstimate printed_volume(const PrintedBody& body, double cell, uint64_t seed = 1234);

// Sampled-field dump: dims header then row-major values (x fastest).
void dump_field(const PrintedBody& body, double spacing, const std::string& path);

}  // namespace am::asprinted
