#pragma once

#include <algorithm>
#include <cmath>

namespace am {

// Cross-section of a deposited line of material. Width follows the filament
// diameter; height follows the layer height with a 10% vertical overbuild so
// stacked layers always fuse instead of meeting at an exact tangent.
struct BeadShape {
    double width = 0.41;   // mm, horizontal extent
    double height = 0.41;  // mm, vertical extent

    double area() const { return M_PI * 0.25 * width * height; }
    bool circular() const { return std::abs(width - height) < 1e-12; }
};

inline BeadShape default_bead_shape(double filament_diameter, double layer_height,
                                    double vertical_overbuild = 1.1) {
    BeadShape b;
    b.width = filament_diameter;
    b.height = std::min(filament_diameter, layer_height * vertical_overbuild);
    return b;
}

inline double filament_area(double filament_diameter) {
    return M_PI * 0.25 * filament_diameter * filament_diameter;
}

}  // namespace am
