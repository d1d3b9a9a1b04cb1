#pragma once

#include <optional>
#include <string>
#include <vector>

#include "am/fea_explicit.hpp"

namespace am::reduce {

struct StressStrainCurve {
    std::vector<double> strain;            // ascending after dedup
    std::vector<double> stress;            // MPa
    std::vector<double> smoothed;          // filled by smooth()
    std::string provenance;

    static StressStrainCurve from_heartbeat(const std::vector<fea::HeartbeatRow>& rows,
                                            std::string run_id = "");
    const std::vector<double>& working_stress() const {
        return smoothed.empty() ? stress : smoothed;
    }
};

struct ReduceConfig {
    int savgol_window = 21;
    int savgol_order = 3;
    double elastic_strain_lo = 0.005;
    double elastic_strain_hi = 0.04;
    double slope_tol = 0.05;   // plateau: |slope| < slope_tol * E
    double dens_tol = 0.5;     // densification: slope > dens_tol * E
};

struct FitDiagnostics {
    double slope = 0;
    double intercept = 0;
    double mean_residual = 0;
    double lo = 0, hi = 0;  // strain window used
};

struct ReducedProperties {
    double elastic_modulus_mpa = 0;
    double plateau_stress_mpa = 0;
    double densification_strain = 0;
    FitDiagnostics elastic_fit;
    FitDiagnostics plateau_fit;
    FitDiagnostics densification_fit;
};

// Savitzky-Golay smoothing: per-point least-squares polynomial over a centered
// window, truncated near the ends.
std::vector<double> savgol(const std::vector<double>& series, int window, int order);

void smooth(StressStrainCurve& curve, const ReduceConfig& cfg);

// E from a least-squares line over the elastic strain window.
std::pair<double, FitDiagnostics> elastic_modulus(const StressStrainCurve& curve,
                                                  const ReduceConfig& cfg = {});

// Mean stress over the longest near-zero-slope run after the elastic window.
std::pair<double, FitDiagnostics> plateau_stress(const StressStrainCurve& curve,
                                                 double elastic_modulus_mpa,
                                                 const ReduceConfig& cfg = {});

// Intersection of the terminal stiffening line with the plateau level.
std::pair<double, FitDiagnostics> densification_strain(const StressStrainCurve& curve,
                                                       double elastic_modulus_mpa,
                                                       double plateau_mpa,
                                                       const ReduceConfig& cfg = {});

ReducedProperties reduce_curve(StressStrainCurve curve, const ReduceConfig& cfg = {});

std::string properties_csv(const std::vector<std::pair<std::string, ReducedProperties>>& rows);

// Annotated curve plot (strain vs stress with E / plateau / densification marks).
std::string curve_svg(const StressStrainCurve& curve, const ReducedProperties& props);

}  // namespace am::reduce
