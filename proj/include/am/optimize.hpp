#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "am/core.hpp"
#include "am/slicer.hpp"

namespace am::opt {

// Design coordinates: infill spacing multiple, raster angle, and the infill
// pattern mapped onto a pseudo-continuous axis so a gradient method can cross
// bins: [0,1) lines, [1,2) grid, [2,3) triangle.
struct DesignBounds {
    double spacing_lo = 0.5, spacing_hi = 2.0;
    double angle_lo = 45.0, angle_hi = 90.0;
    double pattern_lo = 0.0, pattern_hi = 3.0;
};

struct DesignPoint {
    double spacing = 1.0;
    double angle = 60.0;
    double pattern_coord = 1.5;  // bin midpoint of "grid"

    slicer::InfillPattern pattern() const;
    static double pattern_bin_center(slicer::InfillPattern p);

    // scaled [0,1]^3 coordinates used by the optimizer
    std::vector<double> encode(const DesignBounds& b) const;
    static DesignPoint decode(const std::vector<double>& x, const DesignBounds& b);
};

struct IterationRecord {
    int iteration = 0;
    DesignPoint design;
    double objective = 0;
    std::vector<double> gradient;
    size_t evaluations = 0;  // cumulative pipeline invocations
    bool accepted = true;
};

struct OptRecord {
    std::vector<IterationRecord> history;
    std::string termination;
    size_t evaluations = 0;
    DesignPoint best_design;
    double best_objective = 0;
};

using ObjectiveFn = std::function<double(const std::vector<double>&)>;
using GradientFn = std::function<std::vector<double>(const std::vector<double>&)>;

struct FrcgOptions {
    double grad_tol = 1e-6;
    double step_tol = 1e-10;
    size_t max_evaluations = 100;
    double armijo_c1 = 1e-4;
    double initial_step = 0.25;
    int restart_interval = 0;  // 0 = dimension
    std::vector<double> fd_steps;  // per axis; empty = 1e-6 everywhere
};

// Forward differences with one-sided fallback at the upper bound.
std::vector<double> fd_gradient(const ObjectiveFn& f, const std::vector<double>& x,
                                const std::vector<double>& h,
                                const std::vector<double>& lo,
                                const std::vector<double>& hi);

struct FrcgIterate {
    std::vector<double> x;
    double f = 0;
    std::vector<double> gradient;
    size_t evaluations = 0;
};

struct FrcgResult {
    std::vector<FrcgIterate> accepted;
    std::vector<double> best_x;
    double best_f = 0;
    std::string termination;
    size_t evaluations = 0;
};

// Fletcher-Reeves nonlinear conjugate gradient with Armijo backtracking and
// bound clamping. `gradient` empty -> finite differences with fd_steps.
FrcgResult frcg_minimize(const ObjectiveFn& f, std::vector<double> x0,
                         const std::vector<double>& lo, const std::vector<double>& hi,
                         const FrcgOptions& options, const GradientFn& gradient = {});

// Memoizing wrapper that counts true evaluations (cache hits are free).
class CountingObjective {
public:
    explicit CountingObjective(ObjectiveFn inner) : inner_(std::move(inner)) {}
    double operator()(const std::vector<double>& x);
    size_t evaluations() const { return count_; }

private:
    ObjectiveFn inner_;
    std::map<std::vector<long long>, double> cache_;
    size_t count_ = 0;
};

std::string opt_history_csv(const OptRecord& record);

}  // namespace am::opt
