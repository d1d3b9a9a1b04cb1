#include "am/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace am::opt {

slicer::InfillPattern DesignPoint::pattern() const {
    if (pattern_coord < 1.0) return slicer::InfillPattern::Lines;
    if (pattern_coord < 2.0) return slicer::InfillPattern::Grid;
    return slicer::InfillPattern::Triangle;
}

double DesignPoint::pattern_bin_center(slicer::InfillPattern p) {
    switch (p) {
        case slicer::InfillPattern::Lines: return 0.5;
        case slicer::InfillPattern::Grid: return 1.5;
        case slicer::InfillPattern::Triangle: return 2.5;
    }
    return 0.5;
}

std::vector<double> DesignPoint::encode(const DesignBounds& b) const {
    return {(spacing - b.spacing_lo) / (b.spacing_hi - b.spacing_lo),
            (angle - b.angle_lo) / (b.angle_hi - b.angle_lo),
            (pattern_coord - b.pattern_lo) / (b.pattern_hi - b.pattern_lo)};
}

DesignPoint DesignPoint::decode(const std::vector<double>& x, const DesignBounds& b) {
    DesignPoint d;
    d.spacing = std::clamp(b.spacing_lo + x.at(0) * (b.spacing_hi - b.spacing_lo),
                           b.spacing_lo, b.spacing_hi);
    d.angle = std::clamp(b.angle_lo + x.at(1) * (b.angle_hi - b.angle_lo), b.angle_lo,
                         b.angle_hi);
    double p = b.pattern_lo + x.at(2) * (b.pattern_hi - b.pattern_lo);
    // half-open upper bound keeps the decode total on [lo, hi)
    d.pattern_coord = std::clamp(p, b.pattern_lo,
                                 std::nexttoward(b.pattern_hi, b.pattern_lo));
    return d;
}

std::vector<double> fd_gradient(const ObjectiveFn& f, const std::vector<double>& x,
                                const std::vector<double>& h,
                                const std::vector<double>& lo,
                                const std::vector<double>& hi) {
    const size_t n = x.size();
    std::vector<double> g(n, 0.0);
    double f0 = f(x);
    size_t failures = 0;
    for (size_t i = 0; i < n; ++i) {
        double step = h.size() == n ? h[i] : 1e-6;
        std::vector<double> xp = x;
        if (x[i] + step <= hi[i]) {
            xp[i] = x[i] + step;
            g[i] = (f(xp) - f0) / step;
        } else if (x[i] - step >= lo[i]) {
            xp[i] = x[i] - step;  // one-sided fallback at the bound
            g[i] = (f0 - f(xp)) / step;
        } else {
            failures++;
            g[i] = 0.0;
        }
    }
    if (failures == n)
        throw Error("optimize", "finite-difference gradient failed on every axis");
    return g;
}

namespace {

std::vector<double> clamp_point(std::vector<double> x, const std::vector<double>& lo,
                                const std::vector<double>& hi) {
    for (size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lo[i], hi[i]);
    return x;
}

double norm2v(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

FrcgResult frcg_minimize(const ObjectiveFn& f, std::vector<double> x0,
                         const std::vector<double>& lo, const std::vector<double>& hi,
                         const FrcgOptions& options, const GradientFn& gradient) {
    const size_t n = x0.size();
    if (lo.size() != n || hi.size() != n)
        throw Error("optimize", "bounds dimension mismatch");
    x0 = clamp_point(std::move(x0), lo, hi);

    struct BudgetExhausted {};
    size_t evals = 0;
    auto eval = [&](const std::vector<double>& x) {
        if (evals >= options.max_evaluations) throw BudgetExhausted{};
        evals++;
        return f(x);
    };
    std::vector<double> fd = options.fd_steps;
    if (fd.size() != n) fd.assign(n, 1e-6);
    auto grad = [&](const std::vector<double>& x) {
        if (gradient) return gradient(x);
        return fd_gradient([&](const std::vector<double>& p) { return eval(p); }, x, fd,
                           lo, hi);
    };

    FrcgResult result;
    auto budget_left = [&] { return evals < options.max_evaluations; };

    if (!budget_left()) {
        result.termination = "evaluation budget exhausted";
        result.best_x = x0;
        return result;
    }
    double fx = eval(x0);
    std::vector<double> x = x0;
    result.best_x = x;
    result.best_f = fx;

    std::vector<double> g;
    try {
        g = grad(x);
    } catch (const BudgetExhausted&) {
        result.termination = "evaluation budget exhausted";
        result.evaluations = evals;
        return result;
    }
    std::vector<double> d(n);
    for (size_t i = 0; i < n; ++i) d[i] = -g[i];
    double gg = 0;
    for (size_t i = 0; i < n; ++i) gg += g[i] * g[i];

    const int restart = options.restart_interval > 0 ? options.restart_interval : int(n);
    int since_restart = 0;

    result.accepted.push_back({x, fx, g, evals});

    try {
    while (true) {
        if (std::sqrt(gg) < options.grad_tol) {
            result.termination = "gradient tolerance reached";
            break;
        }
        if (!budget_left()) {
            result.termination = "evaluation budget exhausted";
            break;
        }
        // ensure descent; restart on failure
        double dg = 0;
        for (size_t i = 0; i < n; ++i) dg += d[i] * g[i];
        if (dg >= 0) {
            for (size_t i = 0; i < n; ++i) d[i] = -g[i];
            dg = -gg;
            since_restart = 0;
        }

        // line search: one quadratic-interpolation step (exact on quadratics,
        // giving CG finite termination there), then Armijo backtracking
        double alpha = options.initial_step / std::max(norm2v(d), 1e-300);
        double f_new = fx;
        std::vector<double> x_new = x;
        bool accepted = false;
        auto point_at = [&](double a) {
            std::vector<double> trial(n);
            for (size_t i = 0; i < n; ++i) trial[i] = x[i] + a * d[i];
            return clamp_point(std::move(trial), lo, hi);
        };
        auto try_accept = [&](double a, double ft, const std::vector<double>& trial) {
            if (ft <= fx + options.armijo_c1 * a * dg) {
                f_new = ft;
                x_new = trial;
                accepted = true;
                return true;
            }
            return false;
        };
        if (budget_left()) {
            auto probe = point_at(alpha);
            bool clamped = false;
            for (size_t i = 0; i < n; ++i)
                clamped = clamped || probe[i] != x[i] + alpha * d[i];
            double f_probe = eval(probe);
            bool probe_ok = try_accept(alpha, f_probe, probe);
            if (!clamped && budget_left()) {
                double denom = 2.0 * (f_probe - fx - dg * alpha);
                if (denom > 0) {
                    double a_star = -dg * alpha * alpha / denom;
                    if (a_star > 0 && std::isfinite(a_star) &&
                        std::abs(a_star - alpha) > 1e-12 * alpha) {
                        auto refined = point_at(a_star);
                        double f_ref = eval(refined);
                        if (f_ref < f_new || !accepted)
                            if (try_accept(a_star, f_ref, refined) && f_ref <= f_probe)
                                probe_ok = true;
                    }
                }
            }
            if (!probe_ok && !accepted) {
                for (int ls = 0; ls < 25 && budget_left(); ++ls) {
                    alpha *= 0.5;
                    auto trial = point_at(alpha);
                    double step_len = 0;
                    for (size_t i = 0; i < n; ++i)
                        step_len += (trial[i] - x[i]) * (trial[i] - x[i]);
                    if (std::sqrt(step_len) < options.step_tol) break;
                    double ft = eval(trial);
                    if (try_accept(alpha, ft, trial)) break;
                }
            }
        }
        if (!accepted) {
            double step_len = norm2v(d) * alpha;
            if (step_len < options.step_tol) {
                result.termination = "step below tolerance";
            } else if (!budget_left()) {
                result.termination = "evaluation budget exhausted";
            } else {
                result.termination = "line search failed";
            }
            break;
        }

        x = x_new;
        fx = f_new;
        if (fx < result.best_f) {
            result.best_f = fx;
            result.best_x = x;
        }
        if (!budget_left()) {
            result.accepted.push_back({x, fx, g, evals});
            result.termination = "evaluation budget exhausted";
            break;
        }

        std::vector<double> g_new = grad(x);
        double gg_new = 0;
        for (size_t i = 0; i < n; ++i) gg_new += g_new[i] * g_new[i];

        since_restart++;
        if (since_restart >= restart) {
            for (size_t i = 0; i < n; ++i) d[i] = -g_new[i];
            since_restart = 0;
        } else {
            double beta = gg > 0 ? gg_new / gg : 0.0;  // Fletcher-Reeves
            for (size_t i = 0; i < n; ++i) d[i] = -g_new[i] + beta * d[i];
        }
        g = g_new;
        gg = gg_new;
        result.accepted.push_back({x, fx, g, evals});
    }
    } catch (const BudgetExhausted&) {
        result.termination = "evaluation budget exhausted";
    }
    result.evaluations = evals;
    return result;
}

double CountingObjective::operator()(const std::vector<double>& x) {
    std::vector<long long> key(x.size());
    for (size_t i = 0; i < x.size(); ++i) key[i] = llround(x[i] * 1e9);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    count_++;
    double v = inner_(x);
    cache_.emplace(std::move(key), v);
    return v;
}

std::string opt_history_csv(const OptRecord& record) {
    std::ostringstream os;
    os << "iteration,spacing,angle,pattern,frequency_hz,evals\n";
    for (const auto& row : record.history) {
        os << row.iteration << "," << format_gcode(row.design.spacing) << ","
           << format_gcode(row.design.angle) << ","
           << slicer::pattern_name(row.design.pattern()) << ","
           << format_gcode(row.objective) << "," << row.evaluations << "\n";
    }
    return os.str();
}

}  // namespace am::opt
