#include "am/reduce.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace am::reduce {

StressStrainCurve StressStrainCurve::from_heartbeat(
    const std::vector<fea::HeartbeatRow>& rows, std::string run_id) {
    // deduplicate strain (explicit output may repeat early samples)
    std::map<double, double> by_strain;
    for (const auto& r : rows) by_strain[r.eng_strain] = r.eng_stress_MPa;
    StressStrainCurve curve;
    curve.provenance = std::move(run_id);
    for (const auto& [e, s] : by_strain) {
        curve.strain.push_back(e);
        curve.stress.push_back(s);
    }
    return curve;
}

std::vector<double> savgol(const std::vector<double>& series, int window, int order) {
    if (window < 1 || window % 2 == 0)
        throw Error("reduce", "savgol window must be a positive odd integer");
    if (order < 0 || order >= window)
        throw Error("reduce", "savgol order must satisfy 0 <= order < window");
    const int n = int(series.size());
    if (n < window) throw Error("reduce", "series shorter than savgol window");

    const int half = window / 2;
    std::vector<double> out(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        int lo = std::max(0, i - half);
        int hi = std::min(n - 1, i + half);
        int m = hi - lo + 1;
        int ord = std::min(order, m - 1);
        // least-squares polynomial in centered offsets, evaluated at 0
        Eigen::MatrixXd A(m, ord + 1);
        Eigen::VectorXd y(m);
        for (int r = 0; r < m; ++r) {
            double t = double(lo + r - i);
            double p = 1.0;
            for (int c = 0; c <= ord; ++c) {
                A(r, c) = p;
                p *= t;
            }
            y[r] = series[size_t(lo + r)];
        }
        Eigen::VectorXd coef = (A.transpose() * A).ldlt().solve(A.transpose() * y);
        out[size_t(i)] = coef[0];
    }
    return out;
}

void smooth(StressStrainCurve& curve, const ReduceConfig& cfg) {
    curve.smoothed = savgol(curve.stress, cfg.savgol_window, cfg.savgol_order);
}

namespace {

FitDiagnostics line_fit(const std::vector<double>& x, const std::vector<double>& y,
                        size_t lo, size_t hi) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    double n = double(hi - lo + 1);
    for (size_t i = lo; i <= hi; ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    FitDiagnostics fit;
    double denom = n * sxx - sx * sx;
    fit.slope = denom != 0.0 ? (n * sxy - sx * sy) / denom : 0.0;
    fit.intercept = (sy - fit.slope * sx) / n;
    double resid = 0;
    for (size_t i = lo; i <= hi; ++i)
        resid += std::abs(y[i] - (fit.slope * x[i] + fit.intercept));
    fit.mean_residual = resid / n;
    fit.lo = x[lo];
    fit.hi = x[hi];
    return fit;
}

// centered finite-difference slope of the working stress
std::vector<double> local_slope(const std::vector<double>& strain,
                                const std::vector<double>& stress) {
    const size_t n = strain.size();
    std::vector<double> slope(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
        size_t a = i > 0 ? i - 1 : i;
        size_t b = i + 1 < n ? i + 1 : i;
        double de = strain[b] - strain[a];
        slope[i] = de != 0.0 ? (stress[b] - stress[a]) / de : 0.0;
    }
    return slope;
}

}  // namespace

std::pair<double, FitDiagnostics> elastic_modulus(const StressStrainCurve& curve,
                                                  const ReduceConfig& cfg) {
    const auto& stress = curve.working_stress();
    size_t lo = SIZE_MAX, hi = 0;
    for (size_t i = 0; i < curve.strain.size(); ++i) {
        if (curve.strain[i] >= cfg.elastic_strain_lo && curve.strain[i] <= cfg.elastic_strain_hi) {
            lo = std::min(lo, i);
            hi = std::max(hi, i);
        }
    }
    if (lo == SIZE_MAX || hi - lo + 1 < 5)
        throw Error("reduce", "elastic window [" + std::to_string(cfg.elastic_strain_lo) +
                              ", " + std::to_string(cfg.elastic_strain_hi) +
                              "] contains fewer than 5 samples");
    FitDiagnostics fit = line_fit(curve.strain, stress, lo, hi);
    if (fit.slope <= 0)
        throw Error("reduce", "elastic fit produced a non-positive modulus");
    return {fit.slope, fit};
}

std::pair<double, FitDiagnostics> plateau_stress(const StressStrainCurve& curve,
                                                 double e_mpa, const ReduceConfig& cfg) {
    const auto& stress = curve.working_stress();
    auto slope = local_slope(curve.strain, stress);
    const double tol = cfg.slope_tol * e_mpa;

    size_t best_lo = 0, best_hi = 0;
    bool found = false;
    size_t i = 0;
    const size_t n = curve.strain.size();
    while (i < n) {
        if (curve.strain[i] <= cfg.elastic_strain_hi || std::abs(slope[i]) >= tol) {
            i++;
            continue;
        }
        size_t j = i;
        while (j + 1 < n && std::abs(slope[j + 1]) < tol) j++;
        if (!found || (curve.strain[j] - curve.strain[i]) >
                          (curve.strain[best_hi] - curve.strain[best_lo])) {
            best_lo = i;
            best_hi = j;
            found = true;
        }
        i = j + 1;
    }
    if (!found || best_hi <= best_lo)
        throw Error("reduce", "no plateau detected (no contiguous near-zero-slope region)");

    double mean = 0;
    for (size_t k2 = best_lo; k2 <= best_hi; ++k2) mean += stress[k2];
    mean /= double(best_hi - best_lo + 1);
    FitDiagnostics fit = line_fit(curve.strain, stress, best_lo, best_hi);
    return {mean, fit};
}

std::pair<double, FitDiagnostics> densification_strain(const StressStrainCurve& curve,
                                                       double e_mpa, double plateau_mpa,
                                                       const ReduceConfig& cfg) {
    const auto& stress = curve.working_stress();
    auto slope = local_slope(curve.strain, stress);
    const double tol = cfg.dens_tol * e_mpa;
    const size_t n = curve.strain.size();

    // steep terminal region, contiguous from the end of the curve
    size_t hi = n - 1;
    size_t lo = hi;
    while (lo > 0 && slope[lo - 1] > tol) lo--;
    if (lo >= hi || slope[hi] <= tol || hi - lo + 1 < 3)
        throw Error("reduce", "no densification rise detected at the end of the curve");

    FitDiagnostics fit = line_fit(curve.strain, stress, lo, hi);
    if (fit.slope <= 0) throw Error("reduce", "densification fit has non-positive slope");
    double eps_d = (plateau_mpa - fit.intercept) / fit.slope;
    return {eps_d, fit};
}

ReducedProperties reduce_curve(StressStrainCurve curve, const ReduceConfig& cfg) {
    if (curve.smoothed.empty() && int(curve.stress.size()) >= cfg.savgol_window)
        smooth(curve, cfg);
    ReducedProperties props;
    auto [e, efit] = elastic_modulus(curve, cfg);
    props.elastic_modulus_mpa = e;
    props.elastic_fit = efit;
    auto [p, pfit] = plateau_stress(curve, e, cfg);
    props.plateau_stress_mpa = p;
    props.plateau_fit = pfit;
    auto [d, dfit] = densification_strain(curve, e, p, cfg);
    props.densification_strain = d;
    props.densification_fit = dfit;
    return props;
}

std::string properties_csv(
    const std::vector<std::pair<std::string, ReducedProperties>>& rows) {
    std::ostringstream os;
    os << "run_id,E_MPa,plateau_MPa,densification_strain,elastic_resid,plateau_resid\n";
    for (const auto& [id, p] : rows) {
        os << id << "," << format_full(p.elastic_modulus_mpa) << ","
           << format_full(p.plateau_stress_mpa) << ","
           << format_full(p.densification_strain) << ","
           << format_full(p.elastic_fit.mean_residual) << ","
           << format_full(p.plateau_fit.mean_residual) << "\n";
    }
    return os.str();
}

std::string curve_svg(const StressStrainCurve& curve, const ReducedProperties& props) {
    const double W = 640, H = 480, mL = 60, mB = 40, mT = 20, mR = 20;
    double smax = *std::max_element(curve.strain.begin(), curve.strain.end());
    const auto& stress = curve.working_stress();
    double ymax = *std::max_element(stress.begin(), stress.end());
    if (smax <= 0) smax = 1;
    if (ymax <= 0) ymax = 1;
    auto X = [&](double e) { return mL + e / smax * (W - mL - mR); };
    auto Y = [&](double s) { return H - mB - s / ymax * (H - mB - mT); };

    std::ostringstream os;
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
       << "'>\n";
    os << "<rect width='100%' height='100%' fill='white'/>\n";
    os << "<line x1='" << mL << "' y1='" << H - mB << "' x2='" << W - mR << "' y2='"
       << H - mB << "' stroke='black'/>\n";
    os << "<line x1='" << mL << "' y1='" << H - mB << "' x2='" << mL << "' y2='" << mT
       << "' stroke='black'/>\n";
    os << "<polyline fill='none' stroke='steelblue' stroke-width='1.5' points='";
    for (size_t i = 0; i < curve.strain.size(); ++i)
        os << X(curve.strain[i]) << "," << Y(stress[i]) << " ";
    os << "'/>\n";
    // annotations: plateau level, densification strain, elastic slope
    os << "<line x1='" << mL << "' y1='" << Y(props.plateau_stress_mpa) << "' x2='"
       << W - mR << "' y2='" << Y(props.plateau_stress_mpa)
       << "' stroke='darkorange' stroke-dasharray='6,3'/>\n";
    os << "<line x1='" << X(props.densification_strain) << "' y1='" << H - mB << "' x2='"
       << X(props.densification_strain) << "' y2='" << mT
       << "' stroke='seagreen' stroke-dasharray='6,3'/>\n";
    double e0 = props.elastic_fit.lo, e1 = props.elastic_fit.hi;
    os << "<line x1='" << X(e0) << "' y1='"
       << Y(props.elastic_fit.slope * e0 + props.elastic_fit.intercept) << "' x2='"
       << X(e1) << "' y2='" << Y(props.elastic_fit.slope * e1 + props.elastic_fit.intercept)
       << "' stroke='crimson' stroke-width='2'/>\n";
    os << "<text x='" << mL + 8 << "' y='" << mT + 14 << "' font-size='13'>E="
       << props.elastic_modulus_mpa << " MPa, plateau=" << props.plateau_stress_mpa
       << " MPa, densification=" << props.densification_strain << "</text>\n";
    os << "<text x='" << W / 2 << "' y='" << H - 8
       << "' font-size='12' text-anchor='middle'>engineering strain</text>\n";
    os << "</svg>\n";
    return os.str();
}

}  // namespace am::reduce
