#include "lcsim/calibration.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace lcsim {

namespace {
constexpr std::complex<double> I1{0.0, 1.0};
constexpr double pi = 3.14159265358979323846;

// Six axial Bloch states of the ground qubit, embedded in the 6-level space.
std::vector<Vec6> bloch_states() {
    const double s = 1.0 / std::sqrt(2.0);
    std::vector<Vec6> out;
    auto mk = [&](std::complex<double> c1, std::complex<double> c2) {
        Vec6 v = Vec6::Zero();
        v(G1) = c1;
        v(G2) = c2;
        out.push_back(v);
    };
    mk(1, 0);
    mk(0, 1);
    mk(s, s);
    mk(s, -s);
    mk(s, I1 * s);
    mk(s, -I1 * s);
    return out;
}

double golden_max(const std::function<double(double)>& f, double a, double b, double tol) {
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - gr * (b - a);
    double d = a + gr * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = f(d);
        }
    }
    return fc > fd ? c : d;
}
}  // namespace

Mat6 ideal_rotation(double theta, double phase) {
    Mat6 r = Mat6::Identity();
    const double ct = std::cos(0.5 * theta), st = std::sin(0.5 * theta);
    r(G1, G1) = ct;
    r(G2, G2) = ct;
    r(G1, G2) = -I1 * st * std::exp(-I1 * phase);
    r(G2, G1) = -I1 * st * std::exp(I1 * phase);
    return r;
}

double rotation_fidelity(const RotationSpec& spec, const SystemConfig& cfg,
                         const PropagationSettings& settings) {
    const Generator gen(cfg, spec.pulses_at(0.0));
    const double w = Pulse::support_sigmas / spec.sigma;
    const Mat6 r = ideal_rotation(spec.theta, spec.phase);
    double f = 0.0;
    for (const Vec6& psi : bloch_states()) {
        const Mat6 rho0 = psi * psi.adjoint();
        Mat6 rho = rho0;
        propagate_raw(rho, -w, w, gen, settings);
        const Vec6 target = r * psi;
        f += std::real((target.adjoint() * rho * target)(0, 0));
    }
    return f / 6.0;
}

DetuningSweepTable sweep_detuning(double lo, double hi, int n_points, const SystemConfig& cfg,
                                  const RotationSpec& tmpl,
                                  const PropagationSettings& settings) {
    if (n_points < 2) throw ConfigError("detuning sweep needs at least 2 points");
    DetuningSweepTable table;
    table.rows.resize(n_points);
    const double h = (hi - lo) / (n_points - 1);
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n_points; ++i) {
        RotationSpec spec = tmpl;
        spec.detuning = lo + i * h;
        const Generator gen(cfg, spec.pulses_at(0.0));
        const double w = Pulse::support_sigmas / spec.sigma;
        Mat6 rho = state_projector(G1);
        propagate_raw(rho, -w, w, gen, settings);
        DetuningSweepRow row;
        row.detuning = spec.detuning;
        row.pop_g1 = rho(G1, G1).real();
        row.pop_g2 = rho(G2, G2).real();
        row.leakage = 1.0 - row.pop_g1 - row.pop_g2;
        row.fidelity = rotation_fidelity(spec, cfg, settings);
        table.rows[i] = row;
    }
    return table;
}

void DetuningSweepTable::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open " + path);
    out << "detuning_ueV,pop_g1,pop_g2,leakage,fidelity\n";
    out.precision(12);
    for (const auto& r : rows)
        out << r.detuning << ',' << r.pop_g1 << ',' << r.pop_g2 << ',' << r.leakage << ','
            << r.fidelity << '\n';
}

CalibrationResult calibrate_rotation(double theta, double phase, const SystemConfig& cfg,
                                     const PropagationSettings& settings) {
    RotationSpec spec;
    spec.theta = theta;
    spec.phase = phase;
    spec.phase1 = phase;
    spec.phase2 = 0.0;

    CalibrationResult res;
    res.analytical_minus = std::numeric_limits<double>::quiet_NaN();
    res.analytical_plus = std::numeric_limits<double>::quiet_NaN();
    try {
        const auto br = analytical_detuning(theta, cfg.epsilon(), hbar_uev_ps * spec.sigma);
        res.analytical_minus = br.minus;
        res.analytical_plus = br.plus;
    } catch (const ConfigError&) {
        // outside the closed-form validity range; numerical scan still applies
    }

    auto fidelity_at = [&](double delta) {
        RotationSpec s = spec;
        s.detuning = delta;
        return rotation_fidelity(s, cfg, settings);
    };

    // Coarse scan over both detuning signs: the pi/2 basins for a given axis
    // phase sit at one sign only, and the closed-form seed lands in the wrong
    // basin for theta = pi/2, so the scan argmax seeds the refinement.
    const int n_scan = 201;
    const double lo = -100.0, hi = 100.0;
    std::vector<double> f_scan(n_scan);
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n_scan; ++i)
        f_scan[i] = fidelity_at(lo + i * (hi - lo) / (n_scan - 1));
    int best = 0;
    for (int i = 1; i < n_scan; ++i)
        if (f_scan[i] > f_scan[best]) best = i;
    const double step = (hi - lo) / (n_scan - 1);
    const double seed = lo + best * step;

    const double d_opt =
        golden_max(fidelity_at, std::max(lo, seed - 2.0 * step), seed + 2.0 * step, 1e-3);

    spec.detuning = d_opt;
    res.spec = spec;
    res.fidelity = fidelity_at(d_opt);

    if (std::isfinite(res.analytical_minus)) {
        const double f_seed = fidelity_at(res.analytical_minus);
        if (f_seed > res.fidelity) {  // never return worse than the closed-form seed
            res.spec.detuning = res.analytical_minus;
            res.fidelity = f_seed;
        }
    }
    return res;
}

double calibrate_extraction_amplitude(const SystemConfig& cfg,
                                      const PropagationSettings& settings, double sigma) {
    auto x1_pop = [&](double amp) {
        Pulse p;
        p.amplitude = amp;
        p.sigma = sigma;
        p.center = 0.0;
        p.target = Transition::Cycling1;
        const Generator gen(cfg, {p});
        Mat6 rho = state_projector(G1);
        const double w = Pulse::support_sigmas / sigma;
        propagate_raw(rho, -w, w, gen, settings);
        return rho(X1, X1).real();
    };
    return golden_max(x1_pop, 0.42, 0.62, 1e-5);
}

}  // namespace lcsim
