#include "lcsim/propagator.hpp"

#include <algorithm>
#include <cmath>

namespace lcsim {

namespace {
constexpr std::complex<double> I1{0.0, 1.0};

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                 b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// b - b_hat (embedded 4th-order error weights)
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
}  // namespace

void PropagationSettings::validate() const {
    if (!(rtol > 0.0 && rtol <= 1e-2) || !(atol > 0.0 && atol <= 1e-2))
        throw ConfigError("solver tolerances must lie in (0, 1e-2]");
    if (!(initial_step > 0.0) || !(max_step > 0.0))
        throw ConfigError("solver steps must be positive");
}

Generator::Generator(const SystemConfig& cfg, std::vector<Pulse> pulses,
                     std::vector<InstantOp> events)
    : cfg_(cfg), pulses_(std::move(pulses)), events_(std::move(events)) {
    cfg_.validate();
    channels_ = build_lindblad_channels(cfg_);
    std::sort(events_.begin(), events_.end(),
              [](const InstantOp& a, const InstantOp& b) { return a.time < b.time; });
}

Mat6 Generator::rhs(const Mat6& x, double t) const {
    const Mat6 h = build_hamiltonian(t, cfg_, pulses_);
    Mat6 out = -I1 / hbar_uev_ps * (h * x - x * h);
    out += apply_dissipators(x, channels_);
    return out;
}

Mat6 Generator::rhs_adjoint(const Mat6& g, double t) const {
    const Mat6 h = build_hamiltonian(t, cfg_, pulses_);
    Mat6 out = I1 / hbar_uev_ps * (h * g - g * h);
    for (const auto& c : channels_) {
        out += c.op.adjoint() * g * c.op;
        const Mat6 cc = c.op.adjoint() * c.op;
        out -= 0.5 * (cc * g + g * cc);
    }
    return out;
}

namespace {
// Step limit inside a pulse support, tiered by envelope size: quarter-width
// steps through the core, wider ones in the sech tails where the coupling is
// below ~1e-3 of the peak but still needs resolving.
double support_cap(double dist_sigmas, double width) {
    return dist_sigmas < 8.0 ? 0.25 * width : 2.0 * width;
}
}  // namespace

double Generator::max_step_at(double t, double cap) const {
    double h = cap;
    for (const Pulse& p : pulses_) {
        const double sb = p.support_begin();
        const double se = p.support_end();
        if (t < sb) {
            h = std::min(h, sb - t);  // stop at the support edge, never jump in
        } else if (t < se) {
            h = std::min(h, support_cap(std::abs(t - p.center) * p.sigma, p.width()));
        }
    }
    return std::max(h, 1e-12);
}

double Generator::max_step_at_backward(double t, double cap) const {
    double h = cap;
    for (const Pulse& p : pulses_) {
        const double sb = p.support_begin();
        const double se = p.support_end();
        if (t > se) {
            h = std::min(h, t - se);
        } else if (t > sb) {
            h = std::min(h, support_cap(std::abs(t - p.center) * p.sigma, p.width()));
        }
    }
    return std::max(h, 1e-12);
}

void integrate_rk45(Mat6& x, double t0, double t1,
                    const std::function<Mat6(const Mat6&, double)>& rhs,
                    const std::function<double(double, double)>& step_cap,
                    const PropagationSettings& settings, std::span<const double> sample_times,
                    const std::function<void(std::size_t, double, const Mat6&)>& on_sample) {
    settings.validate();
    if (t1 < t0) throw ConfigError("propagate: t_end < t_start");

    std::size_t next_sample = 0;
    auto fire_samples = [&](double t, const Mat6& state) {
        while (next_sample < sample_times.size() && sample_times[next_sample] <= t + 1e-9) {
            if (on_sample) on_sample(next_sample, sample_times[next_sample], state);
            ++next_sample;
        }
    };

    double t = t0;
    fire_samples(t0, x);
    if (t1 <= t0) return;

    const double span = t1 - t0;
    const double h_floor = std::max(1e-12, 1e-13 * span);
    double h = std::min(settings.initial_step, span);
    double facold = 1e-4;
    constexpr double beta = 0.04, expo1 = 0.2 - beta * 0.75, safe = 0.9;
    constexpr double facmin = 0.2, facmax = 6.0;

    Mat6 k1 = rhs(x, t);

    while (t < t1 - 1e-12) {
        double stop = t1;
        if (next_sample < sample_times.size()) stop = std::min(stop, sample_times[next_sample]);

        h = std::min(h, step_cap ? step_cap(t, settings.max_step) : settings.max_step);
        bool landed = false;
        if (t + h >= stop - 1e-12) {
            h = stop - t;
            landed = true;
        }
        if (h > 0.0) {
            const Mat6 k2 = rhs(x + h * (a21 * k1), t + c2 * h);
            const Mat6 k3 = rhs(x + h * (a31 * k1 + a32 * k2), t + c3 * h);
            const Mat6 k4 = rhs(x + h * (a41 * k1 + a42 * k2 + a43 * k3), t + c4 * h);
            const Mat6 k5 = rhs(x + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4), t + c5 * h);
            const Mat6 k6 =
                rhs(x + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5), t + h);
            const Mat6 xnew = x + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
            const Mat6 k7 = rhs(xnew, t + h);
            const Mat6 errm = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

            double err2 = 0.0;
            for (int i = 0; i < 6; ++i)
                for (int j = 0; j < 6; ++j) {
                    const double sc =
                        settings.atol +
                        settings.rtol * std::max(std::abs(x(i, j)), std::abs(xnew(i, j)));
                    const double q = std::abs(errm(i, j)) / sc;
                    err2 += q * q;
                }
            const double err = std::sqrt(err2 / 36.0);

            const double fac11 = std::pow(std::max(err, 1e-16), expo1);
            if (err <= 1.0) {
                x = xnew;
                t += h;
                k1 = k7;  // FSAL
                facold = std::max(err, 1e-4);
                double fac = fac11 / std::pow(facold, beta);
                fac = std::max(1.0 / facmax, std::min(1.0 / facmin, fac / safe));
                h = h / fac;
                landed = std::abs(t - stop) <= 1e-12;
            } else {
                h = h / std::min(1.0 / facmin, fac11 / safe);
                if (h < h_floor)
                    throw NumericError("adaptive step underflow (stiff failure)", t);
                continue;
            }
        }
        if (landed) {
            t = stop;
            fire_samples(t, x);
        }
    }
    fire_samples(t1, x);
}

void propagate_raw(Mat6& x, double t0, double t1, const Generator& gen,
                   const PropagationSettings& settings, std::span<const double> sample_times,
                   const std::function<void(std::size_t, double, const Mat6&)>& on_sample) {
    const auto rhs = [&gen](const Mat6& y, double t) { return gen.rhs(y, t); };
    const auto cap = [&gen](double t, double c) { return gen.max_step_at(t, c); };

    // Split at instantaneous events; samples at an event time see the state
    // before the unitary is applied.
    double t = t0;
    std::size_t s_begin = 0;
    for (const InstantOp& ev : gen.events()) {
        if (ev.time <= t0 + 1e-12 || ev.time > t1 + 1e-12) continue;
        std::size_t s_end = s_begin;
        while (s_end < sample_times.size() && sample_times[s_end] <= ev.time + 1e-9) ++s_end;
        const std::size_t off = s_begin;
        integrate_rk45(x, t, ev.time, rhs, cap, settings,
                       sample_times.subspan(s_begin, s_end - s_begin),
                       on_sample
                           ? [&, off](std::size_t i, double ts, const Mat6& s) {
                                 on_sample(i + off, ts, s);
                             }
                           : std::function<void(std::size_t, double, const Mat6&)>{});
        x = ev.u * x * ev.u.adjoint();
        t = ev.time;
        s_begin = s_end;
    }
    const std::size_t off = s_begin;
    integrate_rk45(x, t, t1, rhs, cap, settings,
                   sample_times.subspan(s_begin, sample_times.size() - s_begin),
                   on_sample
                       ? [&, off](std::size_t i, double ts, const Mat6& s) {
                             on_sample(i + off, ts, s);
                         }
                       : std::function<void(std::size_t, double, const Mat6&)>{});
}

Trajectory propagate(const Mat6& rho0, double t_start, double t_end, const Generator& gen,
                     const PropagationSettings& settings, std::span<const double> output_grid) {
    Trajectory traj;
    Mat6 x = rho0;
    const double tr0 = std::abs(rho0.trace().real());
    auto record = [&](std::size_t, double t, const Mat6& state) {
        traj.times.push_back(t);
        traj.states.push_back(state);
    };
    std::vector<double> grid(output_grid.begin(), output_grid.end());
    if (grid.empty()) grid = {t_end};
    propagate_raw(x, t_start, t_end, gen, settings, grid, record);

    for (std::size_t i = 0; i < traj.states.size(); ++i) {
        const Mat6& r = traj.states[i];
        const double herm = (r - r.adjoint()).cwiseAbs().maxCoeff();
        if (herm > 1e-10)
            throw NumericError("hermiticity loss " + std::to_string(herm), traj.times[i]);
        if (std::abs(r.trace().real() - tr0) > 1e-8 || std::abs(r.trace().imag()) > 1e-8)
            throw NumericError("trace drift", traj.times[i]);
    }
    return traj;
}

Mat6 propagate_conditional(const Mat6& op_left, const Mat6& op_right, const Mat6& rho,
                           double t_start, double t_end, const Generator& gen,
                           const PropagationSettings& settings) {
    Mat6 x = op_left * rho * op_right;
    propagate_raw(x, t_start, t_end, gen, settings);
    return x;
}

}  // namespace lcsim
