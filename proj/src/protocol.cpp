#include "lcsim/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace lcsim {

namespace {
constexpr double pi = 3.14159265358979323846;
}

void BinConfig::validate(const SystemConfig& cfg) const {
    if (bin_length <= 0.0) throw ScheduleError("bin length must be positive");
    const double tail = std::exp(-bin_length * cfg.gamma_cyc / hbar_uev_ps);
    if (tail >= 1e-3)
        throw ScheduleError("bin length too short: residual excitation " +
                            std::to_string(tail) + " at bin end");
    if (extraction_offset < 0.0 || rotation_offset < 0.0)
        throw ScheduleError("pulse offsets must be non-negative");
}

ProtocolPlan build_plan(int n_qubits, const BinConfig& bins, const RotationSpec& rot_pi,
                        const RotationSpec& rot_pi2, const SystemConfig& cfg,
                        double extraction_amplitude) {
    if (n_qubits < 1) throw ScheduleError("protocol needs at least one qubit");
    bins.validate(cfg);
    ProtocolPlan plan;
    plan.n_qubits = n_qubits;
    plan.bins = bins;
    plan.rot_pi = rot_pi;
    plan.rot_pi2 = rot_pi2;
    plan.extraction_amplitude = extraction_amplitude;

    const double T = bins.bin_length;
    for (int q = 0; q < n_qubits; ++q) {
        const double early = 2.0 * q * T;
        const double late = early + T;
        Pulse ext;
        ext.amplitude = extraction_amplitude;
        ext.sigma = bins.extraction_sigma;
        ext.target = Transition::Cycling1;
        ext.center = early + bins.extraction_offset;
        plan.pulses.push_back(ext);
        for (auto& p : rot_pi.pulses_at(late - bins.rotation_offset)) plan.pulses.push_back(p);
        ext.center = late + bins.extraction_offset;
        plan.pulses.push_back(ext);
        for (auto& p : rot_pi2.pulses_at(late + T - bins.rotation_offset))
            plan.pulses.push_back(p);
    }
    std::sort(plan.pulses.begin(), plan.pulses.end(),
              [](const Pulse& a, const Pulse& b) { return a.center < b.center; });

    // Distinct pulse groups must not collide: 5/sigma on each side covers all
    // but ~1% of the envelope and matches the default placement margins.
    for (std::size_t i = 0; i + 1 < plan.pulses.size(); ++i) {
        const Pulse& a = plan.pulses[i];
        const Pulse& b = plan.pulses[i + 1];
        if (a.center == b.center) continue;  // the two halves of one rotation
        const double gap = b.center - a.center;
        const double need = Pulse::schedule_sigmas * (a.width() + b.width());
        if (gap < need - 1e-9)
            throw ScheduleError("pulse supports overlap near t=" + std::to_string(a.center) +
                                " ps (gap " + std::to_string(gap) + " < " +
                                std::to_string(need) + ")");
    }
    return plan;
}

ProtocolPlan build_ideal_plan(int n_qubits, const BinConfig& bins, double theta_pi_phase,
                              double theta_pi2_phase, const SystemConfig& cfg) {
    if (n_qubits < 1) throw ScheduleError("protocol needs at least one qubit");
    bins.validate(cfg);
    ProtocolPlan plan;
    plan.n_qubits = n_qubits;
    plan.bins = bins;
    plan.ideal_rotations = true;
    plan.rot_pi.theta = pi;
    plan.rot_pi.phase = theta_pi_phase;
    plan.rot_pi2.theta = 0.5 * pi;
    plan.rot_pi2.phase = theta_pi2_phase;

    Mat6 swap = Mat6::Identity();
    swap(G1, G1) = 0.0;
    swap(X1, X1) = 0.0;
    swap(G1, X1) = 1.0;
    swap(X1, G1) = 1.0;

    const double T = bins.bin_length;
    for (int q = 0; q < n_qubits; ++q) {
        const double early = 2.0 * q * T;
        const double late = early + T;
        plan.events.push_back({early + bins.extraction_offset, swap});
        plan.events.push_back({late - bins.rotation_offset, ideal_rotation(pi, theta_pi_phase)});
        plan.events.push_back({late + bins.extraction_offset, swap});
        plan.events.push_back(
            {late + T - bins.rotation_offset, ideal_rotation(0.5 * pi, theta_pi2_phase)});
    }
    return plan;
}

Mat6 initial_superposition() {
    Vec6 psi = Vec6::Zero();
    psi(G1) = 1.0 / std::sqrt(2.0);
    psi(G2) = 1.0 / std::sqrt(2.0);
    return psi * psi.adjoint();
}

double EmissionRecord::total_emission() const {
    double s = 0.0;
    for (double b : bin_emission) s += b;
    return s;
}

void EmissionRecord::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open " + path);
    out << "time_ps,pop_g1,pop_g2,pop_x1,pop_x2,pop_t,pop_u,coh_g1g2_abs,emission_rate_per_ps\n";
    out.precision(10);
    for (std::size_t i = 0; i < trajectory.times.size(); ++i) {
        const Mat6& r = trajectory.states[i];
        out << trajectory.times[i];
        for (int s = 0; s < 6; ++s) out << ',' << r(s, s).real();
        out << ',' << std::abs(r(G1, G2));
        out << ',' << emission_rate_factor * r(X1, X1).real();
        out << '\n';
    }
}

EmissionRecord run_protocol(const ProtocolPlan& plan, const SystemConfig& cfg,
                            const PropagationSettings& settings, double sample_step) {
    const Generator gen(cfg, plan.pulses, plan.events);
    const double t_end = plan.t_end();
    const double T = plan.bins.bin_length;

    std::vector<double> grid;
    for (double t = 0.0; t < t_end; t += sample_step) grid.push_back(t);
    grid.push_back(t_end);

    // Rotation bracket times for the per-step snapshots.
    struct Bracket {
        double before, after;
    };
    std::vector<Bracket> brackets;
    const double rw = Pulse::support_sigmas / plan.bins.rotation_sigma;
    for (int q = 0; q < plan.n_qubits; ++q) {
        const double late = (2 * q + 1) * T;
        for (double c : {late - plan.bins.rotation_offset, late + T - plan.bins.rotation_offset}) {
            const double pre = plan.ideal_rotations ? 1e-6 : rw;
            brackets.push_back({c - pre, c + (plan.ideal_rotations ? 1e-6 : rw)});
        }
    }
    for (const auto& b : brackets) {
        grid.push_back(std::max(0.0, b.before));
        grid.push_back(std::min(t_end, b.after));
    }
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end(),
                           [](double a, double b) { return std::abs(a - b) < 1e-9; }),
               grid.end());

    EmissionRecord rec;
    rec.emission_rate_factor = cfg.gamma_cyc / hbar_uev_ps;
    rec.trajectory = propagate(initial_superposition(), 0.0, t_end, gen, settings, grid);

    const auto& tr = rec.trajectory;
    auto state_at = [&](double t) -> const Mat6& {
        auto it = std::lower_bound(tr.times.begin(), tr.times.end(), t - 1e-6);
        const std::size_t i = std::min<std::size_t>(it - tr.times.begin(), tr.times.size() - 1);
        return tr.states[i];
    };

    // Integrated emission per bin: gamma_cyc <a^dag a> / hbar.
    const double rate = cfg.gamma_cyc / hbar_uev_ps;
    rec.bin_emission.assign(2 * plan.n_qubits, 0.0);
    for (std::size_t i = 0; i + 1 < tr.times.size(); ++i) {
        const double t0 = tr.times[i], t1 = tr.times[i + 1];
        const double f0 = rate * tr.states[i](X1, X1).real();
        const double f1 = rate * tr.states[i + 1](X1, X1).real();
        const int bin = std::min<int>(static_cast<int>(0.5 * (t0 + t1) / T),
                                      2 * plan.n_qubits - 1);
        rec.bin_emission[bin] += 0.5 * (f0 + f1) * (t1 - t0);
    }

    for (const auto& b : brackets) {
        const Mat6& r0 = state_at(b.before);
        const Mat6& r1 = state_at(b.after);
        RotationSnapshot s;
        s.t_before = b.before;
        s.t_after = b.after;
        s.pop_g1_before = r0(G1, G1).real();
        s.pop_g2_before = r0(G2, G2).real();
        s.pop_g1_after = r1(G1, G1).real();
        s.pop_g2_after = r1(G2, G2).real();
        s.coherence_before = std::abs(r0(G1, G2));
        s.coherence_after = std::abs(r1(G1, G2));
        rec.rotations.push_back(s);
    }
    return rec;
}

ZProjection final_z_projection(const Mat6& rho) {
    ZProjection out;
    out.p_g1 = rho(G1, G1).real();
    out.p_g2 = rho(G2, G2).real();
    if (out.p_g1 > 1e-12) {
        Mat6 c = Mat6::Zero();
        c(G1, G1) = rho(G1, G1) / out.p_g1;
        out.conditional_g1 = c;
    }
    if (out.p_g2 > 1e-12) {
        Mat6 c = Mat6::Zero();
        c(G2, G2) = rho(G2, G2) / out.p_g2;
        out.conditional_g2 = c;
    }
    return out;
}

}  // namespace lcsim
