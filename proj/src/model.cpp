#include "lcsim/model.hpp"

#include <cmath>

namespace lcsim {

namespace {
constexpr std::complex<double> I1{0.0, 1.0};
}

void SystemConfig::validate() const {
    for (double e : {e_g1, e_g2, e_x1, e_x2, e_t, e_u})
        if (!std::isfinite(e)) throw ConfigError("non-finite level energy");
    for (double g : {gamma_cyc, gamma_r_tu, gamma_d_tu, gamma_d_transition})
        if (!(g >= 0.0) || !std::isfinite(g))
            throw ConfigError("loss rates must be finite and >= 0");
    if (branching_g1 < 0.0 || branching_g1 > 1.0)
        throw ConfigError("branching_g1 must lie in [0, 1]");
}

Mat6 state_projector(State s) {
    Mat6 m = Mat6::Zero();
    m(static_cast<int>(s), static_cast<int>(s)) = 1.0;
    return m;
}

Mat6 transition_op(State ket, State bra) {
    Mat6 m = Mat6::Zero();
    m(static_cast<int>(ket), static_cast<int>(bra)) = 1.0;
    return m;
}

Mat6 cycling_annihilator() { return transition_op(G1, X1); }

Mat6 build_hamiltonian(double t, const SystemConfig& cfg, std::span<const Pulse> pulses) {
    Mat6 h = Mat6::Zero();
    for (const Pulse& p : pulses) {
        const double mag = sech_envelope_mag(t, p);
        if (mag == 0.0) continue;
        const double dt = t - p.center;
        auto add = [&](State s, State g, double detuning, double phase) {
            // hbar * f(t) * exp(-i(detuning/hbar (t-t0) + phase)) |s><g| + h.c.
            const std::complex<double> v =
                std::polar(hbar_uev_ps * mag, -(detuning / hbar_uev_ps * dt + phase));
            h(static_cast<int>(s), static_cast<int>(g)) += v;
            h(static_cast<int>(g), static_cast<int>(s)) += std::conj(v);
        };
        switch (p.target) {
            case Transition::Cycling1:
                add(X1, G1, p.detuning, p.phase);
                break;
            case Transition::Cycling2:
                add(X2, G2, p.detuning, p.phase);
                break;
            case Transition::RotationG1:
                add(T, G1, p.detuning, p.phase);
                add(U, G1, p.detuning - cfg.epsilon(), p.phase);
                break;
            case Transition::RotationG2:
                add(T, G2, p.detuning, p.phase);
                add(U, G2, p.detuning - cfg.epsilon(), p.phase);
                break;
        }
    }
    return h;
}

std::vector<LindbladChannel> build_lindblad_channels(const SystemConfig& cfg) {
    cfg.validate();
    std::vector<LindbladChannel> out;
    auto radiative = [&](State lo, State hi, double rate_uev) {
        if (rate_uev <= 0.0) return;
        LindbladChannel c;
        c.op = std::sqrt(rate_uev / hbar_uev_ps) * transition_op(lo, hi);
        c.kind = LindbladChannel::Kind::Radiative;
        out.push_back(c);
    };
    radiative(G1, X1, cfg.gamma_cyc);
    radiative(G2, X2, cfg.gamma_cyc);
    // T/U population decay, split between the two ground states.
    radiative(G1, T, cfg.gamma_r_tu * cfg.branching_g1);
    radiative(G2, T, cfg.gamma_r_tu * (1.0 - cfg.branching_g1));
    radiative(G1, U, cfg.gamma_r_tu * cfg.branching_g1);
    radiative(G2, U, cfg.gamma_r_tu * (1.0 - cfg.branching_g1));
    auto dephasing = [&](State lo, State hi, double rate_uev) {
        if (rate_uev <= 0.0) return;
        LindbladChannel c;
        c.op = std::sqrt(rate_uev / hbar_uev_ps) *
               (state_projector(hi) - state_projector(lo));
        c.kind = LindbladChannel::Kind::Dephasing;
        out.push_back(c);
    };
    dephasing(G1, G2, cfg.gamma_d_tu);
    dephasing(T, U, cfg.gamma_d_transition);
    return out;
}

Mat6 apply_dissipators(const Mat6& rho, std::span<const LindbladChannel> channels) {
    Mat6 out = Mat6::Zero();
    for (const auto& c : channels) {
        const Mat6 cr = c.op * rho;
        out += cr * c.op.adjoint();
        const Mat6 cc = c.op.adjoint() * c.op;
        out -= 0.5 * (cc * rho + rho * cc);
    }
    return out;
}

Mat6 lindblad_rhs(const Mat6& rho, double t, const SystemConfig& cfg,
                  std::span<const Pulse> pulses) {
    const Mat6 h = build_hamiltonian(t, cfg, pulses);
    Mat6 out = -I1 / hbar_uev_ps * (h * rho - rho * h);
    const auto channels = build_lindblad_channels(cfg);
    out += apply_dissipators(rho, channels);
    return out;
}

}  // namespace lcsim
