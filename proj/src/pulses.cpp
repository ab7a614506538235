#include "lcsim/pulses.hpp"

#include <cmath>

namespace lcsim {

std::string to_string(Transition t) {
    switch (t) {
        case Transition::Cycling1: return "cycling-1";
        case Transition::Cycling2: return "cycling-2";
        case Transition::RotationG1: return "rotation-g1";
        case Transition::RotationG2: return "rotation-g2";
    }
    return "?";
}

Transition transition_from_string(const std::string& s) {
    if (s == "cycling-1") return Transition::Cycling1;
    if (s == "cycling-2") return Transition::Cycling2;
    if (s == "rotation-g1") return Transition::RotationG1;
    if (s == "rotation-g2") return Transition::RotationG2;
    throw ConfigError("unknown transition label: " + s);
}

double sech_envelope_mag(double t, const Pulse& p) {
    const double x = p.sigma * (t - p.center);
    if (std::abs(x) > Pulse::support_sigmas) return 0.0;
    return p.amplitude * p.sigma / std::cosh(x);
}

std::complex<double> sech_envelope(double t, const Pulse& p) {
    const double mag = sech_envelope_mag(t, p);
    if (mag == 0.0) return {0.0, 0.0};
    const double ph = p.detuning / hbar_uev_ps * (t - p.center) + p.phase;
    return std::polar(mag, -ph);
}

DetuningBranches analytical_detuning(double theta, double epsilon_uev, double sigma_uev) {
    const double c = 1.0 / std::tan(theta / 2.0);
    const double disc = epsilon_uev * epsilon_uev + 4.0 * epsilon_uev * sigma_uev * c -
                        4.0 * sigma_uev * sigma_uev;
    if (disc < 0.0) {
        // Admissible range: cot(theta/2) >= (sigma^2 - eps^2/4) / (eps sigma).
        const double cmin = (sigma_uev * sigma_uev - 0.25 * epsilon_uev * epsilon_uev) /
                            (epsilon_uev * sigma_uev);
        const double theta_max = 2.0 * std::atan2(1.0, cmin);
        throw ConfigError("no closed-form detuning for theta=" + std::to_string(theta) +
                          "; admissible theta in (0, " + std::to_string(theta_max) + "]");
    }
    const double r = std::sqrt(disc);
    return {0.5 * (epsilon_uev + r), 0.5 * (epsilon_uev - r)};
}

std::vector<Pulse> RotationSpec::pulses_at(double t0) const {
    validate();
    Pulse p1;
    p1.amplitude = amp1;
    p1.sigma = sigma;
    p1.center = t0;
    p1.detuning = detuning;
    p1.phase = phase1;
    p1.target = Transition::RotationG1;
    Pulse p2 = p1;
    p2.amplitude = amp2;
    p2.phase = phase2;
    p2.target = Transition::RotationG2;
    return {p1, p2};
}

void RotationSpec::validate() const {
    if (sigma <= 0.0) throw ConfigError("rotation pulse bandwidth must be positive");
    const double norm = amp1 * amp1 + amp2 * amp2;
    if (std::abs(norm - 1.0) > 1e-9)
        throw ConfigError("rotation amplitudes must satisfy amp1^2 + amp2^2 = 1");
}

}  // namespace lcsim
