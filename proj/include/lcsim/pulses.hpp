#pragma once

#include <complex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lcsim {

// All internal times are in ps, all energies in ueV. Rates quoted in ueV are
// converted to 1/ps by dividing by hbar.
constexpr double hbar_uev_ps = 658.2119569;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Which part of the level scheme a pulse drives. Cycling pulses address a
// single optical transition (G1-X1 or G2-X2); rotation pulses address both
// transition states T and U from one ground state.
enum class Transition {
    Cycling1,
    Cycling2,
    RotationG1,
    RotationG2,
};

std::string to_string(Transition t);
Transition transition_from_string(const std::string& s);

// One sech-shaped drive term. The envelope is
//   f(t) = amplitude * sigma * sech(sigma * (t - center)),
// so the envelope integral is amplitude * pi and a resonant pulse rotates the
// addressed two-level transition by 2 * amplitude * pi (amplitude = 0.5 is a
// population-inverting pi-pulse, amplitude = 1 a transitionless 2pi-pulse).
//
// Dynamics are expressed in the interaction frame of the bare Hamiltonian:
// each driven transition term oscillates at the pulse detuning from that
// transition rather than at the absolute optical frequency. Phases are
// referenced to the pulse center, which makes pulse sequences covariant under
// time translation.
struct Pulse {
    double amplitude = 0.5;     // dimensionless area scale (see above)
    double sigma = 1.0 / 16.0;  // bandwidth, 1/ps
    double center = 0.0;        // t0, ps
    double detuning = 0.0;      // from the addressed reference transition, ueV
    double phase = 0.0;         // rad
    Transition target = Transition::Cycling1;

    double width() const { return 1.0 / sigma; }

    // Envelope support used for step-size control and tail truncation.
    // sech(20) ~ 4e-9, so the truncated tail is far below solver tolerances.
    static constexpr double support_sigmas = 20.0;
    double support_begin() const { return center - support_sigmas / sigma; }
    double support_end() const { return center + support_sigmas / sigma; }

    // Scheduling half-width: |t - center| < 5/sigma covers all but ~1% of the
    // envelope and matches the default protocol placement margins.
    static constexpr double schedule_sigmas = 5.0;
};

// Complex drive at time t in the interaction frame: the optical carrier is
// replaced by rotation at the pulse detuning. Zero outside the 20/sigma
// support window.
std::complex<double> sech_envelope(double t, const Pulse& p);

// Real envelope magnitude amplitude*sigma*sech(sigma (t-t0)), same truncation.
double sech_envelope_mag(double t, const Pulse& p);

struct DetuningBranches {
    double plus;   // ueV
    double minus;  // ueV
};

// Closed-form rotation-pulse detuning for target angle theta on the ground
// qubit, from the captured-phase analysis of the driven lambda system:
//   delta = (epsilon +- sqrt(epsilon^2 + 4 epsilon s cot(theta/2) - 4 s^2))/2
// with s = hbar*sigma the pulse bandwidth in ueV.  The formula ignores the
// ground-state splitting and light-induced shifts, so it seeds rather than
// replaces the numerical calibration.  Throws ConfigError with the admissible
// theta range when the discriminant is negative.
DetuningBranches analytical_detuning(double theta, double epsilon_uev, double sigma_uev);

// A calibrated ground-state rotation R_phase(theta), realised as one pulse per
// ground state with a common detuning. amp1^2 + amp2^2 = 1.
struct RotationSpec {
    double theta = 3.14159265358979323846;  // target polar angle, rad
    double phase = 0.0;                     // azimuthal rotation axis, rad
    double detuning = 0.0;                  // shared pulse detuning, ueV
    double phase1 = 0.0;                    // phase of the G1 pulse
    double phase2 = 0.0;                    // phase of the G2 pulse
    double amp1 = 0.70710678118654752440;
    double amp2 = 0.70710678118654752440;
    double sigma = 1.0 / 16.0;              // 1/ps

    // The two drive pulses centered at t0. Both share the rotation detuning.
    std::vector<Pulse> pulses_at(double t0) const;

    void validate() const;
};

}  // namespace lcsim
