#pragma once

#include <Eigen/Dense>
#include <complex>
#include <span>
#include <vector>

#include "lcsim/pulses.hpp"

namespace lcsim {

using Mat6 = Eigen::Matrix<std::complex<double>, 6, 6>;
using Vec6 = Eigen::Matrix<std::complex<double>, 6, 1>;

// Fixed basis ordering used by every matrix in the codebase.
enum State : int { G1 = 0, G2 = 1, X1 = 2, X2 = 3, T = 4, U = 5 };

// Level energies and loss rates of the six-level lambda system.
// Defaults reproduce the reference parameter set: ground splitting 200 ueV,
// target-unwanted splitting 500 ueV, base transition energy 1 eV, cycling
// decay 1.2 ueV (0.55 ns lifetime).
struct SystemConfig {
    double e_g1 = 0.0;             // ueV
    double e_g2 = 200.0;           // ueV, delta_gs = e_g2 - e_g1
    double e_x1 = 1.0e6;           // ueV
    double e_x2 = 1.0e6 + 200.0;   // ueV (never quoted in the source data; X1 + delta_gs)
    double e_t = 1.0e6;            // ueV
    double e_u = 1.0e6 + 500.0;    // ueV, epsilon = e_u - e_t
    double gamma_cyc = 1.2;        // radiative decay of X1->G1, X2->G2, ueV
    double gamma_r_tu = 0.0;       // radiative decay of T and U, ueV
    double gamma_d_tu = 0.0;       // spin dephasing of the G1/G2 coherence, ueV
    double gamma_d_transition = 0.0;  // optional extra T/U dephasing, default off
    double branching_g1 = 0.5;     // fraction of T/U decay ending in G1

    double delta_gs() const { return e_g2 - e_g1; }
    double epsilon() const { return e_u - e_t; }

    void validate() const;  // throws ConfigError
};

// One Lindblad jump operator with the rate folded in as sqrt(gamma/hbar).
struct LindbladChannel {
    enum class Kind { Radiative, Dephasing };
    Mat6 op;
    Kind kind;
};

// Interaction-frame Hamiltonian at time t (ueV). Purely off-diagonal: the
// bare energies are absorbed into the per-transition detuning phases.
// Rotation pulses couple their ground state to both T (at the pulse detuning)
// and U (detuned additionally by -epsilon).
Mat6 build_hamiltonian(double t, const SystemConfig& cfg, std::span<const Pulse> pulses);

// All loss channels of the configuration; zero-rate channels are omitted.
// T/U radiative decay branches to both ground states (branching_g1 fraction
// to G1).
std::vector<LindbladChannel> build_lindblad_channels(const SystemConfig& cfg);

// Right-hand side of the von Neumann-Lindblad equation, d rho/dt in 1/ps:
//   -(i/hbar)[H(t), rho] + sum_O ( O rho O^dag - 1/2 {O^dag O, rho} ).
// Valid for arbitrary (non-Hermitian) input matrices as required by the
// regression-theorem machinery.
Mat6 lindblad_rhs(const Mat6& rho, double t, const SystemConfig& cfg,
                  std::span<const Pulse> pulses);

// Dissipator application with precomputed channels (hot path).
Mat6 apply_dissipators(const Mat6& rho, std::span<const LindbladChannel> channels);

// Basis projector |s><s|.
Mat6 state_projector(State s);

// |ket><bra|.
Mat6 transition_op(State ket, State bra);

// Cycling-transition annihilator a = |G1><X1| used by all photon correlation
// functions.
Mat6 cycling_annihilator();

}  // namespace lcsim
