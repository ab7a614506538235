#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lcsim/calibration.hpp"

namespace lcsim {

struct ScheduleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Time-bin layout. Qubit i (1-based) occupies the early bin
// [2(i-1)T, (2i-1)T] and the late bin [(2i-1)T, 2iT].
struct BinConfig {
    double bin_length = 4000.0;       // T, ps
    double extraction_offset = 25.0;  // extraction center after bin start, ps
    double rotation_offset = 80.0;    // rotation center before bin end, ps
    double extraction_sigma = 1.0 / 5.0;   // 1/ps
    double rotation_sigma = 1.0 / 16.0;    // 1/ps

    void validate(const SystemConfig& cfg) const;  // emission completes in a bin
};

// Full pulse schedule for an N-qubit linear cluster run. Per qubit:
// extraction pi -> R(pi) -> extraction pi -> R(pi/2).
struct ProtocolPlan {
    int n_qubits = 1;
    BinConfig bins;
    std::vector<Pulse> pulses;        // absolute centers, sorted
    std::vector<InstantOp> events;    // idealized instant gates (empty for pulsed runs)
    RotationSpec rot_pi;
    RotationSpec rot_pi2;
    double extraction_amplitude = 0.5;
    bool ideal_rotations = false;

    double t_end() const { return 2.0 * n_qubits * bins.bin_length; }
};

// Deterministic schedule; initial state is set to (|G1> + |G2>)/sqrt(2)
// directly (state preparation hardware is out of scope). Throws ScheduleError
// when pulse supports collide across bin boundaries or the bin length is too
// short for the emission to complete.
ProtocolPlan build_plan(int n_qubits, const BinConfig& bins, const RotationSpec& rot_pi,
                        const RotationSpec& rot_pi2, const SystemConfig& cfg,
                        double extraction_amplitude = 0.5);

// Same schedule but with rotations (and extractions) replaced by instantaneous
// ideal unitaries; used by the oracle-equivalence checks.
ProtocolPlan build_ideal_plan(int n_qubits, const BinConfig& bins, double theta_pi_phase,
                              double theta_pi2_phase, const SystemConfig& cfg);

struct RotationSnapshot {
    double t_before;
    double t_after;
    double pop_g1_before, pop_g2_before;
    double pop_g1_after, pop_g2_after;
    double coherence_before, coherence_after;  // |rho_G1G2|
};

struct EmissionRecord {
    Trajectory trajectory;                     // dense output over [0, 2NT]
    std::vector<double> bin_emission;          // integral of gamma_cyc <a^dag a>/hbar per bin
    std::vector<RotationSnapshot> rotations;   // per rotation step
    double emission_rate_factor = 0.0;         // gamma_cyc/hbar, 1/ps
    double total_emission() const;
    // Columnar dump: time, six populations, |G1G2 coherence|, emission rate.
    void write_csv(const std::string& path) const;
};

Mat6 initial_superposition();  // (|G1>+|G2>)(<G1|+<G2|)/2

// Runs the full excitation-emission sequence and records dynamics on a dense
// grid (sample_step ps).
EmissionRecord run_protocol(const ProtocolPlan& plan, const SystemConfig& cfg,
                            const PropagationSettings& settings, double sample_step = 2.0);

struct ZProjection {
    double p_g1 = 0.0;
    double p_g2 = 0.0;
    std::optional<Mat6> conditional_g1;  // omitted for zero-probability branches
    std::optional<Mat6> conditional_g2;
};

// Projects the post-protocol state onto the two ground states.
ZProjection final_z_projection(const Mat6& rho);

}  // namespace lcsim
