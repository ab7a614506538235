#pragma once

#include <complex>
#include <vector>

#include "lcsim/correlations.hpp"

namespace lcsim {

// First stabilizer generator of the 1D linear cluster state,
//   <Phi(1) Z(2)> = 2 (G2_EEEL - G2_ELLL) / G2_tot,
// as a complex number whose real part is the X component and whose imaginary
// part carries the Y component. Throws DegenerateInputError when the
// normalization vanishes.
Cx stabilizer_phi_z(const BinnedCorrelations& binned);

// <Z(1) Phi(2) Z(3)> = 2 (G3_EEEELE + G3_LELLLL - G3_EELLLE - G3_LEEELL) / G3_tot.
Cx stabilizer_z_phi_z(const BinnedCorrelations& binned);

struct PipelineOptions {
    int n_qubits = 3;
    int resolution = 64;
    double t0 = 0.0;
    bool with_g3 = true;
    BinConfig bins;
    PropagationSettings settings;
    double extraction_amplitude = 0.0;  // <= 0: calibrate numerically
};

struct StabilizerPair {
    Cx phi_z;
    Cx z_phi_z;
    BinnedCorrelations binned;
};

// Full pipeline: protocol schedule -> binned correlation integrals -> first
// two stabilizer generator expectation values.
StabilizerPair compute_stabilizers(const SystemConfig& cfg, const RotationSpec& rot_pi,
                                   const RotationSpec& rot_pi2, const PipelineOptions& opts);

struct PhaseSweepRow {
    double theta;  // common rotation-pulse phase, rad
    Cx phi_z;
    Cx z_phi_z;
};
std::vector<PhaseSweepRow> sweep_phase(const std::vector<double>& phases,
                                       const SystemConfig& cfg, const RotationSpec& rot_pi,
                                       const RotationSpec& rot_pi2, const PipelineOptions& opts);
void write_phase_csv(const std::vector<PhaseSweepRow>& rows, const std::string& path);

struct LossSweepRow {
    double gamma;  // ueV
    double abs_phi_z;
    double abs_z_phi_z;
};
// kind: Radiative varies gamma_r_tu, Dephasing varies gamma_d_tu; rotations
// stay calibrated on the base configuration.
std::vector<LossSweepRow> sweep_loss(const std::vector<double>& gammas,
                                     LindbladChannel::Kind kind, const SystemConfig& cfg,
                                     const RotationSpec& rot_pi, const RotationSpec& rot_pi2,
                                     const PipelineOptions& opts);
void write_loss_csv(const std::vector<LossSweepRow>& radiative,
                    const std::vector<LossSweepRow>& dephasing, const std::string& path);

struct StabilizerReport {
    Cx phi_z;                    // i = 1 generator
    std::vector<Cx> z_phi_z;     // k-th entry: generator i = k+1, offset 2(k-1)T
    std::vector<double> t0s;     // start offsets used per k
    double phi = 0.0;            // post-processing projection angle
    int resolution = 0;
    int n_qubits = 0;
    double bin_length = 0.0;
    void save_json(const std::string& path) const;
};

// Stabilizer generators k = 1..k_max, each evaluated with all bin anchors
// shifted by t0 = 2(k-1)T. Requires n_qubits >= k_max + 2.
StabilizerReport higher_order_stabilizers(int k_max, const SystemConfig& cfg,
                                          const RotationSpec& rot_pi,
                                          const RotationSpec& rot_pi2,
                                          const PipelineOptions& opts);

struct WitnessReport {
    double value = 0.0;  // <W>
    int n = 0;
    std::vector<double> terms;  // XZ followed by the ZXZ contributions
    bool entangled = false;     // <W> < 0
    void save_json(const std::string& path) const;
};

// <W> = (N-1) - XZ - sum_{i>1} ZXZ_i. zxz must hold N-1 values.
WitnessReport witness(double xz, const std::vector<double>& zxz, int n);

struct LengthBound {
    int n_max = 0;
    bool unbounded = false;  // zxz >= 1
};

// Largest cluster length with <W> < 0 under uniform stabilizer values:
// floor of xz / (1 - zxz) + 1.
LengthBound length_bound(double xz, double zxz);

// Exact qubit-register model of the abstract protocol: per cycle a Z-basis
// emission map (photon records the emitter state, emitter flips with the pi
// rotation phases) followed by the inter-qubit rotation R_phase(theta). The
// pi/2 angle and all phases are free, so sweeps and perturbations can be
// predicted exactly; Pauli-string expectations are evaluated by Kronecker
// products on the register.
class ClusterOracle {
  public:
    explicit ClusterOracle(int n_photons);  // register guard at n > 14

    void set_pi_phase(double phase) { phase_pi_ = phase; }
    void set_pi2(double theta, double phase) {
        theta_pi2_ = theta;
        phase_pi2_ = phase;
    }

    void run();

    Cx phi_z() const;             // <(X + iY)(1) Z(2)>
    Cx z_phi_z(int k = 1) const;  // <Z(k) (X + iY)(k+1) Z(k+2)>
    Eigen::Matrix4cd two_photon_dm(Conditioning cond = Conditioning::None) const;
    ZProjection emitter_z_projection() const;

  private:
    int n_;
    double phase_pi_ = 0.0;
    double theta_pi2_ = 1.57079632679489661923;
    double phase_pi2_ = 0.0;
    Eigen::VectorXcd psi_;

    Cx pauli_string_expectation(const std::vector<std::pair<int, char>>& ops) const;
};

}  // namespace lcsim
