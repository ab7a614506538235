#pragma once

#include <span>
#include <vector>

#include "lcsim/propagator.hpp"

namespace lcsim {

struct DetuningSweepRow {
    double detuning;  // ueV
    double pop_g1;
    double pop_g2;
    double leakage;   // population outside the ground subspace
    double fidelity;  // vs the template's ideal rotation
};

struct DetuningSweepTable {
    std::vector<DetuningSweepRow> rows;
    void write_csv(const std::string& path) const;
};

// Ideal ground-subspace rotation R_phase(theta) embedded in the 6-level space
// (identity outside {G1, G2}).
Mat6 ideal_rotation(double theta, double phase);

// Average state fidelity of the pulse-pair map against R_phase(theta) over the
// six axial Bloch states of the ground qubit; leakage counts as error.
double rotation_fidelity(const RotationSpec& spec, const SystemConfig& cfg,
                         const PropagationSettings& settings);

// One lossless propagation of |G1><G1| through the 16 ps rotation pulse pair
// per grid point. Monotone detuning grid.
DetuningSweepTable sweep_detuning(double lo, double hi, int n_points,
                                  const SystemConfig& cfg, const RotationSpec& tmpl,
                                  const PropagationSettings& settings);

struct CalibrationResult {
    RotationSpec spec;
    double fidelity;
    double analytical_minus;  // Eq.-style closed-form seed, minus branch (ueV)
    double analytical_plus;
};

// Numerical calibration of R_phase(theta): seeds the detuning from a coarse
// fidelity scan over [0, 100] ueV (the closed-form value is reported alongside
// but lands in the wrong basin for theta = pi/2), then refines by
// golden-section maximization of the rotation fidelity.
CalibrationResult calibrate_rotation(double theta, double phase, const SystemConfig& cfg,
                                     const PropagationSettings& settings);

// Extraction pi-pulse amplitude, tuned to maximize the X1 population right
// after the pulse (the sech area theorem is exact only without decay).
double calibrate_extraction_amplitude(const SystemConfig& cfg,
                                      const PropagationSettings& settings,
                                      double sigma = 1.0 / 5.0);

}  // namespace lcsim
