#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "lcsim/model.hpp"

namespace lcsim {

// Thrown when the adaptive step controller underflows (stiff failure).
struct NumericError : std::runtime_error {
    double time_ps;
    explicit NumericError(const std::string& what, double t)
        : std::runtime_error(what), time_ps(t) {}
};

struct PropagationSettings {
    double rtol = 1e-8;
    double atol = 1e-10;
    double initial_step = 0.25;  // ps
    double max_step = 100.0;     // ps, pulse-free regions only; near a pulse the
                                 // step is additionally capped at width/4 so no
                                 // stage can jump across an envelope
    void validate() const;       // tolerances in (0, 1e-2]
};

// Instantaneous unitary inserted into the evolution (idealized rotation).
// Applied as U X U^dag when the propagation crosses `time`.
struct InstantOp {
    double time;
    Mat6 u;
};

// The full generator of the dynamics: Hamiltonian drive terms, Lindblad
// channels (precomputed once) and optional instantaneous unitaries.
// Immutable after construction; safe to share across threads.
class Generator {
  public:
    Generator(const SystemConfig& cfg, std::vector<Pulse> pulses,
              std::vector<InstantOp> events = {});

    Mat6 rhs(const Mat6& x, double t) const;

    // Heisenberg adjoint of rhs with respect to the Hilbert-Schmidt inner
    // product Tr(G^dag X): +i/hbar [H, G] + sum O^dag G O - 1/2 {O^dag O, G}.
    Mat6 rhs_adjoint(const Mat6& g, double t) const;

    // Largest allowed step from t given pulse supports: full max_step in
    // pulse-free stretches but never stepping over an upcoming support edge,
    // and at most width/4 inside a support.
    double max_step_at(double t, double cap) const;

    // Same cap for integrations running backward in physical time.
    double max_step_at_backward(double t, double cap) const;

    const SystemConfig& config() const { return cfg_; }
    std::span<const Pulse> pulses() const { return pulses_; }
    std::span<const InstantOp> events() const { return events_; }
    std::span<const LindbladChannel> channels() const { return channels_; }

  private:
    SystemConfig cfg_;
    std::vector<Pulse> pulses_;
    std::vector<InstantOp> events_;
    std::vector<LindbladChannel> channels_;
};

struct Trajectory {
    std::vector<double> times;  // strictly increasing, ps
    std::vector<Mat6> states;
};

// Bare adaptive Dormand-Prince 5(4) step loop with PI control, generic in the
// right-hand side. Lands exactly on the sorted sample times and invokes
// on_sample there; step_cap(t, requested) limits the step near pulse supports.
void integrate_rk45(Mat6& x, double t0, double t1,
                    const std::function<Mat6(const Mat6&, double)>& rhs,
                    const std::function<double(double, double)>& step_cap,
                    const PropagationSettings& settings,
                    std::span<const double> sample_times = {},
                    const std::function<void(std::size_t, double, const Mat6&)>& on_sample = {});

// Core integrator: adaptive Dormand-Prince 5(4) with PI step control.
// Advances `x` from t0 to t1, landing exactly on every requested sample time
// (sorted, within [t0, t1]) and invoking on_sample there. The state is a
// generic complex matrix; no hermitization is applied, so regression-theorem
// objects propagate unchanged. Instantaneous events of the generator inside
// (t0, t1] are applied in passing.
void propagate_raw(Mat6& x, double t0, double t1, const Generator& gen,
                   const PropagationSettings& settings,
                   std::span<const double> sample_times = {},
                   const std::function<void(std::size_t, double, const Mat6&)>& on_sample = {});

// Density-matrix propagation on a caller-specified output grid (defaults to
// {t_end} when no grid is given). Verifies hermiticity and trace conservation
// of the result.
Trajectory propagate(const Mat6& rho0, double t_start, double t_end, const Generator& gen,
                     const PropagationSettings& settings,
                     std::span<const double> output_grid = {});

// Conditional (regression-theorem) evolution of op_left * rho * op_right over
// [t_start, t_end] under the same generator as propagate.
Mat6 propagate_conditional(const Mat6& op_left, const Mat6& op_right, const Mat6& rho,
                           double t_start, double t_end, const Generator& gen,
                           const PropagationSettings& settings);

}  // namespace lcsim
