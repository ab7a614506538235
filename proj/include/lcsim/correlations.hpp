#pragma once

#include <complex>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lcsim/protocol.hpp"

namespace lcsim {

struct PlanError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DegenerateInputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Cx = std::complex<double>;

// Operator pattern over the early/late alphabet: length 4 (second order) or 6
// (third order). Slot ordering equals operator ordering, the first half are
// creation operators, the second half annihilation operators, with time
// arguments assigned outside-in: (t1, t2, t2, t1) resp. (t1, t2, t3, t3, t2,
// t1). An 'L' slot shifts its argument by one bin length.
struct OpPattern {
    std::string letters;
    OpPattern(std::string s);  // validates alphabet and length
    int order() const { return static_cast<int>(letters.size()) / 2; }
};

// Everything the regression-theorem evaluation needs: the full protocol drive
// (correlation-time propagations see the later protocol pulses), the solver
// settings and the bin layout. Stateless and safe to share across threads.
class CorrelationContext {
  public:
    CorrelationContext(ProtocolPlan plan, SystemConfig cfg, PropagationSettings settings);

    const Generator& generator() const { return gen_; }
    const ProtocolPlan& plan() const { return plan_; }
    const SystemConfig& config() const { return cfg_; }
    const PropagationSettings& settings() const { return settings_; }
    double bin_length() const { return plan_.bins.bin_length; }

    Mat6 rho_at(double t) const;  // protocol state, propagated from t = 0

  private:
    ProtocolPlan plan_;
    SystemConfig cfg_;
    PropagationSettings settings_;
    Generator gen_;
};

// Single-point pattern evaluation via nested conditional propagation, exactly
// the bracketed [..]_{ti->tj} scheme. Throws PlanError when the resolved
// operator times violate the nesting order.
Cx evaluate_g2(const CorrelationContext& ctx, const OpPattern& pattern, double t1, double t2);
Cx evaluate_g3(const CorrelationContext& ctx, const OpPattern& pattern, double t1, double t2,
               double t3);

// Dense rectangular grid of one pattern over its time-bin windows
// (t_i in [t0 + 2(i-1)T, t0 + 2(i-1)T + T]).
struct CorrelationGrid {
    std::string pattern;
    double t0 = 0.0;
    double bin_length = 0.0;
    int resolution = 0;
    std::vector<Cx> values;  // row-major over (t1[, t2[, t3]])

    Cx integrate() const;  // composite trapezoid over every axis
    void save_json(const std::string& path) const;
    static CorrelationGrid load_json(const std::string& path);
};

// Time-integrated pattern values entering the stabilizer expressions.
struct BinnedCorrelations {
    double t0 = 0.0;
    double bin_length = 0.0;
    int resolution = 0;
    std::string quadrature = "trapezoid";
    std::map<std::string, Cx> g2;  // six second-order patterns
    std::map<std::string, Cx> g3;  // twelve third-order patterns (when computed)
    Cx g2_tot{0.0, 0.0};
    Cx g3_tot{0.0, 0.0};

    void save_json(const std::string& path) const;
};

// Integral of a single pattern over its bin windows; resolution >= 16 per
// axis. Optionally captures the full grid.
Cx integrate_bins(const CorrelationContext& ctx, const OpPattern& pattern, double t0,
                  int resolution, CorrelationGrid* capture = nullptr);

// All patterns required by the first two stabilizer generators. The
// production path contracts the innermost time integrals into adjoint-
// propagated trace covectors, cutting the conditional-propagation count per
// pattern from O(n^2) to O(n); with_g3 = false computes only the second-order
// set.
BinnedCorrelations binned_correlations(const CorrelationContext& ctx, double t0, int resolution,
                                       bool with_g3 = true);

// Same integrals through the shared-prefix nested-propagation tree (the
// direct transcription of the bracketed-evolution scheme). Kept as the
// independent route for plan-invariance checks; slower than the production
// path by a factor of the grid resolution.
BinnedCorrelations binned_correlations_reference(const CorrelationContext& ctx, double t0,
                                                 int resolution, bool with_g3 = true);

enum class Conditioning { None, ProjectG1, ProjectG2 };

// Two-photon density matrix in the {EE, EL, LE, LL} basis from the 16 binned
// second-order entries; hermitian, unit trace. Conditioning inserts the
// emitter Z-projector at the protocol end as the time-ordered center operator
// (the unconditioned emitter stays entangled with the photon pair, so the
// conditioned variant is the one comparable to a pure target state).
Eigen::Matrix4cd two_photon_density_matrix(const CorrelationContext& ctx, int resolution,
                                           Conditioning cond = Conditioning::None,
                                           double t0 = 0.0);

}  // namespace lcsim
