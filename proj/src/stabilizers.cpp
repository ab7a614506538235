#include "lcsim/stabilizers.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace lcsim {

namespace {
constexpr double pi = 3.14159265358979323846;
constexpr Cx I1{0.0, 1.0};

nlohmann::json cx_json(Cx v) { return {{"re", v.real()}, {"im", v.imag()}}; }
}  // namespace

Cx stabilizer_phi_z(const BinnedCorrelations& binned) {
    if (std::abs(binned.g2_tot) < 1e-9)
        throw DegenerateInputError("G2 normalization vanishes");
    return 2.0 * (binned.g2.at("EEEL") - binned.g2.at("ELLL")) / binned.g2_tot;
}

Cx stabilizer_z_phi_z(const BinnedCorrelations& binned) {
    if (std::abs(binned.g3_tot) < 1e-9)
        throw DegenerateInputError("G3 normalization vanishes");
    return 2.0 *
           (binned.g3.at("EEEELE") + binned.g3.at("LELLLL") - binned.g3.at("EELLLE") -
            binned.g3.at("LEEELL")) /
           binned.g3_tot;
}

StabilizerPair compute_stabilizers(const SystemConfig& cfg, const RotationSpec& rot_pi,
                                   const RotationSpec& rot_pi2, const PipelineOptions& opts) {
    double ext_amp = opts.extraction_amplitude;
    if (ext_amp <= 0.0)
        ext_amp = calibrate_extraction_amplitude(cfg, opts.settings, opts.bins.extraction_sigma);
    ProtocolPlan plan = build_plan(opts.n_qubits, opts.bins, rot_pi, rot_pi2, cfg, ext_amp);
    CorrelationContext ctx(std::move(plan), cfg, opts.settings);
    StabilizerPair out;
    out.binned = binned_correlations(ctx, opts.t0, opts.resolution, opts.with_g3);
    out.phi_z = stabilizer_phi_z(out.binned);
    out.z_phi_z = opts.with_g3 ? stabilizer_z_phi_z(out.binned) : Cx{0.0, 0.0};
    return out;
}

std::vector<PhaseSweepRow> sweep_phase(const std::vector<double>& phases,
                                       const SystemConfig& cfg, const RotationSpec& rot_pi,
                                       const RotationSpec& rot_pi2,
                                       const PipelineOptions& opts) {
    std::vector<PhaseSweepRow> rows;
    rows.reserve(phases.size());
    for (double th : phases) {
        RotationSpec p1 = rot_pi, p2 = rot_pi2;
        p1.phase = th;
        p1.phase1 = th;
        p2.phase = th;
        p2.phase1 = th;
        const StabilizerPair s = compute_stabilizers(cfg, p1, p2, opts);
        rows.push_back({th, s.phi_z, s.z_phi_z});
    }
    return rows;
}

void write_phase_csv(const std::vector<PhaseSweepRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open " + path);
    out << "phase_rad,phi_z_re,phi_z_im,phi_z_abs,z_phi_z_re,z_phi_z_im,z_phi_z_abs\n";
    out.precision(12);
    for (const auto& r : rows)
        out << r.theta << ',' << r.phi_z.real() << ',' << r.phi_z.imag() << ','
            << std::abs(r.phi_z) << ',' << r.z_phi_z.real() << ',' << r.z_phi_z.imag() << ','
            << std::abs(r.z_phi_z) << '\n';
}

std::vector<LossSweepRow> sweep_loss(const std::vector<double>& gammas,
                                     LindbladChannel::Kind kind, const SystemConfig& cfg,
                                     const RotationSpec& rot_pi, const RotationSpec& rot_pi2,
                                     const PipelineOptions& opts) {
    std::vector<LossSweepRow> rows;
    rows.reserve(gammas.size());
    for (double g : gammas) {
        SystemConfig c = cfg;
        if (kind == LindbladChannel::Kind::Radiative)
            c.gamma_r_tu = g;
        else
            c.gamma_d_tu = g;
        const StabilizerPair s = compute_stabilizers(c, rot_pi, rot_pi2, opts);
        rows.push_back({g, std::abs(s.phi_z), std::abs(s.z_phi_z)});
    }
    return rows;
}

void write_loss_csv(const std::vector<LossSweepRow>& radiative,
                    const std::vector<LossSweepRow>& dephasing, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open " + path);
    out << "channel,gamma_ueV,phi_z_abs,z_phi_z_abs\n";
    out.precision(12);
    for (const auto& r : radiative)
        out << "radiative," << r.gamma << ',' << r.abs_phi_z << ',' << r.abs_z_phi_z << '\n';
    for (const auto& r : dephasing)
        out << "dephasing," << r.gamma << ',' << r.abs_phi_z << ',' << r.abs_z_phi_z << '\n';
}

StabilizerReport higher_order_stabilizers(int k_max, const SystemConfig& cfg,
                                          const RotationSpec& rot_pi,
                                          const RotationSpec& rot_pi2,
                                          const PipelineOptions& opts) {
    if (k_max < 1) throw ConfigError("k_max must be >= 1");
    if (opts.n_qubits < k_max + 2)
        throw ConfigError("protocol too short: need n_qubits >= k_max + 2");
    StabilizerReport rep;
    rep.resolution = opts.resolution;
    rep.n_qubits = opts.n_qubits;
    rep.bin_length = opts.bins.bin_length;
    for (int k = 1; k <= k_max; ++k) {
        PipelineOptions o = opts;
        o.t0 = 2.0 * (k - 1) * opts.bins.bin_length;
        const StabilizerPair s = compute_stabilizers(cfg, rot_pi, rot_pi2, o);
        if (k == 1) rep.phi_z = s.phi_z;
        rep.z_phi_z.push_back(s.z_phi_z);
        rep.t0s.push_back(o.t0);
    }
    return rep;
}

void StabilizerReport::save_json(const std::string& path) const {
    nlohmann::json j;
    j["phi_z"] = cx_json(phi_z);
    j["phi"] = phi;
    j["resolution"] = resolution;
    j["n_qubits"] = n_qubits;
    j["bin_length_ps"] = bin_length;
    for (std::size_t i = 0; i < z_phi_z.size(); ++i) {
        j["z_phi_z"].push_back(cx_json(z_phi_z[i]));
        j["t0_ps"].push_back(t0s[i]);
    }
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open " + path);
    out << j.dump(2) << '\n';
}

WitnessReport witness(double xz, const std::vector<double>& zxz, int n) {
    if (static_cast<int>(zxz.size()) != n - 1)
        throw ConfigError("witness expects N-1 higher stabilizer values");
    WitnessReport rep;
    rep.n = n;
    rep.value = n - 1.0 - xz;
    rep.terms.push_back(xz);
    for (double v : zxz) {
        rep.value -= v;
        rep.terms.push_back(v);
    }
    rep.entangled = rep.value < 0.0;
    return rep;
}

void WitnessReport::save_json(const std::string& path) const {
    nlohmann::json j;
    j["witness"] = value;
    j["n"] = n;
    j["terms"] = terms;
    j["entangled"] = entangled;
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open " + path);
    out << j.dump(2) << '\n';
}

LengthBound length_bound(double xz, double zxz) {
    LengthBound b;
    if (zxz >= 1.0) {
        b.unbounded = true;
        return b;
    }
    b.n_max = static_cast<int>(std::floor(xz / (1.0 - zxz) + 1.0 + 1e-12));
    return b;
}

// ---------------------------------------------------------------------------
// Qubit-register oracle. Bit k (k < n) is photon k+1 with 0 = early, 1 = late;
// bit n is the emitter with 0 = G1, 1 = G2.

ClusterOracle::ClusterOracle(int n_photons) : n_(n_photons) {
    if (n_ < 1) throw ConfigError("oracle needs at least one photon");
    if (n_ > 14) throw ConfigError("oracle register overflow: n > 14");
}

void ClusterOracle::run() {
    const std::size_t dim = std::size_t{1} << (n_ + 1);
    psi_ = Eigen::VectorXcd::Zero(dim);

    // Emitter-only start (|G1> + |G2>)/sqrt(2); photons attach cycle by cycle.
    Eigen::VectorXcd cur = Eigen::VectorXcd::Zero(2);
    cur(0) = 1.0 / std::sqrt(2.0);
    cur(1) = 1.0 / std::sqrt(2.0);

    const Cx f0 = -I1 * std::exp(I1 * phase_pi_);   // G1 branch: emit early, flip
    const Cx f1 = -I1 * std::exp(-I1 * phase_pi_);  // G2 branch: emit late, flip
    const Cx c = std::cos(0.5 * theta_pi2_);
    const Cx s01 = -I1 * std::sin(0.5 * theta_pi2_) * std::exp(-I1 * phase_pi2_);
    const Cx s10 = -I1 * std::sin(0.5 * theta_pi2_) * std::exp(I1 * phase_pi2_);

    for (int q = 0; q < n_; ++q) {
        // Emission map: photon q records the emitter Z value, emitter flips
        // with the pi-rotation phases. Register grows by one qubit; the
        // emitter bit moves from position q to q+1.
        const std::size_t din = std::size_t{1} << (q + 1);
        Eigen::VectorXcd next = Eigen::VectorXcd::Zero(din << 1);
        for (std::size_t b = 0; b < din; ++b) {
            if (cur(b) == Cx{0.0, 0.0}) continue;
            const std::size_t photons = b & ((std::size_t{1} << q) - 1);
            const bool emitter = (b >> q) & 1;
            if (!emitter)  // G1: early photon (bit 0), emitter -> G2
                next(photons | (std::size_t{1} << (q + 1))) += f0 * cur(b);
            else  // G2: late photon (bit 1 at position q), emitter -> G1
                next(photons | (std::size_t{1} << q)) += f1 * cur(b);
        }
        // Inter-qubit rotation R_phase(theta) on the emitter (bit q+1).
        const std::size_t mask = std::size_t{1} << (q + 1);
        for (std::size_t b = 0; b < next.size(); ++b) {
            if (b & mask) continue;
            const Cx a0 = next(b);
            const Cx a1 = next(b | mask);
            next(b) = c * a0 + s01 * a1;
            next(b | mask) = s10 * a0 + c * a1;
        }
        cur.swap(next);
    }
    psi_ = cur;
}

Cx ClusterOracle::pauli_string_expectation(const std::vector<std::pair<int, char>>& ops) const {
    Eigen::VectorXcd phi = psi_;
    for (const auto& [qubit, p] : ops) {
        const std::size_t mask = std::size_t{1} << qubit;
        for (std::size_t b = 0; b < phi.size(); ++b) {
            if (b & mask) continue;
            const Cx a0 = phi(b);
            const Cx a1 = phi(b | mask);
            switch (p) {
                case 'X':
                    phi(b) = a1;
                    phi(b | mask) = a0;
                    break;
                case 'Y':
                    phi(b) = -I1 * a1;
                    phi(b | mask) = I1 * a0;
                    break;
                case 'Z':
                    phi(b | mask) = -a1;
                    break;
                case 'S':  // X + iY = 2|0><1|
                    phi(b) = 2.0 * a1;
                    phi(b | mask) = 0.0;
                    break;
                default:
                    throw ConfigError(std::string("unknown Pauli symbol ") + p);
            }
        }
    }
    return psi_.dot(phi);  // <psi|phi>, Eigen dot conjugates the left factor
}

Cx ClusterOracle::phi_z() const { return pauli_string_expectation({{0, 'S'}, {1, 'Z'}}); }

Cx ClusterOracle::z_phi_z(int k) const {
    if (k < 1 || k > n_ - 2)
        throw ConfigError("z_phi_z(k) needs photons k..k+2 in the register");
    return pauli_string_expectation({{k - 1, 'Z'}, {k, 'S'}, {k + 1, 'Z'}});
}

Eigen::Matrix4cd ClusterOracle::two_photon_dm(Conditioning cond) const {
    if (n_ < 2) throw ConfigError("two-photon matrix needs at least two photons");
    Eigen::Matrix4cd m = Eigen::Matrix4cd::Zero();
    const std::size_t emitter_mask = std::size_t{1} << n_;
    for (std::size_t b = 0; b < psi_.size(); ++b) {
        if (cond == Conditioning::ProjectG1 && (b & emitter_mask)) continue;
        if (cond == Conditioning::ProjectG2 && !(b & emitter_mask)) continue;
        for (std::size_t b2 = 0; b2 < psi_.size(); ++b2) {
            if ((b >> 2) != (b2 >> 2)) continue;
            if (cond == Conditioning::ProjectG1 && (b2 & emitter_mask)) continue;
            if (cond == Conditioning::ProjectG2 && !(b2 & emitter_mask)) continue;
            // DM basis {EE, EL, LE, LL}: row index q1*2 + q2 with q1 = bit 0.
            const int r = static_cast<int>(((b & 1) << 1) | ((b >> 1) & 1));
            const int cidx = static_cast<int>(((b2 & 1) << 1) | ((b2 >> 1) & 1));
            m(r, cidx) += psi_(b) * std::conj(psi_(b2));
        }
    }
    const double tr = m.trace().real();
    if (tr < 1e-12) throw DegenerateInputError("conditioned branch has zero probability");
    return m / tr;
}

ZProjection ClusterOracle::emitter_z_projection() const {
    ZProjection out;
    const std::size_t emitter_mask = std::size_t{1} << n_;
    for (std::size_t b = 0; b < psi_.size(); ++b) {
        const double w = std::norm(psi_(b));
        if (b & emitter_mask)
            out.p_g2 += w;
        else
            out.p_g1 += w;
    }
    return out;
}

}  // namespace lcsim
