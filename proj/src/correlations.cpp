#include "lcsim/correlations.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace lcsim {

namespace {

// One merged time group of an evaluation plan. Symbols: 'a' cycling
// annihilator, 'd' its adjoint, 'P'/'Q' ground-state projectors.
struct Station {
    int group = 0;        // 2*var + (late ? 1 : 0); fixed-time stations sort last
    int var = -1;         // integration variable index, -1 = fixed time
    double offset = 0.0;  // bin shift for var stations, absolute time otherwise
    std::string right;    // applied as X -> X*op, in stored order
    std::string left;     // applied as X -> op*X, in stored order
    bool final_trace = false;
    std::string trace;    // slot-ordered symbols of the closing trace operator

    bool operator==(const Station& o) const {
        return group == o.group && var == o.var && offset == o.offset && right == o.right &&
               left == o.left && final_trace == o.final_trace && trace == o.trace;
    }
};

Mat6 sym_matrix(char c) {
    switch (c) {
        case 'a': return cycling_annihilator();
        case 'd': return cycling_annihilator().adjoint();
        case 'P': return state_projector(G1);
        case 'Q': return state_projector(G2);
    }
    throw PlanError(std::string("unknown operator symbol ") + c);
}

constexpr int kFixedGroup = 1000;

std::vector<Station> compile_pattern(const std::string& letters, double bin_length,
                                     Conditioning cond, double t_project) {
    const int n = static_cast<int>(letters.size());
    const int half = n / 2;
    std::map<int, Station> by_group;
    for (int i = 0; i < n; ++i) {
        const int var = std::min(i, n - 1 - i);
        const bool late = letters[i] == 'L';
        const int group = 2 * var + (late ? 1 : 0);
        Station& st = by_group[group];
        st.group = group;
        st.var = var;
        st.offset = late ? bin_length : 0.0;
        if (i < half)
            st.right.push_back('d');  // ascending slot order lands next to rho first
        else
            st.left.insert(st.left.begin(), 'a');  // descending slot order applies first
    }
    std::vector<Station> stations;
    for (auto& [g, st] : by_group) stations.push_back(st);

    if (cond == Conditioning::None) {
        Station& last = stations.back();
        last.final_trace = true;
        // Slot-ordered product: creation symbols precede annihilation symbols.
        last.trace = last.right + last.left;
        last.right.clear();
        last.left.clear();
    } else {
        Station proj;
        proj.group = kFixedGroup;
        proj.var = -1;
        proj.offset = t_project;
        proj.final_trace = true;
        proj.trace = (cond == Conditioning::ProjectG1) ? "P" : "Q";
        stations.push_back(proj);
    }
    return stations;
}

double station_time(const Station& st, const std::array<double, 3>& tvals) {
    if (st.var < 0) return st.offset;
    return tvals[st.var] + st.offset;
}

Mat6 ops_product(const std::string& syms) {
    Mat6 m = Mat6::Identity();
    for (char c : syms) m = m * sym_matrix(c);
    return m;
}

void apply_station(const Station& st, Mat6& x) {
    for (char c : st.left) x = sym_matrix(c) * x;
    for (char c : st.right) x = x * sym_matrix(c);
}

// ---------------------------------------------------------------------------
// Shared-prefix evaluation tree: patterns with identical leading stations run
// through one set of conditional propagations; sweeps over a new time axis
// sample every sibling in a single propagation pass.

struct Node {
    Station st;
    Mat6 trace_op;  // valid when st.final_trace
    int leaf = -1;  // pattern index for final stations
    std::vector<Node> kids;
};

struct TreeSet {
    std::vector<Node> roots;
    std::vector<std::string> leaf_names;
    int order = 2;
};

void insert_pattern(std::vector<Node>& level, const std::vector<Station>& stations,
                    std::size_t depth, int leaf_id) {
    const Station& st = stations[depth];
    Node* match = nullptr;
    for (Node& n : level)
        if (n.st == st) {
            match = &n;
            break;
        }
    if (!match) {
        Node n;
        n.st = st;
        if (st.final_trace) n.trace_op = ops_product(st.trace);
        level.push_back(std::move(n));
        match = &level.back();
    }
    if (depth + 1 == stations.size()) {
        if (match->leaf >= 0) throw PlanError("duplicate pattern in evaluation set");
        match->leaf = leaf_id;
    } else {
        insert_pattern(match->kids, stations, depth + 1, leaf_id);
    }
}

TreeSet build_tree(const std::vector<std::string>& patterns, double bin_length,
                   Conditioning cond, double t_project) {
    TreeSet set;
    set.leaf_names = patterns;
    for (std::size_t i = 0; i < patterns.size(); ++i) {
        set.order = std::max(set.order, static_cast<int>(patterns[i].size()) / 2);
        auto st = compile_pattern(patterns[i], bin_length, cond, t_project);
        insert_pattern(set.roots, st, 0, static_cast<int>(i));
    }
    return set;
}

struct GridSpec {
    double t0 = 0.0;
    double bin_length = 0.0;
    int n = 0;
    double h() const { return bin_length / (n - 1); }
    double time(int var, int k) const { return t0 + 2.0 * var * bin_length + k * h(); }
    double weight(int k) const { return (k == 0 || k == n - 1) ? 0.5 * h() : h(); }
};

struct Sink {
    std::vector<Cx>* partial = nullptr;                // per leaf, weighted sums
    std::vector<std::vector<Cx>>* grids = nullptr;     // optional per-leaf raw values
    const GridSpec* grid = nullptr;
    int order = 2;

    void record(int leaf, const std::array<int, 3>& idx, double w, Cx value) const {
        (*partial)[leaf] += w * value;
        if (grids && !(*grids)[leaf].empty()) {
            std::size_t flat = 0;
            for (int v = 0; v < order; ++v) flat = flat * grid->n + idx[v];
            (*grids)[leaf][flat] = value;
        }
    }
};

Cx trace_against(const Mat6& m, const Mat6& x) { return (m * x).trace(); }

// Depth-first execution of one subtree from state x at absolute time t.
// n_bound integration variables are already fixed (indices in idx); weights of
// the inner axes accumulate in w.
void exec_children(const std::vector<Node>& kids, const Mat6& x, double t, int n_bound,
                   std::array<int, 3> idx, double w, const Generator& gen,
                   const PropagationSettings& settings, const GridSpec& grid,
                   const Sink& sink) {
    // Children at already-bound or fixed times: one conditional propagation each.
    std::vector<const Node*> binding;
    for (const Node& c : kids) {
        if (c.st.var >= 0 && c.st.var >= n_bound) {
            binding.push_back(&c);
            continue;
        }
        std::array<double, 3> tv{};
        for (int v = 0; v < 3; ++v) tv[v] = idx[v] >= 0 ? grid.time(v, idx[v]) : 0.0;
        const double tc = station_time(c.st, tv);
        Mat6 y = x;
        propagate_raw(y, t, tc, gen, settings);
        if (c.st.final_trace) {
            sink.record(c.leaf, idx, w, trace_against(c.trace_op, y));
        } else {
            apply_station(c.st, y);
            exec_children(c.kids, y, tc, n_bound, idx, w, gen, settings, grid, sink);
        }
    }
    if (binding.empty()) return;

    // Children binding the next axis: one propagation pass samples all of them.
    struct Entry {
        double time;
        const Node* node;
        int k;
    };
    std::vector<Entry> entries;
    entries.reserve(binding.size() * grid.n);
    for (const Node* c : binding)
        for (int k = 0; k < grid.n; ++k)
            entries.push_back({grid.time(c->st.var, k) + c->st.offset, c, k});
    std::sort(entries.begin(), entries.end(),
              [](const Entry& a, const Entry& b) { return a.time < b.time; });
    std::vector<double> times(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) times[i] = entries[i].time;

    Mat6 x0 = x;
    propagate_raw(
        x0, t, times.empty() ? t : times.back(), gen, settings, times,
        [&](std::size_t i, double ts, const Mat6& state) {
            const Entry& e = entries[i];
            std::array<int, 3> idx2 = idx;
            idx2[e.node->st.var] = e.k;
            const double w2 = w * grid.weight(e.k);
            if (e.node->st.final_trace) {
                sink.record(e.node->leaf, idx2, w2, trace_against(e.node->trace_op, state));
            } else {
                Mat6 y = state;
                apply_station(e.node->st, y);
                exec_children(e.node->kids, y, ts, n_bound + 1, idx2, w2, gen, settings, grid,
                              sink);
            }
        });
}

struct TreeResult {
    std::vector<Cx> integrals;
    std::vector<std::vector<Cx>> grids;
};

TreeResult run_tree(const CorrelationContext& ctx, const TreeSet& set, const GridSpec& grid,
                    bool capture_grids) {
    const Generator& gen = ctx.generator();
    const PropagationSettings& settings = ctx.settings();
    const int n = grid.n;
    const std::size_t n_leaves = set.leaf_names.size();

    // Root pass: raw protocol states at every first-station sample time.
    std::vector<double> root_times;
    for (const Node& c : set.roots)
        for (int k = 0; k < n; ++k) root_times.push_back(grid.time(0, k) + c.st.offset);
    std::sort(root_times.begin(), root_times.end());
    root_times.erase(std::unique(root_times.begin(), root_times.end(),
                                 [](double a, double b) { return std::abs(a - b) < 1e-9; }),
                     root_times.end());
    std::vector<Mat6> root_states(root_times.size());
    {
        Mat6 x = initial_superposition();
        propagate_raw(x, 0.0, root_times.back(), gen, settings, root_times,
                      [&](std::size_t i, double, const Mat6& s) { root_states[i] = s; });
    }
    auto root_state_at = [&](double t) -> const Mat6& {
        auto it = std::lower_bound(root_times.begin(), root_times.end(), t - 1e-9);
        return root_states[it - root_times.begin()];
    };

    TreeResult res;
    res.grids.resize(n_leaves);
    if (capture_grids) {
        for (std::size_t l = 0; l < n_leaves; ++l) {
            std::size_t size = 1;
            for (int v = 0; v < static_cast<int>(set.leaf_names[l].size()) / 2; ++v) size *= n;
            res.grids[l].assign(size, Cx{0.0, 0.0});
        }
    }

    std::vector<std::vector<Cx>> per_k0(n, std::vector<Cx>(n_leaves, Cx{0.0, 0.0}));

#pragma omp parallel for schedule(dynamic)
    for (int k0 = 0; k0 < n; ++k0) {
        Sink sink;
        sink.partial = &per_k0[k0];
        sink.grids = capture_grids ? &res.grids : nullptr;
        sink.grid = &grid;
        sink.order = set.order;
        for (const Node& c : set.roots) {
            const double ts = grid.time(0, k0) + c.st.offset;
            std::array<int, 3> idx{k0, -1, -1};
            if (c.st.final_trace) {
                sink.record(c.leaf, idx, 1.0, trace_against(c.trace_op, root_state_at(ts)));
                continue;
            }
            Mat6 y = root_state_at(ts);
            apply_station(c.st, y);
            exec_children(c.kids, y, ts, 1, idx, 1.0, gen, ctx.settings(), grid, sink);
        }
    }

    res.integrals.assign(n_leaves, Cx{0.0, 0.0});
    for (int k0 = 0; k0 < n; ++k0)
        for (std::size_t l = 0; l < n_leaves; ++l)
            res.integrals[l] += grid.weight(k0) * per_k0[k0][l];
    return res;
}

const std::vector<std::string> kG2Population = {"EEEE", "ELLE", "LEEL", "LLLL"};
const std::vector<std::string> kG2Numerators = {"EEEL", "ELLL"};

std::vector<std::string> g3_population_patterns() {
    std::vector<std::string> out;
    for (char i : {'E', 'L'})
        for (char j : {'E', 'L'})
            for (char k : {'E', 'L'})
                out.push_back({i, j, k, k, j, i});
    return out;
}
const std::vector<std::string> kG3Numerators = {"EEEELE", "LELLLL", "EELLLE", "LEEELL"};

// ---------------------------------------------------------------------------
// Fast production path. The innermost time integrals are contracted into
// Hilbert-Schmidt covectors ("tails")
//   G_k(tau) = sum_j w_j E^dag_{tau -> t_j + s_k}[a^dag a],
// computed in a single pass of the adjoint master equation running backward
// in physical time, injecting the quadrature-weighted trace operator at every
// grid time it sweeps through. A pattern integral then reduces to forward
// sweeps dotted against tails, cutting the nested-propagation count per
// pattern from O(n^2) to O(n).

Cx hs_dot(const Mat6& g, const Mat6& x) {  // Tr{G^dag X}
    return (g.conjugate().cwiseProduct(x)).sum();
}

struct TailFamily {
    std::vector<double> taus;  // ascending
    std::vector<Mat6> g;

    const Mat6& at(double tau) const {
        const auto it = std::lower_bound(taus.begin(), taus.end(), tau - 1e-6);
        if (it == taus.end() || std::abs(*it - tau) > 1e-6)
            throw PlanError("tail readout time off the tabulated grid");
        return g[it - taus.begin()];
    }
};

struct Injection {
    double tau;
    double weight;
};

// One backward pass of the adjoint generator over [tau_lo, tau_hi]: start
// from G (usually zero), add weight * m when sweeping down through each
// injection time, apply the adjoints of instantaneous protocol unitaries in
// passing, and record the covector at every readout time.
TailFamily adjoint_tail_sweep(Mat6 g0, double tau_hi, double tau_lo, const Generator& gen,
                              const PropagationSettings& settings,
                              std::vector<Injection> injections, const Mat6& m,
                              std::vector<double> readouts) {
    std::sort(injections.begin(), injections.end(),
              [](const Injection& a, const Injection& b) { return a.tau > b.tau; });
    std::sort(readouts.begin(), readouts.end(), std::greater<>());

    struct Stop {
        double tau;
        int kind;  // 0 event, 1 injection, 2 readout -- applied in this order
        std::size_t idx;
    };
    std::vector<Stop> stops;
    for (std::size_t i = 0; i < injections.size(); ++i)
        if (injections[i].tau >= tau_lo - 1e-9 && injections[i].tau <= tau_hi + 1e-9)
            stops.push_back({injections[i].tau, 1, i});
    for (std::size_t i = 0; i < readouts.size(); ++i)
        stops.push_back({readouts[i], 2, i});
    for (std::size_t i = 0; i < gen.events().size(); ++i) {
        const double te = gen.events()[i].time;
        if (te > tau_lo + 1e-12 && te <= tau_hi + 1e-12) stops.push_back({te, 0, i});
    }
    std::sort(stops.begin(), stops.end(), [](const Stop& a, const Stop& b) {
        if (std::abs(a.tau - b.tau) > 1e-12) return a.tau > b.tau;
        return a.kind < b.kind;
    });

    TailFamily out;
    out.taus.resize(readouts.size());
    out.g.resize(readouts.size());

    const auto rhs = [&gen, tau_hi](const Mat6& y, double s) {
        return gen.rhs_adjoint(y, tau_hi - s);
    };
    const auto cap = [&gen, tau_hi](double s, double c) {
        return gen.max_step_at_backward(tau_hi - s, c);
    };

    Mat6 g = g0;
    double tau = tau_hi;
    for (const Stop& st : stops) {
        if (st.tau < tau - 1e-12)
            integrate_rk45(g, tau_hi - tau, tau_hi - st.tau, rhs, cap, settings);
        tau = st.tau;
        switch (st.kind) {
            case 0: {
                const Mat6& u = gen.events()[st.idx].u;
                g = u.adjoint() * g * u;
                break;
            }
            case 1:
                g += injections[st.idx].weight * m;
                break;
            case 2: {
                const std::size_t pos = readouts.size() - 1 - st.idx;  // ascending order
                out.taus[pos] = tau;
                out.g[pos] = g;
                break;
            }
        }
    }
    return out;
}

struct FastAccum {
    std::map<std::string, std::vector<Cx>> per_k;  // pattern -> partial per t1 index
};

BinnedCorrelations fast_binned(const CorrelationContext& ctx, double t0, int resolution,
                               bool with_g3) {
    const Generator& gen = ctx.generator();
    const PropagationSettings& st = ctx.settings();
    const double T = ctx.bin_length();
    const int n = resolution;
    const GridSpec grid{t0, T, n};

    const Mat6 a = cycling_annihilator();
    const Mat6 ad = a.adjoint();
    const Mat6 m_trace = ad * a;

    std::vector<double> g1(n), g2(n);
    for (int k = 0; k < n; ++k) {
        g1[k] = grid.time(0, k);
        g2[k] = grid.time(1, k);
    }
    auto plus_t = [T](std::vector<double> v) {
        for (double& x : v) x += T;
        return v;
    };
    auto merged = [](const std::vector<double>& a_, const std::vector<double>& b_) {
        std::vector<double> u = a_;
        u.insert(u.end(), b_.begin(), b_.end());
        std::sort(u.begin(), u.end());
        u.erase(std::unique(u.begin(), u.end(),
                            [](double x, double y) { return std::abs(x - y) < 1e-9; }),
                u.end());
        return u;
    };

    // Protocol states at the first-bin sample times.
    const std::vector<double> root_times = merged(g1, plus_t(g1));
    std::vector<Mat6> root_states(root_times.size());
    {
        Mat6 x = initial_superposition();
        propagate_raw(x, 0.0, root_times.back(), gen, st, root_times,
                      [&](std::size_t i, double, const Mat6& s) { root_states[i] = s; });
    }
    auto root_at = [&](double t) -> const Mat6& {
        const auto it = std::lower_bound(root_times.begin(), root_times.end(), t - 1e-9);
        return root_states[it - root_times.begin()];
    };

    auto injections_at = [&](const std::vector<double>& taus) {
        std::vector<Injection> inj(taus.size());
        for (int j = 0; j < static_cast<int>(taus.size()); ++j)
            inj[j] = {taus[j], grid.weight(j)};
        return inj;
    };

    // Second-order tails over the first qubit's bins.
    const std::vector<double> read2 = merged(g1, plus_t(g1));
    TailFamily tail2E = adjoint_tail_sweep(Mat6::Zero(), g2.back(), t0, gen, st,
                                           injections_at(g2), m_trace, read2);
    TailFamily tail2L = adjoint_tail_sweep(Mat6::Zero(), g2.back() + T, t0, gen, st,
                                           injections_at(plus_t(g2)), m_trace, read2);

    BinnedCorrelations out;
    out.t0 = t0;
    out.bin_length = T;
    out.resolution = n;

    std::vector<std::string> g2_names = kG2Population;
    g2_names.insert(g2_names.end(), kG2Numerators.begin(), kG2Numerators.end());
    std::map<std::string, std::vector<Cx>> partial;
    for (const auto& p : g2_names) partial[p].assign(n, Cx{0, 0});

#pragma omp parallel for schedule(dynamic)
    for (int k = 0; k < n; ++k) {
        const Mat6 rho_e = root_at(g1[k]);
        const Mat6 rho_l = root_at(g1[k] + T);
        const Mat6 je = a * rho_e * ad;
        const Mat6 jl = a * rho_l * ad;
        partial.at("EEEE")[k] = hs_dot(tail2E.at(g1[k]), je);
        partial.at("ELLE")[k] = hs_dot(tail2L.at(g1[k]), je);
        partial.at("LEEL")[k] = hs_dot(tail2E.at(g1[k] + T), jl);
        partial.at("LLLL")[k] = hs_dot(tail2L.at(g1[k] + T), jl);
        // numerators: a^dag from the right at t1, a from the left at t1+T
        Mat6 y = rho_e * ad;
        propagate_raw(y, g1[k], g1[k] + T, gen, st);
        y = a * y;
        partial.at("EEEL")[k] = hs_dot(tail2E.at(g1[k] + T), y);
        partial.at("ELLL")[k] = hs_dot(tail2L.at(g1[k] + T), y);
    }
    for (const auto& name : g2_names) {
        Cx v{0, 0};
        for (int k = 0; k < n; ++k) v += grid.weight(k) * partial[name][k];
        out.g2[name] = v;
    }
    for (const auto& p : kG2Population) out.g2_tot += out.g2.at(p);
    if (!with_g3) return out;

    // Third-order tails over the second qubit's bins.
    std::vector<double> g3t(n);
    for (int k = 0; k < n; ++k) g3t[k] = grid.time(2, k);
    const std::vector<double> read3 = merged(g2, plus_t(g2));
    TailFamily tail3E = adjoint_tail_sweep(Mat6::Zero(), g3t.back(), t0 + 2.0 * T, gen, st,
                                           injections_at(g3t), m_trace, read3);
    TailFamily tail3L = adjoint_tail_sweep(Mat6::Zero(), g3t.back() + T, t0 + 2.0 * T, gen, st,
                                           injections_at(plus_t(g3t)), m_trace, read3);

    // Numerator tails N_k(t2) = E^dag_{t2 -> t2+T}[a^dag G_k(t2+T)] a, one
    // span-T adjoint propagation per grid point.
    std::vector<Mat6> tailNE(n), tailNL(n);
#pragma omp parallel for schedule(dynamic)
    for (int m = 0; m < n; ++m) {
        for (auto [tail, dst] : {std::pair{&tail3E, &tailNE}, {&tail3L, &tailNL}}) {
            Mat6 gcov = ad * tail->at(g2[m] + T);
            const double s_hi = g2[m] + T;
            const auto rhs = [&](const Mat6& yy, double s) {
                return gen.rhs_adjoint(yy, s_hi - s);
            };
            const auto cap = [&](double s, double c) {
                return gen.max_step_at_backward(s_hi - s, c);
            };
            // instantaneous unitaries inside (t2, t2+T]
            double tau = s_hi;
            for (auto it = gen.events().rbegin(); it != gen.events().rend(); ++it) {
                if (it->time <= g2[m] + 1e-12 || it->time > s_hi + 1e-12) continue;
                integrate_rk45(gcov, s_hi - tau, s_hi - it->time, rhs, cap, st);
                gcov = it->u.adjoint() * gcov * it->u;
                tau = it->time;
            }
            integrate_rk45(gcov, s_hi - tau, s_hi - g2[m], rhs, cap, st);
            (*dst)[m] = gcov * a;
        }
    }

    const auto g3_names = [] {
        auto v = g3_population_patterns();
        v.insert(v.end(), kG3Numerators.begin(), kG3Numerators.end());
        return v;
    }();
    std::map<std::string, std::vector<Cx>> partial3;
    for (const auto& p : g3_names) partial3[p].assign(n, Cx{0, 0});

#pragma omp parallel for schedule(dynamic)
    for (int k = 0; k < n; ++k) {
        for (char i : {'E', 'L'}) {
            const double t_start = g1[k] + (i == 'L' ? T : 0.0);
            Mat6 x = a * root_at(t_start) * ad;
            const std::vector<double> samples = read3;  // g2 and g2+T, ascending
            const auto find_idx = [](const std::vector<double>& gg, double t) -> int {
                const auto it = std::lower_bound(gg.begin(), gg.end(), t - 1e-6);
                if (it != gg.end() && std::abs(*it - t) < 1e-6)
                    return static_cast<int>(it - gg.begin());
                return -1;
            };
            propagate_raw(
                x, t_start, samples.back(), gen, st, samples,
                [&](std::size_t, double ts, const Mat6& state) {
                    const int me = find_idx(g2, ts);      // j = E sample index
                    const int ml = find_idx(g2, ts - T);  // j = L sample index
                    if (me >= 0) {
                        const Mat6 yj = a * state * ad;
                        const double w = grid.weight(me);
                        partial3.at({i, 'E', 'E', 'E', 'E', i})[k] +=
                            w * hs_dot(tail3E.at(ts), yj);
                        partial3.at({i, 'E', 'L', 'L', 'E', i})[k] +=
                            w * hs_dot(tail3L.at(ts), yj);
                        // numerator patterns bind a^dag (right) at t2; the
                        // op is folded into N, so the raw state is dotted
                        if (i == 'E') {
                            partial3.at("EEEELE")[k] += w * hs_dot(tailNE[me], state);
                            partial3.at("EELLLE")[k] += w * hs_dot(tailNL[me], state);
                        } else {
                            partial3.at("LEEELL")[k] += w * hs_dot(tailNE[me], state);
                            partial3.at("LELLLL")[k] += w * hs_dot(tailNL[me], state);
                        }
                    }
                    if (ml >= 0) {
                        const Mat6 yj = a * state * ad;
                        const double w = grid.weight(ml);
                        partial3.at({i, 'L', 'E', 'E', 'L', i})[k] +=
                            w * hs_dot(tail3E.at(ts), yj);
                        partial3.at({i, 'L', 'L', 'L', 'L', i})[k] +=
                            w * hs_dot(tail3L.at(ts), yj);
                    }
                });
        }
    }
    for (const auto& name : g3_names) {
        Cx v{0, 0};
        for (int k = 0; k < n; ++k) v += grid.weight(k) * partial3[name][k];
        out.g3[name] = v;
    }
    for (const auto& p : g3_population_patterns()) out.g3_tot += out.g3.at(p);
    return out;
}

}  // namespace

OpPattern::OpPattern(std::string s) : letters(std::move(s)) {
    if (letters.size() != 4 && letters.size() != 6)
        throw PlanError("pattern length must be 4 or 6: " + letters);
    for (char c : letters)
        if (c != 'E' && c != 'L') throw PlanError("pattern alphabet is {E, L}: " + letters);
}

CorrelationContext::CorrelationContext(ProtocolPlan plan, SystemConfig cfg,
                                       PropagationSettings settings)
    : plan_(std::move(plan)),
      cfg_(cfg),
      settings_(settings),
      gen_(cfg_, plan_.pulses, plan_.events) {}

Mat6 CorrelationContext::rho_at(double t) const {
    Mat6 x = initial_superposition();
    propagate_raw(x, 0.0, t, gen_, settings_);
    return x;
}

namespace {
Cx eval_point(const CorrelationContext& ctx, const OpPattern& pattern,
              const std::array<double, 3>& tvals) {
    const auto stations =
        compile_pattern(pattern.letters, ctx.bin_length(), Conditioning::None, 0.0);
    for (std::size_t i = 0; i + 1 < stations.size(); ++i) {
        if (station_time(stations[i], tvals) > station_time(stations[i + 1], tvals) + 1e-9)
            throw PlanError("operator times violate the nesting order for pattern " +
                            pattern.letters);
    }
    const double t_first = station_time(stations.front(), tvals);
    if (t_first < -1e-9) throw PlanError("negative operator time for pattern " + pattern.letters);
    Mat6 x = ctx.rho_at(t_first);
    double t = t_first;
    for (std::size_t i = 0; i < stations.size(); ++i) {
        const double ti = station_time(stations[i], tvals);
        if (i > 0) propagate_raw(x, t, ti, ctx.generator(), ctx.settings());
        t = ti;
        if (stations[i].final_trace) return trace_against(ops_product(stations[i].trace), x);
        apply_station(stations[i], x);
    }
    throw PlanError("pattern has no final station: " + pattern.letters);
}
}  // namespace

Cx evaluate_g2(const CorrelationContext& ctx, const OpPattern& pattern, double t1, double t2) {
    if (pattern.order() != 2) throw PlanError("evaluate_g2 expects a length-4 pattern");
    return eval_point(ctx, pattern, {t1, t2, 0.0});
}

Cx evaluate_g3(const CorrelationContext& ctx, const OpPattern& pattern, double t1, double t2,
               double t3) {
    if (pattern.order() != 3) throw PlanError("evaluate_g3 expects a length-6 pattern");
    return eval_point(ctx, pattern, {t1, t2, t3});
}

Cx CorrelationGrid::integrate() const {
    const int order = static_cast<int>(pattern.size()) / 2;
    const int n = resolution;
    const double h = bin_length / (n - 1);
    auto w = [&](int k) { return (k == 0 || k == n - 1) ? 0.5 * h : h; };
    Cx total{0.0, 0.0};
    if (order == 2) {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) total += w(i) * w(j) * values[i * n + j];
    } else {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k)
                    total += w(i) * w(j) * w(k) * values[(i * n + j) * static_cast<std::size_t>(n) + k];
    }
    return total;
}

Cx integrate_bins(const CorrelationContext& ctx, const OpPattern& pattern, double t0,
                  int resolution, CorrelationGrid* capture) {
    if (resolution < 16) throw ConfigError("bin integration needs resolution >= 16");
    TreeSet set = build_tree({pattern.letters}, ctx.bin_length(), Conditioning::None, 0.0);
    GridSpec grid{t0, ctx.bin_length(), resolution};
    TreeResult res = run_tree(ctx, set, grid, capture != nullptr);
    if (capture) {
        capture->pattern = pattern.letters;
        capture->t0 = t0;
        capture->bin_length = ctx.bin_length();
        capture->resolution = resolution;
        capture->values = std::move(res.grids[0]);
    }
    return res.integrals[0];
}

BinnedCorrelations binned_correlations(const CorrelationContext& ctx, double t0, int resolution,
                                       bool with_g3) {
    if (resolution < 16) throw ConfigError("bin integration needs resolution >= 16");
    return fast_binned(ctx, t0, resolution, with_g3);
}

BinnedCorrelations binned_correlations_reference(const CorrelationContext& ctx, double t0,
                                                 int resolution, bool with_g3) {
    if (resolution < 16) throw ConfigError("bin integration needs resolution >= 16");
    std::vector<std::string> patterns = kG2Population;
    for (const auto& p : kG2Numerators) patterns.push_back(p);
    std::size_t n_g2 = patterns.size();
    if (with_g3) {
        for (const auto& p : g3_population_patterns()) patterns.push_back(p);
        for (const auto& p : kG3Numerators) patterns.push_back(p);
    }
    TreeSet set = build_tree(patterns, ctx.bin_length(), Conditioning::None, 0.0);
    GridSpec grid{t0, ctx.bin_length(), resolution};
    TreeResult res = run_tree(ctx, set, grid, false);

    BinnedCorrelations out;
    out.t0 = t0;
    out.bin_length = ctx.bin_length();
    out.resolution = resolution;
    for (std::size_t i = 0; i < patterns.size(); ++i) {
        if (i < n_g2)
            out.g2[patterns[i]] = res.integrals[i];
        else
            out.g3[patterns[i]] = res.integrals[i];
    }
    for (const auto& p : kG2Population) out.g2_tot += out.g2.at(p);
    if (with_g3)
        for (const auto& p : g3_population_patterns()) out.g3_tot += out.g3.at(p);
    return out;
}

Eigen::Matrix4cd two_photon_density_matrix(const CorrelationContext& ctx, int resolution,
                                           Conditioning cond, double t0) {
    if (resolution < 16) throw ConfigError("bin integration needs resolution >= 16");
    const char bases[4][3] = {"EE", "EL", "LE", "LL"};
    std::vector<std::string> patterns;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) {
            // <q1 q2| rho |q1' q2'> = <a^dag_{q1'} a^dag_{q2'} a_{q2} a_{q1}>
            std::string p;
            p += bases[c][0];
            p += bases[c][1];
            p += bases[r][1];
            p += bases[r][0];
            patterns.push_back(p);
        }
    const double t_project = ctx.plan().t_end();
    TreeSet set = build_tree(patterns, ctx.bin_length(), cond, t_project);
    GridSpec grid{t0, ctx.bin_length(), resolution};
    TreeResult res = run_tree(ctx, set, grid, false);

    Eigen::Matrix4cd m;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) m(r, c) = res.integrals[r * 4 + c];
    const double herm = (m - m.adjoint()).cwiseAbs().maxCoeff();
    const double scale = m.cwiseAbs().maxCoeff();
    if (scale > 0.0 && herm / scale > 1e-3)
        throw NumericError("two-photon matrix hermiticity residue " + std::to_string(herm), t0);
    m = 0.5 * (m + m.adjoint().eval());
    const double tr = m.trace().real();
    if (tr < 1e-6) throw DegenerateInputError("two-photon matrix trace vanishes (no emission)");
    return m / tr;
}

void BinnedCorrelations::save_json(const std::string& path) const {
    nlohmann::json j;
    j["t0_ps"] = t0;
    j["bin_length_ps"] = bin_length;
    j["resolution"] = resolution;
    j["quadrature"] = quadrature;
    auto put = [](nlohmann::json& dst, const std::map<std::string, Cx>& src) {
        for (const auto& [k, v] : src) dst[k] = {{"re", v.real()}, {"im", v.imag()}};
    };
    put(j["g2"], g2);
    put(j["g3"], g3);
    j["g2_tot"] = {{"re", g2_tot.real()}, {"im", g2_tot.imag()}};
    j["g3_tot"] = {{"re", g3_tot.real()}, {"im", g3_tot.imag()}};
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open " + path);
    out << j.dump(2) << '\n';
}

void CorrelationGrid::save_json(const std::string& path) const {
    nlohmann::json j;
    j["pattern"] = pattern;
    j["t0_ps"] = t0;
    j["bin_length_ps"] = bin_length;
    j["resolution"] = resolution;
    std::vector<double> re(values.size()), im(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        re[i] = values[i].real();
        im[i] = values[i].imag();
    }
    j["re"] = re;
    j["im"] = im;
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open " + path);
    out << j.dump() << '\n';
}

CorrelationGrid CorrelationGrid::load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    nlohmann::json j;
    in >> j;
    CorrelationGrid g;
    g.pattern = j.at("pattern").get<std::string>();
    g.t0 = j.at("t0_ps").get<double>();
    g.bin_length = j.at("bin_length_ps").get<double>();
    g.resolution = j.at("resolution").get<int>();
    const auto re = j.at("re").get<std::vector<double>>();
    const auto im = j.at("im").get<std::vector<double>>();
    if (re.size() != im.size()) throw ConfigError("corrupt grid file " + path);
    g.values.resize(re.size());
    for (std::size_t i = 0; i < re.size(); ++i) g.values[i] = Cx{re[i], im[i]};
    return g;
}

}  // namespace lcsim
