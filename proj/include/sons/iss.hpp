// Leader-follower tracking analysis: reactive pair simulation, ISS error
// bounds and gain estimates, formation-primitive composition, P_ISS, and
// gain propagation over n-robot formations.

#ifndef SONS_ISS_HPP
#define SONS_ISS_HPP

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace sons {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline Vec2 operator+(const Vec2& a, const Vec2& b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(const Vec2& a, const Vec2& b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, const Vec2& v) { return {s * v.x, s * v.y}; }
inline double norm(const Vec2& v) { return std::sqrt(v.x * v.x + v.y * v.y); }

/// Diagonal gain matrix K = diag(k1, k2) with the derived Lyapunov
/// constants c1 = min, c2 = max, a = 2, c3 = 2 c1 (1 - theta).
struct PairGains {
    double k1 = 5.0;
    double k2 = 5.0;
    double theta = 0.5;  // in (0, 1)

    double c1() const { return std::min(k1, k2); }
    double c2() const { return std::max(k1, k2); }
    static constexpr double a = 2.0;
    double c3() const { return 2.0 * c1() * (1.0 - theta); }

    /// Transient gain estimate (c2/c1)^(1/a).
    double beta_hat() const { return std::pow(c2() / c1(), 1.0 / a); }
    /// Asymptotic gain estimate c2/(c1 theta).
    double gamma_hat() const { return c2() / (c1() * theta); }

    bool valid() const { return k1 > 0 && k2 > 0 && theta > 0 && theta < 1; }
};

/// Leader->follower edges with in-degree <= 1: n nodes, n-1 edges.
/// Node 0 is the first leader; parent[0] = -1. gains[i] belongs to the
/// edge (parent[i] -> i) and is ignored for the root.
struct FormationGraph {
    std::vector<int> parent;
    std::vector<PairGains> gains;

    int size() const { return static_cast<int>(parent.size()); }
    bool valid() const;  // single root at 0, acyclic, parents precede checks

    static FormationGraph pair(const PairGains& g);
    static FormationGraph cascade(int n, const PairGains& g);   // chain of n robots
    static FormationGraph parallel(int n, const PairGains& g);  // root plus n-1 direct followers
};

struct PairSimResult {
    std::vector<double> t;
    std::vector<double> error_norm;
    double final_error = 0.0;
};

/// Integrate the single-integrator pair under the reactive law
/// e' = u_leader - K e, or the feed-forward variant e' = -K e.
/// Positions and displacement are 2D; dt fixed at 1e-3 (RK4).
PairSimResult simulate_pair(const Vec2& p_leader0, const Vec2& p_follower0, const Vec2& d_star,
                            const PairGains& gains, const Vec2& u_leader, bool feed_forward,
                            double horizon);

/// ISS upper bound (c2/c1)^(1/a) ||e0|| exp(-c3 t/(c2 a)) + c2/(c1 theta) u_sup.
double error_bound(double t, double e0_norm, double u_sup, const PairGains& gains);

struct GainTotals {
    std::vector<double> beta;   // per-node subtree-composite transient estimates
    std::vector<double> gamma;  // per-node subtree-composite asymptotic estimates
};

/// Iterative gain propagation: starting from per-edge raw estimates,
/// process vertices from the terminal nodes inward (highest index first,
/// nodes must be ordered so children follow parents), updating
///   beta_v  += (a_v.beta)(a_v.gamma) beta_v + (a_v.beta)^2
///   gamma_v += (a_v.beta)(a_v.gamma) gamma_v + (a_v.gamma) gamma_v
/// where a_v selects v's children. Runs n-1 iterations (the root's raw
/// estimates are never touched). Rejects cyclic input.
std::optional<GainTotals> cascade_gains(const FormationGraph& formation);

/// Path-composite asymptotic gain coefficient from the root to `node`,
/// built by cascading pairs along the root path: extending a path whose
/// gain is g by edge (v->w) gives (1 + 2 beta_w) gamma_w (2 g + 2) + g.
double path_gamma(const FormationGraph& formation, int node);

/// Formation ISS performance measure 1/(1 + gamma(1)), where gamma(1) is
/// the parallel sum over root branches of the cascade-composite gains.
/// theta overrides every edge's theta.
double p_iss(const FormationGraph& formation, double theta);

struct FormationCheckRow {
    int node = 0;
    int depth = 0;          // root = 0
    double gamma_path = 0;  // composite gain of the root path to this node
    double bound_at_vmax = 0;
    bool exceeds_envelope = false;
};

struct FormationCheckReport {
    std::vector<FormationCheckRow> rows;
    std::vector<double> per_depth_gamma;  // max gamma per depth
    double p_iss_value = 1.0;
    int flagged = 0;
};

/// Per-depth gain totals for a formation plus flags for pairs whose
/// asymptotic bound at leader speed v_max exceeds the safety envelope.
FormationCheckReport sons_formation_check(const FormationGraph& formation, double v_max,
                                          double envelope);

/// Time series + bound CSV for external plotting.
std::string pair_series_csv(const PairSimResult& sim, double e0_norm, double u_sup,
                            const PairGains& gains);

}  // namespace sons

#endif  // SONS_ISS_HPP
