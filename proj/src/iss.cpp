#include "sons/iss.hpp"

#include <algorithm>
#include <functional>
#include <sstream>

namespace sons {

bool FormationGraph::valid() const {
    if (parent.empty()) return false;
    if (parent[0] != -1) return false;
    if (gains.size() != parent.size()) return false;
    for (int i = 1; i < size(); ++i) {
        if (parent[i] < 0 || parent[i] >= size() || parent[i] == i) return false;
    }
    // Walking up from any node must reach the root (catches cycles).
    for (int i = 0; i < size(); ++i) {
        int v = i, steps = 0;
        while (v != 0) {
            v = parent[v];
            if (v < 0 || ++steps > size()) return false;
        }
    }
    return true;
}

FormationGraph FormationGraph::pair(const PairGains& g) {
    FormationGraph f;
    f.parent = {-1, 0};
    f.gains = {g, g};
    return f;
}

FormationGraph FormationGraph::cascade(int n, const PairGains& g) {
    FormationGraph f;
    for (int i = 0; i < n; ++i) {
        f.parent.push_back(i - 1);
        f.gains.push_back(g);
    }
    return f;
}

FormationGraph FormationGraph::parallel(int n, const PairGains& g) {
    FormationGraph f;
    for (int i = 0; i < n; ++i) {
        f.parent.push_back(i == 0 ? -1 : 0);
        f.gains.push_back(g);
    }
    return f;
}

PairSimResult simulate_pair(const Vec2& p_leader0, const Vec2& p_follower0, const Vec2& d_star,
                            const PairGains& gains, const Vec2& u_leader, bool feed_forward,
                            double horizon) {
    // Error kinematics: e = (p_i - p_j) - d*, e' = u_i - K e (reactive)
    // or e' = -K e with feed-forward. Integrated directly in error space.
    const double dt = 1e-3;
    PairSimResult out;
    Vec2 e = (p_leader0 - p_follower0) - d_star;
    auto deriv = [&](const Vec2& err) -> Vec2 {
        Vec2 ke{gains.k1 * err.x, gains.k2 * err.y};
        if (feed_forward) return {-ke.x, -ke.y};
        return {u_leader.x - ke.x, u_leader.y - ke.y};
    };
    int steps = static_cast<int>(horizon / dt);
    out.t.reserve(steps + 1);
    out.error_norm.reserve(steps + 1);
    out.t.push_back(0.0);
    out.error_norm.push_back(norm(e));
    for (int s = 1; s <= steps; ++s) {
        Vec2 k1 = deriv(e);
        Vec2 k2 = deriv(e + 0.5 * dt * k1);
        Vec2 k3 = deriv(e + 0.5 * dt * k2);
        Vec2 k4 = deriv(e + dt * k3);
        e = e + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out.t.push_back(s * dt);
        out.error_norm.push_back(norm(e));
    }
    out.final_error = out.error_norm.back();
    return out;
}

double error_bound(double t, double e0_norm, double u_sup, const PairGains& g) {
    double transient = g.beta_hat() * e0_norm * std::exp(-g.c3() * t / (g.c2() * PairGains::a));
    return transient + g.gamma_hat() * u_sup;
}

std::optional<GainTotals> cascade_gains(const FormationGraph& f) {
    if (!f.valid()) return std::nullopt;
    int n = f.size();
    GainTotals g;
    g.beta.resize(n);
    g.gamma.resize(n);
    for (int i = 0; i < n; ++i) {
        g.beta[i] = f.gains[i].beta_hat();
        g.gamma[i] = f.gains[i].gamma_hat();
    }
    // n-1 iterations from the last vertex down to vertex 1; children carry
    // higher indices than their parents in all graphs built here.
    for (int k = 0; k < n - 1; ++k) {
        int v = n - 1 - k;
        double ab = 0.0, ag = 0.0;  // row of the adjacency times current vectors
        for (int c = 0; c < n; ++c) {
            if (f.parent[c] == v) {
                ab += g.beta[c];
                ag += g.gamma[c];
            }
        }
        if (ab == 0.0 && ag == 0.0) continue;  // terminal node
        double cb = ab * ag * g.beta[v] + ab * ab;
        double cg = ab * ag * g.gamma[v] + ag * g.gamma[v];
        g.beta[v] += cb;
        g.gamma[v] += cg;
    }
    return g;
}

double path_gamma(const FormationGraph& f, int node) {
    if (node <= 0 || node >= f.size()) return 0.0;
    // Collect the root path, then cascade downward.
    std::vector<int> path;
    for (int v = node; v != 0; v = f.parent[v]) path.push_back(v);
    std::reverse(path.begin(), path.end());
    double g = f.gains[path.front()].gamma_hat();
    for (size_t i = 1; i < path.size(); ++i) {
        const PairGains& lower = f.gains[path[i]];
        g = (1.0 + 2.0 * lower.beta_hat()) * lower.gamma_hat() * (2.0 * g + 2.0) + g;
    }
    return g;
}

namespace {

struct Composite {
    double beta;
    double gamma;
};

// Cascade composition of an upper pair with the composite system below
// it, using the estimate forms of the composite beta/gamma expressions
// evaluated with linear class-K gains; branches at a node add.
Composite compose_subtree(const FormationGraph& f, double theta, int v) {
    Composite total{0.0, 0.0};
    bool any = false;
    for (int c = 1; c < f.size(); ++c) {
        if (f.parent[c] != v) continue;
        PairGains pg = f.gains[c];
        pg.theta = theta;
        double bu = pg.beta_hat();
        double gu = pg.gamma_hat();
        Composite branch{bu, gu};
        Composite below = compose_subtree(f, theta, c);
        if (below.beta > 0.0 || below.gamma > 0.0) {
            double bl = below.beta, gl = below.gamma;
            branch.gamma = (1.0 + 2.0 * bl) * gl * (2.0 * gu + 2.0) + gu;
            branch.beta = 2.0 * bl * bl + 4.0 * bl * gl * bu + 2.0 * gl * bu + bu;
        }
        total.beta += branch.beta;
        total.gamma += branch.gamma;
        any = true;
    }
    if (!any) return {0.0, 0.0};
    return total;
}

}  // namespace

double p_iss(const FormationGraph& f, double theta) {
    if (f.size() <= 1) return 1.0;
    Composite c = compose_subtree(f, theta, 0);
    return 1.0 / (1.0 + c.gamma);
}

FormationCheckReport sons_formation_check(const FormationGraph& f, double v_max,
                                          double envelope) {
    FormationCheckReport rep;
    if (f.size() == 0) return rep;
    std::vector<int> depth(f.size(), 0);
    int max_depth = 0;
    for (int i = 1; i < f.size(); ++i) {
        depth[i] = depth[f.parent[i]] + 1;
        max_depth = std::max(max_depth, depth[i]);
    }
    rep.per_depth_gamma.assign(max_depth + 1, 0.0);
    for (int i = 1; i < f.size(); ++i) {
        FormationCheckRow row;
        row.node = i;
        row.depth = depth[i];
        row.gamma_path = path_gamma(f, i);
        row.bound_at_vmax = row.gamma_path * v_max;
        row.exceeds_envelope = row.bound_at_vmax > envelope;
        if (row.exceeds_envelope) ++rep.flagged;
        rep.per_depth_gamma[depth[i]] =
            std::max(rep.per_depth_gamma[depth[i]], row.gamma_path);
        rep.rows.push_back(row);
    }
    rep.p_iss_value = p_iss(f, f.size() > 1 ? f.gains[1].theta : 0.5);
    return rep;
}

std::string pair_series_csv(const PairSimResult& sim, double e0_norm, double u_sup,
                            const PairGains& gains) {
    std::ostringstream os;
    os << "t,error_norm,bound\n";
    os.precision(10);
    for (size_t i = 0; i < sim.t.size(); ++i) {
        os << sim.t[i] << "," << sim.error_norm[i] << ","
           << error_bound(sim.t[i], e0_norm, u_sup, gains) << "\n";
    }
    return os.str();
}

}  // namespace sons
