#include "sons/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "json.hpp"

namespace sons {

namespace {

RobotId largest_sons_brain(const WorldState& w) {
    auto membership = sons_membership(w);
    RobotId best = kNoRobot;
    size_t best_n = 0;
    for (auto& [root, members] : membership) {
        if (members.size() > best_n || (members.size() == best_n && root < best)) {
            best = root;
            best_n = members.size();
        }
    }
    return best;
}

}  // namespace

ErrorSample compute_E(const WorldState& w) {
    ErrorSample s;
    s.step = w.step;
    s.sim_time = w.step * w.cfg.tick_dt;
    auto membership = sons_membership(w);
    s.n_sons = static_cast<int>(membership.size());
    RobotId brain = largest_sons_brain(w);
    if (brain == kNoRobot) return s;
    const RobotEntity* be = w.find_robot(brain);
    Vec3 p1 = be->position();

    double sum = 0.0;
    std::vector<double> values;
    for (const auto& r : w.robots) {
        if (!r.alive) continue;
        if (root_of(w, r.id) != brain) {
            ++s.excluded;
            continue;
        }
        if (r.id == brain) {
            s.e_robot[r.id] = 0.0;
            values.push_back(0.0);
            continue;
        }
        auto f = assigned_target_position(w, r.id);
        if (!f) {
            ++s.excluded;
            continue;
        }
        double actual = distance(r.position(), p1);
        double target = distance(*f, be->position());
        double e = std::fabs(actual - target);
        s.e_robot[r.id] = e;
        values.push_back(e);
        sum += e;
    }
    if (!values.empty()) {
        s.e_mean = sum / values.size();
        double var = 0.0;
        for (double v : values) var += (v - s.e_mean) * (v - s.e_mean);
        var /= values.size();
        s.e_ci = 1.96 * std::sqrt(var / values.size());
    }
    return s;
}

double compute_B(RunLog& log, const WorldState& w, const MetricsConfig& cfg,
                 ErrorSample& sample) {
    double t = w.step * w.cfg.tick_dt;
    double sum = 0.0;
    int n = 0;
    for (const auto& r : w.robots) {
        if (!r.alive) continue;
        ++n;
        auto f = assigned_target_position(w, r.id);
        EpochRecord& ep = log.epochs[r.id];
        if (!f) {
            ep.valid = false;
            sample.b_robot[r.id] = 0.0;
            continue;
        }
        // Key the epoch on the assignment chain: parent id and node ids up
        // to the brain.
        size_t key = 1469598103934665603ULL;
        RobotId v = r.id;
        int hops = 0;
        while (hops++ <= static_cast<int>(w.robots.size())) {
            const RobotEntity* e = w.find_robot(v);
            if (!e || !e->protocol.parent) break;
            RobotId pid = e->protocol.parent->id;
            const RobotEntity* pe = w.find_robot(pid);
            int node = -2;
            if (pe) {
                auto it = pe->protocol.children.find(v);
                if (it != pe->protocol.children.end()) node = it->second.assigned_node;
            }
            key = (key ^ static_cast<size_t>(pid * 1315423911 + node)) * 1099511628211ULL;
            v = pid;
        }
        key = (key ^ static_cast<size_t>(v)) * 1099511628211ULL;  // brain id
        if (!ep.valid || ep.chain_key != key) {
            ep.valid = true;
            ep.chain_key = key;
            ep.t_epoch = w.step;
            ep.p_epoch = r.position();
            ep.f_epoch = *f;
        }
        double kappa = r.type == RobotType::Aerial ? cfg.kappa_aerial : cfg.kappa_ground;
        double bi = distance(ep.p_epoch, ep.f_epoch) - kappa * (t - ep.t_epoch * w.cfg.tick_dt);
        bi = std::max(0.0, bi);
        sample.b_robot[r.id] = bi;
        sum += bi;
    }
    return n > 0 ? sum / n : 0.0;
}

const ErrorSample& RunLog::record(const WorldState& w, const MetricsConfig& cfg) {
    ErrorSample s = compute_E(w);
    s.b_mean = compute_B(*this, w, cfg, s);
    s.ops_max = w.ops_this_step;
    long long in = 0, out = 0;
    for (auto& [rid, b] : w.channel.bytes_in) in += b;
    for (auto& [rid, b] : w.channel.bytes_out) out += b;
    s.bytes_in = in;
    s.bytes_out = out;

    // Convergence: single SoNS over all live robots, topology matches G*,
    // and E - B below eps for a full window.
    bool candidate = false;
    auto membership = sons_membership(w);
    if (membership.size() == 1) {
        RobotId brain = membership.begin()->first;
        size_t alive = 0;
        for (const auto& r : w.robots)
            if (r.alive) ++alive;
        if (membership.begin()->second.size() == alive && topology_matches_target(w, brain) &&
            (s.e_mean - s.b_mean) < cfg.convergence_eps && s.excluded == 0)
            candidate = true;
    }
    if (!convergence_step) {
        window_counter = candidate ? window_counter + 1 : 0;
        if (window_counter >= cfg.convergence_window) convergence_step = w.step;
    }
    s.converged = convergence_step.has_value();
    samples.push_back(std::move(s));
    return samples.back();
}

std::optional<int> detect_convergence(const RunLog& log) { return log.convergence_step; }

std::string run_log_csv(const RunLog& log) {
    std::ostringstream os;
    os << "# scenario=" << log.scenario << " seed=" << log.seed << "\n";
    os << "step,sim_time_s,E_mean,E_ci,B,bytes_in,bytes_out,ops_max,n_sons,converged\n";
    os.precision(9);
    for (const auto& s : log.samples) {
        os << s.step << "," << s.sim_time << "," << s.e_mean << "," << s.e_ci << "," << s.b_mean
           << "," << s.bytes_in << "," << s.bytes_out << "," << s.ops_max << "," << s.n_sons
           << "," << (s.converged ? 1 : 0) << "\n";
    }
    return os.str();
}

std::string run_log_json(const RunLog& log) {
    nlohmann::json j;
    j["scenario"] = log.scenario;
    j["seed"] = log.seed;
    j["schema_version"] = 1;
    if (log.convergence_step)
        j["convergence_step"] = *log.convergence_step;
    else
        j["convergence_step"] = nullptr;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& s : log.samples) {
        nlohmann::json r;
        r["step"] = s.step;
        r["sim_time_s"] = s.sim_time;
        r["E_mean"] = s.e_mean;
        r["E_ci"] = s.e_ci;
        r["B"] = s.b_mean;
        r["bytes_in"] = s.bytes_in;
        r["bytes_out"] = s.bytes_out;
        r["ops_max"] = s.ops_max;
        r["n_sons"] = s.n_sons;
        r["converged"] = s.converged;
        nlohmann::json per;
        for (auto& [rid, e] : s.e_robot) per[std::to_string(rid)] = e;
        r["E_robot"] = per;
        rows.push_back(std::move(r));
    }
    j["samples"] = std::move(rows);
    return j.dump(1);
}

std::vector<std::string> emit_logs(const RunLog& log, const std::string& base,
                                   LogFormat format) {
    std::vector<std::string> written;
    if (format == LogFormat::Csv) {
        std::string path = base + ".csv";
        std::ofstream f(path);
        f << run_log_csv(log);
        written.push_back(path);
    } else {
        std::string path = base + ".json";
        std::ofstream f(path);
        f << run_log_json(log);
        written.push_back(path);
    }
    return written;
}

}  // namespace sons
