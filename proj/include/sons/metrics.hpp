// Quantitative instruments: actuation error E, lower bound B,
// communication and computation accounting, convergence detection, and
// log emission (CSV and JSON mirrors).

#ifndef SONS_METRICS_HPP
#define SONS_METRICS_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sons/world.hpp"

namespace sons {

struct MetricsConfig {
    double convergence_eps = 0.1;  // m on E - B
    int convergence_window = 25;   // ticks (5 s)
    double kappa_aerial = 2.0;     // max speeds used by the bound
    double kappa_ground = 1.0;
};

struct ErrorSample {
    int step = 0;
    double sim_time = 0.0;
    double e_mean = 0.0;
    double e_ci = 0.0;  // 95% normal CI half-width over robots
    double b_mean = 0.0;
    std::map<RobotId, double> e_robot;
    std::map<RobotId, double> b_robot;
    int excluded = 0;  // robots outside the measured SoNS or unallocated
    long long bytes_in = 0;
    long long bytes_out = 0;
    long long ops_max = 0;
    int n_sons = 0;
    bool converged = false;
};

/// Per-robot target epoch for the lower bound: stamped whenever the
/// robot's assignment chain changes.
struct EpochRecord {
    int t_epoch = 0;
    Vec3 p_epoch;
    Vec3 f_epoch;
    size_t chain_key = 0;
    bool valid = false;
};

struct RunLog {
    std::vector<ErrorSample> samples;
    std::map<RobotId, EpochRecord> epochs;
    std::optional<int> convergence_step;
    int window_counter = 0;
    uint64_t seed = 0;
    std::string scenario;

    /// Measure the world and append one sample (E, B, bytes, ops,
    /// convergence bookkeeping).
    const ErrorSample& record(const WorldState& w, const MetricsConfig& cfg);
};

/// Position tracking error per Eq. E_i = | ||p_i-p_1|| - ||f_i-f_1|| |,
/// measured over the largest SoNS; the brain contributes zero.
ErrorSample compute_E(const WorldState& w);

/// Lower bound B_i = ||p_eps - f_eps|| - kappa_i (t - t_eps), clamped at
/// zero, averaged over robots. Epochs restamp on assignment changes.
double compute_B(RunLog& log, const WorldState& w, const MetricsConfig& cfg,
                 ErrorSample& sample);

/// First step at which the topology matches G* and E - B stays below eps
/// for `window` consecutive ticks.
std::optional<int> detect_convergence(const RunLog& log);

enum class LogFormat : uint8_t { Csv, Json };

/// Write `<base>.csv` or `<base>.json`. The seed lands in the header.
/// Returns the paths written.
std::vector<std::string> emit_logs(const RunLog& log, const std::string& base, LogFormat format);
std::string run_log_csv(const RunLog& log);
std::string run_log_json(const RunLog& log);

}  // namespace sons

#endif  // SONS_METRICS_HPP
