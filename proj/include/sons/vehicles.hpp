// Vehicle models and low-level control: the quadrotor (nonlinear NED
// model, cascaded P/PID controllers, motor mixing and lag, sensor
// models, flight stabilization) and the differential-drive ground robot
// with its intermediary motion frame.
//
// The world frame is z-up with the ground plane at z = 0. The quadrotor
// model itself is NED (z down); QuadVehicle converts at the boundary via
// the rigid map (x, y, z) <-> (x, -y, -z), yaw <-> -yaw.

#ifndef SONS_VEHICLES_HPP
#define SONS_VEHICLES_HPP

#include <array>
#include <optional>
#include <random>
#include <vector>

#include "sons/geometry.hpp"

namespace sons {

inline constexpr double kGravity = 9.81;

struct QuadParams {
    double mass = 1.0;                  // kg
    double jx = 0.01, jy = 0.01, jz = 0.02;  // kg m^2, diagonal inertia
    double lx = 0.12, ly = 0.12;        // moment arms, m
    double k_thrust = 1e-5;             // thrust coefficient
    double k_moment = 1e-6;             // yaw moment coefficient
    double t_rot = 0.05;                // motor time constant, s
    double max_tilt = 20.0 * kPi / 180.0;
};

/// 12-state vector, ordering [x y z phi theta psi xd yd zd phid thetad psid].
using QuadStateVec = std::array<double, 12>;

struct ControlInputs {
    double u1 = 0.0;  // total thrust, N (>= 0)
    double u2 = 0.0;  // roll moment, N m
    double u3 = 0.0;  // pitch moment, N m
    double u4 = 0.0;  // yaw moment, N m
};

struct QuadrotorState {
    QuadStateVec x{};                    // inertial-frame states
    std::array<double, 4> motor_speed{};  // rad/s

    Vec3 position() const { return {x[0], x[1], x[2]}; }
    EulerAngles attitude() const { return {x[3], x[4], x[5]}; }
    Vec3 velocity() const { return {x[6], x[7], x[8]}; }
    Vec3 angular_rate() const { return {x[9], x[10], x[11]}; }
};

/// Nonlinear derivatives Xdot = f(X) + sum_i a_i(X) U_i.
QuadStateVec quad_derivatives(const QuadStateVec& x, const ControlInputs& u,
                              const QuadParams& p);

struct LinearModel {
    double a[12][12] = {};
    double b[12][4] = {};
};

/// Closed-form Jacobian linearization at hover trim U = (mg, 0, 0, 0).
LinearModel linearize_at_trim(const QuadParams& p);

struct MotorCommand {
    std::array<double, 4> omega_sq{};  // squared motor speeds
    bool saturated = false;            // negative squares clamped to zero
};

/// Inverse mixing U -> Omega^2 (clamping negatives) and forward mixing
/// Omega^2 -> U.
MotorCommand motor_mixing(const ControlInputs& u, const QuadParams& p);
ControlInputs motor_forces(const std::array<double, 4>& omega_sq, const QuadParams& p);

/// Exact first-order lag response over dt toward the desired speed.
double motor_lag(double omega_desired, double omega, double dt, double t_rot);

struct PidGains {
    double kp = 0.0, ki = 0.0, kd = 0.0;
};

struct QuadControllerGains {
    // Velocity loops (position controller second stage).
    PidGains vx{2.2, 0.4, 0.0};
    PidGains vy{2.2, 0.4, 0.0};
    PidGains vz{8.0, 2.0, 0.0};
    // Angle P stage and rate PID stage of the attitude controller.
    double angle_p_roll = 12.0;
    double angle_p_pitch = 12.0;
    double angle_p_yaw = 6.0;
    PidGains rate_roll{0.12, 0.02, 0.002};
    PidGains rate_pitch{0.12, 0.02, 0.002};
    PidGains rate_yaw{0.10, 0.01, 0.002};
};

struct QuadControllerState {
    Vec3 vel_integral;
    Vec3 rate_integral;
};

struct PositionControlOutput {
    double u1 = 0.0;
    double phi_d = 0.0;
    double theta_d = 0.0;
};

/// Velocity-tracking stage: altitude PID producing thrust (with mg
/// feedforward) plus desired roll/pitch from the xy acceleration demands.
/// Angle commands clamp to +/-20 degrees.
PositionControlOutput position_controller(const Vec3& v_ref, const QuadrotorState& s,
                                          const QuadParams& p, const QuadControllerGains& g,
                                          QuadControllerState& cs, double dt);

/// Cascaded P (angle) -> PID (rate) attitude stage.
ControlInputs attitude_controller(double phi_d, double theta_d, double psi_rate_d,
                                  const QuadrotorState& s, const QuadControllerGains& g,
                                  QuadControllerState& cs, double dt);

/// One 0.2 s protocol tick of closed-loop flight: 10 RK4 substeps at
/// dt = 0.02 s tracking the commanded NED-frame velocity and yaw rate.
void quad_fly_tick(QuadrotorState& s, QuadControllerState& cs, const Vec3& v_cmd_world,
                   double yaw_rate_cmd, const QuadParams& p, const QuadControllerGains& g,
                   double tick_dt);

/// World-frame (z-up) wrapper around the NED quadrotor stack.
struct QuadVehicle {
    QuadrotorState state;
    QuadControllerState controller;
    QuadParams params;
    QuadControllerGains gains;

    void set_pose(const Vec3& position_world, double yaw_world);
    Vec3 position_world() const;
    Vec3 velocity_world() const;
    double yaw_world() const;
    /// v command and yaw rate given in the z-up world frame.
    void fly_tick(const Vec3& v_cmd_world_up, double yaw_rate_world, double tick_dt);
    /// Start at hover: motors spun up to trim, zero attitude.
    void trim_motors();
};

struct ImuParams {
    double gyro_noise = 0.0;       // rad/s white noise sigma
    double gyro_bias_walk = 0.0;   // rad/s per sqrt(step)
    double accel_noise = 0.0;      // m/s^2
    double accel_bias_walk = 0.0;
    double mag_noise = 0.0;
    double mag_inclination = 1.13446;  // rad, field dip angle
};

struct ImuState {
    Vec3 gyro_bias;
    Vec3 accel_bias;
};

struct ImuReading {
    Vec3 gyro;       // body rates
    Vec3 accel;      // body-frame specific force
    Vec3 mag;        // body-frame field
    double yaw_from_mag = 0.0;
};

/// Gyro/accelerometer with slowly-varying bias plus white noise, and a
/// magnetometer with the yaw reconstruction formula.
ImuReading sensor_models(const QuadrotorState& s, const ImuParams& p, ImuState& bias,
                         std::mt19937_64& rng);

struct LandmarkTrack {
    int id = 0;
    Vec3 initial_displacement;
    UnitQuat initial_orientation;
    Vec3 prev_delta;
    bool has_prev = false;
};

struct LandmarkObservation {
    int id = 0;
    bool is_object = false;  // objects take priority over ground robots
    Vec3 displacement;
    UnitQuat orientation;
};

struct StabilizationResult {
    Vec3 v;
    Vec3 omega;
    std::optional<int> override_robot;  // ground robot commandeered as landmark
};

/// Landmark-based drift correction of the protocol's velocity targets.
/// Without landmarks the targets pass through unchanged.
StabilizationResult flight_stabilization(const std::vector<LandmarkObservation>& landmarks,
                                         std::vector<LandmarkTrack>& tracks, const Vec3& v_star,
                                         const Vec3& omega_star, double tick_dt);

struct RelPose {
    Vec3 d;
    UnitQuat q;
};

/// Quad-quad relative pose through a shared ground-robot sighting:
/// both quads see robot j; quad i reconstructs quad k.
RelPose virtual_sense_quad_quad(const RelPose& quad_i_sees_j, const RelPose& quad_k_sees_j);

/// Ground robot's view of the aerial robot that senses it (inversion).
RelPose virtual_sense_invert(const RelPose& quad_sees_ground);

/// Ground robot's view of a third party relayed by a sensed aerial robot.
RelPose virtual_sense_relay(const RelPose& ground_sees_quad, const RelPose& quad_sees_other);

struct GroundRobotState {
    Vec3 position;       // z fixed at 0
    double body_yaw = 0.0;
    UnitQuat q_frame;    // rotation of the intermediary frame F w.r.t. current body
    double v_left = 0.0;
    double v_right = 0.0;
};

struct DiffDriveResult {
    double v_left = 0.0;
    double v_right = 0.0;
    bool clamped = false;
};

struct GroundParams {
    double axle = 0.1;        // m
    double wheel_max = 1.4;   // m/s hardware ceiling
};

/// Translate a frame-F velocity command into wheel speeds and advance the
/// body pose plus the intermediary-frame quaternion over dt.
DiffDriveResult diff_drive(const Vec3& v_cmd_frame, double omega_cmd_z, GroundRobotState& s,
                           const GroundParams& p, double dt);

}  // namespace sons

#endif  // SONS_VEHICLES_HPP
