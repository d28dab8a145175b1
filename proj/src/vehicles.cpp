#include "sons/vehicles.hpp"

#include <algorithm>
#include <cmath>

namespace sons {

QuadStateVec quad_derivatives(const QuadStateVec& x, const ControlInputs& u,
                              const QuadParams& p) {
    double phi = x[3], theta = x[4], psi = x[5];
    double phid = x[9], thetad = x[10], psid = x[11];
    double sf = std::sin(phi), cf = std::cos(phi);
    double st = std::sin(theta), ct = std::cos(theta);
    double sp = std::sin(psi), cp = std::cos(psi);

    QuadStateVec dx{};
    dx[0] = x[6];
    dx[1] = x[7];
    dx[2] = x[8];
    dx[3] = phid;
    dx[4] = thetad;
    dx[5] = psid;
    // Inertial accelerations: gravity along +z (NED), thrust along -body z.
    dx[6] = -(u.u1 / p.mass) * (sf * sp + cf * cp * st);
    dx[7] = -(u.u1 / p.mass) * (-cp * sf + cf * sp * st);
    dx[8] = kGravity - (u.u1 / p.mass) * cf * ct;
    // Rotational accelerations with the small-angle rate identity.
    dx[9] = psid * thetad * (p.jy - p.jz) / p.jx + u.u2 / p.jx;
    dx[10] = phid * psid * (p.jz - p.jx) / p.jy + u.u3 / p.jy;
    dx[11] = phid * thetad * (p.jx - p.jy) / p.jz + u.u4 / p.jz;
    return dx;
}

LinearModel linearize_at_trim(const QuadParams& p) {
    LinearModel m;
    for (int i = 0; i < 6; ++i) m.a[i][6 + i] = 1.0;
    m.a[6][4] = -kGravity;  // theta couples into xdd
    m.a[7][3] = kGravity;   // phi couples into ydd
    m.b[8][0] = -1.0 / p.mass;  // thrust opposes +z (down)
    m.b[9][1] = 1.0 / p.jx;
    m.b[10][2] = 1.0 / p.jy;
    m.b[11][3] = 1.0 / p.jz;
    return m;
}

namespace {

constexpr double kSin45 = 0.70710678118654752;

}  // namespace

ControlInputs motor_forces(const std::array<double, 4>& w2, const QuadParams& p) {
    ControlInputs u;
    u.u1 = p.k_thrust * (w2[0] + w2[1] + w2[2] + w2[3]);
    u.u2 = p.lx * p.k_thrust * kSin45 * (-w2[0] - w2[1] + w2[2] + w2[3]);
    u.u3 = p.ly * p.k_thrust * kSin45 * (w2[0] - w2[1] - w2[2] + w2[3]);
    u.u4 = p.k_moment * (w2[0] - w2[1] + w2[2] - w2[3]);
    return u;
}

MotorCommand motor_mixing(const ControlInputs& u, const QuadParams& p) {
    MotorCommand cmd;
    double t = u.u1 / (4.0 * p.k_thrust);
    double r = u.u2 / (4.0 * p.lx * p.k_thrust * kSin45);
    double q = u.u3 / (4.0 * p.ly * p.k_thrust * kSin45);
    double y = u.u4 / (4.0 * p.k_moment);
    cmd.omega_sq[0] = t - r + q + y;
    cmd.omega_sq[1] = t - r - q - y;
    cmd.omega_sq[2] = t + r - q + y;
    cmd.omega_sq[3] = t + r + q - y;
    for (auto& w : cmd.omega_sq) {
        if (w < 0.0) {
            w = 0.0;
            cmd.saturated = true;
        }
    }
    return cmd;
}

double motor_lag(double omega_desired, double omega, double dt, double t_rot) {
    return omega_desired + (omega - omega_desired) * std::exp(-dt / t_rot);
}

namespace {

double pid(const PidGains& g, double error, double measured_rate, double& integral, double dt) {
    integral += error * dt;
    return g.kp * error + g.ki * integral - g.kd * measured_rate;
}

}  // namespace

PositionControlOutput position_controller(const Vec3& v_ref, const QuadrotorState& s,
                                          const QuadParams& p, const QuadControllerGains& g,
                                          QuadControllerState& cs, double dt) {
    PositionControlOutput out;
    Vec3 v = s.velocity();
    double psi = s.x[5];

    double e_vz = v_ref.z - v.z;
    cs.vel_integral.z += e_vz * dt;
    // NED: positive thrust pushes toward -z, so climb demands more U1.
    out.u1 = p.mass * kGravity -
             (g.vz.kp * e_vz + g.vz.ki * cs.vel_integral.z - g.vz.kd * v.z) * p.mass;
    out.u1 = std::max(0.0, out.u1);

    double e_vx = v_ref.x - v.x;
    double e_vy = v_ref.y - v.y;
    double xdd = pid(g.vx, e_vx, 0.0, cs.vel_integral.x, dt);
    double ydd = pid(g.vy, e_vy, 0.0, cs.vel_integral.y, dt);

    double u1_safe = std::max(out.u1, 0.1 * p.mass * kGravity);
    out.phi_d = (p.mass / u1_safe) * (-xdd * std::sin(psi) + ydd * std::cos(psi));
    out.theta_d = (p.mass / u1_safe) * (-xdd * std::cos(psi) - ydd * std::sin(psi));
    out.phi_d = std::clamp(out.phi_d, -p.max_tilt, p.max_tilt);
    out.theta_d = std::clamp(out.theta_d, -p.max_tilt, p.max_tilt);
    return out;
}

ControlInputs attitude_controller(double phi_d, double theta_d, double psi_rate_d,
                                  const QuadrotorState& s, const QuadControllerGains& g,
                                  QuadControllerState& cs, double dt) {
    ControlInputs u;
    double phi = s.x[3], theta = s.x[4];
    double p_rate = s.x[9], q_rate = s.x[10], r_rate = s.x[11];

    double wphi_d = g.angle_p_roll * (phi_d - phi);
    double wtheta_d = g.angle_p_pitch * (theta_d - theta);
    double wpsi_d = g.angle_p_yaw * 0.0 + psi_rate_d;

    u.u2 = pid(g.rate_roll, wphi_d - p_rate, p_rate, cs.rate_integral.x, dt);
    u.u3 = pid(g.rate_pitch, wtheta_d - q_rate, q_rate, cs.rate_integral.y, dt);
    u.u4 = pid(g.rate_yaw, wpsi_d - r_rate, r_rate, cs.rate_integral.z, dt);
    return u;
}

void quad_fly_tick(QuadrotorState& s, QuadControllerState& cs, const Vec3& v_cmd_world,
                   double yaw_rate_cmd, const QuadParams& p, const QuadControllerGains& g,
                   double tick_dt) {
    const int substeps = 10;
    double dt = tick_dt / substeps;
    for (int k = 0; k < substeps; ++k) {
        PositionControlOutput pos = position_controller(v_cmd_world, s, p, g, cs, dt);
        ControlInputs u_des = attitude_controller(pos.phi_d, pos.theta_d, yaw_rate_cmd, s, g,
                                                  cs, dt);
        u_des.u1 = pos.u1;
        MotorCommand cmd = motor_mixing(u_des, p);
        for (int i = 0; i < 4; ++i) {
            double w_des = std::sqrt(std::max(0.0, cmd.omega_sq[i]));
            s.motor_speed[i] = motor_lag(w_des, s.motor_speed[i], dt, p.t_rot);
        }
        std::array<double, 4> w2;
        for (int i = 0; i < 4; ++i) w2[i] = s.motor_speed[i] * s.motor_speed[i];
        ControlInputs u = motor_forces(w2, p);

        auto f = [&](const QuadStateVec& x) { return quad_derivatives(x, u, p); };
        QuadStateVec k1 = f(s.x);
        QuadStateVec x2, x3, x4;
        for (int i = 0; i < 12; ++i) x2[i] = s.x[i] + 0.5 * dt * k1[i];
        QuadStateVec k2 = f(x2);
        for (int i = 0; i < 12; ++i) x3[i] = s.x[i] + 0.5 * dt * k2[i];
        QuadStateVec k3 = f(x3);
        for (int i = 0; i < 12; ++i) x4[i] = s.x[i] + dt * k3[i];
        QuadStateVec k4 = f(x4);
        for (int i = 0; i < 12; ++i)
            s.x[i] += (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

void QuadVehicle::set_pose(const Vec3& position_world, double yaw_world) {
    state.x.fill(0.0);
    state.x[0] = position_world.x;
    state.x[1] = -position_world.y;
    state.x[2] = -position_world.z;
    state.x[5] = -yaw_world;
}

Vec3 QuadVehicle::position_world() const {
    return {state.x[0], -state.x[1], -state.x[2]};
}

Vec3 QuadVehicle::velocity_world() const {
    return {state.x[6], -state.x[7], -state.x[8]};
}

double QuadVehicle::yaw_world() const { return -state.x[5]; }

void QuadVehicle::trim_motors() {
    double hover_w = std::sqrt(params.mass * kGravity / (4.0 * params.k_thrust));
    state.motor_speed = {hover_w, hover_w, hover_w, hover_w};
}

void QuadVehicle::fly_tick(const Vec3& v_cmd_world_up, double yaw_rate_world, double tick_dt) {
    Vec3 v_ned{v_cmd_world_up.x, -v_cmd_world_up.y, -v_cmd_world_up.z};
    quad_fly_tick(state, controller, v_ned, -yaw_rate_world, params, gains, tick_dt);
}

ImuReading sensor_models(const QuadrotorState& s, const ImuParams& p, ImuState& bias,
                         std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto walk = [&](Vec3& b, double sigma) {
        b.x += sigma * gauss(rng);
        b.y += sigma * gauss(rng);
        b.z += sigma * gauss(rng);
    };
    walk(bias.gyro_bias, p.gyro_bias_walk);
    walk(bias.accel_bias, p.accel_bias_walk);

    ImuReading r;
    EulerAngles e = s.attitude();
    Mat3 r_ib = transpose(zyx_rotation_matrix(e));  // inertial -> body

    Vec3 rates = s.angular_rate();
    r.gyro = rates + bias.gyro_bias +
             Vec3{p.gyro_noise * gauss(rng), p.gyro_noise * gauss(rng), p.gyro_noise * gauss(rng)};

    Vec3 gravity_body = r_ib * Vec3{0, 0, kGravity};
    r.accel = gravity_body + bias.accel_bias +
              Vec3{p.accel_noise * gauss(rng), p.accel_noise * gauss(rng),
                   p.accel_noise * gauss(rng)};

    Vec3 field_inertial{std::cos(p.mag_inclination), 0.0, std::sin(p.mag_inclination)};
    r.mag = r_ib * field_inertial +
            Vec3{p.mag_noise * gauss(rng), p.mag_noise * gauss(rng), p.mag_noise * gauss(rng)};

    // Yaw reconstruction from the tilt-compensated field components.
    double cf = std::cos(e.roll), sf = std::sin(e.roll);
    double ct = std::cos(e.pitch), st = std::sin(e.pitch);
    double hx = r.mag.x * ct + (r.mag.y * sf + r.mag.z * cf) * st;
    double hy = r.mag.y * cf - r.mag.z * sf;
    r.yaw_from_mag = std::atan2(-hy, hx);
    return r;
}

StabilizationResult flight_stabilization(const std::vector<LandmarkObservation>& landmarks,
                                         std::vector<LandmarkTrack>& tracks, const Vec3& v_star,
                                         const Vec3& omega_star, double tick_dt) {
    StabilizationResult out{v_star, omega_star, std::nullopt};
    if (landmarks.empty()) return out;

    bool have_objects = false;
    for (const auto& l : landmarks)
        if (l.is_object) have_objects = true;

    Vec3 drift_sum;
    int drift_count = 0;
    for (const auto& l : landmarks) {
        if (have_objects && !l.is_object) continue;
        LandmarkTrack* track = nullptr;
        for (auto& t : tracks)
            if (t.id == l.id) track = &t;
        if (!track) {
            tracks.push_back({l.id, l.displacement, l.orientation, Vec3{}, false});
            track = &tracks.back();
        }
        // Landmark displacement relative to where it should appear if
        // only the commanded motion had occurred since first sighting.
        Vec3 expected = track->initial_displacement - v_star * tick_dt;
        Vec3 delta = l.displacement - expected;
        track->initial_displacement = l.displacement;  // incremental update
        drift_sum += delta;
        ++drift_count;
        if (!have_objects) {
            out.override_robot = l.id;
            break;  // a single ground robot serves as the landmark
        }
    }
    if (drift_count == 0) return out;
    // A landmark shifted by delta beyond the commanded motion means the
    // vehicle drifted by -delta; steer by delta to cancel it.
    Vec3 drift = drift_sum / static_cast<double>(drift_count);
    out.v = v_star + drift / tick_dt;
    return out;
}

RelPose virtual_sense_quad_quad(const RelPose& i_sees_j, const RelPose& k_sees_j) {
    // d_ik = d_ij + RT(q_ij, RT(q_kj^-1, -d_kj)); q_ik = H(q_ij, q_kj^-1).
    RelPose out;
    UnitQuat q_jk = quat_inverse(k_sees_j.q);
    Vec3 d_jk = rotate_vector(q_jk, -k_sees_j.d);
    out.d = i_sees_j.d + rotate_vector(i_sees_j.q, d_jk);
    out.q = hamilton(i_sees_j.q, q_jk);
    return out;
}

RelPose virtual_sense_invert(const RelPose& quad_sees_ground) {
    RelPose out;
    out.q = quat_inverse(quad_sees_ground.q);
    out.d = rotate_vector(out.q, -quad_sees_ground.d);
    return out;
}

RelPose virtual_sense_relay(const RelPose& ground_sees_quad, const RelPose& quad_sees_other) {
    RelPose out;
    out.d = ground_sees_quad.d + rotate_vector(ground_sees_quad.q, quad_sees_other.d);
    out.q = hamilton(ground_sees_quad.q, quad_sees_other.q);
    return out;
}

DiffDriveResult diff_drive(const Vec3& v_cmd_frame, double omega_cmd_z, GroundRobotState& s,
                           const GroundParams& p, double dt) {
    DiffDriveResult out;
    bool first = true;
    // The wheel loop runs much faster than the protocol tick; substep so
    // the turn-toward-command settles instead of overshooting.
    const int substeps = 10;
    double h = dt / substeps;
    for (int k = 0; k < substeps; ++k) {
        Vec3 v_body = rotate_vector(quat_inverse(s.q_frame), v_cmd_frame);
        double vx = v_body.x, vy = v_body.y;  // v_z unused, altitude is fixed

        double theta = 0.0;
        if (std::fabs(vx) > 1e-12 || std::fabs(vy) > 1e-12) theta = std::atan2(vy, vx);
        double s_theta = std::sin(theta);
        double vl = vx - vy * s_theta;
        double vr = vx + vy * s_theta;

        double peak = std::max(std::fabs(vl), std::fabs(vr));
        bool clamped = false;
        if (peak > p.wheel_max) {
            double scale = p.wheel_max / peak;
            vl *= scale;
            vr *= scale;
            clamped = true;
        }
        if (first) {
            out.v_left = vl;
            out.v_right = vr;
            out.clamped = clamped;
            first = false;
        } else if (clamped) {
            out.clamped = true;
        }

        // Integrate the wheel commands: spin from the wheel differential,
        // translation along the body x-axis.
        double spin = (vr - vl) / p.axle * h;
        double forward = 0.5 * (vl + vr) * h;
        double mid_yaw = s.body_yaw + 0.5 * spin;
        s.body_yaw += spin;
        s.position.x += forward * std::cos(mid_yaw);
        s.position.y += forward * std::sin(mid_yaw);
        s.position.z = 0.0;

        // F stays fixed while the body turns, then F itself rotates by
        // the commanded omega.
        s.q_frame = hamilton(UnitQuat::yaw(-spin), s.q_frame);
        s.q_frame = hamilton(s.q_frame, UnitQuat::yaw(omega_cmd_z * h));
        s.v_left = vl;
        s.v_right = vr;
    }
    return out;
}

}  // namespace sons
