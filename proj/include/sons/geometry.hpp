// 3D vector and unit-quaternion algebra for relative-frame transforms.
// Conventions: quaternions stored (w,x,y,z), Hamilton product, active
// rotations. Every constructor and product renormalizes, so unit norm
// holds to 1e-9 over long runs.

#ifndef SONS_GEOMETRY_HPP
#define SONS_GEOMETRY_HPP

#include <cmath>

namespace sons {

inline constexpr double kPi = 3.14159265358979323846;

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    Vec3() = default;
    Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

    static Vec3 zero() { return {}; }

    double norm() const { return std::sqrt(x * x + y * y + z * z); }
    double norm_sq() const { return x * x + y * y + z * z; }
};

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator-(const Vec3& a) { return {-a.x, -a.y, -a.z}; }
inline Vec3 operator*(double s, const Vec3& v) { return {s * v.x, s * v.y, s * v.z}; }
inline Vec3 operator*(const Vec3& v, double s) { return s * v; }
inline Vec3 operator/(const Vec3& v, double s) { return {v.x / s, v.y / s, v.z / s}; }
inline Vec3& operator+=(Vec3& a, const Vec3& b) { a.x += b.x; a.y += b.y; a.z += b.z; return a; }
inline Vec3& operator-=(Vec3& a, const Vec3& b) { a.x -= b.x; a.y -= b.y; a.z -= b.z; return a; }

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline Vec3 normalized(const Vec3& v) {
    double n = v.norm();
    if (n < 1e-15) return Vec3::zero();
    return v / n;
}

inline double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

inline bool finite(const Vec3& v) {
    return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

/// Roll/pitch/yaw in radians, zyx convention. Pitch must stay inside
/// (-pi/2, pi/2) wherever the rotation matrix is evaluated.
struct EulerAngles {
    double roll = 0.0;
    double pitch = 0.0;
    double yaw = 0.0;
};

inline bool gimbal_proximate(const EulerAngles& e) {
    return std::fabs(e.pitch) > kPi / 2.0 - 1e-3;
}

struct UnitQuat {
    double w = 1.0;
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    UnitQuat() = default;
    UnitQuat(double w_, double x_, double y_, double z_) : w(w_), x(x_), y(y_), z(z_) {
        normalize();
    }

    static UnitQuat identity() { return {}; }

    static UnitQuat from_axis_angle(const Vec3& axis, double angle) {
        Vec3 a = normalized(axis);
        double h = 0.5 * angle;
        double s = std::sin(h);
        return {std::cos(h), a.x * s, a.y * s, a.z * s};
    }

    // zyx composition: yaw about z, then pitch about y, then roll about x.
    static UnitQuat from_euler(const EulerAngles& e) {
        double cr = std::cos(e.roll * 0.5), sr = std::sin(e.roll * 0.5);
        double cp = std::cos(e.pitch * 0.5), sp = std::sin(e.pitch * 0.5);
        double cy = std::cos(e.yaw * 0.5), sy = std::sin(e.yaw * 0.5);
        return {cr * cp * cy + sr * sp * sy,
                sr * cp * cy - cr * sp * sy,
                cr * sp * cy + sr * cp * sy,
                cr * cp * sy - sr * sp * cy};
    }

    static UnitQuat yaw(double angle) { return from_axis_angle({0, 0, 1}, angle); }

    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

    void normalize() {
        double n = norm();
        if (n < 1e-15) {
            w = 1.0; x = y = z = 0.0;
            return;
        }
        w /= n; x /= n; y /= n; z /= n;
    }
};

inline UnitQuat quat_inverse(const UnitQuat& q) { return {q.w, -q.x, -q.y, -q.z}; }

/// Hamilton product a*b (applies b first, then a); renormalized.
inline UnitQuat hamilton(const UnitQuat& a, const UnitQuat& b) {
    return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

/// Rotate v by q (Euler-Rodrigues): v + 2w(u x v) + 2(u x (u x v)).
inline Vec3 rotate_vector(const UnitQuat& q, const Vec3& v) {
    Vec3 u{q.x, q.y, q.z};
    Vec3 uv = cross(u, v);
    Vec3 uuv = cross(u, uv);
    return v + 2.0 * (q.w * uv + uuv);
}

inline double quat_yaw(const UnitQuat& q) {
    double siny = 2.0 * (q.w * q.z + q.x * q.y);
    double cosy = 1.0 - 2.0 * (q.y * q.y + q.z * q.z);
    return std::atan2(siny, cosy);
}

inline EulerAngles to_euler(const UnitQuat& q) {
    EulerAngles e;
    double sinr = 2.0 * (q.w * q.x + q.y * q.z);
    double cosr = 1.0 - 2.0 * (q.x * q.x + q.y * q.y);
    e.roll = std::atan2(sinr, cosr);
    double sinp = 2.0 * (q.w * q.y - q.z * q.x);
    if (std::fabs(sinp) >= 1.0)
        e.pitch = std::copysign(kPi / 2.0, sinp);
    else
        e.pitch = std::asin(sinp);
    e.yaw = quat_yaw(q);
    return e;
}

struct Mat3 {
    double m[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};

    static Mat3 identity() { return {}; }

    double* operator[](int r) { return m[r]; }
    const double* operator[](int r) const { return m[r]; }
};

inline Vec3 operator*(const Mat3& R, const Vec3& v) {
    return {R[0][0] * v.x + R[0][1] * v.y + R[0][2] * v.z,
            R[1][0] * v.x + R[1][1] * v.y + R[1][2] * v.z,
            R[2][0] * v.x + R[2][1] * v.y + R[2][2] * v.z};
}

inline Mat3 transpose(const Mat3& R) {
    Mat3 t;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) t[i][j] = R[j][i];
    return t;
}

/// Body-to-inertial zyx rotation matrix Rz(yaw)Ry(pitch)Rx(roll).
inline Mat3 zyx_rotation_matrix(const EulerAngles& e) {
    double cf = std::cos(e.roll), sf = std::sin(e.roll);
    double ct = std::cos(e.pitch), st = std::sin(e.pitch);
    double cp = std::cos(e.yaw), sp = std::sin(e.yaw);
    Mat3 R;
    R[0][0] = cp * ct; R[0][1] = cp * st * sf - sp * cf; R[0][2] = cf * st * cp + sf * sp;
    R[1][0] = sp * ct; R[1][1] = sp * st * sf + cp * cf; R[1][2] = cf * st * sp - sf * cp;
    R[2][0] = -st;     R[2][1] = sf * ct;                R[2][2] = cf * ct;
    return R;
}

}  // namespace sons

#endif  // SONS_GEOMETRY_HPP
