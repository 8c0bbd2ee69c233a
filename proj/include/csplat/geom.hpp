// Copyright Contributors to the compactsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <optional>
#include <span>

#include "csplat/common.hpp"

namespace csplat {

template <typename T>
using Vec2 = Eigen::Matrix<T, 2, 1>;
template <typename T>
using Vec3 = Eigen::Matrix<T, 3, 1>;
template <typename T>
using Mat2 = Eigen::Matrix<T, 2, 2>;
template <typename T>
using Mat3 = Eigen::Matrix<T, 3, 3>;

inline constexpr double kNearPlane = 0.01;
inline constexpr int kMaxShDegree = 3;
inline constexpr int kShCoeffs = 16;           // (3 + 1)^2 basis functions
inline constexpr int kShFloats = kShCoeffs * 3;  // RGB per basis function

/// First coefficient index of band l, i.e. l^2.
constexpr int sh_band_begin(int band) { return band * band; }
/// Number of basis functions for bands 0..degree.
constexpr int sh_coeffs_for_degree(int degree) { return (degree + 1) * (degree + 1); }

/// Pinhole camera. Pose maps world to camera coordinates (x right, y down,
/// z forward); pixel (x, y) has its center at (x + 0.5, y + 0.5).
struct Camera {
    double fx = 1, fy = 1, cx = 0, cy = 0;
    int width = 1, height = 1;
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    Eigen::Vector3d center() const { return -rotation.transpose() * translation; }

    void validate() const {
        if (width < 1 || height < 1) throw ContractError("camera: image size must be at least 1x1");
        const double err = (rotation * rotation.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
        if (!(err <= 1e-6)) throw ContractError("camera: rotation is not orthonormal");
        if (!(fx > 0 && fy > 0)) throw ContractError("camera: focal lengths must be positive");
    }

    /// Same pose, intrinsics rescaled to a new image size.
    Camera resized(int w, int h) const {
        Camera c = *this;
        const double sx = static_cast<double>(w) / width, sy = static_cast<double>(h) / height;
        c.fx *= sx;
        c.cx *= sx;
        c.fy *= sy;
        c.cy *= sy;
        c.width = w;
        c.height = h;
        return c;
    }

    /// Camera at `eye` looking at `target`; `up` is the approximate world up.
    static Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, const Eigen::Vector3d& up,
                          double focal, int w, int h) {
        const Eigen::Vector3d forward = (target - eye).normalized();
        Eigen::Vector3d right = forward.cross(up);
        if (right.norm() < 1e-9) right = forward.cross(Eigen::Vector3d::UnitX());
        right.normalize();
        const Eigen::Vector3d down = forward.cross(right);
        Camera c;
        c.rotation.row(0) = right.transpose();
        c.rotation.row(1) = down.transpose();
        c.rotation.row(2) = forward.transpose();
        c.translation = -c.rotation * eye;
        c.fx = c.fy = focal;
        c.width = w;
        c.height = h;
        c.cx = w / 2.0;
        c.cy = h / 2.0;
        return c;
    }
};

/// Rotation matrix of the normalized (w, x, y, z) quaternion.
template <typename T>
Mat3<T> quat_to_rotation(const std::array<T, 4>& q) {
    const T norm = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    if (!(norm > T(1e-12))) throw NumericError("degenerate rotation: zero-norm quaternion");
    const T w = q[0] / norm, x = q[1] / norm, y = q[2] / norm, z = q[3] / norm;
    Mat3<T> r;
    r << T(1) - T(2) * (y * y + z * z), T(2) * (x * y - w * z), T(2) * (x * z + w * y),
        T(2) * (x * y + w * z), T(1) - T(2) * (x * x + z * z), T(2) * (y * z - w * x),
        T(2) * (x * z - w * y), T(2) * (y * z + w * x), T(1) - T(2) * (x * x + y * y);
    return r;
}

/// Pulls dL/dR back to the raw (unnormalized) quaternion.
template <typename T>
std::array<T, 4> quat_to_rotation_vjp(const std::array<T, 4>& q, const Mat3<T>& g) {
    const T norm = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    const T w = q[0] / norm, x = q[1] / norm, y = q[2] / norm, z = q[3] / norm;
    std::array<T, 4> dn{
        T(2) * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1)),
        T(2) * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - T(2) * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) +
                w * g(2, 1) - T(2) * x * g(2, 2)),
        T(2) * (-T(2) * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) +
                z * g(2, 1) - T(2) * y * g(2, 2)),
        T(2) * (-T(2) * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - T(2) * z * g(1, 1) + y * g(1, 2) +
                x * g(2, 0) + y * g(2, 1)),
    };
    // d(q/|q|)/dq = (I - n n^T) / |q|
    const T dot = dn[0] * w + dn[1] * x + dn[2] * y + dn[3] * z;
    const std::array<T, 4> n{w, x, y, z};
    std::array<T, 4> out{};
    for (int i = 0; i < 4; ++i) out[i] = (dn[i] - dot * n[i]) / norm;
    return out;
}

/// Sigma = R S S^T R^T for per-axis standard deviations `scale`.
template <typename T>
Mat3<T> covariance_from_scale(const Vec3<T>& scale, const std::array<T, 4>& q) {
    const Mat3<T> m = quat_to_rotation(q) * scale.asDiagonal();
    return m * m.transpose();
}

template <typename T>
Mat3<T> build_covariance(const Vec3<T>& log_scale, const std::array<T, 4>& q) {
    return covariance_from_scale<T>(log_scale.array().exp().matrix(), q);
}

template <typename T>
struct CovarianceGrad {
    Vec3<T> d_scale;
    std::array<T, 4> d_rotation;
};

/// Vector-Jacobian product of covariance_from_scale for a symmetric dL/dSigma.
template <typename T>
CovarianceGrad<T> covariance_from_scale_vjp(const Vec3<T>& scale, const std::array<T, 4>& q, const Mat3<T>& d_sigma) {
    const Mat3<T> r = quat_to_rotation(q);
    const Mat3<T> m = r * scale.asDiagonal();
    const Mat3<T> d_m = T(2) * d_sigma * m;
    const Mat3<T> rt_dm = r.transpose() * d_m;
    CovarianceGrad<T> out;
    out.d_scale = rt_dm.diagonal();
    out.d_rotation = quat_to_rotation_vjp<T>(q, Mat3<T>(d_m * scale.asDiagonal()));
    return out;
}

template <typename T>
struct Projection {
    Vec2<T> mean;  // pixels
    Mat2<T> cov;   // Sigma' + sI
    T depth;
};

/// EWA projection of a 3D Gaussian. Returns nullopt when culled by the near plane.
template <typename T>
std::optional<Projection<T>> project_gaussian(const Vec3<T>& mean, const Mat3<T>& cov3, const Camera& cam, T lowpass) {
    const Mat3<T> w = cam.rotation.cast<T>();
    const Vec3<T> t = w * mean + cam.translation.cast<T>();
    if (t.z() <= T(kNearPlane)) return std::nullopt;
    const T fx = T(cam.fx), fy = T(cam.fy);
    const T inv_z = T(1) / t.z();
    Eigen::Matrix<T, 2, 3> j;
    j << fx * inv_z, T(0), -fx * t.x() * inv_z * inv_z, T(0), fy * inv_z, -fy * t.y() * inv_z * inv_z;
    const Eigen::Matrix<T, 2, 3> jw = j * w;
    Projection<T> p;
    p.cov = jw * cov3 * jw.transpose();
    p.cov(0, 0) += lowpass;
    p.cov(1, 1) += lowpass;
    p.mean = Vec2<T>(fx * t.x() * inv_z + T(cam.cx), fy * t.y() * inv_z + T(cam.cy));
    p.depth = t.z();
    return p;
}

template <typename T>
struct ProjectionGrad {
    Vec3<T> d_mean;
    Mat3<T> d_cov3;
};

/// Pulls gradients on the projected mean and (symmetric) 2D covariance back
/// to the world-space mean and 3D covariance.
template <typename T>
ProjectionGrad<T> project_gaussian_vjp(const Vec3<T>& mean, const Mat3<T>& cov3, const Camera& cam,
                                       const Vec2<T>& d_mean2, const Mat2<T>& d_cov2) {
    const Mat3<T> w = cam.rotation.cast<T>();
    const Vec3<T> t = w * mean + cam.translation.cast<T>();
    const T fx = T(cam.fx), fy = T(cam.fy);
    const T iz = T(1) / t.z(), iz2 = iz * iz, iz3 = iz2 * iz;
    Eigen::Matrix<T, 2, 3> j;
    j << fx * iz, T(0), -fx * t.x() * iz2, T(0), fy * iz, -fy * t.y() * iz2;
    const Eigen::Matrix<T, 2, 3> jw = j * w;

    ProjectionGrad<T> out;
    out.d_cov3 = jw.transpose() * d_cov2 * jw;
    const Eigen::Matrix<T, 2, 3> d_jw = T(2) * d_cov2 * jw * cov3;
    const Eigen::Matrix<T, 2, 3> d_j = d_jw * w.transpose();

    Vec3<T> d_t = Vec3<T>::Zero();
    d_t.x() += d_mean2.x() * fx * iz - d_j(0, 2) * fx * iz2;
    d_t.y() += d_mean2.y() * fy * iz - d_j(1, 2) * fy * iz2;
    d_t.z() += -d_mean2.x() * fx * t.x() * iz2 - d_mean2.y() * fy * t.y() * iz2 - d_j(0, 0) * fx * iz2 +
               d_j(0, 2) * T(2) * fx * t.x() * iz3 - d_j(1, 1) * fy * iz2 + d_j(1, 2) * T(2) * fy * t.y() * iz3;
    out.d_mean = w.transpose() * d_t;
    return out;
}

/// exp(-1/2 d^T Sigma'^{-1} d) with d = x - mean.
template <typename T>
T eval_gaussian_2d(const Vec2<T>& mean, const Mat2<T>& cov, const Vec2<T>& x) {
    const T det = cov.determinant();
    if (!(std::abs(det) > T(1e-30))) throw NumericError("singular 2D covariance");
    const Mat2<T> conic = cov.inverse();
    const Vec2<T> d = x - mean;
    return std::exp(T(-0.5) * d.dot(conic * d));
}

// Real spherical-harmonic constants (3DGS sign convention).
inline constexpr double kShC0 = 0.28209479177387814;
inline constexpr double kShC1 = 0.4886025119029199;
inline constexpr std::array<double, 5> kShC2{1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                                             -1.0925484305920792, 0.5462742152960396};
inline constexpr std::array<double, 7> kShC3{-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                                             0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                                             -0.5900435899266435};

/// Basis values for all 16 functions at a unit direction.
template <typename T>
std::array<T, kShCoeffs> sh_basis(const Vec3<T>& dir) {
    const T x = dir.x(), y = dir.y(), z = dir.z();
    const T xx = x * x, yy = y * y, zz = z * z;
    return {T(kShC0),
            T(-kShC1) * y,
            T(kShC1) * z,
            T(-kShC1) * x,
            T(kShC2[0]) * x * y,
            T(kShC2[1]) * y * z,
            T(kShC2[2]) * (T(2) * zz - xx - yy),
            T(kShC2[3]) * x * z,
            T(kShC2[4]) * (xx - yy),
            T(kShC3[0]) * y * (T(3) * xx - yy),
            T(kShC3[1]) * x * y * z,
            T(kShC3[2]) * y * (T(4) * zz - xx - yy),
            T(kShC3[3]) * z * (T(2) * zz - T(3) * xx - T(3) * yy),
            T(kShC3[4]) * x * (T(4) * zz - xx - yy),
            T(kShC3[5]) * z * (xx - yy),
            T(kShC3[6]) * x * (xx - T(3) * yy)};
}

/// Gradient of every basis function with respect to the (unnormalized-free) direction components.
template <typename T>
std::array<Vec3<T>, kShCoeffs> sh_basis_grad(const Vec3<T>& dir) {
    const T x = dir.x(), y = dir.y(), z = dir.z();
    const T xx = x * x, yy = y * y, zz = z * z;
    const T c1 = T(kShC1);
    std::array<Vec3<T>, kShCoeffs> g;
    g[0] = Vec3<T>::Zero();
    g[1] = Vec3<T>(0, -c1, 0);
    g[2] = Vec3<T>(0, 0, c1);
    g[3] = Vec3<T>(-c1, 0, 0);
    g[4] = T(kShC2[0]) * Vec3<T>(y, x, 0);
    g[5] = T(kShC2[1]) * Vec3<T>(0, z, y);
    g[6] = T(kShC2[2]) * Vec3<T>(-2 * x, -2 * y, 4 * z);
    g[7] = T(kShC2[3]) * Vec3<T>(z, 0, x);
    g[8] = T(kShC2[4]) * Vec3<T>(2 * x, -2 * y, 0);
    g[9] = T(kShC3[0]) * Vec3<T>(6 * x * y, 3 * xx - 3 * yy, 0);
    g[10] = T(kShC3[1]) * Vec3<T>(y * z, x * z, x * y);
    g[11] = T(kShC3[2]) * Vec3<T>(-2 * x * y, 4 * zz - xx - 3 * yy, 8 * y * z);
    g[12] = T(kShC3[3]) * Vec3<T>(-6 * x * z, -6 * y * z, 6 * zz - 3 * xx - 3 * yy);
    g[13] = T(kShC3[4]) * Vec3<T>(4 * zz - 3 * xx - yy, -2 * x * y, 8 * x * z);
    g[14] = T(kShC3[5]) * Vec3<T>(2 * x * z, -2 * y * z, xx - yy);
    g[15] = T(kShC3[6]) * Vec3<T>(3 * xx - 3 * yy, -6 * x * y, 0);
    return g;
}

/// Band index of basis function k.
constexpr int sh_band_of(int k) { return k < 1 ? 0 : (k < 4 ? 1 : (k < 9 ? 2 : 3)); }

/// Per-band multipliers for bands 1..3 (band 0 is never masked).
template <typename T>
using BandMasks = std::array<T, 3>;

template <typename T>
struct ShColor {
    Vec3<T> rgb;
    std::array<bool, 3> clamped{};  // channel was clamped at 0
};

/// View-dependent color: sum of bands 0..degree of (mask_l * c^l) . Y^l(dir), plus 0.5,
/// clamped below at 0. `sh` holds 16 RGB triples, basis-function major.
template <typename T>
ShColor<T> sh_to_color(std::span<const T> sh, const Vec3<T>& dir, int degree, const BandMasks<T>& masks) {
    const auto basis = sh_basis(dir);
    const int n = sh_coeffs_for_degree(degree);
    Vec3<T> c(T(0.5), T(0.5), T(0.5));
    for (int k = 0; k < n; ++k) {
        const int band = sh_band_of(k);
        const T m = band == 0 ? T(1) : masks[band - 1];
        if (m == T(0)) continue;
        const T b = basis[k] * m;
        c.x() += b * sh[3 * k];
        c.y() += b * sh[3 * k + 1];
        c.z() += b * sh[3 * k + 2];
    }
    ShColor<T> out;
    for (int ch = 0; ch < 3; ++ch) {
        out.clamped[ch] = c[ch] < T(0);
        out.rgb[ch] = out.clamped[ch] ? T(0) : c[ch];
    }
    return out;
}

template <typename T>
struct ShColorGrad {
    Vec3<T> d_dir = Vec3<T>::Zero();
    std::array<T, 3> d_band_mask{};
};

/// Accumulates dL/dsh into `d_sh` (band 0 always; higher bands only when
/// `higher_bands` is set) and returns gradients for the direction and band masks.
template <typename T>
ShColorGrad<T> sh_to_color_vjp(std::span<const T> sh, const Vec3<T>& dir, int degree, const BandMasks<T>& masks,
                               const std::array<bool, 3>& clamped, const Vec3<T>& d_rgb, std::span<T> d_sh,
                               bool higher_bands) {
    Vec3<T> g = d_rgb;
    for (int ch = 0; ch < 3; ++ch)
        if (clamped[ch]) g[ch] = T(0);
    const auto basis = sh_basis(dir);
    const auto basis_grad = sh_basis_grad(dir);
    const int n = sh_coeffs_for_degree(degree);
    ShColorGrad<T> out;
    for (int k = 0; k < n; ++k) {
        const int band = sh_band_of(k);
        const T m = band == 0 ? T(1) : masks[band - 1];
        const T dot = sh[3 * k] * g.x() + sh[3 * k + 1] * g.y() + sh[3 * k + 2] * g.z();
        if (band > 0) out.d_band_mask[band - 1] += basis[k] * dot;
        if (m == T(0)) continue;
        if (band == 0 || higher_bands) {
            d_sh[3 * k] += basis[k] * m * g.x();
            d_sh[3 * k + 1] += basis[k] * m * g.y();
            d_sh[3 * k + 2] += basis[k] * m * g.z();
        }
        out.d_dir += basis_grad[k] * (m * dot);
    }
    return out;
}

}  // namespace csplat
