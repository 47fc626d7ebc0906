#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "nrsfm/autodiff.hpp"
#include "nrsfm/errors.hpp"
#include "nrsfm/matrix.hpp"
#include "nrsfm/rng.hpp"

namespace nrsfm {

struct Rotation {
    Matrix r; // 3x3

    static Rotation identity() { return Rotation{Matrix::identity(3)}; }

    // r^T r = I and det = +1, within tol (Frobenius / absolute).
    bool valid(double tol = 1e-6) const {
        if (r.rows() != 3 || r.cols() != 3) return false;
        Matrix rtr(3, 3);
        add_multiply_tn(rtr, r, r);
        for (int i = 0; i < 3; ++i) rtr(i, i) -= 1.0;
        return frobenius_norm(rtr) <= tol && std::fabs(determinant(r) - 1.0) <= tol;
    }

    static double determinant(const Matrix& m) {
        return m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) -
               m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
               m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
    }
};

struct Camera {
    enum class Mode { Orthographic };

    Matrix pi; // 2x3
    Mode mode = Mode::Orthographic;

    static Camera orthographic() {
        Matrix pi(2, 3);
        pi(0, 0) = 1.0;
        pi(1, 1) = 1.0;
        return Camera{std::move(pi), Mode::Orthographic};
    }

    // Pi is user-suppliable but must match the orthographic template exactly.
    static Camera with_projection(Matrix pi, Mode mode = Mode::Orthographic) {
        if (pi.rows() != 2 || pi.cols() != 3)
            throw UsageError("Camera: projection must be 2x3, got " + pi.shape_str());
        if (mode == Mode::Orthographic) {
            const Camera ref = orthographic();
            for (int i = 0; i < 6; ++i)
                if (pi.data()[i] != ref.pi.data()[i])
                    throw UsageError("Camera: orthographic mode requires pi = [I_2 | 0]");
        }
        return Camera{std::move(pi), mode};
    }
};

inline Matrix skew(const Matrix& omega) {
    if (omega.rows() != 3 || omega.cols() != 1)
        throw UsageError("skew: want 3x1, got " + omega.shape_str());
    return detail::skew3(omega.data()[0], omega.data()[1], omega.data()[2]);
}

// Axis-angle to rotation matrix, exact at zero via series coefficients.
inline Rotation rodrigues(const Matrix& omega) {
    if (omega.rows() != 3 || omega.cols() != 1)
        throw UsageError("rodrigues: want 3x1 axis-angle, got " + omega.shape_str());
    if (!omega.all_finite()) throw UsageError("rodrigues: non-finite axis-angle");
    return Rotation{detail::rodrigues_value(omega)};
}

// Graph version: differentiable with respect to omega.
inline Var rodrigues(Tape& tape, Var omega) {
    (void)tape;
    return rodrigues_op(omega);
}

inline Matrix project(const Camera& cam, const Rotation& rot, const Matrix& shape) {
    if (shape.rows() != 3)
        throw UsageError("project: shape must have 3 rows, got " + shape.shape_str());
    if (shape.cols() < 1) throw UsageError("project: shape has no points");
    return multiply(cam.pi, multiply(rot.r, shape));
}

inline Var project(Tape& tape, const Camera& cam, Var rot, Var shape) {
    if (shape.value().rows() != 3)
        throw UsageError("project: shape must have 3 rows, got " + shape.value().shape_str());
    if (shape.value().cols() < 1) throw UsageError("project: shape has no points");
    Var pi = tape.constant(cam.pi);
    return matmul(pi, matmul(rot, shape));
}

struct SvdResult {
    Matrix u;                  // m x n, orthonormal columns where sigma > 0
    std::vector<double> sigma; // descending, length n
    Matrix v;                  // n x n orthogonal
};

// One-sided Jacobi SVD of an m x n matrix with m >= n: rotates column pairs
// until all are mutually orthogonal. Plain forward-only routine; adequate
// here because no gradient ever flows through an SVD.
inline SvdResult jacobi_svd(const Matrix& a) {
    if (a.rows() < a.cols()) {
        SvdResult t = jacobi_svd(transpose(a));
        return SvdResult{std::move(t.v), std::move(t.sigma), std::move(t.u)};
    }
    const int m = a.rows(), n = a.cols();
    Matrix w = a;
    Matrix v = Matrix::identity(n);

    const double tol = 1e-13;
    for (int sweep = 0; sweep < 60; ++sweep) {
        bool rotated = false;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (int i = 0; i < m; ++i) {
                    app += w(i, p) * w(i, p);
                    aqq += w(i, q) * w(i, q);
                    apq += w(i, p) * w(i, q);
                }
                if (std::fabs(apq) <= tol * std::sqrt(app * aqq) || apq == 0.0) continue;
                rotated = true;
                const double zeta = (aqq - app) / (2.0 * apq);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (int i = 0; i < m; ++i) {
                    const double wp = w(i, p), wq = w(i, q);
                    w(i, p) = c * wp - s * wq;
                    w(i, q) = s * wp + c * wq;
                }
                for (int i = 0; i < n; ++i) {
                    const double vp = v(i, p), vq = v(i, q);
                    v(i, p) = c * vp - s * vq;
                    v(i, q) = s * vp + c * vq;
                }
            }
        }
        if (!rotated) break;
    }

    std::vector<double> sigma(n);
    for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int i = 0; i < m; ++i) s += w(i, j) * w(i, j);
        sigma[j] = std::sqrt(s);
    }

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int x, int y) { return sigma[x] > sigma[y]; });

    SvdResult out;
    out.u = Matrix(m, n);
    out.v = Matrix(n, n);
    out.sigma.resize(n);
    for (int j = 0; j < n; ++j) {
        const int src = order[j];
        out.sigma[j] = sigma[src];
        const double inv = sigma[src] > 0.0 ? 1.0 / sigma[src] : 0.0;
        for (int i = 0; i < m; ++i) out.u(i, j) = w(i, src) * inv;
        for (int i = 0; i < n; ++i) out.v(i, j) = v(i, src);
    }
    return out;
}

inline std::vector<double> singular_values(const Matrix& a) {
    return jacobi_svd(a).sigma;
}

// Rotation minimizing |R s_i - s_j|_F over SO(3): SVD of the 3x3 cross
// matrix s_i s_j^T = U S V^T gives R = V U^T; if that has det -1 the last
// column of V is flipped to land on a proper rotation. The result is a plain
// value, never part of a gradient path.
inline Rotation procrustes_rotation(const Matrix& s_i, const Matrix& s_j) {
    if (s_i.rows() != 3 || s_j.rows() != 3 || s_i.cols() != s_j.cols())
        throw UsageError("procrustes_rotation: want matching 3xN shapes, got " +
                         s_i.shape_str() + " and " + s_j.shape_str());
    Matrix cross(3, 3);
    add_multiply_nt(cross, s_i, s_j);
    SvdResult svd = jacobi_svd(cross);
    if (svd.sigma[2] < 1e-9 * svd.sigma[0])
        throw DegeneracyError("procrustes_rotation: rank-deficient cross matrix (sigma " +
                              std::to_string(svd.sigma[2]) + " vs " +
                              std::to_string(svd.sigma[0]) + ")");
    Matrix r(3, 3);
    add_multiply_nt(r, svd.v, svd.u);
    if (Rotation::determinant(r) < 0.0) {
        for (int i = 0; i < 3; ++i) svd.v(i, 2) = -svd.v(i, 2);
        r = Matrix(3, 3);
        add_multiply_nt(r, svd.v, svd.u);
    }
    return Rotation{std::move(r)};
}

struct ProcrusteanDistances {
    double delta_ori = 0.0;      // |s_i - s_j|_F
    double delta_pro = 0.0;      // |R* s_i - s_j|_F
    double delta_res = 0.0;      // delta_ori - delta_pro
    double delta_pro_norm = 0.0; // delta_pro / |s_j|_F
    double delta_res_norm = 0.0; // delta_res / |s_j|_F
};

inline ProcrusteanDistances procrustean_distances(const Matrix& s_i, const Matrix& s_j) {
    const double nj = frobenius_norm(s_j);
    if (nj <= 0.0) throw UsageError("procrustean_distances: zero-norm reference shape");
    const Rotation r = procrustes_rotation(s_i, s_j);
    ProcrusteanDistances d;
    d.delta_ori = frobenius_norm(subtract(s_i, s_j));
    d.delta_pro = frobenius_norm(subtract(multiply(r.r, s_i), s_j));
    d.delta_res = d.delta_ori - d.delta_pro;
    d.delta_pro_norm = d.delta_pro / nj;
    d.delta_res_norm = d.delta_res / nj;
    return d;
}

// Haar-uniform random rotation via a normalized Gaussian quaternion.
inline Rotation random_rotation(Rng& rng) {
    double q[4];
    double norm = 0.0;
    do {
        norm = 0.0;
        for (double& c : q) {
            c = rng.normal();
            norm += c * c;
        }
    } while (norm < 1e-12);
    norm = std::sqrt(norm);
    const double w = q[0] / norm, x = q[1] / norm, y = q[2] / norm, z = q[3] / norm;
    Matrix r(3, 3);
    r(0, 0) = 1 - 2 * (y * y + z * z);
    r(0, 1) = 2 * (x * y - w * z);
    r(0, 2) = 2 * (x * z + w * y);
    r(1, 0) = 2 * (x * y + w * z);
    r(1, 1) = 1 - 2 * (x * x + z * z);
    r(1, 2) = 2 * (y * z - w * x);
    r(2, 0) = 2 * (x * z - w * y);
    r(2, 1) = 2 * (y * z + w * x);
    r(2, 2) = 1 - 2 * (x * x + y * y);
    return Rotation{std::move(r)};
}

} // namespace nrsfm
