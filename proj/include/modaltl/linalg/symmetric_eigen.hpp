#pragma once

// Dense symmetric and generalized symmetric-definite eigensolvers.
//
// K v = lambda M v is reduced to C y = lambda y with C = L^-1 K L^-T (M = L L^T),
// C is brought to tridiagonal form by Householder reflections and the
// tridiagonal spectrum is found by implicit QL. Only the requested lowest
// eigenvectors are formed (tridiagonal inverse iteration, then back
// transformation through the reflectors), which keeps a 300-DOF modal solve in
// the tens of milliseconds.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "modaltl/errors.hpp"

namespace modaltl::linalg {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Largest |i - j| over nonzero entries of a symmetric matrix.
inline Index bandwidth(const MatrixXd& a) {
    Index bw = 0;
    for (Index j = 0; j < a.cols(); ++j) {
        for (Index i = a.rows() - 1; i > j + bw; --i) {
            if (a(i, j) != 0.0) {
                bw = i - j;
                break;
            }
        }
    }
    return bw;
}

/// Lower Cholesky factor, touching only entries within the matrix bandwidth.
inline MatrixXd cholesky_lower(const MatrixXd& a) {
    const Index n = a.rows();
    if (a.cols() != n) throw SingularMassError("cholesky: matrix is not square");
    const Index bw = bandwidth(a);
    MatrixXd l = MatrixXd::Zero(n, n);
    for (Index j = 0; j < n; ++j) {
        const Index k0 = std::max<Index>(0, j - bw);
        double diag = a(j, j);
        for (Index k = k0; k < j; ++k) diag -= l(j, k) * l(j, k);
        if (!(diag > 0.0) || !std::isfinite(diag)) {
            std::ostringstream msg;
            msg << "cholesky: non-positive pivot " << diag << " at row " << j;
            throw SingularMassError(msg.str());
        }
        const double ljj = std::sqrt(diag);
        l(j, j) = ljj;
        const Index i1 = std::min(n - 1, j + bw);
        for (Index i = j + 1; i <= i1; ++i) {
            double s = a(i, j);
            const Index kk0 = std::max<Index>(0, i - bw);
            for (Index k = std::max(k0, kk0); k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / ljj;
        }
    }
    return l;
}

/// Solves L X = B in place for a banded lower-triangular L.
inline void forward_substitute(const MatrixXd& l, Index bw, MatrixXd& b) {
    const Index n = l.rows();
    for (Index c = 0; c < b.cols(); ++c) {
        for (Index i = 0; i < n; ++i) {
            double s = b(i, c);
            for (Index k = std::max<Index>(0, i - bw); k < i; ++k) s -= l(i, k) * b(k, c);
            b(i, c) = s / l(i, i);
        }
    }
}

/// Solves L^T X = B in place for a banded lower-triangular L.
inline void backward_substitute_transposed(const MatrixXd& l, Index bw, MatrixXd& b) {
    const Index n = l.rows();
    for (Index c = 0; c < b.cols(); ++c) {
        for (Index i = n - 1; i >= 0; --i) {
            double s = b(i, c);
            const Index k1 = std::min(n - 1, i + bw);
            for (Index k = i + 1; k <= k1; ++k) s -= l(k, i) * b(k, c);
            b(i, c) = s / l(i, i);
        }
    }
}

struct Tridiagonal {
    VectorXd diag;     // n
    VectorXd offdiag;  // n-1, couples (i, i+1)
};

/// Householder reduction A = Q T Q^T. Reflector i is stored in column i of
/// `reflectors` (rows i+1.., implicit unit leading entry).
struct HouseholderTridiagonalization {
    Tridiagonal tri;
    MatrixXd reflectors;
    VectorXd tau;

    explicit HouseholderTridiagonalization(MatrixXd a) {
        const Index n = a.rows();
        tri.diag.resize(n);
        tri.offdiag.resize(std::max<Index>(0, n - 1));
        tau = VectorXd::Zero(std::max<Index>(0, n - 1));
        for (Index i = 0; i + 2 < n; ++i) {
            const Index len = n - i - 1;
            auto x = a.col(i).segment(i + 1, len);
            const double alpha = x(0);
            const double tail_sq = x.tail(len - 1).squaredNorm();
            double beta = alpha;
            double t = 0.0;
            if (tail_sq != 0.0) {
                beta = -std::copysign(std::sqrt(alpha * alpha + tail_sq), alpha);
                t = (beta - alpha) / beta;
                x.tail(len - 1) /= (alpha - beta);
            }
            x(0) = 1.0;
            tau(i) = t;
            tri.offdiag(i) = beta;
            if (t != 0.0) {
                VectorXd v = x;
                auto a22 = a.block(i + 1, i + 1, len, len);
                VectorXd p = t * (a22.selfadjointView<Eigen::Lower>() * v);
                p -= (0.5 * t * p.dot(v)) * v;
                a22.selfadjointView<Eigen::Lower>().rankUpdate(v, p, -1.0);
            }
        }
        for (Index i = 0; i < n; ++i) tri.diag(i) = a(i, i);
        if (n >= 2) {
            tri.offdiag(n - 2) = a(n - 1, n - 2);
            tau(n - 2) = 0.0;
        }
        reflectors = std::move(a);
    }

    /// Overwrites Y (tridiagonal-basis vectors) with Q Y.
    void apply_q(MatrixXd& y) const {
        const Index n = reflectors.rows();
        for (Index i = n - 3; i >= 0; --i) {
            if (tau(i) == 0.0) continue;
            const Index len = n - i - 1;
            VectorXd v = reflectors.col(i).segment(i + 1, len);
            v(0) = 1.0;
            auto block = y.middleRows(i + 1, len);
            Eigen::RowVectorXd w = v.transpose() * block;
            block.noalias() -= tau(i) * v * w;
        }
    }

    /// Explicit Q (n x n).
    MatrixXd q() const {
        MatrixXd y = MatrixXd::Identity(reflectors.rows(), reflectors.rows());
        apply_q(y);
        return y;
    }
};

namespace detail {

inline void throw_ql_failure(Index l, int iterations, double off) {
    std::ostringstream msg;
    msg << "implicit QL did not converge for eigenvalue " << l << " after " << iterations
        << " iterations (remaining off-diagonal " << off << ")";
    throw EigensolverError(msg.str());
}

}  // namespace detail

/// Implicit QL with Wilkinson shifts on a symmetric tridiagonal matrix.
/// Eigenvalues are returned in `d` (unsorted). When `z` is non-null the
/// rotations are accumulated into it (pass identity for T's eigenvectors, or
/// Q to obtain A's). Returns the largest per-eigenvalue iteration count.
inline int implicit_ql(VectorXd& d, VectorXd e_in, MatrixXd* z = nullptr, int max_iterations = 60) {
    const Index n = d.size();
    if (n == 0) return 0;
    VectorXd e = VectorXd::Zero(n);
    if (n > 1) e.head(n - 1) = e_in.head(n - 1);
    int worst = 0;
    const double eps = std::numeric_limits<double>::epsilon();
    for (Index l = 0; l < n; ++l) {
        int iter = 0;
        Index m;
        do {
            for (m = l; m < n - 1; ++m) {
                const double dd = std::abs(d(m)) + std::abs(d(m + 1));
                if (std::abs(e(m)) <= eps * dd) break;
            }
            if (m != l) {
                if (iter++ == max_iterations) detail::throw_ql_failure(l, iter - 1, e(l));
                double g = (d(l + 1) - d(l)) / (2.0 * e(l));
                double r = std::hypot(g, 1.0);
                g = d(m) - d(l) + e(l) / (g + std::copysign(r, g));
                double s = 1.0, c = 1.0, p = 0.0;
                Index i;
                bool underflow = false;
                for (i = m - 1; i >= l; --i) {
                    double f = s * e(i);
                    const double b = c * e(i);
                    r = std::hypot(f, g);
                    e(i + 1) = r;
                    if (r == 0.0) {
                        d(i + 1) -= p;
                        e(m) = 0.0;
                        underflow = true;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = d(i + 1) - p;
                    r = (d(i) - g) * s + 2.0 * c * b;
                    p = s * r;
                    d(i + 1) = g + p;
                    g = c * r - b;
                    if (z) {
                        for (Index k = 0; k < z->rows(); ++k) {
                            f = (*z)(k, i + 1);
                            (*z)(k, i + 1) = s * (*z)(k, i) + c * f;
                            (*z)(k, i) = c * (*z)(k, i) - s * f;
                        }
                    }
                }
                if (underflow && i >= l) continue;
                d(l) -= p;
                e(l) = g;
                e(m) = 0.0;
            }
        } while (m != l);
        worst = std::max(worst, iter);
    }
    return worst;
}

/// Eigenvector of a symmetric tridiagonal matrix for an (accurate)
/// eigenvalue, by inverse iteration with a partially pivoted LU of T - shift I.
inline VectorXd tridiagonal_inverse_iteration(const Tridiagonal& t, double lambda, double norm_t,
                                              const std::vector<VectorXd>& previous) {
    const Index n = t.diag.size();
    const double eps = std::numeric_limits<double>::epsilon();
    const double shift = lambda + 4.0 * eps * norm_t;
    // LU of (T - shift I) with row interchanges: U has two superdiagonals.
    VectorXd u0(n), u1 = VectorXd::Zero(n), u2 = VectorXd::Zero(n), lmul = VectorXd::Zero(n);
    std::vector<bool> swapped(n, false);
    VectorXd diag = t.diag.array() - shift;
    VectorXd sub = n > 1 ? VectorXd(t.offdiag) : VectorXd();
    VectorXd sup = sub;
    // Working copies per row: (a_i = diag, b_i = sup, c = 0 fill).
    double cur_d = n > 0 ? diag(0) : 0.0;
    double cur_s1 = n > 1 ? sup(0) : 0.0;
    double cur_s2 = 0.0;
    const double tiny = eps * norm_t;
    for (Index i = 0; i < n; ++i) {
        if (i == n - 1) {
            u0(i) = std::abs(cur_d) < tiny ? tiny : cur_d;
            break;
        }
        const double below = sub(i);
        const double next_d = diag(i + 1);
        const double next_s1 = i + 2 < n ? sup(i + 1) : 0.0;
        if (std::abs(below) > std::abs(cur_d)) {
            swapped[i] = true;
            // pivot row is row i+1: [below, next_d, next_s1]
            u0(i) = below;
            u1(i) = next_d;
            u2(i) = next_s1;
            const double mult = cur_d / below;
            lmul(i) = mult;
            cur_d = cur_s1 - mult * next_d;
            cur_s1 = cur_s2 - mult * next_s1;
            cur_s2 = 0.0;
        } else {
            double piv = std::abs(cur_d) < tiny ? tiny : cur_d;
            u0(i) = piv;
            u1(i) = cur_s1;
            u2(i) = cur_s2;
            const double mult = below / piv;
            lmul(i) = mult;
            cur_d = next_d - mult * cur_s1;
            cur_s1 = next_s1 - mult * cur_s2;
            cur_s2 = 0.0;
        }
    }
    VectorXd x(n);
    for (Index i = 0; i < n; ++i) x(i) = 1.0 + 0.1 * std::sin(static_cast<double>(i) + 1.0);
    x /= x.norm();
    for (int it = 0; it < 3; ++it) {
        // forward: apply L^-1 with interchanges
        for (Index i = 0; i + 1 < n; ++i) {
            if (swapped[i]) std::swap(x(i), x(i + 1));
            x(i + 1) -= lmul(i) * x(i);
        }
        // back substitution with U
        for (Index i = n - 1; i >= 0; --i) {
            double s = x(i);
            if (i + 1 < n) s -= u1(i) * x(i + 1);
            if (i + 2 < n) s -= u2(i) * x(i + 2);
            x(i) = s / u0(i);
        }
        for (const auto& p : previous) x -= p.dot(x) * p;
        x /= x.norm();
    }
    return x;
}

struct SymmetricEigenResult {
    VectorXd values;   // ascending
    MatrixXd vectors;  // columns
    int max_ql_iterations = 0;
};

/// Full spectrum of a dense symmetric matrix (eigenvectors via QL accumulation).
inline SymmetricEigenResult symmetric_eigen(const MatrixXd& a) {
    const Index n = a.rows();
    HouseholderTridiagonalization h(a);
    VectorXd d = h.tri.diag;
    MatrixXd z = h.q();
    SymmetricEigenResult out;
    out.max_ql_iterations = implicit_ql(d, h.tri.offdiag, &z);
    std::vector<Index> order(n);
    std::iota(order.begin(), order.end(), Index{0});
    std::sort(order.begin(), order.end(), [&](Index x, Index y) { return d(x) < d(y); });
    out.values.resize(n);
    out.vectors.resize(n, n);
    for (Index k = 0; k < n; ++k) {
        out.values(k) = d(order[k]);
        out.vectors.col(k) = z.col(order[k]);
    }
    return out;
}

/// Lowest `count` eigenpairs of a dense symmetric matrix.
inline SymmetricEigenResult symmetric_eigen_lowest(const MatrixXd& a, Index count) {
    const Index n = a.rows();
    if (count > n) throw RangeError("requested more eigenpairs than the matrix dimension");
    HouseholderTridiagonalization h(a);
    VectorXd d = h.tri.diag;
    SymmetricEigenResult out;
    out.max_ql_iterations = implicit_ql(d, h.tri.offdiag, nullptr);
    std::sort(d.data(), d.data() + n);
    double norm_t = 0.0;
    for (Index i = 0; i < n; ++i) {
        double row = std::abs(h.tri.diag(i));
        if (i > 0) row += std::abs(h.tri.offdiag(i - 1));
        if (i + 1 < n) row += std::abs(h.tri.offdiag(i));
        norm_t = std::max(norm_t, row);
    }
    out.values = d.head(count);
    std::vector<VectorXd> found;
    found.reserve(count);
    for (Index k = 0; k < count; ++k) found.push_back(tridiagonal_inverse_iteration(h.tri, d(k), norm_t, found));
    MatrixXd y(n, count);
    for (Index k = 0; k < count; ++k) y.col(k) = found[k];
    h.apply_q(y);
    out.vectors = std::move(y);
    return out;
}

struct GeneralizedEigenResult {
    VectorXd eigenvalues;   // ascending, lowest `count`
    MatrixXd eigenvectors;  // M-orthonormal columns
    int max_ql_iterations = 0;
};

/// One subspace-iteration step W = K^-1 M V followed by Rayleigh-Ritz on
/// span(W). The reduction through L^-1 K L^-T loses accuracy in proportion to
/// lambda_max / lambda_min; this step restores residuals near machine
/// precision for the low modes. Skipped when K is not positive definite.
inline void refine_lowest_pairs(const MatrixXd& k, const MatrixXd& m, GeneralizedEigenResult& pairs) {
    MatrixXd lk;
    try {
        lk = cholesky_lower(k);
    } catch (const SingularMassError&) {
        return;
    }
    const Index bwk = bandwidth(lk);
    MatrixXd w = m * pairs.eigenvectors;
    forward_substitute(lk, bwk, w);
    backward_substitute_transposed(lk, bwk, w);
    // Ritz problem in the M-orthonormalized basis of W.
    MatrixXd mw = w.transpose() * m * w;
    mw = 0.5 * (mw + mw.transpose()).eval();
    const MatrixXd lm = cholesky_lower(mw);
    MatrixXd basis = w.transpose();  // solve basis^T = W L^-T  via  L basis = W^T
    forward_substitute(lm, lm.rows(), basis);
    basis.transposeInPlace();
    MatrixXd kr = basis.transpose() * k * basis;
    kr = 0.5 * (kr + kr.transpose()).eval();
    const SymmetricEigenResult ritz = symmetric_eigen(kr);
    pairs.eigenvalues = ritz.values;
    pairs.eigenvectors = basis * ritz.vectors;
    pairs.max_ql_iterations = std::max(pairs.max_ql_iterations, ritz.max_ql_iterations);
}

/// Lowest `count` eigenpairs of K v = lambda M v, K symmetric, M SPD.
inline GeneralizedEigenResult generalized_symmetric_eigen(const MatrixXd& k, const MatrixXd& m, Index count) {
    const Index n = k.rows();
    if (k.cols() != n || m.rows() != n || m.cols() != n)
        throw EigensolverError("generalized eigenproblem: K and M must be square and of equal size");
    if (count < 0 || count > n) throw RangeError("requested eigenpair count exceeds DOF count");
    const MatrixXd l = cholesky_lower(m);
    const Index bw = bandwidth(l);
    // C = L^-1 K L^-T, built as L^-1 (L^-1 K)^T since K is symmetric.
    MatrixXd w = k;
    forward_substitute(l, bw, w);
    MatrixXd c = w.transpose();
    forward_substitute(l, bw, c);
    c = 0.5 * (c + c.transpose()).eval();

    SymmetricEigenResult standard = symmetric_eigen_lowest(c, count);
    GeneralizedEigenResult out;
    out.eigenvalues = standard.values;
    out.max_ql_iterations = standard.max_ql_iterations;
    out.eigenvectors = std::move(standard.vectors);
    backward_substitute_transposed(l, bw, out.eigenvectors);
    if (count > 0) refine_lowest_pairs(k, m, out);
    return out;
}

}  // namespace modaltl::linalg
