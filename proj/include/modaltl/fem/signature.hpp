#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

#include "modaltl/errors.hpp"

namespace modaltl {

/// n natural frequencies (Hz, ascending) and n unit-norm, sign-fixed mode
/// shapes sampled at m sensors (column r of `shapes` is mode r).
struct ModalSignature {
    Eigen::VectorXd frequencies;
    Eigen::MatrixXd shapes;  // m x n

    Eigen::Index modes() const { return frequencies.size(); }
    Eigen::Index sensors() const { return shapes.rows(); }

    /// Length l = n (1 + m): f_1..f_n, then phi_1 (m components), .., phi_n.
    Eigen::VectorXd flatten() const {
        const Eigen::Index n = modes(), m = sensors();
        Eigen::VectorXd out(n * (1 + m));
        out.head(n) = frequencies;
        for (Eigen::Index r = 0; r < n; ++r) out.segment(n + r * m, m) = shapes.col(r);
        return out;
    }

    static ModalSignature unflatten(const Eigen::Ref<const Eigen::VectorXd>& y, Eigen::Index n, Eigen::Index m) {
        if (y.size() != n * (1 + m)) throw DimensionMismatchError("signature vector length != n(1+m)");
        ModalSignature s;
        s.frequencies = y.head(n);
        s.shapes.resize(m, n);
        for (Eigen::Index r = 0; r < n; ++r) s.shapes.col(r) = y.segment(n + r * m, m);
        return s;
    }

    /// Keeps only the listed modes, in the listed order.
    ModalSignature select(const std::vector<int>& modes_to_keep) const {
        ModalSignature s;
        const auto count = static_cast<Eigen::Index>(modes_to_keep.size());
        s.frequencies.resize(count);
        s.shapes.resize(sensors(), count);
        for (Eigen::Index k = 0; k < count; ++k) {
            const int r = modes_to_keep[static_cast<std::size_t>(k)];
            if (r < 0 || r >= modes()) throw RangeError("mode index out of range");
            s.frequencies(k) = frequencies(r);
            s.shapes.col(k) = shapes.col(r);
        }
        return s;
    }
};

/// Modal Assurance Criterion (a.b)^2 / ((a.a)(b.b)).
inline double mac(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) {
    if (a.size() != b.size()) throw DimensionMismatchError("mac: vectors differ in length");
    const double aa = a.squaredNorm();
    const double bb = b.squaredNorm();
    if (aa == 0.0 || bb == 0.0) throw RangeError("mac: undefined for a zero vector");
    const double ab = a.dot(b);
    return std::min(1.0, ab * ab / (aa * bb));
}

/// Unit Euclidean norm, largest-|component| entry positive. Entries within a
/// relative 1e-8 of the maximum count as ties and the first one wins, so
/// mirror-image sensors of symmetric modes give a stable sign.
inline Eigen::VectorXd normalize_shape(const Eigen::Ref<const Eigen::VectorXd>& v) {
    const double norm = v.norm();
    if (!(norm > 0.0)) throw RangeError("cannot normalize a zero mode shape");
    const double peak = v.cwiseAbs().maxCoeff();
    Eigen::Index imax = 0;
    while (std::abs(v(imax)) < peak * (1.0 - 1e-8)) ++imax;
    Eigen::VectorXd out = v / norm;
    if (out(imax) < 0.0) out = -out;
    return out;
}

}  // namespace modaltl
