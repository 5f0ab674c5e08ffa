#pragma once

#include <Eigen/Dense>

#include <numeric>
#include <sstream>
#include <vector>

#include "modaltl/errors.hpp"
#include "modaltl/random.hpp"

namespace modaltl::design {

/// Box [lower_i, upper_i] for every design variable.
struct DesignBounds {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;

    static DesignBounds uniform(Eigen::Index dim, double a, double b) {
        return {Eigen::VectorXd::Constant(dim, a), Eigen::VectorXd::Constant(dim, b)};
    }

    Eigen::Index dim() const { return lower.size(); }

    void validate() const {
        if (lower.size() != upper.size()) throw DimensionMismatchError("design bounds: lower/upper sizes differ");
        for (Eigen::Index i = 0; i < lower.size(); ++i)
            if (!(lower(i) < upper(i))) {
                std::ostringstream msg;
                msg << "design bounds: lower[" << i << "] = " << lower(i) << " must be < upper[" << i << "] = " << upper(i);
                throw RangeError(msg.str());
            }
    }

    bool contains(const Eigen::Ref<const Eigen::VectorXd>& x) const {
        return (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
    }
};

/// Latin hypercube: q samples (rows) in `dim` dimensions. In every dimension
/// the q equal-width strata each receive exactly one point, placed uniformly
/// at random inside its stratum; strata are assigned to rows by an independent
/// random permutation per dimension.
inline Eigen::MatrixXd lhs_sample(Eigen::Index q, const DesignBounds& bounds, std::uint64_t seed) {
    bounds.validate();
    if (q < 1) throw RangeError("lhs: sample count must be >= 1");
    const Eigen::Index dim = bounds.dim();
    Rng rng(seed);
    Eigen::MatrixXd out(q, dim);
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(q));
    for (Eigen::Index i = 0; i < dim; ++i) {
        std::iota(perm.begin(), perm.end(), Eigen::Index{0});
        shuffle(perm.begin(), perm.end(), rng);
        const double a = bounds.lower(i);
        const double width = (bounds.upper(i) - a) / static_cast<double>(q);
        for (Eigen::Index j = 0; j < q; ++j) {
            const auto stratum = static_cast<double>(perm[static_cast<std::size_t>(j)]);
            out(j, i) = a + (stratum + uniform01(rng)) * width;
        }
    }
    return out;
}

}  // namespace modaltl::design
