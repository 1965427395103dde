#pragma once

#include <stdexcept>
#include <vector>

#include "suma/matrix.hpp"

namespace suma {

/// Thrown by ridge_fit when lambda == 0 and the design matrix is column
/// rank-deficient, so the unpenalized system has no unique solution.
class RankDeficiencyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RidgeFit {
    RealMatrix coefficients;        // d x v
    std::vector<double> intercept;  // v

    RealMatrix predict(const RealMatrix& x) const;
};

/// Minimizes ||Y - X B - 1 c^T||^2 + lambda ||B||^2 with an unpenalized
/// intercept fit by column centering. lambda > 0 solves the centered normal
/// equations through a positive-definite Cholesky factorization; lambda == 0
/// requires full column rank of X and falls back to an eigenvalue
/// pseudo-inverse for the rank lost to centering itself.
RidgeFit ridge_fit(const RealMatrix& x, const RealMatrix& y, double lambda);

}  // namespace suma
