#pragma once

#include "suma/matrix.hpp"

namespace suma {

/// Linear centered kernel alignment between two representations sharing a
/// sample axis: ||Yc^T Xc||_F^2 / (||Xc^T Xc||_F ||Yc^T Yc||_F), in [0, 1].
/// Throws std::domain_error when either matrix centers to all zeros.
double linear_cka(const RealMatrix& x, const RealMatrix& y);

/// Representational dissimilarity comparison: builds per-matrix n x n
/// correlation-distance matrices (1 - Pearson between row pairs) and returns
/// the Pearson correlation of the two strictly-upper-triangle vectors.
/// Requires n >= 4; throws std::domain_error on constant dissimilarities.
double rdm_similarity(const RealMatrix& x, const RealMatrix& y);

/// The strictly-upper-triangle of the correlation-distance RDM, row-major
/// over pairs (i < j). Exposed so downstream reports can persist RDMs.
std::vector<double> rdm_upper_triangle(const RealMatrix& m);

}  // namespace suma
