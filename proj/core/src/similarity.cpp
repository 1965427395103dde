#include "suma/similarity.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "suma/stats.hpp"

namespace suma {

using EigenRowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const EigenRowMajor>;

double linear_cka(const RealMatrix& x, const RealMatrix& y) {
    if (x.rows() != y.rows()) throw std::invalid_argument("linear_cka: sample counts differ");
    if (x.rows() < 2) throw std::invalid_argument("linear_cka: needs n >= 2");

    ConstMap mx(x.data(), static_cast<Eigen::Index>(x.rows()), static_cast<Eigen::Index>(x.cols()));
    ConstMap my(y.data(), static_cast<Eigen::Index>(y.rows()), static_cast<Eigen::Index>(y.cols()));
    const Eigen::MatrixXd xc = mx.rowwise() - mx.colwise().mean();
    const Eigen::MatrixXd yc = my.rowwise() - my.colwise().mean();

    const double x_norm = (xc.transpose() * xc).norm();
    const double y_norm = (yc.transpose() * yc).norm();
    if (x_norm == 0.0 || y_norm == 0.0)
        throw std::domain_error("linear_cka: centered matrix is all zeros");

    const double cross = (yc.transpose() * xc).squaredNorm();
    return cross / (x_norm * y_norm);
}

std::vector<double> rdm_upper_triangle(const RealMatrix& m) {
    const std::size_t n = m.rows();
    std::vector<double> tri;
    tri.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            tri.push_back(1.0 - pearson_r(m.row(i), m.row(j)));
        }
    }
    return tri;
}

double rdm_similarity(const RealMatrix& x, const RealMatrix& y) {
    if (x.rows() != y.rows()) throw std::invalid_argument("rdm_similarity: sample counts differ");
    if (x.rows() < 4)
        throw std::invalid_argument("rdm_similarity: needs n >= 4 for a comparable triangle");

    const std::vector<double> tx = rdm_upper_triangle(x);
    const std::vector<double> ty = rdm_upper_triangle(y);
    try {
        return pearson_r(tx, ty);
    } catch (const std::domain_error&) {
        throw std::domain_error("rdm_similarity: constant dissimilarity vector");
    }
}

}  // namespace suma
