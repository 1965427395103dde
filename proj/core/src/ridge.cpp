#include "suma/ridge.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace suma {

using EigenRowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const EigenRowMajor>;

RealMatrix RidgeFit::predict(const RealMatrix& x) const {
    if (x.cols() != coefficients.rows())
        throw std::invalid_argument("RidgeFit::predict: feature count mismatch");
    RealMatrix out = matmul(x, coefficients);
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += intercept[j];
    return out;
}

RidgeFit ridge_fit(const RealMatrix& x, const RealMatrix& y, double lambda) {
    if (x.rows() != y.rows()) throw std::invalid_argument("ridge_fit: row count mismatch");
    if (x.rows() < 2) throw std::invalid_argument("ridge_fit: needs n >= 2");
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw std::invalid_argument("ridge_fit: lambda must be finite and >= 0");

    const auto n = static_cast<Eigen::Index>(x.rows());
    const auto d = static_cast<Eigen::Index>(x.cols());
    const auto v = static_cast<Eigen::Index>(y.cols());

    ConstMap mx(x.data(), n, d);
    ConstMap my(y.data(), n, v);

    const Eigen::RowVectorXd x_means = mx.colwise().mean();
    const Eigen::RowVectorXd y_means = my.colwise().mean();
    const Eigen::MatrixXd xc = mx.rowwise() - x_means;
    const Eigen::MatrixXd yc = my.rowwise() - y_means;

    const Eigen::MatrixXd gram = xc.transpose() * xc;
    const Eigen::MatrixXd xty = xc.transpose() * yc;

    Eigen::MatrixXd coef;
    if (lambda > 0.0) {
        Eigen::MatrixXd system = gram;
        system.diagonal().array() += lambda;
        Eigen::LLT<Eigen::MatrixXd> llt(system);
        if (llt.info() != Eigen::Success)
            throw std::runtime_error("ridge_fit: Cholesky factorization failed");
        coef = llt.solve(xty);
    } else {
        // The unpenalized system only has a unique minimizer when X itself has
        // full column rank. Centering always removes (at most) one further
        // direction, which the pseudo-inverse resolves as the minimum-norm
        // solution without changing the fitted values.
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(mx);
        if (qr.rank() < d)
            throw RankDeficiencyError("ridge_fit: rank-deficient X with lambda = 0");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
        if (eig.info() != Eigen::Success)
            throw std::runtime_error("ridge_fit: eigendecomposition failed");
        const Eigen::VectorXd& evals = eig.eigenvalues();
        const double cutoff = evals.cwiseAbs().maxCoeff() * 1e-12;
        Eigen::VectorXd inv = evals;
        for (Eigen::Index i = 0; i < inv.size(); ++i)
            inv(i) = evals(i) > cutoff ? 1.0 / evals(i) : 0.0;
        coef = eig.eigenvectors() * inv.asDiagonal() *
               eig.eigenvectors().transpose() * xty;
    }

    RidgeFit fit;
    fit.coefficients = RealMatrix(static_cast<std::size_t>(d), static_cast<std::size_t>(v));
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < v; ++j)
            fit.coefficients(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = coef(i, j);

    const Eigen::RowVectorXd intercept = y_means - x_means * coef;
    fit.intercept.assign(intercept.data(), intercept.data() + v);
    return fit;
}

}  // namespace suma
