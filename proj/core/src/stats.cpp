#include "suma/stats.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace suma {

namespace {
struct Moments {
    double mean = 0.0;
    double var = 0.0;  // sample variance (n - 1 denominator)
};

Moments moments(std::span<const double> xs) {
    const double n = static_cast<double>(xs.size());
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return {mean, ss / (n - 1.0)};
}
}  // namespace

WelchResult welch_t(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2)
        throw std::invalid_argument("welch_t: each sample needs at least 2 observations");
    const Moments ma = moments(a);
    const Moments mb = moments(b);
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double va = ma.var / na;
    const double vb = mb.var / nb;

    if (va == 0.0 && vb == 0.0) {
        // Degenerate ties: dof has no information, keep it positive.
        const double dof = na + nb - 2.0;
        if (ma.mean == mb.mean) return {0.0, dof};
        const double inf = std::numeric_limits<double>::infinity();
        return {ma.mean > mb.mean ? inf : -inf, dof};
    }

    const double t = (ma.mean - mb.mean) / std::sqrt(va + vb);
    const double dof =
        (va + vb) * (va + vb) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    return {t, dof};
}

double pearson_r(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("pearson_r: length mismatch");
    if (a.size() < 3) throw std::invalid_argument("pearson_r: needs n >= 3");
    const double n = static_cast<double>(a.size());
    double mean_a = 0.0, mean_b = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        mean_a += a[i];
        mean_b += b[i];
    }
    mean_a /= n;
    mean_b /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - mean_a;
        const double db = b[i] - mean_b;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0)
        throw std::domain_error("pearson_r: zero-variance input");
    return sab / std::sqrt(saa * sbb);
}

double fisher_z(double r) {
    if (!(std::fabs(r) < 1.0)) throw std::domain_error("fisher_z: |r| must be < 1");
    return std::atanh(r);
}

}  // namespace suma
