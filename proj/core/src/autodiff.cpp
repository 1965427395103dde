#include "suma/autodiff.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace suma::autodiff {

namespace {

using EigenRowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const EigenRowMajor>;
using MutMap = Eigen::Map<EigenRowMajor>;

ConstMap map(const RealMatrix& m) {
    return ConstMap(m.data(), static_cast<Eigen::Index>(m.rows()),
                    static_cast<Eigen::Index>(m.cols()));
}

MutMap map(RealMatrix& m) {
    return MutMap(m.data(), static_cast<Eigen::Index>(m.rows()),
                  static_cast<Eigen::Index>(m.cols()));
}

constexpr double kLnEps = 1e-10;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

NodeId Tape::push(RealMatrix value) {
    nodes_.push_back({std::move(value), {}, nullptr, {}});
    return nodes_.size() - 1;
}

NodeId Tape::constant(RealMatrix value) { return push(std::move(value)); }

NodeId Tape::parameter(Parameter& p) {
    const NodeId id = push(p.value);
    nodes_[id].param = &p;
    return id;
}

NodeId Tape::matmul(NodeId a, NodeId b) {
    const RealMatrix& va = value(a);
    const RealMatrix& vb = value(b);
    NodeId out = push(suma::matmul(va, vb));
    nodes_[out].backward_fn = [a, b, out](Tape& t) {
        const auto g = map(t.grad(out));
        map(t.grad(a)).noalias() += g * map(t.value(b)).transpose();
        map(t.grad(b)).noalias() += map(t.value(a)).transpose() * g;
    };
    return out;
}

NodeId Tape::add(NodeId a, NodeId b) {
    const RealMatrix& va = value(a);
    const RealMatrix& vb = value(b);
    if (va.rows() != vb.rows() || va.cols() != vb.cols())
        throw std::invalid_argument("Tape::add: shape mismatch");
    RealMatrix v = va;
    for (std::size_t i = 0; i < v.size(); ++i) v.flat()[i] += vb.flat()[i];
    NodeId out = push(std::move(v));
    nodes_[out].backward_fn = [a, b, out](Tape& t) {
        const auto& g = t.grad(out);
        auto& ga = t.grad(a);
        auto& gb = t.grad(b);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga.flat()[i] += g.flat()[i];
            gb.flat()[i] += g.flat()[i];
        }
    };
    return out;
}

NodeId Tape::scale(NodeId a, double s) {
    RealMatrix v = value(a);
    for (double& x : v.flat()) x *= s;
    NodeId out = push(std::move(v));
    nodes_[out].backward_fn = [a, s, out](Tape& t) {
        const auto& g = t.grad(out);
        auto& ga = t.grad(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga.flat()[i] += s * g.flat()[i];
    };
    return out;
}

NodeId Tape::silu(NodeId a) {
    const RealMatrix& va = value(a);
    auto sig = std::make_shared<RealMatrix>(va.rows(), va.cols());
    RealMatrix v(va.rows(), va.cols());
    for (std::size_t i = 0; i < va.size(); ++i) {
        const double s = sigmoid(va.flat()[i]);
        sig->flat()[i] = s;
        v.flat()[i] = va.flat()[i] * s;
    }
    NodeId out = push(std::move(v));
    nodes_[out].backward_fn = [a, out, sig](Tape& t) {
        const auto& g = t.grad(out);
        const auto& x = t.value(a);
        auto& ga = t.grad(a);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double s = sig->flat()[i];
            ga.flat()[i] += g.flat()[i] * (s + x.flat()[i] * s * (1.0 - s));
        }
    };
    return out;
}

NodeId Tape::layer_norm(NodeId x, NodeId gain, NodeId bias) {
    const RealMatrix& vx = value(x);
    const RealMatrix& vg = value(gain);
    const RealMatrix& vb = value(bias);
    const std::size_t d = vx.cols();
    if (vg.rows() != 1 || vg.cols() != d || vb.rows() != 1 || vb.cols() != d)
        throw std::invalid_argument("Tape::layer_norm: gain/bias must be 1 x d");

    auto xhat = std::make_shared<RealMatrix>(vx.rows(), d);
    auto inv_std = std::make_shared<std::vector<double>>(vx.rows());
    RealMatrix v(vx.rows(), d);
    for (std::size_t i = 0; i < vx.rows(); ++i) {
        double mean = 0.0;
        for (double val : vx.row(i)) mean += val;
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (double val : vx.row(i)) var += (val - mean) * (val - mean);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + kLnEps);
        (*inv_std)[i] = inv;
        for (std::size_t j = 0; j < d; ++j) {
            const double h = (vx(i, j) - mean) * inv;
            (*xhat)(i, j) = h;
            v(i, j) = h * vg(0, j) + vb(0, j);
        }
    }
    NodeId out = push(std::move(v));
    nodes_[out].backward_fn = [x, gain, bias, out, xhat, inv_std](Tape& t) {
        const auto& g = t.grad(out);
        const auto& vg2 = t.value(gain);
        auto& gx = t.grad(x);
        auto& gg = t.grad(gain);
        auto& gb = t.grad(bias);
        const std::size_t rows = g.rows(), d2 = g.cols();
        const double dn = static_cast<double>(d2);
        for (std::size_t i = 0; i < rows; ++i) {
            double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
            for (std::size_t j = 0; j < d2; ++j) {
                const double dxhat = g(i, j) * vg2(0, j);
                mean_dxhat += dxhat;
                mean_dxhat_xhat += dxhat * (*xhat)(i, j);
                gg(0, j) += g(i, j) * (*xhat)(i, j);
                gb(0, j) += g(i, j);
            }
            mean_dxhat /= dn;
            mean_dxhat_xhat /= dn;
            for (std::size_t j = 0; j < d2; ++j) {
                const double dxhat = g(i, j) * vg2(0, j);
                gx(i, j) += (*inv_std)[i] *
                            (dxhat - mean_dxhat - (*xhat)(i, j) * mean_dxhat_xhat);
            }
        }
    };
    return out;
}

NodeId Tape::add_position_rows(NodeId x, NodeId table) {
    const RealMatrix& vx = value(x);
    const RealMatrix& vt = value(table);
    if (vt.rows() < vx.rows() || vt.cols() != vx.cols())
        throw std::invalid_argument("Tape::add_position_rows: table too small");
    RealMatrix v = vx;
    for (std::size_t i = 0; i < vx.rows(); ++i)
        for (std::size_t j = 0; j < vx.cols(); ++j) v(i, j) += vt(i, j);
    NodeId out = push(std::move(v));
    nodes_[out].backward_fn = [x, table, out](Tape& t) {
        const auto& g = t.grad(out);
        auto& gx = t.grad(x);
        auto& gt = t.grad(table);
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) {
                gx(i, j) += g(i, j);
                gt(i, j) += g(i, j);
            }
    };
    return out;
}

NodeId Tape::attention(NodeId x, NodeId wq, NodeId wk, NodeId wv, NodeId wo, std::size_t n_heads,
                       bool causal) {
    const RealMatrix& vx = value(x);
    const std::size_t seq = vx.rows();
    const std::size_t d = vx.cols();
    if (n_heads == 0 || d % n_heads != 0)
        throw std::invalid_argument("Tape::attention: n_heads must divide d_model");
    const std::size_t dh = d / n_heads;
    const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dh));

    auto q = std::make_shared<RealMatrix>(suma::matmul(vx, value(wq)));
    auto k = std::make_shared<RealMatrix>(suma::matmul(vx, value(wk)));
    auto v = std::make_shared<RealMatrix>(suma::matmul(vx, value(wv)));
    auto probs = std::make_shared<std::vector<RealMatrix>>();  // per head, seq x seq
    auto mixed = std::make_shared<RealMatrix>(seq, d);

    probs->reserve(n_heads);
    for (std::size_t h = 0; h < n_heads; ++h) {
        RealMatrix p(seq, seq);
        for (std::size_t i = 0; i < seq; ++i) {
            const std::size_t visible = causal ? i + 1 : seq;
            std::vector<double> row(visible);
            for (std::size_t j = 0; j < visible; ++j) {
                double dot = 0.0;
                for (std::size_t c = 0; c < dh; ++c)
                    dot += (*q)(i, h * dh + c) * (*k)(j, h * dh + c);
                row[j] = dot * scale_factor;
            }
            // max-subtracted softmax over the visible prefix
            double mx = row[0];
            for (double val : row) mx = std::max(mx, val);
            double sum = 0.0;
            for (double& val : row) {
                val = std::exp(val - mx);
                sum += val;
            }
            for (std::size_t j = 0; j < visible; ++j) p(i, j) = row[j] / sum;
        }
        for (std::size_t i = 0; i < seq; ++i) {
            const std::size_t visible = causal ? i + 1 : seq;
            for (std::size_t c = 0; c < dh; ++c) {
                double acc = 0.0;
                for (std::size_t j = 0; j < visible; ++j) acc += p(i, j) * (*v)(j, h * dh + c);
                (*mixed)(i, h * dh + c) = acc;
            }
        }
        probs->push_back(std::move(p));
    }

    NodeId out = push(suma::matmul(*mixed, value(wo)));
    nodes_[out].backward_fn = [x, wq, wk, wv, wo, out, q, k, v, probs, mixed, n_heads, dh, seq,
                               causal, scale_factor](Tape& t) {
        const auto& g = t.grad(out);
        // Output projection
        map(t.grad(wo)).noalias() += map(*mixed).transpose() * map(g);
        RealMatrix d_mixed(seq, n_heads * dh);
        map(d_mixed).noalias() = map(g) * map(t.value(wo)).transpose();

        RealMatrix dq(seq, n_heads * dh), dk(seq, n_heads * dh), dv(seq, n_heads * dh);
        for (std::size_t h = 0; h < n_heads; ++h) {
            const RealMatrix& p = (*probs)[h];
            for (std::size_t i = 0; i < seq; ++i) {
                const std::size_t visible = causal ? i + 1 : seq;
                // dP and dV
                std::vector<double> dp(visible, 0.0);
                for (std::size_t j = 0; j < visible; ++j) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < dh; ++c) {
                        acc += d_mixed(i, h * dh + c) * (*v)(j, h * dh + c);
                        dv(j, h * dh + c) += p(i, j) * d_mixed(i, h * dh + c);
                    }
                    dp[j] = acc;
                }
                // softmax backward: ds_j = p_j (dp_j - sum_k dp_k p_k)
                double dot = 0.0;
                for (std::size_t j = 0; j < visible; ++j) dot += dp[j] * p(i, j);
                for (std::size_t j = 0; j < visible; ++j) {
                    const double ds = p(i, j) * (dp[j] - dot) * scale_factor;
                    for (std::size_t c = 0; c < dh; ++c) {
                        dq(i, h * dh + c) += ds * (*k)(j, h * dh + c);
                        dk(j, h * dh + c) += ds * (*q)(i, h * dh + c);
                    }
                }
            }
        }

        const auto& vx2 = t.value(x);
        map(t.grad(wq)).noalias() += map(vx2).transpose() * map(dq);
        map(t.grad(wk)).noalias() += map(vx2).transpose() * map(dk);
        map(t.grad(wv)).noalias() += map(vx2).transpose() * map(dv);
        auto gx = map(t.grad(x));
        gx.noalias() += map(dq) * map(t.value(wq)).transpose();
        gx.noalias() += map(dk) * map(t.value(wk)).transpose();
        gx.noalias() += map(dv) * map(t.value(wv)).transpose();
    };
    return out;
}

NodeId Tape::cross_entropy(NodeId logits, std::vector<TokenId> targets) {
    const RealMatrix& vl = value(logits);
    if (targets.empty()) throw std::invalid_argument("Tape::cross_entropy: empty target stream");
    if (vl.rows() != targets.size())
        throw std::invalid_argument("Tape::cross_entropy: one target per logit row required");
    const std::size_t vocab = vl.cols();
    for (TokenId tid : targets)
        if (tid >= vocab) throw std::out_of_range("Tape::cross_entropy: target outside vocab");

    auto probs = std::make_shared<RealMatrix>(vl.rows(), vocab);
    double loss = 0.0;
    for (std::size_t i = 0; i < vl.rows(); ++i) {
        double mx = vl(i, 0);
        for (std::size_t j = 0; j < vocab; ++j) mx = std::max(mx, vl(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < vocab; ++j) {
            const double e = std::exp(vl(i, j) - mx);
            (*probs)(i, j) = e;
            sum += e;
        }
        for (std::size_t j = 0; j < vocab; ++j) (*probs)(i, j) /= sum;
        loss -= std::log((*probs)(i, targets[i]));
    }
    loss /= static_cast<double>(vl.rows());

    RealMatrix scalar(1, 1);
    scalar(0, 0) = loss;
    NodeId out = push(std::move(scalar));
    auto targets_ptr = std::make_shared<std::vector<TokenId>>(std::move(targets));
    nodes_[out].backward_fn = [logits, out, probs, targets_ptr](Tape& t) {
        const double g = t.grad(out)(0, 0);
        auto& gl = t.grad(logits);
        const double inv_n = 1.0 / static_cast<double>(probs->rows());
        for (std::size_t i = 0; i < probs->rows(); ++i) {
            for (std::size_t j = 0; j < probs->cols(); ++j)
                gl(i, j) += g * inv_n * (*probs)(i, j);
            gl(i, (*targets_ptr)[i]) -= g * inv_n;
        }
    };
    return out;
}

void Tape::backward(NodeId loss_node) {
    const RealMatrix& loss = nodes_[loss_node].value;
    if (loss.rows() != 1 || loss.cols() != 1)
        throw std::invalid_argument("Tape::backward: loss node must be 1 x 1");
    for (Node& n : nodes_) n.grad = RealMatrix(n.value.rows(), n.value.cols());
    nodes_[loss_node].grad(0, 0) = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        if (nodes_[i].backward_fn) nodes_[i].backward_fn(*this);
    }
    for (Node& n : nodes_) {
        if (!n.param) continue;
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            n.param->grad.flat()[i] += n.grad.flat()[i];
    }
}

double finite_difference_max_rel_error(std::span<Parameter* const> params,
                                       const std::function<double()>& loss_fn,
                                       std::size_t n_coords, double step, Rng& rng) {
    std::size_t total = 0;
    for (const Parameter* p : params) total += p->value.size();
    if (total == 0) throw std::invalid_argument("finite_difference: no parameters");

    double max_rel = 0.0;
    for (std::size_t sample = 0; sample < n_coords; ++sample) {
        std::size_t flat = static_cast<std::size_t>(rng.below(total));
        Parameter* chosen = nullptr;
        for (Parameter* p : params) {
            if (flat < p->value.size()) {
                chosen = p;
                break;
            }
            flat -= p->value.size();
        }
        double& slot = chosen->value.flat()[flat];
        const double original = slot;
        slot = original + step;
        const double plus = loss_fn();
        slot = original - step;
        const double minus = loss_fn();
        slot = original;
        const double fd = (plus - minus) / (2.0 * step);
        const double ad = chosen->grad.flat()[flat];
        // Absolute floor of 1e-4: below it the central difference is roundoff
        // noise (|loss| * eps / step), not signal. A genuinely wrong backward
        // still shows up, since real gradients deviate at their own scale.
        const double rel = std::fabs(fd - ad) / std::max({std::fabs(fd), std::fabs(ad), 1e-4});
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

}  // namespace suma::autodiff
