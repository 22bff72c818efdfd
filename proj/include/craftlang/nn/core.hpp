#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "craftlang/rng.hpp"

namespace craftlang::nn {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <class T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

/// Named trainable tensor with its gradient accumulator.
template <class T>
struct Param {
    std::string name;
    Matrix<T> value;
    Matrix<T> grad;

    void resize(Eigen::Index rows, Eigen::Index cols) {
        value.setZero(rows, cols);
        grad.setZero(rows, cols);
    }
    void zero_grad() { grad.setZero(); }
};

template <class T>
using ParamRefs = std::vector<Param<T>*>;

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <class T>
void init_uniform(Matrix<T>& m, Rng& rng, double fan_in) {
    const double a = 1.0 / std::sqrt(fan_in);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = static_cast<T>((2.0 * rng.uniform() - 1.0) * a);
}

template <class T>
void zero_grads(const ParamRefs<T>& ps) {
    for (auto* p : ps) p->zero_grad();
}

/// y = W x + b, batch along columns.
template <class T>
class Linear {
public:
    Linear() = default;
    Linear(std::string name, int in, int out, Rng& rng) {
        W.name = name + ".weight";
        b.name = name + ".bias";
        W.resize(out, in);
        b.resize(out, 1);
        init_uniform(W.value, rng, in);
        init_uniform(b.value, rng, in);
    }

    int in() const { return static_cast<int>(W.value.cols()); }
    int out() const { return static_cast<int>(W.value.rows()); }

    Matrix<T> forward(const Matrix<T>& x) const {
        Matrix<T> y = W.value * x;
        y.colwise() += b.value.col(0);
        return y;
    }

    /// Accumulates parameter gradients and returns dL/dx.
    Matrix<T> backward(const Matrix<T>& x, const Matrix<T>& dy) {
        accumulate(x, dy);
        return W.value.transpose() * dy;
    }

    /// Parameter gradients only (input gradient not needed).
    void accumulate(const Matrix<T>& x, const Matrix<T>& dy) {
        W.grad.noalias() += dy * x.transpose();
        b.grad.col(0) += dy.rowwise().sum();
    }

    void zero_init() {
        W.value.setZero();
        b.value.setZero();
    }

    void collect(ParamRefs<T>& out) {
        out.push_back(&W);
        out.push_back(&b);
    }

    Param<T> W, b;
};

template <class T>
Matrix<T> relu(const Matrix<T>& x) {
    return x.cwiseMax(T(0));
}

template <class T>
Matrix<T> relu_backward(const Matrix<T>& y, const Matrix<T>& dy) {
    return (y.array() > T(0)).select(dy, T(0));
}

template <class T>
Matrix<T> sigmoid(const Matrix<T>& x) {
    return (T(1) / (T(1) + (-x.array()).exp())).matrix();
}

/// Column-wise softmax.
template <class T>
Matrix<T> softmax(const Matrix<T>& logits) {
    Matrix<T> out(logits.rows(), logits.cols());
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
        const T m = logits.col(j).maxCoeff();
        out.col(j) = (logits.col(j).array() - m).exp().matrix();
        out.col(j) /= out.col(j).sum();
    }
    return out;
}

template <class T>
Matrix<T> log_softmax(const Matrix<T>& logits) {
    Matrix<T> out(logits.rows(), logits.cols());
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
        const T m = logits.col(j).maxCoeff();
        const T lse = m + std::log((logits.col(j).array() - m).exp().sum());
        out.col(j) = logits.col(j).array() - lse;
    }
    return out;
}

/// Summed cross-entropy over columns with a target; columns whose target is
/// negative are skipped. Writes d(loss * scale)/dlogits into `dlogits`.
template <class T>
double cross_entropy(const Matrix<T>& logits, const std::vector<int>& targets, T scale, Matrix<T>& dlogits) {
    dlogits = softmax(logits);
    double loss = 0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
        const int t = targets[static_cast<std::size_t>(j)];
        if (t < 0) {
            dlogits.col(j).setZero();
            continue;
        }
        loss -= std::log(std::max(static_cast<double>(dlogits(t, j)), 1e-30));
        dlogits(t, j) -= T(1);
        dlogits.col(j) *= scale;
    }
    return loss;
}

/// Standard LSTM cell; gate order i, f, g, o.
template <class T>
class LSTMCell {
public:
    struct Cache {
        Matrix<T> x, h, c;       // inputs
        Matrix<T> i, f, g, o;    // activations
        Matrix<T> c_next, tanh_c;
    };

    LSTMCell() = default;
    LSTMCell(std::string name, int in, int hidden, Rng& rng) : hidden_(hidden) {
        Wx.name = name + ".weight_ih";
        Wh.name = name + ".weight_hh";
        b.name = name + ".bias";
        Wx.resize(4 * hidden, in);
        Wh.resize(4 * hidden, hidden);
        b.resize(4 * hidden, 1);
        init_uniform(Wx.value, rng, hidden);
        init_uniform(Wh.value, rng, hidden);
        init_uniform(b.value, rng, hidden);
    }

    int hidden() const { return hidden_; }

    /// Returns (h_next, c_next); fills `cache` for backward.
    std::pair<Matrix<T>, Matrix<T>> forward(const Matrix<T>& x, const Matrix<T>& h, const Matrix<T>& c,
                                            Cache* cache = nullptr) const {
        const int H = hidden_;
        Matrix<T> z = Wx.value * x;
        z.noalias() += Wh.value * h;
        z.colwise() += b.value.col(0);
        Matrix<T> i = sigmoid<T>(z.topRows(H));
        Matrix<T> f = sigmoid<T>(z.middleRows(H, H));
        Matrix<T> g = z.middleRows(2 * H, H).array().tanh().matrix();
        Matrix<T> o = sigmoid<T>(z.bottomRows(H));
        Matrix<T> c_next = (f.array() * c.array() + i.array() * g.array()).matrix();
        Matrix<T> tanh_c = c_next.array().tanh().matrix();
        Matrix<T> h_next = (o.array() * tanh_c.array()).matrix();
        if (cache) *cache = {x, h, c, i, f, g, o, c_next, tanh_c};
        return {std::move(h_next), std::move(c_next)};
    }

    /// Given dL/dh_next and dL/dc_next, accumulates parameter gradients and
    /// returns (dx, dh, dc).
    std::tuple<Matrix<T>, Matrix<T>, Matrix<T>> backward(const Cache& k, const Matrix<T>& dh_next,
                                                         const Matrix<T>& dc_next) {
        const int H = hidden_;
        const auto B = dh_next.cols();
        Matrix<T> dc = (dc_next.array() + dh_next.array() * k.o.array() * (T(1) - k.tanh_c.array().square())).matrix();
        Matrix<T> dz(4 * H, B);
        dz.topRows(H) = (dc.array() * k.g.array() * k.i.array() * (T(1) - k.i.array())).matrix();
        dz.middleRows(H, H) = (dc.array() * k.c.array() * k.f.array() * (T(1) - k.f.array())).matrix();
        dz.middleRows(2 * H, H) = (dc.array() * k.i.array() * (T(1) - k.g.array().square())).matrix();
        dz.bottomRows(H) = (dh_next.array() * k.tanh_c.array() * k.o.array() * (T(1) - k.o.array())).matrix();
        Wx.grad.noalias() += dz * k.x.transpose();
        Wh.grad.noalias() += dz * k.h.transpose();
        b.grad.col(0) += dz.rowwise().sum();
        Matrix<T> dx = Wx.value.transpose() * dz;
        Matrix<T> dh = Wh.value.transpose() * dz;
        Matrix<T> dc_prev = (dc.array() * k.f.array()).matrix();
        return {std::move(dx), std::move(dh), std::move(dc_prev)};
    }

    void collect(ParamRefs<T>& out) {
        out.push_back(&Wx);
        out.push_back(&Wh);
        out.push_back(&b);
    }

    Param<T> Wx, Wh, b;

private:
    int hidden_ = 0;
};

/// Single-head additive attention over a fixed set of rows per sample:
///   score_r = v . tanh(We z_r + Wh h + b),  alpha = softmax(score).
/// Memory is (D, R*B): the R rows of sample j occupy columns j*R .. j*R+R-1.
template <class T>
class AdditiveAttention {
public:
    struct Memory {
        const Matrix<T>* z = nullptr;  // (D, R*B)
        Matrix<T> proj;                // We z, (A, R*B)
        int rows = 0;
    };

    struct Cache {
        Matrix<T> h;      // (Hd, B)
        Matrix<T> act;    // tanh(...), (A, R*B)
        Matrix<T> alpha;  // (R, B)
    };

    AdditiveAttention() = default;
    AdditiveAttention(std::string name, int memory_dim, int query_dim, int attn_dim, Rng& rng) {
        We.name = name + ".memory_proj";
        Wh.name = name + ".query_proj";
        b.name = name + ".bias";
        v.name = name + ".score";
        We.resize(attn_dim, memory_dim);
        Wh.resize(attn_dim, query_dim);
        b.resize(attn_dim, 1);
        v.resize(attn_dim, 1);
        init_uniform(We.value, rng, memory_dim);
        init_uniform(Wh.value, rng, query_dim);
        init_uniform(b.value, rng, query_dim);
        init_uniform(v.value, rng, attn_dim);
    }

    Memory prepare(const Matrix<T>& z, int rows) const { return {&z, We.value * z, rows}; }

    /// Returns (context (D, B), alpha (R, B)).
    std::pair<Matrix<T>, Matrix<T>> forward(const Memory& m, const Matrix<T>& h, Cache* cache = nullptr) const {
        const int R = m.rows;
        const auto B = h.cols();
        Matrix<T> q = Wh.value * h;
        q.colwise() += b.value.col(0);
        Matrix<T> act(m.proj.rows(), m.proj.cols());
        for (Eigen::Index j = 0; j < B; ++j)
            act.middleCols(j * R, R) = (m.proj.middleCols(j * R, R).colwise() + q.col(j)).array().tanh().matrix();
        RowVector<T> scores = v.value.transpose() * act;
        Matrix<T> alpha = softmax<T>(Eigen::Map<const Matrix<T>>(scores.data(), R, B));
        Matrix<T> ctx(m.z->rows(), B);
        for (Eigen::Index j = 0; j < B; ++j) ctx.col(j).noalias() = m.z->middleCols(j * R, R) * alpha.col(j);
        if (cache) *cache = {h, std::move(act), alpha};
        return {std::move(ctx), std::move(alpha)};
    }

    /// Accumulates gradients; adds memory gradient into `dz` (D, R*B) and
    /// returns dL/dh. `dalpha_extra` carries losses placed directly on alpha.
    Matrix<T> backward(const Memory& m, const Cache& k, const Matrix<T>& dctx, const Matrix<T>* dalpha_extra,
                       Matrix<T>& dz, Matrix<T>& dproj) {
        const int R = m.rows;
        const auto B = dctx.cols();
        Matrix<T> dalpha(R, B);
        for (Eigen::Index j = 0; j < B; ++j) {
            dalpha.col(j).noalias() = m.z->middleCols(j * R, R).transpose() * dctx.col(j);
            dz.middleCols(j * R, R).noalias() += dctx.col(j) * k.alpha.col(j).transpose();
        }
        if (dalpha_extra) dalpha += *dalpha_extra;
        Matrix<T> dscore(R, B);
        for (Eigen::Index j = 0; j < B; ++j) {
            const T dot = dalpha.col(j).dot(k.alpha.col(j));
            dscore.col(j) = (k.alpha.col(j).array() * (dalpha.col(j).array() - dot)).matrix();
        }
        Eigen::Map<const RowVector<T>> ds(dscore.data(), R * B);
        v.grad.col(0).noalias() += k.act * ds.transpose();
        Matrix<T> dpre = ((v.value * ds).array() * (T(1) - k.act.array().square())).matrix();
        Matrix<T> dq(dpre.rows(), B);
        for (Eigen::Index j = 0; j < B; ++j) dq.col(j) = dpre.middleCols(j * R, R).rowwise().sum();
        dproj += dpre;
        b.grad.col(0) += dq.rowwise().sum();
        Wh.grad.noalias() += dq * k.h.transpose();
        return Wh.value.transpose() * dq;
    }

    /// Finishes the memory-projection gradient once all steps have added into dproj.
    void backward_memory(const Memory& m, const Matrix<T>& dproj, Matrix<T>& dz) {
        We.grad.noalias() += dproj * m.z->transpose();
        dz.noalias() += We.value.transpose() * dproj;
    }

    void collect(ParamRefs<T>& out) {
        out.push_back(&We);
        out.push_back(&Wh);
        out.push_back(&b);
        out.push_back(&v);
    }

    Param<T> We, Wh, b, v;
};

/// Adam with optional per-call learning rate.
template <class T>
class Adam {
public:
    struct Config {
        double lr = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
    };

    Adam() = default;
    Adam(ParamRefs<T> params, Config cfg) : params_(std::move(params)), cfg_(cfg) {
        for (auto* p : params_) {
            m_.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
            v_.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
        }
    }

    void step() { step(cfg_.lr); }

    void step(double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
        const T step_size = static_cast<T>(lr * std::sqrt(bc2) / bc1);
        const T eps = static_cast<T>(cfg_.eps * std::sqrt(bc2));
        for (std::size_t k = 0; k < params_.size(); ++k) {
            auto& g = params_[k]->grad;
            m_[k] = b1 * m_[k] + (T(1) - b1) * g;
            v_[k] = b2 * v_[k] + (T(1) - b2) * g.cwiseProduct(g);
            params_[k]->value.array() -= step_size * m_[k].array() / (v_[k].array().sqrt() + eps);
        }
    }

    const ParamRefs<T>& params() const { return params_; }
    long steps() const { return t_; }

private:
    ParamRefs<T> params_;
    Config cfg_;
    std::vector<Matrix<T>> m_, v_;
    long t_ = 0;
};

template <class T>
double grad_norm(const ParamRefs<T>& ps) {
    double s = 0;
    for (auto* p : ps) s += static_cast<double>(p->grad.squaredNorm());
    return std::sqrt(s);
}

/// Rescales gradients so their global norm is at most `max_norm`; returns the
/// norm before clipping.
template <class T>
double clip_grad_norm(const ParamRefs<T>& ps, double max_norm) {
    const double n = grad_norm(ps);
    if (n > max_norm && n > 0) {
        const T s = static_cast<T>(max_norm / (n + 1e-6));
        for (auto* p : ps) p->grad *= s;
    }
    return n;
}

/// lr(progress) = initial * (1 - progress), progress in [0, 1].
struct LinearDecay {
    double initial = 0;
    double at(double progress) const { return initial * (1.0 - std::clamp(progress, 0.0, 1.0)); }
};

template <class T>
bool all_finite(const ParamRefs<T>& ps) {
    for (auto* p : ps)
        if (!p->value.allFinite()) return false;
    return true;
}

/// FNV-1a over the raw bytes of every parameter.
template <class T>
std::uint64_t params_hash(const ParamRefs<T>& ps) {
    std::uint64_t h = 1469598103934665603ULL;
    for (auto* p : ps) {
        for (char c : p->name) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ULL;
        const auto* bytes = reinterpret_cast<const unsigned char*>(p->value.data());
        const auto n = static_cast<std::size_t>(p->value.size()) * sizeof(T);
        for (std::size_t i = 0; i < n; ++i) h = (h ^ bytes[i]) * 1099511628211ULL;
    }
    return h;
}

}  // namespace craftlang::nn
