#pragma once

#include <vector>

#include "craftlang/model/encoder.hpp"

namespace craftlang::model {

inline constexpr int kHidden = 32;
inline constexpr int kAttnDim = 32;

/// LSTM decoder that attends over state encodings at every step.
///
/// Step t reads memory `mem_of[t]`, attends with the previous hidden state,
/// and feeds [extra_t ; context_t] to the cell. The initial state comes from
/// the mean row of memory 0.
template <class T>
class AttnLSTM {
public:
    AttnLSTM() = default;
    AttnLSTM(const std::string& name, int extra_dim, Rng& rng) : extra_dim_(extra_dim) {
        init_h_ = nn::Linear<T>(name + ".init_h", kDim, kHidden, rng);
        init_c_ = nn::Linear<T>(name + ".init_c", kDim, kHidden, rng);
        attn_ = nn::AdditiveAttention<T>(name + ".attention", kDim, kHidden, kAttnDim, rng);
        cell_ = nn::LSTMCell<T>(name + ".lstm", extra_dim + kDim, kHidden, rng);
    }

    int extra_dim() const { return extra_dim_; }

    struct Cache {
        std::vector<const Matrix<T>*> mems;
        std::vector<typename nn::AdditiveAttention<T>::Memory> prepared;
        std::vector<int> mem_of;
        Matrix<T> mean0, h0, c0;
        std::vector<typename nn::AdditiveAttention<T>::Cache> attn;
        std::vector<typename nn::LSTMCell<T>::Cache> cell;
        std::vector<Matrix<T>> h;      // h[0] initial, h[t+1] after step t
        std::vector<Matrix<T>> alpha;  // (27, B) per step
        Matrix<T> c;                   // current cell state
    };

    /// Initialises the cache; returns h0.
    void begin(const std::vector<const Matrix<T>*>& mems, Cache& k) const {
        k = Cache{};
        k.mems = mems;
        for (auto* m : mems) k.prepared.push_back(attn_.prepare(*m, kRows));
        const auto B = mems.front()->cols() / kRows;
        k.mean0.resize(kDim, B);
        for (Eigen::Index j = 0; j < B; ++j) k.mean0.col(j) = mems.front()->middleCols(j * kRows, kRows).rowwise().mean();
        k.h0 = init_h_.forward(k.mean0).array().tanh().matrix();
        k.c0 = init_c_.forward(k.mean0).array().tanh().matrix();
        k.h.push_back(k.h0);
        k.c = k.c0;
    }

    /// One step; `extra` is (extra_dim, B) or empty.
    const Matrix<T>& step(Cache& k, int mem, const Matrix<T>& extra, bool keep_cache = true) const {
        typename nn::AdditiveAttention<T>::Cache ac;
        auto [ctx, alpha] = attn_.forward(k.prepared[static_cast<std::size_t>(mem)], k.h.back(), &ac);
        Matrix<T> x(extra_dim_ + kDim, ctx.cols());
        if (extra_dim_ > 0) x.topRows(extra_dim_) = extra;
        x.bottomRows(kDim) = ctx;
        typename nn::LSTMCell<T>::Cache cc;
        auto [h, c] = cell_.forward(x, k.h.back(), k.c, keep_cache ? &cc : nullptr);
        k.c = std::move(c);
        k.mem_of.push_back(mem);
        k.alpha.push_back(std::move(alpha));
        if (keep_cache) {
            k.attn.push_back(std::move(ac));
            k.cell.push_back(std::move(cc));
        }
        k.h.push_back(std::move(h));
        return k.h.back();
    }

    /// Backpropagation through time.
    /// dh[t] is dL/dh[t+1] from outside (may be empty), dalpha[t] likewise
    /// for attention weights. Adds into dmem (one per memory) and returns the
    /// extra-input gradients per step.
    std::vector<Matrix<T>> backward(const Cache& k, const std::vector<Matrix<T>>& dh,
                                    const std::vector<Matrix<T>>& dalpha, std::vector<Matrix<T>>& dmem) {
        const int steps = static_cast<int>(k.cell.size());
        const auto B = k.h0.cols();
        std::vector<Matrix<T>> dextra(static_cast<std::size_t>(steps));
        std::vector<Matrix<T>> dproj;
        for (auto& p : k.prepared) dproj.push_back(Matrix<T>::Zero(p.proj.rows(), p.proj.cols()));
        Matrix<T> dh_next = Matrix<T>::Zero(kHidden, B);
        Matrix<T> dc_next = Matrix<T>::Zero(kHidden, B);
        for (int t = steps - 1; t >= 0; --t) {
            const auto ut = static_cast<std::size_t>(t);
            if (ut < dh.size() && dh[ut].size()) dh_next += dh[ut];
            auto [dx, dh_prev, dc_prev] = cell_.backward(k.cell[ut], dh_next, dc_next);
            if (extra_dim_ > 0) dextra[ut] = dx.topRows(extra_dim_);
            const Matrix<T> dctx = dx.bottomRows(kDim);
            const auto m = static_cast<std::size_t>(k.mem_of[ut]);
            const Matrix<T>* da = ut < dalpha.size() && dalpha[ut].size() ? &dalpha[ut] : nullptr;
            dh_prev += attn_.backward(k.prepared[m], k.attn[ut], dctx, da, dmem[m], dproj[m]);
            dh_next = std::move(dh_prev);
            dc_next = std::move(dc_prev);
        }
        for (std::size_t m = 0; m < k.prepared.size(); ++m) attn_.backward_memory(k.prepared[m], dproj[m], dmem[m]);
        const Matrix<T> dpre_h = (dh_next.array() * (T(1) - k.h0.array().square())).matrix();
        const Matrix<T> dpre_c = (dc_next.array() * (T(1) - k.c0.array().square())).matrix();
        Matrix<T> dmean = init_h_.backward(k.mean0, dpre_h) + init_c_.backward(k.mean0, dpre_c);
        dmean /= static_cast<T>(kRows);
        for (Eigen::Index j = 0; j < B; ++j) dmem[0].middleCols(j * kRows, kRows).colwise() += dmean.col(j);
        return dextra;
    }

    void collect(nn::ParamRefs<T>& out) {
        init_h_.collect(out);
        init_c_.collect(out);
        attn_.collect(out);
        cell_.collect(out);
    }

private:
    int extra_dim_ = 0;
    nn::Linear<T> init_h_, init_c_;
    nn::AdditiveAttention<T> attn_;
    nn::LSTMCell<T> cell_;
};

}  // namespace craftlang::model
