#pragma once

#include <string>
#include <vector>

#include "craftlang/model/recurrent.hpp"
#include "craftlang/text.hpp"

namespace craftlang::model {

/// Frozen word vectors of a vocabulary, (300, V); specials map to zero.
inline Matrix<float> word_matrix(const Vocabulary& vocab, const EmbeddingTable& emb) {
    Matrix<float> out(kEmbeddingDim, static_cast<Eigen::Index>(vocab.size()));
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        const auto& v = emb.lookup(vocab.token(static_cast<TokenId>(i)));
        out.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const nn::Vector<float>>(v.data(), kEmbeddingDim);
    }
    return out;
}

/// Instruction generator: attention LSTM whose input at each step is the
/// projected frozen word vector of the previous token.
template <class T>
class Generator {
public:
    struct Decoded {
        std::vector<std::vector<TokenId>> tokens;  // emitted ids, <end> included when produced
        Matrix<T> hidden;                          // (32, B) after the last emitted token
        std::vector<Matrix<T>> attention;          // per step (27, B)
    };

    struct TrainCache {
        typename AttnLSTM<T>::Cache core;
        Matrix<T> word_proj;
        std::vector<std::vector<TokenId>> inputs;  // per step, per sample
        std::vector<Matrix<T>> dlogits;
        std::vector<Matrix<T>> dalpha;
        std::vector<int> end_step;  // step whose output is <end>
        Matrix<T> hidden;
        double token_loss = 0;  // summed
        int tokens = 0;
        double coverage = 0;    // summed over samples
    };

    Generator() = default;
    /// `words` holds the frozen vector of every vocabulary token, (300, V).
    Generator(const Matrix<float>& words, Rng& rng) : words_(words.template cast<T>()) {
        word_ = nn::Linear<T>("generator.word", kEmbeddingDim, kDim, rng);
        core_ = AttnLSTM<T>("generator", kDim, rng);
        out_ = nn::Linear<T>("generator.out", kHidden, static_cast<int>(words.cols()), rng);
    }

    int vocab_size() const { return static_cast<int>(words_.cols()); }

    /// Teacher-forced pass. `lang_scale` multiplies the summed token loss,
    /// `cov_scale` the summed coverage penalty.
    void forward_train(const Matrix<T>& z, const std::vector<std::vector<TokenId>>& seqs, T lang_scale, T cov_scale,
                       TrainCache& k) const {
        const auto B = static_cast<Eigen::Index>(seqs.size());
        k = TrainCache{};
        k.word_proj = word_.forward(words_);
        core_.begin({&z}, k.core);
        int steps = 0;
        for (const auto& s : seqs) {
            k.end_step.push_back(static_cast<int>(s.size()));
            steps = std::max(steps, static_cast<int>(s.size()) + 1);
        }
        k.hidden.resize(kHidden, B);
        Matrix<T> cover = Matrix<T>::Zero(kRows, B);
        Matrix<T> x(kDim, B);
        for (int t = 0; t < steps; ++t) {
            std::vector<TokenId> in(static_cast<std::size_t>(B)), target(static_cast<std::size_t>(B));
            for (Eigen::Index j = 0; j < B; ++j) {
                const auto& s = seqs[static_cast<std::size_t>(j)];
                const auto ut = static_cast<std::size_t>(t);
                in[static_cast<std::size_t>(j)] = t == 0 ? Vocabulary::kStart : ut <= s.size() ? s[ut - 1] : Vocabulary::kPad;
                target[static_cast<std::size_t>(j)] = ut < s.size() ? s[ut] : ut == s.size() ? Vocabulary::kEnd : -1;
                x.col(j) = k.word_proj.col(in[static_cast<std::size_t>(j)]);
            }
            const auto& h = core_.step(k.core, 0, x);
            const Matrix<T> logits = out_.forward(h);
            Matrix<T> dl;
            k.token_loss += nn::cross_entropy<T>(logits, target, lang_scale, dl);
            for (Eigen::Index j = 0; j < B; ++j) {
                if (target[static_cast<std::size_t>(j)] < 0) continue;
                ++k.tokens;
                cover.col(j) += k.core.alpha.back().col(j);
                if (t == k.end_step[static_cast<std::size_t>(j)]) k.hidden.col(j) = h.col(j);
            }
            k.inputs.push_back(std::move(in));
            k.dlogits.push_back(std::move(dl));
        }
        // sum_r (1 - sum_t alpha_tr)^2
        const Matrix<T> gap = (T(1) - cover.array()).matrix();
        k.coverage = static_cast<double>(gap.squaredNorm());
        for (int t = 0; t < steps; ++t) {
            Matrix<T> da = (T(-2) * cov_scale) * gap;
            for (Eigen::Index j = 0; j < B; ++j)
                if (t > k.end_step[static_cast<std::size_t>(j)]) da.col(j).setZero();
            k.dalpha.push_back(std::move(da));
        }
    }

    /// Returns dL/dz given dL/dhidden.
    Matrix<T> backward(TrainCache& k, const Matrix<T>& dhidden) {
        const auto steps = k.dlogits.size();
        const auto B = dhidden.cols();
        std::vector<Matrix<T>> dh(steps);
        for (std::size_t t = 0; t < steps; ++t) {
            dh[t] = out_.backward(k.core.h[t + 1], k.dlogits[t]);
            for (Eigen::Index j = 0; j < B; ++j)
                if (static_cast<std::size_t>(k.end_step[static_cast<std::size_t>(j)]) == t) dh[t].col(j) += dhidden.col(j);
        }
        std::vector<Matrix<T>> dmem{Matrix<T>::Zero(kDim, kRows * B)};
        const auto dx = core_.backward(k.core, dh, k.dalpha, dmem);
        Matrix<T> dproj = Matrix<T>::Zero(kDim, words_.cols());
        for (std::size_t t = 0; t < steps; ++t)
            for (Eigen::Index j = 0; j < B; ++j) dproj.col(k.inputs[t][static_cast<std::size_t>(j)]) += dx[t].col(j);
        word_.accumulate(words_, dproj);
        return std::move(dmem[0]);
    }

    /// Greedy decoding.
    Decoded decode(const Matrix<T>& z, int max_len, bool keep_attention = false) const {
        const auto B = z.cols() / kRows;
        Decoded d;
        d.tokens.resize(static_cast<std::size_t>(B));
        d.hidden.resize(kHidden, B);
        const Matrix<T> word_proj = word_.forward(words_);
        typename AttnLSTM<T>::Cache k;
        core_.begin({&z}, k);
        std::vector<TokenId> prev(static_cast<std::size_t>(B), Vocabulary::kStart);
        std::vector<bool> done(static_cast<std::size_t>(B), false);
        Matrix<T> x(kDim, B);
        for (int t = 0; t < max_len; ++t) {
            for (Eigen::Index j = 0; j < B; ++j) x.col(j) = word_proj.col(prev[static_cast<std::size_t>(j)]);
            const auto& h = core_.step(k, 0, x, false);
            const Matrix<T> logits = out_.forward(h);
            bool all_done = true;
            for (Eigen::Index j = 0; j < B; ++j) {
                const auto uj = static_cast<std::size_t>(j);
                if (done[uj]) continue;
                Eigen::Index best;
                logits.col(j).maxCoeff(&best);
                prev[uj] = static_cast<TokenId>(best);
                d.tokens[uj].push_back(prev[uj]);
                d.hidden.col(j) = h.col(j);
                done[uj] = prev[uj] == Vocabulary::kEnd;
                all_done = all_done && done[uj];
            }
            if (keep_attention) d.attention.push_back(k.alpha.back());
            k.cell.clear();
            k.attn.clear();
            if (all_done) break;
        }
        return d;
    }

    void collect(nn::ParamRefs<T>& out) {
        word_.collect(out);
        core_.collect(out);
        out_.collect(out);
    }

private:
    Matrix<T> words_;  // frozen (300, V)
    nn::Linear<T> word_;
    AttnLSTM<T> core_;
    nn::Linear<T> out_;
};

/// Classifies the state into one of N instructions with a fixed number of
/// attention steps; its final hidden state conditions the policy.
template <class T>
class Discriminator {
public:
    struct TrainCache {
        typename AttnLSTM<T>::Cache core;
        Matrix<T> dlogits;
        double loss = 0;
        int count = 0;
    };

    Discriminator() = default;
    Discriminator(int classes, int steps, Rng& rng) : steps_(steps) {
        core_ = AttnLSTM<T>("discriminator", 0, rng);
        cls_ = nn::Linear<T>("discriminator.classifier", kHidden, classes, rng);
    }

    int classes() const { return cls_.out(); }

    Matrix<T> run(const Matrix<T>& z, typename AttnLSTM<T>::Cache& k, bool keep) const {
        core_.begin({&z}, k);
        const Matrix<T> none;
        for (int t = 0; t < steps_; ++t) core_.step(k, 0, none, keep);
        return k.h.back();
    }

    Matrix<T> forward_train(const Matrix<T>& z, const std::vector<int>& targets, T scale, TrainCache& k) const {
        k = TrainCache{};
        Matrix<T> h = run(z, k.core, true);
        k.loss = nn::cross_entropy<T>(cls_.forward(h), targets, scale, k.dlogits);
        for (int t : targets) k.count += t >= 0;
        return h;
    }

    Matrix<T> backward(TrainCache& k, const Matrix<T>& dhidden) {
        const auto B = dhidden.cols();
        std::vector<Matrix<T>> dh(static_cast<std::size_t>(steps_));
        dh.back() = cls_.backward(k.core.h.back(), k.dlogits) + dhidden;
        std::vector<Matrix<T>> dmem{Matrix<T>::Zero(kDim, kRows * B)};
        core_.backward(k.core, dh, {}, dmem);
        return std::move(dmem[0]);
    }

    /// (hidden, predicted class per sample)
    std::pair<Matrix<T>, std::vector<int>> predict(const Matrix<T>& z) const {
        typename AttnLSTM<T>::Cache k;
        Matrix<T> h = run(z, k, false);
        const Matrix<T> logits = cls_.forward(h);
        std::vector<int> cls(static_cast<std::size_t>(h.cols()));
        for (Eigen::Index j = 0; j < h.cols(); ++j) {
            Eigen::Index best;
            logits.col(j).maxCoeff(&best);
            cls[static_cast<std::size_t>(j)] = static_cast<int>(best);
        }
        return {std::move(h), std::move(cls)};
    }

    void collect(nn::ParamRefs<T>& out) {
        core_.collect(out);
        cls_.collect(out);
    }

private:
    int steps_ = 3;
    AttnLSTM<T> core_;
    nn::Linear<T> cls_;
};

/// Recurrent predictor of the next encoding from the last few encodings.
template <class T>
class StatePredictor {
public:
    struct TrainCache {
        typename AttnLSTM<T>::Cache core;
        Matrix<T> dpred;
        double loss = 0;  // summed squared error
    };

    StatePredictor() = default;
    explicit StatePredictor(Rng& rng) {
        core_ = AttnLSTM<T>("predictor", 0, rng);
        head_ = nn::Linear<T>("predictor.head", kHidden, kEncodingSize, rng);
    }

    /// history: oldest first, each (128, 27*B).
    Matrix<T> run(const std::vector<const Matrix<T>*>& history, typename AttnLSTM<T>::Cache& k, bool keep) const {
        core_.begin(history, k);
        const Matrix<T> none;
        for (int t = 0; t < static_cast<int>(history.size()); ++t) core_.step(k, t, none, keep);
        return k.h.back();
    }

    /// `target` is the flattened next encoding (3456, B), treated as constant.
    Matrix<T> forward_train(const std::vector<const Matrix<T>*>& history, const Matrix<T>& target, T scale,
                            TrainCache& k) const {
        k = TrainCache{};
        Matrix<T> h = run(history, k.core, true);
        const Matrix<T> diff = head_.forward(h) - target;
        k.loss = static_cast<double>(diff.squaredNorm());
        k.dpred = (T(2) * scale) * diff;
        return h;
    }

    /// Returns one memory gradient per history entry.
    std::vector<Matrix<T>> backward(TrainCache& k, const Matrix<T>& dhidden) {
        const auto B = dhidden.cols();
        const auto steps = k.core.cell.size();
        std::vector<Matrix<T>> dh(steps);
        dh.back() = head_.backward(k.core.h.back(), k.dpred) + dhidden;
        std::vector<Matrix<T>> dmem(k.core.mems.size(), Matrix<T>::Zero(kDim, kRows * B));
        core_.backward(k.core, dh, {}, dmem);
        return dmem;
    }

    Matrix<T> predict(const std::vector<const Matrix<T>*>& history) const {
        typename AttnLSTM<T>::Cache k;
        Matrix<T> h = run(history, k, false);
        return head_.forward(h);
    }

    Matrix<T> hidden(const std::vector<const Matrix<T>*>& history) const {
        typename AttnLSTM<T>::Cache k;
        return run(history, k, false);
    }

    void collect(nn::ParamRefs<T>& out) {
        core_.collect(out);
        head_.collect(out);
    }

private:
    AttnLSTM<T> core_;
    nn::Linear<T> head_;
};

/// Autoencoder over the flattened encoding; hidden sizes 64, 32, 64, 128.
/// The 32-d bottleneck conditions the policy.
template <class T>
class StateAutoencoder {
public:
    struct TrainCache {
        Matrix<T> x, a1, a2, a3, a4, dout;
        double loss = 0;  // summed squared error
    };

    StateAutoencoder() = default;
    explicit StateAutoencoder(Rng& rng) {
        l1_ = nn::Linear<T>("autoencoder.enc1", kEncodingSize, 64, rng);
        l2_ = nn::Linear<T>("autoencoder.enc2", 64, kHidden, rng);
        l3_ = nn::Linear<T>("autoencoder.dec1", kHidden, 64, rng);
        l4_ = nn::Linear<T>("autoencoder.dec2", 64, 128, rng);
        l5_ = nn::Linear<T>("autoencoder.out", 128, kEncodingSize, rng);
    }

    Matrix<T> encode(const Matrix<T>& x) const {
        return l2_.forward(nn::relu<T>(l1_.forward(x))).array().tanh().matrix();
    }

    Matrix<T> reconstruct(const Matrix<T>& x) const {
        const Matrix<T> a2 = encode(x);
        return l5_.forward(nn::relu<T>(l4_.forward(nn::relu<T>(l3_.forward(a2)))));
    }

    /// Reconstructs `x` (its own target, held constant). Returns the bottleneck.
    /// `target` is usually `x` itself, held constant.
    Matrix<T> forward_train(const Matrix<T>& x, const Matrix<T>& target, T scale, TrainCache& k) const {
        k = TrainCache{};
        k.x = x;
        k.a1 = nn::relu<T>(l1_.forward(x));
        k.a2 = l2_.forward(k.a1).array().tanh().matrix();
        k.a3 = nn::relu<T>(l3_.forward(k.a2));
        k.a4 = nn::relu<T>(l4_.forward(k.a3));
        const Matrix<T> diff = l5_.forward(k.a4) - target;
        k.loss = static_cast<double>(diff.squaredNorm());
        k.dout = (T(2) * scale) * diff;
        return k.a2;
    }

    /// Returns dL/dx through the encoder path only.
    Matrix<T> backward(TrainCache& k, const Matrix<T>& dbottleneck) {
        Matrix<T> d4 = nn::relu_backward<T>(k.a4, l5_.backward(k.a4, k.dout));
        Matrix<T> d3 = nn::relu_backward<T>(k.a3, l4_.backward(k.a3, d4));
        Matrix<T> d2 = l3_.backward(k.a2, d3) + dbottleneck;
        d2 = (d2.array() * (T(1) - k.a2.array().square())).matrix();
        Matrix<T> d1 = nn::relu_backward<T>(k.a1, l2_.backward(k.a1, d2));
        return l1_.backward(k.x, d1);
    }

    void collect(nn::ParamRefs<T>& out) {
        l1_.collect(out);
        l2_.collect(out);
        l3_.collect(out);
        l4_.collect(out);
        l5_.collect(out);
    }

private:
    nn::Linear<T> l1_, l2_, l3_, l4_, l5_;
};

inline constexpr int kPolicyHidden = 48;

/// Two-layer actor-critic head.
template <class T>
class Policy {
public:
    struct Cache {
        Matrix<T> x, a;
    };

    Policy() = default;
    Policy(int in, Rng& rng) {
        trunk_ = nn::Linear<T>("policy.trunk", in, kPolicyHidden, rng);
        action_ = nn::Linear<T>("policy.action", kPolicyHidden, kActionCount, rng);
        value_ = nn::Linear<T>("policy.value", kPolicyHidden, 1, rng);
    }

    int in() const { return trunk_.in(); }

    /// (logits (8, B), value (1, B))
    std::pair<Matrix<T>, Matrix<T>> forward(const Matrix<T>& x, Cache* k = nullptr) const {
        Matrix<T> a = nn::relu<T>(trunk_.forward(x));
        auto out = std::make_pair(action_.forward(a), value_.forward(a));
        if (k) *k = {x, std::move(a)};
        return out;
    }

    /// Returns dL/dx (empty when `need_input_grad` is false).
    Matrix<T> backward(const Cache& k, const Matrix<T>& dlogits, const Matrix<T>& dvalue, bool need_input_grad = true) {
        Matrix<T> da = action_.backward(k.a, dlogits);
        if (dvalue.size()) da += value_.backward(k.a, dvalue);
        da = nn::relu_backward<T>(k.a, da);
        if (!need_input_grad) {
            trunk_.accumulate(k.x, da);
            return {};
        }
        return trunk_.backward(k.x, da);
    }

    void zero_output_head() { action_.zero_init(); }

    void collect(nn::ParamRefs<T>& out) {
        trunk_.collect(out);
        action_.collect(out);
        value_.collect(out);
    }

private:
    nn::Linear<T> trunk_, action_, value_;
};

}  // namespace craftlang::model
