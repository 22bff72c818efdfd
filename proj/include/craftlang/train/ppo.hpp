#pragma once

#include <chrono>
#include <cmath>
#include <deque>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "craftlang/model/agent.hpp"
#include "craftlang/train/il.hpp"

namespace craftlang::train {

using nn::Matrix;

struct PPOConfig {
    double lr = 2.5e-4;
    double clip = 0.1;
    double value_coef = 0.5;
    double entropy_coef = 0.01;
    int envs = 8;
    int horizon = 128;
    int minibatches = 4;
    int epochs = 4;
    double total_steps = 2e6;
    double gamma = 0.99;
    double lambda = 0.95;
    double max_grad_norm = 0.5;
    double adam_eps = 1e-5;
    bool normalize_advantages = true;
    bool decay_lr = true;
    std::uint64_t seed = 0;
    int log_every = 10;  // updates between report rows

    nlohmann::json to_json() const {
        return {{"lr", lr},
                {"clip", clip},
                {"value_coef", value_coef},
                {"entropy_coef", entropy_coef},
                {"envs", envs},
                {"horizon", horizon},
                {"minibatches", minibatches},
                {"epochs", epochs},
                {"total_steps", total_steps},
                {"gamma", gamma},
                {"lambda", lambda},
                {"max_grad_norm", max_grad_norm},
                {"adam_eps", adam_eps},
                {"normalize_advantages", normalize_advantages},
                {"decay_lr", decay_lr},
                {"seed", seed},
                {"log_every", log_every}};
    }

    static PPOConfig from_json(const nlohmann::json& j) {
        PPOConfig c;
        c.lr = j.value("lr", c.lr);
        c.clip = j.value("clip", c.clip);
        c.value_coef = j.value("value_coef", c.value_coef);
        c.entropy_coef = j.value("entropy_coef", c.entropy_coef);
        c.envs = j.value("envs", c.envs);
        c.horizon = j.value("horizon", c.horizon);
        c.minibatches = j.value("minibatches", c.minibatches);
        c.epochs = j.value("epochs", c.epochs);
        c.total_steps = j.value("total_steps", c.total_steps);
        c.gamma = j.value("gamma", c.gamma);
        c.lambda = j.value("lambda", c.lambda);
        c.max_grad_norm = j.value("max_grad_norm", c.max_grad_norm);
        c.adam_eps = j.value("adam_eps", c.adam_eps);
        c.normalize_advantages = j.value("normalize_advantages", c.normalize_advantages);
        c.decay_lr = j.value("decay_lr", c.decay_lr);
        c.seed = j.value("seed", c.seed);
        c.log_every = j.value("log_every", c.log_every);
        return c;
    }

    void check() const {
        if (envs < 1 || horizon < 1 || minibatches < 1 || epochs < 1)
            throw std::invalid_argument("ppo: envs, horizon, minibatches and epochs must be positive");
        if ((envs * horizon) % minibatches != 0) throw std::invalid_argument("ppo: batch not divisible by minibatches");
        if (clip <= 0) throw std::invalid_argument("ppo: clip must be positive");
    }
};

/// A batch of environments that auto-reset when an episode ends.
class VecEnv {
public:
    struct Step {
        std::vector<float> reward;
        std::vector<bool> done;
    };

    struct Episode {
        std::string task;
        int steps_class = 0;
        bool success = false;
        int length = 0;
    };

    virtual ~VecEnv() = default;
    virtual int size() const = 0;
    virtual int obs_dim() const = 0;
    /// Current observations, (obs_dim, size).
    virtual Matrix<float> observe() = 0;
    virtual Step step(const std::vector<int>& actions) = 0;
    /// Episodes finished since the last call.
    virtual std::vector<Episode> drain_episodes() = 0;
};

/// Corridor of `length` + 1 cells; Right moves right, Left moves left,
/// everything else stays. Reaching the last cell pays 1 and ends the episode.
class CorridorEnv final : public VecEnv {
public:
    CorridorEnv(int n, int length = 3, int time_limit = 20) : pos_(static_cast<std::size_t>(n), 0), t_(pos_.size(), 0),
                                                             length_(length), limit_(time_limit) {}
    int size() const override { return static_cast<int>(pos_.size()); }
    int obs_dim() const override { return length_ + 1; }

    Matrix<float> observe() override {
        Matrix<float> o = Matrix<float>::Zero(obs_dim(), size());
        for (int j = 0; j < size(); ++j) o(pos_[static_cast<std::size_t>(j)], j) = 1.0f;
        return o;
    }

    Step step(const std::vector<int>& actions) override {
        Step s;
        for (std::size_t j = 0; j < pos_.size(); ++j) {
            const auto a = static_cast<Action>(actions[j]);
            if (a == Action::Right) ++pos_[j];
            if (a == Action::Left) pos_[j] = std::max(0, pos_[j] - 1);
            ++t_[j];
            const bool goal = pos_[j] >= length_;
            const bool done = goal || t_[j] >= limit_;
            s.reward.push_back(goal ? 1.0f : 0.0f);
            s.done.push_back(done);
            if (done) {
                episodes_.push_back({"corridor", 1, goal, t_[j]});
                pos_[j] = 0;
                t_[j] = 0;
            }
        }
        return s;
    }

    std::vector<Episode> drain_episodes() override { return std::exchange(episodes_, {}); }

    int optimal_length() const { return length_; }

private:
    std::vector<int> pos_, t_;
    int length_, limit_;
    std::vector<Episode> episodes_;
};

/// Craft games whose observation is the frozen high-level model's policy input.
/// Tasks are drawn uniformly at every reset.
template <class T>
class CraftFeatureEnv final : public VecEnv {
public:
    CraftFeatureEnv(const model::Agent<T>& agent, std::vector<TaskSpec> tasks, int n, std::uint64_t seed)
        : agent_(&agent), tasks_(std::move(tasks)), rng_(mix64(seed, 0x7a5c0ULL)), slots_(static_cast<std::size_t>(n)) {
        if (tasks_.empty()) throw std::invalid_argument("CraftFeatureEnv: empty task list");
        for (std::size_t j = 0; j < slots_.size(); ++j) reset_slot(j);
    }

    int size() const override { return static_cast<int>(slots_.size()); }
    int obs_dim() const override { return agent_->policy_input_dim(); }

    Matrix<float> observe() override {
        std::vector<model::Observation> obs;
        for (auto& s : slots_) obs.push_back({{&s.history[0], &s.history[1], &s.history[2]}});
        return agent_->policy_input(obs).input.template cast<float>();
    }

    Step step(const std::vector<int>& actions) override {
        Step out;
        for (std::size_t j = 0; j < slots_.size(); ++j) {
            auto& s = slots_[j];
            const double r = apply_action(agent_->recipes(), s.state, static_cast<Action>(actions[j]));
            const bool done = is_done(s.state);
            out.reward.push_back(static_cast<float>(r));
            out.done.push_back(done);
            if (done) {
                episodes_.push_back({s.task->goal, s.task->declared_steps, is_success(s.state), s.state.step});
                reset_slot(j);
            } else {
                s.history.pop_front();
                s.history.push_back(agent_->features(s.state));
            }
        }
        return out;
    }

    std::vector<Episode> drain_episodes() override { return std::exchange(episodes_, {}); }

private:
    struct Slot {
        const TaskSpec* task = nullptr;
        WorldState state;
        std::deque<model::StateFeatures> history;
    };

    void reset_slot(std::size_t j) {
        auto& s = slots_[j];
        s.task = &tasks_[rng_.below(tasks_.size())];
        s.state = reset(agent_->recipes(), *s.task, rng_.next_u64());
        s.history.clear();
        const auto f = agent_->features(s.state);
        for (int i = 0; i < 3; ++i) s.history.push_back(f);
    }

    const model::Agent<T>* agent_;
    std::vector<TaskSpec> tasks_;
    Rng rng_;
    std::vector<Slot> slots_;
    std::vector<Episode> episodes_;
};

/// Per-sample terms of the PPO objective and its gradient w.r.t. logits and values.
struct PPOLoss {
    double policy = 0;   // clipped surrogate, negated, mean
    double value = 0;    // 0.5 * mean squared error
    double entropy = 0;  // mean
    double total = 0;    // policy + value_coef * value - entropy_coef * entropy
    double clip_fraction = 0;
    double approx_kl = 0;
    Matrix<float> dlogits, dvalues;
};

inline PPOLoss ppo_loss(const Matrix<float>& logits, const Matrix<float>& values, const std::vector<int>& actions,
                        const std::vector<float>& old_logp, const std::vector<float>& adv,
                        const std::vector<float>& returns, const PPOConfig& cfg) {
    const auto M = logits.cols();
    const float inv = 1.0f / static_cast<float>(M);
    const Matrix<float> logp = nn::log_softmax<float>(logits);
    const Matrix<float> p = logp.array().exp().matrix();
    PPOLoss L;
    L.dlogits.resize(logits.rows(), M);
    L.dvalues.resize(1, M);
    for (Eigen::Index j = 0; j < M; ++j) {
        const auto uj = static_cast<std::size_t>(j);
        const int a = actions[uj];
        const float lp = logp(a, j);
        const float ratio = std::exp(lp - old_logp[uj]);
        const float A = adv[uj];
        const float s1 = ratio * A;
        const float rc = std::clamp(ratio, static_cast<float>(1 - cfg.clip), static_cast<float>(1 + cfg.clip));
        const float s2 = rc * A;
        L.policy -= std::min(s1, s2);
        // gradient flows only through the unclipped branch when it is the minimum
        const float dlp = s1 <= s2 ? -A * ratio : 0.0f;
        L.clip_fraction += std::abs(ratio - 1.0f) > cfg.clip;
        L.approx_kl += 0.5 * (lp - old_logp[uj]) * (lp - old_logp[uj]);

        const float H = -(p.col(j).array() * logp.col(j).array()).sum();
        L.entropy += H;
        for (Eigen::Index k = 0; k < logits.rows(); ++k) {
            const float onehot = k == a ? 1.0f : 0.0f;
            const float dent = -p(k, j) * (logp(k, j) + H);  // dH/dlogit
            L.dlogits(k, j) = inv * (dlp * (onehot - p(k, j)) - static_cast<float>(cfg.entropy_coef) * dent);
        }
        const float err = values(0, j) - returns[uj];
        L.value += 0.5 * err * err;
        L.dvalues(0, j) = inv * static_cast<float>(cfg.value_coef) * err;
    }
    L.policy /= static_cast<double>(M);
    L.value /= static_cast<double>(M);
    L.entropy /= static_cast<double>(M);
    L.clip_fraction /= static_cast<double>(M);
    L.approx_kl /= static_cast<double>(M);
    L.total = L.policy + cfg.value_coef * L.value - cfg.entropy_coef * L.entropy;
    return L;
}

/// Generalised advantage estimates over a (horizon, envs) rollout stored
/// step-major. `last_values` bootstraps the final step.
inline void compute_gae(const std::vector<float>& rewards, const std::vector<float>& values,
                        const std::vector<bool>& dones, const std::vector<float>& last_values, int horizon, int envs,
                        double gamma, double lambda, std::vector<float>& adv, std::vector<float>& returns) {
    const auto n = static_cast<std::size_t>(horizon * envs);
    adv.assign(n, 0.0f);
    returns.assign(n, 0.0f);
    for (int e = 0; e < envs; ++e) {
        double gae = 0;
        for (int t = horizon - 1; t >= 0; --t) {
            const auto i = static_cast<std::size_t>(t * envs + e);
            const double next_v = t == horizon - 1 ? last_values[static_cast<std::size_t>(e)]
                                                   : values[static_cast<std::size_t>((t + 1) * envs + e)];
            const double nonterminal = dones[i] ? 0.0 : 1.0;
            const double delta = rewards[i] + gamma * next_v * nonterminal - values[i];
            gae = delta + gamma * lambda * nonterminal * gae;
            adv[i] = static_cast<float>(gae);
            returns[i] = static_cast<float>(gae + values[i]);
        }
    }
}

/// Shifts and scales to zero mean and unit standard deviation.
inline void normalize(std::vector<float>& v) {
    if (v.size() < 2) return;
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double var = 0;
    for (float a : v) var += (a - mean) * (a - mean);
    const double sd = std::sqrt(var / static_cast<double>(v.size()));
    for (float& a : v) a = static_cast<float>((a - mean) / (sd + 1e-8));
}

/// Samples an action from softmax(logits) for each column.
inline std::vector<int> sample_actions(const Matrix<float>& logits, Rng& rng) {
    const Matrix<float> p = nn::softmax<float>(logits);
    std::vector<int> out;
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
        double u = rng.uniform(), c = 0;
        int a = static_cast<int>(p.rows()) - 1;
        for (Eigen::Index k = 0; k < p.rows(); ++k) {
            c += p(k, j);
            if (u < c) {
                a = static_cast<int>(k);
                break;
            }
        }
        out.push_back(a);
    }
    return out;
}

using UpdateHook = std::function<void(const nlohmann::json& row)>;

/// Clipped-surrogate PPO on `policy` only. Observations are whatever `env`
/// emits; nothing upstream of them receives gradients.
inline TrainReport train_ppo(model::Policy<float>& policy, VecEnv& env, const PPOConfig& cfg,
                             const UpdateHook& on_update = {}) {
    cfg.check();
    if (env.size() != cfg.envs) throw std::invalid_argument("ppo: env count differs from config");
    const auto t0 = std::chrono::steady_clock::now();
    TrainReport report;
    report.phase = "ppo";
    report.seed = cfg.seed;
    nn::ParamRefs<float> params;
    policy.collect(params);
    nn::Adam<float> opt(params, {cfg.lr, 0.9, 0.999, cfg.adam_eps});
    const nn::LinearDecay schedule{cfg.lr};
    Rng rng(mix64(cfg.seed, 0x990ULL));

    const int N = cfg.envs, H = cfg.horizon;
    const std::size_t batch = static_cast<std::size_t>(N * H);
    const std::size_t mb = batch / static_cast<std::size_t>(cfg.minibatches);
    const long updates = std::max(1L, static_cast<long>(cfg.total_steps / static_cast<double>(batch)));
    const int D = env.obs_dim();

    Matrix<float> obs(D, static_cast<Eigen::Index>(batch));
    std::vector<int> actions(batch);
    std::vector<float> logp(batch), values(batch), rewards(batch);
    std::vector<bool> dones(batch);
    std::vector<float> adv, returns;
    std::vector<std::size_t> order(batch);
    std::iota(order.begin(), order.end(), 0);

    long steps = 0;
    std::vector<VecEnv::Episode> window;  // episodes since the last log row
    Matrix<float> cur = env.observe();
    for (long u = 0; u < updates; ++u) {
        const double progress = static_cast<double>(u) / static_cast<double>(updates);
        const double lr = cfg.decay_lr ? schedule.at(progress) : cfg.lr;

        for (int t = 0; t < H; ++t) {
            const auto [lg, v] = policy.forward(cur);
            const auto a = sample_actions(lg, rng);
            const Matrix<float> lsm = nn::log_softmax<float>(lg);
            const auto base = static_cast<Eigen::Index>(t * N);
            obs.middleCols(base, N) = cur;
            for (int e = 0; e < N; ++e) {
                const auto i = static_cast<std::size_t>(t * N + e);
                actions[i] = a[static_cast<std::size_t>(e)];
                logp[i] = lsm(a[static_cast<std::size_t>(e)], e);
                values[i] = v(0, e);
            }
            const auto s = env.step(a);
            for (int e = 0; e < N; ++e) {
                const auto i = static_cast<std::size_t>(t * N + e);
                rewards[i] = s.reward[static_cast<std::size_t>(e)];
                dones[i] = s.done[static_cast<std::size_t>(e)];
            }
            cur = env.observe();
        }
        steps += static_cast<long>(batch);
        const auto [last_lg, last_v] = policy.forward(cur);
        std::vector<float> lastv(static_cast<std::size_t>(N));
        for (int e = 0; e < N; ++e) lastv[static_cast<std::size_t>(e)] = last_v(0, e);
        compute_gae(rewards, values, dones, lastv, H, N, cfg.gamma, cfg.lambda, adv, returns);
        if (cfg.normalize_advantages) normalize(adv);

        PPOLoss last;
        double gnorm = 0;
        for (int ep = 0; ep < cfg.epochs; ++ep) {
            rng.shuffle(std::span<std::size_t>(order));
            for (int m = 0; m < cfg.minibatches; ++m) {
                Matrix<float> x(D, static_cast<Eigen::Index>(mb));
                std::vector<int> act(mb);
                std::vector<float> olp(mb), ad(mb), ret(mb);
                for (std::size_t k = 0; k < mb; ++k) {
                    const auto i = order[static_cast<std::size_t>(m) * mb + k];
                    x.col(static_cast<Eigen::Index>(k)) = obs.col(static_cast<Eigen::Index>(i));
                    act[k] = actions[i];
                    olp[k] = logp[i];
                    ad[k] = adv[i];
                    ret[k] = returns[i];
                }
                typename model::Policy<float>::Cache pc;
                const auto [lg, v] = policy.forward(x, &pc);
                last = ppo_loss(lg, v, act, olp, ad, ret, cfg);
                if (!std::isfinite(last.total))
                    throw NonFiniteLoss("ppo: non-finite loss at update " + std::to_string(u) + " (policy " +
                                        std::to_string(last.policy) + ", value " + std::to_string(last.value) + ")");
                nn::zero_grads(params);
                policy.backward(pc, last.dlogits, last.dvalues, false);
                gnorm = nn::clip_grad_norm(params, cfg.max_grad_norm);
                opt.step(lr);
            }
        }

        auto eps = env.drain_episodes();
        window.insert(window.end(), eps.begin(), eps.end());
        if ((u + 1) % std::max(1, cfg.log_every) == 0 || u + 1 == updates) {
            std::map<int, std::pair<int, int>> by_class;
            double len = 0;
            for (const auto& e : window) {
                auto& [wins, n] = by_class[e.steps_class];
                wins += e.success;
                ++n;
                len += e.length;
            }
            nlohmann::json success = nlohmann::json::object();
            for (auto [c, wn] : by_class) success[std::to_string(c)] = static_cast<double>(wn.first) / wn.second;
            nlohmann::json row = {{"update", u + 1},
                                  {"steps", steps},
                                  {"lr", lr},
                                  {"policy_loss", last.policy},
                                  {"value_loss", last.value},
                                  {"entropy", last.entropy},
                                  {"approx_kl", last.approx_kl},
                                  {"clip_fraction", last.clip_fraction},
                                  {"grad_norm", gnorm},
                                  {"episodes", window.size()},
                                  {"mean_length", window.empty() ? 0.0 : len / static_cast<double>(window.size())},
                                  {"success", success},
                                  {"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
            report.updates.push_back(row);
            if (on_update) on_update(row);
            window.clear();
        }
    }
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

/// PPO fine-tuning of an agent's policy with its encoder and high-level
/// module frozen. Verifies the frozen parameters are untouched.
template <class T>
TrainReport train_rl(model::Agent<T>& agent, const std::vector<TaskSpec>& tasks, const PPOConfig& cfg,
                     const UpdateHook& on_update = {}) {
    static_assert(std::is_same_v<T, float>, "RL runs in single precision");
    const auto frozen_before = nn::params_hash(agent.high_level_params());
    CraftFeatureEnv<T> env(agent, tasks, cfg.envs, cfg.seed);
    auto report = train_ppo(agent.policy(), env, cfg, on_update);
    if (nn::params_hash(agent.high_level_params()) != frozen_before)
        throw std::logic_error("train_rl: frozen parameters changed during PPO");
    report.phase = "rl";
    return report;
}

}  // namespace craftlang::train
