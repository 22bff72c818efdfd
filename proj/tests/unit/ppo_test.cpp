#include <gtest/gtest.h>

#include "craftlang/eval/rollout.hpp"
#include "craftlang/train/ppo.hpp"

using namespace craftlang;
using namespace craftlang::train;

namespace {

struct Synthetic {
    Matrix<float> logits, values;
    std::vector<int> actions;
    std::vector<float> old_logp, adv, returns;
};

Synthetic synthetic(int n, std::uint64_t seed, float spread = 0.3f) {
    Rng rng(seed);
    Synthetic s;
    s.logits.resize(kActionCount, n);
    s.values.resize(1, n);
    for (int j = 0; j < n; ++j) {
        for (int k = 0; k < kActionCount; ++k) s.logits(k, j) = static_cast<float>(rng.normal());
        s.values(0, j) = static_cast<float>(rng.normal());
        s.actions.push_back(static_cast<int>(rng.below(kActionCount)));
        const Matrix<float> lsm = nn::log_softmax<float>(s.logits.col(j));
        s.old_logp.push_back(lsm(s.actions.back(), 0) + static_cast<float>(spread * rng.normal()));
        s.adv.push_back(static_cast<float>(rng.normal()));
        s.returns.push_back(static_cast<float>(rng.normal()));
    }
    return s;
}

}  // namespace

TEST(PPO, LinearDecayHalfway) {
    const nn::LinearDecay d{2.5e-4};
    EXPECT_NEAR(d.at(0.5), 1.25e-4, 1e-9);
    EXPECT_NEAR(d.at(0.0), 2.5e-4, 1e-12);
    EXPECT_NEAR(d.at(1.0), 0.0, 1e-12);
}

TEST(PPO, LossGradientMatchesFiniteDifference) {
    PPOConfig cfg;
    auto s = synthetic(16, 3);
    const auto L = ppo_loss(s.logits, s.values, s.actions, s.old_logp, s.adv, s.returns, cfg);
    const float eps = 1e-2f;
    for (int j = 0; j < 16; ++j) {
        for (int k = 0; k < kActionCount; ++k) {
            auto up = s.logits, down = s.logits;
            up(k, j) += eps;
            down(k, j) -= eps;
            const double num = (ppo_loss(up, s.values, s.actions, s.old_logp, s.adv, s.returns, cfg).total -
                                ppo_loss(down, s.values, s.actions, s.old_logp, s.adv, s.returns, cfg).total) /
                               (2 * eps);
            EXPECT_NEAR(L.dlogits(k, j), num, 2e-4) << j << "," << k;
        }
        auto up = s.values, down = s.values;
        up(0, j) += eps;
        down(0, j) -= eps;
        const double num = (ppo_loss(s.logits, up, s.actions, s.old_logp, s.adv, s.returns, cfg).total -
                            ppo_loss(s.logits, down, s.actions, s.old_logp, s.adv, s.returns, cfg).total) /
                           (2 * eps);
        EXPECT_NEAR(L.dvalues(0, j), num, 2e-4);
    }
}

TEST(PPO, ClippedObjectiveNeverExceedsUnclipped) {
    PPOConfig cfg;
    cfg.entropy_coef = 0;
    cfg.value_coef = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto s = synthetic(64, seed, 1.0f);
        const auto L = ppo_loss(s.logits, s.values, s.actions, s.old_logp, s.adv, s.returns, cfg);
        EXPECT_TRUE(std::isfinite(L.total));
        EXPECT_TRUE(L.dlogits.allFinite());
        const Matrix<float> lsm = nn::log_softmax<float>(s.logits);
        double unclipped = 0;
        for (int j = 0; j < 64; ++j) {
            const double ratio = std::exp(lsm(s.actions[static_cast<std::size_t>(j)], j) - s.old_logp[static_cast<std::size_t>(j)]);
            EXPECT_TRUE(std::isfinite(ratio));
            unclipped += ratio * s.adv[static_cast<std::size_t>(j)];
        }
        EXPECT_LE(-L.policy, unclipped / 64 + 1e-6);
    }
}

TEST(PPO, ClipBoundary) {
    PPOConfig cfg;
    cfg.entropy_coef = 0;
    cfg.value_coef = 0;
    Matrix<float> logits = Matrix<float>::Zero(kActionCount, 1), values = Matrix<float>::Zero(1, 1);
    const float lp = std::log(1.0f / kActionCount);
    auto run = [&](float ratio, float adv) {
        return ppo_loss(logits, values, {0}, {lp - std::log(ratio)}, {adv}, {0.0f}, cfg);
    };
    // at the boundary both branches coincide
    EXPECT_NEAR(run(1.1f, 1.0f).policy, -1.1, 1e-5);
    EXPECT_NEAR(run(0.9f, -1.0f).policy, 0.9, 1e-5);
    // beyond it the objective is flat: no gradient
    EXPECT_EQ(run(1.3f, 1.0f).dlogits.cwiseAbs().sum(), 0.0f);
    EXPECT_EQ(run(0.7f, -1.0f).dlogits.cwiseAbs().sum(), 0.0f);
    EXPECT_NEAR(run(1.3f, 1.0f).policy, -1.1, 1e-5);
    // inside, or outside on the pessimistic side, the gradient flows
    EXPECT_GT(run(1.05f, 1.0f).dlogits.cwiseAbs().sum(), 0.0f);
    EXPECT_GT(run(1.3f, -1.0f).dlogits.cwiseAbs().sum(), 0.0f);
    EXPECT_NEAR(run(1.3f, -1.0f).policy, 1.3, 1e-5);
}

TEST(PPO, GeneralisedAdvantage) {
    // two envs, three steps, env 1 terminates at t = 1
    const std::vector<float> rewards{0, 0, 1, 1, 0, 0};
    const std::vector<float> values{0.5f, 0.2f, 0.4f, 0.3f, 0.1f, 0.6f};
    const std::vector<bool> dones{false, false, false, true, false, false};
    const std::vector<float> last{0.7f, 0.9f};
    std::vector<float> adv, ret;
    const double g = 0.9, l = 0.8;
    compute_gae(rewards, values, dones, last, 3, 2, g, l, adv, ret);
    // env 0
    const double d2 = 0 + g * 0.7 - 0.1, d1 = 1 + g * 0.1 - 0.4, d0 = 0 + g * 0.4 - 0.5;
    const double a2 = d2, a1 = d1 + g * l * a2, a0 = d0 + g * l * a1;
    EXPECT_NEAR(adv[4], a2, 1e-6);
    EXPECT_NEAR(adv[2], a1, 1e-6);
    EXPECT_NEAR(adv[0], a0, 1e-6);
    // env 1: step 1 is terminal, so step 0 only sees it and step 2 restarts
    const double e2 = 0 + g * 0.9 - 0.6, e1 = 1 - 0.3, e0 = 0 + g * 0.3 - 0.2;
    EXPECT_NEAR(adv[5], e2, 1e-6);
    EXPECT_NEAR(adv[3], e1, 1e-6);
    EXPECT_NEAR(adv[1], e0 + g * l * e1, 1e-6);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(ret[i], adv[i] + values[i], 1e-6);
}

TEST(PPO, AdvantageNormalization) {
    std::vector<float> v{1, 2, 3, 4, 10};
    normalize(v);
    double m = 0, sq = 0;
    for (float x : v) m += x;
    m /= 5;
    for (float x : v) sq += (x - m) * (x - m);
    EXPECT_NEAR(m, 0.0, 1e-6);
    EXPECT_NEAR(std::sqrt(sq / 5), 1.0, 1e-5);
    std::vector<float> one{3};
    normalize(one);
    EXPECT_EQ(one[0], 3);
}

TEST(PPO, CorridorOptimalWithinFiftyThousandSteps) {
    PPOConfig cfg;
    cfg.total_steps = 5e4;
    cfg.seed = 1;
    Rng rng(2);
    CorridorEnv env(cfg.envs);
    model::Policy<float> policy(env.obs_dim(), rng);
    const auto report = train_ppo(policy, env, cfg);
    ASSERT_FALSE(report.updates.empty());
    CorridorEnv probe(1);
    int t = 0;
    for (; t < 20; ++t) {
        const auto [lg, v] = policy.forward(probe.observe());
        Eigen::Index best;
        lg.col(0).maxCoeff(&best);
        if (probe.step({static_cast<int>(best)}).done[0]) break;
    }
    EXPECT_EQ(t + 1, probe.optimal_length());
    EXPECT_TRUE(probe.drain_episodes().at(0).success);
}

TEST(PPO, SeededRunsAreIdentical) {
    PPOConfig cfg;
    cfg.total_steps = 4096;
    auto run = [&] {
        Rng rng(5);
        CorridorEnv env(cfg.envs);
        model::Policy<float> policy(env.obs_dim(), rng);
        train_ppo(policy, env, cfg);
        nn::ParamRefs<float> ps;
        policy.collect(ps);
        return nn::params_hash(ps);
    };
    EXPECT_EQ(run(), run());
}

TEST(PPO, RejectsBadConfig) {
    PPOConfig cfg;
    cfg.minibatches = 3;
    Rng rng(1);
    CorridorEnv env(cfg.envs);
    model::Policy<float> policy(env.obs_dim(), rng);
    EXPECT_THROW(train_ppo(policy, env, cfg), std::invalid_argument);
}

TEST(RL, HighLevelModuleFrozen) {
    const auto& g = default_recipes();
    const auto traces = generate_dataset(g, g.catalog(Split::Train), 2, 5);
    model::ModelConfig mc;
    auto agent = model::make_agent<float>(g, instruction_corpus(traces), mc, 1);
    const auto frozen = nn::params_hash(agent.high_level_params());
    nn::ParamRefs<float> gen;
    agent.generator()->collect(gen);
    const auto gen_hash = nn::params_hash(gen);
    const auto policy_hash = nn::params_hash(agent.policy_params());
    PPOConfig cfg;
    cfg.total_steps = 2048;
    cfg.log_every = 1;
    const auto report = train_rl(agent, g.catalog(Split::Train), cfg);
    EXPECT_EQ(nn::params_hash(agent.high_level_params()), frozen);
    EXPECT_EQ(nn::params_hash(gen), gen_hash);
    EXPECT_NE(nn::params_hash(agent.policy_params()), policy_hash);
    EXPECT_EQ(report.updates.size(), 2u);
    EXPECT_EQ(report.updates.back()["steps"].get<long>(), 2048);
}

TEST(RL, FeatureEnvMatchesAgentInput) {
    const auto& g = default_recipes();
    const auto traces = generate_dataset(g, g.catalog(Split::Train), 2, 5);
    model::ModelConfig mc;
    mc.variant = model::Variant::StatePrediction;
    auto agent = model::make_agent<float>(g, instruction_corpus(traces), mc, 1);
    CraftFeatureEnv<float> env(agent, {g.task("Gold Ore")}, 2, 0);
    EXPECT_EQ(env.obs_dim(), agent.policy_input_dim());
    const auto o = env.observe();
    EXPECT_EQ(o.rows(), agent.policy_input_dim());
    EXPECT_EQ(o.cols(), 2);
    EXPECT_TRUE(o.allFinite());
    for (int i = 0; i < 150; ++i) env.step({0, 1});
    const auto eps = env.drain_episodes();
    EXPECT_EQ(eps.size(), 2u);
    for (const auto& e : eps) {
        EXPECT_EQ(e.length, kMaxSteps);
        EXPECT_FALSE(e.success);
    }
}
