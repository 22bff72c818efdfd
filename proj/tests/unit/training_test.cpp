#include <gtest/gtest.h>

#include "craftlang/eval/rollout.hpp"
#include "craftlang/train/il.hpp"

using namespace craftlang;
using namespace craftlang::model;

namespace {

const RecipeGraph& graph() { return default_recipes(); }

// One default-sized imitation run shared by the tests below.
struct Trained {
    Agent<float> agent;
    std::vector<Trace> held_out;
};

const Trained& trained() {
    static const Trained t = [] {
        const auto& g = graph();
        const auto traces = generate_dataset(g, g.catalog(Split::Train), 400, 0);
        auto agent = make_agent<float>(g, train::instruction_corpus(traces), ModelConfig{});
        const auto data = train::build_il_data(agent, traces);
        train::ILConfig cfg;
        cfg.eval_games = 0;
        train::train_il(agent, data, cfg);
        return Trained{std::move(agent), generate_dataset(g, g.catalog(Split::Train), 20, 99)};
    }();
    return t;
}

}  // namespace

TEST(DefaultImitation, HeldOutActionAccuracyAtLeastSeventyPercent) {
    const auto& t = trained();
    const auto data = train::build_il_data(t.agent, t.held_out);
    EXPECT_GE(train::action_accuracy(t.agent, data), 0.70);
}

TEST(DefaultImitation, OneStepSuccessAtLeastEightyPercent) {
    const auto& t = trained();
    eval::AgentPolicy<float> p(t.agent);
    const auto s = eval::success_by_class(graph(), p, graph().catalog(Split::Train), 100, 5);
    EXPECT_GE(s.at(1), 0.80);
}
