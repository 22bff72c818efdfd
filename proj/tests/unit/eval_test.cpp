#include <gtest/gtest.h>

#include "craftlang/eval/interpret.hpp"
#include "craftlang/train/il.hpp"

using namespace craftlang;
using namespace craftlang::eval;

namespace {

const RecipeGraph& graph() { return default_recipes(); }

std::vector<TaskSpec> class_tasks(int steps) {
    std::vector<TaskSpec> out;
    for (const auto& t : graph().catalog(Split::All))
        if (t.declared_steps == steps) out.push_back(t);
    return out;
}

model::Agent<float> small_agent(model::Variant v) {
    const auto traces = generate_dataset(graph(), graph().catalog(Split::Train), 2, 5);
    model::ModelConfig cfg;
    cfg.variant = v;
    return model::make_agent<float>(graph(), train::instruction_corpus(traces), cfg, 1);
}

}  // namespace

TEST(Evaluate, ExpertSolvesEveryTask) {
    ExpertPolicy expert(graph());
    EvalConfig cfg;
    cfg.games = 5;
    cfg.seeds = {0, 1};
    const auto table = evaluate(graph(), expert, graph().catalog(Split::All), cfg);
    ASSERT_EQ(table.rows.size(), 49u);
    for (const auto& r : table.rows)
        for (double s : r.success) EXPECT_EQ(s, 100.0) << r.task;
    EXPECT_EQ(table.average(), 100.0);
}

TEST(Evaluate, RandomPolicyFailsFiveStepTasks) {
    RandomPolicy random(9);
    EvalConfig cfg;
    cfg.games = 100;
    cfg.seeds = {0};
    const auto table = evaluate(graph(), random, class_tasks(5), cfg);
    EXPECT_FALSE(table.rows.empty());
    EXPECT_EQ(table.average(5), 0.0);
}

TEST(Evaluate, DeterministicGivenSeeds) {
    auto agent = small_agent(model::Variant::StatePrediction);
    EvalConfig cfg;
    cfg.games = 4;
    cfg.seeds = {3, 4};
    AgentPolicy<float> p1(agent), p2(agent);
    const auto a = evaluate(graph(), p1, graph().catalog(Split::Train), cfg);
    const auto b = evaluate(graph(), p2, graph().catalog(Split::Train), cfg);
    EXPECT_EQ(a.csv(), b.csv());
    // batch size does not change outcomes
    cfg.batch = 7;
    AgentPolicy<float> p3(agent);
    EXPECT_EQ(evaluate(graph(), p3, graph().catalog(Split::Train), cfg).csv(), a.csv());
}

TEST(Evaluate, EvalSeedsDifferFromDatasetSeeds) {
    for (const auto& t : graph().catalog(Split::Train))
        for (std::uint64_t k = 0; k < 50; ++k) EXPECT_NE(eval_game_seed(0, t.goal, k), game_seed(0, t, k));
}

TEST(Evaluate, RejectsZeroGames) {
    RandomPolicy random;
    EvalConfig cfg;
    cfg.games = 0;
    EXPECT_THROW(evaluate(graph(), random, graph().catalog(Split::Train), cfg), std::invalid_argument);
}

TEST(ResultTable, AveragesMatchCells) {
    ResultTable t;
    t.seeds = {0, 1};
    t.rows = {{"A", 2, Split::Unseen, {100, 80}}, {"B", 2, Split::Unseen, {50, 70}}, {"C", 3, Split::Unseen, {10, 30}}};
    EXPECT_DOUBLE_EQ(t.average(2), (90 + 60) / 2.0);
    EXPECT_DOUBLE_EQ(t.average(3), 20.0);
    EXPECT_DOUBLE_EQ(t.average(), (90 + 60 + 20) / 3.0);
    EXPECT_DOUBLE_EQ(t.average(2, 0), 75.0);
    EXPECT_DOUBLE_EQ(t.average(2, 1), 75.0);
    EXPECT_DOUBLE_EQ(t.seed_variance(2), 0.0);
    EXPECT_DOUBLE_EQ(t.seed_variance(3), 200.0);
    const auto csv = t.csv();
    EXPECT_NE(csv.find("\"2-AVG\",2,75.0,75.0,75.0"), std::string::npos) << csv;
    EXPECT_NE(csv.find("\"Overall-AVG\""), std::string::npos);
    EXPECT_NE(t.text().find("3-AVG"), std::string::npos);
    const auto j = t.to_json();
    EXPECT_EQ(j["rows"].size(), 3u);
    EXPECT_NEAR(j["overall"]["mean"].get<double>(), 56.6667, 1e-3);
}

TEST(Interpretability, ExpertRunsMatchSubgoalSegments) {
    const auto traces = generate_dataset(graph(), graph().catalog(Split::Train), 5, 12);
    const auto r = interpretability_report(traces);
    long actions = 0, instructions = 0;
    for (const auto& t : traces) {
        actions += static_cast<long>(t.steps.size());
        for (const auto& s : t.steps) instructions += s.instruction.has_value();
    }
    EXPECT_NEAR(r.mean_run_length, static_cast<double>(actions) / static_cast<double>(instructions), 1e-9);
    EXPECT_EQ(r.instruction_changes, instructions - static_cast<long>(traces.size()));
    for (const auto& e : r.episodes) {
        int boundaries = 0;
        for (const auto& s : traces[&e - &r.episodes[0]].steps) boundaries += s.instruction.has_value();
        EXPECT_EQ(static_cast<int>(e.keyframes.size()), boundaries - 1);
        EXPECT_TRUE(e.failure.empty());
    }
    EXPECT_GT(r.cooccurrence, 0.5);
    EXPECT_LE(r.cooccurrence, 1.0);
}

TEST(Interpretability, StuckPolicyFlagged) {
    Trace t;
    t.task = "Gold Ore";
    WorldState s = reset(graph(), "Gold Ore", 0);
    for (int i = 0; i < kMaxSteps; ++i) {
        TraceStep st{s, i == 0 ? std::optional<std::string>("mine gold ore") : std::nullopt, Action::Toggle};
        t.steps.push_back(st);
        apply_action(graph(), s, Action::Toggle);
    }
    t.final_state = s;
    t.success = false;
    const auto r = interpretability_report(std::vector<Trace>{t});
    EXPECT_DOUBLE_EQ(r.mean_run_length, 100.0);
    EXPECT_EQ(r.policy_failures, 1);
    EXPECT_EQ(r.instruction_changes, 0);
    EXPECT_EQ(r.cooccurrence, 0.0);
}

TEST(Interpretability, CooccurrenceWindow) {
    // change at step 4 with an inventory change caused by action 2 (|2 - 3| <= 1): matched
    // change at step 9 with none nearby: unmatched
    Trace t;
    t.task = "Gold Ore";
    WorldState s = reset(graph(), "Gold Ore", 0);
    for (int i = 0; i < 12; ++i) {
        std::optional<std::string> ins;
        if (i == 0) ins = "a";
        if (i == 4) ins = "b";
        if (i == 9) ins = "c";
        t.steps.push_back({s, ins, Action::Toggle});
        WorldState n = s;
        ++n.step;
        if (i == 2) n.inventory.add(0, 1);
        s = n;
    }
    t.final_state = s;
    const auto r = interpretability_report(std::vector<Trace>{t});
    EXPECT_EQ(r.instruction_changes, 2);
    EXPECT_DOUBLE_EQ(r.cooccurrence, 0.5);
    EXPECT_EQ(r.episodes[0].keyframes, (std::vector<int>{4, 9}));
    EXPECT_EQ(r.episodes[0].run_lengths, (std::vector<int>{4, 5, 3}));
}

TEST(Interpretability, AgentReportAndLanguageRequirement) {
    auto agent = small_agent(model::Variant::Ours);
    const auto [r, traces] = interpretability_report(agent, graph().catalog(Split::Train), 20, 1);
    EXPECT_EQ(r.episodes.size(), 20u);
    EXPECT_EQ(traces.size(), 20u);
    for (std::size_t i = 0; i < traces.size(); ++i) {
        EXPECT_TRUE(validate_trace(graph(), traces[i]).ok);
        EXPECT_EQ(r.episodes[i].instructions.size(), traces[i].steps.size());
    }
    EXPECT_FALSE(r.transcript(graph(), traces).empty());
    auto plain = small_agent(model::Variant::NoLanguage);
    EXPECT_THROW(interpretability_report(plain, graph().catalog(Split::Train), 5, 1), std::invalid_argument);
}
