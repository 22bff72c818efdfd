#include <gtest/gtest.h>

#include <algorithm>
#include <map>

#include "craftlang/env.hpp"
#include "craftlang/render.hpp"

using namespace craftlang;

namespace {

const RecipeGraph& graph() { return default_recipes(); }

std::map<std::string, int> entity_counts(const WorldState& s) {
    std::map<std::string, int> out;
    for (const auto& c : s.grid) {
        if (c.kind == CellKind::Tool) ++out[graph().item_name(c.id)];
        if (c.kind == CellKind::ResourceNode) ++out[graph().mine_rules()[static_cast<std::size_t>(c.id)].node];
        if (c.kind == CellKind::Bench) ++out[graph().benches()[static_cast<std::size_t>(c.id)]];
    }
    return out;
}

}  // namespace

TEST(Env, ResetIsDeterministic) {
    const auto a = reset(graph(), "Iron Ore", 7);
    const auto b = reset(graph(), "Iron Ore", 7);
    EXPECT_EQ(a, b);
    EXPECT_EQ(render(graph(), a).dump(), render(graph(), b).dump());
    EXPECT_EQ(a.step, 0);
    EXPECT_TRUE(a.inventory.entries().empty());
}

TEST(Env, DifferentSeedsGiveDifferentBoards) {
    int distinct = 0;
    const auto first = reset(graph(), "Iron Ore", 0);
    for (std::uint64_t seed = 1; seed < 20; ++seed) distinct += reset(graph(), "Iron Ore", seed) != first;
    EXPECT_GE(distinct, 18);
}

TEST(Env, IronOreBoardsContainRequiredEntities) {
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const auto counts = entity_counts(reset(graph(), "Iron Ore", seed));
        ASSERT_EQ(counts.count("Pickaxe"), 1u) << seed;
        ASSERT_EQ(counts.count("Iron Ore Vein"), 1u) << seed;
    }
}

TEST(Env, BoardsHoldRequiredPlusUpToThreeDistractors) {
    std::map<int, int> distractor_hist;
    int dividers = 0;
    int boards = 0;
    for (const auto& task : graph().catalog(Split::All)) {
        const auto required = graph().required_board_items(task.goal_id);
        for (std::uint64_t seed = 0; seed < 40; ++seed) {
            const auto s = reset(graph(), task, seed);
            const auto counts = entity_counts(s);
            int total = 0;
            for (const auto& [name, n] : counts) {
                EXPECT_EQ(n, 1) << "duplicate " << name;
                total += n;
            }
            for (const auto& e : required) EXPECT_EQ(counts.count(graph().entity_name(e)), 1u);
            const int extra = total - static_cast<int>(required.size());
            EXPECT_GE(extra, 0);
            EXPECT_LE(extra, 3);
            ++distractor_hist[extra];

            const auto walls = std::count_if(s.grid.begin(), s.grid.end(), [](const Cell& c) { return c.kind == CellKind::Wall; });
            const auto doors = std::count_if(s.grid.begin(), s.grid.end(), [](const Cell& c) { return c.kind == CellKind::DoorClosed; });
            const auto blockers = std::count_if(s.grid.begin(), s.grid.end(),
                                                [](const Cell& c) { return c.kind == CellKind::Key || c.kind == CellKind::Switch; });
            if (doors) {
                EXPECT_EQ(walls, 4);
                EXPECT_EQ(doors, 1);
                EXPECT_EQ(blockers, 1);
                ++dividers;
            } else {
                EXPECT_EQ(walls, 0);
                EXPECT_EQ(blockers, 0);
            }
            EXPECT_TRUE(is_passable(s.at(s.agent).kind));
            EXPECT_EQ(s.at(s.agent).kind, CellKind::Empty);
            ++boards;
        }
    }
    EXPECT_EQ(distractor_hist.size(), 4u);
    const double divider_rate = static_cast<double>(dividers) / boards;
    EXPECT_NEAR(divider_rate, 0.5, 0.06);
}

TEST(Env, UnknownTaskRejected) {
    EXPECT_THROW(reset(graph(), "Mithril Sword", 1), UnknownNameError);
    TaskSpec bogus{"Stick", graph().item_id("Stick"), 2, Split::Train};
    EXPECT_THROW(generate_board(graph(), bogus, 1), UnknownNameError);
}

TEST(Env, ImpossibleConfigSurfacesGenerationError) {
    BoardConfig cfg;
    cfg.max_attempts = 3;
    cfg.max_distractors = 40;  // more entities than free cells on divided boards
    cfg.divider_probability = 1.0;
    auto doc = graph().source();
    EXPECT_NO_THROW(generate_board(graph(), graph().task("Gold Ore"), 1, cfg));
    // A board that can never fit: a 5-step task with every distractor.
    BoardConfig crowded = cfg;
    crowded.max_distractors = 1000;
    std::size_t fails = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        try {
            generate_board(graph(), graph().task("Diamond Pickaxe"), seed, crowded);
        } catch (const BoardGenerationError&) {
            ++fails;
        }
    }
    EXPECT_GT(fails, 0u);
}

TEST(Env, RenderRoundTripAcrossRandomRollouts) {
    Rng rng(99);
    const auto tasks = graph().catalog(Split::All);
    int checked = 0;
    for (int ep = 0; ep < 1000; ++ep) {
        const auto& task = tasks[static_cast<std::size_t>(ep) % tasks.size()];
        Environment env(graph());
        env.reset(task, static_cast<std::uint64_t>(ep));
        while (!env.done()) {
            const auto& s = env.state();
            ASSERT_EQ(parse_state(graph(), render(graph(), s)), s);
            ++checked;
            env.step(static_cast<Action>(rng.below(kActionCount)));
        }
        ASSERT_EQ(parse_state(graph(), render(graph(), env.state())), env.state());
    }
    EXPECT_GT(checked, 50000);
}

TEST(Env, RandomRolloutInvariants) {
    Rng rng(5);
    const auto tasks = graph().catalog(Split::All);
    for (int ep = 0; ep < 300; ++ep) {
        const auto& task = tasks[rng.below(tasks.size())];
        Environment env(graph());
        env.reset(task, rng.next_u64());
        double total = 0;
        int steps = 0;
        bool was_done = false;
        while (!env.done()) {
            const auto before = env.state();
            const auto out = env.step(static_cast<Action>(rng.below(kActionCount)));
            ASSERT_FALSE(was_done);
            ASSERT_EQ(out.state.step, before.step + 1);
            ASSERT_EQ(out.done, out.success || out.state.step == kMaxSteps);
            total += out.reward;
            was_done = out.done;
            ++steps;
        }
        EXPECT_LE(steps, kMaxSteps);
        EXPECT_TRUE(total == 0.0 || total == 1.0);
    }
}

TEST(Env, EveryCatalogTaskSolvableByPlanner) {
    for (const auto& task : graph().catalog(Split::All)) {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const auto s = reset(graph(), task, seed);
            const auto used = planner_rollout(graph(), s);
            ASSERT_TRUE(used.has_value()) << task.goal << " seed " << seed;
            EXPECT_LE(*used, kMaxSteps);
        }
    }
}
