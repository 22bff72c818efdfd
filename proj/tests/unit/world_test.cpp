#include <gtest/gtest.h>

#include <cstdlib>

#include "craftlang/render.hpp"
#include "craftlang/world.hpp"

using namespace craftlang;

namespace {

const RecipeGraph& graph() { return default_recipes(); }

WorldState blank(std::string_view goal) {
    WorldState s;
    s.inventory = Inventory(graph().item_count());
    s.goal = graph().item_id(goal);
    return s;
}

Cell tool(std::string_view name) { return {CellKind::Tool, graph().item_id(name)}; }
Cell node(std::string_view name) { return {CellKind::ResourceNode, *graph().find_node(name)}; }
Cell bench(std::string_view name) { return {CellKind::Bench, *graph().find_bench(name)}; }

}  // namespace

TEST(World, MovementBlockedByWallAndEdge) {
    auto s = blank("Iron Ore");
    s.agent = {2, 2};
    s.at({2, 1}) = {CellKind::Wall, -1};
    auto out = step(graph(), s, Action::Left);
    EXPECT_EQ(out.state.agent, (Position{2, 2}));
    EXPECT_EQ(out.state.step, 1);

    s.agent = {0, 0};
    out = step(graph(), s, Action::Up);
    EXPECT_EQ(out.state.agent, (Position{0, 0}));
    out = step(graph(), out.state, Action::Right);
    EXPECT_EQ(out.state.agent, (Position{0, 1}));
    EXPECT_EQ(out.state.step, 2);
}

TEST(World, ClosedDoorBlocksOpenDoorDoesNot) {
    auto s = blank("Iron Ore");
    s.agent = {2, 2};
    s.at({2, 3}) = {CellKind::DoorClosed, -1};
    EXPECT_EQ(step(graph(), s, Action::Right).state.agent, (Position{2, 2}));
    s.at({2, 3}) = {CellKind::DoorOpen, -1};
    EXPECT_EQ(step(graph(), s, Action::Right).state.agent, (Position{2, 3}));
}

TEST(World, AgentMayWalkOverEntities) {
    auto s = blank("Iron Ore");
    s.agent = {2, 2};
    s.at({1, 2}) = tool("Pickaxe");
    EXPECT_EQ(step(graph(), s, Action::Up).state.agent, (Position{1, 2}));
}

// Every (agent cell, pickaxe held, action) on a board with one vein.
TEST(World, MineTransitionTableBruteForce) {
    const Position vein{2, 2};
    const ItemId ore = graph().item_id("Iron Ore");
    const ItemId pick = graph().item_id("Pickaxe");
    for (int cell = 0; cell < kCellCount; ++cell) {
        const auto agent = Position::from_index(cell);
        for (int held = 0; held <= 1; ++held) {
            for (int a = 0; a < kActionCount; ++a) {
                auto s = blank("Iron Ore");
                s.at(vein) = node("Iron Ore Vein");
                s.agent = agent;
                if (held) s.inventory.add(pick, 1);
                const auto action = static_cast<Action>(a);
                const auto out = step(graph(), s, action);

                const bool adjacent = std::abs(agent.row - vein.row) + std::abs(agent.col - vein.col) == 1;
                const int expected_ore = (action == Action::Mine && adjacent && held) ? 1 : 0;
                Position expected_pos = agent;
                if (a <= 3) {
                    const Position q = agent + direction(action);
                    if (q.in_bounds()) expected_pos = q;
                }
                EXPECT_EQ(out.state.inventory.count(ore), expected_ore);
                EXPECT_EQ(out.state.inventory.count(pick), held);
                EXPECT_EQ(out.state.agent, expected_pos);
                EXPECT_EQ(out.state.step, 1);
                EXPECT_EQ(out.reward, expected_ore ? 1.0 : 0.0);
                EXPECT_EQ(out.done, expected_ore == 1);
                EXPECT_EQ(out.state.at(vein), node("Iron Ore Vein")) << "nodes persist";
            }
        }
    }
}

TEST(World, StoneBootsCraft) {
    auto s = blank("Stone Boots");
    s.agent = {1, 1};
    s.at({1, 2}) = bench("Stone Boots bench");
    s.inventory.add(graph().key_item(), 1);
    s.inventory.add(graph().item_id("Pickaxe"), 1);
    s.inventory.add(graph().item_id("Cobblestone"), 1);
    const auto out = step(graph(), s, Action::Craft);
    EXPECT_EQ(out.reward, 1.0);
    EXPECT_TRUE(out.success);
    EXPECT_TRUE(out.done);
    const auto inv = render(graph(), out.state)["inventory"];
    EXPECT_EQ(inv, nlohmann::json::parse(R"({"key": 1, "Pickaxe": 1, "Cobblestone": 0, "Stone Boots": 1})"));
}

TEST(World, CraftWithoutInputsIsNoop) {
    auto s = blank("Stone Boots");
    s.agent = {1, 1};
    s.at({1, 2}) = bench("Stone Boots bench");
    const auto out = step(graph(), s, Action::Craft);
    EXPECT_EQ(out.state.inventory, s.inventory);
    EXPECT_EQ(out.reward, 0.0);
    EXPECT_FALSE(out.done);
}

TEST(World, GrabTakesFirstNeighbourInScanOrder) {
    auto s = blank("Iron Ore");
    s.agent = {2, 2};
    s.at({3, 2}) = tool("Axe");      // Down
    s.at({2, 1}) = tool("Pickaxe");  // Left: earlier in Up, Left, Right, Down
    auto out = step(graph(), s, Action::Grab);
    EXPECT_EQ(out.state.inventory.count(graph().item_id("Pickaxe")), 1);
    EXPECT_EQ(out.state.inventory.count(graph().item_id("Axe")), 0);
    EXPECT_EQ(out.state.at({2, 1}).kind, CellKind::Empty);
    out = step(graph(), out.state, Action::Grab);
    EXPECT_EQ(out.state.inventory.count(graph().item_id("Axe")), 1);
}

TEST(World, DiagonalIsNotAdjacent) {
    auto s = blank("Iron Ore");
    s.agent = {2, 2};
    s.at({1, 1}) = tool("Pickaxe");
    EXPECT_EQ(step(graph(), s, Action::Grab).state.inventory, s.inventory);
}

TEST(World, KeyOpensOneDoorAndIsRetained) {
    auto s = blank("Iron Ore");
    s.agent = {2, 2};
    s.at({2, 3}) = {CellKind::DoorClosed, -1};
    s.at({0, 0}) = {CellKind::DoorClosed, -1};
    EXPECT_EQ(step(graph(), s, Action::Toggle).state.at({2, 3}).kind, CellKind::DoorClosed) << "needs key";
    s.inventory.add(graph().key_item(), 1);
    const auto out = step(graph(), s, Action::Toggle);
    EXPECT_EQ(out.state.at({2, 3}).kind, CellKind::DoorOpen);
    EXPECT_EQ(out.state.at({0, 0}).kind, CellKind::DoorClosed);
    EXPECT_EQ(out.state.inventory.count(graph().key_item()), 1);
}

TEST(World, SwitchOpensAllDoors) {
    auto s = blank("Iron Ore");
    s.agent = {2, 2};
    s.at({1, 2}) = {CellKind::Switch, -1};
    s.at({4, 4}) = {CellKind::DoorClosed, -1};
    s.at({0, 0}) = {CellKind::DoorClosed, -1};
    const auto out = step(graph(), s, Action::Toggle);
    EXPECT_EQ(out.state.at({4, 4}).kind, CellKind::DoorOpen);
    EXPECT_EQ(out.state.at({0, 0}).kind, CellKind::DoorOpen);
    EXPECT_EQ(out.state.at({1, 2}).kind, CellKind::Switch);
}

TEST(World, StepBudgetEndsEpisode) {
    auto s = blank("Iron Ore");
    for (int i = 0; i < kMaxSteps; ++i) {
        ASSERT_FALSE(is_done(s));
        apply_action(graph(), s, Action::Toggle);
    }
    EXPECT_TRUE(is_done(s));
    EXPECT_FALSE(is_success(s));
    EXPECT_THROW(step(graph(), s, Action::Up), std::logic_error);
}

TEST(World, IsSuccess) {
    auto s = blank("Gold Ore");
    EXPECT_FALSE(is_success(s));
    s.inventory.add(graph().item_id("Gold Ore"), 1);
    EXPECT_TRUE(is_success(s));
}

TEST(World, ActionNames) {
    EXPECT_EQ(kActionCount, 8);
    for (int i = 0; i < kActionCount; ++i) EXPECT_EQ(parse_action(to_string(static_cast<Action>(i))), static_cast<Action>(i));
    EXPECT_FALSE(parse_action("Jump"));
    EXPECT_FALSE(action_from_index(9));
}

TEST(Render, RejectsInvalidDocuments) {
    auto s = blank("Iron Ore");
    auto j = render(graph(), s);
    auto bad = j;
    bad["cells"][0]["kind"] = "Lava";
    EXPECT_THROW(parse_state(graph(), bad), std::invalid_argument);
    bad = j;
    bad["cells"].erase(0);
    EXPECT_THROW(parse_state(graph(), bad), std::invalid_argument);
    bad = j;
    bad["cells"][0] = {{"row", 0}, {"col", 0}, {"kind", "Tool"}, {"name", "Banana"}};
    EXPECT_THROW(parse_state(graph(), bad), std::invalid_argument);
    bad = j;
    bad["step"] = 101;
    EXPECT_THROW(parse_state(graph(), bad), std::invalid_argument);
    bad = j;
    bad["cells"][0]["kind"] = "Wall";
    bad["agent"] = {{"row", 0}, {"col", 0}};
    EXPECT_THROW(parse_state(graph(), bad), std::invalid_argument);
}

TEST(Render, StepFieldCountsActions) {
    auto s = blank("Iron Ore");
    s.agent = {2, 2};
    for (int i = 0; i < 3; ++i) apply_action(graph(), s, Action::Up);
    EXPECT_EQ(render(graph(), s)["step"], 3);
    EXPECT_EQ(parse_state(graph(), render(graph(), s)), s);
}
