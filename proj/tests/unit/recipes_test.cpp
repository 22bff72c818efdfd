#include <gtest/gtest.h>

#include <map>
#include <set>
#include <string>
#include <vector>

#include "craftlang/recipes.hpp"

using namespace craftlang;

namespace {

const RecipeGraph& graph() { return default_recipes(); }

std::vector<std::string> names(const RecipeGraph& g, const std::vector<Production>& ps) {
    std::vector<std::string> out;
    for (const auto& p : ps) out.push_back((p.kind == Production::Kind::Mine ? "mine " : "craft ") + g.item_name(p.item));
    return out;
}

// Independent oracle: demand propagation over the raw config document.
// Counts how many times each item must be produced, without recursion order.
std::map<std::string, int> demand_counts(const nlohmann::json& doc, const std::string& goal) {
    std::map<std::string, std::vector<std::pair<std::string, int>>> recipes;
    for (const auto& r : doc["recipes"]) {
        auto& ins = recipes[r["output"]];
        for (const auto& in : r["inputs"]) ins.emplace_back(in["item"], in.value("count", 1));
    }
    std::map<std::string, int> produced;
    std::vector<std::string> frontier{goal};
    while (!frontier.empty()) {
        auto item = frontier.back();
        frontier.pop_back();
        ++produced[item];
        if (auto it = recipes.find(item); it != recipes.end())
            for (const auto& [in, n] : it->second)
                for (int k = 0; k < n; ++k) frontier.push_back(in);
    }
    return produced;
}

nlohmann::json minimal_config() {
    return nlohmann::json::parse(R"({
      "tools": ["Pickaxe"],
      "benches": ["Ingot bench"],
      "mine_rules": [{"node": "Ore Vein", "tool": "Pickaxe", "yield": "Ore"}],
      "recipes": [{"output": "Ingot", "inputs": [{"item": "Ore", "count": 1}], "bench": "Ingot bench"}],
      "catalogs": {"train": [{"goal": "Ingot", "steps": 2}], "unseen": []}
    })");
}

}  // namespace

TEST(Recipes, DefaultCatalogSizes) {
    EXPECT_EQ(graph().catalog(Split::Train).size(), 14u);
    EXPECT_EQ(graph().catalog(Split::Unseen).size(), 35u);
    auto all = graph().catalog(Split::All);
    EXPECT_EQ(all.size(), 49u);
    std::set<std::string> goals;
    for (const auto& t : all) goals.insert(t.goal);
    EXPECT_EQ(goals.size(), 49u);
}

TEST(Recipes, TrainingStepCountsMatchRecipeTable) {
    const std::vector<std::pair<std::string, int>> table = {
        {"Gold Ore", 1},           {"Iron Ore", 1},           {"Diamond Boots", 2},      {"Brick Stairs", 2},
        {"Cobblestone Stairs", 2}, {"Wooden Door", 3},        {"Wood Stairs", 3},        {"Iron Ingot", 3},
        {"Leather Leggins", 3},    {"Leather Chestplate", 3}, {"Leather Helmet", 3},     {"Leather Boots", 3},
        {"Stone Pickaxe", 5},      {"Diamond Pickaxe", 5}};
    const auto train = graph().catalog(Split::Train);
    ASSERT_EQ(train.size(), table.size());
    for (std::size_t i = 0; i < table.size(); ++i) {
        EXPECT_EQ(train[i].goal, table[i].first);
        EXPECT_EQ(train[i].declared_steps, table[i].second);
        EXPECT_EQ(static_cast<int>(graph().expand(table[i].first).size()), table[i].second) << table[i].first;
    }
}

TEST(Recipes, UnseenStepClasses) {
    std::map<int, int> classes;
    for (const auto& t : graph().catalog(Split::Unseen)) {
        ++classes[t.declared_steps];
        EXPECT_EQ(static_cast<int>(graph().expand(t.goal_id).size()), t.declared_steps) << t.goal;
    }
    EXPECT_EQ(classes[2], 18);
    EXPECT_EQ(classes[3], 12);
    EXPECT_EQ(classes[5], 5);
}

TEST(Recipes, ExpandExamples) {
    EXPECT_EQ(names(graph(), graph().expand("Iron Ore")), (std::vector<std::string>{"mine Iron Ore"}));
    EXPECT_EQ(names(graph(), graph().expand("Stone Pickaxe")),
              (std::vector<std::string>{"mine Wood", "craft Wood Plank", "craft Stick", "mine Cobblestone",
                                        "craft Stone Pickaxe"}));
    EXPECT_EQ(names(graph(), graph().expand("Iron Ingot")),
              (std::vector<std::string>{"mine Iron Ore", "mine Coal", "craft Iron Ingot"}));
}

TEST(Recipes, ExpandAgreesWithDemandOracleForEveryTask) {
    for (const auto& t : graph().catalog(Split::All)) {
        const auto ps = graph().expand(t.goal_id);
        std::map<std::string, int> counts;
        for (const auto& p : ps) ++counts[graph().item_name(p.item)];
        EXPECT_EQ(counts, demand_counts(graph().source(), t.goal)) << t.goal;

        // Dependencies first: replaying the list never crafts without inputs.
        std::map<ItemId, int> inv;
        for (const auto& p : ps) {
            if (p.kind == Production::Kind::Craft) {
                for (const auto& in : graph().recipes()[static_cast<std::size_t>(p.rule)].inputs) {
                    ASSERT_GE(inv[in.id], in.count) << t.goal;
                    inv[in.id] -= in.count;
                }
            }
            ++inv[p.item];
        }
        EXPECT_EQ(ps.back().item, t.goal_id);
    }
}

TEST(Recipes, RequiredBoardItems) {
    auto as_names = [](const std::vector<EntityRef>& es) {
        std::set<std::string> out;
        for (const auto& e : es) out.insert(graph().entity_name(e));
        return out;
    };
    EXPECT_EQ(as_names(graph().required_board_items("Gold Ore")), (std::set<std::string>{"Pickaxe", "Gold Ore Vein"}));
    EXPECT_EQ(as_names(graph().required_board_items("Iron Ore")), (std::set<std::string>{"Pickaxe", "Iron Ore Vein"}));
    EXPECT_EQ(as_names(graph().required_board_items("Leather Helmet")),
              (std::set<std::string>{"Sword", "Rabbit", "Leather bench", "Leather Helmet bench"}));
}

TEST(Recipes, UnknownItemThrows) {
    EXPECT_THROW(graph().expand("Mithril Sword"), UnknownNameError);
    EXPECT_THROW(graph().required_board_items("Mithril Sword"), UnknownNameError);
    EXPECT_THROW(graph().expand(graph().item_id("Pickaxe")), UnknownNameError);
    EXPECT_THROW(graph().task("Mithril Sword"), UnknownNameError);
}

TEST(Recipes, MinimalConfigLoads) {
    auto g = RecipeGraph::from_json(minimal_config());
    EXPECT_EQ(g.expand("Ingot").size(), 2u);
}

TEST(Recipes, RejectsSelfCycle) {
    auto doc = minimal_config();
    doc["recipes"][0]["inputs"].push_back({{"item", "Ingot"}, {"count", 1}});
    EXPECT_THROW(RecipeGraph::from_json(doc), ConfigError);
}

TEST(Recipes, RejectsLongerCycle) {
    auto doc = minimal_config();
    doc["benches"].push_back("Alloy bench");
    doc["recipes"].push_back({{"output", "Alloy"}, {"inputs", {{{"item", "Ingot"}, {"count", 1}}}}, {"bench", "Alloy bench"}});
    doc["recipes"][0]["inputs"].push_back({{"item", "Alloy"}, {"count", 1}});
    try {
        RecipeGraph::from_json(doc);
        FAIL() << "cycle accepted";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("cycle"), std::string::npos);
    }
}

TEST(Recipes, RejectsUnknownBench) {
    auto doc = minimal_config();
    doc["recipes"][0]["bench"] = "Forge";
    try {
        RecipeGraph::from_json(doc);
        FAIL() << "unknown bench accepted";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("Forge"), std::string::npos);
    }
}

TEST(Recipes, RejectsDanglingInputAndDuplicates) {
    auto dangling = minimal_config();
    dangling["recipes"][0]["inputs"][0]["item"] = "Unobtainium";
    EXPECT_THROW(RecipeGraph::from_json(dangling), ConfigError);

    auto dup = minimal_config();
    dup["benches"].push_back("Other bench");
    dup["recipes"].push_back({{"output", "Ingot"}, {"inputs", {{{"item", "Ore"}, {"count", 1}}}}, {"bench", "Other bench"}});
    EXPECT_THROW(RecipeGraph::from_json(dup), ConfigError);

    auto empty = minimal_config();
    empty["recipes"][0]["inputs"] = nlohmann::json::array();
    EXPECT_THROW(RecipeGraph::from_json(empty), ConfigError);

    auto bad_tool = minimal_config();
    bad_tool["mine_rules"][0]["tool"] = "Spoon";
    EXPECT_THROW(RecipeGraph::from_json(bad_tool), ConfigError);
}

TEST(Recipes, RejectsParseErrors) {
    EXPECT_THROW(RecipeGraph::from_string("{not json"), ConfigError);
    EXPECT_THROW(RecipeGraph::from_string(R"({"tools": []})"), ConfigError);
}
