#pragma once

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace craftlang {

using ItemId = int;

/// Malformed or inconsistent recipe configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Lookup of an item, task or entity name the graph does not know.
class UnknownNameError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

inline constexpr std::string_view kKeyItem = "key";
inline constexpr int kMaxRecipeSteps = 5;

struct MineRule {
    std::string node;
    std::string tool;
    std::string yield;
    ItemId tool_id = -1;
    ItemId yield_id = -1;
};

struct Ingredient {
    std::string item;
    int count = 1;
    ItemId id = -1;
};

struct Recipe {
    std::string output;
    std::vector<Ingredient> inputs;
    std::string bench;
    ItemId output_id = -1;
    int bench_id = -1;
};

enum class Split { Train, Unseen, All };

inline std::string_view to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Unseen: return "unseen";
        case Split::All: return "all";
    }
    return "?";
}

inline Split parse_split(std::string_view s) {
    if (s == "train") return Split::Train;
    if (s == "unseen") return Split::Unseen;
    if (s == "all") return Split::All;
    throw UnknownNameError("unknown split: " + std::string(s));
}

struct TaskSpec {
    std::string goal;
    ItemId goal_id = -1;
    int declared_steps = 0;
    Split split = Split::Train;

    friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

/// One mining or crafting event in a task's expansion.
struct Production {
    enum class Kind { Mine, Craft };
    Kind kind = Kind::Mine;
    ItemId item = -1;
    int rule = -1;  // index into mine_rules() or recipes()

    friend bool operator==(const Production&, const Production&) = default;
};

/// Board entity class that can carry a name: the tools, nodes and benches.
enum class EntityKind { Tool, ResourceNode, Bench };

struct EntityRef {
    EntityKind kind = EntityKind::Tool;
    int id = -1;  // tool: item id, node: mine-rule index, bench: bench index

    friend auto operator<=>(const EntityRef&, const EntityRef&) = default;
};

/// Immutable crafting DAG plus the train / unseen task catalogs.
class RecipeGraph {
public:
    static RecipeGraph from_json(const nlohmann::json& doc) {
        RecipeGraph g;
        try {
            g.parse(doc);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("recipe config: ") + e.what());
        }
        g.validate();
        return g;
    }

    static RecipeGraph from_string(std::string_view text) {
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError(std::string("recipe config parse error: ") + e.what());
        }
        return from_json(doc);
    }

    static RecipeGraph load_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open recipe config " + path.string());
        std::stringstream ss;
        ss << in.rdbuf();
        return from_string(ss.str());
    }

    // -- items ---------------------------------------------------------------

    std::size_t item_count() const { return items_.size(); }
    const std::string& item_name(ItemId id) const { return items_.at(static_cast<std::size_t>(id)); }

    std::optional<ItemId> find_item(std::string_view name) const {
        auto it = item_index_.find(std::string(name));
        if (it == item_index_.end()) return std::nullopt;
        return it->second;
    }

    ItemId item_id(std::string_view name) const {
        if (auto id = find_item(name)) return *id;
        throw UnknownNameError("unknown item: " + std::string(name));
    }

    ItemId key_item() const { return key_id_; }
    bool is_tool(ItemId id) const { return std::find(tool_ids_.begin(), tool_ids_.end(), id) != tool_ids_.end(); }
    const std::vector<ItemId>& tools() const { return tool_ids_; }

    // -- rules ---------------------------------------------------------------

    const std::vector<MineRule>& mine_rules() const { return mine_rules_; }
    const std::vector<Recipe>& recipes() const { return recipes_; }
    const std::vector<std::string>& benches() const { return benches_; }

    std::optional<int> find_node(std::string_view name) const { return find_in(node_index_, name); }
    std::optional<int> find_bench(std::string_view name) const { return find_in(bench_index_, name); }

    /// Recipe crafted at the given bench.
    const Recipe& bench_recipe(int bench_id) const {
        return recipes_.at(static_cast<std::size_t>(bench_recipe_.at(static_cast<std::size_t>(bench_id))));
    }

    /// Mine rule whose yield is `item`, if any.
    std::optional<int> mine_rule_for(ItemId item) const {
        auto r = producer_.at(static_cast<std::size_t>(item));
        if (r.kind == Production::Kind::Mine && r.rule >= 0) return r.rule;
        return std::nullopt;
    }

    std::optional<int> recipe_for(ItemId item) const {
        auto r = producer_.at(static_cast<std::size_t>(item));
        if (r.kind == Production::Kind::Craft && r.rule >= 0) return r.rule;
        return std::nullopt;
    }

    bool is_producible(ItemId item) const { return producer_.at(static_cast<std::size_t>(item)).rule >= 0; }

    std::string entity_name(EntityRef e) const {
        switch (e.kind) {
            case EntityKind::Tool: return item_name(e.id);
            case EntityKind::ResourceNode: return mine_rules_.at(static_cast<std::size_t>(e.id)).node;
            case EntityKind::Bench: return benches_.at(static_cast<std::size_t>(e.id));
        }
        return {};
    }

    // -- task structure ------------------------------------------------------

    /// Productions needed to obtain `goal` from an empty inventory.
    ///
    /// Depth-first post-order over each recipe's inputs in declared order;
    /// an input needed twice is produced twice.
    std::vector<Production> expand(ItemId goal) const {
        if (goal < 0 || static_cast<std::size_t>(goal) >= items_.size() || !is_producible(goal))
            throw UnknownNameError("item is not producible: " + (goal >= 0 && static_cast<std::size_t>(goal) < items_.size()
                                                                      ? items_[static_cast<std::size_t>(goal)]
                                                                      : std::to_string(goal)));
        std::vector<Production> out;
        expand_into(goal, out);
        return out;
    }

    std::vector<Production> expand(std::string_view goal) const { return expand(item_id(goal)); }

    /// Tools, resource nodes and benches touched by expand(goal), sorted.
    std::vector<EntityRef> required_board_items(ItemId goal) const {
        std::set<EntityRef> out;
        for (const auto& p : expand(goal)) {
            if (p.kind == Production::Kind::Mine) {
                const auto& m = mine_rules_[static_cast<std::size_t>(p.rule)];
                out.insert({EntityKind::Tool, m.tool_id});
                out.insert({EntityKind::ResourceNode, p.rule});
            } else {
                out.insert({EntityKind::Bench, recipes_[static_cast<std::size_t>(p.rule)].bench_id});
            }
        }
        return {out.begin(), out.end()};
    }

    std::vector<EntityRef> required_board_items(std::string_view goal) const {
        return required_board_items(item_id(goal));
    }

    /// Every nameable board entity the graph defines.
    std::vector<EntityRef> all_entities() const {
        std::vector<EntityRef> out;
        for (ItemId t : tool_ids_) out.push_back({EntityKind::Tool, t});
        for (int i = 0; i < static_cast<int>(mine_rules_.size()); ++i) out.push_back({EntityKind::ResourceNode, i});
        for (int i = 0; i < static_cast<int>(benches_.size()); ++i) out.push_back({EntityKind::Bench, i});
        return out;
    }

    // -- catalogs ------------------------------------------------------------

    std::vector<TaskSpec> catalog(Split split) const {
        switch (split) {
            case Split::Train: return train_;
            case Split::Unseen: return unseen_;
            case Split::All: {
                auto all = train_;
                all.insert(all.end(), unseen_.begin(), unseen_.end());
                return all;
            }
        }
        return {};
    }

    const TaskSpec& task(std::string_view goal) const {
        for (const auto& t : train_)
            if (t.goal == goal) return t;
        for (const auto& t : unseen_)
            if (t.goal == goal) return t;
        throw UnknownNameError("unknown task: " + std::string(goal));
    }

    bool has_task(std::string_view goal) const {
        auto pred = [&](const TaskSpec& t) { return t.goal == goal; };
        return std::any_of(train_.begin(), train_.end(), pred) || std::any_of(unseen_.begin(), unseen_.end(), pred);
    }

    /// Canonical serialized form, used for config hashing in checkpoints.
    const nlohmann::json& source() const { return source_; }

private:
    template <class Map>
    static std::optional<int> find_in(const Map& m, std::string_view name) {
        auto it = m.find(std::string(name));
        if (it == m.end()) return std::nullopt;
        return it->second;
    }

    ItemId add_item(const std::string& name, const char* what) {
        if (name.empty()) throw ConfigError(std::string("empty ") + what + " name");
        if (item_index_.count(name)) throw ConfigError("duplicate item '" + name + "' (" + what + ")");
        const auto id = static_cast<ItemId>(items_.size());
        items_.push_back(name);
        item_index_.emplace(name, id);
        return id;
    }

    void parse(const nlohmann::json& doc) {
        source_ = doc;
        for (const auto& t : doc.at("tools")) tool_ids_.push_back(add_item(t.get<std::string>(), "tool"));
        key_id_ = add_item(std::string(kKeyItem), "key");

        for (const auto& b : doc.at("benches")) {
            auto name = b.get<std::string>();
            if (bench_index_.count(name)) throw ConfigError("duplicate bench '" + name + "'");
            bench_index_.emplace(name, static_cast<int>(benches_.size()));
            benches_.push_back(name);
        }

        for (const auto& m : doc.at("mine_rules")) {
            MineRule rule{m.at("node").get<std::string>(), m.at("tool").get<std::string>(),
                          m.at("yield").get<std::string>()};
            if (node_index_.count(rule.node)) throw ConfigError("duplicate resource node '" + rule.node + "'");
            node_index_.emplace(rule.node, static_cast<int>(mine_rules_.size()));
            rule.yield_id = add_item(rule.yield, "mine yield");
            mine_rules_.push_back(std::move(rule));
        }

        for (const auto& r : doc.at("recipes")) {
            Recipe rec;
            rec.output = r.at("output").get<std::string>();
            rec.bench = r.at("bench").get<std::string>();
            for (const auto& in : r.at("inputs")) {
                Ingredient ing{in.at("item").get<std::string>(), in.value("count", 1)};
                rec.inputs.push_back(std::move(ing));
            }
            rec.output_id = add_item(rec.output, "recipe output");
            recipes_.push_back(std::move(rec));
        }

        auto read_catalog = [&](const char* key, Split split, std::vector<TaskSpec>& out) {
            const auto& cats = doc.at("catalogs");
            if (!cats.contains(key)) return;
            for (const auto& t : cats.at(key))
                out.push_back({t.at("goal").get<std::string>(), -1, t.at("steps").get<int>(), split});
        };
        read_catalog("train", Split::Train, train_);
        read_catalog("unseen", Split::Unseen, unseen_);
    }

    void validate() {
        producer_.assign(items_.size(), Production{});

        for (std::size_t i = 0; i < mine_rules_.size(); ++i) {
            auto& m = mine_rules_[i];
            auto tool = find_item(m.tool);
            if (!tool || !is_tool(*tool))
                throw ConfigError("mine rule '" + m.node + "': unknown tool '" + m.tool + "'");
            m.tool_id = *tool;
            producer_[static_cast<std::size_t>(m.yield_id)] = {Production::Kind::Mine, m.yield_id, static_cast<int>(i)};
        }

        bench_recipe_.assign(benches_.size(), -1);
        for (std::size_t i = 0; i < recipes_.size(); ++i) {
            auto& r = recipes_[i];
            if (r.inputs.empty()) throw ConfigError("recipe '" + r.output + "' has no inputs");
            auto bench = find_bench(r.bench);
            if (!bench) throw ConfigError("recipe '" + r.output + "': unknown bench '" + r.bench + "'");
            if (bench_recipe_[static_cast<std::size_t>(*bench)] >= 0)
                throw ConfigError("recipe '" + r.output + "': bench '" + r.bench + "' already used");
            bench_recipe_[static_cast<std::size_t>(*bench)] = static_cast<int>(i);
            r.bench_id = *bench;
            producer_[static_cast<std::size_t>(r.output_id)] = {Production::Kind::Craft, r.output_id, static_cast<int>(i)};
        }

        for (auto& r : recipes_) {
            for (auto& in : r.inputs) {
                if (in.count < 1) throw ConfigError("recipe '" + r.output + "': input count must be >= 1");
                auto id = find_item(in.item);
                if (!id || !is_producible(*id))
                    throw ConfigError("recipe '" + r.output + "': dangling input '" + in.item + "'");
                in.id = *id;
            }
        }

        for (std::size_t b = 0; b < benches_.size(); ++b)
            if (bench_recipe_[b] < 0) throw ConfigError("bench '" + benches_[b] + "' is not used by any recipe");

        // Cycle detection: 0 = unvisited, 1 = on stack, 2 = done.
        std::vector<int> mark(items_.size(), 0);
        auto visit = [&](auto&& self, ItemId id) -> void {
            auto& m = mark[static_cast<std::size_t>(id)];
            if (m == 2) return;
            if (m == 1) throw ConfigError("recipe cycle through '" + items_[static_cast<std::size_t>(id)] + "'");
            m = 1;
            if (auto r = recipe_for(id))
                for (const auto& in : recipes_[static_cast<std::size_t>(*r)].inputs) self(self, in.id);
            m = 2;
        };
        for (const auto& r : recipes_) visit(visit, r.output_id);

        auto resolve = [&](std::vector<TaskSpec>& tasks) {
            for (auto& t : tasks) {
                auto id = find_item(t.goal);
                if (!id || !is_producible(*id)) throw ConfigError("catalog task '" + t.goal + "' is not producible");
                if (t.declared_steps < 1 || t.declared_steps > kMaxRecipeSteps)
                    throw ConfigError("catalog task '" + t.goal + "': steps out of range 1..5");
                t.goal_id = *id;
            }
        };
        resolve(train_);
        resolve(unseen_);
        std::set<std::string> seen;
        for (const auto& t : train_)
            if (!seen.insert(t.goal).second) throw ConfigError("duplicate catalog task '" + t.goal + "'");
        for (const auto& t : unseen_)
            if (!seen.insert(t.goal).second) throw ConfigError("catalog task '" + t.goal + "' listed twice");
    }

    void expand_into(ItemId item, std::vector<Production>& out) const {
        const auto& p = producer_[static_cast<std::size_t>(item)];
        if (p.kind == Production::Kind::Craft) {
            for (const auto& in : recipes_[static_cast<std::size_t>(p.rule)].inputs)
                for (int k = 0; k < in.count; ++k) expand_into(in.id, out);
        }
        out.push_back(p);
    }

    nlohmann::json source_;
    std::vector<std::string> items_;
    std::unordered_map<std::string, ItemId> item_index_;
    std::vector<ItemId> tool_ids_;
    ItemId key_id_ = -1;
    std::vector<std::string> benches_;
    std::unordered_map<std::string, int> bench_index_;
    std::vector<int> bench_recipe_;
    std::vector<MineRule> mine_rules_;
    std::unordered_map<std::string, int> node_index_;
    std::vector<Recipe> recipes_;
    std::vector<Production> producer_;
    std::vector<TaskSpec> train_;
    std::vector<TaskSpec> unseen_;
};

/// Directory holding shipped data (recipes, embeddings). CRAFTLANG_DATA_DIR overrides.
inline std::filesystem::path data_dir() {
    if (const char* env = std::getenv("CRAFTLANG_DATA_DIR"); env && *env) return env;
#ifdef CRAFTLANG_DEFAULT_DATA_DIR
    return CRAFTLANG_DEFAULT_DATA_DIR;
#else
    return "config";
#endif
}

inline std::filesystem::path default_recipe_path() { return data_dir() / "recipes.json"; }

inline const RecipeGraph& default_recipes() {
    static const RecipeGraph graph = RecipeGraph::load_file(default_recipe_path());
    return graph;
}

}  // namespace craftlang
