#pragma once

#include <algorithm>
#include <array>
#include <deque>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "craftlang/recipes.hpp"
#include "craftlang/world.hpp"

namespace craftlang {

/// Raised when the scripted planner cannot reach a required entity.
class PlanningError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class SubgoalKind { GrabTool, GrabKey, ToggleSwitch, Mine, Craft };

struct Subgoal {
    SubgoalKind kind = SubgoalKind::Mine;
    Position target{};
    int entity = -1;          // tool item id, mine-rule index or bench index
    int plan_remaining = 0;   // productions left, distinguishes repeats of one production

    friend bool operator==(const Subgoal&, const Subgoal&) = default;
};

/// Productions still needed to reach the goal given the current inventory.
///
/// Items already held are consumed from a scratch copy of the inventory
/// before anything new is scheduled, so the result shrinks as the episode
/// progresses and is empty once the goal is held.
inline std::vector<Production> remaining_plan(const RecipeGraph& g, const WorldState& s) {
    std::vector<Production> out;
    if (s.goal < 0 || is_success(s)) return out;
    std::vector<int> pool(g.item_count());
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = s.inventory.count(static_cast<ItemId>(i));
    auto obtain = [&](auto&& self, ItemId item) -> void {
        if (pool[static_cast<std::size_t>(item)] > 0) {
            --pool[static_cast<std::size_t>(item)];
            return;
        }
        if (auto m = g.mine_rule_for(item)) {
            out.push_back({Production::Kind::Mine, item, *m});
            return;
        }
        const auto r = g.recipe_for(item);
        if (!r) throw PlanningError("item cannot be produced: " + g.item_name(item));
        for (const auto& in : g.recipes()[static_cast<std::size_t>(*r)].inputs)
            for (int k = 0; k < in.count; ++k) self(self, in.id);
        out.push_back({Production::Kind::Craft, item, *r});
    };
    obtain(obtain, s.goal);
    return out;
}

namespace detail {

inline std::vector<Position> find_cells(const WorldState& s, CellKind kind, int id = -1) {
    std::vector<Position> out;
    for (int i = 0; i < kCellCount; ++i) {
        const Cell& c = s.grid[static_cast<std::size_t>(i)];
        if (c.kind == kind && (id < 0 || c.id == id)) out.push_back(Position::from_index(i));
    }
    return out;
}

/// Cells from which `act` executed by the agent resolves to `target`.
template <class Resolve>
std::vector<Position> action_cells(const WorldState& s, Position target, Resolve&& resolve) {
    std::vector<Position> out;
    WorldState probe = s;
    for (auto d : kScanOrder) {
        const Position p = target + Position{-d.row, -d.col};
        if (!p.in_bounds() || !is_passable(s.at(p).kind)) continue;
        probe.agent = p;
        if (auto hit = resolve(probe); hit && *hit == target) out.push_back(p);
    }
    return out;
}

inline std::vector<Position> adjacent_cells(const WorldState& s, Position target) {
    std::vector<Position> out;
    for (auto d : kScanOrder) {
        const Position p = target + d;
        if (p.in_bounds() && is_passable(s.at(p).kind)) out.push_back(p);
    }
    return out;
}

struct PathStep {
    int distance = -1;
    Action first = Action::Up;
};

/// Breadth-first search from the agent to the nearest goal cell.
/// Closed doors count as passable only when `through_doors` is set.
inline std::optional<PathStep> shortest_path(const WorldState& s, const std::vector<Position>& goals, bool through_doors) {
    if (goals.empty()) return std::nullopt;
    std::array<bool, kCellCount> is_goal{};
    for (auto p : goals) is_goal[static_cast<std::size_t>(p.index())] = true;
    if (is_goal[static_cast<std::size_t>(s.agent.index())]) return PathStep{0, Action::Up};

    constexpr std::array<Action, 4> moves = {Action::Up, Action::Left, Action::Right, Action::Down};
    std::array<int, kCellCount> dist;
    std::array<int, kCellCount> first;
    dist.fill(-1);
    first.fill(-1);
    std::deque<Position> queue{s.agent};
    dist[static_cast<std::size_t>(s.agent.index())] = 0;
    while (!queue.empty()) {
        const Position p = queue.front();
        queue.pop_front();
        for (int m = 0; m < 4; ++m) {
            const Position q = p + direction(moves[static_cast<std::size_t>(m)]);
            if (!q.in_bounds()) continue;
            const auto qi = static_cast<std::size_t>(q.index());
            if (dist[qi] >= 0) continue;
            const CellKind k = s.at(q).kind;
            if (k == CellKind::Wall || (k == CellKind::DoorClosed && !through_doors)) continue;
            dist[qi] = dist[static_cast<std::size_t>(p.index())] + 1;
            first[qi] = (p == s.agent) ? m : first[static_cast<std::size_t>(p.index())];
            if (is_goal[qi]) return PathStep{dist[qi], moves[static_cast<std::size_t>(first[qi])]};
            queue.push_back(q);
        }
    }
    return std::nullopt;
}

}  // namespace detail

/// Deterministic shortest-path planner shared by the scripted expert and
/// the board solvability check.
class Planner {
public:
    explicit Planner(const RecipeGraph& g) : g_(&g) {}

    /// Current sub-goal, or nullopt once the goal item is held.
    std::optional<Subgoal> subgoal(const WorldState& s) const {
        const auto plan = remaining_plan(*g_, s);
        if (plan.empty()) return std::nullopt;
        const Production& next = plan.front();
        const int remaining = static_cast<int>(plan.size());

        Subgoal want;
        want.plan_remaining = remaining;
        if (next.kind == Production::Kind::Mine) {
            const auto& rule = g_->mine_rules()[static_cast<std::size_t>(next.rule)];
            if (s.inventory.count(rule.tool_id) == 0) {
                want.kind = SubgoalKind::GrabTool;
                want.entity = rule.tool_id;
                want.target = nearest(s, detail::find_cells(s, CellKind::Tool, rule.tool_id), "tool " + rule.tool);
            } else {
                want.kind = SubgoalKind::Mine;
                want.entity = next.rule;
                want.target = nearest(s, detail::find_cells(s, CellKind::ResourceNode, next.rule), rule.node);
            }
        } else {
            const auto& r = g_->recipes()[static_cast<std::size_t>(next.rule)];
            want.kind = SubgoalKind::Craft;
            want.entity = r.bench_id;
            want.target = nearest(s, detail::find_cells(s, CellKind::Bench, r.bench_id), r.bench);
        }

        if (reachable(s, want, false)) return want;

        // A closed door separates the agent from the target.
        for (auto sw : detail::find_cells(s, CellKind::Switch)) {
            Subgoal toggle{SubgoalKind::ToggleSwitch, sw, -1, remaining};
            if (reachable(s, toggle, false)) return toggle;
        }
        if (s.inventory.count(g_->key_item()) > 0) {
            if (reachable(s, want, true)) return want;
        } else {
            for (auto k : detail::find_cells(s, CellKind::Key)) {
                Subgoal grab{SubgoalKind::GrabKey, k, -1, remaining};
                if (reachable(s, grab, false)) return grab;
            }
        }
        throw PlanningError("no path to " + describe(want));
    }

    /// Next primitive action toward (or executing) the sub-goal.
    Action next_action(const WorldState& s, const Subgoal& sg) const {
        const bool through_doors = s.inventory.count(g_->key_item()) > 0;
        auto cells = action_cells(s, sg);
        if (std::find(cells.begin(), cells.end(), s.agent) != cells.end()) return act_for(sg.kind);
        auto path = detail::shortest_path(s, cells, through_doors);
        if (!path) {
            // No cell resolves uniquely to the target; any neighbour will do.
            const auto adj = detail::adjacent_cells(s, sg.target);
            if (std::find(adj.begin(), adj.end(), s.agent) != adj.end()) return act_for(sg.kind);
            path = detail::shortest_path(s, adj, through_doors);
        }
        if (!path) throw PlanningError("no path to " + describe(sg));
        const Position next = s.agent + direction(path->first);
        if (s.at(next).kind == CellKind::DoorClosed) return Action::Toggle;
        return path->first;
    }

    std::string describe(const Subgoal& sg) const {
        switch (sg.kind) {
            case SubgoalKind::GrabTool: return "grab " + g_->item_name(sg.entity);
            case SubgoalKind::GrabKey: return "grab key";
            case SubgoalKind::ToggleSwitch: return "toggle switch";
            case SubgoalKind::Mine: return "mine " + g_->mine_rules()[static_cast<std::size_t>(sg.entity)].node;
            case SubgoalKind::Craft: return "craft at " + g_->benches()[static_cast<std::size_t>(sg.entity)];
        }
        return {};
    }

    static Action act_for(SubgoalKind k) {
        switch (k) {
            case SubgoalKind::GrabTool:
            case SubgoalKind::GrabKey: return Action::Grab;
            case SubgoalKind::ToggleSwitch: return Action::Toggle;
            case SubgoalKind::Mine: return Action::Mine;
            case SubgoalKind::Craft: return Action::Craft;
        }
        return Action::Grab;
    }

private:
    std::vector<Position> action_cells(const WorldState& s, const Subgoal& sg) const {
        switch (sg.kind) {
            case SubgoalKind::GrabTool:
            case SubgoalKind::GrabKey:
                return detail::action_cells(s, sg.target, [](const WorldState& p) { return grab_target(p); });
            case SubgoalKind::ToggleSwitch:
                return detail::action_cells(s, sg.target, [&](const WorldState& p) { return toggle_target(*g_, p); });
            case SubgoalKind::Mine:
                return detail::action_cells(s, sg.target, [&](const WorldState& p) { return mine_target(*g_, p); });
            case SubgoalKind::Craft: {
                // The bench only resolves once the inputs are held, which they are
                // by construction when this sub-goal is active.
                return detail::action_cells(s, sg.target, [&](const WorldState& p) { return craft_target(*g_, p); });
            }
        }
        return {};
    }

    bool reachable(const WorldState& s, const Subgoal& sg, bool through_doors) const {
        auto cells = detail::adjacent_cells(s, sg.target);
        return detail::shortest_path(s, cells, through_doors).has_value();
    }

    Position nearest(const WorldState& s, const std::vector<Position>& candidates, const std::string& what) const {
        if (candidates.empty()) throw PlanningError("board has no " + what);
        if (candidates.size() == 1) return candidates.front();
        int best = -1;
        Position best_pos = candidates.front();
        for (auto c : candidates) {
            auto path = detail::shortest_path(s, detail::adjacent_cells(s, c), true);
            if (path && (best < 0 || path->distance < best)) {
                best = path->distance;
                best_pos = c;
            }
        }
        return best_pos;
    }

    const RecipeGraph* g_;
};

/// Runs the planner from `start`. Returns the number of actions used, or
/// nullopt when it fails to finish within the step budget.
inline std::optional<int> planner_rollout(const RecipeGraph& g, WorldState s) {
    Planner planner(g);
    const int start = s.step;
    try {
        while (!is_done(s)) {
            auto sg = planner.subgoal(s);
            if (!sg) break;
            apply_action(g, s, planner.next_action(s, *sg));
        }
    } catch (const PlanningError&) {
        return std::nullopt;
    }
    if (!is_success(s)) return std::nullopt;
    return s.step - start;
}

}  // namespace craftlang
