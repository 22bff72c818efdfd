#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "craftlang/planner.hpp"
#include "craftlang/recipes.hpp"
#include "craftlang/rng.hpp"
#include "craftlang/world.hpp"

namespace craftlang {

class BoardGenerationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct BoardConfig {
    double divider_probability = 0.5;
    int max_distractors = 3;
    int max_attempts = 100;
};

/// FNV-1a; stable across platforms, used to key RNG streams by task name.
constexpr std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace detail {

inline std::optional<WorldState> sample_board(const RecipeGraph& g, const TaskSpec& task, Rng& rng,
                                              const BoardConfig& cfg) {
    WorldState s;
    s.inventory = Inventory(g.item_count());
    s.goal = task.goal_id;

    std::vector<int> agent_side;
    std::vector<int> any_side;
    if (rng.bernoulli(cfg.divider_probability)) {
        const bool horizontal = rng.bernoulli(0.5);
        const int line = rng.uniform_int(1, kGridSize - 2);
        const int door = rng.uniform_int(0, kGridSize - 1);
        for (int k = 0; k < kGridSize; ++k) {
            const Position p = horizontal ? Position{line, k} : Position{k, line};
            s.at(p).kind = (k == door) ? CellKind::DoorClosed : CellKind::Wall;
        }
        const bool low_side = rng.bernoulli(0.5);
        for (int i = 0; i < kCellCount; ++i) {
            const auto p = Position::from_index(i);
            if (s.at(p).kind != CellKind::Empty) continue;
            const int coord = horizontal ? p.row : p.col;
            if ((coord < line) == low_side) agent_side.push_back(i);
            any_side.push_back(i);
        }
        const int agent = agent_side[rng.below(agent_side.size())];
        s.agent = Position::from_index(agent);
        std::erase(agent_side, agent);
        std::erase(any_side, agent);
        if (agent_side.empty()) return std::nullopt;
        const int blocker = agent_side[rng.below(agent_side.size())];
        s.grid[static_cast<std::size_t>(blocker)].kind = rng.bernoulli(0.5) ? CellKind::Key : CellKind::Switch;
        std::erase(any_side, blocker);
    } else {
        for (int i = 0; i < kCellCount; ++i) any_side.push_back(i);
        const int agent = any_side[rng.below(any_side.size())];
        s.agent = Position::from_index(agent);
        std::erase(any_side, agent);
    }

    auto entities = g.required_board_items(task.goal_id);
    std::vector<EntityRef> pool;
    for (const auto& e : g.all_entities())
        if (!std::binary_search(entities.begin(), entities.end(), e)) pool.push_back(e);
    const int n_distractors = std::min(rng.uniform_int(0, cfg.max_distractors), static_cast<int>(pool.size()));
    rng.shuffle(std::span<EntityRef>(pool));
    entities.insert(entities.end(), pool.begin(), pool.begin() + n_distractors);

    if (entities.size() > any_side.size()) return std::nullopt;
    rng.shuffle(std::span<int>(any_side));
    for (std::size_t k = 0; k < entities.size(); ++k) {
        Cell& c = s.grid[static_cast<std::size_t>(any_side[k])];
        switch (entities[k].kind) {
            case EntityKind::Tool: c.kind = CellKind::Tool; break;
            case EntityKind::ResourceNode: c.kind = CellKind::ResourceNode; break;
            case EntityKind::Bench: c.kind = CellKind::Bench; break;
        }
        c.id = entities[k].id;
    }
    return s;
}

}  // namespace detail

/// Seeded, solvable random board for `task`.
///
/// Identical (task, seed) pairs give identical boards. A board is accepted
/// only when the scripted planner finishes it within the step budget.
inline WorldState generate_board(const RecipeGraph& g, const TaskSpec& task, std::uint64_t seed,
                                 const BoardConfig& cfg = {}) {
    if (task.goal_id < 0 || !g.has_task(task.goal)) throw UnknownNameError("unknown task: " + task.goal);
    const std::uint64_t stream = mix64(seed, fnv1a(task.goal));
    for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
        Rng rng(mix64(stream, static_cast<std::uint64_t>(attempt)));
        auto board = detail::sample_board(g, task, rng, cfg);
        if (board && planner_rollout(g, *board)) return *board;
    }
    throw BoardGenerationError("no solvable board for '" + task.goal + "' after " +
                               std::to_string(cfg.max_attempts) + " attempts");
}

inline WorldState reset(const RecipeGraph& g, const TaskSpec& task, std::uint64_t seed) {
    return generate_board(g, task, seed);
}

inline WorldState reset(const RecipeGraph& g, std::string_view goal, std::uint64_t seed) {
    return generate_board(g, g.task(goal), seed);
}

/// Stateful wrapper with a gym-style reset / step surface.
class Environment {
public:
    explicit Environment(const RecipeGraph& g) : g_(&g) {}

    const WorldState& reset(const TaskSpec& task, std::uint64_t seed) {
        state_ = generate_board(*g_, task, seed);
        return state_;
    }

    const WorldState& reset(std::string_view goal, std::uint64_t seed) { return reset(g_->task(goal), seed); }

    /// Replace the current state wholesale (replays, parsed states).
    void set_state(WorldState s) { state_ = std::move(s); }

    StepOutcome step(Action a) {
        const double r = apply_action(*g_, state_, a);
        return {state_, r, is_done(state_), is_success(state_)};
    }

    /// Like step() without copying the state out.
    double step_in_place(Action a) { return apply_action(*g_, state_, a); }

    const WorldState& state() const { return state_; }
    bool done() const { return is_done(state_); }
    const RecipeGraph& recipes() const { return *g_; }

private:
    const RecipeGraph* g_;
    WorldState state_;
};

}  // namespace craftlang
