#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "craftlang/recipes.hpp"

namespace craftlang {

inline constexpr int kGridSize = 5;
inline constexpr int kCellCount = kGridSize * kGridSize;
inline constexpr int kMaxSteps = 100;

struct Position {
    int row = 0;
    int col = 0;

    constexpr bool in_bounds() const { return row >= 0 && row < kGridSize && col >= 0 && col < kGridSize; }
    constexpr int index() const { return row * kGridSize + col; }
    static constexpr Position from_index(int i) { return {i / kGridSize, i % kGridSize}; }

    friend constexpr bool operator==(Position, Position) = default;
    friend constexpr Position operator+(Position a, Position b) { return {a.row + b.row, a.col + b.col}; }
};

enum class CellKind : std::uint8_t { Empty, Wall, DoorClosed, DoorOpen, Switch, Key, Tool, ResourceNode, Bench };

inline constexpr std::array<std::string_view, 9> kCellKindNames = {
    "Empty", "Wall", "DoorClosed", "DoorOpen", "Switch", "Key", "Tool", "ResourceNode", "Bench"};

inline std::string_view to_string(CellKind k) { return kCellKindNames[static_cast<std::size_t>(k)]; }

inline CellKind parse_cell_kind(std::string_view s) {
    for (std::size_t i = 0; i < kCellKindNames.size(); ++i)
        if (kCellKindNames[i] == s) return static_cast<CellKind>(i);
    throw std::invalid_argument("unknown cell kind: " + std::string(s));
}

inline constexpr bool has_name(CellKind k) {
    return k == CellKind::Tool || k == CellKind::ResourceNode || k == CellKind::Bench;
}

struct Cell {
    CellKind kind = CellKind::Empty;
    int id = -1;  // Tool: item id, ResourceNode: mine-rule index, Bench: bench index

    friend constexpr bool operator==(Cell, Cell) = default;
};

enum class Action : std::uint8_t { Up, Down, Left, Right, Toggle, Grab, Mine, Craft };

inline constexpr int kActionCount = 8;
inline constexpr std::array<std::string_view, kActionCount> kActionNames = {"Up",     "Down", "Left", "Right",
                                                                            "Toggle", "Grab", "Mine", "Craft"};

inline std::string_view to_string(Action a) { return kActionNames[static_cast<std::size_t>(a)]; }

inline std::optional<Action> parse_action(std::string_view s) {
    for (std::size_t i = 0; i < kActionNames.size(); ++i)
        if (kActionNames[i] == s) return static_cast<Action>(i);
    return std::nullopt;
}

inline std::optional<Action> action_from_index(long long i) {
    if (i < 0 || i >= kActionCount) return std::nullopt;
    return static_cast<Action>(i);
}

inline constexpr Position direction(Action a) {
    switch (a) {
        case Action::Up: return {-1, 0};
        case Action::Down: return {1, 0};
        case Action::Left: return {0, -1};
        case Action::Right: return {0, 1};
        default: return {0, 0};
    }
}

/// Neighbour scan order for Grab / Mine / Craft / Toggle target resolution.
inline constexpr std::array<Position, 4> kScanOrder = {{{-1, 0}, {0, -1}, {0, 1}, {1, 0}}};

/// Item counts. An item that was never touched is absent; once touched it
/// stays listed, even at zero, matching how episode inventories are logged.
class Inventory {
public:
    Inventory() = default;
    explicit Inventory(std::size_t item_count) : counts_(item_count, -1) {}

    int count(ItemId id) const {
        const auto c = counts_.at(static_cast<std::size_t>(id));
        return c < 0 ? 0 : c;
    }
    bool listed(ItemId id) const { return counts_.at(static_cast<std::size_t>(id)) >= 0; }

    void add(ItemId id, int delta) {
        auto& c = counts_.at(static_cast<std::size_t>(id));
        const int next = (c < 0 ? 0 : c) + delta;
        if (next < 0) throw std::logic_error("inventory count would go negative");
        c = next;
    }

    void set(ItemId id, int value) {
        if (value < 0) throw std::invalid_argument("inventory count must be non-negative");
        counts_.at(static_cast<std::size_t>(id)) = value;
    }

    std::size_t size() const { return counts_.size(); }

    /// (item, count) for every listed item, in item-id order.
    std::vector<std::pair<ItemId, int>> entries() const {
        std::vector<std::pair<ItemId, int>> out;
        for (std::size_t i = 0; i < counts_.size(); ++i)
            if (counts_[i] >= 0) out.emplace_back(static_cast<ItemId>(i), counts_[i]);
        return out;
    }

    friend bool operator==(const Inventory&, const Inventory&) = default;

private:
    std::vector<int> counts_;
};

/// Complete, fully observable simulator state.
struct WorldState {
    std::array<Cell, kCellCount> grid{};
    Position agent{};
    Inventory inventory;
    ItemId goal = -1;
    int step = 0;

    const Cell& at(Position p) const { return grid[static_cast<std::size_t>(p.index())]; }
    Cell& at(Position p) { return grid[static_cast<std::size_t>(p.index())]; }

    friend bool operator==(const WorldState&, const WorldState&) = default;
};

struct StepOutcome {
    WorldState state;
    double reward = 0.0;
    bool done = false;
    bool success = false;
};

inline bool is_success(const WorldState& s) { return s.goal >= 0 && s.inventory.count(s.goal) >= 1; }

inline bool is_done(const WorldState& s) { return is_success(s) || s.step >= kMaxSteps; }

inline bool is_passable(CellKind k) { return k != CellKind::Wall && k != CellKind::DoorClosed; }

namespace detail {

template <class Pred>
std::optional<Position> first_neighbour(const WorldState& s, Pred&& pred) {
    for (auto d : kScanOrder) {
        const Position p = s.agent + d;
        if (p.in_bounds() && pred(s.at(p))) return p;
    }
    return std::nullopt;
}

}  // namespace detail

/// Whether Mine from the agent's cell would act on some neighbour.
inline std::optional<Position> mine_target(const RecipeGraph& g, const WorldState& s) {
    return detail::first_neighbour(s, [&](const Cell& c) {
        return c.kind == CellKind::ResourceNode &&
               s.inventory.count(g.mine_rules()[static_cast<std::size_t>(c.id)].tool_id) > 0;
    });
}

inline bool can_craft(const RecipeGraph& g, const Inventory& inv, int bench) {
    for (const auto& in : g.bench_recipe(bench).inputs)
        if (inv.count(in.id) < in.count) return false;
    return true;
}

inline std::optional<Position> craft_target(const RecipeGraph& g, const WorldState& s) {
    return detail::first_neighbour(
        s, [&](const Cell& c) { return c.kind == CellKind::Bench && can_craft(g, s.inventory, c.id); });
}

inline std::optional<Position> grab_target(const WorldState& s) {
    return detail::first_neighbour(s, [](const Cell& c) { return c.kind == CellKind::Key || c.kind == CellKind::Tool; });
}

inline std::optional<Position> toggle_target(const RecipeGraph& g, const WorldState& s) {
    const bool has_key = s.inventory.count(g.key_item()) > 0;
    return detail::first_neighbour(s, [&](const Cell& c) {
        return c.kind == CellKind::Switch || (c.kind == CellKind::DoorClosed && has_key);
    });
}

/// Applies one action in place. Returns the reward earned.
///
/// Every action is legal; one that has no effect still consumes a step.
inline double apply_action(const RecipeGraph& g, WorldState& s, Action a) {
    if (is_done(s)) throw std::logic_error("step() called on a finished episode");
    const bool was_success = is_success(s);

    switch (a) {
        case Action::Up:
        case Action::Down:
        case Action::Left:
        case Action::Right: {
            const Position next = s.agent + direction(a);
            if (next.in_bounds() && is_passable(s.at(next).kind)) s.agent = next;
            break;
        }
        case Action::Toggle: {
            if (auto p = toggle_target(g, s)) {
                if (s.at(*p).kind == CellKind::Switch) {
                    for (auto& c : s.grid)
                        if (c.kind == CellKind::DoorClosed) c.kind = CellKind::DoorOpen;
                } else {
                    s.at(*p).kind = CellKind::DoorOpen;
                }
            }
            break;
        }
        case Action::Grab: {
            if (auto p = grab_target(s)) {
                Cell& c = s.at(*p);
                s.inventory.add(c.kind == CellKind::Key ? g.key_item() : c.id, 1);
                c = Cell{};
            }
            break;
        }
        case Action::Mine: {
            if (auto p = mine_target(g, s)) s.inventory.add(g.mine_rules()[static_cast<std::size_t>(s.at(*p).id)].yield_id, 1);
            break;
        }
        case Action::Craft: {
            if (auto p = craft_target(g, s)) {
                const auto& r = g.bench_recipe(s.at(*p).id);
                for (const auto& in : r.inputs) s.inventory.add(in.id, -in.count);
                s.inventory.add(r.output_id, 1);
            }
            break;
        }
    }

    ++s.step;
    return (!was_success && is_success(s)) ? 1.0 : 0.0;
}

inline StepOutcome step(const RecipeGraph& g, const WorldState& state, Action a) {
    StepOutcome out{state};
    out.reward = apply_action(g, out.state, a);
    out.success = is_success(out.state);
    out.done = is_done(out.state);
    return out;
}

}  // namespace craftlang
