#pragma once

#include <stdexcept>
#include <string>

#include <json.hpp>

#include "craftlang/recipes.hpp"
#include "craftlang/world.hpp"

namespace craftlang {

/// Structured, lossless JSON view of a WorldState.
///
///   {"cells": [{"row","col","kind","name"?} x25 row-major],
///    "agent": {"row","col"}, "inventory": {item: count},
///    "goal": item, "step": n}
///
/// "name" is present only for Tool, ResourceNode and Bench cells.
inline nlohmann::json render(const RecipeGraph& g, const WorldState& s) {
    nlohmann::json cells = nlohmann::json::array();
    for (int i = 0; i < kCellCount; ++i) {
        const auto p = Position::from_index(i);
        const Cell& c = s.grid[static_cast<std::size_t>(i)];
        nlohmann::json cell = {{"row", p.row}, {"col", p.col}, {"kind", to_string(c.kind)}};
        switch (c.kind) {
            case CellKind::Tool: cell["name"] = g.item_name(c.id); break;
            case CellKind::ResourceNode: cell["name"] = g.mine_rules()[static_cast<std::size_t>(c.id)].node; break;
            case CellKind::Bench: cell["name"] = g.benches()[static_cast<std::size_t>(c.id)]; break;
            default: break;
        }
        cells.push_back(std::move(cell));
    }
    nlohmann::json inv = nlohmann::json::object();
    for (auto [id, n] : s.inventory.entries()) inv[g.item_name(id)] = n;
    return {{"cells", std::move(cells)},
            {"agent", {{"row", s.agent.row}, {"col", s.agent.col}}},
            {"inventory", std::move(inv)},
            {"goal", s.goal >= 0 ? g.item_name(s.goal) : std::string()},
            {"step", s.step}};
}

/// Inverse of render(). Throws std::invalid_argument on anything that does
/// not describe a valid state for this graph.
inline WorldState parse_state(const RecipeGraph& g, const nlohmann::json& j) {
    try {
        WorldState s;
        s.inventory = Inventory(g.item_count());
        const auto& cells = j.at("cells");
        if (!cells.is_array() || cells.size() != static_cast<std::size_t>(kCellCount))
            throw std::invalid_argument("state: expected 25 cells");
        std::array<bool, kCellCount> seen{};
        for (const auto& cj : cells) {
            const Position p{cj.at("row").get<int>(), cj.at("col").get<int>()};
            if (!p.in_bounds()) throw std::invalid_argument("state: cell out of bounds");
            if (seen[static_cast<std::size_t>(p.index())]) throw std::invalid_argument("state: duplicate cell");
            seen[static_cast<std::size_t>(p.index())] = true;
            Cell c{parse_cell_kind(cj.at("kind").get<std::string>()), -1};
            if (has_name(c.kind)) {
                const auto name = cj.at("name").get<std::string>();
                if (c.kind == CellKind::Tool) {
                    c.id = g.item_id(name);
                    if (!g.is_tool(c.id)) throw std::invalid_argument("state: '" + name + "' is not a tool");
                } else if (c.kind == CellKind::ResourceNode) {
                    auto id = g.find_node(name);
                    if (!id) throw std::invalid_argument("state: unknown resource node '" + name + "'");
                    c.id = *id;
                } else {
                    auto id = g.find_bench(name);
                    if (!id) throw std::invalid_argument("state: unknown bench '" + name + "'");
                    c.id = *id;
                }
            }
            s.at(p) = c;
        }
        s.agent = {j.at("agent").at("row").get<int>(), j.at("agent").at("col").get<int>()};
        if (!s.agent.in_bounds() || !is_passable(s.at(s.agent).kind))
            throw std::invalid_argument("state: agent on an impassable or out-of-bounds cell");
        for (const auto& [name, n] : j.at("inventory").items()) s.inventory.set(g.item_id(name), n.get<int>());
        s.goal = g.item_id(j.at("goal").get<std::string>());
        s.step = j.at("step").get<int>();
        if (s.step < 0 || s.step > kMaxSteps) throw std::invalid_argument("state: step out of range");
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("state: ") + e.what());
    } catch (const UnknownNameError& e) {
        throw std::invalid_argument(std::string("state: ") + e.what());
    }
}

}  // namespace craftlang
