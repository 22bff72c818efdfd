#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "craftlang/planner.hpp"
#include "craftlang/rng.hpp"
#include "craftlang/text.hpp"

namespace craftlang {

namespace templates {

// {x}: tool / node / item name, {t}: tool used for mining. Lowercase.
inline constexpr std::array<std::string_view, 7> kGrabTool = {
    "go to {x} and press grab", "grab the {x}",          "grab {x}",
    "pick up the {x}",          "go to {x} and click grab to take it", "get the {x}",
    "pick up {x} using grab"};
inline constexpr std::array<std::string_view, 6> kGrabKey = {
    "go to key and press grab", "grab the key",          "grab key",
    "get the key",              "grab key to open door", "go to key grab it go to door and open door"};
inline constexpr std::array<std::string_view, 6> kToggleSwitch = {
    "toggle the switch", "toggle switch to open door",      "go to switch and open door with toggle switch",
    "flip the switch",   "use the switch to open the door", "toggle switch"};
inline constexpr std::array<std::string_view, 6> kMine = {
    "go to {x} and press mine", "mine the {x}", "mine {x}", "go to {x} and mine", "use {t} to mine {x}",
    "go to the {x} and mine"};
inline constexpr std::array<std::string_view, 6> kCraft = {
    "go to {x} bench and craft", "craft {x}", "go to {x} and press craft", "go to {x} bench and craft {x}",
    "craft {x} at the {x} bench", "go to the {x} bench and press craft"};

inline std::string fill(std::string_view pattern, std::string_view x, std::string_view t = {}) {
    std::string out;
    for (std::size_t i = 0; i < pattern.size(); ++i) {
        if (pattern.substr(i, 3) == "{x}") {
            out += x;
            i += 2;
        } else if (pattern.substr(i, 3) == "{t}") {
            out += t;
            i += 2;
        } else {
            out += pattern[i];
        }
    }
    return out;
}

inline std::string lower(std::string_view s) { return join(tokenize(s)); }

}  // namespace templates

/// Every template rendering for a sub-goal, in template order.
inline std::vector<std::string> instruction_paraphrases(const RecipeGraph& g, const Subgoal& sg) {
    using namespace templates;
    std::vector<std::string> out;
    switch (sg.kind) {
        case SubgoalKind::GrabTool:
            for (auto p : kGrabTool) out.push_back(fill(p, lower(g.item_name(sg.entity))));
            break;
        case SubgoalKind::GrabKey:
            for (auto p : kGrabKey) out.emplace_back(p);
            break;
        case SubgoalKind::ToggleSwitch:
            for (auto p : kToggleSwitch) out.emplace_back(p);
            break;
        case SubgoalKind::Mine: {
            const auto& rule = g.mine_rules()[static_cast<std::size_t>(sg.entity)];
            for (auto p : kMine) out.push_back(fill(p, lower(rule.node), lower(rule.tool)));
            break;
        }
        case SubgoalKind::Craft:
            for (auto p : kCraft) out.push_back(fill(p, lower(g.bench_recipe(sg.entity).output)));
            break;
    }
    return out;
}

struct ExpertStep {
    std::string instruction;
    bool new_instruction = false;
    Action action = Action::Up;
    Subgoal subgoal;
};

/// Scripted hierarchical demonstrator.
///
/// Follows the recipe expansion, navigating by breadth-first search and
/// detouring through key / switch sub-goals when a closed door is in the
/// way. A fresh instruction is drawn from the template pool exactly when the
/// sub-goal changes.
class ScriptedExpert {
public:
    ScriptedExpert(const RecipeGraph& g, std::uint64_t seed, double noise = 0.0)
        : g_(&g), planner_(g), rng_(seed), noise_(noise) {}

    ExpertStep act(const WorldState& s) {
        auto sg = planner_.subgoal(s);
        if (!sg) throw PlanningError("expert asked to act after the goal was reached");
        ExpertStep out;
        out.subgoal = *sg;
        if (!current_ || !(*current_ == *sg)) {
            current_ = *sg;
            const auto options = instruction_paraphrases(*g_, *sg);
            instruction_ = add_noise(options[rng_.below(options.size())]);
            out.new_instruction = true;
        }
        out.instruction = instruction_;
        out.action = planner_.next_action(s, *sg);
        return out;
    }

    /// Forget the active sub-goal (start of a new episode).
    void restart() {
        current_.reset();
        instruction_.clear();
    }

private:
    std::string add_noise(std::string text) {
        if (noise_ <= 0.0 || !rng_.bernoulli(noise_)) return text;
        auto toks = tokenize(text);
        if (toks.size() < 2) return text;
        const auto i = rng_.below(toks.size());
        if (rng_.bernoulli(0.5))
            toks.erase(toks.begin() + static_cast<std::ptrdiff_t>(i));
        else
            toks.insert(toks.begin() + static_cast<std::ptrdiff_t>(i), toks[i]);
        return join(toks);
    }

    const RecipeGraph* g_;
    Planner planner_;
    Rng rng_;
    double noise_;
    std::optional<Subgoal> current_;
    std::string instruction_;
};

/// Stateless convenience: the instruction and action for `s` from a fresh expert.
inline std::pair<std::string, Action> expert_policy(const RecipeGraph& g, const WorldState& s, std::uint64_t seed = 0) {
    ScriptedExpert e(g, seed);
    auto step = e.act(s);
    return {step.instruction, step.action};
}

}  // namespace craftlang
