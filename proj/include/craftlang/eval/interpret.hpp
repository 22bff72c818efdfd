#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "craftlang/eval/rollout.hpp"

namespace craftlang::eval {

inline constexpr double kReferenceRunLength = 4.8;

/// Failed episodes whose final instruction persisted at least this long are
/// counted as policy failures; other failures as language failures.
inline constexpr int kStuckRunLength = 20;

struct EpisodeTranscript {
    std::string task;
    std::uint64_t seed = 0;
    bool success = false;
    int steps = 0;
    std::vector<std::string> instructions;  // one per action
    std::vector<int> keyframes;              // steps whose instruction differs from the previous step
    std::vector<int> inventory_changes;      // actions that changed the inventory
    std::vector<int> run_lengths;
    std::string failure;                     // "", "policy" or "language"
};

struct InterpretabilityReport {
    std::vector<EpisodeTranscript> episodes;
    double mean_run_length = 0;
    double cooccurrence = 0;  // fraction of instruction changes within one step of an inventory change
    int instruction_changes = 0;
    int policy_failures = 0;
    int language_failures = 0;

    nlohmann::json to_json() const {
        nlohmann::json eps = nlohmann::json::array();
        for (const auto& e : episodes)
            eps.push_back({{"task", e.task},
                           {"seed", e.seed},
                           {"success", e.success},
                           {"steps", e.steps},
                           {"instructions", e.instructions},
                           {"keyframes", e.keyframes},
                           {"inventory_changes", e.inventory_changes},
                           {"run_lengths", e.run_lengths},
                           {"failure", e.failure}});
        return {{"episodes", eps},
                {"mean_run_length", mean_run_length},
                {"reference_run_length", kReferenceRunLength},
                {"cooccurrence", cooccurrence},
                {"instruction_changes", instruction_changes},
                {"policy_failures", policy_failures},
                {"language_failures", language_failures}};
    }

    std::string transcript(const RecipeGraph& g, const std::vector<Trace>& traces) const {
        std::ostringstream out;
        for (std::size_t i = 0; i < episodes.size(); ++i) {
            const auto& e = episodes[i];
            out << "== " << e.task << " seed " << e.seed << (e.success ? " success" : " failure") << " in " << e.steps
                << " steps";
            if (!e.failure.empty()) out << " [" << e.failure << " failure]";
            out << '\n';
            for (int t = 0; t < e.steps; ++t) {
                const bool key = t == 0 || std::find(e.keyframes.begin(), e.keyframes.end(), t) != e.keyframes.end();
                if (!key) continue;
                out << "  step " << t << ": " << e.instructions[static_cast<std::size_t>(t)];
                if (i < traces.size()) {
                    out << "  | inventory:";
                    for (auto [id, n] : traces[i].steps[static_cast<std::size_t>(t)].state.inventory.entries())
                        if (n > 0) out << ' ' << g.item_name(id) << " x" << n;
                }
                out << '\n';
            }
        }
        out << "mean instruction run length " << mean_run_length << " (reference " << kReferenceRunLength << ")\n";
        out << "instruction changes within 1 step of an inventory change: " << cooccurrence << '\n';
        return out.str();
    }
};

inline EpisodeTranscript transcribe(const Trace& t) {
    EpisodeTranscript e;
    e.task = t.task;
    e.seed = t.seed;
    e.success = t.success;
    e.steps = static_cast<int>(t.steps.size());
    std::string cur;
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
        if (t.steps[i].instruction) {
            if (i > 0 && *t.steps[i].instruction != cur) e.keyframes.push_back(static_cast<int>(i));
            cur = *t.steps[i].instruction;
        }
        e.instructions.push_back(cur);
        const auto& next = i + 1 < t.steps.size() ? t.steps[i + 1].state : t.final_state;
        if (!(next.inventory == t.steps[i].state.inventory)) e.inventory_changes.push_back(static_cast<int>(i));
    }
    int run = 0;
    for (std::size_t i = 0; i < e.instructions.size(); ++i) {
        if (i > 0 && e.instructions[i] != e.instructions[i - 1]) {
            e.run_lengths.push_back(run);
            run = 0;
        }
        ++run;
    }
    if (run) e.run_lengths.push_back(run);
    if (!e.success && !e.run_lengths.empty()) e.failure = e.run_lengths.back() >= kStuckRunLength ? "policy" : "language";
    return e;
}

/// Metrics over traces whose steps carry the active instruction at each change.
inline InterpretabilityReport interpretability_report(const std::vector<Trace>& traces) {
    InterpretabilityReport r;
    long runs = 0, run_total = 0;
    int matched = 0;
    for (const auto& t : traces) {
        auto e = transcribe(t);
        for (int len : e.run_lengths) {
            run_total += len;
            ++runs;
        }
        for (int k : e.keyframes) {
            // the action before step k is the one that can have changed the inventory
            const bool hit = std::any_of(e.inventory_changes.begin(), e.inventory_changes.end(),
                                         [&](int c) { return std::abs(c - (k - 1)) <= 1; });
            matched += hit;
        }
        r.instruction_changes += static_cast<int>(e.keyframes.size());
        if (e.failure == "policy") ++r.policy_failures;
        if (e.failure == "language") ++r.language_failures;
        r.episodes.push_back(std::move(e));
    }
    r.mean_run_length = runs ? static_cast<double>(run_total) / static_cast<double>(runs) : 0.0;
    r.cooccurrence = r.instruction_changes ? static_cast<double>(matched) / r.instruction_changes : 0.0;
    return r;
}

/// Rolls out `n_games` games spread over `tasks` and records the generated
/// instruction at every step.
template <class T>
std::pair<InterpretabilityReport, std::vector<Trace>> interpretability_report(const model::Agent<T>& agent,
                                                                              const std::vector<TaskSpec>& tasks,
                                                                              int n_games, std::uint64_t seed) {
    if (!agent.has_language())
        throw std::invalid_argument("interpretability report needs a variant with a language head, got " +
                                    std::string(model::to_string(agent.variant())));
    if (tasks.empty() || n_games < 1) throw std::invalid_argument("interpretability report: no games requested");
    std::vector<EpisodeSpec> specs;
    for (int k = 0; k < n_games; ++k) {
        const auto& t = tasks[static_cast<std::size_t>(k) % tasks.size()];
        specs.push_back({t, eval_game_seed(seed, t.goal, static_cast<std::uint64_t>(k))});
    }
    AgentPolicy<T> policy(agent, true);
    auto results = run_episodes(agent.recipes(), policy, specs, 128, true);
    std::vector<Trace> traces;
    for (auto& r : results) traces.push_back(std::move(*r.trace));
    return {interpretability_report(traces), std::move(traces)};
}

}  // namespace craftlang::eval
