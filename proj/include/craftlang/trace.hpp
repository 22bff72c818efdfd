#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "craftlang/env.hpp"
#include "craftlang/expert.hpp"
#include "craftlang/render.hpp"

namespace craftlang {

struct TraceStep {
    WorldState state;                        // before the action
    std::optional<std::string> instruction;  // set when a new instruction starts here
    Action action = Action::Up;

    friend bool operator==(const TraceStep&, const TraceStep&) = default;
};

/// One recorded game.
struct Trace {
    std::string game_id;
    std::string task;
    std::uint64_t seed = 0;
    std::vector<TraceStep> steps;
    WorldState final_state;
    bool success = false;

    friend bool operator==(const Trace&, const Trace&) = default;
};

/// Trace file line:
///   {"game_id", "task", "seed", "success",
///    "steps": [{"state": RenderModel, "instruction"?: text, "action": name}],
///    "final_state": RenderModel}
inline nlohmann::json trace_to_json(const RecipeGraph& g, const Trace& t) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& st : t.steps) {
        nlohmann::json j = {{"state", render(g, st.state)}, {"action", to_string(st.action)}};
        if (st.instruction) j["instruction"] = *st.instruction;
        steps.push_back(std::move(j));
    }
    return {{"game_id", t.game_id},     {"task", t.task}, {"seed", t.seed}, {"success", t.success},
            {"steps", std::move(steps)}, {"final_state", render(g, t.final_state)}};
}

inline Trace trace_from_json(const RecipeGraph& g, const nlohmann::json& j) {
    try {
        Trace t;
        t.game_id = j.at("game_id").get<std::string>();
        t.task = j.at("task").get<std::string>();
        t.seed = j.at("seed").get<std::uint64_t>();
        t.success = j.at("success").get<bool>();
        for (const auto& sj : j.at("steps")) {
            TraceStep st;
            st.state = parse_state(g, sj.at("state"));
            const auto name = sj.at("action").get<std::string>();
            auto a = parse_action(name);
            if (!a) throw std::invalid_argument("trace: unknown action '" + name + "'");
            st.action = *a;
            if (sj.contains("instruction") && !sj["instruction"].is_null())
                st.instruction = sj["instruction"].get<std::string>();
            t.steps.push_back(std::move(st));
        }
        t.final_state = parse_state(g, j.at("final_state"));
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("trace: ") + e.what());
    }
}

inline void write_traces(const RecipeGraph& g, const std::filesystem::path& path, const std::vector<Trace>& traces,
                         bool append = false) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& t : traces) out << trace_to_json(g, t).dump() << '\n';
}

inline std::vector<Trace> read_traces(const RecipeGraph& g, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<Trace> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(trace_from_json(g, nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

struct ValidationResult {
    bool ok = true;
    std::string message;

    explicit operator bool() const { return ok; }
};

/// Replays the recorded actions from reset(task, seed) and checks every
/// recorded state, the final state and the success flag.
inline ValidationResult validate_trace(const RecipeGraph& g, const Trace& t) {
    auto fail = [&](std::string why) { return ValidationResult{false, t.game_id + ": " + std::move(why)}; };
    if (!g.has_task(t.task)) return fail("unknown task '" + t.task + "'");
    if (t.steps.empty()) return fail("no actions recorded");
    if (!t.steps.front().instruction) return fail("first step carries no instruction");
    if (t.steps.size() > static_cast<std::size_t>(kMaxSteps)) return fail("more than 100 actions");

    WorldState s;
    try {
        s = reset(g, t.task, t.seed);
    } catch (const std::exception& e) {
        return fail(std::string("reset failed: ") + e.what());
    }
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
        if (!(t.steps[i].state == s)) return fail("state mismatch at step " + std::to_string(i));
        if (is_done(s)) return fail("action after episode end at step " + std::to_string(i));
        apply_action(g, s, t.steps[i].action);
    }
    if (!(t.final_state == s)) return fail("final state mismatch");
    if (t.success != is_success(s)) return fail("success flag mismatch");
    return {};
}

/// (state, action, active instruction) triple.
struct SupervisedExample {
    WorldState state;
    Action action = Action::Up;
    std::string instruction;
    std::size_t trace = 0;
    std::size_t step = 0;
};

/// One example per recorded action; each carries the most recent instruction.
inline std::vector<SupervisedExample> extract_pairs(const RecipeGraph& g, const std::vector<Trace>& traces,
                                                    bool validate = true) {
    std::vector<SupervisedExample> out;
    for (std::size_t ti = 0; ti < traces.size(); ++ti) {
        const auto& t = traces[ti];
        if (validate)
            if (auto v = validate_trace(g, t); !v) throw std::invalid_argument("invalid trace " + v.message);
        std::string active;
        for (std::size_t si = 0; si < t.steps.size(); ++si) {
            if (t.steps[si].instruction) active = normalize_instruction(*t.steps[si].instruction);
            out.push_back({t.steps[si].state, t.steps[si].action, active, ti, si});
        }
    }
    return out;
}

/// Records one expert game.
inline Trace record_expert_game(const RecipeGraph& g, const TaskSpec& task, std::uint64_t game_seed,
                                std::uint64_t expert_seed, double noise = 0.0, std::string game_id = {}) {
    Trace t;
    t.game_id = game_id.empty() ? task.goal + "#" + std::to_string(game_seed) : std::move(game_id);
    t.task = task.goal;
    t.seed = game_seed;
    WorldState s = reset(g, task, game_seed);
    ScriptedExpert expert(g, expert_seed, noise);
    while (!is_done(s)) {
        auto e = expert.act(s);
        TraceStep st{s, std::nullopt, e.action};
        if (e.new_instruction) st.instruction = e.instruction;
        t.steps.push_back(std::move(st));
        apply_action(g, s, e.action);
    }
    t.final_state = s;
    t.success = is_success(s);
    return t;
}

inline std::uint64_t game_seed(std::uint64_t dataset_seed, const TaskSpec& task, std::uint64_t game) {
    return mix64(mix64(dataset_seed, fnv1a(task.goal)), game);
}

/// Expert demonstrations for every task; deterministic given `seed`.
inline std::vector<Trace> generate_dataset(const RecipeGraph& g, const std::vector<TaskSpec>& tasks,
                                           int games_per_task, std::uint64_t seed, double noise = 0.0) {
    std::vector<Trace> out;
    if (games_per_task <= 0) return out;
    out.reserve(tasks.size() * static_cast<std::size_t>(games_per_task));
    for (const auto& task : tasks) {
        for (int k = 0; k < games_per_task; ++k) {
            const auto gs = game_seed(seed, task, static_cast<std::uint64_t>(k));
            out.push_back(record_expert_game(g, task, gs, mix64(gs, 0x5eedULL), noise,
                                             task.goal + "#" + std::to_string(k)));
        }
    }
    return out;
}

}  // namespace craftlang
