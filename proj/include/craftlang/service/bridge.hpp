#pragma once

#include <istream>
#include <optional>
#include <ostream>
#include <string>

#include <json.hpp>

#include "craftlang/env.hpp"
#include "craftlang/render.hpp"

namespace craftlang::service {

/// Reply to a reset or an accepted action.
inline nlohmann::json bridge_record(const RecipeGraph& g, const WorldState& s, double reward) {
    return {{"state", render(g, s)}, {"reward", reward}, {"done", is_done(s)}, {"success", is_success(s)}};
}

inline nlohmann::json bridge_error(std::string message) { return {{"error", std::move(message)}, {"done", true}}; }

/// Line protocol state machine. One JSON message in, one JSON record out.
///
///   {"reset": {"task": name, "seed": n}}   -> state record, reward 0
///   {"action": k}  (k in 0..7 or a name)    -> state record after the step
///
/// Any violation yields an error record and aborts the current episode.
class Bridge {
public:
    explicit Bridge(const RecipeGraph& g) : g_(&g) {}

    nlohmann::json handle(const std::string& line) {
        const auto msg = nlohmann::json::parse(line, nullptr, false);
        if (msg.is_discarded() || !msg.is_object()) return abort("malformed JSON message");
        if (msg.contains("reset")) {
            const auto& r = msg["reset"];
            if (!r.is_object() || !r.contains("task") || !r["task"].is_string())
                return abort("reset needs {\"task\": name, \"seed\": n}");
            const auto goal = r["task"].get<std::string>();
            if (!g_->has_task(goal)) return abort("unknown task '" + goal + "'");
            std::uint64_t seed = 0;
            if (r.contains("seed")) {
                if (!r["seed"].is_number_unsigned()) return abort("seed must be a non-negative integer");
                seed = r["seed"].get<std::uint64_t>();
            }
            try {
                state_ = reset(*g_, goal, seed);
            } catch (const std::exception& e) {
                return abort(e.what());
            }
            return bridge_record(*g_, *state_, 0.0);
        }
        if (msg.contains("action")) {
            const auto& a = msg["action"];
            std::optional<Action> act;
            if (a.is_number_integer()) act = action_from_index(a.get<long long>());
            else if (a.is_string()) act = parse_action(a.get<std::string>());
            if (!act) return abort("invalid action " + a.dump());
            if (!state_) return abort("action before reset");
            if (is_done(*state_)) return abort("action after episode end");
            const double r = apply_action(*g_, *state_, *act);
            return bridge_record(*g_, *state_, r);
        }
        return abort("expected a reset or action message");
    }

    bool in_episode() const { return state_.has_value(); }

private:
    nlohmann::json abort(std::string why) {
        state_.reset();
        return bridge_error(std::move(why));
    }

    const RecipeGraph* g_;
    std::optional<WorldState> state_;
};

/// Serves the protocol until end of input. Returns the number of messages handled.
inline long run_bridge(const RecipeGraph& g, std::istream& in, std::ostream& out) {
    Bridge b(g);
    std::string line;
    long n = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out << b.handle(line).dump() << '\n';
        out.flush();
        ++n;
    }
    return n;
}

}  // namespace craftlang::service
