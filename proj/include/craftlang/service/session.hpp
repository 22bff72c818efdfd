#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "craftlang/eval/interpret.hpp"
#include "craftlang/trace.hpp"

namespace craftlang::service {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

struct Response {
    int status = 200;
    json body = json::object();
};

inline Response error(int status, std::string message) { return {status, {{"error", std::move(message)}}}; }

/// Append-only newline-delimited trace file with an in-memory index.
class TraceStore {
public:
    TraceStore(const RecipeGraph& g, std::filesystem::path path) : g_(&g), path_(std::move(path)) {
        if (std::filesystem::exists(path_))
            for (auto& t : read_traces(g, path_)) traces_.push_back(std::move(t));
    }

    void append(const Trace& t) {
        std::lock_guard lock(mu_);
        write_traces(*g_, path_, {t}, true);
        traces_.push_back(t);
    }

    std::vector<Trace> all() const {
        std::lock_guard lock(mu_);
        return traces_;
    }

    std::optional<Trace> find(const std::string& id) const {
        std::lock_guard lock(mu_);
        for (const auto& t : traces_)
            if (t.game_id == id) return t;
        return std::nullopt;
    }

    const std::filesystem::path& path() const { return path_; }

private:
    const RecipeGraph* g_;
    std::filesystem::path path_;
    mutable std::mutex mu_;
    std::vector<Trace> traces_;
};

struct Session {
    std::string id;
    WorldState state;
    Trace trace;
    std::optional<std::string> pending;  // instruction typed but not yet acted on
    std::string instruction;             // instruction in force
    bool finished = false;
    Clock::time_point created;
    Clock::time_point last_used;
    std::mutex mu;
};

struct ServiceConfig {
    std::filesystem::path data_dir = "data";
    std::chrono::seconds idle_timeout{1800};
    std::string token;  // empty disables the check
};

/// Recipes involved in producing `goal`, in expansion order.
inline json recipe_panel(const RecipeGraph& g, ItemId goal) {
    json out = json::array();
    for (const auto& p : g.expand(goal)) {
        if (p.kind == Production::Kind::Mine) {
            const auto& r = g.mine_rules()[static_cast<std::size_t>(p.rule)];
            json j = {{"kind", "mine"}, {"item", r.yield}, {"node", r.node}};
            if (!r.tool.empty()) j["tool"] = r.tool;
            out.push_back(std::move(j));
        } else {
            const auto& r = g.recipes()[static_cast<std::size_t>(p.rule)];
            json inputs = json::array();
            for (const auto& in : r.inputs) inputs.push_back({{"item", in.item}, {"count", in.count}});
            out.push_back({{"kind", "craft"}, {"item", r.output}, {"bench", r.bench}, {"inputs", inputs}});
        }
    }
    return out;
}

/// Request router and session table. Transport-independent.
class SessionService {
public:
    SessionService(const RecipeGraph& g, ServiceConfig cfg, std::function<Clock::time_point()> now = Clock::now)
        : g_(&g), cfg_(std::move(cfg)), now_(std::move(now)), store_(g, cfg_.data_dir / "traces.ndjson"),
          ids_(std::random_device{}()) {}

    /// `token` is the value presented by the client, if any.
    Response handle(const std::string& method, const std::string& path, const std::string& body,
                    const std::string& token = {}) {
        if (!cfg_.token.empty() && token != cfg_.token) return error(401, "missing or wrong token");
        expire();
        json req = json::object();
        if (!body.empty()) {
            req = json::parse(body, nullptr, false);
            if (req.is_discarded() || !req.is_object()) return error(400, "body must be a JSON object");
        }
        static const std::regex session_re(R"(^/api/sessions/([A-Za-z0-9]+)(/(instruction|action|finish))?$)");
        static const std::regex trace_re(R"(^/api/traces/(.+)$)");
        std::smatch m;
        if (path == "/api/tasks" && method == "GET") return tasks();
        if (path == "/api/sessions" && method == "POST") return create(req);
        if (path == "/api/traces" && method == "GET") return list_traces();
        if (std::regex_match(path, m, trace_re) && method == "GET") return get_trace(m[1].str());
        if (std::regex_match(path, m, session_re)) {
            auto s = find(m[1].str());
            if (!s) return error(404, "unknown session " + m[1].str());
            std::lock_guard lock(s->mu);
            s->last_used = now_();
            const std::string verb = m[3].str();
            if (verb.empty() && method == "GET") return view(*s);
            if (method != "POST" || verb.empty()) return error(405, "method not allowed");
            if (verb == "instruction") return instruct(*s, req);
            if (verb == "action") return act(*s, req);
            return finish(*s);
        }
        return error(404, "no route for " + method + " " + path);
    }

    std::size_t live_sessions() const {
        std::lock_guard lock(mu_);
        return sessions_.size();
    }

    const TraceStore& store() const { return store_; }

private:
    std::shared_ptr<Session> find(const std::string& id) {
        std::lock_guard lock(mu_);
        auto it = sessions_.find(id);
        return it == sessions_.end() ? nullptr : it->second;
    }

    void expire() {
        std::lock_guard lock(mu_);
        const auto t = now_();
        for (auto it = sessions_.begin(); it != sessions_.end();) {
            const auto keep = it->second;
            std::unique_lock sl(keep->mu, std::try_to_lock);
            if (sl.owns_lock() && t - keep->last_used > cfg_.idle_timeout)
                it = sessions_.erase(it);
            else
                ++it;
        }
    }

    Response tasks() const {
        json out = json::array();
        for (const auto& t : g_->catalog(Split::All))
            out.push_back({{"task", t.goal}, {"steps", t.declared_steps}, {"split", to_string(t.split)}});
        return {200, out};
    }

    Response create(const json& req) {
        if (!req.contains("task") || !req["task"].is_string()) return error(400, "field 'task' (string) required");
        const auto goal = req["task"].get<std::string>();
        if (!g_->has_task(goal)) return error(422, "unknown task '" + goal + "'");
        std::uint64_t seed = 0;
        auto s = std::make_shared<Session>();
        {
            std::lock_guard lock(mu_);
            if (req.contains("seed")) {
                if (!req["seed"].is_number_unsigned()) return error(400, "field 'seed' must be a non-negative integer");
                seed = req["seed"].get<std::uint64_t>();
            } else {
                seed = ids_();
            }
            do {
                std::ostringstream id;
                id << std::hex << ids_();
                s->id = id.str();
            } while (sessions_.count(s->id));
        }
        try {
            s->state = reset(*g_, goal, seed);
        } catch (const std::exception& e) {
            return error(422, e.what());
        }
        s->trace.game_id = "session-" + s->id;
        s->trace.task = goal;
        s->trace.seed = seed;
        s->created = s->last_used = now_();
        {
            std::lock_guard lock(mu_);
            sessions_[s->id] = s;
        }
        return {201, {{"session_id", s->id}, {"seed", seed}, {"state", render(*g_, s->state)}}};
    }

    Response view(const Session& s) const {
        json inv = json::object();
        for (auto [id, n] : s.state.inventory.entries()) inv[g_->item_name(id)] = n;
        return {200,
                {{"session_id", s.id},
                 {"task", s.trace.task},
                 {"seed", s.trace.seed},
                 {"state", render(*g_, s.state)},
                 {"inventory", inv},
                 {"goal", g_->item_name(s.state.goal)},
                 {"recipes", recipe_panel(*g_, s.state.goal)},
                 {"instruction", s.pending ? *s.pending : s.instruction},
                 {"awaiting_action", s.pending.has_value()},
                 {"actions", s.trace.steps.size()},
                 {"done", is_done(s.state)},
                 {"success", is_success(s.state)},
                 {"finished", s.finished}}};
    }

    Response instruct(Session& s, const json& req) {
        if (s.finished) return error(409, "session already finished");
        if (is_done(s.state)) return error(409, "episode is over");
        if (!req.contains("text") || !req["text"].is_string()) return error(400, "field 'text' (string) required");
        const auto text = req["text"].get<std::string>();
        if (tokenize(text).empty()) return error(422, "instruction is empty");
        if (s.pending) return error(409, "an instruction is already waiting for its first action");
        s.pending = text;
        return {200, {{"instruction", text}, {"awaiting_action", true}}};
    }

    Response act(Session& s, const json& req) {
        if (s.finished) return error(409, "session already finished");
        if (!req.contains("action")) return error(422, "field 'action' required");
        std::optional<Action> a;
        if (req["action"].is_string()) a = parse_action(req["action"].get<std::string>());
        else if (req["action"].is_number_integer()) a = action_from_index(req["action"].get<long long>());
        if (!a) return error(422, "malformed action " + req["action"].dump());
        if (!s.pending && s.instruction.empty()) return error(409, "enter an instruction before acting");
        if (is_done(s.state)) return error(409, "episode is over");
        TraceStep st{s.state, std::nullopt, *a};
        if (s.pending) {
            st.instruction = *s.pending;
            s.instruction = *s.pending;
            s.pending.reset();
        }
        s.trace.steps.push_back(std::move(st));
        const double reward = apply_action(*g_, s.state, *a);
        return {200,
                {{"state", render(*g_, s.state)},
                 {"reward", reward},
                 {"done", is_done(s.state)},
                 {"success", is_success(s.state)}}};
    }

    Response finish(Session& s) {
        if (s.finished) return error(409, "session already finished");
        Trace t = s.trace;
        t.final_state = s.state;
        t.success = is_success(s.state);
        const auto verdict = validate_trace(*g_, t);
        if (!verdict) return {422, {{"valid", false}, {"message", verdict.message}}};
        store_.append(t);
        s.finished = true;
        return {200, {{"valid", true}, {"trace_id", t.game_id}, {"success", t.success}, {"actions", t.steps.size()}}};
    }

    Response list_traces() const {
        json out = json::array();
        for (const auto& t : store_.all())
            out.push_back({{"id", t.game_id}, {"task", t.task}, {"seed", t.seed}, {"success", t.success},
                           {"actions", t.steps.size()}});
        return {200, out};
    }

    Response get_trace(const std::string& id) const {
        auto t = store_.find(id);
        if (!t) return error(404, "unknown trace " + id);
        const auto e = eval::transcribe(*t);
        return {200, {{"trace", trace_to_json(*g_, *t)}, {"keyframes", e.keyframes}, {"inventory_changes", e.inventory_changes}}};
    }

    const RecipeGraph* g_;
    ServiceConfig cfg_;
    std::function<Clock::time_point()> now_;
    TraceStore store_;
    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::mt19937_64 ids_;
};

}  // namespace craftlang::service
