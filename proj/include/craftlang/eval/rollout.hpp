#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <iomanip>
#include <map>
#include <numeric>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "craftlang/expert.hpp"
#include "craftlang/model/agent.hpp"
#include "craftlang/trace.hpp"

namespace craftlang::eval {

/// Batched episode driver interface. Slots are independent episodes.
class EpisodePolicy {
public:
    virtual ~EpisodePolicy() = default;

    /// Called once per episode before the first act() for that slot.
    virtual void begin(std::size_t slot, const WorldState& s) = 0;

    /// One action per listed slot; `states[i]` is the state of `slots[i]`.
    virtual std::vector<Action> act(const std::vector<std::size_t>& slots,
                                    const std::vector<const WorldState*>& states) = 0;

    /// Instruction behind each action of the last act() call, if any.
    virtual const std::vector<std::string>* last_instructions() const { return nullptr; }

    virtual std::string name() const = 0;
};

/// Greedy policy of a trained agent. Keeps the last three states per slot.
template <class T>
class AgentPolicy final : public EpisodePolicy {
public:
    explicit AgentPolicy(const model::Agent<T>& agent, bool record_instructions = false)
        : agent_(&agent), record_(record_instructions && agent.has_language()) {}

    void begin(std::size_t slot, const WorldState& s) override {
        if (history_.size() <= slot) {
            history_.resize(slot + 1);
            fresh_.resize(slot + 1);
        }
        auto& h = history_[slot];
        h.clear();
        const auto f = agent_->features(s);
        for (int i = 0; i < 3; ++i) h.push_back(f);
        fresh_[slot] = true;
    }

    std::vector<Action> act(const std::vector<std::size_t>& slots, const std::vector<const WorldState*>& states) override {
        std::vector<model::Observation> obs;
        obs.reserve(slots.size());
        for (std::size_t i = 0; i < slots.size(); ++i) {
            auto& h = history_[slots[i]];
            if (fresh_[slots[i]]) {
                fresh_[slots[i]] = false;
            } else {
                h.pop_front();
                h.push_back(agent_->features(*states[i]));
            }
            obs.push_back({{&h[0], &h[1], &h[2]}});
        }
        auto hl = agent_->policy_input(obs, record_);
        const auto [logits, value] = agent_->policy().forward(hl.input);
        std::vector<Action> out;
        for (Eigen::Index j = 0; j < logits.cols(); ++j) {
            Eigen::Index best;
            logits.col(j).maxCoeff(&best);
            out.push_back(static_cast<Action>(best));
        }
        instructions_ = std::move(hl.instructions);
        return out;
    }

    const std::vector<std::string>* last_instructions() const override { return record_ ? &instructions_ : nullptr; }
    std::string name() const override { return std::string(model::to_string(agent_->variant())); }

private:
    const model::Agent<T>* agent_;
    bool record_;
    std::vector<std::deque<model::StateFeatures>> history_;
    std::vector<bool> fresh_;
    std::vector<std::string> instructions_;
};

/// The scripted expert as a policy.
class ExpertPolicy final : public EpisodePolicy {
public:
    explicit ExpertPolicy(const RecipeGraph& g, std::uint64_t seed = 0) : g_(&g), seed_(seed) {}

    void begin(std::size_t slot, const WorldState&) override {
        if (experts_.size() <= slot) experts_.resize(slot + 1);
        experts_[slot].emplace(*g_, mix64(seed_, slot));
    }

    std::vector<Action> act(const std::vector<std::size_t>& slots, const std::vector<const WorldState*>& states) override {
        std::vector<Action> out;
        instructions_.clear();
        for (std::size_t i = 0; i < slots.size(); ++i) {
            auto step = experts_[slots[i]]->act(*states[i]);
            out.push_back(step.action);
            instructions_.push_back(std::move(step.instruction));
        }
        return out;
    }

    const std::vector<std::string>* last_instructions() const override { return &instructions_; }
    std::string name() const override { return "expert"; }

private:
    const RecipeGraph* g_;
    std::uint64_t seed_;
    std::vector<std::optional<ScriptedExpert>> experts_;
    std::vector<std::string> instructions_;
};

/// Uniform random actions.
class RandomPolicy final : public EpisodePolicy {
public:
    explicit RandomPolicy(std::uint64_t seed = 0) : rng_(seed) {}
    void begin(std::size_t, const WorldState&) override {}
    std::vector<Action> act(const std::vector<std::size_t>& slots, const std::vector<const WorldState*>&) override {
        std::vector<Action> out;
        for (std::size_t i = 0; i < slots.size(); ++i) out.push_back(static_cast<Action>(rng_.below(kActionCount)));
        return out;
    }
    std::string name() const override { return "random"; }

private:
    Rng rng_;
};

struct EpisodeSpec {
    TaskSpec task;
    std::uint64_t seed = 0;
};

struct EpisodeResult {
    EpisodeSpec spec;
    bool success = false;
    int steps = 0;
    std::optional<Trace> trace;  // when recorded
};

/// Runs every episode to completion, `batch` at a time.
inline std::vector<EpisodeResult> run_episodes(const RecipeGraph& g, EpisodePolicy& policy,
                                               const std::vector<EpisodeSpec>& specs, std::size_t batch = 64,
                                               bool record = false) {
    std::vector<EpisodeResult> results(specs.size());
    std::vector<WorldState> states(specs.size());
    for (std::size_t start = 0; start < specs.size(); start += batch) {
        const auto end = std::min(specs.size(), start + batch);
        std::vector<std::size_t> live;
        for (std::size_t i = start; i < end; ++i) {
            states[i] = reset(g, specs[i].task, specs[i].seed);
            results[i].spec = specs[i];
            if (record) {
                Trace t;
                t.game_id = specs[i].task.goal + "@" + std::to_string(specs[i].seed);
                t.task = specs[i].task.goal;
                t.seed = specs[i].seed;
                results[i].trace = std::move(t);
            }
            policy.begin(i - start, states[i]);
            if (!is_done(states[i])) live.push_back(i);
        }
        std::vector<std::string> last_text(end - start);
        while (!live.empty()) {
            std::vector<std::size_t> slots;
            std::vector<const WorldState*> ptrs;
            for (auto i : live) {
                slots.push_back(i - start);
                ptrs.push_back(&states[i]);
            }
            const auto actions = policy.act(slots, ptrs);
            const auto* texts = policy.last_instructions();
            std::vector<std::size_t> next;
            for (std::size_t k = 0; k < live.size(); ++k) {
                const auto i = live[k];
                if (record) {
                    TraceStep st;
                    st.state = states[i];
                    st.action = actions[k];
                    if (texts && k < texts->size()) {
                        auto& prev = last_text[i - start];
                        if (results[i].trace->steps.empty() || (*texts)[k] != prev) st.instruction = (*texts)[k];
                        prev = (*texts)[k];
                    }
                    results[i].trace->steps.push_back(std::move(st));
                }
                apply_action(g, states[i], actions[k]);
                if (is_done(states[i])) {
                    results[i].success = is_success(states[i]);
                    results[i].steps = states[i].step;
                    if (record) {
                        results[i].trace->final_state = states[i];
                        results[i].trace->success = results[i].success;
                    }
                } else {
                    next.push_back(i);
                }
            }
            live = std::move(next);
        }
    }
    return results;
}

/// Board seed of evaluation game k. Disjoint salt from the dataset seeds.
inline std::uint64_t eval_game_seed(std::uint64_t seed, const std::string& goal, std::uint64_t k) {
    return mix64(mix64(seed ^ 0xe7a1c0deULL, fnv1a(goal)), k);
}

struct EvalConfig {
    std::vector<std::string> tasks;  // empty: every task of the catalog
    int games = 100;
    std::vector<std::uint64_t> seeds{0, 1, 2};
    std::size_t batch = 128;

    void check() const {
        if (games < 1) throw std::invalid_argument("eval: games must be >= 1");
        if (seeds.empty()) throw std::invalid_argument("eval: at least one seed required");
    }
};

/// Success percentages per task and seed with derived averages.
class ResultTable {
public:
    struct Row {
        std::string task;
        int steps = 0;
        Split split = Split::Train;
        std::vector<double> success;  // percent, one per seed
        double mean() const {
            double s = 0;
            for (double v : success) s += v;
            return success.empty() ? 0.0 : s / static_cast<double>(success.size());
        }
    };

    std::string label;
    std::vector<std::uint64_t> seeds;
    std::vector<Row> rows;

    /// Mean over tasks of one step class (0 = all tasks), for one seed or
    /// averaged over seeds when `seed_index` < 0.
    double average(int steps = 0, int seed_index = -1) const {
        double s = 0;
        int n = 0;
        for (const auto& r : rows) {
            if (steps && r.steps != steps) continue;
            s += seed_index < 0 ? r.mean() : r.success[static_cast<std::size_t>(seed_index)];
            ++n;
        }
        return n ? s / n : 0.0;
    }

    /// Sample variance over seeds of the step-class average.
    double seed_variance(int steps = 0) const {
        if (seeds.size() < 2) return 0.0;
        std::vector<double> v;
        for (std::size_t k = 0; k < seeds.size(); ++k) v.push_back(average(steps, static_cast<int>(k)));
        const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        double s = 0;
        for (double x : v) s += (x - m) * (x - m);
        return s / static_cast<double>(v.size() - 1);
    }

    std::vector<int> step_classes() const {
        std::vector<int> out;
        for (const auto& r : rows)
            if (std::find(out.begin(), out.end(), r.steps) == out.end()) out.push_back(r.steps);
        std::sort(out.begin(), out.end());
        return out;
    }

    const Row* find(const std::string& task) const {
        for (const auto& r : rows)
            if (r.task == task) return &r;
        return nullptr;
    }

    std::string csv() const {
        std::ostringstream out;
        out << "task,steps";
        for (auto s : seeds) out << ",seed_" << s;
        out << ",mean\n";
        out << std::fixed << std::setprecision(1);
        for (const auto& r : rows) {
            out << '"' << r.task << '"' << ',' << r.steps;
            for (double v : r.success) out << ',' << v;
            out << ',' << r.mean() << '\n';
        }
        for (int c : step_classes()) {
            out << '"' << c << "-AVG\"," << c;
            for (std::size_t k = 0; k < seeds.size(); ++k) out << ',' << average(c, static_cast<int>(k));
            out << ',' << average(c) << '\n';
        }
        out << "\"Overall-AVG\",0";
        for (std::size_t k = 0; k < seeds.size(); ++k) out << ',' << average(0, static_cast<int>(k));
        out << ',' << average(0) << '\n';
        return out.str();
    }

    /// Tasks as columns grouped by step class, one line of success means.
    std::string text() const {
        std::ostringstream out;
        std::size_t width = 12;
        for (const auto& r : rows) width = std::max(width, r.task.size() + 2);
        out << (label.empty() ? std::string("results") : label) << "  (" << seeds.size() << " seeds)\n";
        out << std::left << std::setw(static_cast<int>(width)) << "task" << std::right << std::setw(6) << "steps"
            << std::setw(10) << "success" << std::setw(10) << "std\n";
        out << std::fixed << std::setprecision(1);
        for (int c : step_classes()) {
            for (const auto& r : rows) {
                if (r.steps != c) continue;
                double var = 0;
                for (double v : r.success) var += (v - r.mean()) * (v - r.mean());
                if (r.success.size() > 1) var /= static_cast<double>(r.success.size() - 1);
                out << std::left << std::setw(static_cast<int>(width)) << r.task << std::right << std::setw(6) << r.steps
                    << std::setw(10) << r.mean() << std::setw(9) << std::sqrt(var) << '\n';
            }
            out << std::left << std::setw(static_cast<int>(width)) << (std::to_string(c) + "-AVG") << std::right
                << std::setw(6) << c << std::setw(10) << average(c) << std::setw(9) << std::sqrt(seed_variance(c))
                << '\n';
        }
        out << std::left << std::setw(static_cast<int>(width)) << "Overall-AVG" << std::right << std::setw(6) << ""
            << std::setw(10) << average(0) << std::setw(9) << std::sqrt(seed_variance(0)) << '\n';
        return out.str();
    }

    nlohmann::json to_json() const {
        nlohmann::json rs = nlohmann::json::array();
        for (const auto& r : rows)
            rs.push_back({{"task", r.task}, {"steps", r.steps}, {"split", std::string(to_string(r.split))},
                          {"success", r.success}, {"mean", r.mean()}});
        nlohmann::json avg = nlohmann::json::object();
        for (int c : step_classes()) avg[std::to_string(c)] = {{"mean", average(c)}, {"variance", seed_variance(c)}};
        return {{"label", label},
                {"seeds", seeds},
                {"rows", rs},
                {"step_averages", avg},
                {"overall", {{"mean", average(0)}, {"variance", seed_variance(0)}}}};
    }
};

/// Success rate of `policy` on fresh games of each task.
inline ResultTable evaluate(const RecipeGraph& g, EpisodePolicy& policy, const std::vector<TaskSpec>& tasks,
                            const EvalConfig& cfg, const std::string& label = {}) {
    cfg.check();
    ResultTable table;
    table.label = label.empty() ? policy.name() : label;
    table.seeds = cfg.seeds;
    std::vector<EpisodeSpec> specs;
    for (const auto& t : tasks)
        for (auto seed : cfg.seeds)
            for (int k = 0; k < cfg.games; ++k) specs.push_back({t, eval_game_seed(seed, t.goal, static_cast<std::uint64_t>(k))});
    const auto results = run_episodes(g, policy, specs, cfg.batch);
    std::size_t i = 0;
    for (const auto& t : tasks) {
        ResultTable::Row row{t.goal, t.declared_steps, t.split, {}};
        for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
            int wins = 0;
            for (int k = 0; k < cfg.games; ++k) wins += results[i++].success;
            row.success.push_back(100.0 * wins / cfg.games);
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

/// Tasks named in `cfg.tasks`, or the whole split when empty.
inline std::vector<TaskSpec> select_tasks(const RecipeGraph& g, const std::vector<std::string>& names, Split split) {
    if (names.empty()) return g.catalog(split);
    std::vector<TaskSpec> out;
    for (const auto& n : names) out.push_back(g.task(n));
    return out;
}

/// Success rate per step class on `games` fresh games of each class, games
/// spread round-robin over the class's tasks.
inline std::map<int, double> success_by_class(const RecipeGraph& g, EpisodePolicy& policy,
                                              const std::vector<TaskSpec>& tasks, int games, std::uint64_t seed,
                                              std::size_t batch = 128) {
    std::map<int, std::vector<TaskSpec>> by_class;
    for (const auto& t : tasks) by_class[t.declared_steps].push_back(t);
    std::vector<EpisodeSpec> specs;
    std::vector<int> cls;
    for (const auto& [c, ts] : by_class)
        for (int k = 0; k < games; ++k) {
            const auto& t = ts[static_cast<std::size_t>(k) % ts.size()];
            specs.push_back({t, eval_game_seed(seed, t.goal, static_cast<std::uint64_t>(k))});
            cls.push_back(c);
        }
    const auto results = run_episodes(g, policy, specs, batch);
    std::map<int, double> out;
    std::map<int, int> n;
    for (std::size_t i = 0; i < results.size(); ++i) {
        out[cls[i]] += results[i].success;
        ++n[cls[i]];
    }
    for (auto& [c, v] : out) v /= n[c];
    return out;
}

}  // namespace craftlang::eval
