#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "craftlang/eval/rollout.hpp"
#include "craftlang/train/il.hpp"
#include "craftlang/train/ppo.hpp"

namespace craftlang::eval {

using model::Agent;
using model::Variant;

/// Everything needed to train one agent from scratch.
struct PipelineConfig {
    std::string name = "ours";
    model::ModelConfig model;
    train::ILConfig il;
    train::PPOConfig ppo;
    int games_per_task = 400;
    std::uint64_t dataset_seed = 0;
    double noise = 0.0;
    int min_count = 5;
    bool imitation = true;
    bool reinforcement = true;

    /// Named configurations: the full method and each reduced form.
    static PipelineConfig preset(const std::string& name) {
        PipelineConfig c;
        c.name = name;
        if (name == "ours") return c;
        if (name == "rl-only") {
            c.model.variant = Variant::NoLanguage;
            c.imitation = false;
            return c;
        }
        if (name == "il-rl-no-language") {
            c.model.variant = Variant::NoLanguage;
            return c;
        }
        c.model.variant = model::parse_variant(name);
        if (c.model.variant == Variant::StateReconstruction) c.il.epochs = 25;
        if (c.model.variant == Variant::StatePrediction) c.il.epochs = 20;
        return c;
    }

    static const std::vector<std::string>& preset_names() {
        static const std::vector<std::string> names = {"ours",           "rl-only",        "il-rl-no-language",
                                                       "language-only",  "discriminative", "state-reconstruction",
                                                       "state-prediction"};
        return names;
    }

    nlohmann::json to_json() const {
        return {{"name", name},
                {"model", model.to_json()},
                {"il", il.to_json()},
                {"ppo", ppo.to_json()},
                {"dataset", {{"games_per_task", games_per_task}, {"seed", dataset_seed}, {"noise", noise}, {"min_count", min_count}}},
                {"stages", {{"imitation", imitation}, {"reinforcement", reinforcement}}}};
    }

    /// Starts from the preset named by "name" (default "ours") and overrides
    /// whatever the document specifies.
    static PipelineConfig from_json(const nlohmann::json& j) {
        PipelineConfig c = preset(j.value("name", std::string("ours")));
        if (j.contains("model")) {
            auto m = c.model.to_json();
            m.update(j["model"]);
            c.model = model::ModelConfig::from_json(m);
        }
        if (j.contains("il")) {
            auto m = c.il.to_json();
            m.update(j["il"]);
            c.il = train::ILConfig::from_json(m);
        }
        if (j.contains("ppo")) {
            auto m = c.ppo.to_json();
            m.update(j["ppo"]);
            c.ppo = train::PPOConfig::from_json(m);
        }
        if (j.contains("dataset")) {
            const auto& d = j["dataset"];
            c.games_per_task = d.value("games_per_task", c.games_per_task);
            c.dataset_seed = d.value("seed", c.dataset_seed);
            c.noise = d.value("noise", c.noise);
            c.min_count = d.value("min_count", c.min_count);
        }
        if (j.contains("stages")) {
            c.imitation = j["stages"].value("imitation", c.imitation);
            c.reinforcement = j["stages"].value("reinforcement", c.reinforcement);
        }
        c.ppo.check();
        if (c.games_per_task < 1) throw std::invalid_argument("pipeline: games_per_task must be >= 1");
        return c;
    }
};

struct TrainedAgent {
    Agent<float> agent;
    std::optional<train::TrainReport> il;
    std::optional<train::TrainReport> rl;
};

struct PipelineHooks {
    std::function<void(const train::EpochRecord&)> on_epoch;
    train::UpdateHook on_update;
};

/// IL on `traces` (if enabled) then PPO on `rl_tasks` (if enabled).
inline TrainedAgent train_pipeline(const RecipeGraph& g, const PipelineConfig& cfg, const std::vector<Trace>& traces,
                                   const std::vector<TaskSpec>& rl_tasks, const PipelineHooks& hooks = {}) {
    TrainedAgent out{model::make_agent<float>(g, train::instruction_corpus(traces), cfg.model, cfg.min_count), {}, {}};
    if (cfg.imitation && cfg.il.epochs > 0) {
        const auto data = train::build_il_data(out.agent, traces);
        train::EpochEvaluator<float> evaluator;
        if (cfg.il.eval_games > 0) {
            std::vector<TaskSpec> eval_tasks;
            std::set<std::string> seen;
            for (const auto& t : traces)
                if (seen.insert(t.task).second) eval_tasks.push_back(g.task(t.task));
            evaluator = [&g, eval_tasks, n = cfg.il.eval_games, seed = cfg.il.seed](const Agent<float>& a) {
                AgentPolicy<float> p(a);
                return success_by_class(g, p, eval_tasks, n, mix64(seed, 0xe0c4ULL));
            };
        }
        out.il = train::train_il(out.agent, data, cfg.il, evaluator, hooks.on_epoch);
    }
    if (cfg.reinforcement && cfg.ppo.total_steps > 0) out.rl = train::train_rl(out.agent, rl_tasks, cfg.ppo, hooks.on_update);
    return out;
}

/// Demonstrations for `tasks`, the first `games` games of each.
inline std::vector<Trace> demonstrations(const RecipeGraph& g, const PipelineConfig& cfg, const std::vector<TaskSpec>& tasks,
                                         int games) {
    return generate_dataset(g, tasks, games, cfg.dataset_seed, cfg.noise);
}

enum class ProtocolKind { Standard, ZeroShot, FewShot, DataAblation, RewardOnly };

inline constexpr std::array<std::string_view, 5> kProtocolNames = {"standard", "zero-shot", "few-shot", "data-ablation",
                                                                   "reward-only"};

inline std::string_view to_string(ProtocolKind k) { return kProtocolNames[static_cast<std::size_t>(k)]; }

inline ProtocolKind parse_protocol(std::string_view s) {
    for (std::size_t i = 0; i < kProtocolNames.size(); ++i)
        if (kProtocolNames[i] == s) return static_cast<ProtocolKind>(i);
    throw std::invalid_argument("unknown protocol '" + std::string(s) + "'");
}

inline const std::vector<double>& few_shot_fractions() {
    static const std::vector<double> v = {0.05, 0.10, 1.0};
    return v;
}

inline const std::vector<double>& ablation_fractions() {
    static const std::vector<double> v = {0.25, 0.50, 0.75, 1.0};
    return v;
}

using Triple = std::array<std::string, 3>;

struct Protocol {
    ProtocolKind kind = ProtocolKind::Standard;
    double fraction = 1.0;         // few-shot and data-ablation
    std::vector<Triple> withheld;  // few-shot; empty draws `permutations` seeded triples
    int permutations = 3;
    std::uint64_t seed = 0;

    void check(const RecipeGraph& g) const {
        auto allowed = [&](const std::vector<double>& v) {
            return std::any_of(v.begin(), v.end(), [&](double f) { return std::abs(f - fraction) < 1e-9; });
        };
        if (kind == ProtocolKind::FewShot && !allowed(few_shot_fractions()))
            throw std::invalid_argument("few-shot fraction must be one of 0.05, 0.10, 1.0");
        if (kind == ProtocolKind::DataAblation && !allowed(ablation_fractions()))
            throw std::invalid_argument("data-ablation fraction must be one of 0.25, 0.50, 0.75, 1.0");
        if (kind == ProtocolKind::FewShot && withheld.empty() && permutations < 1)
            throw std::invalid_argument("few-shot needs at least one withheld triple");
        for (const auto& tr : withheld)
            for (const auto& name : tr)
                if (!g.has_task(name) || g.task(name).split != Split::Train)
                    throw std::invalid_argument("withheld task '" + name + "' is not in the train catalog");
    }
};

/// `n` distinct (1-step, 2-step, 3-step) train-task triples drawn with `seed`.
inline std::vector<Triple> withheld_triples(const RecipeGraph& g, int n, std::uint64_t seed) {
    std::array<std::vector<std::string>, 3> pools;
    for (const auto& t : g.catalog(Split::Train))
        if (t.declared_steps >= 1 && t.declared_steps <= 3) pools[static_cast<std::size_t>(t.declared_steps - 1)].push_back(t.goal);
    std::size_t combos = 1;
    for (const auto& p : pools) {
        if (p.empty()) throw std::invalid_argument("train catalog lacks a 1-, 2- or 3-step task");
        combos *= p.size();
    }
    if (static_cast<std::size_t>(n) > combos) throw std::invalid_argument("not enough distinct withheld triples");
    Rng rng(mix64(seed, 0xfe35ULL));
    std::vector<Triple> out;
    while (out.size() < static_cast<std::size_t>(n)) {
        Triple t;
        for (std::size_t i = 0; i < 3; ++i) t[i] = pools[i][rng.below(pools[i].size())];
        if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
    }
    return out;
}

struct ProtocolResult {
    ResultTable table;
    nlohmann::json details = nlohmann::json::object();
    std::vector<train::TrainReport> reports;
    std::optional<Agent<float>> agent;  // the standard-trained model, when this run produced or used one
};

/// Hash of every trainable parameter.
inline std::uint64_t agent_hash(Agent<float>& a) { return nn::params_hash(a.params()); }

inline std::vector<TaskSpec> eval_tasks(const RecipeGraph& g, const EvalConfig& cfg, Split split) {
    return select_tasks(g, cfg.tasks, split);
}

/// Runs one experimental protocol. `pretrained` stands in for the standard
/// model where a protocol builds on it (zero-shot, reward-only, standard).
inline ProtocolResult run_protocol(const RecipeGraph& g, const Protocol& protocol, const PipelineConfig& cfg,
                                   const EvalConfig& ecfg, const Agent<float>* pretrained = nullptr,
                                   const PipelineHooks& hooks = {}) {
    protocol.check(g);
    ecfg.check();
    ProtocolResult res;
    res.details["protocol"] = to_string(protocol.kind);
    res.details["pipeline"] = cfg.to_json();
    const auto train_tasks = g.catalog(Split::Train);
    const std::string label = cfg.name + " " + std::string(to_string(protocol.kind));

    auto record = [&](TrainedAgent& t) {
        if (t.il) res.reports.push_back(*t.il);
        if (t.rl) res.reports.push_back(*t.rl);
    };
    auto standard = [&]() -> Agent<float> {
        if (pretrained) return *pretrained;
        auto t = train_pipeline(g, cfg, demonstrations(g, cfg, train_tasks, cfg.games_per_task), train_tasks, hooks);
        record(t);
        return std::move(t.agent);
    };

    switch (protocol.kind) {
        case ProtocolKind::Standard: {
            res.agent = standard();
            AgentPolicy<float> p(*res.agent);
            res.table = evaluate(g, p, eval_tasks(g, ecfg, Split::Train), ecfg, label);
            break;
        }
        case ProtocolKind::ZeroShot: {
            res.agent = standard();
            const auto before = agent_hash(*res.agent);
            {
                AgentPolicy<float> p(*res.agent);
                res.table = evaluate(g, p, eval_tasks(g, ecfg, Split::Unseen), ecfg, label);
            }
            const auto after = agent_hash(*res.agent);
            res.details["hash_before"] = std::to_string(before);
            res.details["hash_after"] = std::to_string(after);
            if (before != after) throw std::logic_error("zero-shot evaluation changed model parameters");
            break;
        }
        case ProtocolKind::FewShot: {
            const auto triples =
                protocol.withheld.empty() ? withheld_triples(g, protocol.permutations, protocol.seed) : protocol.withheld;
            const int kept = std::max(1, static_cast<int>(std::lround(protocol.fraction * cfg.games_per_task)));
            res.details["withheld"] = triples;
            res.details["withheld_demos_per_task"] = kept;
            res.table.label = label;
            res.table.seeds = ecfg.seeds;
            for (const auto& triple : triples) {
                std::vector<TaskSpec> rest, held;
                for (const auto& t : train_tasks)
                    (std::find(triple.begin(), triple.end(), t.goal) == triple.end() ? rest : held).push_back(t);
                auto traces = demonstrations(g, cfg, rest, cfg.games_per_task);
                for (auto& t : demonstrations(g, cfg, held, kept)) traces.push_back(std::move(t));
                auto trained = train_pipeline(g, cfg, traces, rest, hooks);
                record(trained);
                AgentPolicy<float> p(trained.agent);
                for (auto& row : evaluate(g, p, held, ecfg).rows) res.table.rows.push_back(std::move(row));
            }
            break;
        }
        case ProtocolKind::DataAblation: {
            const int kept = std::max(1, static_cast<int>(std::lround(protocol.fraction * cfg.games_per_task)));
            res.details["demos_per_task"] = kept;
            auto trained = train_pipeline(g, cfg, demonstrations(g, cfg, train_tasks, kept), train_tasks, hooks);
            record(trained);
            res.agent = std::move(trained.agent);
            AgentPolicy<float> p(*res.agent);
            res.table = evaluate(g, p, eval_tasks(g, ecfg, Split::Train), ecfg, label);
            break;
        }
        case ProtocolKind::RewardOnly: {
            auto agent = standard();
            const auto unseen = eval_tasks(g, ecfg, Split::Unseen);
            res.reports.push_back(train::train_rl(agent, unseen, cfg.ppo, hooks.on_update));
            AgentPolicy<float> p(agent);
            res.table = evaluate(g, p, unseen, ecfg, label);
            res.agent = std::move(agent);
            break;
        }
    }
    res.details["table"] = res.table.to_json();
    return res;
}

}  // namespace craftlang::eval
