#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "craftlang/eval/interpret.hpp"
#include "craftlang/eval/protocol.hpp"
#include "craftlang/service/bridge.hpp"
#include "craftlang/service/server.hpp"

using namespace craftlang;
namespace fs = std::filesystem;

namespace {

nlohmann::json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    return nlohmann::json::parse(in);
}

void write_text(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << text;
}

struct Common {
    std::string recipes;
    const RecipeGraph& graph() {
        static std::optional<RecipeGraph> custom;
        if (recipes.empty()) return default_recipes();
        if (!custom) custom = RecipeGraph::load_file(recipes);
        return *custom;
    }
};

std::vector<TaskSpec> parse_tasks(const RecipeGraph& g, const std::string& spec) {
    if (spec == "train" || spec == "unseen" || spec == "all") return g.catalog(parse_split(spec));
    std::vector<TaskSpec> out;
    std::stringstream ss(spec);
    std::string name;
    while (std::getline(ss, name, ','))
        if (!name.empty()) out.push_back(g.task(name));
    return out;
}

eval::PipelineConfig load_pipeline(const std::string& config, const std::string& preset, std::optional<std::uint64_t> seed) {
    nlohmann::json j = config.empty() ? nlohmann::json::object() : read_json(config);
    if (!preset.empty()) j["name"] = preset;
    auto c = eval::PipelineConfig::from_json(j);
    if (seed) {
        c.model.seed = *seed;
        c.il.seed = *seed;
        c.ppo.seed = *seed;
    }
    return c;
}

void write_report(const fs::path& dir, const std::string& stem, const train::TrainReport& r) {
    write_text(dir / (stem + ".json"), r.to_json().dump(2) + "\n");
    write_text(dir / (stem + ".csv"), r.csv());
}

void log_epoch(const train::EpochRecord& r) {
    std::cerr << "epoch " << r.epoch << " action " << r.action_loss << " language " << r.language_loss << " aux "
              << r.auxiliary_loss << " acc " << r.accuracy;
    for (auto [k, v] : r.success) std::cerr << " s" << k << "=" << v;
    std::cerr << " t=" << r.seconds << "s\n";
}

void log_update(const nlohmann::json& row) { std::cerr << row.dump() << "\n"; }

std::vector<Trace> load_or_generate(const RecipeGraph& g, const eval::PipelineConfig& c, const std::string& data) {
    if (!data.empty()) return read_traces(g, data);
    return eval::demonstrations(g, c, g.catalog(Split::Train), c.games_per_task);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"craftlang: language-guided crafting agents"};
    app.require_subcommand(1);
    Common common;
    app.add_option("--recipes", common.recipes, "Recipe config (default: data directory recipes.json)");

    // validate-recipes
    auto* validate = app.add_subcommand("validate-recipes", "Load and check a recipe config");
    std::string validate_path;
    validate->add_option("config", validate_path, "Recipe config file");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate scripted-expert demonstrations");
    std::string gen_tasks = "train", gen_out = "data/traces.ndjson";
    int gen_games = 400;
    std::uint64_t gen_seed = 0;
    double gen_noise = 0.0;
    gen->add_option("--tasks", gen_tasks, "train | unseen | all | comma-separated goals");
    gen->add_option("--games", gen_games, "Games per task")->check(CLI::PositiveNumber);
    gen->add_option("--seed", gen_seed, "Dataset seed");
    gen->add_option("--noise", gen_noise, "Instruction token-noise probability")->check(CLI::Range(0.0, 1.0));
    gen->add_option("--out", gen_out, "Output trace file");

    // train-il / train-baseline / train-rl share most options
    struct TrainOpts {
        std::string config, out = "runs/out", data, variant, checkpoint, tasks = "train";
        std::optional<std::uint64_t> seed;
        bool with_rl = false;
    };
    TrainOpts il_o, base_o, rl_o;
    auto add_train = [](CLI::App* s, TrainOpts& o) {
        s->add_option("--config", o.config, "Pipeline config (JSON)");
        s->add_option("--seed", o.seed, "Seed for model init, batching and rollouts");
        s->add_option("--out", o.out, "Output directory");
    };
    auto* il = app.add_subcommand("train-il", "Imitation learning on demonstrations");
    add_train(il, il_o);
    il->add_option("--data", il_o.data, "Trace file (default: generate from config)");
    auto* base = app.add_subcommand("train-baseline", "Train a reduced variant (IL, then PPO unless disabled)");
    add_train(base, base_o);
    base->add_option("--variant", base_o.variant, "Preset name")
        ->required()
        ->check(CLI::IsMember(eval::PipelineConfig::preset_names()));
    base->add_option("--data", base_o.data, "Trace file (default: generate from config)");
    auto* rl = app.add_subcommand("train-rl", "PPO fine-tuning with the high-level module frozen");
    add_train(rl, rl_o);
    rl->add_option("--checkpoint", rl_o.checkpoint, "Initial model (default: fresh no-language agent)");
    rl->add_option("--tasks", rl_o.tasks, "train | unseen | all | comma-separated goals");

    // eval
    auto* ev = app.add_subcommand("eval", "Run an evaluation protocol");
    std::string ev_protocol = "standard", ev_checkpoint, ev_out = "runs/eval", ev_config, ev_tasks, ev_withheld;
    int ev_games = 100, ev_perms = 3, ev_interpret = 0;
    std::vector<std::uint64_t> ev_seeds{0, 1, 2};
    double ev_fraction = 1.0;
    std::uint64_t ev_protocol_seed = 0;
    ev->add_option("--protocol", ev_protocol, "standard | zero-shot | few-shot | data-ablation | reward-only")
        ->check(CLI::IsMember({"standard", "zero-shot", "few-shot", "data-ablation", "reward-only"}));
    ev->add_option("--checkpoint", ev_checkpoint, "Trained model for protocols that build on it");
    ev->add_option("--config", ev_config, "Pipeline config for protocols that train");
    ev->add_option("--out", ev_out, "Output directory");
    ev->add_option("--games", ev_games, "Games per task and seed")->check(CLI::PositiveNumber);
    ev->add_option("--seeds", ev_seeds, "Evaluation seeds");
    ev->add_option("--tasks", ev_tasks, "Comma-separated goals (default: protocol's split)");
    ev->add_option("--fraction", ev_fraction, "Few-shot or ablation demonstration fraction");
    ev->add_option("--withheld", ev_withheld, "Few-shot triple 'a,b,c' (default: seeded triples)");
    ev->add_option("--permutations", ev_perms, "Seeded few-shot triples");
    ev->add_option("--protocol-seed", ev_protocol_seed, "Seed for withheld triples");
    ev->add_option("--interpret", ev_interpret, "Also write an interpretability report over N games");

    // serve
    auto* serve = app.add_subcommand("serve", "HTTP session service");
    int port = 8080, idle = 1800;
    std::string host = "127.0.0.1", data_dir = "data", web_dir = CRAFTLANG_DEFAULT_WEB_DIR, token;
    serve->add_option("--port", port, "Listen port");
    serve->add_option("--host", host, "Listen address");
    serve->add_option("--data-dir", data_dir, "Directory for the trace store");
    serve->add_option("--web-dir", web_dir, "Static files served at /");
    serve->add_option("--token", token, "Shared token required on /api requests");
    serve->add_option("--idle-timeout", idle, "Seconds before an idle session expires");

    // bridge
    auto* bridge = app.add_subcommand("bridge", "Newline-delimited JSON environment on stdin/stdout");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*validate) {
            const auto g = validate_path.empty() ? RecipeGraph::load_file(default_recipe_path()) : RecipeGraph::load_file(validate_path);
            int mismatched = 0;
            for (auto split : {Split::Train, Split::Unseen}) {
                std::map<int, int> by;
                for (const auto& t : g.catalog(split)) {
                    ++by[t.declared_steps];
                    const auto n = g.expand(g.item_id(t.goal)).size();
                    if (n != static_cast<std::size_t>(t.declared_steps)) {
                        std::cerr << t.goal << ": declared " << t.declared_steps << " steps, expands to " << n << "\n";
                        ++mismatched;
                    }
                }
                std::cout << to_string(split) << ":";
                for (auto [k, n] : by) std::cout << " " << n << "x" << k << "-step";
                std::cout << "\n";
            }
            if (mismatched) {
                std::cerr << mismatched << " catalog task(s) with wrong step counts\n";
                return 1;
            }
            std::cout << g.item_count() << " items, " << g.recipes().size() << " recipes, " << g.mine_rules().size()
                      << " mine rules: ok\n";
            return 0;
        }
        const RecipeGraph& g = common.graph();

        if (*gen) {
            const auto tasks = parse_tasks(g, gen_tasks);
            const auto traces = generate_dataset(g, tasks, gen_games, gen_seed, gen_noise);
            for (const auto& t : traces)
                if (auto v = validate_trace(g, t); !v) throw std::runtime_error("generated trace invalid: " + v.message);
            write_traces(g, gen_out, traces);
            std::cout << "wrote " << traces.size() << " traces to " << gen_out << "\n";
            return 0;
        }

        if (*il || *base) {
            auto& o = *il ? il_o : base_o;
            auto cfg = load_pipeline(o.config, *base ? o.variant : std::string(), o.seed);
            if (*il) cfg.reinforcement = false;
            const auto traces = load_or_generate(g, cfg, o.data);
            std::cerr << "training " << cfg.name << " on " << traces.size() << " traces\n";
            auto trained = eval::train_pipeline(g, cfg, traces, g.catalog(Split::Train), {log_epoch, log_update});
            fs::create_directories(o.out);
            write_text(fs::path(o.out) / "config.json", cfg.to_json().dump(2) + "\n");
            if (trained.il) write_report(o.out, "train_il", *trained.il);
            if (trained.rl) write_report(o.out, "train_rl", *trained.rl);
            trained.agent.save(fs::path(o.out) / "model.ckpt");
            std::cout << "saved " << (fs::path(o.out) / "model.ckpt").string() << "\n";
            return 0;
        }

        if (*rl) {
            auto cfg = load_pipeline(rl_o.config, rl_o.checkpoint.empty() ? "rl-only" : "", rl_o.seed);
            auto agent = rl_o.checkpoint.empty()
                             ? model::make_agent<float>(g, train::instruction_corpus(eval::demonstrations(
                                                               g, cfg, g.catalog(Split::Train), cfg.games_per_task)),
                                                        cfg.model, cfg.min_count)
                             : model::Agent<float>::load(g, rl_o.checkpoint);
            const auto report = train::train_rl(agent, parse_tasks(g, rl_o.tasks), cfg.ppo, log_update);
            fs::create_directories(rl_o.out);
            write_text(fs::path(rl_o.out) / "config.json", cfg.to_json().dump(2) + "\n");
            write_report(rl_o.out, "train_rl", report);
            agent.save(fs::path(rl_o.out) / "model.ckpt");
            std::cout << "saved " << (fs::path(rl_o.out) / "model.ckpt").string() << "\n";
            return 0;
        }

        if (*ev) {
            eval::Protocol p;
            p.kind = eval::parse_protocol(ev_protocol);
            p.fraction = ev_fraction;
            p.permutations = ev_perms;
            p.seed = ev_protocol_seed;
            if (!ev_withheld.empty()) {
                const auto ts = parse_tasks(g, ev_withheld);
                if (ts.size() != 3) throw std::invalid_argument("--withheld needs exactly three goals");
                p.withheld.push_back({ts[0].goal, ts[1].goal, ts[2].goal});
            }
            eval::EvalConfig ecfg;
            ecfg.games = ev_games;
            ecfg.seeds = ev_seeds;
            if (!ev_tasks.empty())
                for (const auto& t : parse_tasks(g, ev_tasks)) ecfg.tasks.push_back(t.goal);
            const auto cfg = load_pipeline(ev_config, "", std::nullopt);
            std::optional<model::Agent<float>> agent;
            if (!ev_checkpoint.empty()) agent = model::Agent<float>::load(g, ev_checkpoint);
            const auto res = eval::run_protocol(g, p, cfg, ecfg, agent ? &*agent : nullptr, {log_epoch, log_update});
            const fs::path out = ev_out;
            write_text(out / "results.csv", res.table.csv());
            write_text(out / "results.txt", res.table.text());
            write_text(out / "results.json", res.details.dump(2) + "\n");
            for (std::size_t i = 0; i < res.reports.size(); ++i)
                write_report(out, "train_" + std::to_string(i) + "_" + res.reports[i].phase, res.reports[i]);
            std::cout << res.table.text();
            if (ev_interpret > 0) {
                if (!res.agent) throw std::invalid_argument("--interpret needs a protocol that yields a single model");
                const auto tasks = eval::select_tasks(g, ecfg.tasks, p.kind == eval::ProtocolKind::Standard ? Split::Train : Split::Unseen);
                const auto [report, traces] = eval::interpretability_report(*res.agent, tasks, ev_interpret, ev_seeds.front());
                write_text(out / "interpretability.json", report.to_json().dump(2) + "\n");
                write_text(out / "transcript.txt", report.transcript(g, traces));
                write_traces(g, out / "interpretability_traces.ndjson", traces);
                std::cout << "mean instruction run length " << report.mean_run_length << " (reference "
                          << eval::kReferenceRunLength << "), co-occurrence " << report.cooccurrence << "\n";
            }
            return 0;
        }

        if (*serve) {
            service::SessionService svc(g, {data_dir, std::chrono::seconds(idle), token});
            httplib::Server server;
            service::mount(server, svc, web_dir);
            std::cerr << "listening on http://" << host << ":" << port << " (traces in " << data_dir << ")\n";
            if (!server.listen(host, port)) throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
            return 0;
        }

        if (*bridge) {
            std::ios::sync_with_stdio(false);
            service::run_bridge(g, std::cin, std::cout);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
