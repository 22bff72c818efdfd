#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

#include "craftlang/embeddings.hpp"
#include "craftlang/trace.hpp"

using namespace craftlang;

namespace {

const RecipeGraph& graph() { return default_recipes(); }

bool has_kind(const WorldState& s, CellKind k) {
    return std::any_of(s.grid.begin(), s.grid.end(), [&](const Cell& c) { return c.kind == k; });
}

std::vector<Subgoal> subgoal_sequence(const WorldState& start) {
    std::vector<Subgoal> out;
    Planner p(graph());
    WorldState s = start;
    while (!is_done(s)) {
        auto sg = p.subgoal(s);
        if (out.empty() || !(out.back() == *sg)) out.push_back(*sg);
        apply_action(graph(), s, p.next_action(s, *sg));
    }
    return out;
}

std::set<std::string> all_template_renderings(const Trace& t) {
    std::set<std::string> out;
    WorldState s = reset(graph(), t.task, t.seed);
    Planner p(graph());
    while (!is_done(s)) {
        auto sg = p.subgoal(s);
        for (auto& txt : instruction_paraphrases(graph(), *sg)) out.insert(txt);
        apply_action(graph(), s, p.next_action(s, *sg));
    }
    return out;
}

}  // namespace

TEST(Expert, IronOreKeyDoorInstructions) {
    // First seed whose board forces key -> pickaxe -> vein.
    std::optional<std::uint64_t> found;
    for (std::uint64_t seed = 0; seed < 500 && !found; ++seed) {
        const auto s = reset(graph(), "Iron Ore", seed);
        if (!has_kind(s, CellKind::Key)) continue;
        const auto seq = subgoal_sequence(s);
        if (seq.size() == 3 && seq[0].kind == SubgoalKind::GrabKey && seq[1].kind == SubgoalKind::GrabTool &&
            seq[2].kind == SubgoalKind::Mine)
            found = seed;
    }
    ASSERT_TRUE(found);
    const auto seq = subgoal_sequence(reset(graph(), "Iron Ore", *found));
    std::vector<std::string> first;
    for (const auto& sg : seq) first.push_back(instruction_paraphrases(graph(), sg).front());
    EXPECT_EQ(first, (std::vector<std::string>{"go to key and press grab", "go to pickaxe and press grab",
                                               "go to iron ore vein and press mine"}));

    const auto t = record_expert_game(graph(), graph().task("Iron Ore"), *found, 3);
    EXPECT_TRUE(t.success);
    int boundaries = 0;
    for (const auto& st : t.steps) boundaries += st.instruction.has_value();
    EXPECT_EQ(boundaries, 3);
}

TEST(Expert, AdjacentToBenchWithInputsCraftsImmediately) {
    WorldState s;
    s.inventory = Inventory(graph().item_count());
    s.goal = graph().item_id("Stone Boots");
    s.agent = {2, 2};
    s.at({2, 3}) = Cell{CellKind::Bench, graph().find_bench("Stone Boots bench").value()};
    s.inventory.add(graph().item_id("Cobblestone"), 1);
    ScriptedExpert e(graph(), 1);
    auto step = e.act(s);
    EXPECT_EQ(step.action, Action::Craft);
    EXPECT_TRUE(step.new_instruction);
    apply_action(graph(), s, step.action);
    EXPECT_TRUE(is_success(s));
}

TEST(Expert, MeanActionsWithinHumanAverages) {
    const std::map<int, double> human = {{1, 15.4}, {2, 21.5}, {3, 27.6}, {5, 40.1}};
    std::map<int, std::pair<long, long>> totals;
    for (const auto& task : graph().catalog(Split::Train)) {
        for (std::uint64_t seed = 0; seed < 500; ++seed) {
            const auto used = planner_rollout(graph(), reset(graph(), task, seed));
            ASSERT_TRUE(used) << task.goal << " " << seed;
            totals[task.declared_steps].first += *used;
            totals[task.declared_steps].second += 1;
        }
    }
    for (const auto& [cls, bound] : human) {
        const double mean = static_cast<double>(totals[cls].first) / static_cast<double>(totals[cls].second);
        EXPECT_LE(mean, bound) << cls << "-step";
    }
}

TEST(Expert, InstructionChangesExactlyAtSubgoalBoundaries) {
    for (const auto& task : graph().catalog(Split::All)) {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto start = reset(graph(), task, seed);
            ScriptedExpert e(graph(), seed);
            Planner p(graph());
            WorldState s = start;
            std::optional<Subgoal> prev;
            int instructions = 0;
            int doors = 0;
            int tool_grabs = 0;
            while (!is_done(s)) {
                const auto sg = p.subgoal(s);
                const auto step = e.act(s);
                EXPECT_EQ(step.new_instruction, !prev || !(*prev == *sg));
                if (step.new_instruction) {
                    ++instructions;
                    doors += sg->kind == SubgoalKind::GrabKey || sg->kind == SubgoalKind::ToggleSwitch;
                    tool_grabs += sg->kind == SubgoalKind::GrabTool;
                }
                prev = sg;
                apply_action(graph(), s, step.action);
            }
            ASSERT_TRUE(is_success(s));
            EXPECT_EQ(instructions, static_cast<int>(graph().expand(task.goal).size()) + doors + tool_grabs)
                << task.goal;
        }
    }
}

TEST(Expert, PoolsHaveFourToEightParaphrases) {
    for (std::size_t n : {templates::kGrabTool.size(), templates::kGrabKey.size(), templates::kToggleSwitch.size(),
                          templates::kMine.size(), templates::kCraft.size()}) {
        EXPECT_GE(n, 4u);
        EXPECT_LE(n, 8u);
    }
}

TEST(Expert, ParaphraseChoiceVariesWithSeed) {
    std::set<std::string> first;
    for (std::uint64_t seed = 0; seed < 40; ++seed)
        first.insert(expert_policy(graph(), reset(graph(), "Gold Ore", 1), seed).first);
    EXPECT_GE(first.size(), 4u);
}

TEST(Dataset, GeneratedTracesReplayAndSucceed) {
    const auto traces = generate_dataset(graph(), graph().catalog(Split::Train), 20, 11);
    ASSERT_EQ(traces.size(), 14u * 20u);
    for (const auto& t : traces) {
        EXPECT_TRUE(t.success) << t.game_id;
        auto v = validate_trace(graph(), t);
        EXPECT_TRUE(v) << v.message;
    }
}

TEST(Dataset, DeterministicGivenSeed) {
    const auto tasks = graph().catalog(Split::Train);
    EXPECT_EQ(generate_dataset(graph(), tasks, 3, 5), generate_dataset(graph(), tasks, 3, 5));
    EXPECT_NE(generate_dataset(graph(), tasks, 3, 5), generate_dataset(graph(), tasks, 3, 6));
}

TEST(Dataset, ZeroGamesGivesEmpty) {
    EXPECT_TRUE(generate_dataset(graph(), graph().catalog(Split::Train), 0, 1).empty());
    EXPECT_TRUE(extract_pairs(graph(), {}).empty());
}

TEST(Dataset, NoiselessInstructionsMatchTemplates) {
    const auto traces = generate_dataset(graph(), graph().catalog(Split::All), 2, 3, 0.0);
    for (const auto& t : traces) {
        const auto allowed = all_template_renderings(t);
        for (const auto& st : t.steps) {
            if (st.instruction) {
                EXPECT_TRUE(allowed.count(*st.instruction)) << *st.instruction;
            }
        }
    }
}

TEST(Dataset, NoiseAltersSomeInstructionsByOneToken) {
    const auto traces = generate_dataset(graph(), graph().catalog(Split::Train), 10, 3, 1.0);
    int altered = 0;
    int total = 0;
    for (const auto& t : traces) {
        const auto allowed = all_template_renderings(t);
        for (const auto& st : t.steps) {
            if (!st.instruction) continue;
            ++total;
            if (allowed.count(*st.instruction)) continue;
            ++altered;
            const auto n = tokenize(*st.instruction).size();
            bool near = false;
            for (const auto& a : allowed) {
                const auto m = tokenize(a).size();
                near |= (n + 1 == m || n == m + 1);
            }
            EXPECT_TRUE(near) << *st.instruction;
        }
    }
    EXPECT_GT(altered, total / 2);
}

TEST(Dataset, ExtractPairsCarriesActiveInstruction) {
    Trace t = generate_dataset(graph(), {graph().task("Iron Ore")}, 1, 2).front();
    const auto pairs = extract_pairs(graph(), {t});
    ASSERT_EQ(pairs.size(), t.steps.size());
    std::string active;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (t.steps[i].instruction) active = *t.steps[i].instruction;
        EXPECT_EQ(pairs[i].instruction, active);
        EXPECT_EQ(pairs[i].action, t.steps[i].action);
        EXPECT_EQ(pairs[i].state, t.steps[i].state);
    }
}

TEST(Dataset, ThreeActionTraceTwoInstructions) {
    // Agent one cell left of the pickaxe, vein to the right of the pickaxe.
    WorldState s = reset(graph(), "Gold Ore", 0);
    Trace t;
    t.game_id = "tiny";
    t.task = "Gold Ore";
    t.seed = 0;
    Planner p(graph());
    WorldState cur = s;
    for (int i = 0; i < 3 && !is_done(cur); ++i) {
        TraceStep st{cur, std::nullopt, p.next_action(cur, *p.subgoal(cur))};
        if (i == 0) st.instruction = "i1";
        if (i == 2) st.instruction = "i2";
        t.steps.push_back(st);
        apply_action(graph(), cur, st.action);
    }
    t.final_state = cur;
    t.success = is_success(cur);
    const auto pairs = extract_pairs(graph(), {t});
    ASSERT_EQ(pairs.size(), 3u);
    EXPECT_EQ(pairs[0].instruction, "i1");
    EXPECT_EQ(pairs[1].instruction, "i1");
    EXPECT_EQ(pairs[2].instruction, "i2");
}

TEST(Dataset, ValidatorRejectsTampering) {
    auto t = generate_dataset(graph(), {graph().task("Stone Pickaxe")}, 1, 9).front();
    auto bad_action = t;
    bad_action.steps[1].action = bad_action.steps[1].action == Action::Up ? Action::Down : Action::Up;
    EXPECT_FALSE(validate_trace(graph(), bad_action));
    auto bad_flag = t;
    bad_flag.success = false;
    EXPECT_FALSE(validate_trace(graph(), bad_flag));
    auto no_instr = t;
    no_instr.steps[0].instruction.reset();
    EXPECT_FALSE(validate_trace(graph(), no_instr));
    auto bad_task = t;
    bad_task.task = "Mithril";
    EXPECT_FALSE(validate_trace(graph(), bad_task));
    try {
        extract_pairs(graph(), {t, bad_action});
        FAIL();
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find(t.game_id), std::string::npos);
    }
}

TEST(Dataset, NdjsonRoundTrip) {
    const auto traces = generate_dataset(graph(), graph().catalog(Split::Train), 2, 4);
    const auto path = std::filesystem::temp_directory_path() / "craftlang_traces_test.ndjson";
    write_traces(graph(), path, traces);
    EXPECT_EQ(read_traces(graph(), path), traces);
    std::ifstream in(path);
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) ++lines;
    EXPECT_EQ(lines, traces.size());
    std::filesystem::remove(path);
}

TEST(Vocab, ThresholdAndDeterminism) {
    std::vector<std::string> corpus;
    for (int i = 0; i < 100; ++i) corpus.push_back("grab the pickaxe");
    corpus.push_back("stocks");
    corpus.push_back("Stocks!");
    const auto v = Vocabulary::build(corpus, 5);
    EXPECT_TRUE(v.contains("pickaxe"));
    EXPECT_EQ(v.id("stocks"), Vocabulary::kUnk);
    EXPECT_EQ(v.size(), 7u);
    EXPECT_EQ(v.token(0), "<pad>");
    EXPECT_EQ(v.token(4), "grab");  // equal counts fall back to alphabetical order
    EXPECT_EQ(v, Vocabulary::build(corpus, 5));
    EXPECT_EQ(Vocabulary::from_json(v.to_json()), v);
    EXPECT_EQ(v.decode(v.encode("Grab the PICKAXE.")), "grab the pickaxe");
}

TEST(Vocab, FrequencyOrder) {
    std::vector<std::string> corpus(6, "b a");
    for (int i = 0; i < 3; ++i) corpus.push_back("b");
    const auto v = Vocabulary::build(corpus, 1);
    EXPECT_EQ(v.id("b"), 4);
    EXPECT_EQ(v.id("a"), 5);
}

TEST(Embeddings, PhraseIsSumOfWords) {
    const auto words = recipe_words(graph());
    EXPECT_TRUE(words.count("vein"));
    const auto e = EmbeddingTable::pseudo(words, 1);
    const auto sum = e.phrase("Iron Ore Vein");
    for (int i = 0; i < kEmbeddingDim; ++i) {
        const auto k = static_cast<std::size_t>(i);
        EXPECT_FLOAT_EQ(sum[k], e.lookup("iron")[k] + e.lookup("ore")[k] + e.lookup("vein")[k]);
    }
    double norm = 0;
    for (float x : e.lookup("iron")) norm += static_cast<double>(x) * x;
    EXPECT_NEAR(norm, 1.0, 1e-5);
    for (float x : e.lookup("mithril")) EXPECT_EQ(x, 0.0f);
    EXPECT_EQ(e, EmbeddingTable::pseudo(words, 1));
}

TEST(Embeddings, TextFileLoader) {
    const auto path = std::filesystem::temp_directory_path() / "craftlang_emb_test.txt";
    {
        std::ofstream out(path);
        for (const char* w : {"iron", "ore", "zebra"}) {
            out << w;
            for (int i = 0; i < kEmbeddingDim; ++i) out << ' ' << (i == 0 ? 1.5 : 0.0);
            out << '\n';
        }
    }
    const auto e = EmbeddingTable::load_text(path, {"iron", "ore"});
    EXPECT_EQ(e.size(), 2u);
    EXPECT_FLOAT_EQ(e.phrase("iron ore")[0], 3.0f);
    EXPECT_FALSE(e.contains("zebra"));
    {
        std::ofstream out(path);
        out << "short 1 2 3\n";
    }
    EXPECT_THROW(EmbeddingTable::load_text(path), std::runtime_error);
    std::filesystem::remove(path);
}
