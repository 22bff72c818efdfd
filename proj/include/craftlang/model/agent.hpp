#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "craftlang/model/modules.hpp"
#include "craftlang/trace.hpp"

namespace craftlang::model {

enum class Variant { Ours, NoLanguage, LanguageOnly, Discriminative, StateReconstruction, StatePrediction };

inline constexpr std::array<std::string_view, 6> kVariantNames = {"ours", "no-language", "language-only",
                                                                   "discriminative", "state-reconstruction",
                                                                   "state-prediction"};

inline std::string_view to_string(Variant v) { return kVariantNames[static_cast<std::size_t>(v)]; }

inline Variant parse_variant(std::string_view s) {
    for (std::size_t i = 0; i < kVariantNames.size(); ++i)
        if (kVariantNames[i] == s) return static_cast<Variant>(i);
    throw std::invalid_argument("unknown variant '" + std::string(s) + "'");
}

struct ModelConfig {
    Variant variant = Variant::Ours;
    int max_instruction_len = 20;
    int classes = 500;
    int discriminative_steps = 3;
    int history = 3;
    double coverage_weight = 1.0;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const {
        return {{"variant", to_string(variant)},
                {"max_instruction_len", max_instruction_len},
                {"classes", classes},
                {"discriminative_steps", discriminative_steps},
                {"history", history},
                {"coverage_weight", coverage_weight},
                {"seed", seed}};
    }

    static ModelConfig from_json(const nlohmann::json& j) {
        ModelConfig c;
        c.variant = parse_variant(j.at("variant").get<std::string>());
        c.max_instruction_len = j.value("max_instruction_len", c.max_instruction_len);
        c.classes = j.value("classes", c.classes);
        c.discriminative_steps = j.value("discriminative_steps", c.discriminative_steps);
        c.history = j.value("history", c.history);
        c.coverage_weight = j.value("coverage_weight", c.coverage_weight);
        c.seed = j.value("seed", c.seed);
        return c;
    }
};

inline bool uses_language(Variant v) {
    return v == Variant::Ours || v == Variant::LanguageOnly || v == Variant::Discriminative;
}

/// Encoding history fed to the model, oldest first; the last entry is the
/// current state. Variants other than state prediction read only the last.
struct Observation {
    std::array<const StateFeatures*, 3> history{};
    const StateFeatures& current() const { return *history.back(); }
};

/// The N most frequent normalised instructions, ties alphabetical.
inline std::vector<std::string> frequent_instructions(const std::vector<std::string>& texts, std::size_t n) {
    std::map<std::string, int> freq;
    for (const auto& t : texts) ++freq[normalize_instruction(t)];
    std::vector<std::pair<std::string, int>> v(freq.begin(), freq.end());
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < v.size() && i < n; ++i) out.push_back(v[i].first);
    return out;
}

/// One supervised example as the model consumes it.
struct ILExample {
    Observation obs;
    const StateFeatures* next = nullptr;  // state after the action (state prediction target)
    std::vector<TokenId> tokens;          // instruction without specials
    int instruction_class = -1;           // index into the frequent list, -1 if absent
    Action action = Action::Up;
};

struct ILLosses {
    double action = 0;    // mean cross-entropy
    double language = 0;  // mean token cross-entropy (or class cross-entropy)
    double coverage = 0;  // mean per sample, unweighted
    double auxiliary = 0; // mean squared error for reconstruction / prediction
    int correct = 0;      // argmax == action
    int count = 0;
};

/// Encoder, high-level module and policy for one variant.
template <class T>
class Agent {
public:
    struct Frozen {
        EmbeddingTables tables;
        Matrix<float> words;  // (300, V)
    };

    Agent(const RecipeGraph& g, std::shared_ptr<const Frozen> frozen, Vocabulary vocab,
          std::vector<std::string> instructions, ModelConfig cfg)
        : g_(&g), frozen_(std::move(frozen)), vocab_(std::move(vocab)), instructions_(std::move(instructions)),
          cfg_(cfg) {
        Rng rng(mix64(cfg_.seed, 0xa9e17ULL));
        encoder_ = StateEncoder<T>(frozen_->tables, rng);
        switch (cfg_.variant) {
            case Variant::Ours:
            case Variant::LanguageOnly: generator_ = Generator<T>(frozen_->words, rng); break;
            case Variant::Discriminative: discriminator_ = Discriminator<T>(cfg_.classes, cfg_.discriminative_steps, rng); break;
            case Variant::StateReconstruction: autoencoder_ = StateAutoencoder<T>(rng); break;
            case Variant::StatePrediction: predictor_ = StatePredictor<T>(rng); break;
            case Variant::NoLanguage: break;
        }
        policy_ = Policy<T>(policy_input_dim(), rng);
        for (std::size_t i = 0; i < instructions_.size(); ++i) class_index_[instructions_[i]] = static_cast<int>(i);
    }

    static std::shared_ptr<const Frozen> make_frozen(const RecipeGraph& g, const EmbeddingTable& emb,
                                                     const Vocabulary& vocab) {
        return std::make_shared<const Frozen>(Frozen{EmbeddingTables(g, emb), word_matrix(vocab, emb)});
    }

    const ModelConfig& config() const { return cfg_; }
    Variant variant() const { return cfg_.variant; }
    const Vocabulary& vocab() const { return vocab_; }
    const std::vector<std::string>& instructions() const { return instructions_; }
    const RecipeGraph& recipes() const { return *g_; }
    const Frozen& frozen() const { return *frozen_; }
    bool has_language() const { return uses_language(cfg_.variant); }

    int policy_input_dim() const {
        switch (cfg_.variant) {
            case Variant::NoLanguage: return kEncodingSize;
            case Variant::LanguageOnly: return kHidden;
            default: return kEncodingSize + kHidden;
        }
    }

    StateFeatures features(const WorldState& s) const { return frozen_->tables.features(s); }

    int instruction_class(const std::string& text) const {
        auto it = class_index_.find(normalize_instruction(text));
        return it == class_index_.end() ? -1 : it->second;
    }

    // -- parameters -----------------------------------------------------------

    nn::ParamRefs<T> high_level_params() {
        nn::ParamRefs<T> out;
        encoder_.collect(out);
        if (generator_) generator_->collect(out);
        if (discriminator_) discriminator_->collect(out);
        if (autoencoder_) autoencoder_->collect(out);
        if (predictor_) predictor_->collect(out);
        return out;
    }

    nn::ParamRefs<T> policy_params() {
        nn::ParamRefs<T> out;
        policy_.collect(out);
        return out;
    }

    nn::ParamRefs<T> params() {
        auto out = high_level_params();
        for (auto* p : policy_params()) out.push_back(p);
        return out;
    }

    Policy<T>& policy() { return policy_; }
    const Policy<T>& policy() const { return policy_; }
    StateEncoder<T>& encoder() { return encoder_; }
    std::optional<Generator<T>>& generator() { return generator_; }
    std::optional<Discriminator<T>>& discriminator() { return discriminator_; }
    std::optional<StateAutoencoder<T>>& autoencoder() { return autoencoder_; }
    std::optional<StatePredictor<T>>& predictor() { return predictor_; }

    // -- inference ------------------------------------------------------------

    struct HighLevel {
        Matrix<T> input;                        // (policy_input_dim, B)
        std::vector<std::string> instructions;  // filled for language variants
        std::vector<Matrix<T>> attention;       // generator attention, when requested
    };

    /// Everything the policy reads, for a batch of observations.
    HighLevel policy_input(const std::vector<Observation>& obs, bool want_text = false, bool want_attention = false) const {
        const auto B = static_cast<Eigen::Index>(obs.size());
        HighLevel out;
        std::vector<const StateFeatures*> cur;
        for (const auto& o : obs) cur.push_back(o.history.back());
        const Matrix<T> z = encoder_.forward(cur);
        Matrix<T> hidden;
        switch (cfg_.variant) {
            case Variant::Ours:
            case Variant::LanguageOnly: {
                auto d = generator_->decode(z, cfg_.max_instruction_len, want_attention);
                hidden = std::move(d.hidden);
                if (want_text)
                    for (const auto& t : d.tokens) out.instructions.push_back(vocab_.decode(t));
                out.attention = std::move(d.attention);
                break;
            }
            case Variant::Discriminative: {
                auto [h, cls] = discriminator_->predict(z);
                hidden = std::move(h);
                if (want_text)
                    for (int c : cls)
                        out.instructions.push_back(static_cast<std::size_t>(c) < instructions_.size()
                                                       ? instructions_[static_cast<std::size_t>(c)]
                                                       : std::string{});
                break;
            }
            case Variant::StateReconstruction: hidden = autoencoder_->encode(Matrix<T>(flatten(z))); break;
            case Variant::StatePrediction: {
                std::array<Matrix<T>, 3> zs;
                std::vector<const Matrix<T>*> hist;
                for (int k = 0; k < 3; ++k) {
                    if (k == 2) {
                        zs[2] = z;
                    } else {
                        std::vector<const StateFeatures*> b;
                        for (const auto& o : obs) b.push_back(o.history[static_cast<std::size_t>(k)]);
                        zs[static_cast<std::size_t>(k)] = encoder_.forward(b);
                    }
                    hist.push_back(&zs[static_cast<std::size_t>(k)]);
                }
                hidden = predictor_->hidden(hist);
                break;
            }
            case Variant::NoLanguage: break;
        }
        out.input.resize(policy_input_dim(), B);
        switch (cfg_.variant) {
            case Variant::NoLanguage: out.input = flatten(z); break;
            case Variant::LanguageOnly: out.input = hidden; break;
            default:
                out.input.topRows(kEncodingSize) = flatten(z);
                out.input.bottomRows(kHidden) = hidden;
        }
        return out;
    }

    /// (logits (8, B), value (1, B))
    std::pair<Matrix<T>, Matrix<T>> act(const std::vector<Observation>& obs) const {
        return policy_.forward(policy_input(obs).input);
    }

    // -- imitation learning ---------------------------------------------------

    /// Detached regression target of the auxiliary loss, (3456, B): the next
    /// encoding for state prediction, the current one for reconstruction.
    Matrix<T> auxiliary_target(const std::vector<const ILExample*>& batch) const {
        std::vector<const StateFeatures*> nb;
        for (auto* e : batch)
            nb.push_back(cfg_.variant == Variant::StatePrediction && e->next ? e->next : e->obs.history.back());
        return flatten(encoder_.forward(nb));
    }

    /// Forward + backward on one batch; accumulates gradients into params().
    /// `target` overrides the auxiliary target.
    ILLosses il_backward(const std::vector<const ILExample*>& batch, const Matrix<T>* target = nullptr) {
        const auto B = static_cast<Eigen::Index>(batch.size());
        const T inv_b = T(1) / static_cast<T>(B);
        ILLosses L;
        L.count = static_cast<int>(B);

        std::array<typename StateEncoder<T>::Cache, 3> enc_cache;
        std::array<Matrix<T>, 3> zs;
        const int n_hist = cfg_.variant == Variant::StatePrediction ? 3 : 1;
        for (int k = 0; k < n_hist; ++k) {
            const auto slot = static_cast<std::size_t>(3 - n_hist + k);
            std::vector<const StateFeatures*> b;
            for (auto* e : batch) b.push_back(e->obs.history[slot]);
            zs[static_cast<std::size_t>(k)] = encoder_.forward(b, &enc_cache[static_cast<std::size_t>(k)]);
        }
        const Matrix<T>& z = zs[static_cast<std::size_t>(n_hist - 1)];

        typename Generator<T>::TrainCache gen_cache;
        typename Discriminator<T>::TrainCache disc_cache;
        typename StateAutoencoder<T>::TrainCache ae_cache;
        typename StatePredictor<T>::TrainCache sp_cache;
        Matrix<T> hidden;
        switch (cfg_.variant) {
            case Variant::Ours:
            case Variant::LanguageOnly: {
                std::vector<std::vector<TokenId>> seqs;
                std::size_t n_tokens = 0;
                for (auto* e : batch) {
                    seqs.push_back(e->tokens);
                    n_tokens += e->tokens.size() + 1;
                }
                generator_->forward_train(z, seqs, T(1) / static_cast<T>(n_tokens),
                                          static_cast<T>(cfg_.coverage_weight) * inv_b, gen_cache);
                hidden = gen_cache.hidden;
                L.language = gen_cache.token_loss / static_cast<double>(n_tokens);
                L.coverage = gen_cache.coverage / static_cast<double>(B);
                break;
            }
            case Variant::Discriminative: {
                std::vector<int> targets;
                int n = 0;
                for (auto* e : batch) {
                    targets.push_back(e->instruction_class);
                    n += e->instruction_class >= 0;
                }
                hidden = discriminator_->forward_train(z, targets, T(1) / static_cast<T>(std::max(n, 1)), disc_cache);
                L.language = disc_cache.loss / std::max(n, 1);
                break;
            }
            case Variant::StateReconstruction: {
                const T scale = inv_b / static_cast<T>(kEncodingSize);
                const Matrix<T> x = flatten(z);
                hidden = autoencoder_->forward_train(x, target ? *target : x, scale, ae_cache);
                L.auxiliary = ae_cache.loss / static_cast<double>(B * kEncodingSize);
                break;
            }
            case Variant::StatePrediction: {
                const Matrix<T> own = target ? Matrix<T>() : auxiliary_target(batch);
                const T scale = inv_b / static_cast<T>(kEncodingSize);
                hidden = predictor_->forward_train({&zs[0], &zs[1], &zs[2]}, target ? *target : own, scale, sp_cache);
                L.auxiliary = sp_cache.loss / static_cast<double>(B * kEncodingSize);
                break;
            }
            case Variant::NoLanguage: break;
        }

        Matrix<T> x(policy_input_dim(), B);
        switch (cfg_.variant) {
            case Variant::NoLanguage: x = flatten(z); break;
            case Variant::LanguageOnly: x = hidden; break;
            default:
                x.topRows(kEncodingSize) = flatten(z);
                x.bottomRows(kHidden) = hidden;
        }
        typename Policy<T>::Cache pc;
        const auto [logits, value] = policy_.forward(x, &pc);
        std::vector<int> targets;
        for (auto* e : batch) targets.push_back(static_cast<int>(e->action));
        Matrix<T> dlogits;
        L.action = nn::cross_entropy<T>(logits, targets, inv_b, dlogits) / static_cast<double>(B);
        for (Eigen::Index j = 0; j < B; ++j) {
            Eigen::Index best;
            logits.col(j).maxCoeff(&best);
            L.correct += static_cast<int>(best) == targets[static_cast<std::size_t>(j)];
        }
        const Matrix<T> dx = policy_.backward(pc, dlogits, Matrix<T>());

        Matrix<T> dz = Matrix<T>::Zero(kDim, kRows * B);
        Matrix<T> dhidden;
        switch (cfg_.variant) {
            case Variant::NoLanguage: dz += unflatten(dx); break;
            case Variant::LanguageOnly: dhidden = dx; break;
            default: {
                const Matrix<T> top = dx.topRows(kEncodingSize);
                dz += unflatten(top);
                dhidden = dx.bottomRows(kHidden);
            }
        }
        switch (cfg_.variant) {
            case Variant::Ours:
            case Variant::LanguageOnly: dz += generator_->backward(gen_cache, dhidden); break;
            case Variant::Discriminative: dz += discriminator_->backward(disc_cache, dhidden); break;
            case Variant::StateReconstruction: {
                const Matrix<T> dflat = autoencoder_->backward(ae_cache, dhidden);
                dz += unflatten(dflat);
                break;
            }
            case Variant::StatePrediction: {
                auto dmem = predictor_->backward(sp_cache, dhidden);
                encoder_.backward(enc_cache[0], dmem[0]);
                encoder_.backward(enc_cache[1], dmem[1]);
                dz += dmem[2];
                break;
            }
            case Variant::NoLanguage: break;
        }
        encoder_.backward(enc_cache[static_cast<std::size_t>(n_hist - 1)], dz);
        return L;
    }

    // -- checkpoint -------------------------------------------------------------

    std::uint64_t config_hash() const {
        std::string s = g_->source().dump() + vocab_.to_json().dump() + cfg_.to_json().dump();
        for (const auto& i : instructions_) s += i + "\n";
        return fnv1a(s);
    }

    std::uint64_t recipes_hash() const { return fnv1a(g_->source().dump()); }

    void save(const std::filesystem::path& path) {
        auto ps = params();
        nlohmann::json header = {{"format", "craftlang-checkpoint"},
                                 {"version", kCheckpointVersion},
                                 {"config", cfg_.to_json()},
                                 {"vocab", vocab_.to_json()},
                                 {"instructions", instructions_},
                                 {"recipes_hash", std::to_string(recipes_hash())},
                                 {"config_hash", std::to_string(config_hash())}};
        std::vector<std::pair<std::string, const Matrix<float>*>> frozen = {
            {"frozen.entities", &frozen_->tables.entities},
            {"frozen.items", &frozen_->tables.items},
            {"frozen.words", &frozen_->words}};
        nlohmann::json arrays = nlohmann::json::array();
        for (auto& [name, m] : frozen) arrays.push_back({{"name", name}, {"rows", m->rows()}, {"cols", m->cols()}});
        for (auto* p : ps) arrays.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
        header["arrays"] = arrays;

        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
        const std::string h = header.dump();
        const std::uint64_t len = h.size();
        out.write(kCheckpointMagic, 8);
        out.write(reinterpret_cast<const char*>(&len), sizeof len);
        out.write(h.data(), static_cast<std::streamsize>(h.size()));
        auto write = [&](const auto& m) {
            const Matrix<float> f = m.template cast<float>();
            out.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(float)));
        };
        for (auto& [name, m] : frozen) write(*m);
        for (auto* p : ps) write(p->value);
        if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
    }

    static Agent load(const RecipeGraph& g, const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
        char magic[8];
        in.read(magic, 8);
        if (!in || std::string_view(magic, 8) != std::string_view(kCheckpointMagic, 8))
            throw std::runtime_error(path.string() + ": not a checkpoint");
        std::uint64_t len = 0;
        in.read(reinterpret_cast<char*>(&len), sizeof len);
        if (!in || len > (1u << 26)) throw std::runtime_error(path.string() + ": corrupt header");
        std::string h(len, '\0');
        in.read(h.data(), static_cast<std::streamsize>(len));
        const auto header = nlohmann::json::parse(h);
        if (header.at("version").get<int>() != kCheckpointVersion)
            throw std::runtime_error(path.string() + ": unsupported checkpoint version");
        if (header.at("recipes_hash").get<std::string>() != std::to_string(fnv1a(g.source().dump())))
            throw std::runtime_error(path.string() + ": checkpoint was trained on a different recipe config");

        auto read = [&](const nlohmann::json& a) {
            Matrix<float> m(a.at("rows").get<Eigen::Index>(), a.at("cols").get<Eigen::Index>());
            in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
            if (!in) throw std::runtime_error(path.string() + ": truncated at " + a.at("name").get<std::string>());
            return m;
        };
        const auto& arrays = header.at("arrays");
        Frozen fr;
        fr.tables = EmbeddingTables(g, EmbeddingTable{});
        fr.tables.entities = read(arrays.at(0));
        fr.tables.items = read(arrays.at(1));
        fr.words = read(arrays.at(2));
        Agent a(g, std::make_shared<const Frozen>(std::move(fr)), Vocabulary::from_json(header.at("vocab")),
                header.at("instructions").get<std::vector<std::string>>(), ModelConfig::from_json(header.at("config")));
        auto ps = a.params();
        if (arrays.size() != ps.size() + 3) throw std::runtime_error(path.string() + ": parameter count mismatch");
        for (std::size_t i = 0; i < ps.size(); ++i) {
            const auto& spec = arrays.at(i + 3);
            if (spec.at("name").get<std::string>() != ps[i]->name || spec.at("rows").get<Eigen::Index>() != ps[i]->value.rows() ||
                spec.at("cols").get<Eigen::Index>() != ps[i]->value.cols())
                throw std::runtime_error(path.string() + ": unexpected array " + spec.at("name").get<std::string>());
            ps[i]->value = read(spec).template cast<T>();
        }
        if (header.at("config_hash").get<std::string>() != std::to_string(a.config_hash()))
            throw std::runtime_error(path.string() + ": config hash mismatch");
        return a;
    }

    static constexpr int kCheckpointVersion = 1;
    static constexpr char kCheckpointMagic[9] = "CRFTCKPT";

private:
    const RecipeGraph* g_ = nullptr;
    std::shared_ptr<const Frozen> frozen_;
    Vocabulary vocab_;
    std::vector<std::string> instructions_;
    std::map<std::string, int> class_index_;
    ModelConfig cfg_;
    StateEncoder<T> encoder_;
    std::optional<Generator<T>> generator_;
    std::optional<Discriminator<T>> discriminator_;
    std::optional<StateAutoencoder<T>> autoencoder_;
    std::optional<StatePredictor<T>> predictor_;
    Policy<T> policy_;
};

/// Builds a fresh agent: vocabulary and instruction list from `instructions`,
/// embeddings over recipe words plus vocabulary.
template <class T>
Agent<T> make_agent(const RecipeGraph& g, const std::vector<std::string>& corpus, ModelConfig cfg, int min_count = 5,
                    std::uint64_t embedding_seed = 0) {
    auto vocab = Vocabulary::build(corpus, min_count);
    auto words = recipe_words(g);
    for (const auto& t : vocab.tokens())
        if (t.front() != '<') words.insert(t);
    const auto emb = default_embeddings(words, embedding_seed);
    std::vector<std::string> frequent;
    if (cfg.variant == Variant::Discriminative) frequent = frequent_instructions(corpus, static_cast<std::size_t>(cfg.classes));
    auto frozen = Agent<T>::make_frozen(g, emb, vocab);
    return Agent<T>(g, std::move(frozen), std::move(vocab), std::move(frequent), cfg);
}

}  // namespace craftlang::model
