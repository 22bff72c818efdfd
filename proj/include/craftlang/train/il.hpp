#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <type_traits>
#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "craftlang/model/agent.hpp"

namespace craftlang::train {

using model::Agent;
using model::ILExample;
using model::Observation;
using model::StateFeatures;

/// Supervised examples with the encoder features they point into.
struct ILData {
    std::vector<StateFeatures> features;
    std::vector<ILExample> examples;

    ILData() = default;
    ILData(const ILData&) = delete;
    ILData& operator=(const ILData&) = delete;
    ILData(ILData&&) = default;
    ILData& operator=(ILData&&) = default;
};

/// One example per recorded action. History is the last three states with
/// the first state repeated at the start of an episode.
template <class T>
ILData build_il_data(const Agent<T>& agent, const std::vector<Trace>& traces) {
    ILData d;
    std::size_t n_states = 0;
    for (const auto& t : traces) n_states += t.steps.size() + 1;
    d.features.reserve(n_states);
    for (const auto& t : traces) {
        const std::size_t base = d.features.size();
        for (const auto& st : t.steps) d.features.push_back(agent.features(st.state));
        d.features.push_back(agent.features(t.final_state));
        std::string active;
        for (std::size_t i = 0; i < t.steps.size(); ++i) {
            if (t.steps[i].instruction) active = normalize_instruction(*t.steps[i].instruction);
            ILExample e;
            for (std::size_t k = 0; k < 3; ++k) {
                const std::size_t back = 2 - k;
                e.obs.history[k] = &d.features[base + (i >= back ? i - back : 0)];
            }
            e.next = &d.features[base + i + 1];
            e.tokens = agent.vocab().encode(active);
            e.instruction_class = agent.instruction_class(active);
            e.action = t.steps[i].action;
            d.examples.push_back(std::move(e));
        }
    }
    return d;
}

/// Every instruction string in the traces (one entry per occurrence).
inline std::vector<std::string> instruction_corpus(const std::vector<Trace>& traces) {
    std::vector<std::string> out;
    for (const auto& t : traces)
        for (const auto& st : t.steps)
            if (st.instruction) out.push_back(normalize_instruction(*st.instruction));
    return out;
}

struct ILConfig {
    int epochs = 20;
    int batch_size = 64;
    double lr = 1e-3;
    double clip = 3.0;
    int eval_games = 100;  // per step class after each epoch, 0 disables
    std::uint64_t seed = 0;

    nlohmann::json to_json() const {
        return {{"epochs", epochs}, {"batch_size", batch_size}, {"lr", lr},
                {"clip", clip},     {"eval_games", eval_games}, {"seed", seed}};
    }
    static ILConfig from_json(const nlohmann::json& j) {
        ILConfig c;
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.lr = j.value("lr", c.lr);
        c.clip = j.value("clip", c.clip);
        c.eval_games = j.value("eval_games", c.eval_games);
        c.seed = j.value("seed", c.seed);
        return c;
    }
};

struct EpochRecord {
    int epoch = 0;
    double action_loss = 0;
    double language_loss = 0;
    double coverage = 0;
    double auxiliary_loss = 0;
    double accuracy = 0;
    std::map<int, double> success;  // step class -> success rate
    double seconds = 0;             // since training start
};

struct TrainReport {
    std::string phase;
    std::uint64_t seed = 0;
    std::vector<EpochRecord> epochs;
    std::vector<nlohmann::json> updates;  // RL progress rows
    double seconds = 0;

    nlohmann::json to_json() const {
        nlohmann::json ep = nlohmann::json::array();
        for (const auto& e : epochs) {
            nlohmann::json s = nlohmann::json::object();
            for (auto [k, v] : e.success) s[std::to_string(k)] = v;
            ep.push_back({{"epoch", e.epoch},
                          {"action_loss", e.action_loss},
                          {"language_loss", e.language_loss},
                          {"coverage", e.coverage},
                          {"auxiliary_loss", e.auxiliary_loss},
                          {"accuracy", e.accuracy},
                          {"success", s},
                          {"seconds", e.seconds}});
        }
        return {{"phase", phase}, {"seed", seed}, {"epochs", ep}, {"updates", updates}, {"seconds", seconds}};
    }

    std::string csv() const {
        std::ostringstream out;
        if (!epochs.empty()) {
            out << "epoch,action_loss,language_loss,coverage,auxiliary_loss,accuracy,success_1,success_2,success_3,success_5,seconds\n";
            for (const auto& e : epochs) {
                out << e.epoch << ',' << e.action_loss << ',' << e.language_loss << ',' << e.coverage << ','
                    << e.auxiliary_loss << ',' << e.accuracy;
                for (int c : {1, 2, 3, 5}) {
                    out << ',';
                    if (auto it = e.success.find(c); it != e.success.end()) out << it->second;
                }
                out << ',' << e.seconds << '\n';
            }
        }
        if (!updates.empty()) {
            std::vector<std::string> keys;
            for (auto it = updates.front().begin(); it != updates.front().end(); ++it) keys.push_back(it.key());
            for (std::size_t i = 0; i < keys.size(); ++i) out << (i ? "," : "") << keys[i];
            out << '\n';
            for (const auto& u : updates) {
                for (std::size_t i = 0; i < keys.size(); ++i) out << (i ? "," : "") << u.value(keys[i], nlohmann::json()).dump();
                out << '\n';
            }
        }
        return out.str();
    }
};

class NonFiniteLoss : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Called after each epoch with the model; returns success per step class.
template <class T>
using EpochEvaluator = std::function<std::map<int, double>(const Agent<T>&)>;

/// Joint action / language / auxiliary minimisation with Adam.
template <class T>
TrainReport train_il(Agent<T>& agent, const ILData& data, const ILConfig& cfg, const std::type_identity_t<EpochEvaluator<T>>& evaluate = {},
                     const std::function<void(const EpochRecord&)>& on_epoch = {}) {
    if (data.examples.empty()) throw std::invalid_argument("train_il: empty dataset");
    const auto t0 = std::chrono::steady_clock::now();
    TrainReport report;
    report.phase = "il";
    report.seed = cfg.seed;
    auto params = agent.params();
    nn::Adam<T> opt(params, {cfg.lr});
    Rng rng(mix64(cfg.seed, 0x11ULL));
    std::vector<std::size_t> order(data.examples.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<const ILExample*> batch;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        EpochRecord rec;
        rec.epoch = epoch;
        std::size_t seen = 0;
        int correct = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            batch.clear();
            const auto end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            for (std::size_t i = start; i < end; ++i) batch.push_back(&data.examples[order[i]]);
            nn::zero_grads(params);
            const auto L = agent.il_backward(batch);
            if (!std::isfinite(L.action) || !std::isfinite(L.language) || !std::isfinite(L.auxiliary) ||
                !std::isfinite(L.coverage))
                throw NonFiniteLoss("train_il: non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                                    std::to_string(start / static_cast<std::size_t>(cfg.batch_size)) + " (action " +
                                    std::to_string(L.action) + ", language " + std::to_string(L.language) + ")");
            nn::clip_grad_norm(params, cfg.clip);
            opt.step();
            const double n = static_cast<double>(batch.size());
            rec.action_loss += L.action * n;
            rec.language_loss += L.language * n;
            rec.coverage += L.coverage * n;
            rec.auxiliary_loss += L.auxiliary * n;
            correct += L.correct;
            seen += batch.size();
        }
        const double n = static_cast<double>(seen);
        rec.action_loss /= n;
        rec.language_loss /= n;
        rec.coverage /= n;
        rec.auxiliary_loss /= n;
        rec.accuracy = correct / n;
        if (evaluate) rec.success = evaluate(agent);
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        report.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

/// Fraction of examples whose argmax action matches the label.
template <class T>
double action_accuracy(const Agent<T>& agent, const ILData& data, std::size_t batch_size = 256) {
    std::size_t correct = 0;
    for (std::size_t start = 0; start < data.examples.size(); start += batch_size) {
        std::vector<Observation> obs;
        const auto end = std::min(data.examples.size(), start + batch_size);
        for (std::size_t i = start; i < end; ++i) obs.push_back(data.examples[i].obs);
        const auto [logits, value] = agent.act(obs);
        for (Eigen::Index j = 0; j < logits.cols(); ++j) {
            Eigen::Index best;
            logits.col(j).maxCoeff(&best);
            correct += static_cast<int>(best) == static_cast<int>(data.examples[start + static_cast<std::size_t>(j)].action);
        }
    }
    return data.examples.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(data.examples.size());
}

}  // namespace craftlang::train
