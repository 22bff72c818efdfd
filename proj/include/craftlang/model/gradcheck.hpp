#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "craftlang/train/il.hpp"

namespace craftlang::model {

struct GradientProbe {
    std::string param;
    Eigen::Index index = 0;
    double analytic = 0;
    double numeric = 0;
    double relative_error = 0;
};

/// Central differences against the analytic gradient of the full IL loss on
/// the largest-gradient entry and `random_entries` random entries of every
/// parameter tensor. Auxiliary targets are held fixed.
inline std::vector<GradientProbe> gradient_check(Agent<double>& agent, const std::vector<const ILExample*>& batch,
                                                 double eps = 1e-4, int random_entries = 3, std::uint64_t seed = 17) {
    auto loss = [&](const ILLosses& L) {
        return L.action + L.language + agent.config().coverage_weight * L.coverage + L.auxiliary;
    };
    auto ps = agent.params();
    const auto target = agent.auxiliary_target(batch);
    nn::zero_grads(ps);
    agent.il_backward(batch, &target);
    std::vector<nn::Matrix<double>> analytic;
    for (auto* p : ps) analytic.push_back(p->grad);
    Rng rng(seed);
    std::vector<GradientProbe> out;
    for (std::size_t k = 0; k < ps.size(); ++k) {
        auto* p = ps[k];
        std::vector<Eigen::Index> idx;
        Eigen::Index best;
        analytic[k].cwiseAbs().reshaped().maxCoeff(&best);
        idx.push_back(best);
        for (int r = 0; r < random_entries; ++r)
            idx.push_back(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(p->value.size()))));
        for (auto i : idx) {
            double& w = p->value.reshaped()(i);
            const double saved = w;
            w = saved + eps;
            nn::zero_grads(ps);
            const double up = loss(agent.il_backward(batch, &target));
            w = saved - eps;
            nn::zero_grads(ps);
            const double down = loss(agent.il_backward(batch, &target));
            w = saved;
            GradientProbe g{p->name, i, analytic[k].reshaped()(i), (up - down) / (2 * eps), 0};
            g.relative_error = std::abs(g.analytic - g.numeric) / std::max({std::abs(g.analytic), std::abs(g.numeric), 1e-7});
            out.push_back(std::move(g));
        }
    }
    nn::zero_grads(ps);
    return out;
}

}  // namespace craftlang::model
