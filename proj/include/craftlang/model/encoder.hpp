#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "craftlang/embeddings.hpp"
#include "craftlang/nn/core.hpp"
#include "craftlang/world.hpp"

namespace craftlang::model {

using nn::Matrix;

inline constexpr int kRows = kCellCount + 2;  // 25 cells, inventory, goal
inline constexpr int kDim = 128;
inline constexpr int kEncodingSize = kRows * kDim;
inline constexpr int kInventoryRow = kCellCount;
inline constexpr int kGoalRow = kCellCount + 1;

// Non-craft cell channels.
enum Channel : std::uint8_t { ChEmpty, ChWall, ChDoorClosed, ChDoorOpen, ChSwitch, ChKey, ChAgent, kChannelCount };

/// Integer view of a state: everything the encoder reads.
struct StateFeatures {
    std::array<std::int16_t, kCellCount> entity{};   // index into the entity table, -1 for none
    std::array<std::uint8_t, kCellCount> channels{}; // bitmask over Channel
    std::vector<std::pair<int, float>> inventory;     // (item id, count > 0)
    int goal = -1;
};

/// Frozen phrase embeddings of every board entity and every item.
struct EmbeddingTables {
    Matrix<float> entities;  // (300, entity count)
    Matrix<float> items;     // (300, item count)
    std::vector<int> tool_slot, node_slot, bench_slot;

    EmbeddingTables() = default;
    EmbeddingTables(const RecipeGraph& g, const EmbeddingTable& emb) {
        const auto all = g.all_entities();
        entities.resize(kEmbeddingDim, static_cast<Eigen::Index>(all.size()));
        tool_slot.assign(g.item_count(), -1);
        node_slot.assign(g.mine_rules().size(), -1);
        bench_slot.assign(g.benches().size(), -1);
        for (std::size_t k = 0; k < all.size(); ++k) {
            const auto v = emb.phrase(g.entity_name(all[k]));
            entities.col(static_cast<Eigen::Index>(k)) = Eigen::Map<const nn::Vector<float>>(v.data(), kEmbeddingDim);
            const int slot = static_cast<int>(k);
            switch (all[k].kind) {
                case EntityKind::Tool: tool_slot[static_cast<std::size_t>(all[k].id)] = slot; break;
                case EntityKind::ResourceNode: node_slot[static_cast<std::size_t>(all[k].id)] = slot; break;
                case EntityKind::Bench: bench_slot[static_cast<std::size_t>(all[k].id)] = slot; break;
            }
        }
        items.resize(kEmbeddingDim, static_cast<Eigen::Index>(g.item_count()));
        for (std::size_t i = 0; i < g.item_count(); ++i) {
            const auto v = emb.phrase(g.item_name(static_cast<ItemId>(i)));
            items.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const nn::Vector<float>>(v.data(), kEmbeddingDim);
        }
    }

    StateFeatures features(const WorldState& s) const {
        StateFeatures f;
        for (int i = 0; i < kCellCount; ++i) {
            const auto& c = s.grid[static_cast<std::size_t>(i)];
            int slot = -1;
            std::uint8_t ch = 0;
            switch (c.kind) {
                case CellKind::Empty: ch = 1u << ChEmpty; break;
                case CellKind::Wall: ch = 1u << ChWall; break;
                case CellKind::DoorClosed: ch = 1u << ChDoorClosed; break;
                case CellKind::DoorOpen: ch = 1u << ChDoorOpen; break;
                case CellKind::Switch: ch = 1u << ChSwitch; break;
                case CellKind::Key: ch = 1u << ChKey; break;
                case CellKind::Tool: slot = tool_slot[static_cast<std::size_t>(c.id)]; break;
                case CellKind::ResourceNode: slot = node_slot[static_cast<std::size_t>(c.id)]; break;
                case CellKind::Bench: slot = bench_slot[static_cast<std::size_t>(c.id)]; break;
            }
            if (s.agent.index() == i) ch |= 1u << ChAgent;
            f.entity[static_cast<std::size_t>(i)] = static_cast<std::int16_t>(slot);
            f.channels[static_cast<std::size_t>(i)] = ch;
        }
        for (auto [id, n] : s.inventory.entries())
            if (n > 0) f.inventory.emplace_back(id, static_cast<float>(n));
        f.goal = s.goal;
        return f;
    }
};

/// Maps a batch of states to (128, 27*B) encodings, sample j in columns
/// j*27 .. j*27+26 (grid row-major, then inventory, then goal).
template <class T>
class StateEncoder {
public:
    StateEncoder() = default;
    StateEncoder(const EmbeddingTables& tables, Rng& rng) : tables_(&tables) {
        craft_ = nn::Linear<T>("encoder.craft", kEmbeddingDim, kDim, rng);
        channel_ = nn::Linear<T>("encoder.channel", kChannelCount, kDim, rng);
        inventory_ = nn::Linear<T>("encoder.inventory", kEmbeddingDim, kDim, rng);
        goal_ = nn::Linear<T>("encoder.goal", kEmbeddingDim, kDim, rng);
        craft_.b.value.setZero();
    }

    void bind(const EmbeddingTables& tables) { tables_ = &tables; }

    struct Cache {
        std::vector<const StateFeatures*> batch;
        Matrix<T> inv_emb, goal_emb;  // (300, B)
    };

    Matrix<T> forward(const std::vector<const StateFeatures*>& batch, Cache* cache = nullptr) const {
        const auto B = static_cast<Eigen::Index>(batch.size());
        const Matrix<T> ent = tables_->entities.template cast<T>();
        const Matrix<T> items = tables_->items.template cast<T>();
        const Matrix<T> craft_proj = craft_.W.value * ent;  // (128, E)
        Matrix<T> inv_emb = Matrix<T>::Zero(kEmbeddingDim, B);
        Matrix<T> goal_emb = Matrix<T>::Zero(kEmbeddingDim, B);
        for (Eigen::Index j = 0; j < B; ++j) {
            const auto& f = *batch[static_cast<std::size_t>(j)];
            for (auto [id, n] : f.inventory) inv_emb.col(j) += static_cast<T>(n) * items.col(id);
            if (f.goal >= 0) goal_emb.col(j) = items.col(f.goal);
        }
        const Matrix<T> inv_rows = inventory_.forward(inv_emb);
        const Matrix<T> goal_rows = goal_.forward(goal_emb);

        Matrix<T> z(kDim, kRows * B);
        for (Eigen::Index j = 0; j < B; ++j) {
            const auto& f = *batch[static_cast<std::size_t>(j)];
            for (int r = 0; r < kCellCount; ++r) {
                auto col = z.col(j * kRows + r);
                col = channel_.b.value.col(0);
                const auto e = f.entity[static_cast<std::size_t>(r)];
                if (e >= 0) col += craft_proj.col(e);
                const auto ch = f.channels[static_cast<std::size_t>(r)];
                for (int c = 0; c < kChannelCount; ++c)
                    if (ch & (1u << c)) col += channel_.W.value.col(c);
            }
            z.col(j * kRows + kInventoryRow) = inv_rows.col(j);
            z.col(j * kRows + kGoalRow) = goal_rows.col(j);
        }
        if (cache) *cache = {batch, std::move(inv_emb), std::move(goal_emb)};
        return z;
    }

    void backward(const Cache& k, const Matrix<T>& dz) {
        const auto B = static_cast<Eigen::Index>(k.batch.size());
        const auto E = tables_->entities.cols();
        Matrix<T> dcraft = Matrix<T>::Zero(kDim, E);
        Matrix<T> dinv(kDim, B), dgoal(kDim, B);
        for (Eigen::Index j = 0; j < B; ++j) {
            const auto& f = *k.batch[static_cast<std::size_t>(j)];
            for (int r = 0; r < kCellCount; ++r) {
                const auto d = dz.col(j * kRows + r);
                channel_.b.grad.col(0) += d;
                const auto e = f.entity[static_cast<std::size_t>(r)];
                if (e >= 0) dcraft.col(e) += d;
                const auto ch = f.channels[static_cast<std::size_t>(r)];
                for (int c = 0; c < kChannelCount; ++c)
                    if (ch & (1u << c)) channel_.W.grad.col(c) += d;
            }
            dinv.col(j) = dz.col(j * kRows + kInventoryRow);
            dgoal.col(j) = dz.col(j * kRows + kGoalRow);
        }
        craft_.W.grad.noalias() += dcraft * tables_->entities.template cast<T>().transpose();
        inventory_.accumulate(k.inv_emb, dinv);
        goal_.accumulate(k.goal_emb, dgoal);
    }

    void collect(nn::ParamRefs<T>& out) {
        out.push_back(&craft_.W);
        channel_.collect(out);
        inventory_.collect(out);
        goal_.collect(out);
    }

private:
    const EmbeddingTables* tables_ = nullptr;
    nn::Linear<T> craft_, channel_, inventory_, goal_;
};

/// (128, 27*B) row blocks viewed as a (3456, B) matrix of flattened encodings.
template <class T>
Eigen::Map<const Matrix<T>> flatten(const Matrix<T>& z) {
    return {z.data(), kEncodingSize, z.cols() / kRows};
}

template <class T>
Eigen::Map<const Matrix<T>> unflatten(const Matrix<T>& flat) {
    return {flat.data(), kDim, flat.cols() * kRows};
}

}  // namespace craftlang::model
