// Copyright (c) 2026, The remixlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "remix/bandit.hpp"

#include <algorithm>
#include <cmath>

#include "remix/errors.hpp"

namespace remix {

namespace {

template <typename T>
void shuffle(std::vector<T>& v, RngStream& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[rng.below(i)]);
    }
}

}  // namespace

BanditFixture make_bandit_fixture(const BanditSpec& spec, std::uint64_t seed) {
    if (spec.k < 1 || spec.k >= spec.n || spec.n > spec.dim || spec.rank < 1) {
        throw DomainError("bandit: need 1 <= k < n <= dim and rank >= 1");
    }
    const std::size_t d = spec.dim;
    RngStream rng(seed, "bandit", 0);
    BanditFixture f;
    f.k = spec.k;

    f.example.x.resize(d);
    for (double& v : f.example.x) {
        v = rng.rademacher();
    }

    LayerInit init;
    init.n = spec.n;
    init.k = spec.k;
    init.rank = spec.rank;
    init.router_sigma = spec.router_sigma;
    MixtureLayer layer = make_mixture_layer(gaussian_matrix(rng, d, d, 1.0 / std::sqrt(static_cast<double>(d))),
                                            init, rng);

    // Magnitudes 1, 1.25, ..., shuffled so the planted subset is not tied to index order.
    for (std::size_t i = 0; i < spec.n; ++i) {
        f.magnitudes.push_back(1.0 + 0.25 * static_cast<double>(i));
    }
    shuffle(f.magnitudes, rng);
    const double w = layer.omega();
    for (std::size_t i = 0; i < spec.n; ++i) {
        // B_i = (c_i / omega) e_i a_i^T / |a_i|^2 with a_i = A_i x.
        const Vector a = matvec(layer.loras[i].a, f.example.x);
        const double a2 = squared_norm(a);
        Matrix& b = layer.loras[i].b;
        for (std::size_t j = 0; j < b.cols(); ++j) {
            b(i, j) = f.magnitudes[i] / w * a[j] / a2;
        }
    }

    IndexList all(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) {
        all[i] = i;
    }
    shuffle(all, rng);
    f.best.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(spec.k));
    std::sort(f.best.begin(), f.best.end());

    f.example.y = matvec(layer.w, f.example.x);
    for (std::size_t i : f.best) {
        f.example.y[i] += f.magnitudes[i];
    }
    f.model.mode = TrainMode::remix;
    f.model.layers.push_back(std::move(layer));
    f.model.head = Matrix::identity(d);
    f.model.validate();
    return f;
}

double BanditFixture::planted_loss(const Selection& s) const {
    if (s.per_layer.size() != 1) {
        throw ShapeError("bandit: selection must have exactly one layer");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < magnitudes.size(); ++i) {
        const bool chosen = std::find(s.per_layer[0].begin(), s.per_layer[0].end(), i) != s.per_layer[0].end();
        const bool planted = std::binary_search(best.begin(), best.end(), i);
        if (chosen != planted) {
            sum += magnitudes[i] * magnitudes[i];
        }
    }
    return sum / (2.0 * static_cast<double>(example.x.size()));
}

LossTable BanditFixture::loss_table() const {
    return [this](const Selection& s) { return planted_loss(s); };
}

RouterLayer BanditFixture::router_layer() const {
    return RouterLayer{model.layers.front().router, example.x};
}

double BanditFixture::expected_loss() const {
    const RoutingDistribution q = router_layer().distribution();
    double sum = 0.0;
    for (const IndexList& t : enumerate_ordered_tuples(q.size(), k)) {
        sum += std::exp(ordered_selection_logprob(q, t)) * planted_loss(Selection{{t}});
    }
    return sum;
}

IndexList BanditFixture::greedy_subset() const {
    return top_k(router_layer().distribution(), k);
}

TrainConfig bandit_train_config(const BanditFixture& fixture, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.mode = TrainMode::remix;
    cfg.layers = 1;
    cfg.n = fixture.model.layers.front().n();
    cfg.k = fixture.k;
    cfg.rank = fixture.model.layers.front().rank();
    cfg.rollouts = 4;
    cfg.batch_size = 8;
    cfg.steps = 500;
    cfg.learning_rate = 0.0;
    cfg.router_learning_rate = 0.5;
    cfg.train_adapters = false;
    cfg.train_head = false;
    cfg.bit_exact = true;
    cfg.seed = seed;
    return cfg;
}

std::vector<MetricsRow> train_bandit(BanditFixture& fixture, const TrainConfig& cfg) {
    return train_model(fixture.model, cfg, std::span<const Example>(&fixture.example, 1), 0);
}

}  // namespace remix
