// Copyright (c) 2026, The remixlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "remix/rloo.hpp"

#include <cmath>
#include <string>

#include "remix/errors.hpp"
#include "remix/parallel.hpp"

namespace remix {

namespace {

constexpr std::size_t kVarianceChunks = 64;

struct Enumerated {
    std::vector<Selection> selections;
    std::vector<double> prob;
    std::vector<double> loss;
    std::vector<std::vector<Matrix>> score;
};

Enumerated enumerate_with_scores(const LossTable& loss, std::span<const RouterLayer> layers, std::size_t k) {
    if (layers.empty()) {
        throw DomainError("enumeration needs at least one layer");
    }
    const std::size_t n = layers.front().router.rows();
    selection_space_size(n, k, layers.size(), kMaxSelections);
    std::vector<RoutingDistribution> dists;
    dists.reserve(layers.size());
    for (const auto& layer : layers) {
        dists.push_back(layer.distribution());
    }
    Enumerated out;
    out.selections = enumerate_selections(n, k, layers.size());
    out.prob.reserve(out.selections.size());
    out.loss.reserve(out.selections.size());
    out.score.reserve(out.selections.size());
    for (const auto& s : out.selections) {
        out.prob.push_back(std::exp(selection_logprob(dists, s)));
        out.loss.push_back(loss(s));
        std::vector<Matrix> grads;
        grads.reserve(layers.size());
        for (std::size_t l = 0; l < layers.size(); ++l) {
            grads.push_back(selection_score_grad(dists[l], layers[l].x, s.per_layer[l]));
        }
        out.score.push_back(std::move(grads));
    }
    return out;
}

std::vector<Matrix> zeros_like(std::span<const RouterLayer> layers) {
    std::vector<Matrix> out;
    out.reserve(layers.size());
    for (const auto& layer : layers) {
        out.emplace_back(layer.router.rows(), layer.router.cols());
    }
    return out;
}

}  // namespace

double RolloutSet::mean_loss() const {
    if (rollouts.empty()) {
        return 0.0;
    }
    double total = 0.0;
    for (const auto& r : rollouts) {
        total += r.loss;
    }
    return total / static_cast<double>(rollouts.size());
}

std::vector<Matrix> rloo_router_grad(const RolloutSet& set) {
    const std::size_t m = set.rollouts.size();
    if (m < 2) {
        throw DomainError("leave-one-out baseline undefined for fewer than 2 rollouts");
    }
    std::vector<Matrix> out;
    out.reserve(set.rollouts.front().score_grads.size());
    for (const auto& g : set.rollouts.front().score_grads) {
        out.emplace_back(g.rows(), g.cols());
    }
    const double scale = 1.0 / static_cast<double>(m - 1);
    for (const auto& r : set.rollouts) {
        if (r.score_grads.size() != out.size()) {
            throw ShapeError("rloo_router_grad: rollouts disagree on layer count");
        }
        // L_m - mean(L) as a mean of pairwise differences: exactly zero when all losses agree.
        double advantage = 0.0;
        for (const auto& other : set.rollouts) {
            advantage += r.loss - other.loss;
        }
        advantage /= static_cast<double>(m);
        for (std::size_t l = 0; l < out.size(); ++l) {
            add_scaled(out[l], advantage * scale, r.score_grads[l]);
        }
    }
    return out;
}

std::size_t selection_space_size(std::size_t n, std::size_t k, std::size_t layers, std::size_t max_size) {
    if (k < 1 || k > n) {
        throw DomainError("selection space: need 1 <= k <= n");
    }
    std::size_t per_layer = 1;
    for (std::size_t j = 0; j < k; ++j) {
        per_layer *= n - j;
    }
    std::size_t total = 1;
    for (std::size_t l = 0; l < layers; ++l) {
        if (total > max_size / per_layer) {
            throw DomainError("enumeration budget exceeded: selection space larger than " + std::to_string(max_size));
        }
        total *= per_layer;
    }
    return total;
}

std::vector<Selection> enumerate_selections(std::size_t n, std::size_t k, std::size_t layers) {
    const auto tuples = enumerate_ordered_tuples(n, k);
    std::vector<Selection> out{Selection{}};
    for (std::size_t l = 0; l < layers; ++l) {
        std::vector<Selection> next;
        next.reserve(out.size() * tuples.size());
        for (const auto& prefix : out) {
            for (const auto& t : tuples) {
                Selection s = prefix;
                s.per_layer.push_back(t);
                next.push_back(std::move(s));
            }
        }
        out = std::move(next);
    }
    return out;
}

std::vector<Matrix> exact_surrogate_grad(const LossTable& loss, std::span<const RouterLayer> layers, std::size_t k) {
    const Enumerated e = enumerate_with_scores(loss, layers, k);
    std::vector<Matrix> grad = zeros_like(layers);
    for (std::size_t s = 0; s < e.selections.size(); ++s) {
        for (std::size_t l = 0; l < layers.size(); ++l) {
            add_scaled(grad[l], e.prob[s] * e.loss[s], e.score[s][l]);
        }
    }
    return grad;
}

UnbiasednessResult unbiasedness_check(const LossTable& loss, std::span<const RouterLayer> layers, std::size_t k,
                                      std::size_t rollouts) {
    if (rollouts < 2) {
        throw DomainError("leave-one-out baseline undefined for fewer than 2 rollouts");
    }
    const Enumerated e = enumerate_with_scores(loss, layers, k);
    const std::size_t s = e.selections.size();
    std::size_t tuples = 1;
    for (std::size_t m = 0; m < rollouts; ++m) {
        if (tuples > kMaxTuples / s) {
            throw DomainError("enumeration budget exceeded: more than 1e6 sample tuples");
        }
        tuples *= s;
    }

    // E[G_hat] = sum_t w_t / (M-1) sum_m (L_{t,m} - Lbar_t) g_{t,m}; gather the scalar
    // coefficient on each selection's score first, then form the matrices once.
    std::vector<double> coeff(s, 0.0);
    std::vector<std::size_t> odometer(rollouts, 0);
    const double inv = 1.0 / static_cast<double>(rollouts - 1);
    for (std::size_t t = 0; t < tuples; ++t) {
        double weight = 1.0;
        double mean = 0.0;
        for (std::size_t idx : odometer) {
            weight *= e.prob[idx];
            mean += e.loss[idx];
        }
        mean /= static_cast<double>(rollouts);
        for (std::size_t idx : odometer) {
            coeff[idx] += weight * (e.loss[idx] - mean) * inv;
        }
        for (std::size_t pos = rollouts; pos-- > 0;) {
            if (++odometer[pos] < s) {
                break;
            }
            odometer[pos] = 0;
        }
    }

    UnbiasednessResult result;
    result.selections = s;
    result.tuples = tuples;
    result.expected_estimate = zeros_like(layers);
    result.exact = zeros_like(layers);
    for (std::size_t i = 0; i < s; ++i) {
        for (std::size_t l = 0; l < layers.size(); ++l) {
            add_scaled(result.expected_estimate[l], coeff[i], e.score[i][l]);
            add_scaled(result.exact[l], e.prob[i] * e.loss[i], e.score[i][l]);
        }
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto a = result.expected_estimate[l].data();
        const auto b = result.exact[l].data();
        for (std::size_t j = 0; j < a.size(); ++j) {
            result.max_deviation = std::max(result.max_deviation, std::abs(a[j] - b[j]));
        }
    }
    return result;
}

VarianceSummary estimator_variance(const LossTable& loss, std::span<const RouterLayer> layers, std::size_t k,
                                   std::size_t rollouts, std::size_t trials, std::uint64_t seed,
                                   std::size_t threads) {
    if (rollouts < 2) {
        throw DomainError("leave-one-out baseline undefined for fewer than 2 rollouts");
    }
    if (trials < 2) {
        throw DomainError("estimator_variance: need at least 2 trials");
    }
    std::vector<RoutingDistribution> dists;
    std::size_t width = 0;
    for (const auto& layer : layers) {
        dists.push_back(layer.distribution());
        width += layer.router.size();
    }

    struct Moments {
        double count = 0.0;
        std::vector<double> mean;
        std::vector<double> m2;
    };
    std::vector<Moments> partial(kVarianceChunks);

    for_each_chunk(trials, kVarianceChunks, threads, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        Moments acc{0.0, std::vector<double>(width, 0.0), std::vector<double>(width, 0.0)};
        for (std::size_t t = begin; t < end; ++t) {
            RngStream rng(seed, "rloo-variance", t);
            RolloutSet set;
            set.rollouts.reserve(rollouts);
            for (std::size_t m = 0; m < rollouts; ++m) {
                Rollout r;
                for (std::size_t l = 0; l < layers.size(); ++l) {
                    r.selection.per_layer.push_back(sample_without_replacement(dists[l], k, rng));
                    r.score_grads.push_back(selection_score_grad(dists[l], layers[l].x, r.selection.per_layer[l]));
                }
                r.loss = loss(r.selection);
                set.rollouts.push_back(std::move(r));
            }
            const auto est = rloo_router_grad(set);
            acc.count += 1.0;
            std::size_t j = 0;
            for (const auto& g : est) {
                for (double v : g.data()) {
                    const double delta = v - acc.mean[j];
                    acc.mean[j] += delta / acc.count;
                    acc.m2[j] += delta * (v - acc.mean[j]);
                    ++j;
                }
            }
        }
        partial[chunk] = std::move(acc);
    });

    // Chan et al. pairwise merge, in chunk order.
    Moments total{0.0, std::vector<double>(width, 0.0), std::vector<double>(width, 0.0)};
    for (auto& p : partial) {
        if (p.count == 0.0) {
            continue;
        }
        const double n = total.count + p.count;
        for (std::size_t j = 0; j < width; ++j) {
            const double delta = p.mean[j] - total.mean[j];
            total.mean[j] += delta * p.count / n;
            total.m2[j] += p.m2[j] + delta * delta * total.count * p.count / n;
        }
        total.count = n;
    }

    VarianceSummary out;
    out.rollouts = rollouts;
    out.trials = trials;
    std::size_t j = 0;
    double sq = 0.0;
    for (const auto& layer : layers) {
        Matrix mean(layer.router.rows(), layer.router.cols());
        Matrix var(layer.router.rows(), layer.router.cols());
        for (std::size_t e = 0; e < mean.size(); ++e, ++j) {
            mean.data()[e] = total.mean[j];
            var.data()[e] = total.m2[j] / (total.count - 1.0);
            out.total_variance += var.data()[e];
            sq += var.data()[e] * var.data()[e];
        }
        out.mean.push_back(std::move(mean));
        out.variance.push_back(std::move(var));
    }
    out.variance_frobenius = std::sqrt(sq);
    return out;
}

}  // namespace remix
