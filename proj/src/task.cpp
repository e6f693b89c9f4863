// Copyright (c) 2026, The remixlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "remix/task.hpp"

#include <cmath>

#include "remix/errors.hpp"

namespace remix {

namespace {

std::vector<Example> draw_examples(const TaskSpec& spec, const TaskTruth& truth, std::size_t count,
                                   RngStream& rng) {
    const double spread = 1.0 / std::sqrt(static_cast<double>(spec.dim));
    std::vector<Example> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Example e;
        e.cluster = rng.below(spec.clusters);
        e.x = truth.centers[e.cluster];
        for (double& v : e.x) {
            v += spread * rng.normal();
        }
        e.y = truth_forward(truth, e.x, e.cluster);
        if (spec.noise > 0.0) {
            for (double& v : e.y) {
                v += spec.noise * rng.normal();
            }
        }
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace

void TaskSpec::validate() const {
    if (clusters < 2) {
        throw DomainError("task: clusters must be at least 2");
    }
    if (dim < 1 || correction_rank > dim) {
        throw DomainError("task: need dim >= 1 and correction_rank <= dim");
    }
    if (train_size < 1 || eval_size < 1) {
        throw DomainError("task: train_size and eval_size must be at least 1");
    }
    if (!(noise >= 0.0) || !(separation >= 0.0) || !(correction_scale >= 0.0)) {
        throw DomainError("task: noise, separation and correction_scale must be non-negative");
    }
}

Task gen_cluster_task(const TaskSpec& spec, std::size_t layers, std::uint64_t seed) {
    spec.validate();
    if (layers < 1) {
        throw DomainError("task: need at least one layer");
    }
    const std::size_t d = spec.dim;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    Task task;
    TaskTruth& truth = task.truth;

    RngStream center_rng(seed, "task-centers", 0);
    for (std::size_t c = 0; c < spec.clusters; ++c) {
        Vector mu(d);
        for (double& v : mu) {
            v = center_rng.normal();
        }
        const double norm = std::sqrt(squared_norm(mu));
        for (double& v : mu) {
            v *= spec.separation / norm;
        }
        truth.centers.push_back(std::move(mu));
    }

    RngStream weight_rng(seed, "task-weights", 0);
    for (std::size_t l = 0; l < layers; ++l) {
        truth.base_weights.push_back(gaussian_matrix(weight_rng, d, d, inv_sqrt_d));
    }
    truth.head = gaussian_matrix(weight_rng, d, d, inv_sqrt_d);

    truth.has_corrections = spec.correction_rank > 0 && spec.correction_scale > 0.0;
    if (truth.has_corrections) {
        RngStream corr_rng(seed, "task-corrections", 0);
        const double r = static_cast<double>(spec.correction_rank);
        for (std::size_t c = 0; c < spec.clusters; ++c) {
            // U: d x r* with N(0, 1/r*), V: d x r* with N(0, 1/d), so |U V^T x| ~ |x|.
            const Matrix u = gaussian_matrix(corr_rng, d, spec.correction_rank, 1.0 / std::sqrt(r));
            const Matrix v = gaussian_matrix(corr_rng, d, spec.correction_rank, inv_sqrt_d);
            Matrix w = truth.base_weights.front();
            for (std::size_t j = 0; j < spec.correction_rank; ++j) {
                Vector uj(d);
                Vector vj(d);
                for (std::size_t i = 0; i < d; ++i) {
                    uj[i] = u(i, j);
                    vj[i] = v(i, j);
                }
                add_outer(w, spec.correction_scale, uj, vj);
            }
            truth.corrected_first.push_back(std::move(w));
        }
    }

    RngStream train_rng(seed, "task-train", 0);
    task.train = draw_examples(spec, truth, spec.train_size, train_rng);
    RngStream eval_rng(seed, "task-eval", 0);
    task.eval = draw_examples(spec, truth, spec.eval_size, eval_rng);
    return task;
}

Vector truth_forward(const TaskTruth& truth, std::span<const double> x, std::size_t cluster) {
    Vector h(x.begin(), x.end());
    const std::size_t layers = truth.base_weights.size();
    for (std::size_t l = 0; l < layers; ++l) {
        const Matrix& w = (l == 0 && truth.has_corrections) ? truth.corrected_first.at(cluster) : truth.base_weights[l];
        Vector z = matvec(w, h);
        if (l + 1 < layers) {
            for (double& v : z) {
                v = std::tanh(v);
            }
        }
        h = std::move(z);
    }
    return matvec(truth.head, h);
}

}  // namespace remix
