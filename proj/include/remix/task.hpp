// Copyright (c) 2026, The remixlab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic clustered-regression task. Inputs come from C Gaussian blobs; the
// target function is a frozen tanh network whose first-layer weight receives a
// per-cluster low-rank correction, so a model that starts from the frozen
// network has to learn one correction per cluster.

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "remix/numerics.hpp"

namespace remix {

struct TaskSpec {
    std::size_t dim = 32;
    std::size_t clusters = 4;
    /// Distance of every cluster center from the origin.
    double separation = 3.0;
    /// Rank of each cluster's first-layer correction; 0 disables corrections.
    std::size_t correction_rank = 2;
    /// Overall scale of the corrections relative to the frozen weights.
    double correction_scale = 0.5;
    double noise = 0.01;
    std::size_t train_size = 4096;
    std::size_t eval_size = 512;

    /// Throws DomainError on C < 2, r* > dim, empty sets, or negative scales.
    void validate() const;
};

struct Example {
    Vector x;
    Vector y;
    std::size_t cluster = 0;
};

struct TaskTruth {
    std::vector<Vector> centers;
    /// Frozen dim x dim weights, one per layer.
    std::vector<Matrix> base_weights;
    Matrix head;
    /// corrected_first[c] = base_weights[0] + correction of cluster c.
    std::vector<Matrix> corrected_first;
    bool has_corrections = false;
};

struct Task {
    std::vector<Example> train;
    std::vector<Example> eval;
    TaskTruth truth;
};

/// Draws centers, the frozen network, corrections and both example sets from
/// streams keyed by seed; identical arguments give bit-identical tasks.
Task gen_cluster_task(const TaskSpec& spec, std::size_t layers, std::uint64_t seed);

/// Noise-free target: head * W_L tanh(... tanh(W_1^(c) x)).
Vector truth_forward(const TaskTruth& truth, std::span<const double> x, std::size_t cluster);

}  // namespace remix
