// Copyright (c) 2026, The remixlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace remix {

/// Splits [0, count) into `chunks` contiguous ranges and runs fn(chunk, begin, end)
/// for each on up to `threads` workers. Chunk boundaries depend only on count and
/// chunks, so per-chunk results merged in chunk order are thread-count independent.
/// The first exception thrown by any chunk is rethrown on the caller.
template <typename Fn>
void for_each_chunk(std::size_t count, std::size_t chunks, std::size_t threads, Fn&& fn) {
    chunks = std::max<std::size_t>(1, std::min(chunks, std::max<std::size_t>(count, 1)));
    auto bounds = [&](std::size_t c) { return count * c / chunks; };
    threads = std::max<std::size_t>(1, std::min(threads, chunks));
    if (threads == 1) {
        for (std::size_t c = 0; c < chunks; ++c) {
            fn(c, bounds(c), bounds(c + 1));
        }
        return;
    }
    std::mutex mu;
    std::exception_ptr failure;
    std::size_t next = 0;
    auto worker = [&] {
        for (;;) {
            std::size_t c;
            {
                std::lock_guard lock(mu);
                if (next >= chunks || failure) {
                    return;
                }
                c = next++;
            }
            try {
                fn(c, bounds(c), bounds(c + 1));
            } catch (...) {
                std::lock_guard lock(mu);
                if (!failure) {
                    failure = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back(worker);
    }
    for (auto& th : pool) {
        th.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

}  // namespace remix
