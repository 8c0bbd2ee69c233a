// Copyright Contributors to the compactsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace csplat {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on the caller was violated (sizes, missing auxiliaries, ...).
class ContractError : public Error {
public:
    using Error::Error;
};

/// Bad user input: empty scenes, missing files, invalid views.
class InputError : public Error {
public:
    using Error::Error;
};

/// Invalid or out-of-range configuration value.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed, truncated or corrupt file.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Numerical failure such as a degenerate rotation or a singular covariance.
class NumericError : public Error {
public:
    using Error::Error;
};

template <typename T>
inline T sigmoid(T x) {
    return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
inline T sigmoid_grad(T x) {
    const T s = sigmoid(x);
    return s * (T(1) - s);
}

template <typename T>
inline T logit(T p) {
    return std::log(p / (T(1) - p));
}

/// Runs fn(begin, end, worker) over [0, n) split into contiguous chunks.
/// Chunk boundaries depend only on (n, workers), so per-worker partial sums
/// merged in worker order give results that are reproducible for a fixed
/// worker count.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
    if (workers <= 1 || n < 2) {
        fn(std::size_t{0}, n, 0);
        return;
    }
    const auto count = static_cast<std::size_t>(workers) < n ? static_cast<std::size_t>(workers) : n;
    std::vector<std::thread> pool;
    pool.reserve(count);
    for (std::size_t w = 0; w < count; ++w) {
        const std::size_t begin = n * w / count;
        const std::size_t end = n * (w + 1) / count;
        pool.emplace_back([&fn, begin, end, w] { fn(begin, end, static_cast<int>(w)); });
    }
    for (auto& t : pool) t.join();
}

inline int effective_workers(int requested, std::size_t n) {
    if (requested < 1) requested = 1;
    if (static_cast<std::size_t>(requested) > n) requested = static_cast<int>(n > 0 ? n : 1);
    return requested;
}

}  // namespace csplat
