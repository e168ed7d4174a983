#ifndef FTSNE_COMMON_HPP
#define FTSNE_COMMON_HPP

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

/**
 * @file common.hpp
 *
 * @brief Dense matrix, error types and the row-block parallel helper shared by all modules.
 */

namespace ftsne {

/**
 * @brief Base class for every error raised by the library.
 */
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/**
 * @brief A user-supplied parameter is outside its valid range.
 */
class ParameterError : public Error {
public:
    using Error::Error;
};

/**
 * @brief The input data cannot be processed, e.g. a row of duplicate points.
 */
class DegenerateInputError : public Error {
public:
    DegenerateInputError(const std::string& msg, std::size_t row) : Error(msg), row_(row) {}
    std::size_t row() const { return row_; }
private:
    std::size_t row_;
};

/**
 * @brief An argument lies outside the mathematical domain of a function.
 */
class DomainError : public Error {
public:
    using Error::Error;
};

/**
 * @brief A NaN or infinity appeared in a computation.
 */
class NumericError : public Error {
public:
    using Error::Error;
};

/**
 * @brief The requested combination of options is not supported.
 */
class UnsupportedConfigurationError : public Error {
public:
    using Error::Error;
};

/**
 * @brief Row-major dense matrix of doubles.
 */
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return { data_.data() + r * cols_, cols_ }; }
    std::span<const double> row(std::size_t r) const { return { data_.data() + r * cols_, cols_ }; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double out = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double diff = a[k] - b[k];
        out += diff * diff;
    }
    return out;
}

/**
 * @brief Dense m x m matrix of squared Euclidean distances between the rows of `points`.
 */
Matrix squared_distances(const Matrix& points);

namespace detail {

inline int& thread_setting() {
    static int nthreads = [] {
        if (const char* env = std::getenv("FTSNE_THREADS")) {
            const int parsed = std::atoi(env);
            if (parsed > 0) {
                return parsed;
            }
        }
        return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    }();
    return nthreads;
}

}

/**
 * Worker count used by the numeric kernels.
 * Defaults to `FTSNE_THREADS` if set, otherwise the hardware concurrency.
 */
inline int num_threads() {
    return detail::thread_setting();
}

inline void set_num_threads(int n) {
    if (n < 1) {
        throw ParameterError("thread count must be positive");
    }
    detail::thread_setting() = n;
}

/**
 * Splits `[0, n)` into contiguous blocks and calls `fn(start, length)` on each block.
 * Blocks never share output rows, so callers that write per-row results and
 * reduce them afterwards in index order get the same answer for any thread count.
 */
template <typename Function>
void parallelize(std::size_t n, Function&& fn) {
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(num_threads()), n / 16 + 1);
    if (workers <= 1) {
        fn(std::size_t{ 0 }, n);
        return;
    }

    const std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t start = w * chunk;
        if (start >= n) {
            break;
        }
        const std::size_t length = std::min(chunk, n - start);
        pool.emplace_back([&fn, start, length] { fn(start, length); });
    }
    for (auto& t : pool) {
        t.join();
    }
}

/**
 * Sum of `values` in index order, for reproducible reductions of per-row partials.
 */
inline double ordered_sum(std::span<const double> values) {
    double out = 0;
    for (double v : values) {
        out += v;
    }
    return out;
}

inline Matrix squared_distances(const Matrix& points) {
    const std::size_t m = points.rows();
    Matrix out(m, m);
    parallelize(m, [&](std::size_t start, std::size_t length) {
        for (std::size_t i = start; i < start + length; ++i) {
            const auto xi = points.row(i);
            for (std::size_t j = 0; j < m; ++j) {
                out(i, j) = (i == j ? 0.0 : squared_distance(xi, points.row(j)));
            }
        }
    });
    return out;
}

}

#endif
