#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace iaeilm {

/// Row-major dense matrix. Rows index time frames, columns index features.
template <class S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Index = Eigen::Index;

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Input values outside the domain of an operation (e.g. pitch outside the voiced range).
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite loss or gradient during training, or a failed numerical check.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

std::string shape_str(Index rows, Index cols);

template <class S>
std::string shape_str(const Matrix<S>& m) {
  return shape_str(m.rows(), m.cols());
}

/// Throws ShapeError when `m` is not rows x cols. Negative expectations match anything.
template <class S>
void expect_shape(const Matrix<S>& m, Index rows, Index cols, const char* what) {
  if ((rows >= 0 && m.rows() != rows) || (cols >= 0 && m.cols() != cols)) {
    throw ShapeError(std::string(what) + ": expected " + shape_str(rows, cols) + ", got " +
                     shape_str(m));
  }
}

/// Worker thread cap from IAEILM_THREADS (default: hardware concurrency, at least 1).
int worker_threads();

/// Runs fn(i) for i in [0, n) on up to `threads` threads, contiguous chunks per thread.
template <class Fn>
void parallel_for(int n, int threads, Fn&& fn);

/// 64-bit FNV-1a over a byte string, rendered as 16 lowercase hex digits.
std::string fnv1a_hex(const std::string& bytes);

/// Mixes a base seed with a stream index (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace iaeilm

#include "iaeilm/detail/parallel.hpp"
