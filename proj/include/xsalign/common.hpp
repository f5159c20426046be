#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace xsalign {

// Row-major throughout: one row per word / token position.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

template <typename S>
using MatrixT = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using VectorT = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// Contract violations and malformed input. The CLI turns these into a
// one-line diagnostic on stderr and exit code 1.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

}  // namespace xsalign
