#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace dfx {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Input or configuration problem; the CLI maps these to exit code 2.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An estimator could not produce a result; the CLI maps these to exit code 3.
struct EstimationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dfx
