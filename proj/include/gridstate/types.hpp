#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace gridstate {

using Real = double;
using Complex = std::complex<Real>;

template <typename Scalar>
using DenseVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using VectorXr = DenseVector<Real>;
using VectorXc = DenseVector<Complex>;
using MatrixXr = DenseMatrix<Real>;
using MatrixXc = DenseMatrix<Complex>;

// Complex bus voltages, one entry per bus, internal ordering.
using StateVector = VectorXc;

// Malformed input files, inconsistent options. CLI maps this to exit code 2.
class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure inside a solver. CLI maps this to exit code 1.
class solver_error : public std::runtime_error {
 public:
  explicit solver_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace gridstate
