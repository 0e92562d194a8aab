/*
   Copyright 2026 The qpulse Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

// Dense operators and states on the joint (virtual cavity) x (three-level atom)
// Hilbert space.
//
// Joint index convention: index = cavity_index * 3 + atom_index, with the atom
// basis ordered (|0>, |1>, |e>).

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace qpulse {

using cplx = std::complex<double>;
using Operator = Eigen::MatrixXcd;
using SparseOperator = Eigen::SparseMatrix<cplx>;

inline constexpr cplx kI{0.0, 1.0};

/// Invalid configuration or input.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Numerical failure during propagation (step too large, trace collapse, ...).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class AtomLevel : int { kGround0 = 0, kGround1 = 1, kExcited = 2 };

inline constexpr int kAtomDim = 3;

inline AtomLevel parse_atom_level(std::string_view label) {
  if (label == "0") return AtomLevel::kGround0;
  if (label == "1") return AtomLevel::kGround1;
  if (label == "e") return AtomLevel::kExcited;
  throw ConfigError("unknown atom level '" + std::string(label) + "' (expected 0, 1 or e)");
}

inline std::string_view atom_level_name(AtomLevel level) {
  switch (level) {
    case AtomLevel::kGround0: return "0";
    case AtomLevel::kGround1: return "1";
    case AtomLevel::kExcited: return "e";
  }
  return "?";
}

enum class Subsystem { kCavity, kAtom };

struct HilbertLayout {
  int cavity_dim = 1;

  explicit HilbertLayout(int cavity = 1) : cavity_dim(cavity) {
    if (cavity_dim < 1) throw ConfigError("cavity_dim must be >= 1");
  }

  int atom_dim() const { return kAtomDim; }
  int joint_dim() const { return cavity_dim * kAtomDim; }
  int index(int n, AtomLevel s) const { return n * kAtomDim + static_cast<int>(s); }

  bool operator==(const HilbertLayout&) const = default;
};

/// Truncated annihilation operator, <n-1|a|n> = sqrt(n).
inline Operator annihilation_operator(int cavity_dim) {
  if (cavity_dim < 1) throw ConfigError("annihilation_operator: cavity_dim must be >= 1");
  Operator a = Operator::Zero(cavity_dim, cavity_dim);
  for (int n = 1; n < cavity_dim; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
  return a;
}

/// |to><from| on the atom.
inline Operator atomic_transition(AtomLevel from, AtomLevel to) {
  Operator m = Operator::Zero(kAtomDim, kAtomDim);
  m(static_cast<int>(to), static_cast<int>(from)) = 1.0;
  return m;
}

inline Operator atomic_transition(std::string_view from, std::string_view to) {
  return atomic_transition(parse_atom_level(from), parse_atom_level(to));
}

inline Operator kron(const Operator& a, const Operator& b) {
  Operator out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// Lift a single-subsystem operator to the joint space.
inline Operator embed(const Operator& op, Subsystem which, const HilbertLayout& layout) {
  const int dim = which == Subsystem::kCavity ? layout.cavity_dim : kAtomDim;
  if (op.rows() != dim || op.cols() != dim)
    throw ConfigError("embed: operator is " + std::to_string(op.rows()) + "x" +
                      std::to_string(op.cols()) + ", subsystem dimension is " +
                      std::to_string(dim));
  if (which == Subsystem::kCavity) return kron(op, Operator::Identity(kAtomDim, kAtomDim));
  return kron(Operator::Identity(layout.cavity_dim, layout.cavity_dim), op);
}

inline double max_abs(const Operator& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

inline double hermiticity_deviation(const Operator& m) { return max_abs(m - m.adjoint()); }

/// Possibly unnormalized density matrix. The trace of an unnormalized state
/// carries a likelihood.
struct DensityMatrix {
  Operator matrix;
  bool normalized = true;

  DensityMatrix() = default;
  explicit DensityMatrix(Operator m, bool is_normalized = true)
      : matrix(std::move(m)), normalized(is_normalized) {}

  Eigen::Index dim() const { return matrix.rows(); }
  double trace() const { return matrix.trace().real(); }

  void scale(double s) {
    matrix *= s;
    normalized = false;
  }

  /// Rescales to unit trace and returns the factor that was divided out.
  double normalize() {
    const double tr = trace();
    if (!(tr > 0.0)) throw NumericalError("cannot normalize a state with trace " + std::to_string(tr));
    matrix /= tr;
    normalized = true;
    return tr;
  }

  DensityMatrix normalized_copy() const {
    DensityMatrix out = *this;
    out.normalize();
    return out;
  }
};

/// D[L]rho = L rho L^+ - (L^+L rho + rho L^+L)/2
inline Operator dissipator_apply(const Operator& L, const Operator& rho) {
  if (L.rows() != rho.rows() || L.cols() != rho.cols() || L.rows() != L.cols())
    throw ConfigError("dissipator_apply: shape mismatch");
  const Operator LdL = L.adjoint() * L;
  return L * rho * L.adjoint() - 0.5 * (LdL * rho + rho * LdL);
}

inline Operator dissipator_apply(const Operator& L, const DensityMatrix& rho) {
  return dissipator_apply(L, rho.matrix);
}

/// Tr(A rho) / Tr(rho).
inline cplx expectation(const Operator& A, const DensityMatrix& rho) {
  if (A.rows() != rho.dim() || A.cols() != rho.dim())
    throw ConfigError("expectation: shape mismatch");
  const double tr = rho.trace();
  if (!(tr > 0.0)) throw NumericalError("expectation: state has non-positive trace");
  return (A.cwiseProduct(rho.matrix.transpose())).sum() / tr;
}

inline cplx expectation(const SparseOperator& A, const DensityMatrix& rho) {
  if (A.rows() != rho.dim() || A.cols() != rho.dim())
    throw ConfigError("expectation: shape mismatch");
  const double tr = rho.trace();
  if (!(tr > 0.0)) throw NumericalError("expectation: state has non-positive trace");
  cplx sum = 0.0;
  for (int k = 0; k < A.outerSize(); ++k)
    for (SparseOperator::InnerIterator it(A, k); it; ++it) sum += it.value() * rho.matrix(it.col(), it.row());
  return sum / tr;
}

struct StateDiagnostics {
  double trace = 0.0;
  double hermiticity = 0.0;     // max |rho - rho^+| / Tr
  double min_eigenvalue = 0.0;  // smallest eigenvalue / Tr
};

/// Full check including diagonalization; meant for periodic validation only.
inline StateDiagnostics diagnose(const DensityMatrix& rho) {
  StateDiagnostics d;
  d.trace = rho.trace();
  const double scale = d.trace > 0.0 ? d.trace : 1.0;
  d.hermiticity = hermiticity_deviation(rho.matrix) / scale;
  const Operator herm = 0.5 * (rho.matrix + rho.matrix.adjoint());
  Eigen::SelfAdjointEigenSolver<Operator> solver(herm, Eigen::EigenvaluesOnly);
  d.min_eigenvalue = solver.eigenvalues().minCoeff() / scale;
  return d;
}

}  // namespace qpulse
