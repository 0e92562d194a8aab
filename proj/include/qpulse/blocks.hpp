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

// Excitation-number block representation for photon counting.
//
// Every generator of the model either conserves the excitation number
// E = n_cavity + [atom = e] (H) or lowers it by one (L0, L1). Under counting
// dynamics the E-diagonal part of rho therefore evolves on its own, and the
// jump rates, likelihoods, photon number and excited population depend on it
// alone. Storing only the diagonal blocks is exact for all of those, and
// costs O(cavity_dim) per step instead of O(cavity_dim^2).
//
// Block E holds the joint basis states with excitation number E drawn from the
// atomic levels the state occupies: K = 1 for {|0>}, K = 2 for {|1>, |e>},
// K = 3 for all three.

#include "qpulse/model.hpp"
#include "qpulse/propagate.hpp"

#include <array>
#include <variant>
#include <vector>

namespace qpulse {

template <int K>
struct BlockSlots;

template <>
struct BlockSlots<1> {
  static constexpr std::array<AtomLevel, 1> levels{AtomLevel::kGround0};
};
template <>
struct BlockSlots<2> {
  static constexpr std::array<AtomLevel, 2> levels{AtomLevel::kGround1, AtomLevel::kExcited};
};
template <>
struct BlockSlots<3> {
  static constexpr std::array<AtomLevel, 3> levels{AtomLevel::kGround0, AtomLevel::kGround1, AtomLevel::kExcited};
};

template <int K>
using BlockMatrix = Eigen::Matrix<cplx, K, K>;

template <int K>
struct BlockState {
  std::vector<BlockMatrix<K>> blocks;  // index E = 0..cavity_dim

  double trace() const {
    double t = 0.0;
    for (const auto& b : blocks) t += b.trace().real();
    return t;
  }
  void scale(double s) {
    for (auto& b : blocks) b *= s;
  }
};

namespace detail {

inline int photon_number_of(int excitation, AtomLevel level) {
  return level == AtomLevel::kExcited ? excitation - 1 : excitation;
}

/// <n', a'| O |n, a> for the model operators.
struct ModelElements {
  double sqrt_gamma;
  double sqrt_kappa;
  double detuning;

  static double lower(int to_n, int from_n) { return to_n == from_n - 1 ? std::sqrt(double(from_n)) : 0.0; }
  static bool is(AtomLevel x, AtomLevel y) { return x == y; }

  cplx L0(cplx g, int n2, AtomLevel a2, int n, AtomLevel a) const {
    cplx v = 0.0;
    if (a2 == a) v += std::conj(g) * lower(n2, n);
    if (n2 == n && is(a2, AtomLevel::kGround1) && is(a, AtomLevel::kExcited)) v += sqrt_gamma;
    return v;
  }
  cplx L1(int n2, AtomLevel a2, int n, AtomLevel a) const {
    return (n2 == n && is(a2, AtomLevel::kGround1) && is(a, AtomLevel::kExcited)) ? cplx{sqrt_kappa} : cplx{0.0};
  }
  cplx H(cplx g, int n2, AtomLevel a2, int n, AtomLevel a) const {
    cplx v = 0.0;
    if (n2 == n && a2 == a && is(a, AtomLevel::kExcited)) v += detuning;
    // a^+ c: |n, e> -> sqrt(n+1) |n+1, 1>
    if (is(a2, AtomLevel::kGround1) && is(a, AtomLevel::kExcited) && n2 == n + 1)
      v += kI * sqrt_gamma * 0.5 * g * std::sqrt(double(n + 1));
    // a c^+: |n, 1> -> sqrt(n) |n-1, e>
    if (is(a2, AtomLevel::kExcited) && is(a, AtomLevel::kGround1) && n2 == n - 1)
      v -= kI * sqrt_gamma * 0.5 * std::conj(g) * std::sqrt(double(n));
    return v;
  }
};

}  // namespace detail

template <int K>
class BlockPropagator {
 public:
  using State = BlockState<K>;
  using Mat = BlockMatrix<K>;

  explicit BlockPropagator(const Model& model)
      : model_(&model),
        d_(model.layout().cavity_dim),
        elements_{std::sqrt(model.config().gamma), std::sqrt(model.config().kappa), model.config().detuning} {
    // Every block operator is affine in g and g*; keep the coefficients.
    const auto& lv = BlockSlots<K>::levels;
    consts_.resize(blocks());
    for (int e = 0; e < blocks(); ++e) {
      auto& c = consts_[e];
      Mat h0 = Mat::Zero();
      c.p.setZero();
      c.q.setZero();
      c.side.setZero();
      for (int i = 0; i < K; ++i)
        for (int j = 0; j < K; ++j) {
          if (valid(e, i) && valid(e, j)) {
            const int ni = detail::photon_number_of(e, lv[i]);
            const int nj = detail::photon_number_of(e, lv[j]);
            h0(i, j) = elements_.H(0.0, ni, lv[i], nj, lv[j]);
          }
          if (e > 0 && valid(e - 1, i) && valid(e, j)) {
            const int n2 = detail::photon_number_of(e - 1, lv[i]);
            const int n = detail::photon_number_of(e, lv[j]);
            c.q(i, j) = elements_.L0(0.0, n2, lv[i], n, lv[j]);
            c.p(i, j) = elements_.L0(1.0, n2, lv[i], n, lv[j]) - c.q(i, j);
            c.side(i, j) = elements_.L1(n2, lv[i], n, lv[j]);
          }
        }
      c.x = hamiltonian_g_part(e);
      c.pp = c.p.adjoint() * c.p;
      c.pq = c.p.adjoint() * c.q;
      c.base = h0 - (0.5 * kI) * (c.q.adjoint() * c.q + c.side.adjoint() * c.side);
    }
    has_side_loss_ = elements_.sqrt_kappa > 0.0;
  }

  const Model& model() const { return *model_; }
  int blocks() const { return d_ + 1; }

  bool valid(int excitation, int slot) const {
    const int n = detail::photon_number_of(excitation, BlockSlots<K>::levels[slot]);
    return n >= 0 && n < d_;
  }
  int joint_index(int excitation, int slot) const {
    const AtomLevel a = BlockSlots<K>::levels[slot];
    return model_->layout().index(detail::photon_number_of(excitation, a), a);
  }

  /// Projects a dense state onto the E-diagonal blocks over this K's levels.
  State from_dense(const DensityMatrix& rho) const {
    State s;
    s.blocks.assign(blocks(), Mat::Zero());
    for (int e = 0; e < blocks(); ++e)
      for (int i = 0; i < K; ++i)
        for (int j = 0; j < K; ++j)
          if (valid(e, i) && valid(e, j)) s.blocks[e](i, j) = rho.matrix(joint_index(e, i), joint_index(e, j));
    return s;
  }

  DensityMatrix to_dense(const State& s) const {
    Operator m = Operator::Zero(model_->layout().joint_dim(), model_->layout().joint_dim());
    for (int e = 0; e < blocks(); ++e)
      for (int i = 0; i < K; ++i)
        for (int j = 0; j < K; ++j)
          if (valid(e, i) && valid(e, j)) m(joint_index(e, i), joint_index(e, j)) = s.blocks[e](i, j);
    return DensityMatrix(std::move(m), false);
  }

  State initial() const { return from_dense(model_->initial_state()); }

  /// Heff restricted to block E.
  Mat heff(int e, cplx g) const {
    const auto& c = consts_[e];
    const Mat pq = g * c.pq;
    return c.base + g * c.x + std::conj(g) * c.x.adjoint() -
           (0.5 * kI) * (std::norm(g) * c.pp + pq + pq.adjoint());
  }

  /// L0 from block E to block E - 1.
  Mat lower0(int e, cplx g) const { return std::conj(g) * consts_[e].p + consts_[e].q; }
  const Mat& lower1(int e) const { return consts_[e].side; }

  void nojump(State& s, int step) const { rk4(s, step, false); }
  void master(State& s, int step) const { rk4(s, step, true); }

  /// Tr(L0 rho L0^+) at t_step (unnormalized).
  double emission(const State& s, int step) const {
    const cplx g = model_->schedule().at(step);
    double r = 0.0;
    for (int e = 1; e < blocks(); ++e) {
      const Mat l = lower0(e, g);
      r += (l * s.blocks[e] * l.adjoint()).trace().real();
    }
    return r;
  }

  void jump(State& s, int step) const {
    const cplx g = model_->schedule().at(step);
    for (int e = 0; e + 1 < blocks(); ++e) {
      const Mat l = lower0(e + 1, g);
      s.blocks[e] = l * s.blocks[e + 1] * l.adjoint();
    }
    s.blocks.back().setZero();
    hermitize(s);
  }

  double trace(const State& s) const { return s.trace(); }

  double photons(const State& s) const {
    double n = 0.0;
    for (int e = 0; e < blocks(); ++e)
      for (int i = 0; i < K; ++i)
        if (valid(e, i)) n += detail::photon_number_of(e, BlockSlots<K>::levels[i]) * s.blocks[e](i, i).real();
    return n;
  }

  double excited(const State& s) const {
    double p = 0.0;
    for (int e = 0; e < blocks(); ++e)
      for (int i = 0; i < K; ++i)
        if (BlockSlots<K>::levels[i] == AtomLevel::kExcited && valid(e, i)) p += s.blocks[e](i, i).real();
    return p;
  }

  double hermiticity(const State& s) const {
    double dev = 0.0;
    for (const auto& b : s.blocks) dev = std::max(dev, (b - b.adjoint()).cwiseAbs().maxCoeff());
    return dev;
  }

  double min_eigenvalue(const State& s) const {
    double lo = std::numeric_limits<double>::infinity();
    for (const auto& b : s.blocks) {
      Eigen::SelfAdjointEigenSolver<Mat> solver(Mat(0.5 * (b + b.adjoint())), Eigen::EigenvaluesOnly);
      lo = std::min(lo, solver.eigenvalues().minCoeff());
    }
    return lo;
  }

 private:
  struct BlockConstants {
    Mat base;  // detuning + decay terms independent of g
    Mat x;     // coefficient of g in H (H = h0 + g x + (g x)^+)
    Mat p;     // coefficient of g* in L0 (E -> E-1)
    Mat q;     // g-independent part of L0
    Mat side;  // L1 (E -> E-1)
    Mat pp;    // p^+ p
    Mat pq;    // p^+ q
  };

  Mat hamiltonian_g_part(int e) const {
    const auto& lv = BlockSlots<K>::levels;
    Mat out = Mat::Zero();
    for (int i = 0; i < K; ++i)
      for (int j = 0; j < K; ++j) {
        if (!valid(e, i) || !valid(e, j)) continue;
        const int ni = detail::photon_number_of(e, lv[i]);
        const int nj = detail::photon_number_of(e, lv[j]);
        // Only the a^+ c element is linear in g.
        if (lv[i] == AtomLevel::kGround1 && lv[j] == AtomLevel::kExcited && ni == nj + 1)
          out(i, j) = kI * elements_.sqrt_gamma * 0.5 * std::sqrt(double(nj + 1));
      }
    return out;
  }

  void rhs(const State& s, cplx g, bool monitored_refill, State& out) const {
    const int nb = blocks();
    for (int e = 0; e < nb; ++e) {
      const Mat x = heff(e, g) * s.blocks[e];
      Mat r = -kI * (x - x.adjoint());
      if (e + 1 < nb) {
        if (monitored_refill) {
          const Mat l = lower0(e + 1, g);
          r.noalias() += l * s.blocks[e + 1] * l.adjoint();
        }
        if (has_side_loss_) r.noalias() += lower1(e + 1) * s.blocks[e + 1] * lower1(e + 1).adjoint();
      }
      out.blocks[e] = r;
    }
  }

  void rk4(State& s, int step, bool master) const {
    const double dt = model_->grid().dt;
    const auto& sched = model_->schedule();
    const cplx g0 = sched.at(step, 0), gh = sched.at(step, 1), g1 = sched.at(step, 2);
    State k1 = s, k2 = s, k3 = s, k4 = s, tmp = s;
    const int nb = blocks();
    rhs(s, g0, master, k1);
    for (int e = 0; e < nb; ++e) tmp.blocks[e] = s.blocks[e] + (0.5 * dt) * k1.blocks[e];
    rhs(tmp, gh, master, k2);
    for (int e = 0; e < nb; ++e) tmp.blocks[e] = s.blocks[e] + (0.5 * dt) * k2.blocks[e];
    rhs(tmp, gh, master, k3);
    for (int e = 0; e < nb; ++e) tmp.blocks[e] = s.blocks[e] + dt * k3.blocks[e];
    rhs(tmp, g1, master, k4);
    for (int e = 0; e < nb; ++e)
      s.blocks[e] += (dt / 6.0) * (k1.blocks[e] + 2.0 * k2.blocks[e] + 2.0 * k3.blocks[e] + k4.blocks[e]);
    hermitize(s);
  }

  // The rhs drops the anti-Hermitian part, which would otherwise grow from
  // rounding under the refill term.
  static void hermitize(State& s) {
    for (auto& b : s.blocks) b = (0.5 * (b + b.adjoint())).eval();
  }

  const Model* model_;
  int d_;
  detail::ModelElements elements_;
  std::vector<BlockConstants> consts_;
  bool has_side_loss_ = false;
};

/// Dense counterpart with the same interface.
class DensePropagator {
 public:
  using State = DensityMatrix;

  explicit DensePropagator(const Model& model) : model_(&model) {}

  const Model& model() const { return *model_; }
  State initial() const { return model_->initial_state(); }
  State from_dense(const DensityMatrix& rho) const { return rho; }
  DensityMatrix to_dense(const State& s) const { return s; }

  void nojump(State& s, int step) const { counting_nojump_step(s, *model_, step); }
  void master(State& s, int step) const { step_deterministic(s, *model_, step); }

  double emission(const State& s, int step) const {
    const SparseOperator L0 = model_->generators_at(step).L0;
    const Operator left = L0 * s.matrix;
    return (left * SparseOperator(L0.adjoint())).trace().real();
  }

  void jump(State& s, int step) const {
    const SparseOperator L0 = model_->generators_at(step).L0;
    const Operator left = L0 * s.matrix;
    s.matrix = left * SparseOperator(L0.adjoint());
    detail::hermitize(s.matrix);
    s.normalized = false;
  }

  double trace(const State& s) const { return s.trace(); }
  double photons(const State& s) const { return expectation(model_->number_operator(), s).real() * s.trace(); }
  double excited(const State& s) const { return expectation(model_->excited_projector(), s).real() * s.trace(); }
  double hermiticity(const State& s) const { return hermiticity_deviation(s.matrix); }
  double min_eigenvalue(const State& s) const { return diagnose(s).min_eigenvalue * s.trace(); }

 private:
  const Model* model_;
};

enum class CountingEngine { kAuto, kDense, kBlocks };

/// Which atomic levels the state touches: K = 1, 2 or 3 block slots.
inline int block_size_for(const DensityMatrix& rho) {
  bool ground0 = false, upper = false;
  for (Eigen::Index i = 0; i < rho.dim(); ++i) {
    if (std::abs(rho.matrix(i, i)) == 0.0) continue;
    (i % kAtomDim == 0 ? ground0 : upper) = true;
  }
  if (ground0 && upper) return 3;
  return ground0 ? 1 : 2;
}

/// True when rho has no coherence between different excitation numbers, in
/// which case the block representation holds the whole state.
inline bool is_excitation_diagonal(const DensityMatrix& rho) {
  const auto excitation = [](Eigen::Index i) {
    return static_cast<int>(i / kAtomDim) + (i % kAtomDim == 2 ? 1 : 0);
  };
  for (Eigen::Index i = 0; i < rho.dim(); ++i)
    for (Eigen::Index j = 0; j < rho.dim(); ++j)
      if (excitation(i) != excitation(j) && rho.matrix(i, j) != cplx{0.0}) return false;
  return true;
}

/// Calls f(propagator) with the block propagator matching the model's
/// initial state.
template <class F>
decltype(auto) with_block_propagator(const Model& model, F&& f) {
  switch (block_size_for(model.initial_state())) {
    case 1: return f(BlockPropagator<1>(model));
    case 2: return f(BlockPropagator<2>(model));
    default: return f(BlockPropagator<3>(model));
  }
}

}  // namespace qpulse
