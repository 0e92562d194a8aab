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

// Dense-state propagators: deterministic master equation, photon-counting
// no-jump evolution and jumps, homodyne increments. Fixed-step RK4 for the
// drift; the homodyne measurement term is an Euler-Maruyama substep.

#include "qpulse/model.hpp"
#include "qpulse/random.hpp"

namespace qpulse {

/// A click under a hypothesis for which it has zero probability.
class ImpossibleEvent : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

enum class Generator {
  kMaster,        // -i[H,.] + sum_{i>=0} D[L_i]
  kCountingNoJump // -i[H,.] + sum_{i>=1} D[L_i] - {L0^+L0, .}/2
};

namespace detail {

inline SparseOperator effective_hamiltonian(const Generators& gens) {
  SparseOperator decay = gens.L0.adjoint() * gens.L0;
  for (const auto& L : gens.extra) decay += SparseOperator(L.adjoint() * L);
  SparseOperator heff = gens.H - (0.5 * kI) * decay;
  heff.prune(cplx{0.0});
  return heff;
}

/// out = L rho L^+ (rho Hermitian)
inline void add_sandwich(Operator& out, const SparseOperator& L, const Operator& rho) {
  const Operator left = L * rho;
  out.noalias() += left * SparseOperator(L.adjoint());
}

struct Prepared {
  SparseOperator heff;
  const Generators* gens;
};

inline Operator rhs(const Operator& rho, const Prepared& p, Generator kind) {
  // -i(Heff rho - rho Heff^+) = -i(X - X^+) for Hermitian rho.
  const Operator x = p.heff * rho;
  Operator out = -kI * (x - x.adjoint());
  if (kind == Generator::kMaster) add_sandwich(out, p.gens->L0, rho);
  for (const auto& L : p.gens->extra) add_sandwich(out, L, rho);
  return out;
}

inline Operator rhs(const Operator& rho, const Generators& gens, Generator kind) {
  return rhs(rho, Prepared{effective_hamiltonian(gens), &gens}, kind);
}

// rhs() drops the anti-Hermitian part of rho, which would otherwise grow from
// rounding under the refill term.
inline void hermitize(Operator& rho) { rho = (0.5 * (rho + rho.adjoint())).eval(); }

inline void rk4(Operator& rho, const Model& model, int step, Generator kind) {
  const double dt = model.grid().dt;
  const Generators g0 = model.generators_at(step, 0);
  const Generators gh = model.generators_at(step, 1);
  const Generators g1 = model.generators_at(step, 2);
  const Prepared p0{effective_hamiltonian(g0), &g0};
  const Prepared ph{effective_hamiltonian(gh), &gh};
  const Prepared p1{effective_hamiltonian(g1), &g1};
  const Operator k1 = rhs(rho, p0, kind);
  const Operator k2 = rhs(rho + (0.5 * dt) * k1, ph, kind);
  const Operator k3 = rhs(rho + (0.5 * dt) * k2, ph, kind);
  const Operator k4 = rhs(rho + dt * k3, p1, kind);
  rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  hermitize(rho);
}

/// RK4 propagator of psi' = -i Heff psi over one step.
inline Operator no_jump_propagator(const Model& model, int step) {
  const double dt = model.grid().dt;
  const SparseOperator h0 = effective_hamiltonian(model.generators_at(step, 0));
  const SparseOperator hh = effective_hamiltonian(model.generators_at(step, 1));
  const SparseOperator h1 = effective_hamiltonian(model.generators_at(step, 2));
  const Eigen::Index d = model.layout().joint_dim();
  const Operator id = Operator::Identity(d, d);
  const Operator k1 = -kI * (h0 * id);
  const Operator k2 = -kI * (hh * (id + (0.5 * dt) * k1));
  const Operator k3 = -kI * (hh * (id + (0.5 * dt) * k2));
  const Operator k4 = -kI * (h1 * (id + dt * k3));
  return id + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace detail

/// -i[H, rho] + D[L0]rho + sum_i D[L_i]rho
inline Operator lindblad_rhs(const DensityMatrix& rho, const Generators& gens) {
  if (rho.dim() != gens.H.rows()) throw ConfigError("lindblad_rhs: shape mismatch");
  return detail::rhs(rho.matrix, gens, Generator::kMaster);
}

inline Operator counting_nojump_rhs(const DensityMatrix& rho, const Generators& gens) {
  if (rho.dim() != gens.H.rows()) throw ConfigError("counting_nojump_rhs: shape mismatch");
  return detail::rhs(rho.matrix, gens, Generator::kCountingNoJump);
}

inline constexpr double kTraceDriftLimit = 1e-6;

/// One RK4 step of the master equation from t_step to t_step + dt. Returns the
/// absolute trace drift of the step.
inline double step_deterministic(DensityMatrix& rho, const Model& model, int step) {
  if (rho.dim() != model.layout().joint_dim()) throw ConfigError("step_deterministic: shape mismatch");
  const double before = rho.trace();
  detail::rk4(rho.matrix, model, step, Generator::kMaster);
  const double drift = std::abs(rho.trace() - before);
  if (drift > kTraceDriftLimit * std::max(1.0, std::abs(before)))
    throw NumericalError("master equation step " + std::to_string(step) + " changed the trace by " +
                         std::to_string(drift) + "; reduce dt");
  return drift;
}

/// One RK4 step of the unnormalized no-jump evolution.
inline void counting_nojump_step(DensityMatrix& rho, const Model& model, int step) {
  if (rho.dim() != model.layout().joint_dim()) throw ConfigError("counting_nojump_step: shape mismatch");
  detail::rk4(rho.matrix, model, step, Generator::kCountingNoJump);
  rho.normalized = false;
  if (!(rho.trace() >= 0.0))
    throw NumericalError("no-jump step " + std::to_string(step) + " produced negative trace; reduce dt");
}

/// <L0^+ L0> dt on the normalized state.
inline double jump_probability(const DensityMatrix& rho, const Generators& gens, double dt) {
  const SparseOperator k = gens.L0.adjoint() * gens.L0;
  const double p = expectation(k, rho).real() * dt;
  if (p > kJumpProbabilityFail)
    throw NumericalError("jump probability per step " + std::to_string(p) + " exceeds " +
                         std::to_string(kJumpProbabilityFail) + "; reduce dt");
  return std::max(0.0, p);
}

/// rho -> L0 rho L0^+, unnormalized. Throws ImpossibleEvent if the result has
/// zero trace.
inline void apply_jump(DensityMatrix& rho, const Generators& gens) {
  if (rho.dim() != gens.L0.rows()) throw ConfigError("apply_jump: shape mismatch");
  Operator out = Operator::Zero(rho.dim(), rho.dim());
  detail::add_sandwich(out, gens.L0, rho.matrix);
  if (!(out.trace().real() > 0.0)) throw ImpossibleEvent("jump applied to a state that cannot emit");
  detail::hermitize(out);
  rho.matrix = std::move(out);
  rho.normalized = false;
}

/// L0 e^{-i phase}
inline SparseOperator homodyne_operator(const Generators& gens, double phase) {
  return std::exp(-kI * phase) * gens.L0;
}

/// Tr(L rho + rho L^+) for the normalized state.
inline double homodyne_mean(const DensityMatrix& rho, const Generators& gens, double phase) {
  return 2.0 * expectation(homodyne_operator(gens, phase), rho).real();
}

/// dY = Tr(L rho + rho L^+) dt + sqrt(dt) N(0,1)
inline double homodyne_increment(const DensityMatrix& rho, const Generators& gens, double dt, RandomStream& rng,
                                 double phase = 0.0) {
  return homodyne_mean(rho, gens, phase) * dt + std::sqrt(dt) * rng.normal();
}

/// rho -> V rho V^+ + (dt/2) sum_i L_i (rho + V rho V^+) L_i^+ over the
/// unmonitored channels, then rho -> M rho M^+ with M = 1 + L dY and L taken
/// at the start of the step. V is the RK4 no-jump propagator. E[dY^2] = dt
/// restores the L rho L^+ feed on average. Every term is a sandwich, so rho
/// stays positive for any dY.
inline void homodyne_step(DensityMatrix& rho, const Model& model, int step, double dY) {
  if (rho.dim() != model.layout().joint_dim()) throw ConfigError("homodyne_step: shape mismatch");
  const double dt = model.grid().dt;
  const Generators gens = model.generators_at(step, 0);
  const Operator v = detail::no_jump_propagator(model, step);
  Operator drifted = v * rho.matrix * v.adjoint();
  if (!gens.extra.empty()) {
    Operator feed = Operator::Zero(rho.dim(), rho.dim());
    for (const auto& L : gens.extra) {
      detail::add_sandwich(feed, L, rho.matrix);
      detail::add_sandwich(feed, L, drifted);
    }
    drifted += (0.5 * dt) * feed;
  }
  const SparseOperator L = homodyne_operator(gens, model.config().detection.phase);
  const Eigen::Index d = rho.dim();
  const Operator m = Operator::Identity(d, d) + dY * Operator(L);
  rho.matrix = m * drifted * m.adjoint();
  detail::hermitize(rho.matrix);
  rho.normalized = false;
  if (!(rho.trace() > 0.0))
    throw NumericalError("homodyne step " + std::to_string(step) + " produced non-positive trace; reduce dt");
}

}  // namespace qpulse
