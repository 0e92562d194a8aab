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

// Input field states of the virtual cavity and product initial states.

#include "qpulse/core.hpp"

#include <cmath>
#include <variant>
#include <vector>

namespace qpulse {

struct FockField {
  int n = 0;
  bool operator==(const FockField&) const = default;
};

struct CoherentField {
  cplx alpha = 0.0;
  bool operator==(const CoherentField&) const = default;
};

/// Explicit (unnormalized) Fock-basis amplitudes.
struct AmplitudeField {
  std::vector<cplx> amplitudes;
  bool operator==(const AmplitudeField&) const = default;
};

using FieldSpec = std::variant<FockField, CoherentField, AmplitudeField>;

inline constexpr double kCoherentTruncationTolerance = 1e-6;

/// Default cavity truncation for a coherent pulse: ceil(|a|^2 + 6|a|) + 10.
inline int default_coherent_cavity_dim(cplx alpha) {
  const double r = std::abs(alpha);
  return static_cast<int>(std::ceil(r * r + 6.0 * r)) + 10;
}

/// Smallest cavity dimension that can hold the field.
inline int minimal_cavity_dim(const FieldSpec& field) {
  return std::visit(
      [](const auto& f) -> int {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, FockField>) return f.n + 1;
        else if constexpr (std::is_same_v<T, CoherentField>) return default_coherent_cavity_dim(f.alpha);
        else return static_cast<int>(std::max<std::size_t>(1, f.amplitudes.size()));
      },
      field);
}

/// Mean photon number of the untruncated field.
inline double mean_photon_number(const FieldSpec& field) {
  return std::visit(
      [](const auto& f) -> double {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, FockField>) return f.n;
        else if constexpr (std::is_same_v<T, CoherentField>) return std::norm(f.alpha);
        else {
          double num = 0.0, den = 0.0;
          for (std::size_t k = 0; k < f.amplitudes.size(); ++k) {
            num += k * std::norm(f.amplitudes[k]);
            den += std::norm(f.amplitudes[k]);
          }
          return den > 0.0 ? num / den : 0.0;
        }
      },
      field);
}

/// Largest photon number with non-negligible weight.
inline double max_photon_number(const FieldSpec& field) {
  return std::visit(
      [](const auto& f) -> double {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, FockField>) return f.n;
        else if constexpr (std::is_same_v<T, CoherentField>) return std::norm(f.alpha);
        else return mean_photon_number(FieldSpec{f});
      },
      field);
}

/// Normalized Fock amplitudes of the field in a cavity of the given dimension.
inline Eigen::VectorXcd field_amplitudes(const FieldSpec& field, int cavity_dim) {
  Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(cavity_dim);
  std::visit(
      [&](const auto& f) {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, FockField>) {
          if (f.n < 0 || f.n >= cavity_dim)
            throw ConfigError("Fock(" + std::to_string(f.n) + ") does not fit in cavity_dim " +
                              std::to_string(cavity_dim));
          psi(f.n) = 1.0;
        } else if constexpr (std::is_same_v<T, CoherentField>) {
          // <n|alpha> = exp(-|alpha|^2/2) alpha^n / sqrt(n!), built recursively.
          cplx amp = std::exp(-0.5 * std::norm(f.alpha));
          for (int n = 0; n < cavity_dim; ++n) {
            psi(n) = amp;
            amp *= f.alpha / std::sqrt(static_cast<double>(n + 1));
          }
          const double deficit = 1.0 - psi.squaredNorm();
          if (deficit > kCoherentTruncationTolerance)
            throw ConfigError("coherent state truncated at cavity_dim " + std::to_string(cavity_dim) +
                              " loses norm " + std::to_string(deficit) + "; increase cavity_dim (default rule gives " +
                              std::to_string(default_coherent_cavity_dim(f.alpha)) + ")");
        } else {
          if (static_cast<int>(f.amplitudes.size()) > cavity_dim)
            throw ConfigError("amplitude vector longer than cavity_dim");
          for (std::size_t k = 0; k < f.amplitudes.size(); ++k) psi(static_cast<int>(k)) = f.amplitudes[k];
          if (psi.squaredNorm() == 0.0) throw ConfigError("amplitude vector is zero");
        }
      },
      field);
  psi.normalize();
  return psi;
}

/// |field><field| (x) |atom><atom|.
inline DensityMatrix initial_state(const FieldSpec& field, AtomLevel atom, const HilbertLayout& layout) {
  const Eigen::VectorXcd cav = field_amplitudes(field, layout.cavity_dim);
  Eigen::VectorXcd at = Eigen::VectorXcd::Zero(kAtomDim);
  at(static_cast<int>(atom)) = 1.0;
  Eigen::VectorXcd psi(layout.joint_dim());
  for (int n = 0; n < layout.cavity_dim; ++n) psi.segment(n * kAtomDim, kAtomDim) = cav(n) * at;
  return DensityMatrix(psi * psi.adjoint(), true);
}

}  // namespace qpulse
