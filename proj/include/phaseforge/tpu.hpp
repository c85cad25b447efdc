#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>

#include "phaseforge/error.hpp"
#include "phaseforge/grid.hpp"
#include "phaseforge/phase.hpp"

namespace phaseforge {

struct FringeOrderMap {
  OrderGrid k;
  int frequency = 1;
  Mask mask;
};

// Largest wrapped-phase error for which scaled rounding is still exact.
struct ErrorBudget {
  int f_h = 1;
  int f_l = 1;
  double dphi_max = 0;
  double dk_max = 0;  // order error reached at dphi_max, 0.5 by construction
};

template <typename Scalar>
struct UnwrapResult {
  PhaseMap<Scalar> absolute;
  FringeOrderMap orders;
  std::size_t clamped = 0;  // pixels whose rounded order left [0, f_h - 1]
};

/// Worst-case order error when both phases carry errors up to dphi.
inline double max_order_error(double dphi, int f_h, int f_l) {
  return dphi * (f_h + f_l) / (2 * std::numbers::pi * f_l);
}

inline ErrorBudget error_budget(int f_h, int f_l) {
  if (f_l < 1 || f_h < f_l) {
    throw Error(Errc::FrequencyOrder, "need f_h >= f_l >= 1");
  }
  ErrorBudget b{f_h, f_l, std::numbers::pi * f_l / (f_h + f_l), 0};
  b.dk_max = max_order_error(b.dphi_max, f_h, f_l);
  return b;
}

inline double predicted_dk(double dphi_l, double dphi_h, int f_h, int f_l) {
  return (static_cast<double>(f_h) / f_l * dphi_l - dphi_h) / (2 * std::numbers::pi);
}

inline bool order_is_safe(double dk) { return std::abs(dk) < 0.5; }

namespace detail {

// Scaled rounding with orders clamped into [0, k_max].
template <typename Scalar>
UnwrapResult<Scalar> scaled_rounding(const PhaseMap<Scalar>& Phi_l, const PhaseMap<Scalar>& phi_h,
                                     const std::optional<Mask>& mask, int k_max) {
  if (!same_shape(Phi_l.values, phi_h.values)) {
    throw Error(Errc::DimensionMismatch, "low and high phase maps differ in size");
  }
  if (mask && !same_shape(*mask, phi_h.values)) {
    throw Error(Errc::DimensionMismatch, "mask differs in size from the phase maps");
  }
  const int f_l = Phi_l.frequency, f_h = phi_h.frequency;
  if (f_l < 1 || f_h < f_l) {
    throw Error(Errc::FrequencyOrder, "need f_h >= f_l >= 1");
  }
  constexpr Scalar two_pi = 2 * std::numbers::pi_v<Scalar>;
  const Scalar ratio = static_cast<Scalar>(f_h) / static_cast<Scalar>(f_l);

  UnwrapResult<Scalar> out;
  out.absolute = {Grid<Scalar>(phi_h.values.rows(), phi_h.values.cols()), PhaseKind::absolute, f_h};
  out.orders.frequency = f_h;
  out.orders.k.resize(phi_h.values.rows(), phi_h.values.cols());
  out.orders.mask = mask ? *mask : Mask::Constant(phi_h.values.rows(), phi_h.values.cols(), true);

  for (Eigen::Index i = 0; i < phi_h.values.size(); ++i) {
    const Scalar phi = phi_h.values.data()[i];
    const Scalar raw = std::round((ratio * Phi_l.values.data()[i] - phi) / two_pi);
    const Scalar clamped = std::clamp(raw, Scalar(0), static_cast<Scalar>(k_max));
    if (clamped != raw && out.orders.mask.data()[i]) ++out.clamped;
    const auto k = static_cast<std::int32_t>(clamped);
    out.orders.k.data()[i] = k;
    out.absolute.values.data()[i] = phi + two_pi * k;
  }
  return out;
}

}  // namespace detail

/// Scaled-rounding temporal unwrapping of a wrapped phase against a coarser
/// absolute phase. Rounds half away from zero, then clamps into [0, f_h - 1].
template <typename Scalar>
UnwrapResult<Scalar> unwrap_two_freq(const PhaseMap<Scalar>& Phi_l, const PhaseMap<Scalar>& phi_h,
                                     std::optional<Mask> mask = std::nullopt) {
  return detail::scaled_rounding(Phi_l, phi_h, mask, phi_h.frequency - 1);
}

/// Three-frequency ladder: unit -> mid -> high.
template <typename Scalar>
UnwrapResult<Scalar> unwrap_hierarchical(const PhaseMap<Scalar>& Phi_1, const PhaseMap<Scalar>& phi_mid,
                                         const PhaseMap<Scalar>& phi_h,
                                         std::optional<Mask> mask = std::nullopt) {
  if (phi_mid.frequency > phi_h.frequency || phi_mid.frequency < Phi_1.frequency) {
    throw Error(Errc::FrequencyOrder, "need f_1 <= f_mid <= f_h");
  }
  // mid orders may reach f_mid on the last half period
  UnwrapResult<Scalar> mid = detail::scaled_rounding(Phi_1, phi_mid, mask, phi_mid.frequency);
  UnwrapResult<Scalar> high = unwrap_two_freq(mid.absolute, phi_h, mask);
  high.clamped += mid.clamped;
  return high;
}

/// One pass of 3x3 majority voting over masked neighbours (centre excluded).
/// A pixel takes the neighbourhood's majority order when at least five
/// neighbours agree on it.
inline FringeOrderMap compensate_orders(const FringeOrderMap& in) {
  if (!same_shape(in.k, in.mask)) {
    throw Error(Errc::DimensionMismatch, "order map and mask differ in size");
  }
  constexpr int kMinVotes = 5;
  FringeOrderMap out = in;
  const Eigen::Index rows = in.k.rows(), cols = in.k.cols();
  std::array<std::int32_t, 8> values{};
  std::array<int, 8> counts{};
  for (Eigen::Index y = 0; y < rows; ++y) {
    for (Eigen::Index x = 0; x < cols; ++x) {
      if (!in.mask(y, x)) continue;
      int distinct = 0;
      for (Eigen::Index dy = -1; dy <= 1; ++dy) {
        for (Eigen::Index dx = -1; dx <= 1; ++dx) {
          const Eigen::Index yy = y + dy, xx = x + dx;
          if ((dy == 0 && dx == 0) || yy < 0 || xx < 0 || yy >= rows || xx >= cols ||
              !in.mask(yy, xx)) {
            continue;
          }
          const std::int32_t v = in.k(yy, xx);
          int j = 0;
          while (j < distinct && values[j] != v) ++j;
          if (j == distinct) {
            values[distinct] = v;
            counts[distinct++] = 0;
          }
          ++counts[j];
        }
      }
      for (int j = 0; j < distinct; ++j) {
        if (counts[j] >= kMinVotes) out.k(y, x) = values[j];
      }
    }
  }
  return out;
}

}  // namespace phaseforge
