#pragma once

#include <concepts>
#include <cmath>
#include <numbers>
#include <string>

#include "phaseforge/error.hpp"
#include "phaseforge/fringe_stack.hpp"
#include "phaseforge/grid.hpp"

namespace phaseforge {

enum class PhaseKind { wrapped, absolute };

template <typename Scalar>
struct PhaseMap {
  Grid<Scalar> values;
  PhaseKind kind = PhaseKind::wrapped;
  int frequency = 1;
};

template <typename Scalar>
struct ModulationMap {
  Grid<Scalar> average;     // A
  Grid<Scalar> modulation;  // B
  Mask mask;                // B >= threshold
};

inline constexpr double kDefaultModulationThreshold = 0.08;

/// Folds a phase into (-pi, pi]. The result differs from the input by an
/// integer multiple of 2*pi.
template <std::floating_point Scalar>
Scalar wrap(Scalar phi) {
  constexpr Scalar pi = std::numbers::pi_v<Scalar>;
  constexpr Scalar two_pi = 2 * pi;
  Scalar w = phi - two_pi * std::ceil((phi - pi) / two_pi);
  // Rounding can land one ulp outside the half-open interval.
  if (w <= -pi) w += two_pi;
  if (w > pi) w -= two_pi;
  return w;
}

template <typename Derived>
auto wrap(const Eigen::ArrayBase<Derived>& phi) {
  using Scalar = typename Derived::Scalar;
  return phi.unaryExpr([](Scalar v) { return wrap(v); });
}

/// Fringe order k with Phi = wrap(Phi) + 2*pi*k. For Phi in [0, 2*pi*f) this
/// is in [0, f]; the value f only occurs on the last half period.
template <std::floating_point Scalar>
int fringe_order_of(Scalar Phi, int f) {
  constexpr Scalar pi = std::numbers::pi_v<Scalar>;
  if (!(Phi >= 0 && Phi < 2 * pi * f)) {
    throw Error(Errc::OutOfRange,
                "absolute phase " + std::to_string(static_cast<double>(Phi)) +
                    " outside [0, 2*pi*" + std::to_string(f) + ")");
  }
  return static_cast<int>(std::ceil((Phi - pi) / (2 * pi)));
}

template <typename Scalar>
OrderGrid fringe_orders(const PhaseMap<Scalar>& absolute) {
  OrderGrid k(absolute.values.rows(), absolute.values.cols());
  for (Eigen::Index i = 0; i < k.size(); ++i) {
    k.data()[i] = fringe_order_of(absolute.values.data()[i], absolute.frequency);
  }
  return k;
}

namespace detail {

template <typename Scalar>
void check_stack(const FringeStack<Scalar>& stack) {
  if (!same_shape(stack.images[0], stack.images[1]) ||
      !same_shape(stack.images[0], stack.images[2]) || stack.images[0].size() == 0) {
    throw Error(Errc::DimensionMismatch, "fringe stack images must share non-empty dimensions");
  }
}

}  // namespace detail

/// Least-squares 3-step retrieval with quadrant resolution; pixels without
/// any fringe signal come out as 0.
template <typename Scalar>
PhaseMap<Scalar> retrieve_phase(const FringeStack<Scalar>& stack) {
  detail::check_stack(stack);
  constexpr Scalar pi = std::numbers::pi_v<Scalar>;
  const Scalar sqrt3 = std::sqrt(Scalar(3));
  const auto& [i0, i1, i2] = stack.images;

  Grid<Scalar> num = sqrt3 * (i1 - i2);
  Grid<Scalar> den = 2 * i0 - i1 - i2;
  PhaseMap<Scalar> out{Grid<Scalar>(num.rows(), num.cols()), PhaseKind::wrapped,
                       stack.acquisition.frequency};
  out.values = num.binaryExpr(den, [](Scalar y, Scalar x) {
    const Scalar phi = std::atan2(y, x);
    return phi <= -pi ? pi : phi;
  });
  return out;
}

template <typename Scalar>
ModulationMap<Scalar> modulation(const FringeStack<Scalar>& stack,
                                 Scalar threshold = Scalar(kDefaultModulationThreshold)) {
  detail::check_stack(stack);
  const auto& [i0, i1, i2] = stack.images;
  ModulationMap<Scalar> out;
  out.average = (i0 + i1 + i2) / 3;
  out.modulation = (3 * (i1 - i2).square() + (2 * i0 - i1 - i2).square()).sqrt() / 3;
  out.mask = out.modulation >= threshold;
  return out;
}

/// Unit-frequency wrapped phase re-expressed as an absolute phase in [0, 2*pi).
template <typename Scalar>
PhaseMap<Scalar> unit_absolute(const PhaseMap<Scalar>& wrapped) {
  if (wrapped.frequency != 1) {
    throw Error(Errc::FrequencyMismatch, "unit_absolute needs a unit-frequency phase");
  }
  constexpr Scalar two_pi = 2 * std::numbers::pi_v<Scalar>;
  PhaseMap<Scalar> out{wrapped.values, PhaseKind::absolute, 1};
  out.values = wrapped.values.unaryExpr([](Scalar v) {
    Scalar a = v < 0 ? v + two_pi : v;
    return a >= two_pi ? Scalar(0) : a;
  });
  return out;
}

}  // namespace phaseforge
