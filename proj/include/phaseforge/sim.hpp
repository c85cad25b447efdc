#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>

#include "phaseforge/error.hpp"
#include "phaseforge/fringe_stack.hpp"
#include "phaseforge/grid.hpp"
#include "phaseforge/phase.hpp"

namespace phaseforge {

// Synthetic surface. Absolute phase at frequency f is the linear disparity
// model 2*pi*f*(x + kappa*h)/width.
struct SceneSpec {
  Grid<double> height_map;    // mm
  Grid<double> reflectivity;  // [0, 1]
  Grid<double> ambient;       // [0, 1)
  double kappa = 5.0;         // projector pixels per mm
  std::uint64_t seed = 0;

  Eigen::Index width() const { return height_map.cols(); }
  Eigen::Index height() const { return height_map.rows(); }

  void validate() const;
};

// Distribution that random_scene() samples from.
struct ScenePrior {
  int width = 128;
  int height = 128;
  double kappa = 5.0;
  int min_bumps = 3;
  int max_bumps = 8;
  double max_disparity_px = 12.0;  // peak kappa*h before edge tapering
  double texture_fraction = 0.08;  // share of the height range from filtered noise
  double reflectivity_min = 0.3;
  double reflectivity_max = 0.9;
  int max_dark_patches = 3;
  double ambient_max = 0.06;
};

SceneSpec flat_scene(int width, int height, double kappa = 5.0);
SceneSpec random_scene(const ScenePrior& prior, std::uint64_t seed);

/// Absolute phase of the scene at frequency f; throws PhaseOutOfRange if any
/// pixel leaves [0, 2*pi*f).
PhaseMap<double> absolute_phase(const SceneSpec& scene, int f);

/// Deterministic child seed, e.g. per scene or per frequency.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt);

/// Zero-mean unit Gaussian keyed by (seed, n, x, y). Independent of any
/// evaluation order.
double keyed_normal(std::uint64_t seed, std::uint64_t n, std::uint64_t x, std::uint64_t y);

/// Intensity of one phase-shifted frame at a pixel before noise.
inline double ideal_intensity(double Phi, int n, double gamma, double exposure,
                              double ambient, double reflectivity) {
  const double shift = 2.0 * std::numbers::pi * n / 3.0;
  const double projected = std::pow(0.5 + 0.5 * std::cos(Phi - shift), gamma);
  return exposure * (ambient + reflectivity * projected);
}

template <typename Scalar = double>
FringeStack<Scalar> render_stack(const SceneSpec& scene, const AcquisitionSpec& acq) {
  scene.validate();
  acq.validate();
  const PhaseMap<double> Phi = absolute_phase(scene, acq.frequency);
  const Eigen::Index rows = scene.height(), cols = scene.width();

  FringeStack<Scalar> stack;
  stack.acquisition = acq;
  for (int n = 0; n < 3; ++n) {
    Grid<Scalar>& img = stack.images[n];
    img.resize(rows, cols);
    for (Eigen::Index y = 0; y < rows; ++y) {
      for (Eigen::Index x = 0; x < cols; ++x) {
        double v = ideal_intensity(Phi.values(y, x), n, acq.gamma, acq.exposure,
                                   scene.ambient(y, x), scene.reflectivity(y, x));
        if (acq.noise_sigma > 0) {
          v += acq.noise_sigma * keyed_normal(acq.seed, n, x, y);
        }
        if (acq.quantize_bits == 8) {
          v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
        }
        img(y, x) = static_cast<Scalar>(v);
      }
    }
  }
  return stack;
}

}  // namespace phaseforge
