#pragma once

#include <array>
#include <cstdint>

#include "phaseforge/grid.hpp"

namespace phaseforge {

// Camera/projector settings for one 3-step pattern set.
struct AcquisitionSpec {
  int frequency = 1;          // fringe periods across the image width
  double gamma = 1.0;         // projector nonlinearity exponent
  double exposure = 1.0;      // relative exposure, (0, 1]
  double noise_sigma = 0.0;   // sensor noise std in normalized intensity
  int quantize_bits = 8;      // 0 = none, 8 = 8-bit camera
  std::uint64_t seed = 0;

  void validate() const;
};

template <typename Scalar>
struct FringeStack {
  std::array<Grid<Scalar>, 3> images;
  AcquisitionSpec acquisition;

  Eigen::Index rows() const { return images[0].rows(); }
  Eigen::Index cols() const { return images[0].cols(); }
};

}  // namespace phaseforge
