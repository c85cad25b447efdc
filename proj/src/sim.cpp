#include "phaseforge/sim.hpp"

#include <algorithm>
#include <random>
#include <string>
#include <vector>

namespace phaseforge {

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Separable Gaussian blur with edge clamping.
Grid<double> blur(const Grid<double>& in, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
  std::vector<double> taps(2 * radius + 1);
  double norm = 0;
  for (int i = -radius; i <= radius; ++i) {
    taps[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    norm += taps[i + radius];
  }
  for (double& t : taps) t /= norm;

  const Eigen::Index rows = in.rows(), cols = in.cols();
  Grid<double> tmp = Grid<double>::Zero(rows, cols);
  Grid<double> out = Grid<double>::Zero(rows, cols);
  for (Eigen::Index y = 0; y < rows; ++y) {
    for (Eigen::Index x = 0; x < cols; ++x) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i) {
        acc += taps[i + radius] * in(y, std::clamp<Eigen::Index>(x + i, 0, cols - 1));
      }
      tmp(y, x) = acc;
    }
  }
  for (Eigen::Index y = 0; y < rows; ++y) {
    for (Eigen::Index x = 0; x < cols; ++x) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i) {
        acc += taps[i + radius] * tmp(std::clamp<Eigen::Index>(y + i, 0, rows - 1), x);
      }
      out(y, x) = acc;
    }
  }
  return out;
}

// Low-pass filtered uniform noise rescaled to [0, 1].
Grid<double> smooth_field(int rows, int cols, double sigma, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Grid<double> noise(rows, cols);
  for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = u(rng);
  Grid<double> f = blur(noise, sigma);
  const double lo = f.minCoeff(), hi = f.maxCoeff();
  return hi > lo ? Grid<double>((f - lo) / (hi - lo)) : Grid<double>::Zero(rows, cols);
}

}  // namespace

void AcquisitionSpec::validate() const {
  if (frequency < 1) throw Error(Errc::Config, "frequency must be >= 1");
  if (!(gamma > 0)) throw Error(Errc::Config, "gamma must be > 0");
  if (!(exposure > 0 && exposure <= 1)) throw Error(Errc::Config, "exposure must be in (0, 1]");
  if (!(noise_sigma >= 0)) throw Error(Errc::Config, "noise_sigma must be >= 0");
  if (quantize_bits != 0 && quantize_bits != 8) {
    throw Error(Errc::Config, "quantize_bits must be 0 or 8");
  }
}

void SceneSpec::validate() const {
  if (height_map.size() == 0 || !same_shape(height_map, reflectivity) ||
      !same_shape(height_map, ambient)) {
    throw Error(Errc::DimensionMismatch, "scene grids must share non-empty dimensions");
  }
  if (!height_map.allFinite()) throw Error(Errc::Config, "height map must be finite");
  if ((reflectivity < 0).any() || (reflectivity > 1).any()) {
    throw Error(Errc::Config, "reflectivity must lie in [0, 1]");
  }
  if ((ambient < 0).any() || (ambient >= 1).any()) {
    throw Error(Errc::Config, "ambient must lie in [0, 1)");
  }
}

SceneSpec flat_scene(int width, int height, double kappa) {
  SceneSpec s;
  s.height_map = Grid<double>::Zero(height, width);
  s.reflectivity = Grid<double>::Ones(height, width);
  s.ambient = Grid<double>::Zero(height, width);
  s.kappa = kappa;
  return s;
}

SceneSpec random_scene(const ScenePrior& prior, std::uint64_t seed) {
  const int W = prior.width, H = prior.height;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  Grid<double> h = Grid<double>::Zero(H, W);
  const int bumps = std::uniform_int_distribution<int>(prior.min_bumps, prior.max_bumps)(rng);
  for (int b = 0; b < bumps; ++b) {
    const double amp = uniform(0.3, 1.0);
    const double cx = uniform(0, W), cy = uniform(0, H);
    const double sx = uniform(W / 16.0, W / 4.0), sy = uniform(H / 16.0, H / 4.0);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const double dx = (x - cx) / sx, dy = (y - cy) / sy;
        h(y, x) += amp * std::exp(-0.5 * (dx * dx + dy * dy));
      }
    }
  }
  const double span = std::max(h.maxCoeff() - h.minCoeff(), 1e-12);
  h = (h - h.minCoeff()) / span;
  h += prior.texture_fraction * smooth_field(H, W, 3.0, rng);
  h /= h.maxCoeff();

  // Disparity shrinks toward the right edge so x + kappa*h stays below W.
  const double dmax = prior.max_disparity_px;
  SceneSpec scene;
  scene.kappa = prior.kappa;
  scene.seed = seed;
  scene.height_map.resize(H, W);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double taper = dmax > 0 ? std::min(1.0, (W - 1 - x) / (2 * dmax)) : 0.0;
      scene.height_map(y, x) = dmax * h(y, x) * taper / prior.kappa;
    }
  }

  scene.reflectivity = prior.reflectivity_min +
                       (prior.reflectivity_max - prior.reflectivity_min) *
                           smooth_field(H, W, W / 16.0, rng);
  const int patches = std::uniform_int_distribution<int>(0, prior.max_dark_patches)(rng);
  for (int p = 0; p < patches; ++p) {
    const double cx = uniform(0, W), cy = uniform(0, H);
    const double rx = uniform(W / 32.0, W / 10.0), ry = uniform(H / 32.0, H / 10.0);
    const double dark = uniform(0.0, 0.05);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const double dx = (x - cx) / rx, dy = (y - cy) / ry;
        if (dx * dx + dy * dy <= 1.0) scene.reflectivity(y, x) = dark;
      }
    }
  }

  const double base = uniform(0.0, prior.ambient_max);
  scene.ambient = base * (0.8 + 0.2 * smooth_field(H, W, W / 8.0, rng));
  return scene;
}

PhaseMap<double> absolute_phase(const SceneSpec& scene, int f) {
  scene.validate();
  if (f < 1) throw Error(Errc::Config, "frequency must be >= 1");
  const Eigen::Index rows = scene.height(), cols = scene.width();
  const double upper = 2 * std::numbers::pi * f;
  PhaseMap<double> out{Grid<double>(rows, cols), PhaseKind::absolute, f};
  for (Eigen::Index y = 0; y < rows; ++y) {
    for (Eigen::Index x = 0; x < cols; ++x) {
      const double Phi = upper * (x + scene.kappa * scene.height_map(y, x)) / cols;
      if (!(Phi >= 0 && Phi < upper)) {
        throw Error(Errc::PhaseOutOfRange, "pixel (" + std::to_string(x) + ", " +
                                               std::to_string(y) + ") has phase " +
                                               std::to_string(Phi));
      }
      out.values(y, x) = Phi;
    }
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
  return splitmix64(splitmix64(base) ^ splitmix64(salt + 0x632be59bd9b4e019ULL));
}

double keyed_normal(std::uint64_t seed, std::uint64_t n, std::uint64_t x, std::uint64_t y) {
  std::uint64_t key = splitmix64(seed);
  key = splitmix64(key ^ n);
  key = splitmix64(key ^ x);
  key = splitmix64(key ^ y);
  const std::uint64_t a = splitmix64(key);
  const std::uint64_t b = splitmix64(a);
  // 53-bit uniforms; u1 in (0, 1] keeps the log finite.
  const double u1 = (static_cast<double>(a >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace phaseforge
