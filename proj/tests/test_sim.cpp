#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>

#include "phaseforge/dataset.hpp"
#include "phaseforge/phase.hpp"
#include "phaseforge/pud.hpp"
#include "phaseforge/sim.hpp"

using namespace phaseforge;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

AcquisitionSpec ideal(int f) {
  AcquisitionSpec a;
  a.frequency = f;
  a.quantize_bits = 0;
  return a;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("phaseforge_sim_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<char> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(AbsolutePhase, FlatSceneRamp) {
  const SceneSpec s = flat_scene(64, 4, 3.0);
  const PhaseMap<double> Phi = absolute_phase(s, 1);
  EXPECT_EQ(Phi.kind, PhaseKind::absolute);
  EXPECT_EQ(Phi.frequency, 1);
  for (int x = 0; x < 64; ++x) EXPECT_NEAR(Phi.values(2, x), 2 * kPi * x / 64, 1e-15);
  EXPECT_NEAR(Phi.values(0, 63), 2 * kPi * 63 / 64, 1e-15);
}

TEST(AbsolutePhase, ScalesWithFrequency) {
  const SceneSpec s = flat_scene(64, 2);
  EXPECT_NEAR(absolute_phase(s, 8).values(1, 32), 8 * kPi, 1e-12);
}

TEST(AbsolutePhase, HeightShiftsDisparity) {
  SceneSpec s = flat_scene(100, 1, 5.0);
  s.height_map(0, 0) = 2.0;
  EXPECT_NEAR(absolute_phase(s, 1).values(0, 0), 0.6283, 1e-4);
  EXPECT_NEAR(absolute_phase(s, 1).values(0, 0), 2 * kPi * 10 / 100, 1e-15);
}

TEST(AbsolutePhase, ConstantHeightOffsetProperty) {
  const SceneSpec base = random_scene(ScenePrior{}, 17);
  SceneSpec raised = base;
  const double dh = 0.1;  // kappa*dh stays under one pixel at the right edge
  raised.height_map += dh;
  for (int f : {1, 8, 32}) {
    Grid<double> diff = absolute_phase(raised, f).values - absolute_phase(base, f).values;
    const double expected = 2 * kPi * f * base.kappa * dh / base.width();
    EXPECT_LT((diff - expected).abs().maxCoeff(), 1e-9) << "f=" << f;
  }
}

TEST(AbsolutePhase, OutOfRangeThrows) {
  SceneSpec s = flat_scene(16, 1, 5.0);
  s.height_map(0, 15) = 1.0;  // x + kappa*h = 20 >= width
  try {
    absolute_phase(s, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::PhaseOutOfRange);
  }
  s.height_map(0, 15) = 0.0;
  s.height_map(0, 0) = -0.1;
  EXPECT_THROW(absolute_phase(s, 1), Error);
}

TEST(RenderStack, IdealExamples) {
  // x = 0 gives Phi = 0; x = W/4 gives Phi = pi/2 at f = 1.
  const SceneSpec s = flat_scene(64, 1);
  const FringeStack<double> st = render_stack(s, ideal(1));
  EXPECT_NEAR(st.images[0](0, 0), 1.0, 1e-15);
  EXPECT_NEAR(st.images[1](0, 0), 0.25, 1e-15);
  EXPECT_NEAR(st.images[2](0, 0), 0.25, 1e-15);
  EXPECT_NEAR(st.images[0](0, 16), 0.5, 1e-12);
  EXPECT_NEAR(st.images[1](0, 16), 0.9330, 1e-4);
  EXPECT_NEAR(st.images[2](0, 16), 0.0670, 1e-4);

  AcquisitionSpec g2 = ideal(1);
  g2.gamma = 2.0;
  const FringeStack<double> sq = render_stack(s, g2);
  EXPECT_NEAR(sq.images[0](0, 0), 1.0, 1e-15);
  EXPECT_NEAR(sq.images[1](0, 0), 0.0625, 1e-15);
  EXPECT_NEAR(sq.images[2](0, 0), 0.0625, 1e-15);
}

TEST(RenderStack, MatchesFormulaOnRandomScene) {
  const SceneSpec s = random_scene(ScenePrior{}, 23);
  AcquisitionSpec a = ideal(16);
  a.gamma = 1.3;
  a.exposure = 0.5;
  const FringeStack<double> st = render_stack(s, a);
  const PhaseMap<double> Phi = absolute_phase(s, 16);
  for (int n = 0; n < 3; ++n) {
    const Grid<double> expected =
        0.5 * (s.ambient + s.reflectivity * (0.5 + 0.5 * (Phi.values - 2 * kPi * n / 3).cos()).pow(1.3));
    EXPECT_LT((st.images[n] - expected).abs().maxCoeff(), 1e-12);
  }
}

TEST(RenderStack, IdealRetrievalIsExact) {
  const SceneSpec s = random_scene(ScenePrior{}, 101);
  for (int f : {1, 8, 64}) {
    SceneSpec unit = s;
    unit.ambient.setZero();
    unit.reflectivity.setOnes();
    const PhaseMap<double> phi = retrieve_phase(render_stack(unit, ideal(f)));
    const Grid<double> ref = wrap(absolute_phase(unit, f).values);
    Grid<double> d = (phi.values - ref).abs();
    d = d.min(2 * kPi - d);  // pi and -pi describe the same angle
    EXPECT_LT(d.maxCoeff(), 1e-9) << "f=" << f;
  }
}

TEST(RenderStack, LinearInExposure) {
  const SceneSpec s = random_scene(ScenePrior{}, 5);
  AcquisitionSpec a = ideal(8), b = ideal(8);
  b.exposure = 0.375;
  const FringeStack<double> full = render_stack(s, a), dim = render_stack(s, b);
  for (int n = 0; n < 3; ++n) EXPECT_LT((dim.images[n] - 0.375 * full.images[n]).abs().maxCoeff(), 1e-15);
}

TEST(RenderStack, QuantisedTo8Bits) {
  const SceneSpec s = random_scene(ScenePrior{}, 8);
  AcquisitionSpec a;
  a.frequency = 8;
  a.noise_sigma = 0.05;
  a.seed = 4;
  const FringeStack<double> st = render_stack(s, a);
  for (const auto& img : st.images) {
    EXPECT_GE(img.minCoeff(), 0.0);
    EXPECT_LE(img.maxCoeff(), 1.0);
    const Grid<double> codes = img * 255.0;
    EXPECT_LT((codes - codes.round()).abs().maxCoeff(), 1e-9);
  }
}

TEST(RenderStack, NoiseStatistics) {
  const SceneSpec s = flat_scene(256, 256);
  AcquisitionSpec clean = ideal(4), noisy = ideal(4);
  noisy.noise_sigma = 0.02;
  noisy.seed = 99;
  const Grid<double> d = render_stack(s, noisy).images[1] - render_stack(s, clean).images[1];
  const double mean = d.mean();
  const double sd = std::sqrt((d - mean).square().mean());
  EXPECT_NEAR(mean, 0.0, 4 * 0.02 / 256);
  EXPECT_NEAR(sd, 0.02, 0.02 * 0.03);
}

TEST(RenderStack, DeterministicAndSeedSensitive) {
  const SceneSpec s = random_scene(ScenePrior{}, 2);
  AcquisitionSpec a;
  a.frequency = 32;
  a.noise_sigma = 0.01;
  a.seed = 1234;
  const FringeStack<double> x = render_stack(s, a), y = render_stack(s, a);
  for (int n = 0; n < 3; ++n) EXPECT_TRUE((x.images[n] == y.images[n]).all());
  a.seed = 1235;
  const FringeStack<double> z = render_stack(s, a);
  EXPECT_FALSE((x.images[0] == z.images[0]).all());
}

TEST(RenderStack, NoiseKeyedPerPixel) {
  // A sub-image rendered alone sees the same draws as the full image.
  EXPECT_EQ(keyed_normal(5, 1, 10, 20), keyed_normal(5, 1, 10, 20));
  EXPECT_NE(keyed_normal(5, 1, 10, 20), keyed_normal(5, 2, 10, 20));
  EXPECT_NE(keyed_normal(5, 1, 10, 20), keyed_normal(5, 1, 20, 10));
  EXPECT_NE(keyed_normal(5, 1, 10, 20), keyed_normal(6, 1, 10, 20));
  double sum = 0, sq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double v = keyed_normal(77, 0, static_cast<std::uint64_t>(i % 500), static_cast<std::uint64_t>(i / 500));
    sum += v;
    sq += v * v;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.02);
}

TEST(RenderStack, RejectsBadAcquisition) {
  const SceneSpec s = flat_scene(8, 8);
  AcquisitionSpec a;
  a.exposure = 0;
  EXPECT_THROW(render_stack(s, a), Error);
  a = AcquisitionSpec{};
  a.quantize_bits = 10;
  EXPECT_THROW(render_stack(s, a), Error);
  a = AcquisitionSpec{};
  a.gamma = -1;
  EXPECT_THROW(render_stack(s, a), Error);
}

TEST(RandomScene, Invariants) {
  ScenePrior prior;
  int with_dark = 0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const SceneSpec s = random_scene(prior, seed);
    ASSERT_NO_THROW(s.validate());
    EXPECT_EQ(s.width(), prior.width);
    EXPECT_EQ(s.height(), prior.height);
    EXPECT_NO_THROW(absolute_phase(s, 64));
    EXPECT_GE(s.ambient.minCoeff(), 0.0);
    EXPECT_LE(s.ambient.maxCoeff(), prior.ambient_max + 1e-12);
    EXPECT_LE(s.reflectivity.maxCoeff(), prior.reflectivity_max + 1e-12);
    if ((s.reflectivity < 0.05).any()) ++with_dark;
    EXPECT_GT(s.height_map.maxCoeff() - s.height_map.minCoeff(), 0.0);
  }
  EXPECT_GT(with_dark, 10);
}

TEST(RandomScene, Deterministic) {
  const SceneSpec a = random_scene(ScenePrior{}, 42), b = random_scene(ScenePrior{}, 42);
  EXPECT_TRUE((a.height_map == b.height_map).all());
  EXPECT_TRUE((a.reflectivity == b.reflectivity).all());
  EXPECT_TRUE((a.ambient == b.ambient).all());
  const SceneSpec c = random_scene(ScenePrior{}, 43);
  EXPECT_FALSE((a.height_map == c.height_map).all());
}

TEST(GenerateDataset, OneSceneTwoFrequencies) {
  const fs::path root = scratch("one");
  DatasetConfig cfg;
  cfg.n_scenes = 1;
  cfg.prior.width = cfg.prior.height = 32;
  cfg.acquisitions = {ideal(1), ideal(8)};
  const DatasetSummary s = generate_dataset(cfg, root);
  EXPECT_EQ(s.n_train + s.n_test, 1);
  const Manifest m = read_manifest(root);
  ASSERT_EQ(m.scenes.size(), 1u);
  const fs::path dir = scene_dir(root, m.scenes[0]);
  int intensity = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().filename().string().rfind("I_f", 0) == 0) ++intensity;
  }
  EXPECT_EQ(intensity, 6);
  for (const char* name : {"phi_abs_f1.pud", "phi_abs_f8.pud", "k_f1.pud", "k_f8.pud", "mask.pud"}) {
    EXPECT_TRUE(fs::exists(dir / name)) << name;
  }
  const PhaseMap<double> truth = absolute_phase(random_scene(m.prior, m.scenes[0].seed), 8);
  EXPECT_TRUE((load_orders(dir, 8) == fringe_orders(truth)).all());
  EXPECT_LT((load_absolute_phase(dir, 8).values - truth.values).abs().maxCoeff(), 1e-5);
  fs::remove_all(root);
}

TEST(GenerateDataset, SplitCounts) {
  const fs::path root = scratch("split");
  DatasetConfig cfg;
  cfg.n_scenes = 200;
  cfg.prior.width = cfg.prior.height = 8;
  cfg.prior.max_disparity_px = 1;
  cfg.acquisitions = {ideal(1), ideal(8)};
  const DatasetSummary s = generate_dataset(cfg, root);
  EXPECT_EQ(s.n_train, 160);
  EXPECT_EQ(s.n_test, 40);
  const Manifest m = read_manifest(root);
  int train = 0;
  for (const SceneRecord& r : m.scenes) train += r.split == "train";
  EXPECT_EQ(train, 160);
  EXPECT_EQ(m.scenes.size(), 200u);
  fs::remove_all(root);
}

TEST(GenerateDataset, BitIdenticalForSameSeed) {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  DatasetConfig cfg;
  cfg.n_scenes = 3;
  cfg.prior.width = cfg.prior.height = 32;
  cfg.master_seed = 77;
  AcquisitionSpec lo, hi;
  lo.frequency = 1;
  hi.frequency = 16;
  lo.noise_sigma = hi.noise_sigma = 0.01;
  cfg.acquisitions = {lo, hi};
  generate_dataset(cfg, a);
  cfg.threads = 3;
  generate_dataset(cfg, b);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), a);
    ASSERT_TRUE(fs::exists(b / rel)) << rel;
    EXPECT_EQ(file_bytes(e.path()), file_bytes(b / rel)) << rel;
    ++files;
  }
  EXPECT_EQ(files, 1u + 3u * (6 + 4 + 1));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(GenerateDataset, ConfigErrors) {
  const fs::path root = scratch("bad");
  DatasetConfig cfg;
  cfg.prior.width = cfg.prior.height = 8;
  cfg.acquisitions = {ideal(8)};
  try {
    generate_dataset(cfg, root);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::Config);
  }
  cfg.acquisitions = {ideal(1)};
  EXPECT_THROW(generate_dataset(cfg, root), Error);
  cfg.acquisitions = {ideal(1), ideal(8)};
  cfg.n_scenes = 0;
  EXPECT_THROW(generate_dataset(cfg, root), Error);
  fs::remove_all(root);
}

TEST(GenerateDataset, RefusesOverwriteWithoutForce) {
  const fs::path root = scratch("force");
  DatasetConfig cfg;
  cfg.prior.width = cfg.prior.height = 8;
  cfg.prior.max_disparity_px = 1;
  cfg.acquisitions = {ideal(1), ideal(4)};
  generate_dataset(cfg, root);
  try {
    generate_dataset(cfg, root);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::Io);
  }
  cfg.force = true;
  EXPECT_NO_THROW(generate_dataset(cfg, root));
  fs::remove_all(root);
}

TEST(GenerateDataset, StoredStacksReproduceRendering) {
  const fs::path root = scratch("reload");
  DatasetConfig cfg;
  cfg.n_scenes = 2;
  cfg.prior.width = cfg.prior.height = 32;
  cfg.master_seed = 9;
  AcquisitionSpec lo, hi;
  lo.frequency = 1;
  hi.frequency = 8;
  lo.noise_sigma = hi.noise_sigma = 0.02;
  cfg.acquisitions = {lo, hi};
  generate_dataset(cfg, root);
  const Manifest m = read_manifest(root);
  for (const SceneRecord& r : m.scenes) {
    const SceneSpec scene = random_scene(m.prior, r.seed);
    const AcquisitionSpec acq = scene_acquisition(m.acquisition(8), r.seed);
    const FringeStack<double> fresh = render_stack(scene, acq);
    const FringeStack<double> stored = load_stack(scene_dir(root, r), acq);
    for (int n = 0; n < 3; ++n) EXPECT_LT((fresh.images[n] - stored.images[n]).abs().maxCoeff(), 1e-12);
  }
  fs::remove_all(root);
}
