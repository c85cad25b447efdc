#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "phaseforge/dataset.hpp"
#include "phaseforge/nn/checkpoint.hpp"
#include "phaseforge/pud.hpp"

using namespace phaseforge;
namespace fs = std::filesystem;

namespace {

std::uint32_t u32_at(const std::vector<unsigned char>& b, std::size_t off) {
  return b[off] | (b[off + 1] << 8) | (b[off + 2] << 16) | (static_cast<std::uint32_t>(b[off + 3]) << 24);
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("phaseforge_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Pud, HeaderLayout) {
  Grid<double> a(2, 3), b(2, 3);
  a << 1, 2, 3, 4, 5, 6;
  b << -1, -2, -3, -4, -5, -6;
  const std::vector<unsigned char> bytes = encode_pud(make_pud({a, b}, PudType::int32));
  ASSERT_EQ(bytes.size(), 20u + 2 * 6 * 4);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "PUD1");
  EXPECT_EQ(u32_at(bytes, 4), 3u);   // width
  EXPECT_EQ(u32_at(bytes, 8), 2u);   // height
  EXPECT_EQ(u32_at(bytes, 12), 2u);  // channels
  EXPECT_EQ(u32_at(bytes, 16), 1u);  // int32
  // Channel-major, row-major: second sample is row 0, column 1.
  EXPECT_EQ(static_cast<std::int32_t>(u32_at(bytes, 24)), 2);
  EXPECT_EQ(static_cast<std::int32_t>(u32_at(bytes, 20 + 6 * 4)), -1);
}

TEST(Pud, Float32RoundTrip) {
  Grid<double> g(3, 4);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = 0.1 * i - 0.35;
  const fs::path dir = scratch("f32");
  write_pud(dir / "a.pud", make_pud({g}, PudType::float32));
  const PudArray back = read_pud(dir / "a.pud");
  EXPECT_EQ(back.dtype, PudType::float32);
  EXPECT_TRUE((back.channel() == g.cast<float>().cast<double>()).all());
  fs::remove_all(dir);
}

TEST(Pud, IntegerAndMaskRoundTrip) {
  OrderGrid k(2, 2);
  k << 0, 63, -1, 7;
  EXPECT_TRUE((decode_pud(encode_pud(make_pud(k))).int_channel() == k).all());
  Mask m(2, 3);
  m << true, false, true, false, false, true;
  const PudArray pm = decode_pud(encode_pud(make_pud(m)));
  EXPECT_EQ(pm.dtype, PudType::uint8);
  EXPECT_EQ(pm.payload.size(), 6u);
  EXPECT_TRUE((pm.mask_channel() == m).all());
}

TEST(Pud, Uint8Clamps) {
  Grid<double> g(1, 3);
  g << -4, 127.6, 900;
  const PudArray a = make_pud({g}, PudType::uint8);
  EXPECT_EQ(a.payload[0], 0);
  EXPECT_EQ(a.payload[1], 128);
  EXPECT_EQ(a.payload[2], 255);
}

TEST(Pud, RejectsBadInput) {
  std::vector<unsigned char> bytes = encode_pud(make_pud(OrderGrid(OrderGrid::Zero(2, 2))));
  std::vector<unsigned char> truncated(bytes.begin(), bytes.end() - 1);
  EXPECT_THROW(decode_pud(truncated), Error);
  std::vector<unsigned char> magic = bytes;
  magic[3] = '2';
  EXPECT_THROW(decode_pud(magic), Error);
  std::vector<unsigned char> dtype = bytes;
  dtype[16] = 9;
  EXPECT_THROW(decode_pud(dtype), Error);
  try {
    read_pud("/nonexistent/phaseforge.pud");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::Io);
  }
  EXPECT_THROW(make_pud({Grid<double>::Zero(2, 2), Grid<double>::Zero(2, 3)}, PudType::float32), Error);
}

TEST(Puw, ByteLayout) {
  nn::Checkpoint c;
  c.push_back({"ab", {2, 1}, {1.5f, -2.0f}});
  const std::vector<unsigned char> b = nn::encode_checkpoint(c);
  ASSERT_EQ(b.size(), 4u + 4 + 2 + 2 + 1 + 2 * 4 + 2 * 4);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "PUW1");
  EXPECT_EQ(u32_at(b, 4), 1u);
  EXPECT_EQ(b[8], 2);
  EXPECT_EQ(b[9], 0);
  EXPECT_EQ(b[10], 'a');
  EXPECT_EQ(b[11], 'b');
  EXPECT_EQ(b[12], 2);  // rank
  EXPECT_EQ(u32_at(b, 13), 2u);
  EXPECT_EQ(u32_at(b, 17), 1u);
  float first;
  std::memcpy(&first, b.data() + 21, 4);
  EXPECT_EQ(first, 1.5f);
}

TEST(Puw, RoundTripAndErrors) {
  nn::Checkpoint c;
  c.push_back({"meta.f_h", {1}, {8.0f}});
  c.push_back({"w", {2, 2, 1, 1}, {1, 2, 3, 4}});
  const fs::path dir = scratch("puw");
  nn::write_checkpoint(dir / "m.puw", c);
  const nn::Checkpoint back = nn::read_checkpoint(dir / "m.puw");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].name, "w");
  EXPECT_EQ(back[1].shape, (nn::Shape{2, 2, 1, 1}));
  EXPECT_EQ(back[1].values, (std::vector<float>{1, 2, 3, 4}));
  ASSERT_NE(nn::find_entry(back, "meta.f_h"), nullptr);
  EXPECT_EQ(nn::find_entry(back, "nope"), nullptr);

  std::vector<unsigned char> bytes = nn::encode_checkpoint(c);
  bytes.push_back(0);
  EXPECT_THROW(nn::decode_checkpoint(bytes), Error);
  bytes.resize(bytes.size() - 3);
  EXPECT_THROW(nn::decode_checkpoint(bytes), Error);
  try {
    nn::read_checkpoint(dir / "missing.puw");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MissingCheckpoint);
  }
  nn::Checkpoint bad;
  bad.push_back({"x", {3}, {1, 2}});
  EXPECT_THROW(nn::encode_checkpoint(bad), Error);
  fs::remove_all(dir);
}

TEST(Manifest, RoundTrip) {
  const fs::path root = scratch("manifest");
  fs::remove_all(root);
  DatasetConfig cfg;
  cfg.n_scenes = 5;
  cfg.prior.width = 16;
  cfg.prior.height = 8;
  cfg.prior.kappa = 3.25;
  cfg.prior.max_disparity_px = 2;
  cfg.master_seed = 123456789012345ULL;
  cfg.train_fraction = 0.6;
  cfg.modulation_threshold = 0.1;
  AcquisitionSpec lo, hi;
  lo.frequency = 1;
  hi.frequency = 4;
  hi.gamma = 1.2;
  hi.exposure = 0.375;
  hi.noise_sigma = 0.015;
  hi.quantize_bits = 0;
  cfg.acquisitions = {lo, hi};
  generate_dataset(cfg, root);
  const Manifest m = read_manifest(root);
  EXPECT_EQ(m.master_seed, cfg.master_seed);
  EXPECT_EQ(m.prior.width, 16);
  EXPECT_EQ(m.prior.height, 8);
  EXPECT_EQ(m.prior.kappa, 3.25);
  EXPECT_EQ(m.modulation_threshold, 0.1);
  ASSERT_TRUE(m.has_frequency(4));
  EXPECT_FALSE(m.has_frequency(8));
  EXPECT_EQ(m.acquisition(4).gamma, 1.2);
  EXPECT_EQ(m.acquisition(4).exposure, 0.375);
  EXPECT_EQ(m.acquisition(4).noise_sigma, 0.015);
  EXPECT_EQ(m.acquisition(4).quantize_bits, 0);
  ASSERT_EQ(m.scenes.size(), 5u);
  EXPECT_EQ(m.scenes[0].split, "train");
  EXPECT_EQ(m.scenes[4].split, "test");
  EXPECT_EQ(m.scenes[2].seed, scene_seed(cfg.master_seed, 2));
  EXPECT_EQ(manifest_text(cfg).substr(0, 7), "format=");
  try {
    m.acquisition(8);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DatasetMissingFrequency);
  }
  try {
    read_manifest(root / "nothing");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::Io);
  }
  fs::remove_all(root);
}

TEST(Dataset, MissingFrequencyOnLoad) {
  const fs::path root = scratch("missing");
  fs::remove_all(root);
  DatasetConfig cfg;
  cfg.prior.width = cfg.prior.height = 8;
  cfg.prior.max_disparity_px = 1;
  AcquisitionSpec lo, hi;
  hi.frequency = 4;
  cfg.acquisitions = {lo, hi};
  generate_dataset(cfg, root);
  const Manifest m = read_manifest(root);
  try {
    load_scene(root, m, m.scenes[0], 8, 0.08);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DatasetMissingFrequency);
  }
  try {
    load_orders(scene_dir(root, m.scenes[0]), 8);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DatasetMissingFrequency);
  }
  fs::remove_all(root);
}
