#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "phaseforge/grid.hpp"

namespace phaseforge {

// PUD1 array container: "PUD1", u32 width, u32 height, u32 channels,
// u32 dtype, then channel-major row-major little-endian samples.
enum class PudType : std::uint32_t { float32 = 0, int32 = 1, uint8 = 2 };

struct PudArray {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t channels = 0;
  PudType dtype = PudType::float32;
  std::vector<unsigned char> payload;

  std::size_t element_size() const;
  // Raw sample values; no scaling is applied to uint8 data.
  Grid<double> channel(std::uint32_t c = 0) const;
  OrderGrid int_channel(std::uint32_t c = 0) const;
  Mask mask_channel(std::uint32_t c = 0) const;
};

PudArray make_pud(const std::vector<Grid<double>>& channels, PudType dtype);
PudArray make_pud(const OrderGrid& values);
PudArray make_pud(const Mask& values);

void write_pud(const std::filesystem::path& path, const PudArray& array);
PudArray read_pud(const std::filesystem::path& path);

std::vector<unsigned char> encode_pud(const PudArray& array);
PudArray decode_pud(const std::vector<unsigned char>& bytes);

}  // namespace phaseforge
