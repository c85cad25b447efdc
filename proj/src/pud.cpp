#include "phaseforge/pud.hpp"

#include <bit>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "phaseforge/error.hpp"

namespace phaseforge {

static_assert(std::endian::native == std::endian::little, "PUD1 I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'P', 'U', 'D', '1'};

template <typename T>
void put(std::vector<unsigned char>& out, T value) {
  unsigned char raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

template <typename T>
T get(const std::vector<unsigned char>& in, std::size_t offset) {
  T value;
  std::memcpy(&value, in.data() + offset, sizeof(T));
  return value;
}

template <typename T>
T sample(const PudArray& a, std::size_t index) {
  T value;
  std::memcpy(&value, a.payload.data() + index * sizeof(T), sizeof(T));
  return value;
}

void check_channel(const PudArray& a, std::uint32_t c) {
  if (c >= a.channels) throw Error(Errc::OutOfRange, "PUD1 channel index out of range");
}

}  // namespace

std::size_t PudArray::element_size() const {
  switch (dtype) {
    case PudType::float32: return 4;
    case PudType::int32: return 4;
    case PudType::uint8: return 1;
  }
  throw Error(Errc::Io, "unknown PUD1 dtype");
}

Grid<double> PudArray::channel(std::uint32_t c) const {
  check_channel(*this, c);
  Grid<double> out(height, width);
  const std::size_t base = static_cast<std::size_t>(c) * width * height;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const std::size_t idx = base + static_cast<std::size_t>(i);
    switch (dtype) {
      case PudType::float32: out.data()[i] = sample<float>(*this, idx); break;
      case PudType::int32: out.data()[i] = sample<std::int32_t>(*this, idx); break;
      case PudType::uint8: out.data()[i] = payload[idx]; break;
    }
  }
  return out;
}

OrderGrid PudArray::int_channel(std::uint32_t c) const {
  if (dtype == PudType::float32) throw Error(Errc::Io, "expected an integer PUD1 array");
  return channel(c).cast<std::int32_t>();
}

Mask PudArray::mask_channel(std::uint32_t c) const { return channel(c) != 0.0; }

PudArray make_pud(const std::vector<Grid<double>>& channels, PudType dtype) {
  if (channels.empty()) throw Error(Errc::ShapeMismatch, "PUD1 array needs a channel");
  PudArray a;
  a.height = static_cast<std::uint32_t>(channels[0].rows());
  a.width = static_cast<std::uint32_t>(channels[0].cols());
  a.channels = static_cast<std::uint32_t>(channels.size());
  a.dtype = dtype;
  a.payload.reserve(a.element_size() * a.width * a.height * a.channels);
  for (const Grid<double>& ch : channels) {
    if (!same_shape(ch, channels[0])) throw Error(Errc::ShapeMismatch, "PUD1 channels differ");
    for (Eigen::Index i = 0; i < ch.size(); ++i) {
      const double v = ch.data()[i];
      switch (dtype) {
        case PudType::float32: put(a.payload, static_cast<float>(v)); break;
        case PudType::int32: put(a.payload, static_cast<std::int32_t>(std::lround(v))); break;
        case PudType::uint8:
          a.payload.push_back(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 255.0))));
          break;
      }
    }
  }
  return a;
}

PudArray make_pud(const OrderGrid& values) {
  return make_pud({values.cast<double>()}, PudType::int32);
}

PudArray make_pud(const Mask& values) {
  return make_pud({values.cast<double>()}, PudType::uint8);
}

std::vector<unsigned char> encode_pud(const PudArray& a) {
  std::vector<unsigned char> out(kMagic, kMagic + 4);
  put(out, a.width);
  put(out, a.height);
  put(out, a.channels);
  put(out, static_cast<std::uint32_t>(a.dtype));
  out.insert(out.end(), a.payload.begin(), a.payload.end());
  return out;
}

PudArray decode_pud(const std::vector<unsigned char>& bytes) {
  constexpr std::size_t header = 20;
  if (bytes.size() < header || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(Errc::Io, "not a PUD1 array");
  }
  PudArray a;
  a.width = get<std::uint32_t>(bytes, 4);
  a.height = get<std::uint32_t>(bytes, 8);
  a.channels = get<std::uint32_t>(bytes, 12);
  const auto dtype = get<std::uint32_t>(bytes, 16);
  if (dtype > 2) throw Error(Errc::Io, "unknown PUD1 dtype " + std::to_string(dtype));
  a.dtype = static_cast<PudType>(dtype);
  const std::size_t expected =
      a.element_size() * static_cast<std::size_t>(a.width) * a.height * a.channels;
  if (bytes.size() != header + expected) throw Error(Errc::Io, "truncated PUD1 array");
  a.payload.assign(bytes.begin() + header, bytes.end());
  return a;
}

void write_pud(const std::filesystem::path& path, const PudArray& array) {
  const std::vector<unsigned char> bytes = encode_pud(array);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
}

PudArray read_pud(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return decode_pud(bytes);
}

}  // namespace phaseforge
