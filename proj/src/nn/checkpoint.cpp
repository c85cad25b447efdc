#include "phaseforge/nn/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "phaseforge/error.hpp"

namespace phaseforge::nn {

static_assert(std::endian::native == std::endian::little, "PUW1 I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'P', 'U', 'W', '1'};

template <typename T>
void put(std::vector<unsigned char>& out, T value) {
  unsigned char raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw Error(Errc::Io, "truncated PUW1 checkpoint");
  }

  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<unsigned char> out(kMagic, kMagic + 4);
  put(out, static_cast<std::uint32_t>(ckpt.size()));
  for (const CheckpointEntry& e : ckpt) {
    if (e.name.size() > 0xffff || e.shape.size() > 0xff) {
      throw Error(Errc::Io, "checkpoint entry '" + e.name + "' cannot be encoded");
    }
    if (static_cast<std::size_t>(shape_size(e.shape)) != e.values.size()) {
      throw Error(Errc::ShapeMismatch, "checkpoint entry '" + e.name + "' has inconsistent size");
    }
    put(out, static_cast<std::uint16_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put(out, static_cast<std::uint8_t>(e.shape.size()));
    for (int d : e.shape) put(out, static_cast<std::uint32_t>(d));
    for (float v : e.values) put(out, v);
  }
  return out;
}

Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes) {
  Reader in(bytes);
  if (in.str(4) != std::string(kMagic, 4)) throw Error(Errc::Io, "not a PUW1 checkpoint");
  const auto count = in.get<std::uint32_t>();
  Checkpoint ckpt;
  ckpt.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.name = in.str(in.get<std::uint16_t>());
    const auto rank = in.get<std::uint8_t>();
    for (std::uint8_t r = 0; r < rank; ++r) e.shape.push_back(static_cast<int>(in.get<std::uint32_t>()));
    e.values.resize(static_cast<std::size_t>(shape_size(e.shape)));
    for (float& v : e.values) v = in.get<float>();
    ckpt.push_back(std::move(e));
  }
  if (!in.done()) throw Error(Errc::Io, "trailing bytes after PUW1 checkpoint");
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::vector<unsigned char> bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::MissingCheckpoint, "cannot open checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

const CheckpointEntry* find_entry(const Checkpoint& ckpt, const std::string& name) {
  for (const CheckpointEntry& e : ckpt) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

}  // namespace phaseforge::nn
