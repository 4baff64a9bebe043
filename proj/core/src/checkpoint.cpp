#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "gridseek/binary_io.hpp"
#include "gridseek/ndgrad.hpp"

namespace gridseek::ndgrad {

namespace {
constexpr char kMagic[4] = {'G', 'S', 'K', 'W'};
}

// Layout (all integers little-endian):
//   "GSKW" | u32 version | u32 tensor count
//   per tensor: u32 name length | name bytes | u32 rank | u32 extents[rank]
//               | f32 values[product(extents)]
std::vector<char> encode_checkpoint(std::span<const Parameter> params) {
  ByteWriter out;
  out.bytes(kMagic, 4);
  out.u32(kCheckpointVersion);
  out.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    out.str(p.name);
    out.u32(static_cast<std::uint32_t>(p.tensor.rank()));
    for (auto e : p.tensor.shape()) out.u32(static_cast<std::uint32_t>(e));
    for (double v : p.tensor.data()) {
      if (!std::isfinite(v)) throw Error(ErrorKind::kNonFinite, "refusing to save non-finite parameter " + p.name);
      out.f32(static_cast<float>(v));
    }
  }
  return out.take();
}

std::vector<NamedTensor> decode_checkpoint(std::span<const char> bytes) {
  ByteReader in(bytes, ErrorKind::kCorruptCheckpoint);
  char magic[4];
  in.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw Error(ErrorKind::kCorruptCheckpoint, "bad magic bytes");
  const auto version = in.u32();
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::kVersionMismatch, "checkpoint version " + std::to_string(version) + ", expected " +
                                                 std::to_string(kCheckpointVersion));
  }
  const auto count = in.u32();
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = in.str();
    const auto rank = in.u32();
    if (rank == 0 || rank > 8) throw Error(ErrorKind::kCorruptCheckpoint, "tensor " + t.name + " has rank " + std::to_string(rank));
    std::size_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      const auto e = in.u32();
      if (e == 0) throw Error(ErrorKind::kCorruptCheckpoint, "tensor " + t.name + " has a zero extent");
      t.shape.push_back(e);
      n *= e;
    }
    if (n * 4 > in.remaining()) throw Error(ErrorKind::kCorruptCheckpoint, "truncated values for " + t.name);
    t.values.resize(n);
    for (auto& v : t.values) v = in.f32();
    out.push_back(std::move(t));
  }
  if (in.remaining() != 0) throw Error(ErrorKind::kCorruptCheckpoint, "trailing bytes after last tensor");
  return out;
}

void save_checkpoint(const std::string& path, std::span<const Parameter> params) {
  write_file(path, encode_checkpoint(params));
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

}  // namespace gridseek::ndgrad
