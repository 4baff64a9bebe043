#include "gridseek/index.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <optional>

#include "gridseek/binary_io.hpp"
#include "gridseek/parallel.hpp"

namespace gridseek::index {

namespace {
constexpr char kMagic[4] = {'G', 'S', 'K', 'I'};
constexpr std::size_t kHeaderBytes = 4 + 4 + 4 + 8;
constexpr std::size_t kCellHeaderBytes = 1 + 2 + 2;
}  // namespace

std::span<const float> IndexEntry::vector(std::size_t cell) const {
  const std::size_t dim = vectors.size() / cells.size();
  return std::span<const float>(vectors).subspan(cell * dim, dim);
}

const IndexEntry* RetrievalIndex::find(const std::string& image_id) const {
  for (const auto& e : entries_) {
    if (e.image_id == image_id) return &e;
  }
  return nullptr;
}

void RetrievalIndex::add(const std::string& image_id, const std::string& path, const net::PyramidEmbeddings& pyr) {
  IndexEntry e;
  e.image_id = image_id;
  e.path = path;
  for (const auto& g : pyr.grids) {
    for (int r = 0; r < g.rows; ++r) {
      for (int c = 0; c < g.cols; ++c) {
        e.cells.push_back({g.level, r, c});
        for (double v : g.cell(r, c)) e.vectors.push_back(static_cast<float>(v));
      }
    }
  }
  add(std::move(e));
}

void RetrievalIndex::add(IndexEntry entry) {
  if (entry.cells.empty()) throw Error(ErrorKind::kInvalidArgument, "image " + entry.image_id + " has no cells");
  if (find(entry.image_id) != nullptr) throw Error(ErrorKind::kInvalidArgument, "duplicate image id " + entry.image_id);
  if (dim_ <= 0) dim_ = static_cast<int>(entry.vectors.size() / entry.cells.size());
  if (entry.vectors.size() != entry.cells.size() * static_cast<std::size_t>(dim_)) {
    throw Error(ErrorKind::kShapeMismatch, "image " + entry.image_id + " vectors do not match index dimension " +
                                               std::to_string(dim_));
  }
  for (std::size_t c = 0; c < entry.cells.size(); ++c) {
    double ss = 0.0;
    for (float v : entry.vector(c)) ss += static_cast<double>(v) * v;
    if (std::abs(std::sqrt(ss) - 1.0) > 1e-4) {
      throw Error(ErrorKind::kDegenerateEmbedding, "image " + entry.image_id + " cell " + std::to_string(c) +
                                                       " is not unit-norm");
    }
  }
  entries_.push_back(std::move(entry));
}

std::vector<RankedResult> RetrievalIndex::query(const net::Embedding& z, std::size_t k) const {
  if (k < 1) throw Error(ErrorKind::kInvalidArgument, "k must be at least 1");
  if (static_cast<int>(z.dim()) != dim_) {
    throw Error(ErrorKind::kShapeMismatch, "query dimension " + std::to_string(z.dim()) + " != index dimension " +
                                               std::to_string(dim_));
  }
  std::vector<RankedResult> all;
  all.reserve(entries_.size());
  const auto d = static_cast<std::size_t>(dim_);
  for (const auto& e : entries_) {
    RankedResult best{e.image_id, -std::numeric_limits<double>::infinity(), {}};
    for (std::size_t c = 0; c < e.cells.size(); ++c) {
      const float* v = e.vectors.data() + c * d;
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) dot += z.values[i] * static_cast<double>(v[i]);
      if (dot > best.score) {
        best.score = dot;
        best.best_cell = e.cells[c];
      }
    }
    all.push_back(std::move(best));
  }
  auto before = [](const RankedResult& a, const RankedResult& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.image_id < b.image_id;
  };
  const std::size_t n = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(), before);
  all.resize(n);
  return all;
}

std::size_t RetrievalIndex::serialized_size() const {
  std::size_t n = kHeaderBytes;
  for (const auto& e : entries_) {
    n += 4 + e.image_id.size() + 4 + e.path.size() + 4;
    n += e.cells.size() * (kCellHeaderBytes + 4 * static_cast<std::size_t>(dim_));
  }
  return n;
}

std::vector<char> RetrievalIndex::serialize() const {
  ByteWriter out;
  out.bytes(kMagic, 4);
  out.u32(kIndexVersion);
  out.u32(static_cast<std::uint32_t>(dim_));
  out.u64(entries_.size());
  for (const auto& e : entries_) {
    out.str(e.image_id);
    out.str(e.path);
    out.u32(static_cast<std::uint32_t>(e.cells.size()));
    for (std::size_t c = 0; c < e.cells.size(); ++c) {
      out.u8(static_cast<std::uint8_t>(e.cells[c].level));
      out.u16(static_cast<std::uint16_t>(e.cells[c].row));
      out.u16(static_cast<std::uint16_t>(e.cells[c].col));
      for (float v : e.vector(c)) out.f32(v);
    }
  }
  return out.take();
}

RetrievalIndex RetrievalIndex::deserialize(std::span<const char> bytes) {
  ByteReader in(bytes, ErrorKind::kCorruptIndex);
  char magic[4];
  in.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw Error(ErrorKind::kCorruptIndex, "bad magic bytes");
  const auto version = in.u32();
  if (version != kIndexVersion) {
    throw Error(ErrorKind::kVersionMismatch, "index version " + std::to_string(version) + ", expected " +
                                                 std::to_string(kIndexVersion));
  }
  const auto dim = in.u32();
  if (dim == 0 || dim > 65536) throw Error(ErrorKind::kCorruptIndex, "implausible dimension " + std::to_string(dim));
  const auto count = in.u64();
  RetrievalIndex idx(static_cast<int>(dim));
  for (std::uint64_t i = 0; i < count; ++i) {
    IndexEntry e;
    e.image_id = in.str();
    e.path = in.str();
    const auto cells = in.u32();
    if (static_cast<std::size_t>(cells) * (kCellHeaderBytes + 4 * dim) > in.remaining()) {
      throw Error(ErrorKind::kCorruptIndex, "truncated cell data for " + e.image_id);
    }
    e.cells.reserve(cells);
    e.vectors.reserve(static_cast<std::size_t>(cells) * dim);
    for (std::uint32_t c = 0; c < cells; ++c) {
      CellRef ref;
      ref.level = in.u8();
      ref.row = in.u16();
      ref.col = in.u16();
      if (ref.level >= net::kLevels) throw Error(ErrorKind::kCorruptIndex, "cell level out of range");
      e.cells.push_back(ref);
      for (std::uint32_t d = 0; d < dim; ++d) e.vectors.push_back(in.f32());
    }
    try {
      idx.add(std::move(e));
    } catch (const Error& err) {
      throw Error(ErrorKind::kCorruptIndex, err.what());
    }
  }
  if (in.remaining() != 0) throw Error(ErrorKind::kCorruptIndex, "trailing bytes after last entry");
  return idx;
}

void RetrievalIndex::save(const std::string& path) const { write_file(path, serialize()); }

RetrievalIndex RetrievalIndex::load(const std::string& path) { return deserialize(read_file(path)); }

RetrievalIndex build_index(const net::Encoder& model, std::span<const ImageSource> images, int threads,
                           const std::function<void(const std::string&)>& on_error) {
  if (images.empty()) throw Error(ErrorKind::kData, "cannot build an index from an empty dataset");
  std::vector<std::optional<net::PyramidEmbeddings>> encoded(images.size());
  std::vector<std::string> errors(images.size());
  parallel_for(images.size(), threads, [&](std::size_t i) {
    try {
      encoded[i] = model.encode_image(imops::read_image(images[i].path));
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });
  RetrievalIndex idx(model.embed_dim());
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!encoded[i]) {
      if (on_error) on_error(errors[i]);
      continue;
    }
    idx.add(images[i].image_id, images[i].path, *encoded[i]);
  }
  if (idx.size() == 0) throw Error(ErrorKind::kData, "no image could be indexed");
  return idx;
}

RetrievalIndex build_index(const net::Encoder& model, std::span<const std::string> ids,
                           std::span<const imops::Image> images, int threads) {
  if (images.empty()) throw Error(ErrorKind::kData, "cannot build an index from an empty dataset");
  if (ids.size() != images.size()) throw Error(ErrorKind::kInvalidArgument, "one id per image required");
  std::vector<net::PyramidEmbeddings> encoded(images.size());
  parallel_for(images.size(), threads, [&](std::size_t i) { encoded[i] = model.encode_image(images[i]); });
  RetrievalIndex idx(model.embed_dim());
  for (std::size_t i = 0; i < images.size(); ++i) idx.add(ids[i], "", encoded[i]);
  return idx;
}

}  // namespace gridseek::index
