#pragma once

// Exhaustive cosine-similarity index over every pyramid cell of every image.
//
// On-disk layout (little-endian):
//   "GSKI" | u32 version | u32 dim | u64 image count
//   per image: u32 len | id | u32 len | path | u32 cell count
//              per cell: u8 level | u16 row | u16 col | f32 values[dim]

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gridseek/contrast.hpp"
#include "gridseek/imops.hpp"
#include "gridseek/net.hpp"

namespace gridseek::index {

using contrast::CellRef;

inline constexpr std::uint32_t kIndexVersion = 1;

struct IndexEntry {
  std::string image_id;
  std::string path;
  std::vector<CellRef> cells;
  std::vector<float> vectors;  // cells.size() * dim

  std::span<const float> vector(std::size_t cell) const;
};

struct RankedResult {
  std::string image_id;
  double score = 0.0;
  CellRef best_cell;

  friend bool operator==(const RankedResult&, const RankedResult&) = default;
};

class RetrievalIndex {
 public:
  explicit RetrievalIndex(int dim = 0) : dim_(dim) {}

  int dim() const { return dim_; }
  std::uint32_t format_version() const { return kIndexVersion; }
  const std::vector<IndexEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  const IndexEntry* find(const std::string& image_id) const;

  // Rejects duplicate ids, wrong dimensions and non-unit vectors.
  void add(const std::string& image_id, const std::string& path, const net::PyramidEmbeddings& pyr);
  void add(IndexEntry entry);

  // Per image, score = max cosine over its cells. Sorted by descending score,
  // ties by ascending image_id.
  std::vector<RankedResult> query(const net::Embedding& z, std::size_t k) const;

  std::vector<char> serialize() const;
  static RetrievalIndex deserialize(std::span<const char> bytes);
  void save(const std::string& path) const;
  static RetrievalIndex load(const std::string& path);

  // Closed-form byte size of the serialized index.
  std::size_t serialized_size() const;

 private:
  int dim_;
  std::vector<IndexEntry> entries_;
};

struct ImageSource {
  std::string image_id;
  std::string path;
};

// Encodes every image through the pyramid encoder in dataset order.
// Unreadable files go to `on_error` and are skipped; zero successes throws.
RetrievalIndex build_index(const net::Encoder& model, std::span<const ImageSource> images, int threads = 1,
                           const std::function<void(const std::string&)>& on_error = {});

// In-memory variant used when images are already decoded.
RetrievalIndex build_index(const net::Encoder& model, std::span<const std::string> ids,
                           std::span<const imops::Image> images, int threads = 1);

// Border colour for rank r (0-based) of k: linear from #FF0000 to #0000FF.
std::string rank_color(std::size_t rank, std::size_t k);

// Self-contained HTML page: query crop followed by ranked thumbnails.
// `load_image` maps an image id to its pixels.
void emit_report(const imops::Image& query_crop, std::span<const RankedResult> results,
                 const std::function<imops::Image(const std::string&)>& load_image, const std::string& out_path);
std::string render_report(const imops::Image& query_crop, std::span<const RankedResult> results,
                          const std::function<imops::Image(const std::string&)>& load_image);

}  // namespace gridseek::index
