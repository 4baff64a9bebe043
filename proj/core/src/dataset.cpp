#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "gridseek/data.hpp"
#include "gridseek/rng.hpp"

namespace fs = std::filesystem;

namespace gridseek::data {

std::vector<imops::Image> Dataset::load_images() const {
  std::vector<imops::Image> out;
  out.reserve(items.size());
  for (const auto& it : items) out.push_back(imops::read_image(it.path));
  return out;
}

Dataset scan_dataset(const std::string& root) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw Error(ErrorKind::kData, "dataset root " + root + " is not a directory");
  Dataset ds;
  ds.root = root;
  for (const auto& entry : fs::recursive_directory_iterator(root, ec)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (ext != ".png" && ext != ".jpg" && ext != ".jpeg") continue;
    const fs::path rel = fs::relative(entry.path(), root);
    ds.items.push_back({(rel.parent_path() / rel.stem()).generic_string(), entry.path().string()});
  }
  if (ec) throw Error(ErrorKind::kData, "cannot scan " + root + ": " + ec.message());
  std::sort(ds.items.begin(), ds.items.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
  std::set<std::string> ids;
  for (const auto& it : ds.items) {
    if (!ids.insert(it.image_id).second) throw Error(ErrorKind::kData, "two files map to image id " + it.image_id);
  }
  return ds;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& all, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) {
    throw Error(ErrorKind::kInvalidArgument, "split fraction must be in [0,1]");
  }
  const std::size_t n = all.items.size();
  auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  if (train_fraction > 0.0 && train_fraction < 1.0 && n >= 2) n_train = std::clamp<std::size_t>(n_train, 1, n - 1);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [seed](std::size_t a, std::size_t b) {
    const auto ha = hash_key({seed, a}), hb = hash_key({seed, b});
    return ha != hb ? ha < hb : a < b;
  });
  std::vector<bool> in_train(n, false);
  for (std::size_t i = 0; i < n_train; ++i) in_train[order[i]] = true;

  Dataset train{all.root, Split::kTrain, {}}, eval{all.root, Split::kEval, {}};
  for (std::size_t i = 0; i < n; ++i) (in_train[i] ? train : eval).items.push_back(all.items[i]);
  return {std::move(train), std::move(eval)};
}

std::pair<Dataset, Dataset> load_dataset(const std::string& root, double train_fraction, std::uint64_t seed) {
  auto all = scan_dataset(root);
  if (all.items.size() < 2) {
    throw Error(ErrorKind::kData, "dataset " + root + " needs at least 2 images, found " + std::to_string(all.items.size()));
  }
  return split_dataset(all, train_fraction, seed);
}

}  // namespace gridseek::data
