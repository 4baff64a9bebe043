#include "gridseek/net.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "gridseek/rng.hpp"

namespace gridseek::net {

namespace ops = ndgrad::ops;

std::string_view to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::kM1: return "M1";
    case ModelVariant::kM2: return "M2";
    case ModelVariant::kM3: return "M3";
    case ModelVariant::kM4: return "M4";
  }
  return "M4";
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw Error(ErrorKind::kInvalidArgument, std::string(name) + " must be positive");
  };
  positive(image_size, "image_size");
  positive(crop_size, "crop_size");
  positive(stem_channels, "stem_channels");
  for (int c : stage_channels) positive(c, "stage_channels");
  positive(pyramid_channels, "pyramid_channels");
  positive(repr_dim, "repr_dim");
  positive(embed_dim, "embed_dim");
  if (stage_depth < 0) throw Error(ErrorKind::kInvalidArgument, "stage_depth must be non-negative");
  if (image_size % level_stride(kLevels - 1) != 0) {
    throw Error(ErrorKind::kInvalidArgument, "image_size must be a multiple of " + std::to_string(level_stride(kLevels - 1)));
  }
  if (crop_size % 16 != 0) throw Error(ErrorKind::kInvalidArgument, "crop_size must be a multiple of 16");
}

double Embedding::norm() const {
  double ss = 0.0;
  for (double v : values) ss += v * v;
  return std::sqrt(ss);
}

Embedding Embedding::normalized(std::vector<double> v) {
  Embedding e{std::move(v)};
  const double n = e.norm();
  if (!(n >= ndgrad::ops::kNormEpsilon)) throw Error(ErrorKind::kDegenerateEmbedding, "cannot normalize a zero vector");
  for (auto& x : e.values) x /= n;
  return e;
}

Tensor images_to_tensor(std::span<const imops::Image> images, int size) {
  if (images.empty()) throw Error(ErrorKind::kInvalidArgument, "no images to pack");
  const auto plane = static_cast<std::size_t>(size) * static_cast<std::size_t>(size);
  std::vector<double> data(images.size() * 3 * plane);
  for (std::size_t b = 0; b < images.size(); ++b) {
    const auto& img = images[b];
    if (img.width() != size || img.height() != size) {
      throw Error(ErrorKind::kShapeMismatch, "expected " + std::to_string(size) + "x" + std::to_string(size) +
                                                 " input, got " + std::to_string(img.width()) + "x" +
                                                 std::to_string(img.height()));
    }
    const auto px = img.pixels();
    for (std::size_t p = 0; p < plane; ++p) {
      for (std::size_t c = 0; c < 3; ++c) data[(b * 3 + c) * plane + p] = static_cast<double>(px[p * 3 + c]) - 0.5;
    }
  }
  return Tensor::from({images.size(), 3, static_cast<std::size_t>(size), static_cast<std::size_t>(size)},
                      std::move(data));
}

// ---------------------------------------------------------------------------

Model::Conv Model::add_conv(const std::string& name, int cin, int cout, int k, int stride) {
  const auto uk = static_cast<std::size_t>(k);
  Tensor w = Tensor::zeros({static_cast<std::size_t>(cout), static_cast<std::size_t>(cin), uk, uk}, true);
  ndgrad::he_uniform(w, static_cast<std::size_t>(cin) * uk * uk, hash_key({cfg_.seed, init_counter_++}));
  Conv c{params_.size(), params_.size() + 1, static_cast<std::size_t>(stride), uk / 2};
  params_.push_back({name + ".weight", std::move(w)});
  params_.push_back({name + ".bias", Tensor::zeros({static_cast<std::size_t>(cout)}, true)});
  return c;
}

Model::Dense Model::add_dense(const std::string& name, int din, int dout) {
  Tensor w = Tensor::zeros({static_cast<std::size_t>(dout), static_cast<std::size_t>(din)}, true);
  ndgrad::he_uniform(w, static_cast<std::size_t>(din), hash_key({cfg_.seed, init_counter_++}));
  Dense d{params_.size(), params_.size() + 1};
  params_.push_back({name + ".weight", std::move(w)});
  params_.push_back({name + ".bias", Tensor::zeros({static_cast<std::size_t>(dout)}, true)});
  return d;
}

Tensor Model::conv(Tape& tape, const Conv& c, const Tensor& x) const {
  return ops::conv2d(tape, x, params_[c.weight].tensor, params_[c.bias].tensor, c.stride, c.padding);
}

Tensor Model::dense(Tape& tape, const Dense& d, const Tensor& x) const {
  return ops::linear(tape, x, params_[d.weight].tensor, params_[d.bias].tensor);
}

Model::Backbone Model::make_backbone(const std::string& prefix) {
  Backbone b;
  b.stem = add_conv(prefix + ".stem", 3, cfg_.stem_channels, 3, 2);
  int cin = cfg_.stem_channels;
  for (std::size_t s = 0; s < cfg_.stage_channels.size(); ++s) {
    const int cout = cfg_.stage_channels[s];
    const std::string stage = prefix + ".stage" + std::to_string(s + 1);
    std::vector<Conv> convs;
    convs.push_back(add_conv(stage + ".0", cin, cout, 3, 2));
    for (int d = 0; d < cfg_.stage_depth; ++d) convs.push_back(add_conv(stage + "." + std::to_string(d + 1), cout, cout, 3, 1));
    b.stages.push_back(std::move(convs));
    cin = cout;
  }
  return b;
}

std::array<Tensor, 3> Model::run_backbone(Tape& tape, const Backbone& b, const Tensor& x) const {
  Tensor h = ops::relu(tape, conv(tape, b.stem, x));
  std::array<Tensor, 3> out;
  for (std::size_t s = 0; s < b.stages.size(); ++s) {
    for (const auto& c : b.stages[s]) h = ops::relu(tape, conv(tape, c, h));
    out[s] = h;
  }
  return out;
}

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  crop_backbone_ = make_backbone("crop.backbone");
  crop_expand_ = add_conv("crop.backbone.expand", cfg_.stage_channels[2], cfg_.repr_dim, 1, 1);
  crop_fc1_ = add_dense("crop.head.fc1", cfg_.repr_dim, cfg_.repr_dim);
  crop_fc2_ = add_dense("crop.head.fc2", cfg_.repr_dim, cfg_.embed_dim);

  image_backbone_ = make_backbone("image.backbone");
  const int f = cfg_.pyramid_channels;
  for (std::size_t i = 0; i < 3; ++i) {
    lateral_[i] = add_conv("image.fpn.lateral" + std::to_string(i), cfg_.stage_channels[i], f, 1, 1);
    smooth_[i] = add_conv("image.fpn.smooth" + std::to_string(i), f, f, 3, 1);
  }
  p3_ = add_conv("image.fpn.p3", cfg_.stage_channels[2], f, 3, 2);
  p4_ = add_conv("image.fpn.p4", f, f, 3, 2);
  if (cfg_.image_projection_head) {
    head_fc1_ = add_dense("image.head.fc1", f, f);
    head_fc2_ = add_dense("image.head.fc2", f, cfg_.embed_dim);
  } else {
    head_proj_ = add_dense("image.head.proj", f, cfg_.embed_dim);
  }
}

Model::CropOutput Model::forward_crops(Tape& tape, const Tensor& crops) const {
  if (crops.rank() != 4 || crops.dim(2) != static_cast<std::size_t>(cfg_.crop_size) ||
      crops.dim(3) != static_cast<std::size_t>(cfg_.crop_size)) {
    throw Error(ErrorKind::kShapeMismatch, "crop encoder expects [B,3," + std::to_string(cfg_.crop_size) + "," +
                                               std::to_string(cfg_.crop_size) + "], got " +
                                               ndgrad::shape_str(crops.shape()));
  }
  const auto features = run_backbone(tape, crop_backbone_, crops);
  Tensor r = ops::global_avg_pool(tape, ops::relu(tape, conv(tape, crop_expand_, features[2])));
  Tensor z = dense(tape, crop_fc2_, ops::relu(tape, dense(tape, crop_fc1_, r)));
  return {r, ops::l2_normalize(tape, z)};
}

Model::PyramidOutput Model::forward_images(Tape& tape, const Tensor& images) const {
  if (images.rank() != 4 || images.dim(2) != static_cast<std::size_t>(cfg_.image_size) ||
      images.dim(3) != static_cast<std::size_t>(cfg_.image_size)) {
    throw Error(ErrorKind::kShapeMismatch, "image encoder expects [B,3," + std::to_string(cfg_.image_size) + "," +
                                               std::to_string(cfg_.image_size) + "], got " +
                                               ndgrad::shape_str(images.shape()));
  }
  const auto c = run_backbone(tape, image_backbone_, images);

  // Top-down path: coarsest lateral first, each finer level adds the
  // upsampled coarser map.
  std::array<Tensor, 3> merged;
  merged[2] = conv(tape, lateral_[2], c[2]);
  merged[1] = ops::add(tape, conv(tape, lateral_[1], c[1]), ops::upsample_nearest2x(tape, merged[2]));
  merged[0] = ops::add(tape, conv(tape, lateral_[0], c[0]), ops::upsample_nearest2x(tape, merged[1]));

  std::array<Tensor, kLevels> maps;
  for (std::size_t i = 0; i < 3; ++i) maps[i] = conv(tape, smooth_[i], merged[i]);
  maps[3] = conv(tape, p3_, c[2]);
  maps[4] = conv(tape, p4_, ops::relu(tape, maps[3]));

  PyramidOutput out;
  out.batch = static_cast<int>(images.dim(0));
  for (std::size_t l = 0; l < kLevels; ++l) {
    out.rows[l] = static_cast<int>(maps[l].dim(2));
    out.cols[l] = static_cast<int>(maps[l].dim(3));
    Tensor rows = ops::to_rows(tape, maps[l]);
    Tensor z = cfg_.image_projection_head ? dense(tape, head_fc2_, ops::relu(tape, dense(tape, head_fc1_, rows)))
                                          : dense(tape, head_proj_, rows);
    out.cells[l] = ops::l2_normalize(tape, z);
  }
  return out;
}

PyramidEmbeddings to_pyramid(const Model::PyramidOutput& out, int batch_index, int embed_dim) {
  PyramidEmbeddings pyr;
  for (std::size_t l = 0; l < kLevels; ++l) {
    auto& g = pyr.grids[l];
    g.level = static_cast<int>(l);
    g.rows = out.rows[l];
    g.cols = out.cols[l];
    g.dim = embed_dim;
    const auto per_image = static_cast<std::size_t>(g.rows * g.cols * g.dim);
    const auto data = out.cells[l].data();
    g.cells.assign(data.begin() + static_cast<std::ptrdiff_t>(per_image * static_cast<std::size_t>(batch_index)),
                   data.begin() + static_cast<std::ptrdiff_t>(per_image * static_cast<std::size_t>(batch_index + 1)));
  }
  return pyr;
}

Embedding Model::encode_crop(const imops::Image& crop_img) const {
  imops::Image in = crop_img;
  if (in.width() != cfg_.crop_size || in.height() != cfg_.crop_size) {
    in = imops::resize(in, cfg_.crop_size, cfg_.crop_size, imops::Interpolation::kBilinear);
  }
  Tape tape(Tape::Mode::kInference);
  const auto out = forward_crops(tape, images_to_tensor(std::span(&in, 1), cfg_.crop_size));
  const auto z = out.embedding.data();
  return Embedding{{z.begin(), z.end()}};
}

PyramidEmbeddings Model::encode_image(const imops::Image& img) const {
  imops::Image in = img;
  if (in.width() != cfg_.image_size || in.height() != cfg_.image_size) {
    in = imops::resize(in, cfg_.image_size, cfg_.image_size, imops::Interpolation::kBilinear);
  }
  Tape tape(Tape::Mode::kInference);
  return to_pyramid(forward_images(tape, images_to_tensor(std::span(&in, 1), cfg_.image_size)), 0, cfg_.embed_dim);
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

void Model::save(const std::string& path) const { ndgrad::save_checkpoint(path, params_); }

Model Model::load(const std::string& path, int image_size, int crop_size) {
  return from_tensors(ndgrad::load_checkpoint(path), image_size, crop_size);
}

Model Model::from_tensors(const std::vector<ndgrad::NamedTensor>& tensors, int image_size, int crop_size) {
  std::map<std::string, const ndgrad::NamedTensor*> by_name;
  for (const auto& t : tensors) {
    if (!by_name.emplace(t.name, &t).second) throw Error(ErrorKind::kCorruptCheckpoint, "duplicate tensor " + t.name);
  }
  auto extent = [&](const std::string& name, std::size_t axis) -> int {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw Error(ErrorKind::kCorruptCheckpoint, "missing tensor " + name);
    if (axis >= it->second->shape.size()) throw Error(ErrorKind::kCorruptCheckpoint, "tensor " + name + " has too few axes");
    return static_cast<int>(it->second->shape[axis]);
  };

  ModelConfig cfg;
  cfg.image_size = image_size;
  cfg.crop_size = crop_size;
  cfg.stem_channels = extent("image.backbone.stem.weight", 0);
  for (std::size_t s = 0; s < 3; ++s) cfg.stage_channels[s] = extent("image.backbone.stage" + std::to_string(s + 1) + ".0.weight", 0);
  cfg.stage_depth = 0;
  while (by_name.count("image.backbone.stage1." + std::to_string(cfg.stage_depth + 1) + ".weight")) ++cfg.stage_depth;
  cfg.pyramid_channels = extent("image.fpn.lateral0.weight", 0);
  cfg.repr_dim = extent("crop.backbone.expand.weight", 0);
  cfg.embed_dim = extent("crop.head.fc2.weight", 0);
  cfg.image_projection_head = by_name.count("image.head.fc1.weight") > 0;

  Model model(cfg);
  if (tensors.size() != model.params_.size()) {
    for (const auto& t : tensors) {
      const bool known = std::any_of(model.params_.begin(), model.params_.end(),
                                     [&](const Parameter& p) { return p.name == t.name; });
      if (!known) throw Error(ErrorKind::kCorruptCheckpoint, "unknown parameter " + t.name);
    }
    throw Error(ErrorKind::kCorruptCheckpoint, "checkpoint holds " + std::to_string(tensors.size()) +
                                                   " tensors, architecture needs " +
                                                   std::to_string(model.params_.size()));
  }
  for (auto& p : model.params_) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw Error(ErrorKind::kCorruptCheckpoint, "missing tensor " + p.name);
    const auto& t = *it->second;
    if (t.shape != p.tensor.shape()) {
      throw Error(ErrorKind::kShapeMismatch, "tensor " + p.name + " has shape " + ndgrad::shape_str(t.shape) +
                                                 ", architecture needs " + ndgrad::shape_str(p.tensor.shape()));
    }
    auto dst = p.tensor.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<double>(t.values[i]);
  }
  ndgrad::require_finite(model.params_);
  return model;
}

}  // namespace gridseek::net
