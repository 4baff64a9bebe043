#include "gridseek/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "gridseek/index.hpp"
#include "gridseek/parallel.hpp"
#include "gridseek/rng.hpp"
#include "gridseek/train.hpp"

namespace gridseek::cli {

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNonFinite:
      return kExitNumeric;
    case ErrorKind::kConfig:
    case ErrorKind::kInvalidArgument:
      return kExitUsage;
    default:
      return kExitData;
  }
}

std::vector<evalkit::EvalSample> eval_samples(const data::Dataset& ds, std::uint64_t eval_seed) {
  std::vector<evalkit::EvalSample> out;
  out.reserve(ds.items.size());
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    auto img = imops::read_image(ds.items[i].path);
    auto crop = imops::sample_crop(img, hash_key({eval_seed, static_cast<std::uint64_t>(i)}));
    crop.source_id = ds.items[i].image_id;
    out.push_back({std::move(img), std::move(crop)});
  }
  return out;
}

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::kIo, "cannot write " + path);
  f << text;
  if (!f) throw Error(ErrorKind::kIo, "write failed for " + path);
}

imops::CropSpec parse_crop(const std::string& text) {
  std::vector<int> v;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stoi(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw Error(ErrorKind::kInvalidArgument, "--crop expects x0,y0,w,h integers, got '" + text + "'");
    }
  }
  if (v.size() != 4) throw Error(ErrorKind::kInvalidArgument, "--crop expects x0,y0,w,h, got '" + text + "'");
  return {v[0], v[1], v[2], v[3], {}};
}

data::Dataset pick_split(const std::string& root, const std::string& split, double fraction, std::uint64_t seed) {
  if (split == "all") {
    auto all = data::scan_dataset(root);
    if (all.items.size() < 2) throw Error(ErrorKind::kData, "dataset " + root + " needs at least 2 images");
    return all;
  }
  auto [train, eval] = data::load_dataset(root, fraction, seed);
  return split == "train" ? train : eval;
}

struct Context {
  std::ostream& out;
  std::ostream& err;
  const Hooks& hooks;
  int threads = 0;
};

std::unique_ptr<net::Encoder> load_encoder(const Context& ctx, const std::string& ckpt, int image_size = 64,
                                           int crop_size = 32) {
  if (ctx.hooks.load_encoder) return ctx.hooks.load_encoder(ckpt);
  return std::make_unique<net::Model>(net::Model::load(ckpt, image_size, crop_size));
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const Hooks& hooks) {
  CLI::App app{"gridseek: crop localization and image search with anchor-based contrastive learning", "gridseek"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  Context ctx{out, err, hooks};
  app.add_option("--threads", ctx.threads, "worker threads (default: GRIDSEEK_THREADS, else all cores)")
      ->check(CLI::NonNegativeNumber);

  // gen-synthetic
  int gen_n = 64, gen_size = 64;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-synthetic", "write a synthetic shapes dataset");
  gen->add_option("--n", gen_n, "number of images")->required();
  gen->add_option("--size", gen_size, "image side in pixels")->required();
  gen->add_option("--seed", gen_seed, "generator seed")->required();
  gen->add_option("--out", gen_out, "output directory")->required();

  // train
  std::string tr_config, tr_data, tr_ckpt, tr_metrics, tr_split = "train";
  double split_fraction = 0.9;
  auto* tr = app.add_subcommand("train", "train a model and write a checkpoint");
  tr->add_option("--config", tr_config, "key=value config file (empty: defaults)");
  tr->add_option("--data", tr_data, "image folder")->required();
  tr->add_option("--out-ckpt", tr_ckpt, "checkpoint to write")->required();
  tr->add_option("--metrics", tr_metrics, "per-epoch metrics.jsonl")->required();
  tr->add_option("--split", tr_split, "train | eval | all")->check(CLI::IsMember({"train", "eval", "all"}));
  tr->add_option("--split-fraction", split_fraction, "train share of the dataset")->check(CLI::Range(0.0, 1.0));

  // eval-sga
  std::string sga_ckpt, sga_data, sga_config, sga_out, sga_split = "eval";
  auto* sga = app.add_subcommand("eval-sga", "per-level similarity grid accuracy");
  sga->add_option("--ckpt", sga_ckpt, "checkpoint")->required();
  sga->add_option("--data", sga_data, "image folder")->required();
  sga->add_option("--config", sga_config, "config used for training (seeds, sizes)");
  sga->add_option("--out", sga_out, "sga.json to write")->required();
  sga->add_option("--split", sga_split, "train | eval | all")->check(CLI::IsMember({"train", "eval", "all"}));
  sga->add_option("--split-fraction", split_fraction, "train share of the dataset")->check(CLI::Range(0.0, 1.0));

  // eval-topk
  std::string tk_ckpt, tk_data, tk_config, tk_out, tk_split = "eval";
  std::vector<int> tk_k{1, 5, 10};
  auto* tk = app.add_subcommand("eval-topk", "top-k retrieval accuracy of crop queries");
  tk->add_option("--ckpt", tk_ckpt, "checkpoint")->required();
  tk->add_option("--data", tk_data, "image folder; every image is indexed")->required();
  tk->add_option("--config", tk_config, "config used for training (seeds, sizes)");
  tk->add_option("--k", tk_k, "comma-separated k values")->delimiter(',')->check(CLI::PositiveNumber);
  tk->add_option("--out", tk_out, "topk.json to write")->required();
  tk->add_option("--split", tk_split, "split the queries come from: train | eval | all")
      ->check(CLI::IsMember({"train", "eval", "all"}));
  tk->add_option("--split-fraction", split_fraction, "train share of the dataset")->check(CLI::Range(0.0, 1.0));

  // index
  std::string ix_ckpt, ix_data, ix_out, ix_config;
  auto* ix = app.add_subcommand("index", "embed every image of a folder into an index file");
  ix->add_option("--ckpt", ix_ckpt, "checkpoint")->required();
  ix->add_option("--data", ix_data, "image folder")->required();
  ix->add_option("--out-index", ix_out, "index file to write")->required();
  ix->add_option("--config", ix_config, "config used for training (input sizes)");

  // search
  std::string se_ckpt, se_index, se_image, se_crop, se_report, se_config;
  int se_k = 10;
  auto* se = app.add_subcommand("search", "rank indexed images against a crop and write an HTML report");
  se->add_option("--ckpt", se_ckpt, "checkpoint")->required();
  se->add_option("--index", se_index, "index file")->required();
  se->add_option("--image", se_image, "image holding the query crop")->required();
  se->add_option("--crop", se_crop, "x0,y0,w,h in image pixels")->required();
  se->add_option("--k", se_k, "number of results")->check(CLI::PositiveNumber);
  se->add_option("--report", se_report, "HTML report to write")->required();
  se->add_option("--config", se_config, "config used for training (input sizes)");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    return kExitUsage;
  }

  const int threads = resolve_threads(ctx.threads);
  auto load_config = [](const std::string& path) { return path.empty() ? data::parse_config_text("") : data::parse_config(path); };

  try {
    if (*gen) {
      const auto ds = data::gen_synthetic(gen_n, gen_size, gen_seed, gen_out);
      err << "wrote " << ds.items.size() << " images to " << gen_out << "\n";
    } else if (*tr) {
      const auto cfg = load_config(tr_config);
      const auto ds = pick_split(tr_data, tr_split, split_fraction, cfg.seed);
      const auto images = ds.load_images();
      err << "training " << net::to_string(cfg.variant) << " on " << images.size() << " images for " << cfg.epochs
          << " epochs\n";
      std::ofstream metrics(tr_metrics, std::ios::trunc);
      if (!metrics) throw Error(ErrorKind::kIo, "cannot write " + tr_metrics);
      const auto result = train::train(cfg, images, [&](const evalkit::EpochStats& s) {
        const auto line = s.to_json();
        metrics << line << "\n" << std::flush;
        err << line << "\n";
      }, threads);
      result.model.save(tr_ckpt);
      err << "saved " << result.model.parameter_count() << " parameters to " << tr_ckpt << "\n";
    } else if (*sga) {
      const auto cfg = load_config(sga_config);
      const auto ds = pick_split(sga_data, sga_split, split_fraction, cfg.seed);
      const auto samples = eval_samples(ds, cfg.eval_seed);
      const auto model = load_encoder(ctx, sga_ckpt, cfg.image_size, cfg.crop_size);
      const auto result = evalkit::sga(*model, samples, threads);
      write_text(sga_out, result.to_json() + "\n");
      char line[160];
      std::snprintf(line, sizeof(line), "SGA over %d samples: %.4f %.4f %.4f %.4f %.4f\n", result.n_samples,
                    result.per_level[0], result.per_level[1], result.per_level[2], result.per_level[3],
                    result.per_level[4]);
      err << line;
    } else if (*tk) {
      const auto cfg = load_config(tk_config);
      const auto all = data::scan_dataset(tk_data);
      const auto queries_ds = pick_split(tk_data, tk_split, split_fraction, cfg.seed);
      const auto model = load_encoder(ctx, tk_ckpt, cfg.image_size, cfg.crop_size);
      std::vector<index::ImageSource> sources;
      for (const auto& it : all.items) sources.push_back({it.image_id, it.path});
      const auto idx = index::build_index(*model, sources, threads,
                                          [&](const std::string& msg) { err << "skipped: " << msg << "\n"; });
      const auto result = evalkit::topk_accuracy(*model, idx, eval_samples(queries_ds, cfg.eval_seed), tk_k, threads);
      write_text(tk_out, result.to_json() + "\n");
      for (std::size_t i = 0; i < result.k_values.size(); ++i) {
        err << "top-" << result.k_values[i] << ": " << result.accuracy[i] << "\n";
      }
    } else if (*ix) {
      const auto ds = data::scan_dataset(ix_data);
      if (ds.items.empty()) throw Error(ErrorKind::kData, "no images under " + ix_data);
      const auto cfg = load_config(ix_config);
      const auto model = load_encoder(ctx, ix_ckpt, cfg.image_size, cfg.crop_size);
      std::vector<index::ImageSource> sources;
      for (const auto& it : ds.items) sources.push_back({it.image_id, it.path});
      const auto idx = index::build_index(*model, sources, threads,
                                          [&](const std::string& msg) { err << "skipped: " << msg << "\n"; });
      idx.save(ix_out);
      err << "indexed " << idx.size() << " images into " << ix_out << "\n";
    } else if (*se) {
      const auto crop = parse_crop(se_crop);
      const auto img = imops::read_image(se_image);
      if (!imops::crop_in_bounds(crop, img.width(), img.height())) {
        throw Error(ErrorKind::kInvalidArgument, "--crop " + se_crop + " is outside the " + std::to_string(img.width()) +
                                                     "x" + std::to_string(img.height()) + " image");
      }
      const auto idx = index::RetrievalIndex::load(se_index);
      const auto cfg = load_config(se_config);
      const auto model = load_encoder(ctx, se_ckpt, cfg.image_size, cfg.crop_size);
      const auto query_img = imops::crop(img, crop);
      const auto results = idx.query(model->encode_crop(query_img), static_cast<std::size_t>(se_k));
      index::emit_report(query_img, results,
                         [&](const std::string& id) {
                           const auto* e = idx.find(id);
                           return imops::read_image(e->path);
                         },
                         se_report);
      for (std::size_t r = 0; r < results.size(); ++r) {
        char line[256];
        std::snprintf(line, sizeof(line), "%2zu  %.4f  %s\n", r + 1, results[r].score, results[r].image_id.c_str());
        err << line;
      }
    }
  } catch (const Error& e) {
    err << "gridseek: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "gridseek: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

}  // namespace gridseek::cli
