#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "gridseek/data.hpp"
#include "gridseek/error.hpp"
#include "gridseek/evalkit.hpp"
#include "gridseek/net.hpp"

namespace gridseek::cli {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumeric = 3 };

int exit_code_for(ErrorKind kind);

// Evaluation crops: one sample_crop per image, keyed by (eval_seed, position).
std::vector<evalkit::EvalSample> eval_samples(const data::Dataset& ds, std::uint64_t eval_seed);

struct Hooks {
  // Replaces checkpoint loading for eval-sga / eval-topk / index / search.
  std::function<std::unique_ptr<net::Encoder>(const std::string& ckpt_path)> load_encoder;
};

// Full command-line entry point. Machine-readable results go to files,
// progress to `err`, help text to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const Hooks& hooks = {});

}  // namespace gridseek::cli
