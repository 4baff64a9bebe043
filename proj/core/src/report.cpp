#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gridseek/index.hpp"

namespace gridseek::index {

namespace {

constexpr int kThumbnail = 128;

std::string data_uri(const imops::Image& img) {
  const int w = img.width(), h = img.height();
  const double scale = static_cast<double>(kThumbnail) / std::max(w, h);
  const auto thumb = imops::resize(img, std::max(1, static_cast<int>(std::lround(w * scale))),
                                   std::max(1, static_cast<int>(std::lround(h * scale))),
                                   imops::Interpolation::kNearest);
  return "data:image/png;base64," + imops::base64_encode(imops::encode_png(thumb));
}

std::string escape_html(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string rank_color(std::size_t rank, std::size_t k) {
  if (k == 0 || rank >= k) throw Error(ErrorKind::kInvalidArgument, "rank must be below k");
  const double t = k == 1 ? 0.0 : static_cast<double>(rank) / static_cast<double>(k - 1);
  const auto red = static_cast<int>(std::lround(255.0 * (1.0 - t)));
  const auto blue = static_cast<int>(std::lround(255.0 * t));
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02X%02X%02X", red, 0, blue);
  return buf;
}

std::string render_report(const imops::Image& query_crop, std::span<const RankedResult> results,
                          const std::function<imops::Image(const std::string&)>& load_image) {
  if (results.empty()) throw Error(ErrorKind::kInvalidArgument, "report needs at least one result");
  std::ostringstream html;
  html << "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>gridseek search</title>\n"
       << "<style>\n"
       << "body{font-family:sans-serif;margin:16px}\n"
       << ".result{display:inline-block;margin:6px;text-align:center;font-size:12px}\n"
       << ".result img{border-style:solid;border-width:6px;display:block}\n"
       << "</style>\n</head>\n<body>\n"
       << "<h2>Query crop</h2>\n<img class=\"query\" src=\"" << data_uri(query_crop) << "\">\n"
       << "<h2>Top " << results.size() << " images</h2>\n<div class=\"results\">\n";
  for (std::size_t r = 0; r < results.size(); ++r) {
    const auto& res = results[r];
    char score[32];
    std::snprintf(score, sizeof(score), "%.4f", res.score);
    html << "<div class=\"result\" data-rank=\"" << (r + 1) << "\">"
         << "<img style=\"border-color:" << rank_color(r, results.size()) << "\" src=\""
         << data_uri(load_image(res.image_id)) << "\">"
         << "#" << (r + 1) << " " << escape_html(res.image_id) << "<br>score " << score << "<br>cell L"
         << res.best_cell.level << " (" << res.best_cell.row << "," << res.best_cell.col << ")</div>\n";
  }
  html << "</div>\n</body>\n</html>\n";
  return html.str();
}

void emit_report(const imops::Image& query_crop, std::span<const RankedResult> results,
                 const std::function<imops::Image(const std::string&)>& load_image, const std::string& out_path) {
  const auto html = render_report(query_crop, results, load_image);
  std::ofstream f(out_path, std::ios::trunc);
  if (!f) throw Error(ErrorKind::kIo, "cannot write report to " + out_path);
  f << html;
  if (!f) throw Error(ErrorKind::kIo, "write failed for " + out_path);
}

}  // namespace gridseek::index
