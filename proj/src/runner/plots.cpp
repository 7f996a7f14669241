#include "fedclean/runner.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <spdlog/fmt/fmt.h>

#include <algorithm>
#include <map>
#include <set>

namespace fedclean::runner {

namespace {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;  // x, mean y
};

const std::vector<cv::Scalar>& palette() {
  // BGR
  static const std::vector<cv::Scalar> colors{{180, 119, 31}, {14, 127, 255}, {44, 160, 44},
                                              {40, 39, 214},  {189, 103, 148}, {75, 86, 140}};
  return colors;
}

void text(cv::Mat& img, const std::string& s, cv::Point at, double scale = 0.45, int thick = 1,
          cv::Scalar color = {30, 30, 30}) {
  cv::putText(img, s, at, cv::FONT_HERSHEY_SIMPLEX, scale, color, thick, cv::LINE_AA);
}

cv::Mat line_chart(const std::string& title, const std::string& xlabel, const std::vector<double>& xs,
                   const std::vector<Series>& series) {
  const int W = 820, H = 560, left = 70, right = 190, top = 50, bottom = 70;
  cv::Mat img(H, W, CV_8UC3, cv::Scalar(255, 255, 255));
  const int pw = W - left - right, ph = H - top - bottom;
  const double xmin = xs.front(), xmax = xs.back();
  auto px = [&](double x) {
    return left + static_cast<int>(xmax > xmin ? (x - xmin) / (xmax - xmin) * pw : pw / 2.0);
  };
  auto py = [&](double y) { return top + static_cast<int>((1.0 - y) * ph); };

  for (int i = 0; i <= 10; ++i) {
    const double y = i / 10.0;
    cv::line(img, {left, py(y)}, {left + pw, py(y)}, cv::Scalar(230, 230, 230), 1);
    text(img, fmt::format("{:.1f}", y), {left - 38, py(y) + 5});
  }
  for (double x : xs) {
    text(img, fmt::format("{:g}", x), {px(x) - 10, top + ph + 20});
  }
  cv::rectangle(img, {left, top}, {left + pw, top + ph}, cv::Scalar(60, 60, 60), 1);
  text(img, title, {left, 30}, 0.6, 1);
  text(img, xlabel, {left + pw / 2 - 40, H - 25}, 0.5);
  text(img, "macro-F1", {8, top - 12}, 0.5);

  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto color = palette()[s % palette().size()];
    const auto& pts = series[s].points;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const cv::Point p{px(pts[i].first), py(pts[i].second)};
      cv::circle(img, p, 4, color, cv::FILLED, cv::LINE_AA);
      if (i > 0) {
        cv::line(img, {px(pts[i - 1].first), py(pts[i - 1].second)}, p, color, 2, cv::LINE_AA);
      }
    }
    const int ly = top + 20 + static_cast<int>(s) * 22;
    cv::line(img, {left + pw + 15, ly - 4}, {left + pw + 40, ly - 4}, color, 2, cv::LINE_AA);
    text(img, series[s].name, {left + pw + 46, ly});
  }
  return img;
}

cv::Mat heatmap(const std::vector<std::string>& rows, const std::vector<std::string>& cols,
                const std::map<std::pair<std::string, std::string>, double>& values) {
  const int cell_w = 150, cell_h = 48, left = 140, top = 70;
  const int W = left + cell_w * static_cast<int>(cols.size()) + 110;
  const int H = top + cell_h * static_cast<int>(rows.size()) + 30;
  cv::Mat img(H, W, CV_8UC3, cv::Scalar(255, 255, 255));
  text(img, "mean macro-F1 by variant and dataset", {10, 28}, 0.6);

  cv::Mat gray(1, 1, CV_8UC1);
  cv::Mat colored;
  for (std::size_t c = 0; c < cols.size(); ++c) {
    text(img, cols[c], {left + static_cast<int>(c) * cell_w + 10, top - 12}, 0.5);
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const int y = top + static_cast<int>(r) * cell_h;
    text(img, rows[r], {10, y + cell_h / 2 + 5}, 0.5);
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const int x = left + static_cast<int>(c) * cell_w;
      const auto it = values.find({rows[r], cols[c]});
      if (it == values.end()) {
        cv::rectangle(img, {x, y}, {x + cell_w - 2, y + cell_h - 2}, cv::Scalar(240, 240, 240), cv::FILLED);
        text(img, "n/a", {x + cell_w / 2 - 14, y + cell_h / 2 + 5});
        continue;
      }
      gray.at<std::uint8_t>(0, 0) = static_cast<std::uint8_t>(std::clamp(it->second, 0.0, 1.0) * 255.0);
      cv::applyColorMap(gray, colored, cv::COLORMAP_VIRIDIS);
      const auto v = colored.at<cv::Vec3b>(0, 0);
      cv::rectangle(img, {x, y}, {x + cell_w - 2, y + cell_h - 2}, cv::Scalar(v[0], v[1], v[2]), cv::FILLED);
      const auto ink = it->second > 0.6 ? cv::Scalar(20, 20, 20) : cv::Scalar(250, 250, 250);
      text(img, fmt::format("{:.3f}", it->second), {x + cell_w / 2 - 24, y + cell_h / 2 + 6}, 0.55, 1, ink);
    }
  }
  // colour bar
  const int bx = left + cell_w * static_cast<int>(cols.size()) + 30;
  const int bh = cell_h * static_cast<int>(rows.size());
  for (int i = 0; i < bh; ++i) {
    gray.at<std::uint8_t>(0, 0) = static_cast<std::uint8_t>(255.0 * (1.0 - static_cast<double>(i) / bh));
    cv::applyColorMap(gray, colored, cv::COLORMAP_VIRIDIS);
    const auto v = colored.at<cv::Vec3b>(0, 0);
    cv::line(img, {bx, top + i}, {bx + 18, top + i}, cv::Scalar(v[0], v[1], v[2]), 1);
  }
  text(img, "1.0", {bx + 22, top + 8}, 0.4);
  text(img, "0.0", {bx + 22, top + bh}, 0.4);
  return img;
}

template <typename Key>
std::vector<Series> mean_by(const std::vector<ResultRow>& rows, const std::string& dataset, Key key,
                            std::vector<double>& xs) {
  std::vector<std::string> variant_order;
  std::map<std::string, std::map<double, std::pair<double, int>>> acc;
  std::set<double> xset;
  for (const auto& r : rows) {
    if (r.dataset != dataset) {
      continue;
    }
    if (!acc.contains(r.variant)) {
      variant_order.push_back(r.variant);
    }
    auto& cell = acc[r.variant][key(r)];
    cell.first += r.macro_f1;
    cell.second += 1;
    xset.insert(key(r));
  }
  xs.assign(xset.begin(), xset.end());
  std::vector<Series> out;
  for (const auto& v : variant_order) {
    Series s{v, {}};
    for (const auto& [x, sum] : acc[v]) {
      s.points.emplace_back(x, sum.first / sum.second);
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

std::vector<std::filesystem::path> write_plots(const std::vector<ResultRow>& rows,
                                               const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  std::vector<std::string> datasets;
  std::vector<std::string> variants;
  for (const auto& r : rows) {
    if (std::find(datasets.begin(), datasets.end(), r.dataset) == datasets.end()) {
      datasets.push_back(r.dataset);
    }
    if (std::find(variants.begin(), variants.end(), r.variant) == variants.end()) {
      variants.push_back(r.variant);
    }
  }
  auto save = [&](const std::filesystem::path& p, const cv::Mat& img) {
    if (!cv::imwrite(p.string(), img)) {
      throw ConfigError("cannot write plot " + p.string());
    }
    written.push_back(p);
  };

  for (const auto& ds : datasets) {
    std::vector<double> xs;
    auto by_noise = mean_by(rows, ds, [](const ResultRow& r) { return r.noise; }, xs);
    save(dir / ("f1_vs_noise_" + ds + ".png"),
         line_chart(ds + ": macro-F1 vs noise ratio (mean over missing counts, seeds)", "noise ratio", xs,
                    by_noise));
    auto by_missing =
        mean_by(rows, ds, [](const ResultRow& r) { return static_cast<double>(r.missing); }, xs);
    save(dir / ("f1_vs_missing_" + ds + ".png"),
         line_chart(ds + ": macro-F1 vs missing classes (mean over noise, seeds)", "missing classes per client",
                    xs, by_missing));
  }

  std::map<std::pair<std::string, std::string>, std::pair<double, int>> acc;
  for (const auto& r : rows) {
    auto& a = acc[{r.variant, r.dataset}];
    a.first += r.macro_f1;
    a.second += 1;
  }
  std::map<std::pair<std::string, std::string>, double> means;
  for (const auto& [k, a] : acc) {
    means[k] = a.first / a.second;
  }
  save(dir / "heatmap.png", heatmap(variants, datasets, means));
  return written;
}

}  // namespace fedclean::runner
