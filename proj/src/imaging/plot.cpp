#include "caplab/plot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace caplab {

Image heatmap(const GrayImage& values, double vmax) {
  Image out(values.height(), values.width(), 3);
  const double scale = vmax > 0.0 ? 1.0 / vmax : 0.0;
  for (int y = 0; y < values.height(); ++y) {
    for (int x = 0; x < values.width(); ++x) {
      const double t = std::clamp(values.at(y, x) * scale, 0.0, 1.0);
      out.at(y, x, 0) = std::clamp(3.0 * t, 0.0, 1.0);
      out.at(y, x, 1) = std::clamp(3.0 * t - 1.0, 0.0, 1.0);
      out.at(y, x, 2) = std::clamp(3.0 * t - 2.0, 0.0, 1.0);
    }
  }
  return out;
}

namespace {

void put(Image& img, int y, int x, const std::array<double, 3>& color) {
  if (y < 0 || x < 0 || y >= img.height() || x >= img.width()) return;
  for (int c = 0; c < 3; ++c) img.at(y, x, c) = color[c];
}

void draw_line(Image& img, double y0, double x0, double y1, double x1,
               const std::array<double, 3>& color) {
  const int steps = static_cast<int>(std::max(std::abs(y1 - y0), std::abs(x1 - x0))) + 1;
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    const int y = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
    const int x = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
    put(img, y, x, color);
    put(img, y + 1, x, color);
  }
}

}  // namespace

Image line_plot(const std::vector<PlotSeries>& series, int height, int width) {
  Image img(height, width, 3, 1.0);
  const int margin = 12;
  const std::array<double, 3> frame{0.3, 0.3, 0.3};
  draw_line(img, margin, margin, height - margin, margin, frame);
  draw_line(img, height - margin, margin, height - margin, width - margin, frame);

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (!(xmax >= xmin) || !(ymax >= ymin)) return img;
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) ymax = ymin + 1.0;
  const double pw = width - 2.0 * margin;
  const double ph = height - 2.0 * margin;
  auto px = [&](double x) { return margin + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return height - margin - (y - ymin) / (ymax - ymin) * ph; };
  for (const auto& s : series) {
    for (std::size_t i = 1; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.y[i]) || !std::isfinite(s.y[i - 1])) continue;
      draw_line(img, py(s.y[i - 1]), px(s.x[i - 1]), py(s.y[i]), px(s.x[i]), s.color);
    }
  }
  return img;
}

}  // namespace caplab
