#pragma once

#include <array>
#include <string>
#include <vector>

#include "caplab/image.hpp"

namespace caplab {

// Maps values in [0, vmax] through a black-red-yellow-white ramp.
Image heatmap(const GrayImage& values, double vmax);

struct PlotSeries {
  std::vector<double> x;
  std::vector<double> y;
  std::array<double, 3> color{0.0, 0.0, 0.0};
};

// Static line chart: white canvas, framed plot area, each series scaled
// to the joint x/y range. No text rendering.
Image line_plot(const std::vector<PlotSeries>& series, int height = 240,
                int width = 360);

}  // namespace caplab
