#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mgcn/tensor.hpp"

namespace mgcn::plot {

struct Image {
    std::size_t width = 0, height = 0;
    std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

    Image(std::size_t w, std::size_t h);
    void set(long x, long y, std::uint32_t color);
};

void write_png(const std::filesystem::path& path, const Image& image);

// Values mapped to a white-to-blue ramp, or blue-white-red when any value
// is negative.
Image heatmap(const Tensor& values);

struct Series {
    std::string name;
    std::vector<double> y;
};

// Polylines over a shared x; non-finite points are skipped. log_x plots
// against log10(x).
Image line_plot(const std::vector<double>& x, const std::vector<Series>& series, bool log_x);

// Bars with optional +-error whiskers.
Image bar_plot(const std::vector<double>& heights, const std::vector<double>& errors);

// Picks a plot from the input: an evaluation JSON report becomes a bar chart
// of mean RMSE, a CSV with a header row becomes line plots of its columns
// against the first (log x for a "beta" column; only *_rmse columns when
// present; count and timing columns skipped), and a header-free numeric
// CSV becomes a heatmap.
void plot_file(const std::filesystem::path& in, const std::filesystem::path& out);

} // namespace mgcn::plot
