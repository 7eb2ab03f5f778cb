#include "plot.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>

#include "json.hpp"
#include "mgcn/error.hpp"
#include "mgcn/format.hpp"

namespace mgcn::plot {

namespace {

constexpr std::uint32_t kBlack = 0x000000, kGrey = 0xdddddd, kWhite = 0xffffff;
constexpr std::uint32_t kPalette[] = {0x1f77b4, 0xd62728, 0x2ca02c, 0xff7f0e, 0x9467bd, 0x8c564b};

std::uint32_t mix(std::uint32_t a, std::uint32_t b, double t) {
    t = std::clamp(t, 0.0, 1.0);
    std::uint32_t out = 0;
    for (int shift : {16, 8, 0}) {
        const double x = static_cast<double>((a >> shift) & 0xff), y = static_cast<double>((b >> shift) & 0xff);
        out |= static_cast<std::uint32_t>(std::lround(x + (y - x) * t)) << shift;
    }
    return out;
}

void line(Image& img, long x0, long y0, long x1, long y1, std::uint32_t color) {
    const long dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    long err = dx + dy;
    for (;;) {
        img.set(x0, y0, color);
        img.set(x0, y0 + 1, color);
        if (x0 == x1 && y0 == y1) return;
        const long e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

void fill(Image& img, long x0, long y0, long x1, long y1, std::uint32_t color) {
    for (long y = std::min(y0, y1); y <= std::max(y0, y1); ++y)
        for (long x = std::min(x0, x1); x <= std::max(x0, x1); ++x) img.set(x, y, color);
}

struct Frame {
    long left = 60, right = 20, top = 20, bottom = 40;
    long width = 640, height = 400;
    double x_lo = 0, x_hi = 1, y_lo = 0, y_hi = 1;

    long px(double x) const {
        return left + std::lround((x - x_lo) / (x_hi - x_lo) * static_cast<double>(width - left - right));
    }
    long py(double y) const {
        return height - bottom - std::lround((y - y_lo) / (y_hi - y_lo) * static_cast<double>(height - top - bottom));
    }
};

void pad_range(double& lo, double& hi) {
    if (!std::isfinite(lo) || !std::isfinite(hi)) {
        lo = 0.0;
        hi = 1.0;
    }
    if (hi - lo < 1e-12) {
        lo -= 0.5;
        hi += 0.5;
    }
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
}

void axes(Image& img, const Frame& f) {
    for (int k = 0; k <= 4; ++k) {
        const long y = f.top + k * (f.height - f.top - f.bottom) / 4;
        line(img, f.left, y, f.width - f.right, y, kGrey);
    }
    line(img, f.left, f.top, f.left, f.height - f.bottom, kBlack);
    line(img, f.left, f.height - f.bottom, f.width - f.right, f.height - f.bottom, kBlack);
}

} // namespace

Image::Image(std::size_t w, std::size_t h) : width(w), height(h), rgb(w * h * 3, 0xff) {}

void Image::set(long x, long y, std::uint32_t color) {
    if (x < 0 || y < 0 || static_cast<std::size_t>(x) >= width || static_cast<std::size_t>(y) >= height) return;
    auto* p = &rgb[(static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)) * 3];
    p[0] = static_cast<std::uint8_t>(color >> 16);
    p[1] = static_cast<std::uint8_t>(color >> 8);
    p[2] = static_cast<std::uint8_t>(color);
}

void write_png(const std::filesystem::path& path, const Image& image) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(tmp.c_str(), "wb"), &std::fclose);
    if (!file) throw ValidationError("cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (png == nullptr || info == nullptr) {
        png_destroy_write_struct(&png, nullptr);
        throw Error("png: out of memory");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("png: failed writing " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t y = 0; y < image.height; ++y) {
        png_write_row(png, const_cast<png_bytep>(&image.rgb[y * image.width * 3]));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    file.reset();
    std::filesystem::rename(tmp, path);
}

Image heatmap(const Tensor& values) {
    if (values.empty()) throw ValidationError("plot: empty matrix");
    const std::size_t cell = std::max<std::size_t>(2, 512 / std::max(values.rows(), values.cols()));
    Image img(values.cols() * cell, values.rows() * cell);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double v : values.values()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const bool diverging = lo < 0.0;
    const double scale = diverging ? std::max(std::abs(lo), std::abs(hi)) : hi;
    for (std::size_t r = 0; r < values.rows(); ++r)
        for (std::size_t c = 0; c < values.cols(); ++c) {
            const double v = scale > 0.0 ? values(r, c) / scale : 0.0;
            const std::uint32_t color = diverging ? (v < 0 ? mix(kWhite, 0x2166ac, -v) : mix(kWhite, 0xb2182b, v))
                                                  : mix(kWhite, 0x08306b, v);
            fill(img, static_cast<long>(c * cell), static_cast<long>(r * cell), static_cast<long>((c + 1) * cell - 1),
                 static_cast<long>((r + 1) * cell - 1), color);
        }
    return img;
}

Image line_plot(const std::vector<double>& x, const std::vector<Series>& series, bool log_x) {
    Frame f;
    Image img(static_cast<std::size_t>(f.width), static_cast<std::size_t>(f.height));
    auto tx = [&](double v) { return log_x ? std::log10(v) : v; };
    f.x_lo = f.y_lo = std::numeric_limits<double>::infinity();
    f.x_hi = f.y_hi = -f.x_lo;
    for (double v : x) {
        if (!std::isfinite(tx(v))) continue;
        f.x_lo = std::min(f.x_lo, tx(v));
        f.x_hi = std::max(f.x_hi, tx(v));
    }
    for (const auto& s : series)
        for (double v : s.y) {
            if (!std::isfinite(v)) continue;
            f.y_lo = std::min(f.y_lo, v);
            f.y_hi = std::max(f.y_hi, v);
        }
    pad_range(f.x_lo, f.x_hi);
    pad_range(f.y_lo, f.y_hi);
    axes(img, f);
    for (std::size_t k = 0; k < series.size(); ++k) {
        const std::uint32_t color = kPalette[k % std::size(kPalette)];
        bool have = false;
        long lx = 0, ly = 0;
        for (std::size_t i = 0; i < x.size() && i < series[k].y.size(); ++i) {
            const double xv = tx(x[i]), yv = series[k].y[i];
            if (!std::isfinite(xv) || !std::isfinite(yv)) {
                have = false;
                continue;
            }
            const long cx = f.px(xv), cy = f.py(yv);
            if (have) line(img, lx, ly, cx, cy, color);
            fill(img, cx - 2, cy - 2, cx + 2, cy + 2, color);
            lx = cx;
            ly = cy;
            have = true;
        }
    }
    return img;
}

Image bar_plot(const std::vector<double>& heights, const std::vector<double>& errors) {
    Frame f;
    Image img(static_cast<std::size_t>(f.width), static_cast<std::size_t>(f.height));
    f.x_lo = 0.0;
    f.x_hi = static_cast<double>(std::max<std::size_t>(heights.size(), 1));
    f.y_lo = 0.0;
    f.y_hi = 0.0;
    for (std::size_t i = 0; i < heights.size(); ++i) {
        const double e = i < errors.size() && std::isfinite(errors[i]) ? errors[i] : 0.0;
        if (std::isfinite(heights[i])) f.y_hi = std::max(f.y_hi, heights[i] + e);
    }
    f.y_hi = f.y_hi > 0.0 ? 1.1 * f.y_hi : 1.0;
    axes(img, f);
    for (std::size_t i = 0; i < heights.size(); ++i) {
        if (!std::isfinite(heights[i])) continue;
        const std::uint32_t color = kPalette[i % std::size(kPalette)];
        const double mid = static_cast<double>(i) + 0.5;
        fill(img, f.px(mid - 0.3), f.py(heights[i]), f.px(mid + 0.3), f.py(0.0), color);
        if (i < errors.size() && std::isfinite(errors[i]) && errors[i] > 0.0) {
            const long cx = f.px(mid);
            line(img, cx, f.py(heights[i] - errors[i]), cx, f.py(heights[i] + errors[i]), kBlack);
            line(img, cx - 6, f.py(heights[i] + errors[i]), cx + 6, f.py(heights[i] + errors[i]), kBlack);
            line(img, cx - 6, f.py(heights[i] - errors[i]), cx + 6, f.py(heights[i] - errors[i]), kBlack);
        }
    }
    return img;
}

void plot_file(const std::filesystem::path& in, const std::filesystem::path& out) {
    if (!std::filesystem::exists(in)) throw ValidationError("plot: input not found: " + in.string());
    const std::string text = read_file(in);
    const std::string head = trim(text.substr(0, text.find('\n')));
    if (!head.empty() && head.front() == '{') {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw ValidationError("plot: " + in.string() + ": invalid JSON");
        }
        if (!j.contains("models")) throw ValidationError("plot: " + in.string() + ": no 'models' in report");
        std::vector<double> means, stds;
        for (const auto& m : j["models"]) {
            means.push_back(m.value("rmse_mean", std::numeric_limits<double>::quiet_NaN()));
            stds.push_back(m.value("rmse_std", 0.0));
        }
        write_png(out, bar_plot(means, stds));
        return;
    }
    const bool has_header = !head.empty() && head.find_first_of("abcdfghijklmnopqrstuvwxyzABCDFGHIJKLMOPQRSTUVWXYZ_") !=
                                                 std::string::npos;
    if (!has_header) {
        write_png(out, heatmap(matrix_from_csv(text, in.string())));
        return;
    }
    const auto names = split(head, ',');
    bool rmse_only = false;
    for (const auto& n : names) rmse_only = rmse_only || trim(n).ends_with("_rmse");
    std::vector<std::size_t> keep;
    std::vector<Series> series;
    for (std::size_t c = 1; c < names.size(); ++c) {
        const std::string n = trim(names[c]);
        if (n == "seconds" || n == "edges" || (rmse_only && !n.ends_with("_rmse"))) continue;
        keep.push_back(c);
        series.push_back({n, {}});
    }
    std::vector<double> x;
    std::size_t row = 1;
    const auto first_break = text.find('\n');
    for (const auto& raw : split(first_break == std::string::npos ? std::string() : text.substr(first_break + 1), '\n')) {
        const std::string l = trim(raw);
        if (l.empty()) continue;
        ++row;
        const auto cells = split(l, ',');
        const std::string loc = in.string() + " row " + std::to_string(row);
        if (cells.size() != names.size()) {
            throw ValidationError("plot: " + loc + " has " + std::to_string(cells.size()) + " columns, expected " +
                                  std::to_string(names.size()));
        }
        x.push_back(parse_double(cells[0], loc + " col 1"));
        for (std::size_t k = 0; k < keep.size(); ++k) {
            const std::string cell = trim(cells[keep[k]]);
            series[k].y.push_back(cell.empty() ? std::numeric_limits<double>::quiet_NaN()
                                               : parse_double(cell, loc + " col " + std::to_string(keep[k] + 1)));
        }
    }
    const bool log_x = trim(names[0]) == "beta" && !x.empty() &&
                       std::all_of(x.begin(), x.end(), [](double v) { return v > 0.0; });
    write_png(out, line_plot(x, series, log_x));
}

} // namespace mgcn::plot
