#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "fundus/core/image.hpp"
#include "fundus/io/png_io.hpp"
#include "fundus/plot/font.hpp"

namespace fundus::plot {

struct Color {
    float r = 0, g = 0, b = 0;
};

inline constexpr Color kPalette[] = {
    {0.12f, 0.47f, 0.71f}, {0.84f, 0.15f, 0.16f}, {0.17f, 0.63f, 0.17f},
    {1.00f, 0.50f, 0.05f}, {0.58f, 0.40f, 0.74f}, {0.55f, 0.34f, 0.29f},
};

class Canvas {
public:
    Canvas(int w, int h) : img_(h, w, 1.0f) {}

    int width() const { return img_.width; }
    int height() const { return img_.height; }
    Image& image() { return img_; }

    void blend_pixel(int x, int y, const Color& c, double alpha) {
        if (x < 0 || x >= img_.width || y < 0 || y >= img_.height || alpha <= 0) return;
        const float a = static_cast<float>(std::min(alpha, 1.0));
        img_.at(0, y, x) += a * (c.r - img_.at(0, y, x));
        img_.at(1, y, x) += a * (c.g - img_.at(1, y, x));
        img_.at(2, y, x) += a * (c.b - img_.at(2, y, x));
    }

    void disc(double cx, double cy, double radius, const Color& c) {
        for (int y = static_cast<int>(cy - radius - 1); y <= cy + radius + 1; ++y)
            for (int x = static_cast<int>(cx - radius - 1); x <= cx + radius + 1; ++x) {
                const double d = std::hypot(x - cx, y - cy);
                blend_pixel(x, y, c, std::clamp(radius + 0.5 - d, 0.0, 1.0));
            }
    }

    void line(double x0, double y0, double x1, double y1, const Color& c, double thickness = 1.2) {
        const double len = std::hypot(x1 - x0, y1 - y0);
        const int steps = std::max(1, static_cast<int>(len / 0.5));
        for (int i = 0; i <= steps; ++i) {
            const double t = static_cast<double>(i) / steps;
            disc(x0 + t * (x1 - x0), y0 + t * (y1 - y0), thickness / 2, c);
        }
    }

    void text(int x, int y, const std::string& s, const Color& c, int scale = 1) {
        int cx = x;
        for (char ch : s) {
            const int code = static_cast<unsigned char>(ch);
            if (code >= 32 && code < 127) {
                const unsigned char* rows = kFontBitmap + (code - 32) * kFontHeight;
                for (int ry = 0; ry < kFontHeight; ++ry)
                    for (int rx = 0; rx < kFontWidth; ++rx)
                        if (rows[ry] >> rx & 1)
                            for (int sy = 0; sy < scale; ++sy)
                                for (int sx = 0; sx < scale; ++sx)
                                    blend_pixel(cx + rx * scale + sx, y + ry * scale + sy, c, 1.0);
            }
            cx += kFontWidth * scale;
        }
    }

    static int text_width(const std::string& s, int scale = 1) {
        return static_cast<int>(s.size()) * kFontWidth * scale;
    }

    void save(const std::string& path) const { write_png_rgb8(path, img_); }

private:
    Image img_;
};

struct Series {
    std::string label;
    std::vector<double> x, y;
    Color color{};
    bool markers = true;
};

namespace detail {

inline double nice_step(double range, int target_ticks) {
    if (range <= 0) return 1.0;
    const double raw = range / target_ticks;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    for (double m : {1.0, 2.0, 5.0, 10.0})
        if (raw <= m * mag) return m * mag;
    return 10.0 * mag;
}

inline std::string tick_label(double v) {
    char buf[32];
    if (v != 0 && (std::abs(v) >= 1e4 || std::abs(v) < 1e-3))
        std::snprintf(buf, sizeof(buf), "%.1e", v);
    else
        std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

}  // namespace detail

/// Line chart with axes, ticks, and a legend. With log2_x the x values are
/// plotted on a log2 scale and ticks land on the data points (latent sizes).
inline void line_plot(const std::string& path, std::vector<Series> series,
                      const std::string& title, const std::string& xlabel,
                      const std::string& ylabel, bool log2_x = false) {
    const int W = 880, H = 620;
    const int ml = 86, mr = 24, mt = 46, mb = 64;
    Canvas cv(W, H);
    const Color black{0, 0, 0}, grey{0.82f, 0.82f, 0.82f};

    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (size_t i = 0; i < series.size(); ++i) {
        if (series[i].color.r == 0 && series[i].color.g == 0 && series[i].color.b == 0)
            series[i].color = kPalette[i % std::size(kPalette)];
        for (size_t j = 0; j < series[i].x.size(); ++j) {
            const double xv = log2_x ? std::log2(series[i].x[j]) : series[i].x[j];
            xmin = std::min(xmin, xv);
            xmax = std::max(xmax, xv);
            ymin = std::min(ymin, series[i].y[j]);
            ymax = std::max(ymax, series[i].y[j]);
        }
    }
    if (xmin > xmax) {
        xmin = 0;
        xmax = 1;
    }
    if (ymin > ymax) {
        ymin = 0;
        ymax = 1;
    }
    if (xmax - xmin < 1e-12) {
        xmin -= 0.5;
        xmax += 0.5;
    }
    const double ypad = (ymax - ymin < 1e-12) ? std::max(0.5, std::abs(ymax) * 0.1)
                                              : 0.06 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    const auto px = [&](double xv) { return ml + (xv - xmin) / (xmax - xmin) * (W - ml - mr); };
    const auto py = [&](double yv) { return H - mb - (yv - ymin) / (ymax - ymin) * (H - mt - mb); };

    // y ticks and grid
    const double ystep = detail::nice_step(ymax - ymin, 5);
    for (double v = std::ceil(ymin / ystep) * ystep; v <= ymax + 1e-12; v += ystep) {
        const int y = static_cast<int>(py(v));
        cv.line(ml, y, W - mr, y, grey, 1.0);
        const std::string lab = detail::tick_label(std::abs(v) < ystep * 1e-9 ? 0.0 : v);
        cv.text(ml - 8 - Canvas::text_width(lab), y - kFontHeight / 2, lab, black);
    }
    // x ticks
    if (log2_x) {
        for (double e = std::ceil(xmin - 1e-9); e <= xmax + 1e-9; e += 1.0) {
            const int x = static_cast<int>(px(e));
            cv.line(x, H - mb, x, H - mb + 5, black, 1.0);
            const std::string lab = detail::tick_label(std::pow(2.0, e));
            cv.text(x - Canvas::text_width(lab) / 2, H - mb + 9, lab, black);
        }
    } else {
        const double xstep = detail::nice_step(xmax - xmin, 6);
        for (double v = std::ceil(xmin / xstep) * xstep; v <= xmax + 1e-12; v += xstep) {
            const int x = static_cast<int>(px(v));
            cv.line(x, H - mb, x, H - mb + 5, black, 1.0);
            const std::string lab = detail::tick_label(std::abs(v) < xstep * 1e-9 ? 0.0 : v);
            cv.text(x - Canvas::text_width(lab) / 2, H - mb + 9, lab, black);
        }
    }
    // frame
    cv.line(ml, mt, ml, H - mb, black, 1.4);
    cv.line(ml, H - mb, W - mr, H - mb, black, 1.4);

    for (const auto& s : series) {
        for (size_t j = 0; j + 1 < s.x.size(); ++j) {
            const double a = log2_x ? std::log2(s.x[j]) : s.x[j];
            const double b = log2_x ? std::log2(s.x[j + 1]) : s.x[j + 1];
            cv.line(px(a), py(s.y[j]), px(b), py(s.y[j + 1]), s.color, 2.0);
        }
        if (s.markers)
            for (size_t j = 0; j < s.x.size(); ++j)
                cv.disc(px(log2_x ? std::log2(s.x[j]) : s.x[j]), py(s.y[j]), 3.0, s.color);
    }

    cv.text((W - Canvas::text_width(title, 2)) / 2, 10, title, black, 2);
    cv.text((W - Canvas::text_width(xlabel)) / 2, H - mb + 30, xlabel, black);
    cv.text(8, mt - 20, ylabel, black);

    int ly = mt + 8;
    for (const auto& s : series) {
        if (s.label.empty()) continue;
        const int lx = W - mr - 150;
        cv.line(lx, ly + kFontHeight / 2, lx + 22, ly + kFontHeight / 2, s.color, 2.4);
        cv.text(lx + 28, ly, s.label, black);
        ly += kFontHeight + 6;
    }
    cv.save(path);
}

/// Class-colored 2-D scatter (cluster plots).
inline void scatter_plot(const std::string& path, const std::vector<double>& xs,
                         const std::vector<double>& ys, const std::vector<int>& cls,
                         const std::vector<std::string>& class_names, const std::string& title) {
    const int W = 720, H = 640;
    const int ml = 60, mr = 20, mt = 46, mb = 40;
    Canvas cv(W, H);
    const Color black{0, 0, 0};

    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (size_t i = 0; i < xs.size(); ++i) {
        xmin = std::min(xmin, xs[i]);
        xmax = std::max(xmax, xs[i]);
        ymin = std::min(ymin, ys[i]);
        ymax = std::max(ymax, ys[i]);
    }
    if (xmin > xmax) {
        xmin = 0;
        xmax = 1;
        ymin = 0;
        ymax = 1;
    }
    const double xpad = std::max(1e-9, 0.05 * (xmax - xmin)), ypad = std::max(1e-9, 0.05 * (ymax - ymin));
    xmin -= xpad;
    xmax += xpad;
    ymin -= ypad;
    ymax += ypad;

    const auto px = [&](double v) { return ml + (v - xmin) / (xmax - xmin) * (W - ml - mr); };
    const auto py = [&](double v) { return H - mb - (v - ymin) / (ymax - ymin) * (H - mt - mb); };

    cv.line(ml, mt, ml, H - mb, black, 1.4);
    cv.line(ml, H - mb, W - mr, H - mb, black, 1.4);
    for (size_t i = 0; i < xs.size(); ++i)
        cv.disc(px(xs[i]), py(ys[i]), 2.6, kPalette[cls[i] % std::size(kPalette)]);

    cv.text((W - Canvas::text_width(title, 2)) / 2, 10, title, black, 2);
    int ly = mt + 8;
    for (size_t c = 0; c < class_names.size(); ++c) {
        const int lx = W - mr - 140;
        cv.disc(lx + 6, ly + kFontHeight / 2, 4, kPalette[c % std::size(kPalette)]);
        cv.text(lx + 18, ly, class_names[c], black);
        ly += kFontHeight + 6;
    }
    cv.save(path);
}

}  // namespace fundus::plot
