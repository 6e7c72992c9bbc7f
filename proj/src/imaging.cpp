#include "fundus/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fundus/error.hpp"

namespace fundus {

namespace {

constexpr std::string_view kModule = "imaging";

[[noreturn]] void fail(ErrorCode code, const std::string& detail) { throw Error(kModule, code, detail); }

std::size_t clamp_index(long long v, std::size_t n) {
    if (v < 0) return 0;
    if (static_cast<std::size_t>(v) >= n) return n - 1;
    return static_cast<std::size_t>(v);
}

std::vector<double> gaussian_kernel(double sigma) {
    if (sigma <= 0.0) return {1.0};
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    for (int i = -radius; i <= radius; ++i) k[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    const double sum = std::accumulate(k.begin(), k.end(), 0.0);
    for (auto& v : k) v /= sum;
    return k;
}

GrayImage gaussian_blur(const GrayImage& img, double sigma) {
    const auto k = gaussian_kernel(sigma);
    const long long r = static_cast<long long>(k.size() / 2);
    const std::size_t w = img.width(), h = img.height();
    GrayImage tmp(w, h), out(w, h);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (long long i = -r; i <= r; ++i)
                acc += k[i + r] * img.at(clamp_index(static_cast<long long>(x) + i, w), y);
            tmp.at(x, y) = acc;
        }
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (long long i = -r; i <= r; ++i)
                acc += k[i + r] * tmp.at(x, clamp_index(static_cast<long long>(y) + i, h));
            out.at(x, y) = acc;
        }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------

GrayImage::GrayImage(std::size_t width, std::size_t height, double fill)
    : width_(width), height_(height), pixels_(width * height, fill) {}

GrayImage::GrayImage(std::size_t width, std::size_t height, std::vector<double> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
    if (pixels_.size() != width_ * height_) fail(ErrorCode::DimMismatch, "pixel count != width*height");
    for (double v : pixels_)
        if (!std::isfinite(v) || v < 0.0 || v > 255.0) fail(ErrorCode::InvalidArgument, "intensity outside [0,255]");
}

RgbImage::RgbImage(std::size_t width, std::size_t height, std::uint8_t fill)
    : width_(width), height_(height), data_(width * height * 3, fill) {}

RgbImage::RgbImage(std::size_t width, std::size_t height, std::vector<std::uint8_t> data)
    : width_(width), height_(height), data_(std::move(data)) {
    if (data_.size() != width_ * height_ * 3) fail(ErrorCode::DimMismatch, "buffer size != width*height*3");
}

void RgbImage::set(std::size_t x, std::size_t y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    auto* p = &data_[(y * width_ + x) * 3];
    p[0] = r;
    p[1] = g;
    p[2] = b;
}

EdgeSet::EdgeSet(std::size_t width, std::size_t height) : width_(width), height_(height), mask_(width * height, 0) {}

std::size_t EdgeSet::count() const { return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), 1)); }

// ---------------------------------------------------------------------------

GrayImage to_gray(const RgbImage& img) {
    GrayImage out(img.width(), img.height());
    for (std::size_t y = 0; y < img.height(); ++y)
        for (std::size_t x = 0; x < img.width(); ++x)
            out.at(x, y) = 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
    return out;
}

EdgeSet detect_edges(const GrayImage& img, const CannyConfig& cfg) {
    const std::size_t w = img.width(), h = img.height();
    if (w < 3 || h < 3)
        fail(ErrorCode::ImageTooSmall, std::to_string(w) + "x" + std::to_string(h) + " (need at least 3x3)");
    if (cfg.low < 0.0 || cfg.low > cfg.high) fail(ErrorCode::InvalidArgument, "require 0 <= low <= high");

    const GrayImage s = gaussian_blur(img, cfg.sigma);
    auto px = [&](long long x, long long y) { return s.at(clamp_index(x, w), clamp_index(y, h)); };

    std::vector<double> mag(w * h), gx(w * h), gy(w * h);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const auto X = static_cast<long long>(x), Y = static_cast<long long>(y);
            const double dx = (px(X + 1, Y - 1) + 2 * px(X + 1, Y) + px(X + 1, Y + 1)) -
                              (px(X - 1, Y - 1) + 2 * px(X - 1, Y) + px(X - 1, Y + 1));
            const double dy = (px(X - 1, Y + 1) + 2 * px(X, Y + 1) + px(X + 1, Y + 1)) -
                              (px(X - 1, Y - 1) + 2 * px(X, Y - 1) + px(X + 1, Y - 1));
            gx[y * w + x] = dx;
            gy[y * w + x] = dy;
            mag[y * w + x] = std::hypot(dx, dy);
        }

    auto mag_at = [&](long long x, long long y) {
        if (x < 0 || y < 0 || x >= static_cast<long long>(w) || y >= static_cast<long long>(h)) return 0.0;
        return mag[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
    };

    // Non-maximum suppression. A pixel survives if it is strictly greater than
    // the neighbour behind it and not smaller than the one ahead, so plateaus
    // of width two keep exactly one pixel.
    enum : std::uint8_t { None = 0, Weak = 1, Strong = 2 };
    std::vector<std::uint8_t> cls(w * h, None);
    constexpr double tan22 = 0.41421356237309503;  // tan(22.5 deg)
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t i = y * w + x;
            const double m = mag[i];
            if (m <= 0.0 || m < cfg.low) continue;
            const double ax = std::abs(gx[i]), ay = std::abs(gy[i]);
            long long ox = 0, oy = 0;
            if (ay <= ax * tan22) {
                ox = 1;
            } else if (ax <= ay * tan22) {
                oy = 1;
            } else {
                ox = 1;
                oy = (gx[i] * gy[i] > 0) ? 1 : -1;
            }
            const auto X = static_cast<long long>(x), Y = static_cast<long long>(y);
            const double behind = mag_at(X - ox, Y - oy);
            const double ahead = mag_at(X + ox, Y + oy);
            if (m > behind && m >= ahead) cls[i] = (m >= cfg.high) ? Strong : Weak;
        }

    EdgeSet edges(w, h);
    std::vector<std::size_t> stack;
    for (std::size_t i = 0; i < cls.size(); ++i)
        if (cls[i] == Strong) {
            edges.insert(i % w, i / w);
            stack.push_back(i);
        }
    while (!stack.empty()) {
        const std::size_t i = stack.back();
        stack.pop_back();
        const auto X = static_cast<long long>(i % w), Y = static_cast<long long>(i / w);
        for (long long dy = -1; dy <= 1; ++dy)
            for (long long dx = -1; dx <= 1; ++dx) {
                const long long nx = X + dx, ny = Y + dy;
                if (nx < 0 || ny < 0 || nx >= static_cast<long long>(w) || ny >= static_cast<long long>(h)) continue;
                const std::size_t j = static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx);
                if (cls[j] == Weak) {
                    cls[j] = Strong;
                    edges.insert(static_cast<std::size_t>(nx), static_cast<std::size_t>(ny));
                    stack.push_back(j);
                }
            }
    }
    return edges;
}

double blur_metric(const GrayImage& img, const EdgeSet& edges) {
    const std::size_t w = img.width(), h = img.height();
    if (edges.width() != w || edges.height() != h) fail(ErrorCode::DimMismatch, "edge mask size != image size");
    double numerator = 0.0, denominator = 0.0;
    std::size_t n_edges = 0;
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            if (!edges.contains(x, y)) continue;
            ++n_edges;
            const double centre = img.at(x, y);
            double sq = 0.0;
            int n = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    const long long nx = static_cast<long long>(x) + dx, ny = static_cast<long long>(y) + dy;
                    if (nx < 0 || ny < 0 || nx >= static_cast<long long>(w) || ny >= static_cast<long long>(h))
                        continue;
                    const double d = centre - img.at(static_cast<std::size_t>(nx), static_cast<std::size_t>(ny));
                    sq += d * d;
                    ++n;
                }
            if (n > 0) numerator += std::sqrt(sq / n);
            denominator += centre;
        }
    if (n_edges == 0) fail(ErrorCode::NoEdges, "edge set is empty");
    if (denominator == 0.0) fail(ErrorCode::ZeroDenominator, "edge pixels sum to zero intensity");
    return numerator / denominator;
}

QualityScore quality_score(const RgbImage& img, const CannyConfig& cfg) {
    const GrayImage gray = to_gray(img);
    const EdgeSet edges = detect_edges(gray, cfg);
    if (edges.empty()) return {0.0, true};
    try {
        return {blur_metric(gray, edges), false};
    } catch (const Error& e) {
        if (e.code() == ErrorCode::ZeroDenominator) return {0.0, true};
        throw;
    }
}

// ---------------------------------------------------------------------------

namespace {

template <typename Get>
std::pair<std::size_t, std::size_t> scan_bounds(std::size_t n, Get value, const char* axis) {
    double peak = 0.0;
    for (std::size_t i = 0; i < n; ++i) peak = std::max(peak, value(i));
    const double th = peak * kFovThresholdFactor;
    std::size_t first = n, last = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (value(i) > th) {
            if (first == n) first = i;
            last = i;
        }
    if (first == n) fail(ErrorCode::EmptyFov, std::string(axis) + " scan has no position above threshold");
    return {first, last};
}

}  // namespace

Rect extract_fov(const RgbImage& img) {
    const std::size_t w = img.width(), h = img.height();
    if (w == 0 || h == 0) fail(ErrorCode::EmptyFov, "empty image");
    const std::size_t row = h / 2, col = w / 2;
    const auto [x0, x1] = scan_bounds(w, [&](std::size_t x) { return double(img.at(x, row, 0)); }, "horizontal");
    const auto [y0, y1] = scan_bounds(h, [&](std::size_t y) { return double(img.at(col, y, 0)); }, "vertical");
    return {x0, y0, x1, y1};
}

RgbImage crop(const RgbImage& img, const Rect& rect) {
    if (rect.x0 > rect.x1 || rect.y0 > rect.y1 || rect.x1 >= img.width() || rect.y1 >= img.height())
        fail(ErrorCode::RectOutOfBounds, "rect (" + std::to_string(rect.x0) + "," + std::to_string(rect.y0) + ")-(" +
                                             std::to_string(rect.x1) + "," + std::to_string(rect.y1) + ") in " +
                                             std::to_string(img.width()) + "x" + std::to_string(img.height()));
    RgbImage out(rect.width(), rect.height());
    for (std::size_t y = 0; y < out.height(); ++y)
        for (std::size_t x = 0; x < out.width(); ++x)
            for (std::size_t c = 0; c < 3; ++c) out.at(x, y, c) = img.at(rect.x0 + x, rect.y0 + y, c);
    return out;
}

RgbImage resize_bilinear(const RgbImage& img, std::size_t width, std::size_t height) {
    if (img.width() == 0 || img.height() == 0 || width == 0 || height == 0)
        fail(ErrorCode::InvalidArgument, "resize of empty image");
    RgbImage out(width, height);
    const double sx = double(img.width()) / double(width), sy = double(img.height()) / double(height);
    for (std::size_t y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, double(img.height() - 1));
        const auto y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, img.height() - 1);
        const double ty = fy - double(y0);
        for (std::size_t x = 0; x < width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, double(img.width() - 1));
            const auto x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, img.width() - 1);
            const double tx = fx - double(x0);
            for (std::size_t c = 0; c < 3; ++c) {
                const double top = img.at(x0, y0, c) * (1 - tx) + img.at(x1, y0, c) * tx;
                const double bottom = img.at(x0, y1, c) * (1 - tx) + img.at(x1, y1, c) * tx;
                out.at(x, y, c) = static_cast<std::uint8_t>(std::lround(std::clamp(top * (1 - ty) + bottom * ty, 0.0, 255.0)));
            }
        }
    }
    return out;
}

}  // namespace fundus
