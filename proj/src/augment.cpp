#include "fundus/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "fundus/error.hpp"

namespace fundus {

namespace {

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0))); }

// Mirror index without repeating the edge pixel (…cb|abcd|cb…).
std::size_t reflect101(long long i, std::size_t n) {
    if (n == 1) return 0;
    const long long period = 2 * static_cast<long long>(n) - 2;
    i = std::abs(i) % period;
    if (i >= static_cast<long long>(n)) i = period - i;
    return static_cast<std::size_t>(i);
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
    const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
    const double delta = mx - mn;
    v = mx;
    s = mx > 0.0 ? delta / mx : 0.0;
    if (delta == 0.0) h = 0.0;
    else if (mx == r) h = 60.0 * std::fmod((g - b) / delta, 6.0);
    else if (mx == g) h = 60.0 * ((b - r) / delta + 2.0);
    else h = 60.0 * ((r - g) / delta + 4.0);
    if (h < 0.0) h += 360.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    const double c = v * s;
    const double hp = h / 60.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r1 = 0, g1 = 0, b1 = 0;
    if (hp < 1) r1 = c, g1 = x;
    else if (hp < 2) r1 = x, g1 = c;
    else if (hp < 3) g1 = c, b1 = x;
    else if (hp < 4) g1 = x, b1 = c;
    else if (hp < 5) r1 = x, b1 = c;
    else r1 = c, b1 = x;
    const double m = v - c;
    r = r1 + m;
    g = g1 + m;
    b = b1 + m;
}

RgbImage shift_hsv(const RgbImage& img, double hue, double sat, double val) {
    RgbImage out = img;
    for (std::size_t y = 0; y < img.height(); ++y)
        for (std::size_t x = 0; x < img.width(); ++x) {
            double h, s, v;
            rgb_to_hsv(img.at(x, y, 0) / 255.0, img.at(x, y, 1) / 255.0, img.at(x, y, 2) / 255.0, h, s, v);
            // Hue shift is in half-degree units (0..180 hue range).
            h = std::fmod(h + 2.0 * hue + 360.0, 360.0);
            s = std::clamp(s + sat / 255.0, 0.0, 1.0);
            v = std::clamp(v + val / 255.0, 0.0, 1.0);
            double r, g, b;
            hsv_to_rgb(h, s, v, r, g, b);
            out.set(x, y, to_byte(r * 255.0), to_byte(g * 255.0), to_byte(b * 255.0));
        }
    return out;
}

}  // namespace

AugmentConfig AugmentConfig::disabled() {
    AugmentConfig c;
    c.p_hflip = c.p_vflip = c.p_rotate = c.p_median = c.p_noise = c.p_hsv = c.p_brightness_contrast = c.p_cutout = 0.0;
    return c;
}

RgbImage flip_horizontal(const RgbImage& img) {
    RgbImage out(img.width(), img.height());
    for (std::size_t y = 0; y < img.height(); ++y)
        for (std::size_t x = 0; x < img.width(); ++x)
            for (std::size_t c = 0; c < 3; ++c) out.at(img.width() - 1 - x, y, c) = img.at(x, y, c);
    return out;
}

RgbImage flip_vertical(const RgbImage& img) {
    RgbImage out(img.width(), img.height());
    for (std::size_t y = 0; y < img.height(); ++y)
        for (std::size_t x = 0; x < img.width(); ++x)
            for (std::size_t c = 0; c < 3; ++c) out.at(x, img.height() - 1 - y, c) = img.at(x, y, c);
    return out;
}

RgbImage rotate(const RgbImage& img, double degrees) {
    const std::size_t w = img.width(), h = img.height();
    RgbImage out(w, h);
    const double th = degrees * std::numbers::pi / 180.0;
    const double cs = std::cos(th), sn = std::sin(th);
    const double cx = (double(w) - 1.0) / 2.0, cy = (double(h) - 1.0) / 2.0;
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            // Inverse map: output pixel -> source coordinate.
            const double dx = double(x) - cx, dy = double(y) - cy;
            const double sx = cs * dx + sn * dy + cx;
            const double sy = -sn * dx + cs * dy + cy;
            const double fx = std::floor(sx), fy = std::floor(sy);
            const double tx = sx - fx, ty = sy - fy;
            const auto x0 = static_cast<long long>(fx), y0 = static_cast<long long>(fy);
            const std::size_t xa = reflect101(x0, w), xb = reflect101(x0 + 1, w);
            const std::size_t ya = reflect101(y0, h), yb = reflect101(y0 + 1, h);
            for (std::size_t c = 0; c < 3; ++c) {
                const double top = img.at(xa, ya, c) * (1 - tx) + img.at(xb, ya, c) * tx;
                const double bottom = img.at(xa, yb, c) * (1 - tx) + img.at(xb, yb, c) * tx;
                out.at(x, y, c) = to_byte(top * (1 - ty) + bottom * ty);
            }
        }
    return out;
}

RgbImage median_blur(const RgbImage& img, int kernel) {
    if (kernel < 1 || kernel % 2 == 0) throw Error("augment", ErrorCode::InvalidArgument, "median kernel must be odd");
    const long long r = kernel / 2;
    RgbImage out(img.width(), img.height());
    std::vector<std::uint8_t> window;
    for (std::size_t y = 0; y < img.height(); ++y)
        for (std::size_t x = 0; x < img.width(); ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                window.clear();
                for (long long dy = -r; dy <= r; ++dy)
                    for (long long dx = -r; dx <= r; ++dx)
                        window.push_back(img.at(reflect101(static_cast<long long>(x) + dx, img.width()),
                                                reflect101(static_cast<long long>(y) + dy, img.height()), c));
                auto mid = window.begin() + static_cast<std::ptrdiff_t>(window.size() / 2);
                std::nth_element(window.begin(), mid, window.end());
                out.at(x, y, c) = *mid;
            }
    return out;
}

AugmentResult augment_traced(const RgbImage& img, const AugmentConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    AugmentResult res{img, {}};
    RgbImage& cur = res.image;
    const std::size_t w = img.width(), h = img.height();

    if (rng.bernoulli(cfg.p_hflip)) {
        cur = flip_horizontal(cur);
        res.applied.push_back({"HorizontalFlip", {}});
    }
    if (rng.bernoulli(cfg.p_vflip)) {
        cur = flip_vertical(cur);
        res.applied.push_back({"VerticalFlip", {}});
    }
    if (rng.bernoulli(cfg.p_rotate)) {
        const double angle = rng.uniform(-cfg.rotate_limit_deg, cfg.rotate_limit_deg);
        cur = rotate(cur, angle);
        res.applied.push_back({"Rotate", {angle}});
    }
    if (rng.bernoulli(cfg.p_median)) {
        const int steps = std::max(0, (cfg.median_max_kernel - 3) / 2);
        const int k = 3 + 2 * static_cast<int>(rng.integer(0, steps));
        cur = median_blur(cur, k);
        res.applied.push_back({"MedianBlur", {double(k)}});
    }
    if (rng.bernoulli(cfg.p_noise)) {
        const double var = rng.uniform(0.0, cfg.noise_var_limit);
        const double sigma = std::sqrt(var) * 255.0;
        for (auto& v : cur.data()) v = to_byte(v + rng.normal() * sigma);
        res.applied.push_back({"GaussNoise", {var}});
    }
    if (rng.bernoulli(cfg.p_hsv)) {
        const double dh = double(rng.integer(-cfg.hue_shift_limit, cfg.hue_shift_limit));
        const double ds = double(rng.integer(-cfg.sat_shift_limit, cfg.sat_shift_limit));
        const double dv = double(rng.integer(-cfg.val_shift_limit, cfg.val_shift_limit));
        cur = shift_hsv(cur, dh, ds, dv);
        res.applied.push_back({"HueSaturationValue", {dh, ds, dv}});
    }
    if (rng.bernoulli(cfg.p_brightness_contrast)) {
        const double alpha = 1.0 + rng.uniform(-cfg.contrast_limit, cfg.contrast_limit);
        const double beta = rng.uniform(-cfg.brightness_limit, cfg.brightness_limit);
        for (auto& v : cur.data()) v = to_byte(alpha * v + beta * 255.0);
        res.applied.push_back({"RandomBrightnessContrast", {alpha, beta}});
    }
    if (rng.bernoulli(cfg.p_cutout) && w > 0 && h > 0) {
        AppliedTransform t{"Cutout", {}};
        for (int k = 0; k < cfg.cutout_holes; ++k) {
            const auto side = static_cast<std::size_t>(rng.integer(1, std::max(1, cfg.cutout_max_size)));
            const auto x0 = static_cast<std::size_t>(rng.index(w));
            const auto y0 = static_cast<std::size_t>(rng.index(h));
            for (std::size_t y = y0; y < std::min(h, y0 + side); ++y)
                for (std::size_t x = x0; x < std::min(w, x0 + side); ++x) cur.set(x, y, 0, 0, 0);
            t.params.insert(t.params.end(), {double(x0), double(y0), double(side)});
        }
        res.applied.push_back(std::move(t));
    }
    return res;
}

RgbImage augment(const RgbImage& img, const AugmentConfig& cfg, std::uint64_t seed) {
    return augment_traced(img, cfg, seed).image;
}

}  // namespace fundus
