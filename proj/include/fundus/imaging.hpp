#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace fundus {

/// Single-channel image held at double precision, values in [0, 255].
class GrayImage {
public:
    GrayImage() = default;
    GrayImage(std::size_t width, std::size_t height, double fill = 0.0);
    GrayImage(std::size_t width, std::size_t height, std::vector<double> pixels);

    std::size_t width() const noexcept { return width_; }
    std::size_t height() const noexcept { return height_; }
    double at(std::size_t x, std::size_t y) const { return pixels_[y * width_ + x]; }
    double& at(std::size_t x, std::size_t y) { return pixels_[y * width_ + x]; }
    const std::vector<double>& pixels() const noexcept { return pixels_; }

private:
    std::size_t width_ = 0;
    std::size_t height_ = 0;
    std::vector<double> pixels_;
};

/// 8-bit interleaved RGB image.
class RgbImage {
public:
    RgbImage() = default;
    RgbImage(std::size_t width, std::size_t height, std::uint8_t fill = 0);
    RgbImage(std::size_t width, std::size_t height, std::vector<std::uint8_t> data);

    std::size_t width() const noexcept { return width_; }
    std::size_t height() const noexcept { return height_; }
    std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const { return data_[(y * width_ + x) * 3 + c]; }
    std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) { return data_[(y * width_ + x) * 3 + c]; }
    void set(std::size_t x, std::size_t y, std::uint8_t r, std::uint8_t g, std::uint8_t b);
    const std::vector<std::uint8_t>& data() const noexcept { return data_; }
    std::vector<std::uint8_t>& data() noexcept { return data_; }

    bool operator==(const RgbImage&) const = default;

private:
    std::size_t width_ = 0;
    std::size_t height_ = 0;
    std::vector<std::uint8_t> data_;
};

/// Boolean edge mask with the dimensions of its source image.
class EdgeSet {
public:
    EdgeSet(std::size_t width, std::size_t height);

    std::size_t width() const noexcept { return width_; }
    std::size_t height() const noexcept { return height_; }
    bool contains(std::size_t x, std::size_t y) const { return mask_[y * width_ + x] != 0; }
    void insert(std::size_t x, std::size_t y) { mask_[y * width_ + x] = 1; }
    std::size_t count() const;
    bool empty() const { return count() == 0; }

private:
    std::size_t width_;
    std::size_t height_;
    std::vector<std::uint8_t> mask_;
};

/// Inclusive pixel rectangle.
struct Rect {
    std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    std::size_t width() const { return x1 - x0 + 1; }
    std::size_t height() const { return y1 - y0 + 1; }
    bool operator==(const Rect&) const = default;
};

struct CannyConfig {
    double low = 50.0;
    double high = 150.0;
    double sigma = 1.4;
};

struct QualityScore {
    double score = 0.0;
    bool degenerate = false;
};

/// Luma: 0.299 R + 0.587 G + 0.114 B.
GrayImage to_gray(const RgbImage& img);

/**
 * Canny edge detector.
 *
 * Gaussian smoothing (kernel radius ceil(3 sigma), replicated borders), 3x3
 * Sobel gradients, non-maximum suppression along the quantized gradient
 * direction, then double-threshold hysteresis with 8-connectivity.
 * Thresholds apply to the L2 Sobel magnitude on the [0, 255] intensity scale.
 * Throws ImageTooSmall if either dimension is below 3.
 */
EdgeSet detect_edges(const GrayImage& img, const CannyConfig& cfg = {});

/**
 * Edge-anchored sharpness score.
 *
 * For every edge pixel, the RMS intensity difference to its 8-neighbourhood
 * (clipped at the border, so 3, 5 or 8 neighbours) is summed; the total is
 * divided by the summed intensity of the edge pixels.
 * Throws NoEdges, ZeroDenominator, DimMismatch.
 */
double blur_metric(const GrayImage& img, const EdgeSet& edges);

/// to_gray -> detect_edges -> blur_metric. An empty edge set gives score 0
/// with the degenerate flag set instead of throwing.
QualityScore quality_score(const RgbImage& img, const CannyConfig& cfg = {});

/// Relative threshold used by extract_fov: th = max(scan) * kFovThresholdFactor.
inline constexpr double kFovThresholdFactor = 0.06;

/**
 * Field-of-view rectangle from two red-channel centerline scans.
 *
 * The middle row yields x0/x1, the middle column y0/y1: the first and last
 * scan positions whose value exceeds max(scan) * 0.06. Throws EmptyFov when
 * either scan has no such position.
 */
Rect extract_fov(const RgbImage& img);

RgbImage crop(const RgbImage& img, const Rect& rect);

/// Bilinear resize with half-pixel centres and clamped borders.
RgbImage resize_bilinear(const RgbImage& img, std::size_t width, std::size_t height);

}  // namespace fundus
