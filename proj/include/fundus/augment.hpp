#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fundus/imaging.hpp"
#include "fundus/rng.hpp"

namespace fundus {

/// Training-time augmentation parameters. Defaults are the production set;
/// each `p_*` is the probability that the transform is applied.
struct AugmentConfig {
    double p_hflip = 0.5;
    double p_vflip = 0.5;

    double p_rotate = 0.5;
    double rotate_limit_deg = 30.0;

    double p_median = 0.3;
    int median_max_kernel = 7;  // odd kernel drawn from {3, 5, ..., max}

    double p_noise = 0.5;
    double noise_var_limit = 0.38;  // variance drawn from U(0, limit), on the [0,1] scale

    double p_hsv = 0.3;
    int hue_shift_limit = 10;  // hue in [0,180) units
    int sat_shift_limit = 10;
    int val_shift_limit = 10;

    double p_brightness_contrast = 0.3;
    double brightness_limit = 0.2;
    double contrast_limit = 0.2;

    double p_cutout = 0.5;
    int cutout_holes = 5;
    int cutout_max_size = 20;

    /// Every probability set to zero.
    static AugmentConfig disabled();
};

/// One applied transform and the parameters it drew.
struct AppliedTransform {
    std::string name;
    std::vector<double> params;
};

struct AugmentResult {
    RgbImage image;
    std::vector<AppliedTransform> applied;
};

/**
 * Applies, in order: horizontal flip, vertical flip, rotation (bilinear,
 * reflect-101 border), median blur, additive Gaussian noise, HSV shift,
 * brightness/contrast, cutout. Each is gated by its own probability draw.
 * Deterministic for a given seed; output size equals input size.
 *
 * Cutout records each hole as (x0, y0, side) in `params`.
 */
AugmentResult augment_traced(const RgbImage& img, const AugmentConfig& cfg, std::uint64_t seed);

RgbImage augment(const RgbImage& img, const AugmentConfig& cfg, std::uint64_t seed);

// Individual transforms, exposed for testing and reuse.
RgbImage flip_horizontal(const RgbImage& img);
RgbImage flip_vertical(const RgbImage& img);
RgbImage rotate(const RgbImage& img, double degrees);
RgbImage median_blur(const RgbImage& img, int kernel);

}  // namespace fundus
