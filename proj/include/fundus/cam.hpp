#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fundus/ctran.hpp"
#include "fundus/imaging.hpp"

namespace fundus {

/// h x w activation map, row-major, values in [0, 1].
struct HeatMap {
    std::size_t h = 0;
    std::size_t w = 0;
    std::vector<double> values;

    double at(std::size_t x, std::size_t y) const { return values[y * w + x]; }
};

/// Class-weighted sum of feature channels per cell, before any squashing.
std::vector<double> cam_raw(const ctran::FeatureGrid& features, std::span<const double> class_weights);

/**
 * Class activation map: raw(i) = sum_c w_c * f(i, c), passed through a
 * sigmoid and min-max normalised; a constant map becomes all zeros.
 * Throws DimMismatch when |w| != d.
 */
HeatMap cam(const ctran::FeatureGrid& features, std::span<const double> class_weights);

/// The classifier head row of `label`, used as CAM class weights.
std::vector<double> head_weights(const ctran::CTranParams& params, std::size_t label);

/// Opacity of the heat-map tint over the base image.
inline constexpr double kCamOverlayAlpha = 0.4;

/// Blue (0) to red (1) colour ramp.
void cam_color(double t, double& r, double& g, double& b);

/**
 * Bilinearly upsamples the map to target size and blends the colour ramp
 * over `base` (resized to the target first if needed) at 40% opacity.
 */
RgbImage render_cam(const HeatMap& map, std::size_t target_w, std::size_t target_h, const RgbImage& base);

/// Value of the bilinearly upsampled map at output pixel (x, y).
double upsample_at(const HeatMap& map, std::size_t target_w, std::size_t target_h, std::size_t x, std::size_t y);

}  // namespace fundus
