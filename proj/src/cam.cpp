#include "fundus/cam.hpp"

#include <algorithm>
#include <cmath>

#include "fundus/error.hpp"
#include "fundus/losses.hpp"

namespace fundus {

std::vector<double> cam_raw(const ctran::FeatureGrid& features, std::span<const double> class_weights) {
    if (class_weights.size() != features.dim())
        throw Error("cam", ErrorCode::DimMismatch,
                    std::to_string(class_weights.size()) + " weights for " + std::to_string(features.dim()) + " channels");
    std::vector<double> raw(features.count(), 0.0);
    for (std::size_t i = 0; i < raw.size(); ++i)
        for (std::size_t c = 0; c < class_weights.size(); ++c)
            raw[i] += class_weights[c] * features.tokens(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
    return raw;
}

HeatMap cam(const ctran::FeatureGrid& features, std::span<const double> class_weights) {
    auto values = cam_raw(features, class_weights);
    for (auto& v : values) v = sigmoid(v);
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const double mn = values.empty() ? 0.0 : *lo, mx = values.empty() ? 0.0 : *hi;
    for (auto& v : values) v = mx > mn ? (v - mn) / (mx - mn) : 0.0;
    return {features.h, features.w, std::move(values)};
}

std::vector<double> head_weights(const ctran::CTranParams& params, std::size_t label) {
    if (label >= params.n_labels()) throw Error("cam", ErrorCode::InvalidArgument, "label index out of range");
    // Rows of a column-major matrix are strided; copy element-wise.
    const auto row = params.head_w.row(static_cast<Eigen::Index>(label));
    std::vector<double> w(static_cast<std::size_t>(row.size()));
    for (Eigen::Index c = 0; c < row.size(); ++c) w[static_cast<std::size_t>(c)] = row(c);
    return w;
}

void cam_color(double t, double& r, double& g, double& b) {
    t = std::clamp(t, 0.0, 1.0);
    r = 255.0 * t;
    g = 0.0;
    b = 255.0 * (1.0 - t);
}

double upsample_at(const HeatMap& map, std::size_t target_w, std::size_t target_h, std::size_t x, std::size_t y) {
    const double sx = double(map.w) / double(target_w), sy = double(map.h) / double(target_h);
    const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, double(map.w - 1));
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, double(map.h - 1));
    const auto x0 = static_cast<std::size_t>(fx), y0 = static_cast<std::size_t>(fy);
    const std::size_t x1 = std::min(x0 + 1, map.w - 1), y1 = std::min(y0 + 1, map.h - 1);
    const double tx = fx - double(x0), ty = fy - double(y0);
    const double top = map.at(x0, y0) * (1 - tx) + map.at(x1, y0) * tx;
    const double bottom = map.at(x0, y1) * (1 - tx) + map.at(x1, y1) * tx;
    return top * (1 - ty) + bottom * ty;
}

RgbImage render_cam(const HeatMap& map, std::size_t target_w, std::size_t target_h, const RgbImage& base) {
    if (map.h == 0 || map.w == 0 || target_w == 0 || target_h == 0)
        throw Error("cam", ErrorCode::InvalidArgument, "empty heat map or target");
    const RgbImage bg = (base.width() == target_w && base.height() == target_h)
                            ? base
                            : resize_bilinear(base, target_w, target_h);
    RgbImage out(target_w, target_h);
    for (std::size_t y = 0; y < target_h; ++y)
        for (std::size_t x = 0; x < target_w; ++x) {
            double tint[3];
            cam_color(upsample_at(map, target_w, target_h, x, y), tint[0], tint[1], tint[2]);
            for (std::size_t c = 0; c < 3; ++c) {
                const double v = (1.0 - kCamOverlayAlpha) * bg.at(x, y, c) + kCamOverlayAlpha * tint[c];
                out.at(x, y, c) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
            }
        }
    return out;
}

}  // namespace fundus
