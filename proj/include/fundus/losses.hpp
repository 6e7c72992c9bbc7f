#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace fundus {

enum class LossKind { BCE, WBCE, Focal, ASL, Poly };

std::optional<LossKind> parse_loss_kind(std::string_view name);
std::string_view to_string(LossKind kind);

struct LossConfig {
    LossKind kind = LossKind::Poly;
    double focal_gamma = 2.0;
    double asl_gamma_pos = 0.0;
    double asl_gamma_neg = 4.0;
    double asl_clip = 0.05;
    double poly_epsilon = 1.0;
    /// Per-label WBCE weights; empty means all ones.
    std::vector<double> weights;

    /// Throws InvalidArgument if a gamma is negative, the clip is outside
    /// [0, 1) or a weight is not positive.
    void validate() const;
};

/// Probabilities are clamped to [kProbEps, 1 - kProbEps] before use.
inline constexpr double kProbEps = 1e-7;

/**
 * Mean over the active labels of the per-label loss term.
 *
 * `mask` selects the active labels (nonzero = active); an empty mask means
 * all labels. Returns 0 when no label is active.
 */
double loss_value(const LossConfig& cfg, std::span<const std::uint8_t> y, std::span<const double> p,
                  std::span<const std::uint8_t> mask = {});

/// Exact derivative of loss_value with respect to the pre-sigmoid logits,
/// p = sigmoid(z). Inactive labels get 0.
std::vector<double> loss_grad(const LossConfig& cfg, std::span<const std::uint8_t> y, std::span<const double> p,
                              std::span<const std::uint8_t> mask = {});

/// WBCE default: weight_j = n_samples / (2 * count_j); labels with no
/// positives get weight 1.
std::vector<double> inverse_frequency_weights(std::span<const std::size_t> counts, std::size_t n_samples);

inline double sigmoid(double z) {
    return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

}  // namespace fundus
