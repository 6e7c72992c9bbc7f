#include "fundus/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fundus/error.hpp"

namespace fundus {

namespace {

constexpr std::string_view kModule = "losses";

[[noreturn]] void fail(ErrorCode code, const std::string& detail) { throw Error(kModule, code, detail); }

double clamp_prob(double p) { return std::clamp(p, kProbEps, 1.0 - kProbEps); }

// -(1-p)^g log p, the positive-side focal term.
double focal_pos(double p, double g) { return -std::pow(1.0 - p, g) * std::log(p); }

// -q^g log(1-q), the negative-side focal term.
double focal_neg(double q, double g) { return -std::pow(q, g) * std::log(1.0 - q); }

// d focal_pos / dz with p = sigmoid(z).
double focal_pos_dz(double p, double g) {
    const double one_minus = 1.0 - p;
    double d = -std::pow(one_minus, g + 1.0);
    if (g != 0.0) d += g * p * std::pow(one_minus, g) * std::log(p);
    return d;
}

// d focal_neg / dq, times dq/dz supplied by the caller.
double focal_neg_dq(double q, double g) {
    double d = std::pow(q, g) / (1.0 - q);
    if (g != 0.0 && q > 0.0) d -= g * std::pow(q, g - 1.0) * std::log(1.0 - q);
    return d;
}

double weight_of(const LossConfig& cfg, std::size_t j) { return cfg.weights.empty() ? 1.0 : cfg.weights[j]; }

double term(const LossConfig& cfg, std::size_t j, bool positive, double p) {
    switch (cfg.kind) {
        case LossKind::BCE:
            return positive ? -std::log(p) : -std::log(1.0 - p);
        case LossKind::WBCE:
            return weight_of(cfg, j) * (positive ? -std::log(p) : -std::log(1.0 - p));
        case LossKind::Focal:
            return positive ? focal_pos(p, cfg.focal_gamma) : focal_neg(p, cfg.focal_gamma);
        case LossKind::ASL: {
            if (positive) return focal_pos(p, cfg.asl_gamma_pos);
            const double shifted = std::max(p - cfg.asl_clip, 0.0);
            return focal_neg(shifted, cfg.asl_gamma_neg);
        }
        case LossKind::Poly: {
            const double bce = positive ? -std::log(p) : -std::log(1.0 - p);
            const double pt = positive ? p : 1.0 - p;
            return bce + cfg.poly_epsilon * (1.0 - pt);
        }
    }
    return 0.0;
}

double term_dz(const LossConfig& cfg, std::size_t j, bool positive, double p) {
    const double dp_dz = p * (1.0 - p);
    const double bce = positive ? p - 1.0 : p;
    switch (cfg.kind) {
        case LossKind::BCE:
            return bce;
        case LossKind::WBCE:
            return weight_of(cfg, j) * bce;
        case LossKind::Focal:
            return positive ? focal_pos_dz(p, cfg.focal_gamma) : focal_neg_dq(p, cfg.focal_gamma) * dp_dz;
        case LossKind::ASL: {
            if (positive) return focal_pos_dz(p, cfg.asl_gamma_pos);
            if (p <= cfg.asl_clip) return 0.0;
            return focal_neg_dq(p - cfg.asl_clip, cfg.asl_gamma_neg) * dp_dz;
        }
        case LossKind::Poly:
            return bce + cfg.poly_epsilon * (positive ? -dp_dz : dp_dz);
    }
    return 0.0;
}

void check(const LossConfig& cfg, std::span<const std::uint8_t> y, std::span<const double> p,
           std::span<const std::uint8_t> mask) {
    if (y.size() != p.size() || (!mask.empty() && mask.size() != y.size()))
        fail(ErrorCode::LengthMismatch, "labels, probabilities and mask must have equal length");
    if (!cfg.weights.empty() && cfg.weights.size() != y.size())
        fail(ErrorCode::LengthMismatch, "WBCE weights must match label count");
}

}  // namespace

std::optional<LossKind> parse_loss_kind(std::string_view name) {
    if (name == "bce") return LossKind::BCE;
    if (name == "wbce") return LossKind::WBCE;
    if (name == "focal") return LossKind::Focal;
    if (name == "asl") return LossKind::ASL;
    if (name == "poly") return LossKind::Poly;
    return std::nullopt;
}

std::string_view to_string(LossKind kind) {
    switch (kind) {
        case LossKind::BCE: return "bce";
        case LossKind::WBCE: return "wbce";
        case LossKind::Focal: return "focal";
        case LossKind::ASL: return "asl";
        case LossKind::Poly: return "poly";
    }
    return "unknown";
}

void LossConfig::validate() const {
    if (focal_gamma < 0 || asl_gamma_pos < 0 || asl_gamma_neg < 0) fail(ErrorCode::InvalidArgument, "gamma must be >= 0");
    if (!(asl_clip >= 0.0 && asl_clip < 1.0)) fail(ErrorCode::InvalidArgument, "asl clip must be in [0,1)");
    for (double w : weights)
        if (!(w > 0.0)) fail(ErrorCode::InvalidArgument, "WBCE weights must be > 0");
}

double loss_value(const LossConfig& cfg, std::span<const std::uint8_t> y, std::span<const double> p,
                  std::span<const std::uint8_t> mask) {
    check(cfg, y, p, mask);
    double sum = 0.0;
    std::size_t active = 0;
    for (std::size_t j = 0; j < y.size(); ++j) {
        if (!mask.empty() && !mask[j]) continue;
        sum += term(cfg, j, y[j] != 0, clamp_prob(p[j]));
        ++active;
    }
    return active == 0 ? 0.0 : sum / double(active);
}

std::vector<double> loss_grad(const LossConfig& cfg, std::span<const std::uint8_t> y, std::span<const double> p,
                              std::span<const std::uint8_t> mask) {
    check(cfg, y, p, mask);
    std::vector<double> g(y.size(), 0.0);
    std::size_t active = 0;
    for (std::size_t j = 0; j < y.size(); ++j)
        if (mask.empty() || mask[j]) ++active;
    if (active == 0) return g;
    for (std::size_t j = 0; j < y.size(); ++j) {
        if (!mask.empty() && !mask[j]) continue;
        g[j] = term_dz(cfg, j, y[j] != 0, clamp_prob(p[j])) / double(active);
    }
    return g;
}

std::vector<double> inverse_frequency_weights(std::span<const std::size_t> counts, std::size_t n_samples) {
    std::vector<double> w(counts.size(), 1.0);
    for (std::size_t j = 0; j < counts.size(); ++j)
        if (counts[j] > 0) w[j] = double(n_samples) / (2.0 * double(counts[j]));
    return w;
}

}  // namespace fundus
