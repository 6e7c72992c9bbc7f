#pragma once

// Independent reference implementations used to check the library.
// Written for clarity (brute force, long double where it helps), not speed.

#include <cstdint>
#include <utility>
#include <vector>

#include "fundus/ctran.hpp"
#include "fundus/imaging.hpp"
#include "fundus/losses.hpp"

namespace fundus::testing {

/// Non-interpolated AP by explicit rank enumeration (ties: lower index first).
double ap_oracle(const std::vector<std::uint8_t>& y, const std::vector<double>& p);

/// Pairwise Mann-Whitney AUC, ties worth one half.
double auc_oracle(const std::vector<std::uint8_t>& y, const std::vector<double>& p);

/// (meanIR, CVIR) straight from the definitions.
std::pair<double, double> ir_oracle(const std::vector<std::size_t>& counts);

/// Direct evaluation of the edge sharpness ratio.
double blur_oracle(const GrayImage& img, const EdgeSet& edges);

/// |a - b| / max(|a|, |b|, floor).
double rel_err(double a, double b, double floor = 1e-6);

/// Random loss configuration drawn for gradient checks; negatives are kept
/// at least 0.01 away from the ASL clip kink.
struct LossCase {
    LossConfig cfg;
    std::vector<std::uint8_t> y, mask;
    std::vector<double> z;  // logits
};
LossCase random_loss_case(Rng& rng);

/// Worst relative error between loss_grad and a central difference of
/// loss_value over `n_cases` random cases (step h on the logits).
double loss_gradient_check(std::uint64_t seed, int n_cases, double h = 1e-5);

/// Worst relative error between the analytic C-Tran gradient and central
/// differences over every trainable scalar (the frozen Unknown state row is
/// skipped). Dropout is off. Also returns how many scalars were checked.
struct GradCheck {
    double worst = 0.0;
    std::size_t checked = 0;
};
GradCheck ctran_gradient_check(std::size_t d, std::size_t l, std::size_t h, std::size_t w, LossKind kind,
                               std::uint64_t seed, double step = 1e-4);

/// Linearly separable multi-label task: tokens are Gaussian noise plus a
/// fixed direction per active label.
std::vector<ctran::Example> separable_task(std::size_t n, std::size_t l, std::size_t d, std::size_t h,
                                           std::size_t w, std::uint64_t seed);

/// Mean per-label AUC of all-Unknown predictions on `data`.
double ml_auc_of(const ctran::CTranParams& params, const std::vector<ctran::Example>& data);

}  // namespace fundus::testing
