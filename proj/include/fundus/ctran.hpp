#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fundus/imaging.hpp"
#include "fundus/losses.hpp"
#include "fundus/manifest.hpp"
#include "fundus/rng.hpp"

namespace fundus::ctran {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Label state; the enumerator value is the row of the state embedding table.
enum class LabelState : std::uint8_t { Unknown = 0, Negative = 1, Positive = 2 };

/// Scalar value conventionally attached to each state: U = 0, N = -1, P = +1.
int state_value(LabelState s);

/// h x w grid of d-dimensional visual tokens, stored as an (h*w) x d matrix.
struct FeatureGrid {
    std::size_t h = 0;
    std::size_t w = 0;
    Matrix tokens;

    FeatureGrid() = default;
    FeatureGrid(std::size_t h, std::size_t w, Matrix tokens);

    std::size_t dim() const { return static_cast<std::size_t>(tokens.cols()); }
    std::size_t count() const { return h * w; }
};

/**
 * One encoder layer acting on row-vector tokens H (M x d):
 *
 *   A    = softmax_rows(H Wq (H Wk)^T / sqrt(d))
 *   Hbar = A (H Wv)
 *   H'   = ReLU(Hbar Wr + b1) Wo + b2
 *
 * Single head, no residual path, no normalisation.
 */
struct LayerParams {
    Matrix wq, wk, wv, wr, wo;
    Matrix b1, b2;  // 1 x d
};

/**
 * Every learned tensor of the encoder.
 *
 * state_emb has rows {Unknown, Negative, Positive}; the Unknown row is zero
 * and never receives gradient or updates.
 */
struct CTranParams {
    Matrix label_emb;  // l x d
    Matrix state_emb;  // 3 x d
    std::vector<LayerParams> layers;
    Matrix head_w;  // l x d, one linear classifier per label
    Matrix head_b;  // l x 1

    /// Weights and label embeddings ~ U(-1/sqrt(d), 1/sqrt(d)); biases zero;
    /// Negative/Positive state rows start at -0.02 / +0.02.
    static CTranParams init(std::size_t n_labels, std::size_t dim, std::size_t n_layers, std::uint64_t seed);

    std::size_t dim() const { return static_cast<std::size_t>(label_emb.cols()); }
    std::size_t n_labels() const { return static_cast<std::size_t>(label_emb.rows()); }
    std::size_t n_layers() const { return layers.size(); }

    /// All tensors in a fixed order (used by the optimiser and checkpoints).
    std::vector<Matrix*> tensors();
    std::vector<const Matrix*> tensors() const;
    std::vector<std::string> tensor_names() const;

    CTranParams zeros_like() const;
};

/// Label tokens l_i + s(state_i), one row per label.
Matrix embed_labels(const CTranParams& params, std::span<const LabelState> states);

/// Intermediate values of one layer, kept for the backward pass.
struct LayerCache {
    Matrix input, q, k, v, attention, hbar, pre_relu, hidden, output;
};

Matrix encoder_layer(const LayerParams& layer, const Matrix& h, LayerCache* cache = nullptr);

struct ForwardOptions {
    bool train = false;
    double dropout = 0.1;
    Rng* rng = nullptr;  // required when train && dropout > 0
};

struct ForwardTrace {
    std::vector<LayerCache> layers;
    std::vector<Matrix> dropout_masks;  // one per inter-layer gap; empty when off
    Matrix final_tokens;
    Vector logits;
    Vector probs;
};

/**
 * Features followed by label tokens, through every encoder layer, then each
 * label's classifier head on its final token and a sigmoid. Dropout (train
 * mode only) scales token activations between layers.
 * Throws DimMismatch.
 */
Vector forward(const CTranParams& params, const FeatureGrid& features, std::span<const LabelState> states,
               const ForwardOptions& opts = {}, ForwardTrace* trace = nullptr);

/// Inference path: every label state Unknown.
Vector predict(const CTranParams& params, const FeatureGrid& features);

struct LabelMask {
    std::vector<LabelState> states;
    std::vector<std::uint8_t> masked;  // 1 where the state is Unknown
};

/**
 * Label mask training draw: n ~ U{ceil(l/4), ..., l} labels become Unknown,
 * chosen uniformly; the rest carry their true state.
 */
LabelMask lmt_mask(std::span<const std::uint8_t> y, Rng& rng);

struct Example {
    FeatureGrid features;
    LabelVector y;
};

struct LossAndGrad {
    double loss = 0.0;
    CTranParams grad;
};

/**
 * Mean over the batch of the loss on masked (Unknown) labels, with its
 * analytic gradient for every tensor. `states[b]` fixes the label states of
 * example b. Dropout is used only when opts.train is set.
 */
LossAndGrad loss_and_grad(const CTranParams& params, std::span<const Example> batch,
                          const std::vector<std::vector<LabelState>>& states, const LossConfig& loss,
                          const ForwardOptions& opts = {});

struct AdamState {
    std::vector<Matrix> m, v;
    std::size_t step = 0;

    explicit AdamState(const CTranParams& params);
};

struct TrainConfig {
    double lr = 1e-5;
    double dropout = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/**
 * One optimisation step: LMT masks per example, forward in train mode,
 * masked loss, backward, Adam update. All randomness comes from `seed`.
 * Returns the batch loss. Throws NonFiniteLoss (parameters untouched).
 */
double train_step(CTranParams& params, AdamState& adam, std::span<const Example> batch, const LossConfig& loss,
                  const TrainConfig& cfg, std::uint64_t seed);

struct FitConfig {
    TrainConfig train;
    std::size_t epochs = 10;
    std::size_t batch = 16;
    std::uint64_t seed = 0;
};

/// Shuffled mini-batch training; returns the mean loss of each epoch.
std::vector<double> fit(CTranParams& params, std::span<const Example> data, const LossConfig& loss,
                        const FitConfig& cfg);

/**
 * Stand-in feature extractor: resizes to (h*16) x (w*16), flattens each
 * 16x16 RGB patch (values in [0,1]), projects with a seeded Gaussian matrix
 * to d dimensions and standardises each token.
 */
FeatureGrid toy_feature_provider(const RgbImage& img, std::size_t h, std::size_t w, std::size_t d,
                                 std::uint64_t seed);

inline constexpr std::size_t kPatchSize = 16;

/**
 * Linearly separable toy task: each label has a random direction that is
 * added to every token of its positive samples; tokens carry N(0, 0.25)
 * noise. Labels are independent fair coins.
 */
std::vector<Example> synthetic_task(std::size_t n, std::size_t n_labels, std::size_t d, std::size_t grid,
                                    std::uint64_t seed);

// Checkpoints: JSON with the architecture, label acronyms and every tensor
// as {name, shape, data} in row-major order.
void save_checkpoint(const CTranParams& params, const std::vector<std::string>& labels,
                     const std::filesystem::path& path);

struct Checkpoint {
    CTranParams params;
    std::vector<std::string> labels;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fundus::ctran
