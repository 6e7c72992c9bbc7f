#include "fundus/ctran.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fundus/error.hpp"

namespace fundus::ctran {

namespace {

constexpr std::string_view kModule = "ctran";

[[noreturn]] void fail(ErrorCode code, const std::string& detail) { throw Error(kModule, code, detail); }

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
    return m;
}

Matrix softmax_rows(const Matrix& s) {
    Matrix a(s.rows(), s.cols());
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        const double mx = s.row(i).maxCoeff();
        a.row(i) = (s.row(i).array() - mx).exp().matrix();
        a.row(i) /= a.row(i).sum();
    }
    return a;
}

/// Backpropagates d_out through one layer, accumulating into g; returns the
/// gradient with respect to the layer input.
Matrix layer_backward(const LayerParams& p, const LayerCache& c, const Matrix& d_out, LayerParams& g) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(p.wq.rows()));
    g.wo.noalias() += c.hidden.transpose() * d_out;
    g.b2 += d_out.colwise().sum();
    Matrix d_pre = d_out * p.wo.transpose();
    d_pre.array() *= (c.pre_relu.array() > 0.0).cast<double>();
    g.wr.noalias() += c.hbar.transpose() * d_pre;
    g.b1 += d_pre.colwise().sum();
    const Matrix d_hbar = d_pre * p.wr.transpose();

    const Matrix d_attn = d_hbar * c.v.transpose();
    const Matrix d_v = c.attention.transpose() * d_hbar;
    const Eigen::VectorXd row_dot = (d_attn.array() * c.attention.array()).rowwise().sum();
    Matrix d_scores = c.attention.array() * (d_attn.colwise() - row_dot).array();
    d_scores *= scale;
    const Matrix d_q = d_scores * c.k;
    const Matrix d_k = d_scores.transpose() * c.q;

    g.wq.noalias() += c.input.transpose() * d_q;
    g.wk.noalias() += c.input.transpose() * d_k;
    g.wv.noalias() += c.input.transpose() * d_v;
    return d_q * p.wq.transpose() + d_k * p.wk.transpose() + d_v * p.wv.transpose();
}

void check_states(const CTranParams& params, std::span<const LabelState> states) {
    if (states.size() != params.n_labels())
        fail(ErrorCode::DimMismatch, std::to_string(states.size()) + " states for " +
                                         std::to_string(params.n_labels()) + " labels");
}

}  // namespace

int state_value(LabelState s) {
    switch (s) {
        case LabelState::Unknown: return 0;
        case LabelState::Negative: return -1;
        case LabelState::Positive: return 1;
    }
    return 0;
}

FeatureGrid::FeatureGrid(std::size_t h_, std::size_t w_, Matrix tokens_) : h(h_), w(w_), tokens(std::move(tokens_)) {
    if (static_cast<std::size_t>(tokens.rows()) != h * w)
        fail(ErrorCode::DimMismatch, "feature grid has " + std::to_string(tokens.rows()) + " tokens, expected h*w");
    if (!tokens.allFinite()) fail(ErrorCode::InvalidArgument, "feature grid contains non-finite values");
}

// ---------------------------------------------------------------------------

CTranParams CTranParams::init(std::size_t n_labels, std::size_t dim, std::size_t n_layers, std::uint64_t seed) {
    if (n_labels == 0 || dim == 0) fail(ErrorCode::InvalidArgument, "need at least one label and dim >= 1");
    Rng rng(seed);
    const auto d = static_cast<Eigen::Index>(dim);
    const auto l = static_cast<Eigen::Index>(n_labels);
    const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
    CTranParams p;
    p.label_emb = uniform_matrix(l, d, bound, rng);
    p.state_emb = Matrix::Zero(3, d);
    p.state_emb.row(1).setConstant(-0.02);
    p.state_emb.row(2).setConstant(0.02);
    for (std::size_t k = 0; k < n_layers; ++k) {
        LayerParams layer;
        layer.wq = uniform_matrix(d, d, bound, rng);
        layer.wk = uniform_matrix(d, d, bound, rng);
        layer.wv = uniform_matrix(d, d, bound, rng);
        layer.wr = uniform_matrix(d, d, bound, rng);
        layer.wo = uniform_matrix(d, d, bound, rng);
        layer.b1 = Matrix::Zero(1, d);
        layer.b2 = Matrix::Zero(1, d);
        p.layers.push_back(std::move(layer));
    }
    p.head_w = uniform_matrix(l, d, bound, rng);
    p.head_b = Matrix::Zero(l, 1);
    return p;
}

std::vector<Matrix*> CTranParams::tensors() {
    std::vector<Matrix*> out{&label_emb, &state_emb};
    for (auto& layer : layers)
        for (Matrix* m : {&layer.wq, &layer.wk, &layer.wv, &layer.wr, &layer.b1, &layer.wo, &layer.b2}) out.push_back(m);
    out.push_back(&head_w);
    out.push_back(&head_b);
    return out;
}

std::vector<const Matrix*> CTranParams::tensors() const {
    auto mut = const_cast<CTranParams*>(this)->tensors();
    return {mut.begin(), mut.end()};
}

std::vector<std::string> CTranParams::tensor_names() const {
    std::vector<std::string> names{"label_emb", "state_emb"};
    for (std::size_t k = 0; k < layers.size(); ++k)
        for (const char* n : {"wq", "wk", "wv", "wr", "b1", "wo", "b2"})
            names.push_back("layer" + std::to_string(k) + "." + n);
    names.push_back("head_w");
    names.push_back("head_b");
    return names;
}

CTranParams CTranParams::zeros_like() const {
    CTranParams z = *this;
    for (Matrix* m : z.tensors()) m->setZero();
    return z;
}

// ---------------------------------------------------------------------------

Matrix embed_labels(const CTranParams& params, std::span<const LabelState> states) {
    check_states(params, states);
    Matrix out = params.label_emb;
    for (std::size_t i = 0; i < states.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        if (states[i] != LabelState::Unknown) out.row(row) += params.state_emb.row(static_cast<int>(states[i]));
    }
    return out;
}

Matrix encoder_layer(const LayerParams& layer, const Matrix& h, LayerCache* cache) {
    if (h.rows() < 1) fail(ErrorCode::InvalidArgument, "encoder layer needs at least one token");
    if (h.cols() != layer.wq.rows()) fail(ErrorCode::DimMismatch, "token dim != layer dim");
    const double scale = 1.0 / std::sqrt(static_cast<double>(h.cols()));
    Matrix q = h * layer.wq;
    Matrix k = h * layer.wk;
    Matrix v = h * layer.wv;
    Matrix attention = softmax_rows((q * k.transpose()) * scale);
    Matrix hbar = attention * v;
    Matrix pre = hbar * layer.wr;
    pre.rowwise() += layer.b1.row(0);
    Matrix hidden = pre.cwiseMax(0.0);
    Matrix out = hidden * layer.wo;
    out.rowwise() += layer.b2.row(0);
    if (cache) {
        cache->input = h;
        cache->q = std::move(q);
        cache->k = std::move(k);
        cache->v = std::move(v);
        cache->attention = std::move(attention);
        cache->hbar = std::move(hbar);
        cache->pre_relu = std::move(pre);
        cache->hidden = std::move(hidden);
        cache->output = out;
    }
    return out;
}

Vector forward(const CTranParams& params, const FeatureGrid& features, std::span<const LabelState> states,
               const ForwardOptions& opts, ForwardTrace* trace) {
    check_states(params, states);
    if (features.dim() != params.dim())
        fail(ErrorCode::DimMismatch, "feature dim " + std::to_string(features.dim()) + " != model dim " +
                                         std::to_string(params.dim()));
    const bool use_dropout = opts.train && opts.dropout > 0.0;
    if (use_dropout && !opts.rng) fail(ErrorCode::InvalidArgument, "dropout in train mode needs an rng");
    if (opts.dropout < 0.0 || opts.dropout >= 1.0) fail(ErrorCode::InvalidArgument, "dropout must be in [0,1)");

    const auto n_feat = static_cast<Eigen::Index>(features.count());
    const auto l = static_cast<Eigen::Index>(params.n_labels());
    Matrix h(n_feat + l, features.tokens.cols());
    h.topRows(n_feat) = features.tokens;
    h.bottomRows(l) = embed_labels(params, states);

    if (trace) {
        trace->layers.assign(params.layers.size(), {});
        trace->dropout_masks.clear();
    }
    for (std::size_t k = 0; k < params.layers.size(); ++k) {
        h = encoder_layer(params.layers[k], h, trace ? &trace->layers[k] : nullptr);
        if (use_dropout && k + 1 < params.layers.size()) {
            const double keep = 1.0 - opts.dropout;
            Matrix mask(h.rows(), h.cols());
            for (Eigen::Index i = 0; i < mask.rows(); ++i)
                for (Eigen::Index j = 0; j < mask.cols(); ++j) mask(i, j) = opts.rng->bernoulli(keep) ? 1.0 / keep : 0.0;
            h.array() *= mask.array();
            if (trace) trace->dropout_masks.push_back(std::move(mask));
        }
    }

    Vector logits(l);
    for (Eigen::Index i = 0; i < l; ++i) logits(i) = params.head_w.row(i).dot(h.row(n_feat + i)) + params.head_b(i, 0);
    Vector probs = logits.unaryExpr([](double z) { return sigmoid(z); });
    if (trace) {
        trace->final_tokens = std::move(h);
        trace->logits = logits;
        trace->probs = probs;
    }
    return probs;
}

Vector predict(const CTranParams& params, const FeatureGrid& features) {
    const std::vector<LabelState> unknown(params.n_labels(), LabelState::Unknown);
    return forward(params, features, unknown);
}

LabelMask lmt_mask(std::span<const std::uint8_t> y, Rng& rng) {
    const std::size_t l = y.size();
    if (l == 0) fail(ErrorCode::InvalidArgument, "label mask needs at least one label");
    const std::size_t lo = (l + 3) / 4;  // ceil(l / 4)
    const auto n_masked = static_cast<std::size_t>(rng.integer(static_cast<long long>(lo), static_cast<long long>(l)));

    std::vector<std::size_t> order(l);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order.begin(), order.end());

    LabelMask mask{std::vector<LabelState>(l), std::vector<std::uint8_t>(l, 0)};
    for (std::size_t i = 0; i < l; ++i) mask.states[i] = y[i] ? LabelState::Positive : LabelState::Negative;
    for (std::size_t k = 0; k < n_masked; ++k) {
        mask.states[order[k]] = LabelState::Unknown;
        mask.masked[order[k]] = 1;
    }
    return mask;
}

// ---------------------------------------------------------------------------

LossAndGrad loss_and_grad(const CTranParams& params, std::span<const Example> batch,
                          const std::vector<std::vector<LabelState>>& states, const LossConfig& loss,
                          const ForwardOptions& opts) {
    if (batch.empty()) fail(ErrorCode::InvalidArgument, "empty batch");
    if (states.size() != batch.size()) fail(ErrorCode::LengthMismatch, "one state vector per example required");

    LossAndGrad out{0.0, params.zeros_like()};
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    const auto l = static_cast<Eigen::Index>(params.n_labels());

    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& ex = batch[b];
        if (ex.y.size() != params.n_labels()) fail(ErrorCode::DimMismatch, "label vector width != model labels");
        ForwardTrace trace;
        const Vector probs = forward(params, ex.features, states[b], opts, &trace);

        std::vector<std::uint8_t> masked(params.n_labels());
        for (std::size_t i = 0; i < masked.size(); ++i) masked[i] = states[b][i] == LabelState::Unknown;
        const std::span<const double> p(probs.data(), static_cast<std::size_t>(probs.size()));
        out.loss += loss_value(loss, ex.y, p, masked) * inv_batch;
        const auto d_logits = loss_grad(loss, ex.y, p, masked);

        const auto n_feat = static_cast<Eigen::Index>(ex.features.count());
        Matrix d_h = Matrix::Zero(trace.final_tokens.rows(), trace.final_tokens.cols());
        for (Eigen::Index i = 0; i < l; ++i) {
            const double g = d_logits[static_cast<std::size_t>(i)] * inv_batch;
            if (g == 0.0) continue;
            out.grad.head_w.row(i) += g * trace.final_tokens.row(n_feat + i);
            out.grad.head_b(i, 0) += g;
            d_h.row(n_feat + i) = g * params.head_w.row(i);
        }
        for (std::size_t k = params.layers.size(); k-- > 0;) {
            if (k < trace.dropout_masks.size()) d_h.array() *= trace.dropout_masks[k].array();
            d_h = layer_backward(params.layers[k], trace.layers[k], d_h, out.grad.layers[k]);
        }
        for (Eigen::Index i = 0; i < l; ++i) {
            out.grad.label_emb.row(i) += d_h.row(n_feat + i);
            const auto s = states[b][static_cast<std::size_t>(i)];
            if (s != LabelState::Unknown) out.grad.state_emb.row(static_cast<int>(s)) += d_h.row(n_feat + i);
        }
    }
    out.grad.state_emb.row(0).setZero();
    return out;
}

AdamState::AdamState(const CTranParams& params) {
    for (const Matrix* t : params.tensors()) {
        m.push_back(Matrix::Zero(t->rows(), t->cols()));
        v.push_back(Matrix::Zero(t->rows(), t->cols()));
    }
}

double train_step(CTranParams& params, AdamState& adam, std::span<const Example> batch, const LossConfig& loss,
                  const TrainConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<LabelState>> states;
    states.reserve(batch.size());
    for (const auto& ex : batch) states.push_back(lmt_mask(ex.y, rng).states);

    ForwardOptions opts{true, cfg.dropout, &rng};
    LossAndGrad lg = loss_and_grad(params, batch, states, loss, opts);
    if (!std::isfinite(lg.loss)) fail(ErrorCode::NonFiniteLoss, "batch loss is not finite");

    ++adam.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(adam.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(adam.step));
    auto tensors = params.tensors();
    auto grads = lg.grad.tensors();
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        const Matrix& g = *grads[t];
        adam.m[t] = cfg.beta1 * adam.m[t] + (1.0 - cfg.beta1) * g;
        adam.v[t] = cfg.beta2 * adam.v[t] + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        if (cfg.lr == 0.0) continue;
        const Matrix m_hat = adam.m[t] / bc1;
        const Matrix v_hat = adam.v[t] / bc2;
        tensors[t]->array() -= cfg.lr * m_hat.array() / (v_hat.array().sqrt() + cfg.eps);
    }
    params.state_emb.row(0).setZero();
    return lg.loss;
}

std::vector<double> fit(CTranParams& params, std::span<const Example> data, const LossConfig& loss,
                        const FitConfig& cfg) {
    if (cfg.batch == 0) fail(ErrorCode::InvalidArgument, "batch size must be >= 1");
    AdamState adam(params);
    Rng shuffler(splitmix(cfg.seed));
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> history;
    std::uint64_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffler.shuffle(order.begin(), order.end());
        double total = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            std::vector<Example> batch;
            for (std::size_t k = start; k < std::min(order.size(), start + cfg.batch); ++k) batch.push_back(data[order[k]]);
            total += train_step(params, adam, batch, loss, cfg.train, splitmix(cfg.seed ^ splitmix(++step)));
            ++n_batches;
        }
        history.push_back(n_batches ? total / double(n_batches) : 0.0);
    }
    return history;
}

// ---------------------------------------------------------------------------

std::vector<Example> synthetic_task(std::size_t n, std::size_t n_labels, std::size_t d, std::size_t grid,
                                    std::uint64_t seed) {
    if (n_labels == 0 || d == 0 || grid == 0) fail(ErrorCode::InvalidArgument, "empty synthetic task");
    Rng rng(seed);
    Matrix dirs(static_cast<Eigen::Index>(n_labels), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < dirs.size(); ++i) dirs(i) = rng.normal();
    std::vector<Example> out;
    out.reserve(n);
    for (std::size_t s = 0; s < n; ++s) {
        LabelVector y(n_labels);
        for (auto& b : y) b = rng.bernoulli(0.5);
        Matrix tok(static_cast<Eigen::Index>(grid * grid), static_cast<Eigen::Index>(d));
        for (Eigen::Index i = 0; i < tok.size(); ++i) tok(i) = 0.5 * rng.normal();
        for (std::size_t i = 0; i < n_labels; ++i)
            if (y[i]) tok.rowwise() += dirs.row(static_cast<Eigen::Index>(i));
        out.push_back({FeatureGrid(grid, grid, tok), std::move(y)});
    }
    return out;
}

FeatureGrid toy_feature_provider(const RgbImage& img, std::size_t h, std::size_t w, std::size_t d, std::uint64_t seed) {
    if (h == 0 || w == 0 || d == 0) fail(ErrorCode::InvalidArgument, "grid and dim must be positive");
    const RgbImage resized = resize_bilinear(img, w * kPatchSize, h * kPatchSize);
    const auto patch_dim = static_cast<Eigen::Index>(kPatchSize * kPatchSize * 3);

    Rng rng(seed);
    Matrix projection(patch_dim, static_cast<Eigen::Index>(d));
    const double scale = 1.0 / std::sqrt(static_cast<double>(patch_dim));
    for (Eigen::Index i = 0; i < projection.rows(); ++i)
        for (Eigen::Index j = 0; j < projection.cols(); ++j) projection(i, j) = rng.normal() * scale;

    Matrix patches(static_cast<Eigen::Index>(h * w), patch_dim);
    for (std::size_t ty = 0; ty < h; ++ty)
        for (std::size_t tx = 0; tx < w; ++tx) {
            const auto row = static_cast<Eigen::Index>(ty * w + tx);
            Eigen::Index col = 0;
            for (std::size_t py = 0; py < kPatchSize; ++py)
                for (std::size_t px = 0; px < kPatchSize; ++px)
                    for (std::size_t c = 0; c < 3; ++c)
                        patches(row, col++) = resized.at(tx * kPatchSize + px, ty * kPatchSize + py, c) / 255.0;
        }

    Matrix tokens = patches * projection;
    for (Eigen::Index i = 0; i < tokens.rows(); ++i) {
        const double mean = tokens.row(i).mean();
        tokens.row(i).array() -= mean;
        const double sd = std::sqrt(tokens.row(i).squaredNorm() / static_cast<double>(d));
        if (sd > 1e-12) tokens.row(i) /= sd;
        else tokens.row(i).setZero();
    }
    return FeatureGrid(h, w, std::move(tokens));
}

}  // namespace fundus::ctran
