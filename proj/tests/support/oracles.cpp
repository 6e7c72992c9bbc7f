#include "oracles.hpp"

#include <algorithm>
#include <cmath>

#include "fundus/metrics.hpp"

namespace fundus::testing {

double ap_oracle(const std::vector<std::uint8_t>& y, const std::vector<double>& p) {
    const std::size_t n = y.size();
    double sum = 0;
    std::size_t npos = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!y[i]) continue;
        ++npos;
        std::size_t rank = 1, hits = 1;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            if (p[j] > p[i] || (p[j] == p[i] && j < i)) {
                ++rank;
                hits += y[j];
            }
        }
        sum += double(hits) / double(rank);
    }
    return sum / double(npos);
}

double auc_oracle(const std::vector<std::uint8_t>& y, const std::vector<double>& p) {
    double u = 0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < y.size(); ++i)
        for (std::size_t j = 0; j < y.size(); ++j)
            if (y[i] && !y[j]) {
                ++pairs;
                u += p[i] > p[j] ? 1.0 : p[i] == p[j] ? 0.5 : 0.0;
            }
    return u / double(pairs);
}

std::pair<double, double> ir_oracle(const std::vector<std::size_t>& counts) {
    std::size_t mx = 0;
    for (auto c : counts) mx = std::max(mx, c);
    std::vector<long double> ir;
    for (auto c : counts) ir.push_back((long double)mx / (long double)c);
    long double mean = 0;
    for (auto v : ir) mean += v;
    mean /= ir.size();
    long double var = 0;
    for (auto v : ir) var += (v - mean) * (v - mean);
    var /= ir.size();
    return {double(mean), double(std::sqrt(var) / mean)};
}

double blur_oracle(const GrayImage& img, const EdgeSet& e) {
    const long long W = (long long)img.width(), H = (long long)img.height();
    double num = 0, den = 0;
    for (long long y = 0; y < H; ++y)
        for (long long x = 0; x < W; ++x) {
            if (!e.contains(x, y)) continue;
            double s = 0;
            int n = 0;
            for (long long yy = y - 1; yy <= y + 1; ++yy)
                for (long long xx = x - 1; xx <= x + 1; ++xx) {
                    if ((xx == x && yy == y) || xx < 0 || yy < 0 || xx >= W || yy >= H) continue;
                    const double d = img.at(x, y) - img.at(xx, yy);
                    s += d * d;
                    ++n;
                }
            num += std::sqrt(s / n);
            den += img.at(x, y);
        }
    return num / den;
}

double rel_err(double a, double b, double floor) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

LossCase random_loss_case(Rng& rng) {
    LossCase c;
    c.cfg.kind = static_cast<LossKind>(rng.index(5));
    c.cfg.focal_gamma = rng.uniform(0.0, 5.0);
    c.cfg.asl_gamma_pos = rng.uniform(0.0, 3.0);
    c.cfg.asl_gamma_neg = rng.uniform(0.0, 6.0);
    c.cfg.asl_clip = rng.uniform(0.0, 0.2);
    c.cfg.poly_epsilon = rng.uniform(0.0, 3.0);
    const std::size_t n = 1 + rng.index(10);
    if (c.cfg.kind == LossKind::WBCE)
        for (std::size_t j = 0; j < n; ++j) c.cfg.weights.push_back(rng.uniform(0.1, 5.0));
    for (std::size_t j = 0; j < n; ++j) {
        c.y.push_back(rng.bernoulli(0.5));
        double z = rng.uniform(-4.0, 4.0);
        while (c.cfg.kind == LossKind::ASL && !c.y.back() && std::abs(sigmoid(z) - c.cfg.asl_clip) < 0.01)
            z = rng.uniform(-4.0, 4.0);
        c.z.push_back(z);
    }
    if (rng.bernoulli(0.5))
        for (std::size_t j = 0; j < n; ++j) c.mask.push_back(rng.bernoulli(0.7));
    return c;
}

namespace {

std::vector<double> probs(const std::vector<double>& z) {
    std::vector<double> p;
    for (double v : z) p.push_back(sigmoid(v));
    return p;
}

}  // namespace

double loss_gradient_check(std::uint64_t seed, int n_cases, double h) {
    Rng rng(seed);
    double worst = 0;
    for (int i = 0; i < n_cases; ++i) {
        const auto c = random_loss_case(rng);
        const auto g = loss_grad(c.cfg, c.y, probs(c.z), c.mask);
        for (std::size_t j = 0; j < c.z.size(); ++j) {
            auto zp = c.z, zm = c.z;
            zp[j] += h;
            zm[j] -= h;
            const double fd =
                (loss_value(c.cfg, c.y, probs(zp), c.mask) - loss_value(c.cfg, c.y, probs(zm), c.mask)) / (2 * h);
            worst = std::max(worst, rel_err(g[j], fd));
        }
    }
    return worst;
}

GradCheck ctran_gradient_check(std::size_t d, std::size_t l, std::size_t h, std::size_t w, LossKind kind,
                               std::uint64_t seed, double step) {
    using namespace ctran;
    Rng rng(seed);
    auto params = CTranParams::init(l, d, 3, seed);
    // Non-trivial biases and state rows so every path carries signal.
    for (auto& layer : params.layers) {
        for (Eigen::Index k = 0; k < layer.b1.size(); ++k) layer.b1(k) = rng.uniform(-0.3, 0.3);
        for (Eigen::Index k = 0; k < layer.b2.size(); ++k) layer.b2(k) = rng.uniform(-0.3, 0.3);
    }
    for (Eigen::Index k = 0; k < params.state_emb.cols(); ++k) {
        params.state_emb(1, k) = rng.uniform(-0.5, 0.5);
        params.state_emb(2, k) = rng.uniform(-0.5, 0.5);
    }
    for (Eigen::Index k = 0; k < params.head_b.size(); ++k) params.head_b(k) = rng.uniform(-0.5, 0.5);

    std::vector<Example> batch;
    std::vector<std::vector<LabelState>> states;
    for (int b = 0; b < 2; ++b) {
        Matrix tok(static_cast<Eigen::Index>(h * w), static_cast<Eigen::Index>(d));
        for (Eigen::Index i = 0; i < tok.size(); ++i) tok(i) = rng.normal();
        LabelVector y(l);
        std::vector<LabelState> s(l);
        for (std::size_t i = 0; i < l; ++i) {
            y[i] = rng.bernoulli(0.5);
            // Label b mod l stays Unknown so the loss is never empty; the
            // rest are mixed so both learned state rows get gradient.
            if (i == static_cast<std::size_t>(b) % l) s[i] = LabelState::Unknown;
            else if (rng.bernoulli(0.4)) s[i] = LabelState::Unknown;
            else s[i] = y[i] ? LabelState::Positive : LabelState::Negative;
        }
        if (l > 1) s[static_cast<std::size_t>(b + 1) % l] = b ? LabelState::Positive : LabelState::Negative;
        batch.push_back({FeatureGrid(h, w, tok), y});
        states.push_back(s);
    }

    LossConfig loss;
    loss.kind = kind;
    if (kind == LossKind::WBCE) loss.weights.assign(l, 1.7);
    const auto analytic = loss_and_grad(params, batch, states, loss);
    const auto grads = analytic.grad.tensors();
    const auto names = params.tensor_names();
    auto tensors = params.tensors();

    GradCheck out;
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        Matrix& m = *tensors[t];
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                if (names[t] == "state_emb" && r == 0) continue;
                const double orig = m(r, c);
                m(r, c) = orig + step;
                const double up = loss_and_grad(params, batch, states, loss).loss;
                m(r, c) = orig - step;
                const double down = loss_and_grad(params, batch, states, loss).loss;
                m(r, c) = orig;
                const double fd = (up - down) / (2 * step);
                out.worst = std::max(out.worst, rel_err((*grads[t])(r, c), fd));
                ++out.checked;
            }
    }
    return out;
}

std::vector<ctran::Example> separable_task(std::size_t n, std::size_t l, std::size_t d, std::size_t h,
                                           std::size_t w, std::uint64_t seed) {
    using namespace ctran;
    Rng rng(seed);
    // Directions are shared across calls with the same seed, so train and
    // held-out sets must come from one call (split afterwards).
    Matrix dirs(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < dirs.size(); ++i) dirs(i) = rng.normal();
    std::vector<Example> out;
    for (std::size_t s = 0; s < n; ++s) {
        LabelVector y(l);
        for (auto& b : y) b = rng.bernoulli(0.5);
        Matrix tok(static_cast<Eigen::Index>(h * w), static_cast<Eigen::Index>(d));
        for (Eigen::Index i = 0; i < tok.size(); ++i) tok(i) = 0.5 * rng.normal();
        for (std::size_t i = 0; i < l; ++i)
            if (y[i]) tok.rowwise() += dirs.row(static_cast<Eigen::Index>(i));
        out.push_back({FeatureGrid(h, w, tok), y});
    }
    return out;
}

double ml_auc_of(const ctran::CTranParams& params, const std::vector<ctran::Example>& data) {
    const std::size_t l = params.n_labels();
    std::vector<std::vector<double>> scores(l);
    std::vector<std::vector<std::uint8_t>> truth(l);
    for (const auto& ex : data) {
        const auto p = ctran::predict(params, ex.features);
        for (std::size_t i = 0; i < l; ++i) {
            scores[i].push_back(p(static_cast<Eigen::Index>(i)));
            truth[i].push_back(ex.y[i]);
        }
    }
    double sum = 0;
    for (std::size_t i = 0; i < l; ++i) sum += auc(truth[i], scores[i]);
    return sum / double(l);
}

}  // namespace fundus::testing
