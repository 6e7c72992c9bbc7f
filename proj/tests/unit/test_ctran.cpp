#include "doctest.h"

#include <cmath>
#include <numeric>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "fundus/ctran.hpp"
#include "fundus/error.hpp"

using namespace fundus;
using namespace fundus::ctran;

namespace {

FeatureGrid random_grid(Rng& rng, std::size_t h, std::size_t w, std::size_t d) {
    Matrix t(static_cast<Eigen::Index>(h * w), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < t.size(); ++i) t(i) = rng.normal();
    return {h, w, t};
}

bool bitwise_equal(const CTranParams& a, const CTranParams& b) {
    const auto ta = a.tensors(), tb = b.tensors();
    for (std::size_t i = 0; i < ta.size(); ++i)
        if (ta[i]->rows() != tb[i]->rows() || ta[i]->cols() != tb[i]->cols() ||
            std::memcmp(ta[i]->data(), tb[i]->data(), sizeof(double) * std::size_t(ta[i]->size())) != 0)
            return false;
    return true;
}

}  // namespace

TEST_CASE("state values and init") {
    CHECK(state_value(LabelState::Unknown) == 0);
    CHECK(state_value(LabelState::Negative) == -1);
    CHECK(state_value(LabelState::Positive) == 1);
    const auto p = CTranParams::init(4, 6, 3, 1);
    CHECK(p.n_labels() == 4);
    CHECK(p.dim() == 6);
    CHECK(p.n_layers() == 3);
    CHECK(p.state_emb.row(0).isZero(0));
    CHECK(p.state_emb(1, 0) == -0.02);
    CHECK(p.state_emb(2, 5) == 0.02);
    CHECK(p.label_emb.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(6.0));
    CHECK(p.layers[0].b1.isZero(0));
    CHECK(p.tensors().size() == p.tensor_names().size());
    CHECK(bitwise_equal(p, CTranParams::init(4, 6, 3, 1)));
}

TEST_CASE("label embedding with states") {
    const auto p = CTranParams::init(3, 4, 1, 2);
    const std::vector<LabelState> unk(3, LabelState::Unknown), pos(3, LabelState::Positive);
    CHECK(embed_labels(p, unk) == p.label_emb);
    const Matrix d = embed_labels(p, pos) - p.label_emb;
    for (Eigen::Index i = 0; i < 3; ++i) CHECK((d.row(i) - p.state_emb.row(2)).cwiseAbs().maxCoeff() <= 1e-15);

    auto q = p;
    q.label_emb.row(1) = q.label_emb.row(0);
    const std::vector<LabelState> same{LabelState::Negative, LabelState::Negative, LabelState::Unknown};
    const Matrix t = embed_labels(q, same);
    CHECK(t.row(0) == t.row(1));
}

TEST_CASE("encoder layer hand cases") {
    LayerParams one{Matrix::Ones(1, 1), Matrix::Ones(1, 1), Matrix::Ones(1, 1), Matrix::Ones(1, 1), Matrix::Ones(1, 1),
                    Matrix::Zero(1, 1), Matrix::Zero(1, 1)};
    CHECK(encoder_layer(one, Matrix::Zero(1, 1))(0, 0) == 0.0);

    const auto p = CTranParams::init(1, 5, 1, 3);
    Matrix h(2, 5);
    h.row(0) << 0.1, -0.4, 0.7, 0.2, 0.0;
    h.row(1) = h.row(0);
    LayerCache cache;
    encoder_layer(p.layers[0], h, &cache);
    CHECK(std::abs(cache.attention(0, 0) - 0.5) <= 1e-15);
    CHECK(std::abs(cache.attention(1, 1) - 0.5) <= 1e-15);
}

TEST_CASE("attention rows sum to one") {
    Rng rng(5);
    for (int t = 0; t < 50; ++t) {
        const std::size_t d = 2 + rng.index(10);
        const auto p = CTranParams::init(2, d, 1, rng.next());
        Matrix h(static_cast<Eigen::Index>(1 + rng.index(12)), static_cast<Eigen::Index>(d));
        for (Eigen::Index i = 0; i < h.size(); ++i) h(i) = 3.0 * rng.normal();
        LayerCache cache;
        encoder_layer(p.layers[0], h, &cache);
        for (Eigen::Index i = 0; i < cache.attention.rows(); ++i)
            CHECK(std::abs(cache.attention.row(i).sum() - 1.0) <= 1e-9);
    }
}

TEST_CASE("forward: shape, range, dims") {
    Rng rng(7);
    const auto p = CTranParams::init(4, 8, 3, 9);
    const auto f = random_grid(rng, 2, 3, 8);
    const auto out = predict(p, f);
    REQUIRE(out.size() == 4);
    for (Eigen::Index i = 0; i < 4; ++i) {
        CHECK(out(i) > 0.0);
        CHECK(out(i) < 1.0);
    }
    const std::vector<LabelState> unk(4, LabelState::Unknown);
    CHECK(forward(p, f, unk) == out);
    try {
        predict(p, random_grid(rng, 2, 2, 7));
        FAIL("no throw");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DimMismatch);
    }
    CHECK_THROWS_AS(forward(p, f, std::vector<LabelState>(3, LabelState::Unknown)), Error);
}

TEST_CASE("forward: label permutation equivariance") {
    Rng rng(8);
    for (int t = 0; t < 20; ++t) {
        const std::size_t l = 2 + rng.index(5), d = 4 + rng.index(6);
        const auto p = CTranParams::init(l, d, 3, rng.next());
        const auto f = random_grid(rng, 2, 2, d);
        std::vector<LabelState> s(l);
        for (auto& x : s) x = static_cast<LabelState>(rng.index(3));
        std::vector<std::size_t> perm(l);
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm.begin(), perm.end());

        auto q = p;
        std::vector<LabelState> sq(l);
        for (std::size_t i = 0; i < l; ++i) {
            const auto src = static_cast<Eigen::Index>(perm[i]);
            q.label_emb.row(static_cast<Eigen::Index>(i)) = p.label_emb.row(src);
            q.head_w.row(static_cast<Eigen::Index>(i)) = p.head_w.row(src);
            q.head_b(static_cast<Eigen::Index>(i), 0) = p.head_b(src, 0);
            sq[i] = s[perm[i]];
        }
        const auto a = forward(p, f, s), b = forward(q, f, sq);
        for (std::size_t i = 0; i < l; ++i)
            CHECK(std::abs(b(static_cast<Eigen::Index>(i)) - a(static_cast<Eigen::Index>(perm[i]))) <= 1e-9);
    }
}

TEST_CASE("all-Unknown inference ignores the ground truth") {
    Rng rng(9);
    const auto p = CTranParams::init(5, 8, 3, 4);
    const auto f = random_grid(rng, 2, 2, 8);
    const auto base = predict(p, f);
    for (int t = 0; t < 20; ++t) {
        LabelVector y(5);
        for (auto& b : y) b = rng.bernoulli(0.5);
        auto mask = lmt_mask(y, rng);
        std::fill(mask.states.begin(), mask.states.end(), LabelState::Unknown);
        CHECK(forward(p, f, mask.states) == base);
    }
}

TEST_CASE("dropout only in train mode, deterministic under seed") {
    Rng rng(10);
    const auto p = CTranParams::init(3, 8, 3, 4);
    const auto f = random_grid(rng, 2, 2, 8);
    const std::vector<LabelState> s(3, LabelState::Unknown);
    Rng a(77), b(77);
    ForwardTrace ta, tb;
    const auto oa = forward(p, f, s, {true, 0.5, &a}, &ta);
    const auto ob = forward(p, f, s, {true, 0.5, &b}, &tb);
    CHECK(oa == ob);
    CHECK(ta.dropout_masks.size() == 2);
    CHECK_FALSE(oa.isApprox(predict(p, f)));
    ForwardTrace te;
    forward(p, f, s, {false, 0.5, nullptr}, &te);
    CHECK(te.dropout_masks.empty());
}

TEST_CASE("lmt mask distribution and consistency") {
    Rng rng(11);
    const LabelVector one{1};
    for (int i = 0; i < 100; ++i) CHECK(lmt_mask(one, rng).states[0] == LabelState::Unknown);

    LabelVector y(20);
    for (std::size_t i = 0; i < 20; ++i) y[i] = i % 3 == 0;
    double sum = 0;
    for (int i = 0; i < 10000; ++i) {
        const auto m = lmt_mask(y, rng);
        std::size_t k = 0;
        for (std::size_t j = 0; j < 20; ++j) {
            CHECK(bool(m.masked[j]) == (m.states[j] == LabelState::Unknown));
            if (m.masked[j]) ++k;
            else CHECK(m.states[j] == (y[j] ? LabelState::Positive : LabelState::Negative));
        }
        const double frac = k / 20.0;
        CHECK(frac >= 0.25);
        CHECK(frac <= 1.0);
        sum += frac;
    }
    CHECK(std::abs(sum / 10000 - 0.625) <= 0.01);
}

TEST_CASE("analytic gradient matches finite differences for every tensor") {
    for (auto kind : {LossKind::BCE, LossKind::Poly, LossKind::Focal, LossKind::ASL, LossKind::WBCE}) {
        const auto r = fundus::testing::ctran_gradient_check(8, 3, 2, 2, kind, 17);
        INFO("loss " << to_string(kind) << " worst " << r.worst);
        CHECK(r.checked > 1000);
        CHECK(r.worst <= 1e-3);
    }
}

TEST_CASE("train step: lr 0 leaves parameters, seeds reproduce, Unknown row stays zero") {
    Rng rng(12);
    std::vector<Example> batch;
    for (int i = 0; i < 4; ++i) batch.push_back({random_grid(rng, 2, 2, 8), LabelVector{1, 0, 1}});
    const LossConfig loss;

    auto p = CTranParams::init(3, 8, 3, 5);
    const auto before = p;
    AdamState adam(p);
    TrainConfig cfg;
    cfg.lr = 0.0;
    train_step(p, adam, batch, loss, cfg, 3);
    CHECK(bitwise_equal(p, before));

    auto a = CTranParams::init(3, 8, 3, 5), b = a;
    AdamState sa(a), sb(b);
    cfg.lr = 1e-2;
    for (std::uint64_t s = 0; s < 5; ++s) {
        CHECK(train_step(a, sa, batch, loss, cfg, s) == train_step(b, sb, batch, loss, cfg, s));
        CHECK(bitwise_equal(a, b));
    }
    CHECK(a.state_emb.row(0).isZero(0));
    CHECK_FALSE(bitwise_equal(a, before));
}

TEST_CASE("train step aborts on a non-finite loss without touching parameters") {
    Rng rng(13);
    std::vector<Example> batch{{random_grid(rng, 2, 2, 8), LabelVector{1, 0}}};
    auto p = CTranParams::init(2, 8, 1, 5);
    p.head_b(0, 0) = std::numeric_limits<double>::quiet_NaN();
    p.head_b(1, 0) = std::numeric_limits<double>::quiet_NaN();
    const auto before = p;
    AdamState adam(p);
    try {
        train_step(p, adam, batch, LossConfig{}, TrainConfig{}, 1);
        FAIL("no throw");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonFiniteLoss);
    }
    CHECK(adam.step == 0);
    CHECK(bitwise_equal(p, before));
}

TEST_CASE("learning sanity on a separable three-label task") {
    auto all = fundus::testing::separable_task(250, 3, 32, 2, 2, 21);
    const std::vector<Example> train(all.begin(), all.begin() + 200), held(all.begin() + 200, all.end());
    auto p = CTranParams::init(3, 32, 3, 22);
    FitConfig cfg;
    cfg.train.lr = 1e-3;
    cfg.batch = 16;
    cfg.epochs = 10;
    double best = 0;
    for (int round = 0; round < 20 && best < 0.95; ++round) {
        cfg.seed = 100 + round;
        fit(p, train, LossConfig{}, cfg);
        best = fundus::testing::ml_auc_of(p, held);
    }
    MESSAGE("held-out ML_AUC " << best);
    CHECK(best >= 0.95);
}

TEST_CASE("toy feature provider") {
    RgbImage img(40, 30);
    Rng rng(14);
    for (auto& v : img.data()) v = static_cast<std::uint8_t>(rng.index(256));
    const auto a = toy_feature_provider(img, 3, 2, 16, 9);
    CHECK(a.h == 3);
    CHECK(a.w == 2);
    CHECK(a.tokens.rows() == 6);
    CHECK(a.tokens.cols() == 16);
    CHECK(toy_feature_provider(img, 3, 2, 16, 9).tokens == a.tokens);
    CHECK_FALSE(toy_feature_provider(img, 3, 2, 16, 10).tokens == a.tokens);
    const auto c = toy_feature_provider(RgbImage(40, 30, 90), 2, 2, 8, 1);
    for (Eigen::Index i = 1; i < c.tokens.rows(); ++i) CHECK(c.tokens.row(i) == c.tokens.row(0));
}

TEST_CASE("checkpoint round trip") {
    const auto dir = fundus::testing::temp_dir("ctran");
    auto p = CTranParams::init(3, 4, 2, 8);
    p.head_b(1, 0) = 0.1 + 1e-17;
    save_checkpoint(p, {"A", "B", "C"}, dir / "ck.json");
    const auto ck = load_checkpoint(dir / "ck.json");
    CHECK(ck.labels == std::vector<std::string>{"A", "B", "C"});
    CHECK(bitwise_equal(ck.params, p));
    std::filesystem::remove_all(dir);
}

TEST_CASE("synthetic task is seeded and shaped") {
    const auto a = synthetic_task(20, 3, 8, 2, 5);
    const auto b = synthetic_task(20, 3, 8, 2, 5);
    REQUIRE(a.size() == 20);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].y == b[i].y);
        CHECK(a[i].features.tokens == b[i].features.tokens);
        CHECK(a[i].features.count() == 4);
        CHECK(a[i].features.dim() == 8);
    }
    CHECK_THROWS_AS(synthetic_task(5, 0, 8, 2, 1), Error);
}
