#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "hmloss/losses.hpp"
#include "hmloss/math.hpp"

using namespace hmloss;

namespace {

struct Instance {
    EmbeddingBatch xb;
    LabelBatch yb;
    ClassifierHead head;
};

Instance random_instance(std::mt19937_64& rng, NormMode mode, int max_n = 5) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_int_distribution<int> nd(1, 4), dd(2, 8), cd(2, max_n);
    Instance inst;
    const int N = nd(rng), d = dd(rng), n = cd(rng);
    inst.xb.x = Matrix(N, d);
    for (double& v : inst.xb.x.storage()) v = gauss(rng);
    inst.yb.n_classes = n;
    std::uniform_int_distribution<int> lab(0, n - 1);
    for (int i = 0; i < N; ++i) inst.yb.y.push_back(lab(rng));
    inst.head.w = Matrix(d, n);
    for (double& v : inst.head.w.storage()) v = gauss(rng);
    inst.head.b.assign(n, 0.0);
    inst.head.norm_mode = mode;
    return inst;
}

/// Independent oracle: per-sample -log softmax over logits ||x_i|| cos(theta_ij)
/// with unit-normalized head columns and zero bias.
Vector modified_softmax_oracle(const Matrix& x, const std::vector<int>& y, const Matrix& w,
                               double feature_scale_to_unit = 0.0, double logit_scale = 1.0) {
    Vector out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double r = 0.0;
        for (std::size_t k = 0; k < x.cols(); ++k) r += x(i, k) * x(i, k);
        r = std::sqrt(r);
        Vector logits(w.cols());
        for (std::size_t j = 0; j < w.cols(); ++j) {
            double wn = 0.0, d = 0.0;
            for (std::size_t k = 0; k < x.cols(); ++k) {
                wn += w(k, j) * w(k, j);
                d += x(i, k) * w(k, j);
            }
            const double cos_ij = d / (r * std::sqrt(wn));
            const double magnitude = feature_scale_to_unit > 0.0 ? feature_scale_to_unit : r;
            logits[j] = logit_scale * magnitude * cos_ij;
        }
        double mx = logits[0];
        for (double v : logits) mx = std::max(mx, v);
        double s = 0.0;
        for (double v : logits) s += std::exp(v - mx);
        out[i] = mx + std::log(s) - logits[y[i]];
    }
    return out;
}

} // namespace

TEST_CASE("cross_entropy on uniform logits is ln(n)") {
    const std::size_t N = 3, d = 4, n = 10;
    std::mt19937_64 rng(3);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Instance inst;
    inst.xb.x = Matrix(N, d);
    for (double& v : inst.xb.x.storage()) v = gauss(rng);
    inst.yb = {{1, 7, 0}, static_cast<int>(n)};
    inst.head.w = Matrix(d, n); // all-zero weights, all-zero bias
    inst.head.b.assign(n, 0.0);

    const LossOutput out = cross_entropy(inst.xb, inst.yb, inst.head);
    for (double L : out.per_sample) REQUIRE(L == Catch::Approx(std::log(10.0)).margin(1e-12));
    REQUIRE(out.mean_loss == Catch::Approx(std::log(10.0)).margin(1e-12));
}

TEST_CASE("cross_entropy vanishes when the target logit dominates") {
    EmbeddingBatch xb{Matrix::from_rows({{1.0, 0.5}})};
    LabelBatch yb{{1}, 3};
    ClassifierHead head{Matrix(2, 3, 0.1), Vector(3, 0.0), NormMode::none};
    head.b[1] = 100.0;
    const LossOutput out = cross_entropy(xb, yb, head);
    REQUIRE(out.per_sample[0] >= 0.0);
    REQUIRE(out.per_sample[0] < 1e-40);
}

TEST_CASE("cross_entropy hand-computed case") {
    EmbeddingBatch xb{Matrix::from_rows({{1.0, 0.0}})};
    LabelBatch yb{{0}, 3};
    ClassifierHead head;
    head.w = Matrix::from_rows({{1.0, 0.0, -1.0}, {0.0, 1.0, 0.0}}); // columns (1,0),(0,1),(-1,0)
    head.b.assign(3, 0.0);
    const LossOutput out = cross_entropy(xb, yb, head);
    REQUIRE(out.per_sample[0] == Catch::Approx(0.40760596444438030).margin(1e-9));
    REQUIRE(all_finite(out.grad_x));
    REQUIRE(all_finite(out.grad_w));
    REQUIRE(all_finite(out.grad_b));
}

TEST_CASE("cross_entropy contract violations") {
    std::mt19937_64 rng(5);
    Instance inst = random_instance(rng, NormMode::none);

    ClassifierHead wrong_mode = inst.head;
    wrong_mode.norm_mode = NormMode::unit_columns;
    REQUIRE_THROWS_AS(cross_entropy(inst.xb, inst.yb, wrong_mode), std::invalid_argument);

    ClassifierHead wrong_dim = inst.head;
    wrong_dim.w = Matrix(inst.head.dim() + 1, inst.head.classes());
    REQUIRE_THROWS_AS(cross_entropy(inst.xb, inst.yb, wrong_dim), std::invalid_argument);

    LabelBatch bad = inst.yb;
    bad.y[0] = bad.n_classes;
    REQUIRE_THROWS_AS(cross_entropy(inst.xb, bad, inst.head), std::invalid_argument);

    LabelBatch short_labels = inst.yb;
    short_labels.y.pop_back();
    if (!short_labels.y.empty())
        REQUIRE_THROWS_AS(cross_entropy(inst.xb, short_labels, inst.head), std::invalid_argument);
}

TEST_CASE("cross_entropy properties: non-negative, bias-shift invariant, exact mean") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        Instance inst = random_instance(rng, NormMode::none);
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (double& v : inst.head.b) v = gauss(rng);
        const LossOutput out = cross_entropy(inst.xb, inst.yb, inst.head);
        double sum = 0.0;
        for (double L : out.per_sample) {
            REQUIRE(L >= 0.0);
            sum += L;
        }
        REQUIRE(out.mean_loss == sum / static_cast<double>(out.per_sample.size()));

        ClassifierHead shifted = inst.head;
        const double c = gauss(rng) * 3.0;
        for (double& v : shifted.b) v += c;
        const LossOutput out2 = cross_entropy(inst.xb, inst.yb, shifted);
        for (std::size_t i = 0; i < out.per_sample.size(); ++i)
            REQUIRE(out.per_sample[i] == Catch::Approx(out2.per_sample[i]).margin(1e-10));
    }
}

TEST_CASE("psi values") {
    for (int m : {1, 2, 3, 4}) REQUIRE(psi(0.0, m) == 1.0);
    for (double theta : {0.0, 0.3, 1.2, 2.9, std::numbers::pi})
        REQUIRE(psi(theta, 1) == Catch::Approx(std::cos(theta)).margin(1e-15));
    REQUIRE(psi(std::numbers::pi, 4) == Catch::Approx(-7.0).margin(1e-12));
    REQUIRE_THROWS_AS(psi(-0.1, 2), std::invalid_argument);
    REQUIRE_THROWS_AS(psi(std::numbers::pi + 0.1, 2), std::invalid_argument);
    REQUIRE_THROWS_AS(psi(std::nan(""), 2), std::invalid_argument);
    REQUIRE_THROWS_AS(psi(0.5, 0), std::invalid_argument);
}

TEST_CASE("psi is continuous, non-increasing and dominated by cos") {
    for (int m : {1, 2, 3, 4}) {
        for (int k = 1; k < m; ++k) {
            const double boundary = k * std::numbers::pi / m;
            const double left = psi(boundary - 1e-12, m);
            const double right = psi(boundary + 1e-12, m);
            REQUIRE(std::fabs(left - right) <= 1e-9);
        }
        double prev = psi(0.0, m);
        for (int g = 1; g <= 2000; ++g) {
            const double theta = std::numbers::pi * g / 2000.0;
            const double cur = psi(theta, m);
            REQUIRE(cur <= prev + 1e-12);
            if (m >= 2) REQUIRE(cur <= std::cos(theta) + 1e-12);
            prev = cur;
        }
    }
}

TEST_CASE("angular_softmax with m=1 matches the modified-softmax oracle") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        Instance inst = random_instance(rng, NormMode::unit_columns);
        const LossOutput out = angular_softmax(inst.xb, inst.yb, inst.head, {1});
        const Vector oracle = modified_softmax_oracle(inst.xb.x, inst.yb.y, inst.head.w);
        for (std::size_t i = 0; i < oracle.size(); ++i)
            REQUIRE(out.per_sample[i] == Catch::Approx(oracle[i]).margin(1e-10));
    }
}

TEST_CASE("angular_softmax aligned sample gets the maximal target logit") {
    // x lies exactly along class 0's weight direction
    EmbeddingBatch xb{Matrix::from_rows({{2.5, 0.0, 0.0}})};
    LabelBatch yb{{0}, 3};
    ClassifierHead head;
    head.w = Matrix::from_rows({{2.0, 0.0, 0.4}, {0.0, 1.0, 0.6}, {0.0, 0.0, 0.8}});
    head.norm_mode = NormMode::unit_columns;
    head.b.assign(3, 0.0);

    const double r = 2.5;
    const CosSimMatrix cos = cosine_matrix(xb, head);
    REQUIRE(cos.c(0, 0) == 1.0 - kCosineClamp);

    const double target_logit = r * psi(std::acos(cos.c(0, 0)), 4);
    REQUIRE(target_logit == Catch::Approx(r).epsilon(1e-5));
    for (std::size_t j = 1; j < 3; ++j) REQUIRE(target_logit > r * cos.c(0, j));

    // loss assembled from the cosine matrix reproduces the reported loss
    const LossOutput out = angular_softmax(xb, yb, head, {4});
    double denom_terms = 0.0;
    for (std::size_t j = 1; j < 3; ++j)
        denom_terms += std::exp(r * cos.c(0, j) - target_logit);
    REQUIRE(out.per_sample[0] == Catch::Approx(std::log1p(denom_terms)).margin(1e-12));
}

TEST_CASE("angular_softmax hand-computed case (m=2)") {
    EmbeddingBatch xb{Matrix::from_rows({{2.0, 0.0}})};
    LabelBatch yb{{0}, 2};
    ClassifierHead head;
    head.w = Matrix::from_rows({{1.0, 0.0}, {0.0, 1.0}});
    head.norm_mode = NormMode::unit_columns;
    head.b.assign(2, 0.0);
    const LossOutput out = angular_softmax(xb, yb, head, {2});
    REQUIRE(out.per_sample[0] == Catch::Approx(0.12692810640533894).margin(1e-6));
}

TEST_CASE("angular_softmax rejects degenerate and invalid input") {
    EmbeddingBatch xb{Matrix(2, 3)};
    xb.x(0, 0) = 1.0; // second row stays zero
    LabelBatch yb{{0, 1}, 2};
    ClassifierHead head{Matrix(3, 2, 0.5), Vector(2, 0.0), NormMode::unit_columns};
    REQUIRE_THROWS_AS(angular_softmax(xb, yb, head, {4}), degenerate_input_error);

    EmbeddingBatch ok{Matrix(2, 3, 0.5)};
    ClassifierHead zero_col = head;
    for (std::size_t k = 0; k < 3; ++k) zero_col.w(k, 1) = 0.0;
    REQUIRE_THROWS_AS(angular_softmax(ok, yb, zero_col, {4}), degenerate_input_error);

    ClassifierHead wrong_mode = head;
    wrong_mode.norm_mode = NormMode::none;
    REQUIRE_THROWS_AS(angular_softmax(ok, yb, wrong_mode, {4}), std::invalid_argument);
    REQUIRE_THROWS_AS(angular_softmax(ok, yb, head, {0}), std::invalid_argument);
}

TEST_CASE("arcface with m=0 matches the scaled-cosine oracle") {
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> scale(1.0, 32.0);
    for (int trial = 0; trial < 50; ++trial) {
        Instance inst = random_instance(rng, NormMode::unit_columns);
        const double s = scale(rng);
        const LossOutput out = arcface(inst.xb, inst.yb, inst.head, {s, 0.0});
        const Vector oracle =
            modified_softmax_oracle(inst.xb.x, inst.yb.y, inst.head.w, 1.0, s);
        for (std::size_t i = 0; i < oracle.size(); ++i)
            REQUIRE(out.per_sample[i] == Catch::Approx(oracle[i]).margin(1e-10));
    }
}

TEST_CASE("arcface aligned sample follows the clamp rule") {
    EmbeddingBatch xb{Matrix::from_rows({{7.0, 0.0}})};
    LabelBatch yb{{0}, 2};
    ClassifierHead head;
    head.w = Matrix::from_rows({{3.0, 0.0}, {0.0, 0.25}});
    head.norm_mode = NormMode::unit_columns;
    head.b.assign(2, 0.0);
    const ArcMarginParams p{64.0, 0.5};
    const LossOutput out = arcface(xb, yb, head, p);

    const double target_logit = p.scale * std::cos(p.margin + std::acos(1.0 - kCosineClamp));
    const double expected = std::log1p(std::exp(p.scale * 0.0 - target_logit));
    REQUIRE(out.per_sample[0] == Catch::Approx(expected).margin(1e-12));
    REQUIRE(target_logit == Catch::Approx(56.151556385189311).margin(1e-9));
}

TEST_CASE("arcface hand-computed case (s=4, m=0.5)") {
    EmbeddingBatch xb{Matrix::from_rows({{3.0, 0.0}})}; // any positive multiple of (1,0)
    LabelBatch yb{{0}, 2};
    ClassifierHead head;
    head.w = Matrix::from_rows({{1.0, 0.0}, {0.0, 1.0}});
    head.norm_mode = NormMode::unit_columns;
    head.b.assign(2, 0.0);
    const LossOutput out = arcface(xb, yb, head, {4.0, 0.5});
    REQUIRE(out.per_sample[0] == Catch::Approx(0.029474037462286742).margin(1e-4));
    REQUIRE(out.per_sample[0] == Catch::Approx(0.029474037462286742).margin(1e-9));
}

TEST_CASE("arcface parameter and input validation") {
    EmbeddingBatch xb{Matrix(1, 2, 0.7)};
    LabelBatch yb{{0}, 2};
    ClassifierHead head{Matrix(2, 2, 0.5), Vector(2, 0.0), NormMode::unit_columns};
    REQUIRE_THROWS_AS(arcface(xb, yb, head, {0.0, 0.5}), std::invalid_argument);
    REQUIRE_THROWS_AS(arcface(xb, yb, head, {64.0, -0.1}), std::invalid_argument);
    REQUIRE_THROWS_AS(arcface(xb, yb, head, {64.0, std::numbers::pi}), std::invalid_argument);

    EmbeddingBatch zero{Matrix(1, 2)};
    REQUIRE_THROWS_AS(arcface(zero, yb, head, {64.0, 0.5}), degenerate_input_error);
}

TEST_CASE("margin losses report the exact mean of per-sample losses") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        Instance inst = random_instance(rng, NormMode::unit_columns);
        for (const LossOutput& out : {angular_softmax(inst.xb, inst.yb, inst.head, {3}),
                                      arcface(inst.xb, inst.yb, inst.head, {8.0, 0.3})}) {
            double sum = 0.0;
            for (double L : out.per_sample) sum += L;
            REQUIRE(out.mean_loss == sum / static_cast<double>(out.per_sample.size()));
            REQUIRE(all_finite(out.grad_x));
            REQUIRE(all_finite(out.grad_w));
        }
    }
}
