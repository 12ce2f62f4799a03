// Acceptance suite: every release criterion in one binary, one PASS/FAIL line
// each. Exit code is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hmloss/hmloss.hpp"

using namespace hmloss;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void criterion(int num, const std::string& name, bool ok, const std::string& detail) {
    std::printf("%s  criterion %d: %s  (%s)\n", ok ? "PASS" : "FAIL", num, name.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

// Independent oracle: per-sample -log softmax over logits
// scale * magnitude_i * cos(theta_ij), with unit head columns and zero bias.
// magnitude_i is ||x_i|| unless a fixed unit magnitude is requested.
Vector cosine_softmax_oracle(const Matrix& x, const std::vector<int>& y, const Matrix& w,
                             bool unit_features, double scale) {
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
            const double magnitude = unit_features ? 1.0 : r;
            logits[j] = scale * magnitude * (d / (r * std::sqrt(wn)));
        }
        double mx = logits[0];
        for (double v : logits) mx = std::max(mx, v);
        double s = 0.0;
        for (double v : logits) s += std::exp(v - mx);
        out[i] = mx + std::log(s) - logits[y[i]];
    }
    return out;
}

double bisect_crossing(const HardMiningParams& p) {
    auto f = [&](double L) { return hard_mine(L, p) - L; };
    double lo = 1e-6, hi = 10.0;
    if (!(f(lo) < 0.0 && f(hi) > 0.0)) return std::nan("");
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

void crossing_point_criterion() {
    const auto t0 = Clock::now();
    const HardMiningParams p{}; // alpha 1.5, beta 1.1, sigmoid (35, 0.75)
    const double lstar = crossing_point(p);
    const double prob = std::exp(-lstar);
    const double oracle = bisect_crossing(p);
    const double elapsed = seconds_since(t0);
    const bool ok = std::fabs(lstar - 0.699822) <= 1e-6 && std::fabs(prob - 0.49666) <= 1e-4 &&
                    std::fabs(lstar - oracle) <= 1e-9 && elapsed < 1.0;
    criterion(1, "crossing point matches the closed form and a bisection oracle", ok,
              "L*=" + fmt(lstar) + " p*=" + fmt(prob) + " bisection=" + fmt(oracle) + " in " +
                  fmt(elapsed) + "s");
}

void curve_shape_criterion() {
    const auto t0 = Clock::now();
    const HardMiningParams p{};
    bool ok = true;
    for (int k = 1; k <= 999; ++k) {
        const double prob = 0.001 * k;
        const double base = -std::log(prob);
        const double hm = hard_mine(base, p);
        if (prob < 0.49 && !(hm > base)) ok = false;
        if (prob > 0.51 && !(hm < base)) ok = false;
    }
    const double elapsed = seconds_since(t0);
    ok = ok && elapsed < 1.0;
    criterion(2, "wrapped CE curve amplifies below p=0.49 and suppresses above p=0.51", ok,
              "999-point grid in " + fmt(elapsed) + "s");
}

void gradient_suite_criterion() {
    const auto t0 = Clock::now();
    bool ok = true;
    std::string detail;
    for (LossKind kind :
         {LossKind::cross_entropy, LossKind::hm_cross_entropy, LossKind::angular_softmax,
          LossKind::hm_angular_softmax, LossKind::arcface, LossKind::hm_arcface}) {
        LossSpec spec;
        spec.kind = kind;
        const GradCheckReport report = run_loss_gradcheck(spec, 1234, 100);
        if (!report.passed(1e-5)) ok = false;
        detail += std::string(to_string(kind)) + "=" + fmt(report.max_rel_err) + " ";
    }
    const double elapsed = seconds_since(t0);
    ok = ok && elapsed < 30.0;
    criterion(3, "analytic gradients within 1e-5 of central differences (6 losses x 100)", ok,
              detail + "in " + fmt(elapsed) + "s");
}

void exact_values_criterion() {
    bool ok = true;
    // CE on uniform logits equals ln(n)
    EmbeddingBatch xb{Matrix(2, 3, 0.4)};
    LabelBatch yb{{0, 4}, 7};
    ClassifierHead head{Matrix(3, 7), Vector(7, 0.0), NormMode::none};
    const LossOutput ce = cross_entropy(xb, yb, head);
    for (double L : ce.per_sample)
        if (std::fabs(L - std::log(7.0)) > 1e-12) ok = false;

    const HardMiningParams p{};
    if (hard_mine(0.0, p) != 0.0) ok = false;
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
        const double L = 10.0 * k / 999.0;
        worst = std::max(worst, std::fabs(hard_mine_alg1(L, p) - p.beta * hard_mine(L, p)));
    }
    ok = ok && worst <= 1e-12;
    criterion(4, "exact identities: CE(ln n), hard_mine(0)=0, alg1 = beta * hard_mine", ok,
              "alg1 max deviation " + fmt(worst));
}

void reduction_criterion() {
    std::mt19937_64 rng(808);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_int_distribution<int> nd(1, 4), dd(2, 8), cd(2, 5);
    std::uniform_real_distribution<double> scale(1.0, 32.0);
    double worst_as = 0.0, worst_af = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const int N = nd(rng), d = dd(rng), n = cd(rng);
        EmbeddingBatch xb{Matrix(N, d)};
        for (double& v : xb.x.storage()) v = gauss(rng);
        LabelBatch yb;
        yb.n_classes = n;
        std::uniform_int_distribution<int> lab(0, n - 1);
        for (int i = 0; i < N; ++i) yb.y.push_back(lab(rng));
        ClassifierHead head{Matrix(d, n), Vector(n, 0.0), NormMode::unit_columns};
        for (double& v : head.w.storage()) v = gauss(rng);

        const LossOutput as = angular_softmax(xb, yb, head, {1});
        const Vector as_oracle = cosine_softmax_oracle(xb.x, yb.y, head.w, false, 1.0);
        for (std::size_t i = 0; i < as_oracle.size(); ++i)
            worst_as = std::max(worst_as, std::fabs(as.per_sample[i] - as_oracle[i]));

        const double s = scale(rng);
        const LossOutput af = arcface(xb, yb, head, {s, 0.0});
        const Vector af_oracle = cosine_softmax_oracle(xb.x, yb.y, head.w, true, s);
        for (std::size_t i = 0; i < af_oracle.size(); ++i)
            worst_af = std::max(worst_af, std::fabs(af.per_sample[i] - af_oracle[i]));
    }
    const bool ok = worst_as <= 1e-10 && worst_af <= 1e-10;
    criterion(5, "angular_softmax(m=1) and arcface(m=0) reduce to the softmax oracles", ok,
              "max |delta| as=" + fmt(worst_as) + " af=" + fmt(worst_af));
}

void monotonicity_criterion() {
    std::mt19937_64 rng(909);
    std::uniform_real_distribution<double> alpha(0.05, 5.0), beta(0.05, 5.0), slope(1e-2, 100.0),
        center(-5.0, 5.0), loss(0.0, 10.0);
    bool ok = true;
    for (int i = 0; i < 1000; ++i) {
        HardMiningParams p{alpha(rng), beta(rng), {slope(rng), center(rng)}};
        double l1 = loss(rng), l2 = loss(rng);
        if (l1 == l2) continue;
        if (l1 > l2) std::swap(l1, l2);
        if (!(hard_mine(l1, p) < hard_mine(l2, p))) ok = false;
        if (!(hard_mine_derivative(l1, p) > 0.0)) ok = false;
        if (!(hard_mine_derivative(l2, p) > 0.0)) ok = false;
    }
    criterion(6, "hard_mine strictly monotone with positive derivative (1000 draws)", ok,
              "alpha,beta in (0,5], slope in (0,100], center in [-5,5], L in [0,10]");
}

struct EndToEnd {
    bool trained_ok = true;
    std::string detail;
    std::string hmce_checkpoint_bytes;
    VerificationReport hmce_report;
    double min_accuracy = 1.0;
};

EndToEnd run_end_to_end(const IdentityDataset& ds, const PairList& pairs) {
    EndToEnd result;
    for (LossKind kind :
         {LossKind::cross_entropy, LossKind::hm_cross_entropy, LossKind::angular_softmax,
          LossKind::hm_angular_softmax, LossKind::arcface, LossKind::hm_arcface}) {
        TrainConfig cfg; // stock defaults: batch 64, lr 0.01, decay at 8/12/16, 20 epochs
        cfg.loss.kind = kind;
        try {
            const TrainResult tr = train(cfg, ds);
            const Matrix embeddings = forward(tr.checkpoint.net, ds.samples).embeddings.x;
            const VerificationReport report = evaluate_pairs(embeddings, pairs, 10, 0);
            result.min_accuracy = std::min(result.min_accuracy, report.mean_accuracy);
            result.detail +=
                std::string(to_string(kind)) + "=" + fmt(report.mean_accuracy) + " ";
            if (kind == LossKind::hm_cross_entropy) {
                const auto path = std::filesystem::temp_directory_path() /
                                  "hmloss_acceptance_hmce.ckpt";
                save_checkpoint(path, tr.checkpoint);
                std::ifstream f(path, std::ios::binary);
                std::ostringstream os;
                os << f.rdbuf();
                result.hmce_checkpoint_bytes = os.str();
                result.hmce_report = report;
                std::filesystem::remove(path);
            }
        } catch (const std::exception& e) {
            result.trained_ok = false;
            result.detail += std::string(to_string(kind)) + "=EXC(" + e.what() + ") ";
        }
    }
    return result;
}

void end_to_end_criteria() {
    const auto t0 = Clock::now();
    const IdentityDataset ds = gen_identities(20, 50, 16, 0.3, 1);
    const PairList pairs = make_pairs(ds, 600, 2);

    const EndToEnd first = run_end_to_end(ds, pairs);
    const double elapsed = seconds_since(t0);
    const bool ok7 =
        first.trained_ok && first.min_accuracy >= 0.95 && elapsed < 300.0;
    criterion(7, "all six losses train on desk-scale data to >= 0.95 verification accuracy", ok7,
              first.detail + "in " + fmt(elapsed) + "s");

    // criterion 8: amplification mechanism on a constructed batch
    {
        const HardMiningParams p{};
        LossOutput base;
        base.per_sample = {2.0, 0.2};
        base.mean_loss = 1.1;
        const WrappedLossOutput w = wrap_loss(base, p);
        const bool ok8 = w.grad_scale[0] > 1.0 && w.grad_scale[1] < 1e-6 &&
                         hard_mine_derivative(2.0, p) > 1.0;
        criterion(8, "per-sample gradient scale amplifies hard samples, silences easy ones", ok8,
                  "scale(2.0)=" + fmt(w.grad_scale[0]) + " scale(0.2)=" + fmt(w.grad_scale[1]));
    }

    // criterion 9: repeat the hm-ce run; bit-identical checkpoint and report
    {
        TrainConfig cfg;
        cfg.loss.kind = LossKind::hm_cross_entropy;
        const TrainResult again = train(cfg, ds);
        const auto path =
            std::filesystem::temp_directory_path() / "hmloss_acceptance_hmce_repeat.ckpt";
        save_checkpoint(path, again.checkpoint);
        std::ifstream f(path, std::ios::binary);
        std::ostringstream os;
        os << f.rdbuf();
        std::filesystem::remove(path);
        const Matrix embeddings = forward(again.checkpoint.net, ds.samples).embeddings.x;
        const VerificationReport report = evaluate_pairs(embeddings, pairs, 10, 0);
        const bool ok9 = os.str() == first.hmce_checkpoint_bytes &&
                         report.fold_accuracies == first.hmce_report.fold_accuracies &&
                         report.fold_thresholds == first.hmce_report.fold_thresholds &&
                         report.mean_accuracy == first.hmce_report.mean_accuracy;
        criterion(9, "same seed reproduces the checkpoint bytes and the report", ok9,
                  std::string("checkpoint ") +
                      (os.str() == first.hmce_checkpoint_bytes ? "identical" : "DIFFERS"));
    }
}

} // namespace

int main() {
    crossing_point_criterion();
    curve_shape_criterion();
    gradient_suite_criterion();
    exact_values_criterion();
    reduction_criterion();
    monotonicity_criterion();
    end_to_end_criteria();
    if (g_failures == 0)
        std::printf("all acceptance criteria passed\n");
    else
        std::printf("%d acceptance criteria FAILED\n", g_failures);
    return g_failures;
}
