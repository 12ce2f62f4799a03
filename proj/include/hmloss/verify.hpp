#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "hmloss/data.hpp"
#include "hmloss/errors.hpp"
#include "hmloss/matrix.hpp"

namespace hmloss {

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("cosine_similarity: dimension mismatch");
    const double na = norm(a), nb = norm(b);
    if (!(na > 0.0) || !(nb > 0.0))
        throw degenerate_input_error("cosine_similarity: zero-norm input");
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

struct VerificationReport {
    std::vector<double> fold_accuracies;
    std::vector<double> fold_thresholds;
    double mean_accuracy = 0.0;
    int n_pairs = 0;
};

/// Seeded shuffle of the pair indices, then contiguous blocks; block sizes
/// differ by at most one. Returns fold id per pair index.
inline std::vector<int> fold_assignment(std::size_t n_pairs, int folds, std::uint64_t seed) {
    if (folds < 2)
        throw std::invalid_argument("fold_assignment: need at least 2 folds");
    if (n_pairs < static_cast<std::size_t>(folds))
        throw std::invalid_argument("fold_assignment: fewer pairs than folds");
    std::vector<std::size_t> perm(n_pairs);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);

    std::vector<int> fold_of(n_pairs);
    const std::size_t base = n_pairs / folds, rem = n_pairs % folds;
    std::size_t pos = 0;
    for (int f = 0; f < folds; ++f) {
        const std::size_t size = base + (static_cast<std::size_t>(f) < rem ? 1 : 0);
        for (std::size_t k = 0; k < size; ++k) fold_of[perm[pos++]] = f;
    }
    return fold_of;
}

namespace detail {

/// Smallest threshold (among the candidate similarity values) maximizing
/// accuracy under the rule: similarity >= threshold predicts "same".
inline double best_threshold(std::vector<std::pair<double, bool>> sims) {
    std::sort(sims.begin(), sims.end());
    const std::size_t T = sims.size();
    std::size_t total_pos = 0;
    for (const auto& [s, pos] : sims) total_pos += pos ? 1 : 0;

    double best_t = sims.front().first;
    std::size_t best_correct = 0;
    std::size_t pos_below = 0, neg_below = 0;
    for (std::size_t k = 0; k < T; ++k) {
        // candidate t = sims[k].first, first occurrence of each value only
        if (k == 0 || sims[k].first != sims[k - 1].first) {
            const std::size_t correct = (total_pos - pos_below) + neg_below;
            if (correct > best_correct) {
                best_correct = correct;
                best_t = sims[k].first;
            }
        }
        if (sims[k].second)
            ++pos_below;
        else
            ++neg_below;
    }
    return best_t;
}

} // namespace detail

/// Cross-validated verification with an explicit fold assignment: for each
/// fold the decision threshold is selected on the remaining folds by sweeping
/// the training similarity values, and scored on the held-out fold.
inline VerificationReport evaluate_pairs_with_folds(const Matrix& embeddings, const PairList& pl,
                                                    const std::vector<int>& fold_of, int folds) {
    if (folds < 2)
        throw std::invalid_argument("evaluate_pairs: need at least 2 folds");
    if (pl.size() < static_cast<std::size_t>(folds))
        throw std::invalid_argument("evaluate_pairs: fewer pairs than folds");
    if (fold_of.size() != pl.size())
        throw std::invalid_argument("evaluate_pairs: fold assignment size mismatch");

    std::vector<double> sims(pl.size());
    for (std::size_t i = 0; i < pl.size(); ++i) {
        const VerificationPair& p = pl.pairs[i];
        if (p.a < 0 || p.b < 0 || static_cast<std::size_t>(p.a) >= embeddings.rows() ||
            static_cast<std::size_t>(p.b) >= embeddings.rows())
            throw std::invalid_argument("evaluate_pairs: pair index out of range");
        sims[i] = cosine_similarity(embeddings.row(p.a), embeddings.row(p.b));
    }

    VerificationReport report;
    report.n_pairs = static_cast<int>(pl.size());
    double acc_sum = 0.0;
    for (int f = 0; f < folds; ++f) {
        std::vector<std::pair<double, bool>> training;
        training.reserve(pl.size());
        for (std::size_t i = 0; i < pl.size(); ++i)
            if (fold_of[i] != f) training.emplace_back(sims[i], pl.pairs[i].same);
        if (training.empty())
            throw std::invalid_argument("evaluate_pairs: a fold covers every pair");
        const double threshold = detail::best_threshold(std::move(training));

        std::size_t correct = 0, count = 0;
        for (std::size_t i = 0; i < pl.size(); ++i) {
            if (fold_of[i] != f) continue;
            ++count;
            const bool predicted_same = sims[i] >= threshold;
            if (predicted_same == pl.pairs[i].same) ++correct;
        }
        const double acc =
            count == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(count);
        report.fold_thresholds.push_back(threshold);
        report.fold_accuracies.push_back(acc);
        acc_sum += acc;
    }
    report.mean_accuracy = acc_sum / static_cast<double>(folds);
    return report;
}

inline VerificationReport evaluate_pairs(const Matrix& embeddings, const PairList& pl,
                                         int folds = 10, std::uint64_t fold_seed = 0) {
    return evaluate_pairs_with_folds(embeddings, pl, fold_assignment(pl.size(), folds, fold_seed),
                                     folds);
}

/// Key-value header plus per-fold table.
inline std::string format_report_text(const VerificationReport& r) {
    std::ostringstream os;
    os.precision(17);
    os << "n_pairs: " << r.n_pairs << '\n';
    os << "folds: " << r.fold_accuracies.size() << '\n';
    os << "fold threshold accuracy\n";
    for (std::size_t f = 0; f < r.fold_accuracies.size(); ++f)
        os << f << ' ' << r.fold_thresholds[f] << ' ' << r.fold_accuracies[f] << '\n';
    os << "mean_accuracy: " << r.mean_accuracy << '\n';
    return os.str();
}

} // namespace hmloss
