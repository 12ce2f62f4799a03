#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hmloss/errors.hpp"
#include "hmloss/matrix.hpp"

namespace hmloss {

/// Synthetic identity dataset: unit-norm samples clustered around per-class
/// directions on the sphere. Stand-in for a face-embedding training set at
/// desk scale.
struct IdentityDataset {
    Matrix samples; // N x input_dim
    std::vector<int> labels;
    int n_identities = 0;

    std::size_t size() const { return samples.rows(); }
    std::size_t dim() const { return samples.cols(); }

    std::vector<int> per_class_counts() const {
        std::vector<int> counts(n_identities, 0);
        for (int y : labels) ++counts[y];
        return counts;
    }
};

struct VerificationPair {
    int a = 0;
    int b = 0;
    bool same = false;
};

struct PairList {
    std::vector<VerificationPair> pairs;
    std::size_t size() const { return pairs.size(); }
};

namespace detail {

inline void normalize_in_place(std::span<double> v) {
    const double n = norm(v);
    if (!(n > 0.0))
        throw degenerate_input_error("cannot normalize a zero vector");
    for (double& x : v) x /= n;
}

} // namespace detail

/// Class means drawn uniformly on the unit sphere (normalized Gaussians);
/// each sample is normalize(mean + noise_sigma * g) where g is an isotropic
/// Gaussian vector with expected unit norm (per-coordinate sigma 1/sqrt(dim)),
/// so noise_sigma is the typical noise magnitude relative to the unit-norm
/// class mean. Deterministic per seed; the generator is std::mt19937_64 with
/// std::normal_distribution, and noise draws are consumed only when
/// noise_sigma > 0.
inline IdentityDataset gen_identities(int n_identities, int per_class, int input_dim,
                                      double noise_sigma, std::uint64_t seed) {
    if (n_identities < 2 || per_class < 2 || input_dim < 2)
        throw std::invalid_argument(
            "gen_identities: need n_identities >= 2, per_class >= 2, input_dim >= 2");
    if (!(noise_sigma >= 0.0))
        throw std::invalid_argument("gen_identities: noise_sigma must be non-negative");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    Matrix means(n_identities, input_dim);
    for (int c = 0; c < n_identities; ++c) {
        double n2;
        do {
            for (int k = 0; k < input_dim; ++k) means(c, k) = gauss(rng);
            n2 = dot(means.row(c), means.row(c));
        } while (!(n2 > 0.0));
        detail::normalize_in_place(means.row(c));
    }

    IdentityDataset ds;
    ds.n_identities = n_identities;
    ds.samples = Matrix(static_cast<std::size_t>(n_identities) * per_class, input_dim);
    ds.labels.resize(ds.samples.rows());
    std::size_t row = 0;
    for (int c = 0; c < n_identities; ++c) {
        for (int s = 0; s < per_class; ++s, ++row) {
            ds.labels[row] = c;
            if (noise_sigma == 0.0) {
                for (int k = 0; k < input_dim; ++k) ds.samples(row, k) = means(c, k);
            } else {
                const double coord_sigma = noise_sigma / std::sqrt(input_dim);
                for (int k = 0; k < input_dim; ++k)
                    ds.samples(row, k) = means(c, k) + coord_sigma * gauss(rng);
                detail::normalize_in_place(ds.samples.row(row));
            }
        }
    }
    return ds;
}

/// Balanced verification pairs: n_pairs/2 same-identity and n_pairs/2
/// different-identity pairs, sampled uniformly, deterministic per seed.
inline PairList make_pairs(const IdentityDataset& ds, int n_pairs, std::uint64_t seed) {
    if (n_pairs < 2 || n_pairs % 2 != 0)
        throw std::invalid_argument("make_pairs: n_pairs must be even and positive");
    if (ds.n_identities < 2)
        throw std::invalid_argument("make_pairs: need at least two identities");

    std::vector<std::vector<int>> by_class(ds.n_identities);
    for (std::size_t i = 0; i < ds.labels.size(); ++i)
        by_class[ds.labels[i]].push_back(static_cast<int>(i));
    for (int c = 0; c < ds.n_identities; ++c)
        if (by_class[c].size() < 2)
            throw std::invalid_argument("make_pairs: class " + std::to_string(c) +
                                        " has fewer than 2 samples");

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick_class(0, ds.n_identities - 1);

    PairList out;
    out.pairs.reserve(n_pairs);
    for (int p = 0; p < n_pairs / 2; ++p) {
        const int c = pick_class(rng);
        const auto& idx = by_class[c];
        std::uniform_int_distribution<std::size_t> pick(0, idx.size() - 1);
        const std::size_t a = pick(rng);
        std::size_t b = pick(rng);
        while (b == a) b = pick(rng);
        out.pairs.push_back({idx[a], idx[b], true});
    }
    for (int p = 0; p < n_pairs / 2; ++p) {
        const int c1 = pick_class(rng);
        int c2 = pick_class(rng);
        while (c2 == c1) c2 = pick_class(rng);
        std::uniform_int_distribution<std::size_t> pick1(0, by_class[c1].size() - 1);
        std::uniform_int_distribution<std::size_t> pick2(0, by_class[c2].size() - 1);
        out.pairs.push_back({by_class[c1][pick1(rng)], by_class[c2][pick2(rng)], false});
    }
    return out;
}

// ---------------------------------------------------------------------------
// File formats.
//
// Dataset file: first line `# dim=<d> n=<N> classes=<n>`, then one sample per
// line as `label,f0,f1,...,f{d-1}` with floats printed at full round-trip
// precision (%.17g).
//
// Pair file: lines `index_a,index_b,same` with same in {0,1}.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& tok, const std::string& path, std::size_t line) {
    std::size_t pos = 0;
    double v;
    try {
        v = std::stod(tok, &pos);
    } catch (const std::exception&) {
        throw parse_error(path, line, "malformed number '" + tok + "'");
    }
    if (pos != tok.size())
        throw parse_error(path, line, "trailing characters in number '" + tok + "'");
    return v;
}

inline long parse_int(const std::string& tok, const std::string& path, std::size_t line) {
    std::size_t pos = 0;
    long v;
    try {
        v = std::stol(tok, &pos);
    } catch (const std::exception&) {
        throw parse_error(path, line, "malformed integer '" + tok + "'");
    }
    if (pos != tok.size())
        throw parse_error(path, line, "trailing characters in integer '" + tok + "'");
    return v;
}

inline std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

} // namespace detail

inline void write_dataset(const std::filesystem::path& path, const IdentityDataset& ds) {
    std::ofstream f(path);
    if (!f)
        throw std::runtime_error("write_dataset: cannot open " + path.string());
    f << "# dim=" << ds.dim() << " n=" << ds.size() << " classes=" << ds.n_identities << "\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        f << ds.labels[i];
        for (std::size_t k = 0; k < ds.dim(); ++k)
            f << ',' << detail::format_double(ds.samples(i, k));
        f << '\n';
    }
    if (!f)
        throw std::runtime_error("write_dataset: write failed for " + path.string());
}

inline IdentityDataset read_dataset(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f)
        throw std::runtime_error("read_dataset: cannot open " + path.string());
    const std::string pstr = path.string();

    std::string header;
    if (!std::getline(f, header))
        throw parse_error(pstr, 1, "missing header line");
    std::size_t d = 0, n = 0;
    int classes = 0;
    if (std::sscanf(header.c_str(), "# dim=%zu n=%zu classes=%d", &d, &n, &classes) != 3)
        throw parse_error(pstr, 1, "header must be '# dim=<d> n=<N> classes=<n>'");
    if (d < 1 || n < 1 || classes < 1)
        throw format_error(pstr + ": header declares empty dataset");

    IdentityDataset ds;
    ds.n_identities = classes;
    ds.samples = Matrix(n, d);
    ds.labels.resize(n);
    std::string line;
    std::size_t row = 0, lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (row >= n)
            throw format_error(pstr + ": more samples than the header's n=" + std::to_string(n));
        const auto toks = detail::split_csv(line);
        if (toks.size() != d + 1)
            throw format_error(pstr + ":" + std::to_string(lineno) + ": expected " +
                               std::to_string(d + 1) + " fields, got " +
                               std::to_string(toks.size()));
        const long label = detail::parse_int(toks[0], pstr, lineno);
        if (label < 0 || label >= classes)
            throw format_error(pstr + ":" + std::to_string(lineno) + ": label out of range");
        ds.labels[row] = static_cast<int>(label);
        for (std::size_t k = 0; k < d; ++k)
            ds.samples(row, k) = detail::parse_double(toks[k + 1], pstr, lineno);
        ++row;
    }
    if (row != n)
        throw format_error(pstr + ": header declares n=" + std::to_string(n) + " but file has " +
                           std::to_string(row) + " samples");
    return ds;
}

inline void write_pairs(const std::filesystem::path& path, const PairList& pl) {
    std::ofstream f(path);
    if (!f)
        throw std::runtime_error("write_pairs: cannot open " + path.string());
    for (const VerificationPair& p : pl.pairs)
        f << p.a << ',' << p.b << ',' << (p.same ? 1 : 0) << '\n';
    if (!f)
        throw std::runtime_error("write_pairs: write failed for " + path.string());
}

inline PairList read_pairs(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f)
        throw std::runtime_error("read_pairs: cannot open " + path.string());
    const std::string pstr = path.string();

    PairList out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto toks = detail::split_csv(line);
        if (toks.size() != 3)
            throw parse_error(pstr, lineno, "expected 'index_a,index_b,same'");
        const long a = detail::parse_int(toks[0], pstr, lineno);
        const long b = detail::parse_int(toks[1], pstr, lineno);
        const long same = detail::parse_int(toks[2], pstr, lineno);
        if (a < 0 || b < 0)
            throw parse_error(pstr, lineno, "negative pair index");
        if (a == b)
            throw parse_error(pstr, lineno, "pair references the same index twice");
        if (same != 0 && same != 1)
            throw parse_error(pstr, lineno, "same flag must be 0 or 1");
        out.pairs.push_back({static_cast<int>(a), static_cast<int>(b), same == 1});
    }
    return out;
}

} // namespace hmloss
