#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "fundus/analysis/latent.hpp"
#include "fundus/core/rng.hpp"
#include "fundus/io/csv.hpp"

namespace fundus {

struct UmapOptions {
    int n_neighbors = 15;
    double min_dist = 0.1;
    double spread = 1.0;
    int n_epochs = 500;
    double learning_rate = 1.0;
    int negative_sample_rate = 5;
    double repulsion_strength = 1.0;
    std::uint64_t seed = 42;
};

struct Embedding2D {
    long n = 0;
    std::vector<double> coords;  // n x 2
    UmapOptions options;

    double x(long i) const { return coords[2 * i]; }
    double y(long i) const { return coords[2 * i + 1]; }
};

namespace umap_detail {

// least-squares fit of 1/(1 + a d^(2b)) to the fuzzy membership target
// (1 for d <= min_dist, exp(-(d - min_dist)/spread) beyond)
inline std::pair<double, double> fit_ab(double min_dist, double spread) {
    const int m = 300;
    std::vector<double> ds(m), target(m);
    for (int i = 0; i < m; ++i) {
        ds[i] = 3.0 * spread * (i + 1) / m;
        target[i] = ds[i] <= min_dist ? 1.0 : std::exp(-(ds[i] - min_dist) / spread);
    }
    double a = 1.0, b = 1.0, lambda = 1e-3;
    const auto sse = [&](double aa, double bb) {
        double s = 0;
        for (int i = 0; i < m; ++i) {
            const double f = 1.0 / (1.0 + aa * std::pow(ds[i], 2 * bb));
            s += (f - target[i]) * (f - target[i]);
        }
        return s;
    };
    double err = sse(a, b);
    for (int iter = 0; iter < 200; ++iter) {
        double jaa = 0, jab = 0, jbb = 0, ga = 0, gb = 0;
        for (int i = 0; i < m; ++i) {
            const double p = std::pow(ds[i], 2 * b);
            const double denom = 1.0 + a * p;
            const double f = 1.0 / denom;
            const double r = f - target[i];
            const double dfda = -p / (denom * denom);
            const double dfdb = -2.0 * a * p * std::log(ds[i]) / (denom * denom);
            jaa += dfda * dfda;
            jab += dfda * dfdb;
            jbb += dfdb * dfdb;
            ga += r * dfda;
            gb += r * dfdb;
        }
        const double d00 = jaa * (1 + lambda), d11 = jbb * (1 + lambda);
        const double det = d00 * d11 - jab * jab;
        if (std::abs(det) < 1e-30) break;
        const double da = (-ga * d11 + gb * jab) / det;
        const double db = (-gb * d00 + ga * jab) / det;
        const double na = std::max(1e-6, a + da), nb = std::clamp(b + db, 1e-3, 5.0);
        const double nerr = sse(na, nb);
        if (nerr < err) {
            a = na;
            b = nb;
            err = nerr;
            lambda = std::max(lambda * 0.5, 1e-9);
            if (std::abs(da) + std::abs(db) < 1e-12) break;
        } else {
            lambda *= 4.0;
            if (lambda > 1e12) break;
        }
    }
    return {a, b};
}

struct Edge {
    long head, tail;
    double weight;
};

inline double clip4(double v) { return std::clamp(v, -4.0, 4.0); }

}  // namespace umap_detail

/// 2-D UMAP embedding: exact kNN graph, smoothed-distance memberships,
/// fuzzy-union symmetrization, and the reference negative-sampling SGD over
/// the low-dimensional kernel. Random init and sampling come from one seeded
/// stream, so a fixed seed reproduces the embedding bit for bit.
inline Embedding2D umap_embed(const std::vector<double>& X, long n, long d,
                              const UmapOptions& opts = {}) {
    if (opts.n_neighbors < 2) throw std::invalid_argument("umap: n_neighbors must be >= 2");
    if (n < opts.n_neighbors + 1)
        throw std::invalid_argument("umap: need at least n_neighbors + 1 samples, got " +
                                    std::to_string(n));
    if (static_cast<long>(X.size()) != n * d) throw std::invalid_argument("umap: bad matrix shape");
    const int k = opts.n_neighbors;

    // exact kNN (Euclidean), self excluded
    std::vector<long> knn(static_cast<size_t>(n) * k);
    std::vector<double> knn_d(static_cast<size_t>(n) * k);
    {
        std::vector<std::pair<double, long>> row(n);
        for (long i = 0; i < n; ++i) {
            for (long j = 0; j < n; ++j) {
                double s = 0;
                for (long c = 0; c < d; ++c) {
                    const double diff = X[i * d + c] - X[j * d + c];
                    s += diff * diff;
                }
                row[j] = {s, j};
            }
            row[i].first = std::numeric_limits<double>::infinity();
            std::partial_sort(row.begin(), row.begin() + k, row.end());
            for (int j = 0; j < k; ++j) {
                knn[i * k + j] = row[j].second;
                knn_d[i * k + j] = std::sqrt(row[j].first);
            }
        }
    }

    // per-point rho and sigma via the smoothed-kNN binary search
    std::vector<double> rho(n, 0.0), sigma(n, 1.0);
    const double target = std::log2(static_cast<double>(k));
    for (long i = 0; i < n; ++i) {
        double mean_d = 0;
        for (int j = 0; j < k; ++j) mean_d += knn_d[i * k + j];
        mean_d /= k;
        for (int j = 0; j < k; ++j)
            if (knn_d[i * k + j] > 0) {
                rho[i] = knn_d[i * k + j];
                break;
            }
        double lo = 0, hi = std::numeric_limits<double>::infinity(), mid = 1.0;
        for (int iter = 0; iter < 64; ++iter) {
            double psum = 0;
            for (int j = 0; j < k; ++j) {
                const double dd = knn_d[i * k + j] - rho[i];
                psum += dd > 0 ? std::exp(-dd / mid) : 1.0;
            }
            if (std::abs(psum - target) < 1e-5) break;
            if (psum > target) {
                hi = mid;
                mid = (lo + hi) / 2;
            } else {
                lo = mid;
                mid = std::isinf(hi) ? mid * 2 : (lo + hi) / 2;
            }
        }
        sigma[i] = std::max(mid, 1e-3 * mean_d);
        if (!(sigma[i] > 0)) sigma[i] = 1.0;
    }

    // directed memberships, then fuzzy set union w + w' - w w'
    std::vector<std::vector<std::pair<long, double>>> directed(n);
    for (long i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j) {
            const double dd = knn_d[i * k + j] - rho[i];
            directed[i].emplace_back(knn[i * k + j], dd <= 0 ? 1.0 : std::exp(-dd / sigma[i]));
        }
    const auto lookup = [&](long a, long b) -> double {
        for (const auto& [j, w] : directed[a])
            if (j == b) return w;
        return 0.0;
    };
    std::vector<umap_detail::Edge> edges;
    for (long i = 0; i < n; ++i)
        for (const auto& [j, wij] : directed[i]) {
            const double wji = lookup(j, i);
            if (j > i || wji == 0.0) {  // emit each unordered pair once
                const double w = wij + wji - wij * wji;
                if (w > 0) {
                    edges.push_back({i, j, w});
                    edges.push_back({j, i, w});
                }
            }
        }

    const auto [a, b] = umap_detail::fit_ab(opts.min_dist, opts.spread);

    double wmax = 0;
    for (const auto& e : edges) wmax = std::max(wmax, e.weight);
    std::vector<double> epochs_per_sample(edges.size());
    for (size_t e = 0; e < edges.size(); ++e) epochs_per_sample[e] = wmax / edges[e].weight;

    Embedding2D emb;
    emb.n = n;
    emb.options = opts;
    emb.coords.resize(static_cast<size_t>(n) * 2);
    Rng rng(Rng::derive(opts.seed, 0x03a9));
    for (auto& v : emb.coords) v = rng.uniform(-10.0, 10.0);

    std::vector<double> next_sample = epochs_per_sample;
    std::vector<double> next_neg(edges.size(), 0.0);
    const double neg_ratio = static_cast<double>(opts.negative_sample_rate);

    for (int epoch = 0; epoch < opts.n_epochs; ++epoch) {
        const double alpha =
            opts.learning_rate * (1.0 - static_cast<double>(epoch) / opts.n_epochs);
        for (size_t e = 0; e < edges.size(); ++e) {
            if (next_sample[e] > epoch + 1) continue;
            double* cur = &emb.coords[2 * edges[e].head];
            double* oth = &emb.coords[2 * edges[e].tail];
            const double dx = cur[0] - oth[0], dy = cur[1] - oth[1];
            const double d2 = dx * dx + dy * dy;
            if (d2 > 0) {
                double coeff = -2.0 * a * b * std::pow(d2, b - 1.0);
                coeff /= a * std::pow(d2, b) + 1.0;
                const double gx = umap_detail::clip4(coeff * dx);
                const double gy = umap_detail::clip4(coeff * dy);
                cur[0] += alpha * gx;
                cur[1] += alpha * gy;
                oth[0] -= alpha * gx;
                oth[1] -= alpha * gy;
            }
            next_sample[e] += epochs_per_sample[e];

            const double eps_neg = epochs_per_sample[e] / neg_ratio;
            const int n_neg = static_cast<int>((epoch + 1 - next_neg[e]) / eps_neg);
            for (int t = 0; t < n_neg; ++t) {
                const long other = rng.integer(0, n - 1);
                if (other == edges[e].head) continue;
                double* neg = &emb.coords[2 * other];
                const double ndx = cur[0] - neg[0], ndy = cur[1] - neg[1];
                const double nd2 = ndx * ndx + ndy * ndy;
                double gx, gy;
                if (nd2 > 0) {
                    double coeff = 2.0 * opts.repulsion_strength * b;
                    coeff /= (0.001 + nd2) * (a * std::pow(nd2, b) + 1.0);
                    gx = umap_detail::clip4(coeff * ndx);
                    gy = umap_detail::clip4(coeff * ndy);
                } else {
                    gx = 4.0;
                    gy = 4.0;
                }
                cur[0] += alpha * gx;
                cur[1] += alpha * gy;
            }
            next_neg[e] += n_neg * eps_neg;
        }
    }
    return emb;
}

inline Embedding2D umap_embed(const LatentMatrix& m, const UmapOptions& opts = {}) {
    m.validate();
    return umap_embed(m.values, m.n, m.d, opts);
}

/// Embeddings persisted as `id,label,u0,u1`.
inline void write_embedding_csv(const std::filesystem::path& path, const Embedding2D& emb,
                                const std::vector<std::string>& ids,
                                const std::vector<int>& labels) {
    CsvWriter csv(path.string(), {"id", "label", "u0", "u1"});
    for (long i = 0; i < emb.n; ++i)
        csv.write_row({ids[i], std::to_string(labels[i]), fmt_num(emb.x(i)), fmt_num(emb.y(i))});
}

}  // namespace fundus
