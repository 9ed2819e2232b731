#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "fundus/data/dataset.hpp"
#include "fundus/io/csv.hpp"
#include "fundus/vae/model.hpp"

namespace fundus {

/// N samples x nl posterior means, with labels and ids in row order.
struct LatentMatrix {
    long n = 0, d = 0;
    std::vector<double> values;  // row-major n x d
    std::vector<int> labels;
    std::vector<std::string> ids;

    double& at(long row, long col) { return values[static_cast<size_t>(row) * d + col]; }
    double at(long row, long col) const { return values[static_cast<size_t>(row) * d + col]; }

    void validate() const {
        if (static_cast<long>(labels.size()) != n || static_cast<long>(ids.size()) != n ||
            static_cast<long>(values.size()) != n * d)
            throw std::invalid_argument("latent matrix: inconsistent dimensions");
    }

    bool both_classes() const {
        bool has0 = false, has1 = false;
        for (int l : labels) (l ? has1 : has0) = true;
        return has0 && has1;
    }
};

/// Row i is the posterior mean of image i; deterministic, order-preserving.
inline LatentMatrix encode_dataset(const Vae<float>& vae, const std::vector<LabeledImage>& data,
                                   int batch_size = 64) {
    LatentMatrix out;
    out.n = static_cast<long>(data.size());
    out.d = vae.latent_size();
    out.values.resize(static_cast<size_t>(out.n) * out.d);
    for (long start = 0; start < out.n; start += batch_size) {
        const long end = std::min<long>(out.n, start + batch_size);
        std::vector<Image> batch;
        for (long i = start; i < end; ++i) batch.push_back(data[i].image);
        Tensor<float> mu;
        vae.encode(images_to_tensor<float>(batch), &mu, nullptr);
        for (long i = start; i < end; ++i)
            for (long j = 0; j < out.d; ++j) out.at(i, j) = mu.at2(i - start, j);
    }
    for (const auto& li : data) {
        out.labels.push_back(li.label);
        out.ids.push_back(li.id);
    }
    return out;
}

/// Features ordered by |point-biserial correlation| with the binary labels,
/// non-increasing; ties break toward the lower feature index. Zero-variance
/// features get correlation 0.
struct FeatureRanking {
    std::vector<std::pair<int, double>> order;  // (feature index, |r|)
};

inline FeatureRanking rank_features(const LatentMatrix& m) {
    m.validate();
    if (!m.both_classes())
        throw std::invalid_argument("rank_features: both classes must be present");
    const double n = static_cast<double>(m.n);
    double label_mean = 0;
    for (int l : m.labels) label_mean += l;
    label_mean /= n;
    double label_var = 0;
    for (int l : m.labels) label_var += (l - label_mean) * (l - label_mean);
    label_var /= n;

    FeatureRanking out;
    out.order.reserve(m.d);
    for (long j = 0; j < m.d; ++j) {
        double mean = 0;
        for (long i = 0; i < m.n; ++i) mean += m.at(i, j);
        mean /= n;
        double var = 0, cov = 0;
        for (long i = 0; i < m.n; ++i) {
            const double dv = m.at(i, j) - mean;
            var += dv * dv;
            cov += dv * (m.labels[i] - label_mean);
        }
        var /= n;
        cov /= n;
        const double r = var > 0 ? cov / std::sqrt(var * label_var) : 0.0;
        out.order.emplace_back(static_cast<int>(j), std::abs(r));
    }
    std::stable_sort(out.order.begin(), out.order.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    return out;
}

/// Ratio presets (k/nl kept fixed across latent sizes) mapped to a concrete k.
inline long topk_from_ratio(long nl, double ratio) {
    if (!(ratio > 0.0 && ratio <= 1.0))
        throw std::invalid_argument("topk_from_ratio: ratio must be in (0,1]");
    return std::clamp<long>(std::llround(ratio * static_cast<double>(nl)), 1, nl);
}

/// The k highest-ranked feature columns, rows in original order.
inline LatentMatrix select_top_k(const LatentMatrix& m, const FeatureRanking& ranking, long k) {
    if (k < 1 || k > m.d) throw std::invalid_argument("select_top_k: k must be in [1, nl]");
    LatentMatrix out;
    out.n = m.n;
    out.d = k;
    out.labels = m.labels;
    out.ids = m.ids;
    out.values.resize(static_cast<size_t>(out.n) * k);
    for (long i = 0; i < m.n; ++i)
        for (long j = 0; j < k; ++j) out.at(i, j) = m.at(i, ranking.order[j].first);
    return out;
}

/// Latents persisted as `id,label,f0..f{nl-1}`.
inline void write_latents_csv(const std::filesystem::path& path, const LatentMatrix& m) {
    std::vector<std::string> header = {"id", "label"};
    for (long j = 0; j < m.d; ++j) header.push_back("f" + std::to_string(j));
    CsvWriter csv(path.string(), header);
    for (long i = 0; i < m.n; ++i) {
        std::vector<std::string> row = {m.ids[i], std::to_string(m.labels[i])};
        for (long j = 0; j < m.d; ++j) row.push_back(fmt_num(m.at(i, j)));
        csv.write_row(row);
    }
}

inline LatentMatrix read_latents_csv(const std::filesystem::path& path) {
    const CsvTable t = read_csv(path.string());
    if (t.header.size() < 3 || t.header[0] != "id" || t.header[1] != "label")
        throw std::runtime_error("latents csv: unexpected header in " + path.string());
    LatentMatrix m;
    m.n = static_cast<long>(t.rows.size());
    m.d = static_cast<long>(t.header.size()) - 2;
    m.values.resize(static_cast<size_t>(m.n) * m.d);
    for (long i = 0; i < m.n; ++i) {
        const auto& row = t.rows[i];
        if (static_cast<long>(row.size()) != m.d + 2)
            throw std::runtime_error("latents csv: ragged row in " + path.string());
        m.ids.push_back(row[0]);
        m.labels.push_back(std::stoi(row[1]));
        for (long j = 0; j < m.d; ++j) m.at(i, j) = std::stod(row[j + 2]);
    }
    return m;
}

}  // namespace fundus
