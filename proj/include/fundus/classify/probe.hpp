#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <vector>

#include "fundus/analysis/latent.hpp"
#include "fundus/classify/metrics.hpp"
#include "fundus/classify/svm.hpp"
#include "fundus/core/rng.hpp"
#include "fundus/io/csv.hpp"
#include "fundus/plot/plot.hpp"

namespace fundus {

/// Small grid containing the reported optimum {C=1, rbf, balanced}.
inline std::vector<SvcParams> default_svc_grid() {
    std::vector<SvcParams> grid;
    for (double c : {0.1, 1.0, 10.0})
        for (Kernel k : {Kernel::linear, Kernel::rbf})
            for (ClassWeight w : {ClassWeight::none, ClassWeight::balanced})
                grid.push_back({c, k, w, 0.0});
    return grid;
}

namespace probe_detail {

// fold id per sample: per-class shuffles dealt round-robin
inline std::vector<int> stratified_fold_ids(const std::vector<int>& labels, int folds,
                                            std::uint64_t seed) {
    std::vector<int> ids(labels.size(), -1);
    for (int cls : {0, 1}) {
        std::vector<long> idx;
        for (size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == cls) idx.push_back(static_cast<long>(i));
        Rng rng(Rng::derive(seed, 0xf01d + cls));
        rng.shuffle(idx.begin(), idx.end());
        for (size_t j = 0; j < idx.size(); ++j) ids[idx[j]] = static_cast<int>(j % folds);
    }
    return ids;
}

struct EvalData {
    std::vector<double> X;
    std::vector<int> y;
    long n = 0, d = 0;
};

inline MetricsReport fit_and_score(const EvalData& train, const EvalData& test,
                                   const SvcParams& params) {
    Standardizer std_;
    std_.fit(train.X, train.n, train.d);
    const auto Xtr = std_.transform(train.X, train.n, train.d);
    const auto Xte = std_.transform(test.X, test.n, test.d);
    Svc svc;
    svc.fit(Xtr, train.n, train.d, train.y, params);
    const auto scores = svc.decision_batch(Xte, test.n);
    std::vector<int> preds(test.n);
    for (long i = 0; i < test.n; ++i) preds[i] = scores[i] > 0 ? 1 : 0;
    return compute_metrics(test.y, scores, preds);
}

}  // namespace probe_detail

struct CvCandidate {
    SvcParams params;
    // metric order: accuracy, auc, f1, precision, recall
    std::array<double, 5> mean{};
    std::array<double, 5> stdev{};
};

struct CvReport {
    std::vector<CvCandidate> candidates;
    int best_index = -1;
    SvcParams best_params;
};

/// Stratified k-fold model selection over the grid; the best candidate
/// maximizes mean AUC (ties break toward the earlier grid entry).
inline CvReport cross_validate(const LatentMatrix& m, const std::vector<SvcParams>& grid,
                               std::uint64_t seed, int folds = 5) {
    m.validate();
    if (grid.empty()) throw std::invalid_argument("cross_validate: empty grid");
    if (m.n < 10) throw std::invalid_argument("cross_validate: need at least 10 samples");
    if (!m.both_classes()) throw std::invalid_argument("cross_validate: both classes required");
    long minority = 0;
    for (int l : m.labels) minority += l;
    minority = std::min(minority, m.n - minority);
    if (minority < folds)
        throw std::invalid_argument(
            "cross_validate: minority class too small for stratified folds");

    const auto fold_ids = probe_detail::stratified_fold_ids(m.labels, folds, seed);
    CvReport report;
    double best_auc = -1;
    for (size_t g = 0; g < grid.size(); ++g) {
        std::array<std::vector<double>, 5> vals;
        for (int f = 0; f < folds; ++f) {
            probe_detail::EvalData train, test;
            train.d = test.d = m.d;
            for (long i = 0; i < m.n; ++i) {
                auto& part = fold_ids[i] == f ? test : train;
                part.X.insert(part.X.end(), m.values.begin() + i * m.d,
                              m.values.begin() + (i + 1) * m.d);
                part.y.push_back(m.labels[i]);
                ++part.n;
            }
            const auto rep = probe_detail::fit_and_score(train, test, grid[g]);
            vals[0].push_back(rep.accuracy);
            vals[1].push_back(rep.auc);
            vals[2].push_back(rep.f1);
            vals[3].push_back(rep.precision);
            vals[4].push_back(rep.recall);
        }
        CvCandidate cand;
        cand.params = grid[g];
        for (int k = 0; k < 5; ++k) {
            double mean = 0;
            for (double v : vals[k]) mean += v;
            mean /= folds;
            double var = 0;
            for (double v : vals[k]) var += (v - mean) * (v - mean);
            cand.mean[k] = mean;
            cand.stdev[k] = std::sqrt(var / folds);
        }
        if (cand.mean[1] > best_auc) {
            best_auc = cand.mean[1];
            report.best_index = static_cast<int>(g);
            report.best_params = grid[g];
        }
        report.candidates.push_back(std::move(cand));
    }
    return report;
}

/// Stratified train/test split (split_ratio = held-out fraction), classifier
/// fit on the train portion, metrics from decision scores and sign-threshold
/// predictions on the held-out portion.
inline MetricsReport train_test_evaluate(const LatentMatrix& m, const SvcParams& params,
                                         double split_ratio, std::uint64_t seed) {
    m.validate();
    if (!(split_ratio > 0 && split_ratio < 1))
        throw std::invalid_argument("train_test_evaluate: split_ratio must be in (0,1)");
    if (!m.both_classes())
        throw std::invalid_argument("train_test_evaluate: both classes required");

    probe_detail::EvalData train, test;
    train.d = test.d = m.d;
    for (int cls : {0, 1}) {
        std::vector<long> idx;
        for (long i = 0; i < m.n; ++i)
            if (m.labels[i] == cls) idx.push_back(i);
        Rng rng(Rng::derive(seed, 0x7e57 + cls));
        rng.shuffle(idx.begin(), idx.end());
        const long n_test = std::llround(split_ratio * static_cast<double>(idx.size()));
        for (size_t j = 0; j < idx.size(); ++j) {
            auto& part = static_cast<long>(j) < n_test ? test : train;
            part.X.insert(part.X.end(), m.values.begin() + idx[j] * m.d,
                          m.values.begin() + (idx[j] + 1) * m.d);
            part.y.push_back(cls);
            ++part.n;
        }
    }
    bool test_has[2] = {false, false};
    for (int l : test.y) test_has[l] = true;
    if (!test_has[0] || !test_has[1])
        throw std::invalid_argument("train_test_evaluate: test split lost a class");
    return probe_detail::fit_and_score(train, test, params);
}

inline void write_cv_report_csv(const std::filesystem::path& path,
                                const std::map<int, CvReport>& by_nl) {
    CsvWriter csv(path.string(),
                  {"nl", "C", "kernel", "class_weight", "mean_accuracy", "std_accuracy",
                   "mean_auc", "std_auc", "mean_f1", "std_f1", "mean_precision", "std_precision",
                   "mean_recall", "std_recall", "best"});
    for (const auto& [nl, report] : by_nl)
        for (size_t g = 0; g < report.candidates.size(); ++g) {
            const auto& c = report.candidates[g];
            csv.write_row({std::to_string(nl), fmt_num(c.params.C), c.params.kernel_name(),
                           c.params.weight_name(), fmt_num(c.mean[0]), fmt_num(c.stdev[0]),
                           fmt_num(c.mean[1]), fmt_num(c.stdev[1]), fmt_num(c.mean[2]),
                           fmt_num(c.stdev[2]), fmt_num(c.mean[3]), fmt_num(c.stdev[3]),
                           fmt_num(c.mean[4]), fmt_num(c.stdev[4]),
                           static_cast<int>(g) == report.best_index ? "1" : "0"});
        }
}

/// Metric table (`nl,accuracy,auc,f1,precision,recall`), overlaid ROC curves,
/// and the five metric trend lines across latent sizes.
inline void metric_trends(const std::map<int, MetricsReport>& reports,
                          const std::filesystem::path& csv_path,
                          const std::filesystem::path& roc_png,
                          const std::filesystem::path& trends_png) {
    if (reports.size() < 2)
        throw std::invalid_argument("metric_trends: need at least two latent sizes");
    CsvWriter csv(csv_path.string(), {"nl", "accuracy", "auc", "f1", "precision", "recall"});
    std::vector<double> nls, acc, auc, f1, prec, rec;
    std::vector<plot::Series> roc_series;
    for (const auto& [nl, rep] : reports) {
        csv.write_row({std::to_string(nl), fmt_num(rep.accuracy), fmt_num(rep.auc),
                       fmt_num(rep.f1), fmt_num(rep.precision), fmt_num(rep.recall)});
        nls.push_back(nl);
        acc.push_back(rep.accuracy);
        auc.push_back(rep.auc);
        f1.push_back(rep.f1);
        prec.push_back(rep.precision);
        rec.push_back(rep.recall);
        plot::Series s;
        s.label = "nl=" + std::to_string(nl) + " auc=" + fmt_num(std::round(rep.auc * 1000) / 1000);
        for (const auto& p : rep.roc) {
            s.x.push_back(p.fpr);
            s.y.push_back(p.tpr);
        }
        s.markers = false;
        roc_series.push_back(std::move(s));
    }
    plot::line_plot(roc_png.string(), roc_series, "ROC per latent size", "false positive rate",
                    "true positive rate");
    plot::line_plot(trends_png.string(),
                    {{"accuracy", nls, acc, {}, true},
                     {"auc", nls, auc, {}, true},
                     {"f1", nls, f1, {}, true},
                     {"precision", nls, prec, {}, true},
                     {"recall", nls, rec, {}, true}},
                    "Probe metrics vs latent size", "latent size", "score", true);
}

}  // namespace fundus
