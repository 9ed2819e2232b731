#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace fundus {

struct RocPoint {
    double fpr = 0, tpr = 0, threshold = 0;
};

struct MetricsReport {
    double accuracy = 0, auc = 0, f1 = 0, precision = 0, recall = 0;
    std::vector<RocPoint> roc;
};

/// The five probe metrics plus the full ROC sweep. AUC is the trapezoidal
/// area over all score thresholds (ties grouped), which equals the
/// Mann-Whitney pair statistic with half credit for ties.
inline MetricsReport compute_metrics(const std::vector<int>& y_true,
                                     const std::vector<double>& y_score,
                                     const std::vector<int>& y_pred) {
    const long n = static_cast<long>(y_true.size());
    if (n == 0) throw std::invalid_argument("metrics: empty input");
    if (static_cast<long>(y_score.size()) != n || static_cast<long>(y_pred.size()) != n)
        throw std::invalid_argument("metrics: length mismatch");
    long pos = 0;
    for (int v : y_true) {
        if (v != 0 && v != 1) throw std::invalid_argument("metrics: labels must be binary");
        pos += v;
    }
    const long neg = n - pos;
    if (pos == 0 || neg == 0)
        throw std::invalid_argument("metrics: both classes required for the ROC sweep");

    MetricsReport out;
    long tp = 0, fp = 0, tn = 0, fn = 0;
    for (long i = 0; i < n; ++i) {
        if (y_pred[i] && y_true[i]) ++tp;
        else if (y_pred[i] && !y_true[i]) ++fp;
        else if (!y_pred[i] && !y_true[i]) ++tn;
        else ++fn;
    }
    out.accuracy = static_cast<double>(tp + tn) / n;
    out.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    out.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    out.f1 = out.precision + out.recall > 0
                 ? 2 * out.precision * out.recall / (out.precision + out.recall)
                 : 0.0;

    std::vector<long> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](long a, long b) { return y_score[a] > y_score[b]; });
    out.roc.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    long ctp = 0, cfp = 0;
    long i = 0;
    while (i < n) {
        const double s = y_score[order[i]];
        while (i < n && y_score[order[i]] == s) {
            if (y_true[order[i]]) ++ctp;
            else ++cfp;
            ++i;
        }
        out.roc.push_back({static_cast<double>(cfp) / neg, static_cast<double>(ctp) / pos, s});
    }
    out.auc = 0;
    for (size_t k = 1; k < out.roc.size(); ++k)
        out.auc += (out.roc[k].fpr - out.roc[k - 1].fpr) *
                   (out.roc[k].tpr + out.roc[k - 1].tpr) / 2.0;
    return out;
}

}  // namespace fundus
