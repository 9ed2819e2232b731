#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace fundus {

/// Silhouette coefficient of a binary partition of 2-D points, in [-1, 1].
/// Points whose cohesion and separation are both zero contribute 0; if every
/// pairwise distance is zero the score is undefined and rejected.
inline double silhouette_score(const std::vector<double>& coords /* n x 2 */,
                               const std::vector<int>& labels) {
    const long n = static_cast<long>(labels.size());
    if (static_cast<long>(coords.size()) != 2 * n)
        throw std::invalid_argument("silhouette: coords must be n x 2");
    long n1 = 0;
    for (int l : labels) n1 += l != 0;
    if (n1 == 0 || n1 == n)
        throw std::invalid_argument("silhouette: both classes must be present");

    bool any_distance = false;
    double acc = 0;
    for (long i = 0; i < n; ++i) {
        double same = 0, other = 0;
        long same_n = 0, other_n = 0;
        for (long j = 0; j < n; ++j) {
            if (j == i) continue;
            const double dx = coords[2 * i] - coords[2 * j];
            const double dy = coords[2 * i + 1] - coords[2 * j + 1];
            const double d = std::sqrt(dx * dx + dy * dy);
            if (d > 0) any_distance = true;
            if (labels[j] == labels[i]) {
                same += d;
                ++same_n;
            } else {
                other += d;
                ++other_n;
            }
        }
        const double a = same_n ? same / same_n : 0.0;
        const double b = other / other_n;
        const double m = std::max(a, b);
        acc += m > 0 ? (b - a) / m : 0.0;
    }
    if (!any_distance)
        throw std::invalid_argument("silhouette: degenerate geometry, all points coincide");
    return acc / static_cast<double>(n);
}

}  // namespace fundus
