#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace rim {

// Area under the ROC curve via the rank statistic, with midrank tie handling.
inline double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw std::invalid_argument("auc_roc: scores/labels size mismatch or empty");
    std::vector<size_t> idx(scores.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });
    std::vector<double> rank(scores.size());
    size_t i = 0;
    while (i < idx.size()) {
        size_t j = i;
        while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
        const double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (size_t k = i; k <= j; ++k) rank[idx[k]] = mid;
        i = j + 1;
    }
    double pos = 0, rank_sum = 0;
    for (size_t k = 0; k < labels.size(); ++k) {
        if (labels[k] == 1) {
            pos += 1;
            rank_sum += rank[k];
        }
    }
    const double neg = static_cast<double>(labels.size()) - pos;
    if (pos == 0 || neg == 0) throw std::invalid_argument("auc_roc: needs both classes");
    return (rank_sum - pos * (pos + 1) / 2.0) / (pos * neg);
}

// Average precision (area under the precision-recall curve).
inline double auc_pr(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw std::invalid_argument("auc_pr: scores/labels size mismatch or empty");
    std::vector<size_t> idx(scores.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });
    double total_pos = 0;
    for (int l : labels) total_pos += (l == 1);
    if (total_pos == 0) throw std::invalid_argument("auc_pr: no positive labels");
    double tp = 0, seen = 0, ap = 0;
    size_t i = 0;
    while (i < idx.size()) {
        size_t j = i;
        double tied_pos = 0;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
            tied_pos += (labels[idx[j]] == 1);
            ++j;
        }
        const double tied = static_cast<double>(j - i);
        // interpolate within the tie block
        seen += tied;
        tp += tied_pos;
        const double precision = tp / seen;
        ap += precision * (tied_pos / total_pos);
        i = j;
    }
    return ap;
}

// Half the L1 distance between two discrete distributions.
inline double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) throw std::invalid_argument("total_variation: size mismatch");
    double s = 0;
    for (size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
    return s / 2.0;
}

}  // namespace rim
