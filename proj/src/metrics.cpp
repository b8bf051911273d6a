#include "mscpt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace mscpt {

double binary_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) {
        throw std::invalid_argument("binary_auc: scores/labels length mismatch");
    }
    long long pos = 0, neg = 0;
    for (int l : labels) {
        if (l == 1) ++pos;
        else if (l == 0) ++neg;
        else throw std::invalid_argument("binary_auc: labels must be 0 or 1");
    }
    if (pos == 0 || neg == 0) {
        throw std::invalid_argument("binary_auc: needs at least one positive and one negative");
    }
    double u = 0.0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            if (scores[i] > scores[j]) u += 1.0;
            else if (scores[i] == scores[j]) u += 0.5;
        }
    }
    return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

Mat softmax_rows(const Mat& logits) {
    Mat out = logits;
    for (int i = 0; i < out.rows; ++i) {
        double mx = out.at(i, 0);
        for (int j = 1; j < out.cols; ++j) mx = std::max(mx, out.at(i, j));
        double denom = 0.0;
        for (int j = 0; j < out.cols; ++j) denom += std::exp(out.at(i, j) - mx);
        for (int j = 0; j < out.cols; ++j) out.at(i, j) = std::exp(out.at(i, j) - mx) / denom;
    }
    return out;
}

double macro_ovr_auc(const Mat& probs, const std::vector<int>& labels) {
    if (probs.rows != static_cast<int>(labels.size())) {
        throw std::invalid_argument("macro_ovr_auc: probs/labels length mismatch");
    }
    std::set<int> present(labels.begin(), labels.end());
    if (present.size() < 2) {
        throw std::invalid_argument("macro_ovr_auc: AUC undefined with a single-category test set");
    }
    double total = 0.0;
    int counted = 0;
    for (int k = 0; k < probs.cols; ++k) {
        std::vector<double> scores(static_cast<size_t>(probs.rows));
        std::vector<int> binary(static_cast<size_t>(probs.rows));
        int pos = 0;
        for (int i = 0; i < probs.rows; ++i) {
            scores[static_cast<size_t>(i)] = probs.at(i, k);
            binary[static_cast<size_t>(i)] = labels[static_cast<size_t>(i)] == k ? 1 : 0;
            pos += binary[static_cast<size_t>(i)];
        }
        if (pos == 0 || pos == probs.rows) continue;  // one-vs-rest undefined for this class
        total += binary_auc(scores, binary);
        ++counted;
    }
    return total / counted;
}

double macro_f1_score(const std::vector<int>& predictions, const std::vector<int>& labels,
                      int num_categories) {
    if (predictions.size() != labels.size()) {
        throw std::invalid_argument("macro_f1: predictions/labels length mismatch");
    }
    double total = 0.0;
    int counted = 0;
    for (int k = 0; k < num_categories; ++k) {
        long long tp = 0, fp = 0, fn = 0, support = 0;
        for (size_t i = 0; i < labels.size(); ++i) {
            bool truth = labels[i] == k;
            bool pred = predictions[i] == k;
            support += truth;
            if (truth && pred) ++tp;
            if (!truth && pred) ++fp;
            if (truth && !pred) ++fn;
        }
        if (support == 0) continue;
        double denom = 2.0 * tp + fp + fn;
        total += denom == 0.0 ? 0.0 : 2.0 * tp / denom;
        ++counted;
    }
    if (counted == 0) throw std::invalid_argument("macro_f1: no category has support");
    return total / counted;
}

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.size() != labels.size() || labels.empty()) {
        throw std::invalid_argument("accuracy: bad input lengths");
    }
    long long correct = 0;
    for (size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i];
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

Metrics compute_metrics(const Mat& probs, const std::vector<int>& predictions,
                        const std::vector<int>& labels, int num_categories) {
    Metrics m;
    m.auc = macro_ovr_auc(probs, labels);
    m.macro_f1 = macro_f1_score(predictions, labels, num_categories);
    m.acc = accuracy(predictions, labels);
    return m;
}

}  // namespace mscpt
