// Evaluation metrics: rank-statistic AUC, macro one-vs-rest AUC, macro-F1,
// and accuracy.
#pragma once

#include <vector>

#include "mscpt/mat.hpp"

namespace mscpt {

struct Metrics {
    double auc = 0.0;
    double macro_f1 = 0.0;
    double acc = 0.0;
};

// Mann-Whitney statistic over all positive/negative pairs, ties credited 0.5.
// Requires at least one positive and one negative label.
double binary_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Softmax each logits row into class probabilities.
Mat softmax_rows(const Mat& logits);

// One-vs-rest AUC per class, averaged over the classes that have both a
// positive and a negative example in `labels`. probs: N x K class
// probabilities. Throws if fewer than two distinct labels are present.
double macro_ovr_auc(const Mat& probs, const std::vector<int>& labels);

// Macro F1 over the classes with at least one true example; 0/0 counts as 0.
double macro_f1_score(const std::vector<int>& predictions, const std::vector<int>& labels,
                      int num_categories);

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

Metrics compute_metrics(const Mat& probs, const std::vector<int>& predictions,
                        const std::vector<int>& labels, int num_categories);

}  // namespace mscpt
