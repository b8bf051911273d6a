// Zero-shot instance scoring against category templates and top-n patch
// selection at the low scale.
#pragma once

#include <string>
#include <vector>

#include "mscpt/core.hpp"
#include "mscpt/encoders.hpp"
#include "mscpt/mat.hpp"

namespace mscpt {

struct TemplateBank {
    std::vector<std::string> category_names;
    std::vector<std::vector<std::string>> templates;  // per category
};

// Category-sectioned text file, one template per line. Requires exactly K
// sections with at least one template each.
TemplateBank load_template_bank(const std::string& path, int K);

// p_i = exp(cos(x, w_i)/tau) / sum_j exp(cos(x, w_j)/tau)
std::vector<double> zero_shot_probs(const Mat& x, const Mat& W, double tau);

// Mean of the rows, then L2-normalized. embs: T x d.
Mat average_normalized(const Mat& embs);

// One averaged, normalized embedding per category: K x d_joint.
Mat template_class_embeddings(const TemplateBank& bank, const TextEncoderParams& enc);

struct SelectionResult {
    std::vector<std::vector<int>> per_category;  // ranked instance ids
    std::vector<int> union_ids;                  // deduplicated union, ascending
};

// Ranks instances by their zero-shot probability for each category and keeps
// the top n_select (all of them when n_select >= M). Ties break toward the
// lower instance index. P: M x d_joint instance embeddings.
SelectionResult select_patches(const Mat& P, const Mat& W, int n_select, double tau);

// Convenience over a bag's low-scale view through the frozen image encoder.
SelectionResult select_patches(const Bag& bag, const ImageEncoderParams& enc, const Mat& W,
                               int n_select, double tau);

}  // namespace mscpt
