// Multi-scale visual description bank: loading, validation, and embedding.
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mscpt/core.hpp"
#include "mscpt/encoders.hpp"
#include "mscpt/mat.hpp"

namespace mscpt {

struct DescriptionBank {
    std::vector<std::string> category_names;
    std::vector<std::vector<std::string>> low;   // [K][C_low]
    std::vector<std::vector<std::string>> high;  // [K][C_high]
    std::string provenance;
    std::vector<std::string> warnings;  // duplicates are warned about, not fatal
};

// Category-sectioned file with [low]/[high] subsections, one description per
// line. Counts must match cfg exactly; errors name the category and scale.
DescriptionBank load_description_bank(const std::string& path, const ModelConfig& cfg);

void validate_description_bank(const DescriptionBank& bank, const ModelConfig& cfg);

struct DescriptionEmbeddings {
    Mat Z_low;   // K*C_low x d_joint, frozen low text encoder
    Mat Z_high;  // K*C_high x d_joint, prompted hierarchical encoder
    std::vector<std::pair<int, int>> low_ids;   // row -> (category, description)
    std::vector<std::pair<int, int>> high_ids;
};

// Row order is category-major: row k*C + c holds description c of category k.
// Z_high is produced with the supplied prompt state; the derived prompts for
// category k come from that category's own low descriptions.
DescriptionEmbeddings embed_description_bank(const DescriptionBank& bank,
                                             const TextEncoderParams& enc,
                                             const PromptState& prompts);

// Frozen traces of category k's low descriptions, stacked per layer
// (each entry C_low x d_model). These are constants during training.
std::vector<Mat> category_low_trace_stacks(const DescriptionBank& bank, int k,
                                           const TextEncoderParams& enc);

}  // namespace mscpt
