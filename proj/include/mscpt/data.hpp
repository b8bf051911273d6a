// Synthetic two-scale bag generator with controllable witness structure,
// toy description/template synthesis, and the dataset directory store.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mscpt/core.hpp"
#include "mscpt/descriptions.hpp"
#include "mscpt/mat.hpp"
#include "mscpt/selection.hpp"

namespace mscpt {

struct SyntheticSpec {
    int categories = 2;
    int bags_per_category = 20;
    int m_low_min = 8, m_low_max = 14;
    int m_high_min = 16, m_high_max = 28;
    int d_raw = 24;
    // Fraction of instances carrying the category signal in a positive bag.
    double witness_rate = 0.1;
    // When set, a positive bag needs two co-occurring witness sub-types;
    // negative bags carry a single sub-type at doubled rate, so per-instance
    // statistics alone cannot separate the classes. Categories must be 2 and
    // per-bag instance labels are omitted.
    bool context_mode = false;
    double noise_scale = 0.3;
    int grid = 16;  // low-scale coords live on grid x grid; high on 2*grid
    uint64_t seed = 1;
};

std::vector<std::string> validate_synthetic_spec(const SyntheticSpec& spec);

struct SyntheticDataset {
    SyntheticSpec spec;
    std::vector<Bag> bags;          // bag_id = category * bags_per_category + index
    Mat prototypes_low;             // categories x d_raw; row 0 is the background origin
    Mat prototypes_high;
    Mat context_delta_low;          // 1 x d_raw sub-type offset (context mode only)
    Mat context_delta_high;
};

SyntheticDataset generate_synthetic_dataset(const SyntheticSpec& spec);

// Deterministic word-pool phrase banks sized to the config.
DescriptionBank make_toy_descriptions(int categories, int c_low, int c_high);
TemplateBank make_toy_templates(int categories, int templates_per_category = 50);

// Directory store: manifest.txt plus one float32 payload per bag; writes are
// temp-file-plus-rename.
void save_dataset(const SyntheticDataset& ds, const std::string& dir);
SyntheticDataset load_dataset(const std::string& dir);

// Content hash over the generation parameters, every label, and every
// feature/coord bit.
uint64_t dataset_hash(const SyntheticDataset& ds);

}  // namespace mscpt
