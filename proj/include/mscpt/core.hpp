// Domain records, configuration, and the bag-label relation.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mscpt/mat.hpp"

namespace mscpt {

// One magnification level of a bag: M instances as raw feature rows plus
// their grid coordinates. instance_labels is empty when ground truth is
// withheld (or unknown).
struct ScaleView {
    Mat instances;  // M x F
    Mat coords;     // M x 2
    std::vector<int> instance_labels;
};

struct Bag {
    std::string bag_id;
    int label = 0;
    std::optional<ScaleView> low;
    std::optional<ScaleView> high;
};

struct ModelConfig {
    int d_joint = 32;
    int K = 2;
    int C_low = 10;
    int C_high = 30;
    int n_select = 30;
    double tau = 0.07;
    int K_top = 5;
    int L_text = 2;
    int L_img = 2;
    int len_glob = 2;
    int len_vis = 2;
    int gcn_layers = 1;
    double lr = 1e-4;
    double weight_decay = 1e-5;
    int max_epochs = 50;
    int patience = 10;
    uint64_t seed = 1;
    // Toy encoder dimensions.
    int d_model = 16;
    int vocab_size = 256;
    int max_seq_len = 64;
};

struct ConfigReport {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
    std::string to_string() const;
};

ConfigReport validate_config(const ModelConfig& cfg);
// validate_config that throws, listing every violated field.
ModelConfig checked_config(const ModelConfig& cfg);

// Flat key-value file: `key = value`, `#` comments. Unknown keys are an
// error naming all of them.
ModelConfig load_config_file(const std::string& path);
void apply_config_kv(ModelConfig& cfg, const std::string& key, const std::string& value);
// Canonical snapshot (stable key order, full double precision) used for
// run manifests and content hashing.
std::string config_to_string(const ModelConfig& cfg);

// Returns 0 iff all instance labels are 0, else 1.
int bag_label_from_instances(const std::vector<int>& labels);

// Checks per-scale shape invariants, coordinate uniqueness, and (for K = 2,
// when instance labels are present) consistency of the bag label with the
// instance labels. Throws on the first violation, naming the bag.
void validate_bag(const Bag& bag, int K);

}  // namespace mscpt
