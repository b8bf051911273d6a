// Full pipeline assembly: frozen towers, prompt state, per-scale graph
// propagation, pooled logits, the trainable-parameter registry, and the Adam
// update. Toggles select the ablation variants.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mscpt/baselines.hpp"
#include "mscpt/core.hpp"
#include "mscpt/descriptions.hpp"
#include "mscpt/encoders.hpp"
#include "mscpt/isgpt.hpp"
#include "mscpt/npcgp.hpp"
#include "mscpt/selection.hpp"

namespace mscpt {

enum class GraphSource { Sim, KnnCoord, KnnFeat };

struct Toggles {
    bool mhpt = true;   // off: no prompts anywhere, both towers fully frozen
    bool isgpt = true;  // off: propagated embeddings are the raw embeddings
    bool npcgp = true;  // off: gated-attention pooling into a linear head
    bool cross_guidance = true;
    GraphSource graph_source = GraphSource::Sim;
    int knn_k = 4;  // clamped per bag to M-1
};

std::string toggles_to_string(const Toggles& t);
// Named ablation variants: full, mhpt_off, isgpt_off, npcgp_off, all_off,
// graph_knn_coord, graph_knn_feat, no_cross_guidance. Unknown names throw.
Toggles apply_variant(const Toggles& base, const std::string& variant);
const std::vector<std::string>& standard_variants();

struct Param {
    std::string name;
    Mat* value = nullptr;  // points into the owning model
    Mat m, v;              // Adam moments
};

// A bag after frozen preprocessing: patch selection at the low scale and
// frozen embeddings everywhere the towers stay fixed.
struct PreparedBag {
    std::string bag_id;
    int label = 0;
    std::vector<int> selected;  // low-scale union, ascending
    Mat low_raw;                // selected rows, M_sel x d_raw
    Mat low_coords;             // M_sel x 2
    Mat low_frozen;             // M_sel x d_joint
    Mat high_frozen;            // M_high x d_joint
    Mat high_coords;            // M_high x 2
};

struct ForwardOutput {
    LogitsTriple triple;              // populated when the pooled head is on
    std::vector<double> head_logits;  // populated otherwise
    std::vector<double> probs;        // softmax over the inference logits
    double loss = 0.0;
    int predicted = 0;
};

class MscptModel {
  public:
    MscptModel(const ModelConfig& cfg, const Toggles& toggles, const DescriptionBank& bank,
               const TemplateBank& templates, int d_raw);
    // The parameter registry points into this object.
    MscptModel(const MscptModel&) = delete;
    MscptModel& operator=(const MscptModel&) = delete;

    PreparedBag prepare(const Bag& bag) const;

    // One optimizer step on one bag; returns the loss. Throws on a non-finite
    // loss, naming the bag.
    double train_step(const PreparedBag& bag);
    ForwardOutput infer(const PreparedBag& bag);

    // Training-path forward without an optimizer update.
    double loss_value(const PreparedBag& bag);
    // Loss and d(loss)/d(param) in registry order, without an update.
    std::pair<double, std::vector<Mat>> loss_and_grads(const PreparedBag& bag);
    // Named mutable parameter access; invalidates cached inference state.
    Mat& param_value(const std::string& name);

    // Zero-shot template probabilities for every low-scale instance: M x K.
    Mat zero_shot_score_map(const Bag& bag) const;

    uint64_t frozen_hash() const;
    uint64_t trainable_hash() const;
    int graph_builds() const { return graph_builds_; }
    long long steps_taken() const { return adam_t_; }
    const ModelConfig& config() const { return cfg_; }
    const Toggles& toggles() const { return tog_; }
    const std::vector<Param>& params() const { return params_; }

    void save_params(const std::string& path) const;
    void load_params(const std::string& path);

  private:
    struct BoundGraph;
    BoundGraph bind(Tape& t) const;
    ForwardOutput run_forward(Tape& t, const BoundGraph& bound, const PreparedBag& bag,
                              Var* loss_out);
    Var build_z_high_t(Tape& t, const TextTowerVars& tv, const PromptVars& pv) const;
    Var graph_for_scale(Tape& t, Var P, Var Z, const Mat& coords);
    void refresh_eval_cache();

    ModelConfig cfg_;
    Toggles tog_;
    TextEncoderParams text_;
    ImageEncoderParams img_;
    PromptState prompts_;
    GcnParams gcn_low_, gcn_high_;
    AttentionPoolParams att_low_, att_high_;
    LinearHeadParams head_;
    std::vector<Param> params_;

    Mat W_templates_;     // K x d_joint class embeddings for selection
    Mat Z_low_;           // frozen low description embeddings
    Mat Z_high_frozen_;   // frozen high description embeddings (prompts off)
    std::vector<std::vector<Mat>> trace_stacks_;            // [K][layer]
    std::vector<std::vector<std::vector<int>>> high_tokens_;  // [K][C_high]

    Mat z_high_eval_;  // cached prompted Z_high for inference
    bool eval_cache_dirty_ = true;
    long long adam_t_ = 0;
    int graph_builds_ = 0;
};

}  // namespace mscpt
