// Toy transformer text/image encoders with deep prompt-injection points.
//
// Both towers are frozen after init; the only trainable pieces here are the
// global text prompts, the visual prompts, and the prompt generator g. Frozen
// passes run as plain matrix code; prompted passes run on the autodiff tape.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mscpt/core.hpp"
#include "mscpt/mat.hpp"
#include "mscpt/tape.hpp"

namespace mscpt {

inline constexpr int kClsId = 0;
inline constexpr int kEotId = 1;

// Whitespace tokenizer hashing words into a fixed vocabulary:
// [CLS] w1 .. wn [EOT]. Throws when the result exceeds max_seq_len.
std::vector<int> tokenize(const std::string& text, int vocab_size, int max_seq_len);

// One pre-LN transformer block: single-head attention plus a GELU MLP with
// hidden width 2 * d_model.
struct AttnLayerParams {
    Mat Wq, Wk, Wv, Wo;  // d x d
    Mat bq, bk, bv, bo;  // 1 x d
    Mat W1, b1, W2, b2;  // d x 2d, 1 x 2d, 2d x d, 1 x d
};

struct TextEncoderParams {
    int d_model = 0, d_joint = 0, L = 0, vocab_size = 0, max_seq_len = 0;
    Mat token_embedding;  // vocab_size x d_model
    Mat pos_embedding;    // max_seq_len x d_model
    std::vector<AttnLayerParams> layers;
    Mat proj;  // d_model x d_joint

    static TextEncoderParams init(Rng& rng, const ModelConfig& cfg);
    uint64_t content_hash() const;
};

struct ImageEncoderParams {
    int d_raw = 0, d_model = 0, d_joint = 0, L = 0;
    Mat W_in, b_in;  // d_raw x d_model, 1 x d_model
    Mat pos0;        // 1 x d_model (grid length is 1)
    std::vector<AttnLayerParams> layers;
    Mat proj;  // d_model x d_joint

    static ImageEncoderParams init(Rng& rng, const ModelConfig& cfg, int d_raw);
    uint64_t content_hash() const;
};

// g: per-token MLP d_model -> d_model, zero-initialized output layer so the
// derived prompts start at zero.
struct PromptGeneratorParams {
    Mat W1, b1, W2, b2;
    static PromptGeneratorParams init(Rng& rng, int d_model);
};

struct PromptState {
    std::vector<Mat> p_glob;  // L_text entries, len_glob x d_model
    std::vector<Mat> p_vis;   // L_img entries, len_vis x d_model
    PromptGeneratorParams g;
    static PromptState init(Rng& rng, const ModelConfig& cfg);
};

// ---- frozen passes (plain matrix code, constants w.r.t. training) ----

struct FrozenText {
    Mat z;      // 1 x d_joint
    Mat trace;  // L x d_model, layer-l output at the [EOT] position
};

FrozenText encode_text_frozen(const TextEncoderParams& p, const std::vector<int>& tokens);

// Batched frozen image pass: every row is an independent length-1 token grid.
Mat encode_image_frozen(const ImageEncoderParams& p, const Mat& features);

// ---- tape passes (trainable paths) ----

struct AttnLayerVars {
    Var Wq, Wk, Wv, Wo, bq, bk, bv, bo, W1, b1, W2, b2;
};
struct TextTowerVars {
    const TextEncoderParams* p = nullptr;
    Var token_embedding, pos_embedding, proj;
    std::vector<AttnLayerVars> layers;
};
struct ImageTowerVars {
    const ImageEncoderParams* p = nullptr;
    Var W_in, b_in, pos0, proj;
    std::vector<AttnLayerVars> layers;
};
struct PromptVars {
    std::vector<Var> p_glob, p_vis;
    Var gW1, gb1, gW2, gb2;
};

TextTowerVars bind_text(Tape& t, const TextEncoderParams& p);
ImageTowerVars bind_image(Tape& t, const ImageEncoderParams& p);
PromptVars bind_prompts(Tape& t, const PromptState& s);

Var transformer_layer_t(Tape& t, const AttnLayerVars& l, Var x);

// p_low for one category: applies g to each layer's stacked [EOT] traces.
// traces: one C x d_model matrix per layer (layer-major). Returns one
// C x d_model prompt slab per layer.
std::vector<Var> generate_low_prompts_t(Tape& t, const PromptVars& pv,
                                        const std::vector<Mat>& traces_by_layer);

// Regroups per-description traces (each L x d_model) into per-layer stacks.
std::vector<Mat> stack_traces_by_layer(const std::vector<Mat>& traces);

// Per-layer slot widths of the hierarchical prompted layout, for
// instrumentation and layout assertions.
struct PromptedLayoutRow {
    int cls = 0, glob = 0, low = 0, high = 0, eot = 0;
};

// Hierarchical prompted text pass. Layer input layout is
// [cls | p_glob | p_low | p_high | eot]; the glob and low slots are replaced
// by fresh parameters/derived prompts after every layer, the cls, p_high and
// eot streams propagate. Returns the projected [EOT] embedding, 1 x d_joint.
Var encode_text_prompted_t(Tape& t, const TextTowerVars& tv, const PromptVars& pv,
                           const std::vector<Var>& p_low,
                           const std::vector<int>& tokens,
                           std::vector<PromptedLayoutRow>* layout = nullptr);

// Deep visual prompts prepended per layer, prompt outputs discarded; the
// single token row propagates. feature_row: 1 x d_raw. Returns 1 x d_joint.
Var encode_image_prompted_t(Tape& t, const ImageTowerVars& iv, const PromptVars& pv,
                            const Mat& feature_row);

}  // namespace mscpt
