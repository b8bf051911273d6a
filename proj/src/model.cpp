#include "mscpt/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mscpt/hash.hpp"
#include "mscpt/metrics.hpp"

namespace mscpt {

namespace {

std::string graph_source_name(GraphSource s) {
    switch (s) {
        case GraphSource::Sim: return "sim";
        case GraphSource::KnnCoord: return "knn_coord";
        case GraphSource::KnnFeat: return "knn_feat";
    }
    return "unknown";
}

Mat take_row(const Mat& m, int i) {
    Mat r = Mat::zeros(1, m.cols);
    std::copy(m.a.begin() + static_cast<size_t>(i) * m.cols,
              m.a.begin() + static_cast<size_t>(i + 1) * m.cols, r.a.begin());
    return r;
}

int argmax_lowest(const std::vector<double>& v) {
    int best = 0;
    for (int j = 1; j < static_cast<int>(v.size()); ++j)
        if (v[j] > v[best]) best = j;
    return best;
}

}  // namespace

std::string toggles_to_string(const Toggles& t) {
    std::ostringstream os;
    os << "mhpt=" << (t.mhpt ? 1 : 0) << " isgpt=" << (t.isgpt ? 1 : 0)
       << " npcgp=" << (t.npcgp ? 1 : 0) << " cross_guidance=" << (t.cross_guidance ? 1 : 0)
       << " graph=" << graph_source_name(t.graph_source) << " knn_k=" << t.knn_k;
    return os.str();
}

Toggles apply_variant(const Toggles& base, const std::string& variant) {
    Toggles t = base;
    if (variant == "full") return t;
    if (variant == "mhpt_off") {
        t.mhpt = false;
        return t;
    }
    if (variant == "isgpt_off") {
        t.isgpt = false;
        return t;
    }
    if (variant == "npcgp_off") {
        t.npcgp = false;
        return t;
    }
    if (variant == "all_off") {
        t.mhpt = t.isgpt = t.npcgp = false;
        return t;
    }
    if (variant == "graph_knn_coord") {
        t.graph_source = GraphSource::KnnCoord;
        return t;
    }
    if (variant == "graph_knn_feat") {
        t.graph_source = GraphSource::KnnFeat;
        return t;
    }
    if (variant == "no_cross_guidance") {
        t.cross_guidance = false;
        return t;
    }
    throw std::runtime_error("apply_variant: unknown variant '" + variant + "'");
}

const std::vector<std::string>& standard_variants() {
    static const std::vector<std::string> v = {
        "full",    "mhpt_off",       "isgpt_off",      "npcgp_off",
        "all_off", "graph_knn_coord", "graph_knn_feat", "no_cross_guidance"};
    return v;
}

struct MscptModel::BoundGraph {
    TextTowerVars tv;
    ImageTowerVars iv;
    PromptVars pv;
    std::vector<Var> gcn_low, gcn_high;
    AttentionPoolVars att_low, att_high;
    Var head_W, head_b;
    std::vector<Var> leaves;  // one per registry entry, same order
};

MscptModel::MscptModel(const ModelConfig& cfg, const Toggles& toggles, const DescriptionBank& bank,
                       const TemplateBank& templates, int d_raw)
    : cfg_(checked_config(cfg)), tog_(toggles) {
    if (tog_.knn_k < 1)
        throw std::runtime_error("model: knn_k must be >= 1, got " + std::to_string(tog_.knn_k));
    validate_description_bank(bank, cfg_);
    if (static_cast<int>(templates.templates.size()) != cfg_.K)
        throw std::runtime_error("model: template bank has " +
                                 std::to_string(templates.templates.size()) +
                                 " categories, config expects " + std::to_string(cfg_.K));

    Rng rng(cfg_.seed);
    text_ = TextEncoderParams::init(rng, cfg_);
    img_ = ImageEncoderParams::init(rng, cfg_, d_raw);
    prompts_ = PromptState::init(rng, cfg_);
    gcn_low_ = GcnParams::init(cfg_.gcn_layers, cfg_.d_joint);
    gcn_high_ = GcnParams::init(cfg_.gcn_layers, cfg_.d_joint);
    att_low_ = AttentionPoolParams::init(rng, cfg_.d_joint);
    att_high_ = AttentionPoolParams::init(rng, cfg_.d_joint);
    head_ = LinearHeadParams::init(rng, 2 * cfg_.d_joint, cfg_.K);

    W_templates_ = template_class_embeddings(templates, text_);

    Z_low_ = Mat::zeros(cfg_.K * cfg_.C_low, cfg_.d_joint);
    Z_high_frozen_ = Mat::zeros(cfg_.K * cfg_.C_high, cfg_.d_joint);
    trace_stacks_.resize(cfg_.K);
    high_tokens_.resize(cfg_.K);
    for (int k = 0; k < cfg_.K; ++k) {
        for (int c = 0; c < cfg_.C_low; ++c) {
            FrozenText ft = encode_text_frozen(
                text_, tokenize(bank.low[k][c], cfg_.vocab_size, cfg_.max_seq_len));
            std::copy(ft.z.a.begin(), ft.z.a.end(),
                      Z_low_.a.begin() + static_cast<size_t>(k * cfg_.C_low + c) * cfg_.d_joint);
        }
        high_tokens_[k].reserve(bank.high[k].size());
        for (int c = 0; c < cfg_.C_high; ++c) {
            std::vector<int> toks = tokenize(bank.high[k][c], cfg_.vocab_size, cfg_.max_seq_len);
            FrozenText ft = encode_text_frozen(text_, toks);
            std::copy(ft.z.a.begin(), ft.z.a.end(),
                      Z_high_frozen_.a.begin() +
                          static_cast<size_t>(k * cfg_.C_high + c) * cfg_.d_joint);
            high_tokens_[k].push_back(std::move(toks));
        }
        trace_stacks_[k] = category_low_trace_stacks(bank, k, text_);
    }

    auto add = [this](const std::string& name, Mat* m) {
        params_.push_back(Param{name, m, Mat::zeros(m->rows, m->cols), Mat::zeros(m->rows, m->cols)});
    };
    if (tog_.mhpt) {
        if (cfg_.len_glob > 0)
            for (int l = 0; l < cfg_.L_text; ++l)
                add("p_glob." + std::to_string(l), &prompts_.p_glob[l]);
        if (cfg_.len_vis > 0)
            for (int l = 0; l < cfg_.L_img; ++l)
                add("p_vis." + std::to_string(l), &prompts_.p_vis[l]);
        add("g.W1", &prompts_.g.W1);
        add("g.b1", &prompts_.g.b1);
        add("g.W2", &prompts_.g.W2);
        add("g.b2", &prompts_.g.b2);
    }
    if (tog_.isgpt) {
        for (int l = 0; l < cfg_.gcn_layers; ++l)
            add("gcn_low.W" + std::to_string(l), &gcn_low_.W[l]);
        for (int l = 0; l < cfg_.gcn_layers; ++l)
            add("gcn_high.W" + std::to_string(l), &gcn_high_.W[l]);
    }
    if (!tog_.npcgp) {
        add("att_low.V", &att_low_.V);
        add("att_low.U", &att_low_.U);
        add("att_low.w", &att_low_.w);
        add("att_high.V", &att_high_.V);
        add("att_high.U", &att_high_.U);
        add("att_high.w", &att_high_.w);
        add("head.W", &head_.W);
        add("head.b", &head_.b);
    }
}

PreparedBag MscptModel::prepare(const Bag& bag) const {
    validate_bag(bag, cfg_.K);
    if (!bag.low || !bag.high)
        throw std::runtime_error("prepare: bag '" + bag.bag_id + "' must carry both scales");
    if (bag.low->instances.cols != img_.d_raw || bag.high->instances.cols != img_.d_raw)
        throw std::runtime_error("prepare: bag '" + bag.bag_id + "' feature width " +
                                 std::to_string(bag.low->instances.cols) + "/" +
                                 std::to_string(bag.high->instances.cols) +
                                 " does not match encoder d_raw " + std::to_string(img_.d_raw));

    PreparedBag pb;
    pb.bag_id = bag.bag_id;
    pb.label = bag.label;

    Mat P_all = encode_image_frozen(img_, bag.low->instances);
    SelectionResult sel = select_patches(P_all, W_templates_, cfg_.n_select, cfg_.tau);
    pb.selected = sel.union_ids;
    const int m_sel = static_cast<int>(pb.selected.size());
    pb.low_raw = Mat::zeros(m_sel, img_.d_raw);
    pb.low_coords = Mat::zeros(m_sel, 2);
    pb.low_frozen = Mat::zeros(m_sel, cfg_.d_joint);
    for (int i = 0; i < m_sel; ++i) {
        const int id = pb.selected[i];
        for (int j = 0; j < img_.d_raw; ++j)
            pb.low_raw.at(i, j) = bag.low->instances.at(id, j);
        pb.low_coords.at(i, 0) = bag.low->coords.at(id, 0);
        pb.low_coords.at(i, 1) = bag.low->coords.at(id, 1);
        for (int j = 0; j < cfg_.d_joint; ++j) pb.low_frozen.at(i, j) = P_all.at(id, j);
    }
    pb.high_frozen = encode_image_frozen(img_, bag.high->instances);
    pb.high_coords = bag.high->coords;
    return pb;
}

MscptModel::BoundGraph MscptModel::bind(Tape& t) const {
    BoundGraph b;
    if (tog_.mhpt) {
        b.tv = bind_text(t, text_);
        b.iv = bind_image(t, img_);
        b.pv = bind_prompts(t, prompts_);
        if (cfg_.len_glob > 0)
            for (int l = 0; l < cfg_.L_text; ++l) b.leaves.push_back(b.pv.p_glob[l]);
        if (cfg_.len_vis > 0)
            for (int l = 0; l < cfg_.L_img; ++l) b.leaves.push_back(b.pv.p_vis[l]);
        b.leaves.push_back(b.pv.gW1);
        b.leaves.push_back(b.pv.gb1);
        b.leaves.push_back(b.pv.gW2);
        b.leaves.push_back(b.pv.gb2);
    }
    if (tog_.isgpt) {
        for (const Mat& w : gcn_low_.W) {
            Var v = t.leaf(w);
            b.gcn_low.push_back(v);
            b.leaves.push_back(v);
        }
        for (const Mat& w : gcn_high_.W) {
            Var v = t.leaf(w);
            b.gcn_high.push_back(v);
            b.leaves.push_back(v);
        }
    }
    if (!tog_.npcgp) {
        b.att_low = bind_attention_pool(t, att_low_);
        b.leaves.push_back(b.att_low.V);
        b.leaves.push_back(b.att_low.U);
        b.leaves.push_back(b.att_low.w);
        b.att_high = bind_attention_pool(t, att_high_);
        b.leaves.push_back(b.att_high.V);
        b.leaves.push_back(b.att_high.U);
        b.leaves.push_back(b.att_high.w);
        b.head_W = t.leaf(head_.W);
        b.head_b = t.leaf(head_.b);
        b.leaves.push_back(b.head_W);
        b.leaves.push_back(b.head_b);
    }
    if (b.leaves.size() != params_.size())
        throw std::logic_error("model: bound leaf count does not match the parameter registry");
    return b;
}

Var MscptModel::build_z_high_t(Tape& t, const TextTowerVars& tv, const PromptVars& pv) const {
    std::vector<Var> rows;
    rows.reserve(static_cast<size_t>(cfg_.K) * cfg_.C_high);
    for (int k = 0; k < cfg_.K; ++k) {
        std::vector<Var> p_low = generate_low_prompts_t(t, pv, trace_stacks_[k]);
        for (const std::vector<int>& toks : high_tokens_[k])
            rows.push_back(encode_text_prompted_t(t, tv, pv, p_low, toks));
    }
    return t.concat_rows(rows);
}

Var MscptModel::graph_for_scale(Tape& t, Var P, Var Z, const Mat& coords) {
    ++graph_builds_;
    const int m = t.val(P).rows;
    if (m == 1) return t.leaf(Mat::zeros(1, 1));
    switch (tog_.graph_source) {
        case GraphSource::Sim: {
            Var S = semantic_similarity_t(t, P, Z, cfg_.tau);
            return adjacency_from_similarity_t(t, S, cfg_.tau);
        }
        case GraphSource::KnnCoord:
            return t.leaf(knn_graph_coords(coords, std::min(tog_.knn_k, m - 1)));
        case GraphSource::KnnFeat:
            return t.leaf(knn_graph_features(t.val(P), std::min(tog_.knn_k, m - 1)));
    }
    throw std::logic_error("graph_for_scale: unhandled graph source");
}

ForwardOutput MscptModel::run_forward(Tape& t, const BoundGraph& b, const PreparedBag& bag,
                                      Var* loss_out) {
    const bool training = loss_out != nullptr;

    Var P_low, Z_high;
    if (tog_.mhpt) {
        std::vector<Var> rows;
        rows.reserve(bag.low_raw.rows);
        for (int i = 0; i < bag.low_raw.rows; ++i)
            rows.push_back(encode_image_prompted_t(t, b.iv, b.pv, take_row(bag.low_raw, i)));
        P_low = t.concat_rows(rows);
        if (training) {
            Z_high = build_z_high_t(t, b.tv, b.pv);
        } else {
            if (eval_cache_dirty_) refresh_eval_cache();
            Z_high = t.leaf(z_high_eval_);
        }
    } else {
        P_low = t.leaf(bag.low_frozen);
        Z_high = t.leaf(Z_high_frozen_);
    }
    Var P_high = t.leaf(bag.high_frozen);
    Var Z_low = t.leaf(Z_low_);

    Var Pl = P_low, Ph = P_high;
    if (tog_.isgpt) {
        Var A_low = graph_for_scale(t, P_low, Z_low, bag.low_coords);
        Pl = graph_prompt_tune_t(t, P_low, A_low, b.gcn_low);
        Var A_high = graph_for_scale(t, P_high, Z_high, bag.high_coords);
        Ph = graph_prompt_tune_t(t, P_high, A_high, b.gcn_high);
    }

    ForwardOutput out;
    Var loss, inference_logits;
    if (tog_.npcgp) {
        LogitsTripleVars triple = cross_guided_logits_t(t, Ph, Pl, Z_high, Z_low, cfg_.K,
                                                        cfg_.K_top, tog_.cross_guidance);
        loss = mscpt_loss_t(t, triple, bag.label);
        inference_logits = triple.overall;
        out.triple.high = t.val(triple.high).a;
        out.triple.low = t.val(triple.low).a;
        out.triple.overall = t.val(triple.overall).a;
    } else {
        Var emb_low = attention_pool_t(t, Pl, b.att_low).embedding;
        Var emb_high = attention_pool_t(t, Ph, b.att_high).embedding;
        Var logits =
            linear_head_t(t, t.concat_cols({emb_high, emb_low}), b.head_W, b.head_b);
        loss = t.cross_entropy_logits(logits, bag.label);
        inference_logits = logits;
        out.head_logits = t.val(logits).a;
    }
    out.loss = t.val(loss).a[0];
    out.probs = softmax_rows(t.val(inference_logits)).a;
    out.predicted = argmax_lowest(t.val(inference_logits).a);
    if (loss_out) *loss_out = loss;
    return out;
}

double MscptModel::train_step(const PreparedBag& bag) {
    Tape t;
    BoundGraph b = bind(t);
    Var loss;
    ForwardOutput out = run_forward(t, b, bag, &loss);
    if (!std::isfinite(out.loss))
        throw std::runtime_error("train_step: non-finite loss on bag '" + bag.bag_id +
                                 "' at step " + std::to_string(adam_t_ + 1));
    t.backward(loss);

    ++adam_t_;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(adam_t_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(adam_t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        Param& p = params_[i];
        Mat g = t.grad_of(b.leaves[i]);
        for (size_t j = 0; j < g.a.size(); ++j) {
            const double gj = g.a[j] + cfg_.weight_decay * p.value->a[j];
            p.m.a[j] = b1 * p.m.a[j] + (1.0 - b1) * gj;
            p.v.a[j] = b2 * p.v.a[j] + (1.0 - b2) * gj * gj;
            p.value->a[j] -= cfg_.lr * (p.m.a[j] / bc1) / (std::sqrt(p.v.a[j] / bc2) + eps);
        }
    }
    eval_cache_dirty_ = true;
    return out.loss;
}

ForwardOutput MscptModel::infer(const PreparedBag& bag) {
    Tape t;
    BoundGraph b = bind(t);
    return run_forward(t, b, bag, nullptr);
}

double MscptModel::loss_value(const PreparedBag& bag) {
    Tape t;
    BoundGraph b = bind(t);
    Var loss;
    return run_forward(t, b, bag, &loss).loss;
}

std::pair<double, std::vector<Mat>> MscptModel::loss_and_grads(const PreparedBag& bag) {
    Tape t;
    BoundGraph b = bind(t);
    Var loss;
    ForwardOutput out = run_forward(t, b, bag, &loss);
    t.backward(loss);
    std::vector<Mat> grads;
    grads.reserve(b.leaves.size());
    for (Var v : b.leaves) grads.push_back(t.grad_of(v));
    return {out.loss, std::move(grads)};
}

Mat& MscptModel::param_value(const std::string& name) {
    for (Param& p : params_)
        if (p.name == name) {
            eval_cache_dirty_ = true;
            return *p.value;
        }
    throw std::runtime_error("param_value: no parameter named '" + name + "' (" +
                             toggles_to_string(tog_) + ")");
}

void MscptModel::refresh_eval_cache() {
    Tape t;
    TextTowerVars tv = bind_text(t, text_);
    PromptVars pv = bind_prompts(t, prompts_);
    z_high_eval_ = t.val(build_z_high_t(t, tv, pv));
    eval_cache_dirty_ = false;
}

Mat MscptModel::zero_shot_score_map(const Bag& bag) const {
    if (!bag.low)
        throw std::runtime_error("zero_shot_score_map: bag '" + bag.bag_id +
                                 "' has no low-scale view");
    Mat P = encode_image_frozen(img_, bag.low->instances);
    Mat out = Mat::zeros(P.rows, cfg_.K);
    for (int i = 0; i < P.rows; ++i) {
        std::vector<double> p = zero_shot_probs(take_row(P, i), W_templates_, cfg_.tau);
        for (int k = 0; k < cfg_.K; ++k) out.at(i, k) = p[k];
    }
    return out;
}

uint64_t MscptModel::frozen_hash() const {
    Hasher h;
    h.u64(text_.content_hash());
    h.u64(img_.content_hash());
    h.mat(W_templates_);
    h.mat(Z_low_);
    h.mat(Z_high_frozen_);
    for (const auto& stacks : trace_stacks_)
        for (const Mat& m : stacks) h.mat(m);
    return h.h;
}

uint64_t MscptModel::trainable_hash() const {
    Hasher h;
    for (const Param& p : params_) {
        h.str(p.name);
        h.mat(*p.value);
    }
    return h.h;
}

void MscptModel::save_params(const std::string& path) const {
    std::ostringstream os;
    os << "model-params v1\n";
    os << "params " << params_.size() << "\n";
    char buf[64];
    for (const Param& p : params_) {
        os << "param " << p.name << " " << p.value->rows << " " << p.value->cols << "\n";
        for (int i = 0; i < p.value->rows; ++i) {
            for (int j = 0; j < p.value->cols; ++j) {
                std::snprintf(buf, sizeof buf, "%a", p.value->at(i, j));
                os << (j ? " " : "") << buf;
            }
            os << "\n";
        }
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_params: cannot open '" + path + "'");
    out << os.str();
    if (!out.good()) throw std::runtime_error("save_params: write to '" + path + "' failed");
}

void MscptModel::load_params(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_params: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != "model-params v1")
        throw std::runtime_error("load_params: '" + path + "' is not a model-params v1 file");
    std::string tag;
    size_t count = 0;
    if (!(in >> tag >> count) || tag != "params")
        throw std::runtime_error("load_params: missing params count in '" + path + "'");
    if (count != params_.size())
        throw std::runtime_error("load_params: file has " + std::to_string(count) +
                                 " parameters, this model (" + toggles_to_string(tog_) +
                                 ") has " + std::to_string(params_.size()));
    for (Param& p : params_) {
        std::string name;
        int rows = 0, cols = 0;
        if (!(in >> tag >> name >> rows >> cols) || tag != "param")
            throw std::runtime_error("load_params: malformed param header in '" + path + "'");
        if (name != p.name || rows != p.value->rows || cols != p.value->cols)
            throw std::runtime_error("load_params: expected " + p.name + " " +
                                     std::to_string(p.value->rows) + "x" +
                                     std::to_string(p.value->cols) + ", file has " + name + " " +
                                     std::to_string(rows) + "x" + std::to_string(cols));
        for (double& x : p.value->a) {
            std::string tok;
            if (!(in >> tok))
                throw std::runtime_error("load_params: truncated values for " + p.name);
            char* end = nullptr;
            x = std::strtod(tok.c_str(), &end);
            if (end == tok.c_str() || *end != '\0')
                throw std::runtime_error("load_params: bad value '" + tok + "' for " + p.name);
        }
        std::fill(p.m.a.begin(), p.m.a.end(), 0.0);
        std::fill(p.v.a.begin(), p.v.a.end(), 0.0);
    }
    adam_t_ = 0;
    eval_cache_dirty_ = true;
}

}  // namespace mscpt
