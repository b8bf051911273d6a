#include "mscpt/encoders.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "mscpt/hash.hpp"

namespace mscpt {

namespace {

Mat plain_matmul(const Mat& a, const Mat& b) {
    Mat out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i)
        for (int k = 0; k < a.cols; ++k) {
            const double av = a.at(i, k);
            if (av == 0.0) continue;
            for (int j = 0; j < b.cols; ++j) out.at(i, j) += av * b.at(k, j);
        }
    return out;
}

Mat plain_layer_norm(const Mat& x, double eps = 1e-5) {
    Mat out(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i) {
        double mu = 0.0;
        for (int j = 0; j < x.cols; ++j) mu += x.at(i, j);
        mu /= x.cols;
        double var = 0.0;
        for (int j = 0; j < x.cols; ++j) {
            const double d = x.at(i, j) - mu;
            var += d * d;
        }
        var /= x.cols;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < x.cols; ++j) out.at(i, j) = (x.at(i, j) - mu) * inv;
    }
    return out;
}

void plain_add_rowvec(Mat& a, const Mat& v) {
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) a.at(i, j) += v.at(0, j);
}

double plain_gelu1(double v) { return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))); }

Mat plain_attention(const Mat& q, const Mat& k, const Mat& v) {
    const double inv = 1.0 / std::sqrt(static_cast<double>(q.cols));
    Mat ctx(q.rows, v.cols);
    std::vector<double> w(static_cast<size_t>(k.rows));
    for (int i = 0; i < q.rows; ++i) {
        double m = -1e300;
        for (int j = 0; j < k.rows; ++j) {
            w[static_cast<size_t>(j)] = dot_rows(q, i, k, j) * inv;
            m = std::max(m, w[static_cast<size_t>(j)]);
        }
        double z = 0.0;
        for (int j = 0; j < k.rows; ++j) {
            w[static_cast<size_t>(j)] = std::exp(w[static_cast<size_t>(j)] - m);
            z += w[static_cast<size_t>(j)];
        }
        for (int j = 0; j < k.rows; ++j) {
            const double a = w[static_cast<size_t>(j)] / z;
            for (int c = 0; c < v.cols; ++c) ctx.at(i, c) += a * v.at(j, c);
        }
    }
    return ctx;
}

// Full pre-LN block: rows attend to each other.
Mat plain_transformer_layer(const AttnLayerParams& l, const Mat& x) {
    Mat h = plain_layer_norm(x);
    Mat q = plain_matmul(h, l.Wq);
    plain_add_rowvec(q, l.bq);
    Mat k = plain_matmul(h, l.Wk);
    plain_add_rowvec(k, l.bk);
    Mat v = plain_matmul(h, l.Wv);
    plain_add_rowvec(v, l.bv);
    Mat ao = plain_matmul(plain_attention(q, k, v), l.Wo);
    plain_add_rowvec(ao, l.bo);
    Mat x1 = x;
    for (size_t i = 0; i < x1.a.size(); ++i) x1.a[i] += ao.a[i];
    Mat h2 = plain_layer_norm(x1);
    Mat m1 = plain_matmul(h2, l.W1);
    plain_add_rowvec(m1, l.b1);
    for (auto& e : m1.a) e = plain_gelu1(e);
    Mat m2 = plain_matmul(m1, l.W2);
    plain_add_rowvec(m2, l.b2);
    for (size_t i = 0; i < x1.a.size(); ++i) x1.a[i] += m2.a[i];
    return x1;
}

// Same block for a batch of independent length-1 token grids: single-token
// attention collapses to the value path, so rows never mix.
Mat plain_rowwise_layer(const AttnLayerParams& l, const Mat& x) {
    Mat h = plain_layer_norm(x);
    Mat v = plain_matmul(h, l.Wv);
    plain_add_rowvec(v, l.bv);
    Mat ao = plain_matmul(v, l.Wo);
    plain_add_rowvec(ao, l.bo);
    Mat x1 = x;
    for (size_t i = 0; i < x1.a.size(); ++i) x1.a[i] += ao.a[i];
    Mat h2 = plain_layer_norm(x1);
    Mat m1 = plain_matmul(h2, l.W1);
    plain_add_rowvec(m1, l.b1);
    for (auto& e : m1.a) e = plain_gelu1(e);
    Mat m2 = plain_matmul(m1, l.W2);
    plain_add_rowvec(m2, l.b2);
    for (size_t i = 0; i < x1.a.size(); ++i) x1.a[i] += m2.a[i];
    return x1;
}

AttnLayerParams init_layer(Rng& rng, int d) {
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    AttnLayerParams l;
    l.Wq = randn(rng, d, d, s);
    l.Wk = randn(rng, d, d, s);
    l.Wv = randn(rng, d, d, s);
    l.Wo = randn(rng, d, d, s);
    l.bq = Mat::zeros(1, d);
    l.bk = Mat::zeros(1, d);
    l.bv = Mat::zeros(1, d);
    l.bo = Mat::zeros(1, d);
    l.W1 = randn(rng, d, 2 * d, s);
    l.b1 = Mat::zeros(1, 2 * d);
    l.W2 = randn(rng, 2 * d, d, 1.0 / std::sqrt(2.0 * d));
    l.b2 = Mat::zeros(1, d);
    return l;
}

void hash_layer(Hasher& h, const AttnLayerParams& l) {
    h.mat(l.Wq);
    h.mat(l.Wk);
    h.mat(l.Wv);
    h.mat(l.Wo);
    h.mat(l.bq);
    h.mat(l.bk);
    h.mat(l.bv);
    h.mat(l.bo);
    h.mat(l.W1);
    h.mat(l.b1);
    h.mat(l.W2);
    h.mat(l.b2);
}

void check_tokens(const std::vector<int>& tokens, int max_seq_len, int vocab_size) {
    if (tokens.empty() || tokens.back() != kEotId)
        throw std::runtime_error("encoder: token sequence must end with the end token");
    if (static_cast<int>(tokens.size()) > max_seq_len)
        throw std::runtime_error("encoder: sequence length " + std::to_string(tokens.size()) +
                                 " exceeds context limit " + std::to_string(max_seq_len));
    for (int id : tokens)
        if (id < 0 || id >= vocab_size)
            throw std::runtime_error("encoder: token id out of range");
}

}  // namespace

std::vector<int> tokenize(const std::string& text, int vocab_size, int max_seq_len) {
    std::vector<int> ids = {kClsId};
    std::istringstream in(text);
    std::string word;
    while (in >> word) {
        Hasher h;
        h.bytes(word.data(), word.size());
        ids.push_back(2 + static_cast<int>(h.h % static_cast<uint64_t>(vocab_size - 2)));
    }
    ids.push_back(kEotId);
    if (static_cast<int>(ids.size()) > max_seq_len)
        throw std::runtime_error("tokenize: '" + text.substr(0, 32) + "...' needs " +
                                 std::to_string(ids.size()) + " tokens, limit " +
                                 std::to_string(max_seq_len));
    return ids;
}

TextEncoderParams TextEncoderParams::init(Rng& rng, const ModelConfig& cfg) {
    TextEncoderParams p;
    p.d_model = cfg.d_model;
    p.d_joint = cfg.d_joint;
    p.L = cfg.L_text;
    p.vocab_size = cfg.vocab_size;
    p.max_seq_len = cfg.max_seq_len;
    p.token_embedding = randn(rng, cfg.vocab_size, cfg.d_model, 1.0);
    p.pos_embedding = randn(rng, cfg.max_seq_len, cfg.d_model, 0.5);
    for (int l = 0; l < cfg.L_text; ++l) p.layers.push_back(init_layer(rng, cfg.d_model));
    p.proj = randn(rng, cfg.d_model, cfg.d_joint, 1.0 / std::sqrt(cfg.d_model));
    return p;
}

uint64_t TextEncoderParams::content_hash() const {
    Hasher h;
    h.mat(token_embedding);
    h.mat(pos_embedding);
    for (const auto& l : layers) hash_layer(h, l);
    h.mat(proj);
    return h.h;
}

ImageEncoderParams ImageEncoderParams::init(Rng& rng, const ModelConfig& cfg, int d_raw) {
    ImageEncoderParams p;
    p.d_raw = d_raw;
    p.d_model = cfg.d_model;
    p.d_joint = cfg.d_joint;
    p.L = cfg.L_img;
    p.W_in = randn(rng, d_raw, cfg.d_model, 1.0 / std::sqrt(static_cast<double>(d_raw)));
    p.b_in = Mat::zeros(1, cfg.d_model);
    p.pos0 = randn(rng, 1, cfg.d_model, 0.5);
    for (int l = 0; l < cfg.L_img; ++l) p.layers.push_back(init_layer(rng, cfg.d_model));
    p.proj = randn(rng, cfg.d_model, cfg.d_joint, 1.0 / std::sqrt(cfg.d_model));
    return p;
}

uint64_t ImageEncoderParams::content_hash() const {
    Hasher h;
    h.mat(W_in);
    h.mat(b_in);
    h.mat(pos0);
    for (const auto& l : layers) hash_layer(h, l);
    h.mat(proj);
    return h.h;
}

PromptGeneratorParams PromptGeneratorParams::init(Rng& rng, int d_model) {
    PromptGeneratorParams g;
    g.W1 = randn(rng, d_model, d_model, 1.0 / std::sqrt(d_model));
    g.b1 = Mat::zeros(1, d_model);
    g.W2 = Mat::zeros(d_model, d_model);
    g.b2 = Mat::zeros(1, d_model);
    return g;
}

PromptState PromptState::init(Rng& rng, const ModelConfig& cfg) {
    PromptState s;
    for (int l = 0; l < cfg.L_text; ++l)
        s.p_glob.push_back(randn(rng, cfg.len_glob, cfg.d_model, 0.02));
    for (int l = 0; l < cfg.L_img; ++l)
        s.p_vis.push_back(randn(rng, cfg.len_vis, cfg.d_model, 0.02));
    s.g = PromptGeneratorParams::init(rng, cfg.d_model);
    return s;
}

FrozenText encode_text_frozen(const TextEncoderParams& p, const std::vector<int>& tokens) {
    check_tokens(tokens, p.max_seq_len, p.vocab_size);
    const int n = static_cast<int>(tokens.size());
    Mat x(n, p.d_model);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p.d_model; ++j)
            x.at(i, j) = p.token_embedding.at(tokens[static_cast<size_t>(i)], j) +
                         p.pos_embedding.at(i, j);
    FrozenText out;
    out.trace = Mat(p.L, p.d_model);
    for (int l = 0; l < p.L; ++l) {
        x = plain_transformer_layer(p.layers[static_cast<size_t>(l)], x);
        for (int j = 0; j < p.d_model; ++j) out.trace.at(l, j) = x.at(n - 1, j);
    }
    Mat eot(1, p.d_model);
    for (int j = 0; j < p.d_model; ++j) eot.at(0, j) = x.at(n - 1, j);
    out.z = plain_matmul(plain_layer_norm(eot), p.proj);
    return out;
}

Mat encode_image_frozen(const ImageEncoderParams& p, const Mat& features) {
    if (features.cols != p.d_raw)
        throw std::runtime_error("image encoder: feature width " +
                                 std::to_string(features.cols) + ", expected " +
                                 std::to_string(p.d_raw));
    Mat x = plain_matmul(features, p.W_in);
    plain_add_rowvec(x, p.b_in);
    plain_add_rowvec(x, p.pos0);
    for (const auto& l : p.layers) x = plain_rowwise_layer(l, x);
    return plain_matmul(plain_layer_norm(x), p.proj);
}

TextTowerVars bind_text(Tape& t, const TextEncoderParams& p) {
    TextTowerVars v;
    v.p = &p;
    v.token_embedding = t.leaf(p.token_embedding);
    v.pos_embedding = t.leaf(p.pos_embedding);
    for (const auto& l : p.layers)
        v.layers.push_back(AttnLayerVars{t.leaf(l.Wq), t.leaf(l.Wk), t.leaf(l.Wv),
                                         t.leaf(l.Wo), t.leaf(l.bq), t.leaf(l.bk),
                                         t.leaf(l.bv), t.leaf(l.bo), t.leaf(l.W1),
                                         t.leaf(l.b1), t.leaf(l.W2), t.leaf(l.b2)});
    v.proj = t.leaf(p.proj);
    return v;
}

ImageTowerVars bind_image(Tape& t, const ImageEncoderParams& p) {
    ImageTowerVars v;
    v.p = &p;
    v.W_in = t.leaf(p.W_in);
    v.b_in = t.leaf(p.b_in);
    v.pos0 = t.leaf(p.pos0);
    for (const auto& l : p.layers)
        v.layers.push_back(AttnLayerVars{t.leaf(l.Wq), t.leaf(l.Wk), t.leaf(l.Wv),
                                         t.leaf(l.Wo), t.leaf(l.bq), t.leaf(l.bk),
                                         t.leaf(l.bv), t.leaf(l.bo), t.leaf(l.W1),
                                         t.leaf(l.b1), t.leaf(l.W2), t.leaf(l.b2)});
    v.proj = t.leaf(p.proj);
    return v;
}

PromptVars bind_prompts(Tape& t, const PromptState& s) {
    PromptVars v;
    for (const auto& m : s.p_glob) v.p_glob.push_back(t.leaf(m));
    for (const auto& m : s.p_vis) v.p_vis.push_back(t.leaf(m));
    v.gW1 = t.leaf(s.g.W1);
    v.gb1 = t.leaf(s.g.b1);
    v.gW2 = t.leaf(s.g.W2);
    v.gb2 = t.leaf(s.g.b2);
    return v;
}

Var transformer_layer_t(Tape& t, const AttnLayerVars& l, Var x) {
    const int d = t.val(x).cols;
    Var h = t.layer_norm_rows(x);
    Var q = t.add_rowvec(t.matmul(h, l.Wq), l.bq);
    Var k = t.add_rowvec(t.matmul(h, l.Wk), l.bk);
    Var v = t.add_rowvec(t.matmul(h, l.Wv), l.bv);
    Var attn = t.row_softmax(t.scale(t.matmul_nt(q, k), 1.0 / std::sqrt(double(d))));
    Var x1 = t.add(x, t.add_rowvec(t.matmul(t.matmul(attn, v), l.Wo), l.bo));
    Var h2 = t.layer_norm_rows(x1);
    Var m = t.gelu(t.add_rowvec(t.matmul(h2, l.W1), l.b1));
    return t.add(x1, t.add_rowvec(t.matmul(m, l.W2), l.b2));
}

std::vector<Mat> stack_traces_by_layer(const std::vector<Mat>& traces) {
    if (traces.empty()) throw std::runtime_error("stack_traces: no traces");
    const int L = traces[0].rows;
    const int d = traces[0].cols;
    for (const Mat& tr : traces)
        if (tr.rows != L || tr.cols != d)
            throw std::runtime_error("stack_traces: mismatched trace depths");
    std::vector<Mat> out;
    for (int l = 0; l < L; ++l) {
        Mat m(static_cast<int>(traces.size()), d);
        for (size_t i = 0; i < traces.size(); ++i)
            for (int j = 0; j < d; ++j) m.at(static_cast<int>(i), j) = traces[i].at(l, j);
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<Var> generate_low_prompts_t(Tape& t, const PromptVars& pv,
                                        const std::vector<Mat>& traces_by_layer) {
    std::vector<Var> out;
    for (const Mat& stack : traces_by_layer) {
        Var x = t.leaf(stack);
        Var h = t.gelu(t.add_rowvec(t.matmul(x, pv.gW1), pv.gb1));
        out.push_back(t.add_rowvec(t.matmul(h, pv.gW2), pv.gb2));
    }
    return out;
}

Var encode_text_prompted_t(Tape& t, const TextTowerVars& tv, const PromptVars& pv,
                           const std::vector<Var>& p_low,
                           const std::vector<int>& tokens,
                           std::vector<PromptedLayoutRow>* layout) {
    const TextEncoderParams& p = *tv.p;
    check_tokens(tokens, p.max_seq_len, p.vocab_size);
    if (tokens.front() != kClsId)
        throw std::runtime_error("prompted text encoder: sequence must start with [CLS]");
    if (!p_low.empty() && static_cast<int>(p_low.size()) != p.L)
        throw std::runtime_error("prompted text encoder: derived prompt depth mismatch");
    if (static_cast<int>(pv.p_glob.size()) != p.L)
        throw std::runtime_error("prompted text encoder: global prompt depth mismatch");

    const int n = static_cast<int>(tokens.size());
    const int n_words = n - 2;
    std::vector<int> pos_ids(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) pos_ids[static_cast<size_t>(i)] = i;
    Var tok = t.add(t.gather_rows(tv.token_embedding, tokens),
                    t.gather_rows(tv.pos_embedding, pos_ids));
    Var cls = t.slice_rows(tok, 0, 1);
    Var p_high = t.slice_rows(tok, 1, n - 1);
    Var eot = t.slice_rows(tok, n - 1, n);

    for (int l = 0; l < p.L; ++l) {
        const int g_rows = t.val(pv.p_glob[static_cast<size_t>(l)]).rows;
        const int c_rows = p_low.empty() ? 0 : t.val(p_low[static_cast<size_t>(l)]).rows;
        const int width = 2 + g_rows + c_rows + n_words;
        if (width > p.max_seq_len)
            throw std::runtime_error("prompted text encoder: layout width " +
                                     std::to_string(width) + " exceeds context limit " +
                                     std::to_string(p.max_seq_len));
        if (layout) layout->push_back(PromptedLayoutRow{1, g_rows, c_rows, n_words, 1});

        std::vector<Var> parts = {cls, pv.p_glob[static_cast<size_t>(l)]};
        if (!p_low.empty()) parts.push_back(p_low[static_cast<size_t>(l)]);
        parts.push_back(p_high);
        parts.push_back(eot);
        Var out = transformer_layer_t(t, tv.layers[static_cast<size_t>(l)],
                                      t.concat_rows(parts));
        cls = t.slice_rows(out, 0, 1);
        p_high = t.slice_rows(out, 1 + g_rows + c_rows, 1 + g_rows + c_rows + n_words);
        eot = t.slice_rows(out, width - 1, width);
    }
    return t.matmul(t.layer_norm_rows(eot), tv.proj);
}

Var encode_image_prompted_t(Tape& t, const ImageTowerVars& iv, const PromptVars& pv,
                            const Mat& feature_row) {
    const ImageEncoderParams& p = *iv.p;
    if (feature_row.rows != 1 || feature_row.cols != p.d_raw)
        throw std::runtime_error("prompted image encoder: expected a 1 x " +
                                 std::to_string(p.d_raw) + " feature row");
    if (static_cast<int>(pv.p_vis.size()) != p.L)
        throw std::runtime_error("prompted image encoder: visual prompt depth mismatch");

    Var x = t.add(t.add(t.matmul(t.leaf(feature_row), iv.W_in), iv.b_in), iv.pos0);
    for (int l = 0; l < p.L; ++l) {
        Var prompts = pv.p_vis[static_cast<size_t>(l)];
        const int np = t.val(prompts).rows;
        Var out = transformer_layer_t(t, iv.layers[static_cast<size_t>(l)],
                                      t.concat_rows({prompts, x}));
        x = t.slice_rows(out, np, np + 1);
    }
    return t.matmul(t.layer_norm_rows(x), iv.proj);
}

}  // namespace mscpt
