#include "mscpt/selection.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

namespace mscpt {

namespace {

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

}  // namespace

TemplateBank load_template_bank(const std::string& path, int K) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("template bank: cannot open " + path);
    TemplateBank bank;
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        if (line.front() == '[' && line.back() == ']') {
            bank.category_names.push_back(trim(line.substr(1, line.size() - 2)));
            bank.templates.emplace_back();
            continue;
        }
        if (bank.templates.empty())
            throw std::runtime_error("template bank: template before any [category] header");
        bank.templates.back().push_back(line);
    }
    if (static_cast<int>(bank.templates.size()) != K)
        throw std::runtime_error("template bank: expected " + std::to_string(K) +
                                 " categories, found " +
                                 std::to_string(bank.templates.size()));
    for (size_t k = 0; k < bank.templates.size(); ++k)
        if (bank.templates[k].empty())
            throw std::runtime_error("template bank: category " + std::to_string(k) +
                                     " has no templates");
    return bank;
}

std::vector<double> zero_shot_probs(const Mat& x, const Mat& W, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("zero_shot_probs: tau must be > 0");
    if (x.rows != 1 || x.cols != W.cols)
        throw std::invalid_argument("zero_shot_probs: embedding width mismatch");
    if (row_norm(x, 0) == 0.0)
        throw std::domain_error("zero_shot_probs: zero-norm input embedding");
    const int K = W.rows;
    std::vector<double> s(static_cast<size_t>(K));
    double m = -1e300;
    for (int k = 0; k < K; ++k) {
        if (row_norm(W, k) == 0.0)
            throw std::domain_error("zero_shot_probs: zero-norm class embedding " +
                                    std::to_string(k));
        s[static_cast<size_t>(k)] = cosine_rows(x, 0, W, k) / tau;
        m = std::max(m, s[static_cast<size_t>(k)]);
    }
    double z = 0.0;
    for (double& v : s) {
        v = std::exp(v - m);
        z += v;
    }
    for (double& v : s) v /= z;
    return s;
}

Mat average_normalized(const Mat& embs) {
    if (embs.rows < 1) throw std::invalid_argument("average_normalized: no embeddings");
    Mat mean(1, embs.cols);
    for (int i = 0; i < embs.rows; ++i)
        for (int j = 0; j < embs.cols; ++j) mean.at(0, j) += embs.at(i, j);
    for (int j = 0; j < embs.cols; ++j) mean.at(0, j) /= embs.rows;
    const double n = row_norm(mean, 0);
    if (n == 0.0) throw std::domain_error("average_normalized: zero-norm mean embedding");
    for (int j = 0; j < embs.cols; ++j) mean.at(0, j) /= n;
    return mean;
}

Mat template_class_embeddings(const TemplateBank& bank, const TextEncoderParams& enc) {
    Mat W(static_cast<int>(bank.templates.size()), enc.d_joint);
    for (size_t k = 0; k < bank.templates.size(); ++k) {
        Mat embs(static_cast<int>(bank.templates[k].size()), enc.d_joint);
        for (size_t i = 0; i < bank.templates[k].size(); ++i) {
            const auto tokens =
                tokenize(bank.templates[k][i], enc.vocab_size, enc.max_seq_len);
            const Mat z = encode_text_frozen(enc, tokens).z;
            for (int j = 0; j < enc.d_joint; ++j) embs.at(static_cast<int>(i), j) = z.at(0, j);
        }
        const Mat w = average_normalized(embs);
        for (int j = 0; j < enc.d_joint; ++j) W.at(static_cast<int>(k), j) = w.at(0, j);
    }
    return W;
}

SelectionResult select_patches(const Mat& P, const Mat& W, int n_select, double tau) {
    if (n_select < 1) throw std::invalid_argument("select_patches: n_select must be >= 1");
    const int M = P.rows;
    const int K = W.rows;
    Mat probs(M, K);
    for (int i = 0; i < M; ++i) {
        Mat row(1, P.cols);
        for (int j = 0; j < P.cols; ++j) row.at(0, j) = P.at(i, j);
        const auto p = zero_shot_probs(row, W, tau);
        for (int k = 0; k < K; ++k) probs.at(i, k) = p[static_cast<size_t>(k)];
    }
    SelectionResult res;
    std::set<int> chosen;
    for (int k = 0; k < K; ++k) {
        std::vector<int> ids(static_cast<size_t>(M));
        std::iota(ids.begin(), ids.end(), 0);
        std::sort(ids.begin(), ids.end(), [&probs, k](int a, int b) {
            if (probs.at(a, k) != probs.at(b, k)) return probs.at(a, k) > probs.at(b, k);
            return a < b;
        });
        ids.resize(static_cast<size_t>(std::min(n_select, M)));
        chosen.insert(ids.begin(), ids.end());
        res.per_category.push_back(std::move(ids));
    }
    res.union_ids.assign(chosen.begin(), chosen.end());
    return res;
}

SelectionResult select_patches(const Bag& bag, const ImageEncoderParams& enc, const Mat& W,
                               int n_select, double tau) {
    if (!bag.low)
        throw std::runtime_error("select_patches: bag " + bag.bag_id +
                                 " has no low-scale view");
    return select_patches(encode_image_frozen(enc, bag.low->instances), W, n_select, tau);
}

}  // namespace mscpt
