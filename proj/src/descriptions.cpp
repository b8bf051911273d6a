#include "mscpt/descriptions.hpp"

#include <cctype>
#include <fstream>
#include <map>
#include <stdexcept>

namespace mscpt {

namespace {

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

const char* scale_name(bool is_high) { return is_high ? "high" : "low"; }

}  // namespace

DescriptionBank load_description_bank(const std::string& path, const ModelConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("description bank: cannot open " + path);
    DescriptionBank bank;
    std::string line;
    int scale = -1;  // 0 = low, 1 = high
    while (std::getline(in, line)) {
        const std::string raw = trim(line);
        if (raw.empty()) continue;
        if (raw[0] == '#') {
            const std::string key = "# provenance:";
            if (raw.rfind(key, 0) == 0) bank.provenance = trim(raw.substr(key.size()));
            continue;
        }
        if (raw.front() == '[' && raw.back() == ']') {
            const std::string head = trim(raw.substr(1, raw.size() - 2));
            if (head == "low") {
                if (bank.low.empty())
                    throw std::runtime_error("description bank: [low] before any category");
                scale = 0;
            } else if (head == "high") {
                if (bank.high.empty())
                    throw std::runtime_error("description bank: [high] before any category");
                scale = 1;
            } else {
                bank.category_names.push_back(head);
                bank.low.emplace_back();
                bank.high.emplace_back();
                scale = -1;
            }
            continue;
        }
        if (scale == 0)
            bank.low.back().push_back(raw);
        else if (scale == 1)
            bank.high.back().push_back(raw);
        else
            throw std::runtime_error("description bank: description outside [low]/[high]: '" +
                                     raw + "'");
    }
    validate_description_bank(bank, cfg);
    // Duplicate descriptions degrade variety but are not fatal.
    for (size_t k = 0; k < bank.low.size(); ++k) {
        for (int s = 0; s < 2; ++s) {
            const auto& list = s ? bank.high[k] : bank.low[k];
            std::map<std::string, int> seen;
            for (const auto& d : list) {
                if (++seen[d] == 2)
                    bank.warnings.push_back("duplicate description in category " +
                                            std::to_string(k) + " (" + scale_name(s == 1) +
                                            "): '" + d + "'");
            }
        }
    }
    return bank;
}

void validate_description_bank(const DescriptionBank& bank, const ModelConfig& cfg) {
    if (static_cast<int>(bank.low.size()) != cfg.K)
        throw std::runtime_error("description bank: expected " + std::to_string(cfg.K) +
                                 " categories, found " + std::to_string(bank.low.size()));
    for (int k = 0; k < cfg.K; ++k) {
        const auto& low = bank.low[static_cast<size_t>(k)];
        const auto& high = bank.high[static_cast<size_t>(k)];
        if (static_cast<int>(low.size()) != cfg.C_low)
            throw std::runtime_error("description bank: category " + std::to_string(k) +
                                     " (low): expected " + std::to_string(cfg.C_low) +
                                     " descriptions, found " + std::to_string(low.size()));
        if (static_cast<int>(high.size()) != cfg.C_high)
            throw std::runtime_error("description bank: category " + std::to_string(k) +
                                     " (high): expected " + std::to_string(cfg.C_high) +
                                     " descriptions, found " + std::to_string(high.size()));
        for (int s = 0; s < 2; ++s)
            for (const auto& d : (s ? high : low))
                if (trim(d).empty())
                    throw std::runtime_error("description bank: empty description in category " +
                                             std::to_string(k) + " (" + scale_name(s == 1) +
                                             ")");
    }
}

std::vector<Mat> category_low_trace_stacks(const DescriptionBank& bank, int k,
                                           const TextEncoderParams& enc) {
    std::vector<Mat> traces;
    for (const auto& text : bank.low[static_cast<size_t>(k)])
        traces.push_back(
            encode_text_frozen(enc, tokenize(text, enc.vocab_size, enc.max_seq_len)).trace);
    return stack_traces_by_layer(traces);
}

DescriptionEmbeddings embed_description_bank(const DescriptionBank& bank,
                                             const TextEncoderParams& enc,
                                             const PromptState& prompts) {
    const int K = static_cast<int>(bank.low.size());
    const int C_low = static_cast<int>(bank.low[0].size());
    const int C_high = static_cast<int>(bank.high[0].size());
    DescriptionEmbeddings out;
    out.Z_low = Mat(K * C_low, enc.d_joint);
    out.Z_high = Mat(K * C_high, enc.d_joint);

    for (int k = 0; k < K; ++k) {
        for (int c = 0; c < C_low; ++c) {
            const auto& text = bank.low[static_cast<size_t>(k)][static_cast<size_t>(c)];
            const Mat z =
                encode_text_frozen(enc, tokenize(text, enc.vocab_size, enc.max_seq_len)).z;
            for (int j = 0; j < enc.d_joint; ++j) out.Z_low.at(k * C_low + c, j) = z.at(0, j);
            out.low_ids.emplace_back(k, c);
        }
        const auto stacks = category_low_trace_stacks(bank, k, enc);
        for (int c = 0; c < C_high; ++c) {
            const auto& text = bank.high[static_cast<size_t>(k)][static_cast<size_t>(c)];
            Tape t;
            const auto tv = bind_text(t, enc);
            const auto pv = bind_prompts(t, prompts);
            const auto p_low = generate_low_prompts_t(t, pv, stacks);
            const Mat z = t.val(encode_text_prompted_t(
                t, tv, pv, p_low, tokenize(text, enc.vocab_size, enc.max_seq_len)));
            for (int j = 0; j < enc.d_joint; ++j) out.Z_high.at(k * C_high + c, j) = z.at(0, j);
            out.high_ids.emplace_back(k, c);
        }
    }
    return out;
}

}  // namespace mscpt
