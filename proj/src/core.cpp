#include "mscpt/core.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace mscpt {

namespace {

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

int parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const int x = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw std::runtime_error("config: bad integer for " + key + ": '" + v + "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw std::runtime_error("config: bad number for " + key + ": '" + v + "'");
    }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const unsigned long long x = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return static_cast<uint64_t>(x);
    } catch (const std::exception&) {
        throw std::runtime_error("config: bad seed for " + key + ": '" + v + "'");
    }
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::string ConfigReport::to_string() const {
    std::string s = "config violations:";
    for (const auto& v : violations) s += "\n  " + v;
    return s;
}

ConfigReport validate_config(const ModelConfig& cfg) {
    ConfigReport r;
    auto need = [&r](bool ok, const std::string& msg) {
        if (!ok) r.violations.push_back(msg);
    };
    need(cfg.d_joint >= 1, "d_joint must be >= 1");
    need(cfg.K >= 1, "K must be >= 1");
    need(cfg.C_low >= 1, "C_low must be >= 1");
    need(cfg.C_high >= 1, "C_high must be >= 1");
    need(cfg.n_select >= 1, "n_select must be >= 1");
    need(cfg.tau > 0.0, "tau must be > 0");
    need(cfg.K_top >= 1, "K_top must be >= 1");
    need(cfg.L_text >= 1, "L_text must be >= 1");
    need(cfg.L_img >= 1, "L_img must be >= 1");
    need(cfg.len_glob >= 0, "len_glob must be >= 0");
    need(cfg.len_vis >= 0, "len_vis must be >= 0");
    need(cfg.gcn_layers >= 1, "gcn_layers must be >= 1");
    need(cfg.lr > 0.0, "lr must be > 0");
    need(cfg.weight_decay >= 0.0, "weight_decay must be >= 0");
    need(cfg.max_epochs >= 1, "max_epochs must be >= 1");
    need(cfg.patience >= 1, "patience must be >= 1");
    need(cfg.patience <= cfg.max_epochs, "patience must be <= max_epochs");
    need(cfg.d_model >= 1, "d_model must be >= 1");
    need(cfg.vocab_size >= 3, "vocab_size must be >= 3");
    need(cfg.max_seq_len >= 3, "max_seq_len must be >= 3");
    return r;
}

ModelConfig checked_config(const ModelConfig& cfg) {
    ConfigReport r = validate_config(cfg);
    if (!r.ok()) throw std::runtime_error(r.to_string());
    return cfg;
}

void apply_config_kv(ModelConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "d_joint") cfg.d_joint = parse_int(key, value);
    else if (key == "K") cfg.K = parse_int(key, value);
    else if (key == "C_low") cfg.C_low = parse_int(key, value);
    else if (key == "C_high") cfg.C_high = parse_int(key, value);
    else if (key == "n_select") cfg.n_select = parse_int(key, value);
    else if (key == "tau") cfg.tau = parse_double(key, value);
    else if (key == "K_top") cfg.K_top = parse_int(key, value);
    else if (key == "L_text") cfg.L_text = parse_int(key, value);
    else if (key == "L_img") cfg.L_img = parse_int(key, value);
    else if (key == "len_glob") cfg.len_glob = parse_int(key, value);
    else if (key == "len_vis") cfg.len_vis = parse_int(key, value);
    else if (key == "gcn_layers") cfg.gcn_layers = parse_int(key, value);
    else if (key == "lr") cfg.lr = parse_double(key, value);
    else if (key == "weight_decay") cfg.weight_decay = parse_double(key, value);
    else if (key == "max_epochs") cfg.max_epochs = parse_int(key, value);
    else if (key == "patience") cfg.patience = parse_int(key, value);
    else if (key == "seed") cfg.seed = parse_u64(key, value);
    else if (key == "d_model") cfg.d_model = parse_int(key, value);
    else if (key == "vocab_size") cfg.vocab_size = parse_int(key, value);
    else if (key == "max_seq_len") cfg.max_seq_len = parse_int(key, value);
    else throw std::runtime_error("config: unknown key '" + key + "'");
}

ModelConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    ModelConfig cfg;
    std::vector<std::string> unknown;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config: line " + std::to_string(lineno) +
                                     " has no '=': '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            apply_config_kv(cfg, key, value);
        } catch (const std::runtime_error& e) {
            const std::string msg = e.what();
            if (msg.find("unknown key") != std::string::npos)
                unknown.push_back(key);
            else
                throw;
        }
    }
    if (!unknown.empty()) {
        std::string msg = "config: unknown keys:";
        for (const auto& k : unknown) msg += " " + k;
        throw std::runtime_error(msg);
    }
    return cfg;
}

std::string config_to_string(const ModelConfig& cfg) {
    std::ostringstream os;
    os << "d_joint = " << cfg.d_joint << "\n";
    os << "K = " << cfg.K << "\n";
    os << "C_low = " << cfg.C_low << "\n";
    os << "C_high = " << cfg.C_high << "\n";
    os << "n_select = " << cfg.n_select << "\n";
    os << "tau = " << fmt_double(cfg.tau) << "\n";
    os << "K_top = " << cfg.K_top << "\n";
    os << "L_text = " << cfg.L_text << "\n";
    os << "L_img = " << cfg.L_img << "\n";
    os << "len_glob = " << cfg.len_glob << "\n";
    os << "len_vis = " << cfg.len_vis << "\n";
    os << "gcn_layers = " << cfg.gcn_layers << "\n";
    os << "lr = " << fmt_double(cfg.lr) << "\n";
    os << "weight_decay = " << fmt_double(cfg.weight_decay) << "\n";
    os << "max_epochs = " << cfg.max_epochs << "\n";
    os << "patience = " << cfg.patience << "\n";
    os << "seed = " << cfg.seed << "\n";
    os << "d_model = " << cfg.d_model << "\n";
    os << "vocab_size = " << cfg.vocab_size << "\n";
    os << "max_seq_len = " << cfg.max_seq_len << "\n";
    return os.str();
}

int bag_label_from_instances(const std::vector<int>& labels) {
    if (labels.empty()) throw std::invalid_argument("bag with no instance labels");
    int sum = 0;
    for (int y : labels) {
        if (y != 0 && y != 1)
            throw std::invalid_argument("instance label must be 0 or 1, got " +
                                        std::to_string(y));
        sum += y;
    }
    return sum == 0 ? 0 : 1;
}

namespace {

void validate_view(const std::string& bag_id, const char* tag, const ScaleView& v,
                   int bag_label, int K) {
    const std::string where = "bag " + bag_id + " (" + tag + " scale): ";
    if (v.instances.rows < 1) throw std::runtime_error(where + "no instances");
    if (v.coords.rows != v.instances.rows || v.coords.cols != 2)
        throw std::runtime_error(where + "coords must be M x 2");
    std::set<std::pair<double, double>> seen;
    for (int i = 0; i < v.coords.rows; ++i) {
        if (!seen.insert({v.coords.at(i, 0), v.coords.at(i, 1)}).second)
            throw std::runtime_error(where + "duplicate coordinates at instance " +
                                     std::to_string(i));
    }
    if (!v.instance_labels.empty()) {
        if (static_cast<int>(v.instance_labels.size()) != v.instances.rows)
            throw std::runtime_error(where + "instance label count mismatch");
        if (K == 2 && bag_label_from_instances(v.instance_labels) != bag_label)
            throw std::runtime_error(where + "bag label inconsistent with instance labels");
    }
}

}  // namespace

void validate_bag(const Bag& bag, int K) {
    if (bag.label < 0 || bag.label >= K)
        throw std::runtime_error("bag " + bag.bag_id + ": label out of range");
    if (!bag.low && !bag.high)
        throw std::runtime_error("bag " + bag.bag_id + ": no scale views");
    if (bag.low) validate_view(bag.bag_id, "low", *bag.low, bag.label, K);
    if (bag.high) validate_view(bag.bag_id, "high", *bag.high, bag.label, K);
}

}  // namespace mscpt
