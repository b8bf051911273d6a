#include "mscpt/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "mscpt/cache.hpp"
#include "mscpt/hash.hpp"

namespace fs = std::filesystem;

namespace mscpt {

std::vector<std::string> validate_synthetic_spec(const SyntheticSpec& s) {
    std::vector<std::string> v;
    if (s.categories < 2) v.push_back("categories must be >= 2");
    if (s.categories > 12) v.push_back("categories must be <= 12 (word pools)");
    if (s.bags_per_category < 1) v.push_back("bags_per_category must be >= 1");
    if (s.m_low_min < 1 || s.m_low_min > s.m_low_max) v.push_back("m_low range invalid");
    if (s.m_high_min < 1 || s.m_high_min > s.m_high_max) v.push_back("m_high range invalid");
    if (s.d_raw < 2) v.push_back("d_raw must be >= 2");
    if (!(s.witness_rate > 0.0) || s.witness_rate > 1.0) {
        v.push_back("witness_rate must be in (0, 1]");
    }
    if (s.noise_scale < 0.0) v.push_back("noise_scale must be >= 0");
    if (s.grid < 2) v.push_back("grid must be >= 2");
    if (static_cast<long long>(s.grid) * s.grid < s.m_low_max) {
        v.push_back("grid too small for m_low_max unique cells");
    }
    if (4LL * s.grid * s.grid < 2LL * s.m_high_max) {
        v.push_back("fine grid too small for m_high_max unique cells");
    }
    if (s.context_mode) {
        if (s.categories != 2) v.push_back("context_mode requires exactly 2 categories");
        if (s.m_low_min < 2 || s.m_high_min < 2) {
            v.push_back("context_mode needs at least 2 instances per view");
        }
    }
    return v;
}

namespace {

double quantize_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

void quantize_mat(Mat& m) {
    for (double& v : m.a) v = quantize_f32(v);
}

// Random unit row orthogonal to every row already in `basis`.
Mat orthonormal_row(Rng& rng, int d, const std::vector<const Mat*>& basis) {
    for (int attempt = 0; attempt < 64; ++attempt) {
        Mat v = randn(rng, 1, d);
        for (const Mat* b : basis) {
            for (int r = 0; r < b->rows; ++r) {
                double nb = 0.0, dotv = 0.0;
                for (int c = 0; c < d; ++c) {
                    nb += b->at(r, c) * b->at(r, c);
                    dotv += v.at(0, c) * b->at(r, c);
                }
                if (nb == 0.0) continue;
                for (int c = 0; c < d; ++c) v.at(0, c) -= dotv / nb * b->at(r, c);
            }
        }
        double n = row_norm(v, 0);
        if (n > 1e-6) {
            for (int c = 0; c < d; ++c) v.at(0, c) /= n;
            return v;
        }
    }
    throw std::runtime_error("generate: failed to draw an orthogonal direction");
}

struct WitnessPlan {
    // Per instance: 0 background, 1 witness (plain) / sub-type A, 2 sub-type B.
    std::vector<int> kind;
    int witnesses() const {
        int n = 0;
        for (int k : kind) n += k != 0;
        return n;
    }
};

WitnessPlan plan_plain(Rng& rng, int m, int category, double rate) {
    WitnessPlan p;
    p.kind.assign(static_cast<size_t>(m), 0);
    if (category == 0) return p;
    std::bernoulli_distribution hit(rate);
    for (int i = 0; i < m; ++i) p.kind[static_cast<size_t>(i)] = hit(rng) ? 1 : 0;
    if (p.witnesses() == 0) {
        std::uniform_int_distribution<int> pick(0, m - 1);
        p.kind[static_cast<size_t>(pick(rng))] = 1;
    }
    return p;
}

WitnessPlan plan_context(Rng& rng, int m, int label, double rate, int negative_subtype) {
    WitnessPlan p;
    p.kind.assign(static_cast<size_t>(m), 0);
    std::uniform_int_distribution<int> pick(0, m - 1);
    if (label == 1) {
        std::bernoulli_distribution hit(rate);
        std::bernoulli_distribution coin(0.5);
        for (int i = 0; i < m; ++i) {
            if (hit(rng)) p.kind[static_cast<size_t>(i)] = coin(rng) ? 1 : 2;
        }
        for (int want : {1, 2}) {
            if (std::count(p.kind.begin(), p.kind.end(), want) > 0) continue;
            std::vector<int> cand;
            for (int i = 0; i < m; ++i) {
                if (p.kind[static_cast<size_t>(i)] != 3 - want) cand.push_back(i);
            }
            if (cand.empty()) {
                for (int i = 1; i < m; ++i) cand.push_back(i);  // keep index 0 as the other type
            }
            std::uniform_int_distribution<int> pc(0, static_cast<int>(cand.size()) - 1);
            p.kind[static_cast<size_t>(cand[static_cast<size_t>(pc(rng))])] = want;
        }
    } else {
        std::bernoulli_distribution hit(std::min(1.0, 2.0 * rate));
        for (int i = 0; i < m; ++i) {
            if (hit(rng)) p.kind[static_cast<size_t>(i)] = negative_subtype;
        }
        if (p.witnesses() == 0) p.kind[static_cast<size_t>(pick(rng))] = negative_subtype;
    }
    return p;
}

Mat features_for_plan(Rng& rng, const WitnessPlan& plan, const Mat& proto, const Mat& delta,
                      bool context, int category, double noise) {
    const int d = proto.cols;
    Mat x = randn(rng, static_cast<int>(plan.kind.size()), d, noise);
    for (size_t i = 0; i < plan.kind.size(); ++i) {
        int kind = plan.kind[i];
        if (kind == 0) continue;
        for (int c = 0; c < d; ++c) {
            double base = proto.at(context ? 1 : category, c);
            if (context) base += (kind == 1 ? 1.0 : -1.0) * delta.at(0, c);
            x.at(static_cast<int>(i), c) += base;
        }
    }
    return x;
}

std::vector<std::pair<int, int>> shuffled_cells(Rng& rng, int side) {
    std::vector<std::pair<int, int>> cells;
    cells.reserve(static_cast<size_t>(side) * side);
    for (int r = 0; r < side; ++r) {
        for (int c = 0; c < side; ++c) cells.emplace_back(r, c);
    }
    std::shuffle(cells.begin(), cells.end(), rng);
    return cells;
}

Mat coords_mat(const std::vector<std::pair<int, int>>& coords) {
    Mat m(static_cast<int>(coords.size()), 2);
    for (size_t i = 0; i < coords.size(); ++i) {
        m.at(static_cast<int>(i), 0) = coords[i].first;
        m.at(static_cast<int>(i), 1) = coords[i].second;
    }
    return m;
}

}  // namespace

SyntheticDataset generate_synthetic_dataset(const SyntheticSpec& spec) {
    std::vector<std::string> violations = validate_synthetic_spec(spec);
    if (!violations.empty()) {
        std::string msg = "generate: invalid spec:";
        for (const std::string& v : violations) msg += " [" + v + "]";
        throw std::invalid_argument(msg);
    }
    Rng rng(spec.seed);
    SyntheticDataset ds;
    ds.spec = spec;

    ds.prototypes_low = Mat::zeros(spec.categories, spec.d_raw);
    ds.prototypes_high = Mat::zeros(spec.categories, spec.d_raw);
    for (Mat* protos : {&ds.prototypes_low, &ds.prototypes_high}) {
        for (int k = 1; k < spec.categories; ++k) {
            Mat dir = orthonormal_row(rng, spec.d_raw, {protos});
            for (int c = 0; c < spec.d_raw; ++c) protos->at(k, c) = dir.at(0, c);
        }
    }
    ds.context_delta_low = Mat::zeros(1, spec.d_raw);
    ds.context_delta_high = Mat::zeros(1, spec.d_raw);
    if (spec.context_mode) {
        ds.context_delta_low = orthonormal_row(rng, spec.d_raw, {&ds.prototypes_low});
        ds.context_delta_high = orthonormal_row(rng, spec.d_raw, {&ds.prototypes_high});
    }
    quantize_mat(ds.prototypes_low);
    quantize_mat(ds.prototypes_high);
    quantize_mat(ds.context_delta_low);
    quantize_mat(ds.context_delta_high);

    for (int k = 0; k < spec.categories; ++k) {
        for (int b = 0; b < spec.bags_per_category; ++b) {
            Bag bag;
            bag.bag_id = "bag_" + std::to_string(k * spec.bags_per_category + b);
            bag.label = k;

            std::uniform_int_distribution<int> mlow(spec.m_low_min, spec.m_low_max);
            std::uniform_int_distribution<int> mhigh(spec.m_high_min, spec.m_high_max);
            const int m_low = mlow(rng);
            const int m_high = mhigh(rng);
            std::bernoulli_distribution coin(0.5);
            const int negative_subtype = coin(rng) ? 1 : 2;  // shared by both scales

            WitnessPlan low_plan =
                spec.context_mode
                    ? plan_context(rng, m_low, k, spec.witness_rate, negative_subtype)
                    : plan_plain(rng, m_low, k, spec.witness_rate);
            WitnessPlan high_plan =
                spec.context_mode
                    ? plan_context(rng, m_high, k, spec.witness_rate, negative_subtype)
                    : plan_plain(rng, m_high, k, spec.witness_rate);

            // Low coords: unique cells of the coarse grid.
            std::vector<std::pair<int, int>> low_cells = shuffled_cells(rng, spec.grid);
            std::vector<std::pair<int, int>> low_coords(low_cells.begin(),
                                                        low_cells.begin() + m_low);

            // High coords: witnesses nest inside the 2x2 fine block of a
            // low-scale witness cell; background follows a random low parent.
            std::vector<std::pair<int, int>> fine_free = shuffled_cells(rng, 2 * spec.grid);
            size_t fallback_at = 0;
            std::vector<bool> fine_used(static_cast<size_t>(4 * spec.grid * spec.grid), false);
            auto cell_index = [&](int r, int c) {
                return static_cast<size_t>(r) * (2 * spec.grid) + c;
            };
            std::vector<int> low_witness_idx, low_all_idx;
            for (int i = 0; i < m_low; ++i) {
                low_all_idx.push_back(i);
                if (low_plan.kind[static_cast<size_t>(i)] != 0) low_witness_idx.push_back(i);
            }
            auto place_under = [&](const std::vector<int>& parent_pool) {
                std::vector<int> parents = parent_pool;
                std::shuffle(parents.begin(), parents.end(), rng);
                for (int parent : parents) {
                    std::vector<std::pair<int, int>> offs = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
                    std::shuffle(offs.begin(), offs.end(), rng);
                    for (auto [dr, dc] : offs) {
                        int r = low_coords[static_cast<size_t>(parent)].first * 2 + dr;
                        int c = low_coords[static_cast<size_t>(parent)].second * 2 + dc;
                        if (!fine_used[cell_index(r, c)]) {
                            fine_used[cell_index(r, c)] = true;
                            return std::make_pair(r, c);
                        }
                    }
                }
                while (fallback_at < fine_free.size()) {
                    auto cell = fine_free[fallback_at++];
                    if (!fine_used[cell_index(cell.first, cell.second)]) {
                        fine_used[cell_index(cell.first, cell.second)] = true;
                        return cell;
                    }
                }
                throw std::runtime_error("generate: fine grid exhausted");
            };
            std::vector<std::pair<int, int>> high_coords(static_cast<size_t>(m_high));
            std::vector<int> order;  // witnesses placed first so nesting can't be crowded out
            for (int i = 0; i < m_high; ++i) {
                if (high_plan.kind[static_cast<size_t>(i)] != 0) order.push_back(i);
            }
            for (int i = 0; i < m_high; ++i) {
                if (high_plan.kind[static_cast<size_t>(i)] == 0) order.push_back(i);
            }
            for (int i : order) {
                bool witness = high_plan.kind[static_cast<size_t>(i)] != 0;
                const std::vector<int>& pool =
                    witness && !low_witness_idx.empty() ? low_witness_idx : low_all_idx;
                high_coords[static_cast<size_t>(i)] = place_under(pool);
            }

            ScaleView low;
            low.instances = features_for_plan(rng, low_plan, ds.prototypes_low,
                                              ds.context_delta_low, spec.context_mode, k,
                                              spec.noise_scale);
            quantize_mat(low.instances);
            low.coords = coords_mat(low_coords);
            ScaleView high;
            high.instances = features_for_plan(rng, high_plan, ds.prototypes_high,
                                               ds.context_delta_high, spec.context_mode, k,
                                               spec.noise_scale);
            quantize_mat(high.instances);
            high.coords = coords_mat(high_coords);
            if (!spec.context_mode) {
                for (int i = 0; i < m_low; ++i) {
                    low.instance_labels.push_back(low_plan.kind[static_cast<size_t>(i)] ? k : 0);
                }
                for (int i = 0; i < m_high; ++i) {
                    high.instance_labels.push_back(high_plan.kind[static_cast<size_t>(i)] ? k : 0);
                }
            }
            bag.low = std::move(low);
            bag.high = std::move(high);
            validate_bag(bag, spec.categories);
            ds.bags.push_back(std::move(bag));
        }
    }
    return ds;
}

namespace {

const std::vector<std::string> kRoots = {"bavrix", "corlan", "dermok", "elvash",
                                         "fornay", "gultic", "harnel", "ismark",
                                         "jorvel", "kentra", "lomira", "norvex"};
const std::vector<std::string> kAdjs = {"dense",   "pale",    "coarse",  "ragged",
                                        "lucent",  "mottled", "banded",  "granular",
                                        "compact", "fibrous", "nodular", "streaked"};
const std::vector<std::string> kNouns = {"clusters", "margins", "stroma", "septa",
                                         "foci",     "cords",   "sheets", "lobules",
                                         "tracts",   "nests",   "ducts",  "plates"};
const std::vector<std::string> kSizes = {"small", "large", "slender", "bulky", "uneven", "round"};
const std::vector<std::string> kStems = {"an image of",     "a photo of",       "a patch of",
                                         "a region of",     "a micrograph of",  "a section of",
                                         "a close view of", "a field of",       "a sample of",
                                         "a fragment of"};
const std::vector<std::string> kTails = {"tissue", "tissue at high power", "tissue under stain",
                                         "tissue in section", "tissue on the slide"};

}  // namespace

DescriptionBank make_toy_descriptions(int categories, int c_low, int c_high) {
    if (categories < 1 || categories > static_cast<int>(kRoots.size())) {
        throw std::invalid_argument("make_toy_descriptions: categories out of range");
    }
    const int capacity = static_cast<int>(kAdjs.size() * kNouns.size());
    if (c_low < 1 || c_high < 1 || c_low > capacity || c_high > capacity) {
        throw std::invalid_argument("make_toy_descriptions: description counts out of range");
    }
    DescriptionBank bank;
    bank.provenance = "synthetic word-pool bank v1";
    for (int k = 0; k < categories; ++k) {
        bank.category_names.push_back(kRoots[static_cast<size_t>(k)] + " lesion");
        std::vector<std::string> low, high;
        for (int c = 0; c < c_low; ++c) {
            const std::string& adj = kAdjs[static_cast<size_t>(c % 12)];
            const std::string& noun = kNouns[static_cast<size_t>((c / 12) % 12)];
            low.push_back(adj + " " + kRoots[static_cast<size_t>(k)] + " " + noun + " field");
        }
        for (int c = 0; c < c_high; ++c) {
            const std::string& adj = kAdjs[static_cast<size_t>(c % 12)];
            const std::string& noun = kNouns[static_cast<size_t>((c / 12) % 12)];
            const std::string& size = kSizes[static_cast<size_t>(c % 6)];
            high.push_back(size + " " + kRoots[static_cast<size_t>(k)] + " cells with " + adj +
                           " " + noun);
        }
        bank.low.push_back(std::move(low));
        bank.high.push_back(std::move(high));
    }
    return bank;
}

TemplateBank make_toy_templates(int categories, int templates_per_category) {
    if (categories < 1 || categories > static_cast<int>(kRoots.size())) {
        throw std::invalid_argument("make_toy_templates: categories out of range");
    }
    const int capacity = static_cast<int>(kStems.size() * kTails.size());
    if (templates_per_category < 1 || templates_per_category > capacity) {
        throw std::invalid_argument("make_toy_templates: template count out of range");
    }
    TemplateBank bank;
    for (int k = 0; k < categories; ++k) {
        bank.category_names.push_back(kRoots[static_cast<size_t>(k)] + " lesion");
        std::vector<std::string> rows;
        for (int t = 0; t < templates_per_category; ++t) {
            rows.push_back(kStems[static_cast<size_t>(t % 10)] + " " +
                           kRoots[static_cast<size_t>(k)] + " " +
                           kTails[static_cast<size_t>((t / 10) % 5)]);
        }
        bank.templates.push_back(std::move(rows));
    }
    return bank;
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string labels_csv(const std::vector<int>& labels) {
    if (labels.empty()) return "none";
    std::string out;
    for (size_t i = 0; i < labels.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(labels[i]);
    }
    return out;
}

std::vector<int> parse_labels_csv(const std::string& s) {
    if (s == "none") return {};
    std::vector<int> out;
    std::istringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
    return out;
}

Mat mat_from_floats(const std::vector<float>& vals, size_t offset, int rows, int cols) {
    Mat m(rows, cols);
    for (size_t i = 0; i < m.a.size(); ++i) m.a[i] = static_cast<double>(vals[offset + i]);
    return m;
}

}  // namespace

void save_dataset(const SyntheticDataset& ds, const std::string& dir) {
    fs::create_directories(dir);
    const SyntheticSpec& s = ds.spec;
    std::ostringstream m;
    m << "dataset v1\n";
    m << "categories " << s.categories << "\n";
    m << "bags_per_category " << s.bags_per_category << "\n";
    m << "m_low " << s.m_low_min << " " << s.m_low_max << "\n";
    m << "m_high " << s.m_high_min << " " << s.m_high_max << "\n";
    m << "d_raw " << s.d_raw << "\n";
    m << "witness_rate " << fmt_double(s.witness_rate) << "\n";
    m << "context_mode " << (s.context_mode ? 1 : 0) << "\n";
    m << "noise_scale " << fmt_double(s.noise_scale) << "\n";
    m << "grid " << s.grid << "\n";
    m << "seed " << s.seed << "\n";
    write_f32_payload((fs::path(dir) / "prototypes.f32").string(),
                      {&ds.prototypes_low, &ds.prototypes_high, &ds.context_delta_low,
                       &ds.context_delta_high});
    m << "prototypes prototypes.f32\n";
    m << "bags " << ds.bags.size() << "\n";
    for (const Bag& bag : ds.bags) {
        const ScaleView& low = *bag.low;
        const ScaleView& high = *bag.high;
        const std::string file = bag.bag_id + ".f32";
        write_f32_payload((fs::path(dir) / file).string(),
                          {&low.instances, &low.coords, &high.instances, &high.coords});
        m << "bag " << bag.bag_id << " label " << bag.label << " m_low " << low.instances.rows
          << " m_high " << high.instances.rows << " file " << file << " labels_low "
          << labels_csv(low.instance_labels) << " labels_high "
          << labels_csv(high.instance_labels) << "\n";
    }
    atomic_write_text((fs::path(dir) / "manifest.txt").string(), m.str());
}

SyntheticDataset load_dataset(const std::string& dir) {
    const std::string mpath = (fs::path(dir) / "manifest.txt").string();
    std::ifstream f(mpath);
    if (!f) throw std::runtime_error("dataset: cannot open manifest '" + mpath + "'");
    std::string line;
    auto expect = [&](const std::string& key) -> std::istringstream {
        if (!std::getline(f, line)) {
            throw std::runtime_error("dataset: manifest truncated before '" + key + "'");
        }
        std::istringstream ss(line);
        std::string word;
        ss >> word;
        if (word != key) {
            throw std::runtime_error("dataset: expected '" + key + "', got '" + line + "'");
        }
        return ss;
    };
    if (!std::getline(f, line) || line != "dataset v1") {
        throw std::runtime_error("dataset: unsupported manifest header");
    }
    SyntheticDataset ds;
    SyntheticSpec& s = ds.spec;
    expect("categories") >> s.categories;
    expect("bags_per_category") >> s.bags_per_category;
    expect("m_low") >> s.m_low_min >> s.m_low_max;
    expect("m_high") >> s.m_high_min >> s.m_high_max;
    expect("d_raw") >> s.d_raw;
    expect("witness_rate") >> s.witness_rate;
    int ctx = 0;
    expect("context_mode") >> ctx;
    s.context_mode = ctx != 0;
    expect("noise_scale") >> s.noise_scale;
    expect("grid") >> s.grid;
    expect("seed") >> s.seed;
    std::string proto_file;
    expect("prototypes") >> proto_file;
    size_t bag_count = 0;
    expect("bags") >> bag_count;

    const size_t proto_floats = static_cast<size_t>(s.categories) * s.d_raw * 2 + 2 * s.d_raw;
    std::vector<float> pv =
        read_f32_payload((fs::path(dir) / proto_file).string(), proto_floats);
    size_t off = 0;
    ds.prototypes_low = mat_from_floats(pv, off, s.categories, s.d_raw);
    off += ds.prototypes_low.a.size();
    ds.prototypes_high = mat_from_floats(pv, off, s.categories, s.d_raw);
    off += ds.prototypes_high.a.size();
    ds.context_delta_low = mat_from_floats(pv, off, 1, s.d_raw);
    off += ds.context_delta_low.a.size();
    ds.context_delta_high = mat_from_floats(pv, off, 1, s.d_raw);

    for (size_t i = 0; i < bag_count; ++i) {
        std::istringstream ss = expect("bag");
        Bag bag;
        std::string word, file, labels_low, labels_high;
        int m_low = 0, m_high = 0;
        ss >> bag.bag_id;
        ss >> word >> bag.label;
        ss >> word >> m_low;
        ss >> word >> m_high;
        ss >> word >> file;
        ss >> word >> labels_low;
        ss >> word >> labels_high;
        if (!ss) throw std::runtime_error("dataset: malformed bag line '" + line + "'");
        const size_t floats = static_cast<size_t>(m_low) * (s.d_raw + 2) +
                              static_cast<size_t>(m_high) * (s.d_raw + 2);
        std::vector<float> bytes = read_f32_payload((fs::path(dir) / file).string(), floats);
        size_t o = 0;
        ScaleView low, high;
        low.instances = mat_from_floats(bytes, o, m_low, s.d_raw);
        o += low.instances.a.size();
        low.coords = mat_from_floats(bytes, o, m_low, 2);
        o += low.coords.a.size();
        high.instances = mat_from_floats(bytes, o, m_high, s.d_raw);
        o += high.instances.a.size();
        high.coords = mat_from_floats(bytes, o, m_high, 2);
        low.instance_labels = parse_labels_csv(labels_low);
        high.instance_labels = parse_labels_csv(labels_high);
        bag.low = std::move(low);
        bag.high = std::move(high);
        validate_bag(bag, s.categories);
        ds.bags.push_back(std::move(bag));
    }
    return ds;
}

uint64_t dataset_hash(const SyntheticDataset& ds) {
    Hasher h;
    const SyntheticSpec& s = ds.spec;
    h.i32(s.categories);
    h.i32(s.bags_per_category);
    h.i32(s.m_low_min);
    h.i32(s.m_low_max);
    h.i32(s.m_high_min);
    h.i32(s.m_high_max);
    h.i32(s.d_raw);
    h.f64(s.witness_rate);
    h.i32(s.context_mode ? 1 : 0);
    h.f64(s.noise_scale);
    h.i32(s.grid);
    h.u64(s.seed);
    h.mat(ds.prototypes_low);
    h.mat(ds.prototypes_high);
    h.mat(ds.context_delta_low);
    h.mat(ds.context_delta_high);
    for (const Bag& bag : ds.bags) {
        h.str(bag.bag_id);
        h.i32(bag.label);
        for (const auto& view : {bag.low, bag.high}) {
            h.mat(view->instances);
            h.mat(view->coords);
            h.i32(static_cast<int>(view->instance_labels.size()));
            for (int l : view->instance_labels) h.i32(l);
        }
    }
    return h.h;
}

}  // namespace mscpt
