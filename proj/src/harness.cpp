#include "mscpt/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "mscpt/cache.hpp"
#include "mscpt/hash.hpp"

namespace mscpt {

namespace {

std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
}

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
    mean = 0.0;
    sd = 0.0;
    if (xs.empty()) return;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    for (double x : xs) sd += (x - mean) * (x - mean);
    sd = std::sqrt(sd / static_cast<double>(xs.size()));
}

void aggregate(RunReport& r) {
    std::vector<double> aucs, f1s, accs;
    for (const SeedRow& row : r.rows) {
        if (!row.ok) continue;
        aucs.push_back(row.auc);
        f1s.push_back(row.macro_f1);
        accs.push_back(row.acc);
    }
    r.completed = static_cast<int>(aucs.size());
    mean_std(aucs, r.auc_mean, r.auc_std);
    mean_std(f1s, r.f1_mean, r.f1_std);
    mean_std(accs, r.acc_mean, r.acc_std);
}

}  // namespace

Split few_shot_split(const SyntheticDataset& ds, int shots, uint64_t seed) {
    if (shots < 1)
        throw std::runtime_error("few_shot_split: shots must be >= 1, got " +
                                 std::to_string(shots));
    const int K = ds.spec.categories;
    std::vector<std::vector<int>> by_cat(K);
    for (int i = 0; i < static_cast<int>(ds.bags.size()); ++i)
        by_cat.at(ds.bags[i].label).push_back(i);

    Rng rng(seed);
    Split sp;
    for (int k = 0; k < K; ++k) {
        std::vector<int>& ids = by_cat[k];
        if (static_cast<int>(ids.size()) < shots)
            throw std::runtime_error("few_shot_split: category " + std::to_string(k) + " has " +
                                     std::to_string(ids.size()) + " bags, need " +
                                     std::to_string(shots));
        std::shuffle(ids.begin(), ids.end(), rng);
        sp.train_ids.insert(sp.train_ids.end(), ids.begin(), ids.begin() + shots);
        sp.test_ids.insert(sp.test_ids.end(), ids.begin() + shots, ids.end());
    }
    std::sort(sp.train_ids.begin(), sp.train_ids.end());
    std::sort(sp.test_ids.begin(), sp.test_ids.end());
    return sp;
}

uint64_t split_hash(const Split& s) {
    Hasher h;
    h.str("train");
    for (int id : s.train_ids) h.i32(id);
    h.str("test");
    for (int id : s.test_ids) h.i32(id);
    return h.h;
}

TrainResult train_model(MscptModel& model, const std::vector<PreparedBag>& bags,
                        uint64_t shuffle_seed) {
    if (bags.empty()) throw std::runtime_error("train_model: no training bags");
    const ModelConfig& cfg = model.config();
    Rng rng(shuffle_seed);
    std::vector<size_t> order(bags.size());
    std::iota(order.begin(), order.end(), size_t{0});

    TrainResult tr;
    double best = std::numeric_limits<double>::infinity();
    int since_best = 0;
    for (int e = 0; e < cfg.max_epochs; ++e) {
        std::shuffle(order.begin(), order.end(), rng);
        double sum = 0.0;
        for (size_t id : order) sum += model.train_step(bags[id]);
        const double mean = sum / static_cast<double>(bags.size());
        tr.epoch_losses.push_back(mean);
        tr.epochs_run = e + 1;
        if (mean < best - kPlateauTol) {
            best = mean;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            tr.stopped_early = true;
            break;
        }
    }
    for (const PreparedBag& b : bags) tr.trained_bag_ids.push_back(b.bag_id);
    std::sort(tr.trained_bag_ids.begin(), tr.trained_bag_ids.end());
    tr.trained_bag_ids.erase(std::unique(tr.trained_bag_ids.begin(), tr.trained_bag_ids.end()),
                             tr.trained_bag_ids.end());
    return tr;
}

Metrics evaluate_model(MscptModel& model, const std::vector<PreparedBag>& bags) {
    if (bags.empty()) throw std::runtime_error("evaluate_model: no bags");
    const int K = model.config().K;
    const int n = static_cast<int>(bags.size());
    Mat probs = Mat::zeros(n, K);
    std::vector<int> preds(n), labels(n);
    for (int i = 0; i < n; ++i) {
        ForwardOutput out = model.infer(bags[i]);
        for (int k = 0; k < K; ++k) probs.at(i, k) = out.probs[k];
        preds[i] = out.predicted;
        labels[i] = bags[i].label;
    }
    return compute_metrics(probs, preds, labels, K);
}

ExperimentSetup make_default_setup(const ModelConfig& cfg, const Toggles& toggles) {
    return ExperimentSetup{cfg, toggles, make_toy_descriptions(cfg.K, cfg.C_low, cfg.C_high),
                           make_toy_templates(cfg.K)};
}

RunReport run_seeds(const ExperimentSetup& setup, const SyntheticDataset& ds, int shots,
                    const std::vector<uint64_t>& seeds, const std::string& name) {
    if (seeds.empty()) throw std::runtime_error("run_seeds: no seeds given");
    RunReport r;
    r.name = name;
    r.shots = shots;
    r.config_snapshot = config_to_string(setup.cfg);
    r.toggles_line = toggles_to_string(setup.toggles);
    r.dataset_hash_v = dataset_hash(ds);

    for (uint64_t seed : seeds) {
        SeedRow row;
        row.seed = seed;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            Split sp = few_shot_split(ds, shots, seed);
            row.split_hash_v = split_hash(sp);

            ModelConfig cfg = setup.cfg;
            cfg.seed = seed;
            MscptModel model(cfg, setup.toggles, setup.bank, setup.templates, ds.spec.d_raw);
            std::vector<PreparedBag> train_bags, test_bags;
            train_bags.reserve(sp.train_ids.size());
            test_bags.reserve(sp.test_ids.size());
            for (int id : sp.train_ids) train_bags.push_back(model.prepare(ds.bags.at(id)));
            for (int id : sp.test_ids) test_bags.push_back(model.prepare(ds.bags.at(id)));

            TrainResult tr = train_model(model, train_bags, seed ^ 0x9e3779b97f4a7c15ull);
            for (const PreparedBag& b : test_bags)
                if (std::binary_search(tr.trained_bag_ids.begin(), tr.trained_bag_ids.end(),
                                       b.bag_id))
                    throw std::logic_error("run_seeds: test bag '" + b.bag_id +
                                           "' was trained on");

            Metrics m = evaluate_model(model, test_bags);
            row.auc = m.auc;
            row.macro_f1 = m.macro_f1;
            row.acc = m.acc;
            row.epochs = tr.epochs_run;
            row.final_loss = tr.epoch_losses.back();
            row.graph_builds = model.graph_builds();
            row.ok = true;
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
        }
        row.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
        r.rows.push_back(std::move(row));
    }
    aggregate(r);
    if (r.completed == 0)
        throw std::runtime_error("run_seeds: all " + std::to_string(seeds.size()) +
                                 " seeds failed; first error: " + r.rows.front().error);
    return r;
}

uint64_t RunReport::content_hash() const {
    Hasher h;
    h.str("run-report v1");
    h.str(name);
    h.str(config_snapshot);
    h.str(toggles_line);
    h.u64(dataset_hash_v);
    h.i32(shots);
    h.u64(rows.size());
    for (const SeedRow& row : rows) {
        h.u64(row.seed);
        h.i32(row.ok ? 1 : 0);
        h.str(row.error);
        h.u64(row.split_hash_v);
        h.f64(row.auc);
        h.f64(row.macro_f1);
        h.f64(row.acc);
        h.i32(row.epochs);
        h.f64(row.final_loss);
        h.i32(row.graph_builds);
        // wall_ms deliberately left out
    }
    h.i32(completed);
    h.f64(auc_mean);
    h.f64(auc_std);
    h.f64(f1_mean);
    h.f64(f1_std);
    h.f64(acc_mean);
    h.f64(acc_std);
    return h.h;
}

std::string RunReport::to_text() const {
    std::ostringstream os;
    os << "run-report v1\n";
    os << "name " << name << "\n";
    os << "shots " << shots << "\n";
    os << "toggles " << toggles_line << "\n";
    os << "dataset_hash " << hash_hex(dataset_hash_v) << "\n";
    os << "content_hash " << hash_hex(content_hash()) << "\n";
    os << "config_begin\n" << config_snapshot << "config_end\n";
    os << "rows " << rows.size() << "\n";
    for (const SeedRow& row : rows) {
        os << "row seed=" << row.seed << " ok=" << (row.ok ? 1 : 0)
           << " split=" << hash_hex(row.split_hash_v) << " auc=" << g17(row.auc)
           << " macro_f1=" << g17(row.macro_f1) << " acc=" << g17(row.acc)
           << " epochs=" << row.epochs << " final_loss=" << g17(row.final_loss)
           << " graph_builds=" << row.graph_builds << " wall_ms=" << row.wall_ms;
        if (!row.ok) os << " error=" << row.error;
        os << "\n";
    }
    os << "agg completed=" << completed << " auc_mean=" << g17(auc_mean)
       << " auc_std=" << g17(auc_std) << " f1_mean=" << g17(f1_mean)
       << " f1_std=" << g17(f1_std) << " acc_mean=" << g17(acc_mean)
       << " acc_std=" << g17(acc_std) << "\n";
    return os.str();
}

std::string RunReport::to_csv() const {
    std::ostringstream os;
    os << "seed,ok,split_hash,auc,macro_f1,acc,epochs,final_loss,graph_builds,wall_ms,error\n";
    for (const SeedRow& row : rows) {
        std::string err = row.error;
        for (char& ch : err)
            if (ch == ',' || ch == '"' || ch == '\n') ch = ';';
        os << row.seed << "," << (row.ok ? 1 : 0) << "," << hash_hex(row.split_hash_v) << ","
           << g17(row.auc) << "," << g17(row.macro_f1) << "," << g17(row.acc) << ","
           << row.epochs << "," << g17(row.final_loss) << "," << row.graph_builds << ","
           << row.wall_ms << "," << err << "\n";
    }
    return os.str();
}

std::vector<RunReport> run_ablation(const ExperimentSetup& setup, const SyntheticDataset& ds,
                                    int shots, const std::vector<uint64_t>& seeds,
                                    std::vector<std::string> variants) {
    if (variants.empty()) variants = standard_variants();
    std::vector<Toggles> togs;
    togs.reserve(variants.size());
    for (const std::string& v : variants) togs.push_back(apply_variant(setup.toggles, v));

    std::vector<RunReport> out;
    for (size_t i = 0; i < variants.size(); ++i) {
        ExperimentSetup s = setup;
        s.toggles = togs[i];
        out.push_back(run_seeds(s, ds, shots, seeds, variants[i]));
    }

    for (size_t i = 1; i < out.size(); ++i)
        for (size_t j = 0; j < out[i].rows.size(); ++j)
            if (out[i].rows[j].ok && out[0].rows[j].ok &&
                out[i].rows[j].split_hash_v != out[0].rows[j].split_hash_v)
                throw std::logic_error("run_ablation: split diverged between '" + variants[0] +
                                       "' and '" + variants[i] + "' for seed " +
                                       std::to_string(out[i].rows[j].seed));

    for (size_t i = 0; i < out.size(); ++i)
        for (const SeedRow& row : out[i].rows) {
            if (!row.ok) continue;
            if (!togs[i].isgpt && row.graph_builds != 0)
                throw std::logic_error("run_ablation: variant '" + variants[i] + "' built " +
                                       std::to_string(row.graph_builds) +
                                       " graphs with the graph module off");
            if (togs[i].isgpt && row.graph_builds == 0)
                throw std::logic_error("run_ablation: variant '" + variants[i] +
                                       "' built no graphs with the graph module on");
        }
    return out;
}

SweepResult sweep_shots(const ExperimentSetup& setup, const SyntheticDataset& ds,
                        const std::vector<int>& shots_list, const std::vector<uint64_t>& seeds,
                        bool trimmed) {
    if (shots_list.empty()) throw std::runtime_error("sweep_shots: no shot counts given");
    SweepResult sr;
    sr.trimmed = trimmed;
    for (int shots : shots_list) {
        RunReport rep = run_seeds(setup, ds, shots, seeds, "shots" + std::to_string(shots));
        ShotsPoint p;
        p.shots = shots;
        p.auc_mean = rep.auc_mean;
        p.auc_std = rep.auc_std;
        if (trimmed) {
            std::vector<double> aucs;
            for (const SeedRow& row : rep.rows)
                if (row.ok) aucs.push_back(row.auc);
            if (aucs.size() < 5)
                throw std::runtime_error(
                    "sweep_shots: trimmed aggregation needs at least 5 completed seeds, have " +
                    std::to_string(aucs.size()) + " (shots=" + std::to_string(shots) + ")");
            std::sort(aucs.begin(), aucs.end());
            double sum = 0.0;
            for (size_t i = 2; i + 2 < aucs.size(); ++i) sum += aucs[i];
            p.auc_trimmed = sum / static_cast<double>(aucs.size() - 4);
        }
        sr.points.push_back(p);
        sr.reports.push_back(std::move(rep));
    }
    return sr;
}

std::string SweepResult::to_csv() const {
    std::ostringstream os;
    os << "shots,auc_mean,auc_std,auc_trimmed\n";
    for (const ShotsPoint& p : points) {
        os << p.shots << "," << g17(p.auc_mean) << "," << g17(p.auc_std) << ",";
        if (trimmed) os << g17(p.auc_trimmed);
        os << "\n";
    }
    return os.str();
}

void write_run_report(const RunReport& report, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const std::filesystem::path base(dir);
    atomic_write_text((base / (report.name + ".txt")).string(), report.to_text());
    atomic_write_text((base / (report.name + ".csv")).string(), report.to_csv());
}

void emit_score_map(const Mat& coords, const std::vector<double>& scores,
                    const std::string& pgm_path, const std::string& csv_path) {
    if (coords.cols != 2)
        throw std::runtime_error("emit_score_map: coords must be M x 2, got " +
                                 std::to_string(coords.rows) + "x" + std::to_string(coords.cols));
    if (static_cast<int>(scores.size()) != coords.rows)
        throw std::runtime_error("emit_score_map: " + std::to_string(scores.size()) +
                                 " scores for " + std::to_string(coords.rows) + " instances");
    if (coords.rows == 0) throw std::runtime_error("emit_score_map: no instances");

    std::vector<long long> rr(coords.rows), cc(coords.rows);
    long long max_r = 0, max_c = 0;
    for (int i = 0; i < coords.rows; ++i) {
        const double fr = coords.at(i, 0), fc = coords.at(i, 1);
        rr[i] = std::llround(fr);
        cc[i] = std::llround(fc);
        if (std::fabs(fr - static_cast<double>(rr[i])) > 1e-9 ||
            std::fabs(fc - static_cast<double>(cc[i])) > 1e-9 || rr[i] < 0 || cc[i] < 0)
            throw std::runtime_error("emit_score_map: coords must be non-negative grid cells");
        max_r = std::max(max_r, rr[i]);
        max_c = std::max(max_c, cc[i]);
    }

    double lo = scores[0], hi = scores[0];
    for (double s : scores) {
        lo = std::min(lo, s);
        hi = std::max(hi, s);
    }
    const double range = hi - lo;

    const int H = static_cast<int>(max_r) + 1, W = static_cast<int>(max_c) + 1;
    std::vector<int> img(static_cast<size_t>(H) * W, 0);
    for (int i = 0; i < coords.rows; ++i) {
        const int v = range > 0.0
                          ? static_cast<int>(std::lround(255.0 * (scores[i] - lo) / range))
                          : 255;
        int& cell = img[static_cast<size_t>(rr[i]) * W + cc[i]];
        cell = std::max(cell, v);
    }

    std::ostringstream pgm;
    pgm << "P2\n" << W << " " << H << "\n255\n";
    for (int r = 0; r < H; ++r) {
        for (int c = 0; c < W; ++c) pgm << (c ? " " : "") << img[static_cast<size_t>(r) * W + c];
        pgm << "\n";
    }
    atomic_write_text(pgm_path, pgm.str());

    std::ostringstream csv;
    csv << "row,col,score\n";
    for (int i = 0; i < coords.rows; ++i)
        csv << rr[i] << "," << cc[i] << "," << g17(scores[i]) << "\n";
    atomic_write_text(csv_path, csv.str());
}

}  // namespace mscpt
