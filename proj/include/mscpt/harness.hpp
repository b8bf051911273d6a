// Experiment harness: few-shot splits, the training loop, multi-seed runs
// with content-hashed reports, the ablation driver, shot sweeps, and
// score-map emission.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mscpt/data.hpp"
#include "mscpt/metrics.hpp"
#include "mscpt/model.hpp"

namespace mscpt {

struct Split {
    std::vector<int> train_ids;  // indices into dataset.bags
    std::vector<int> test_ids;
};

// Draws `shots` training bags per category without replacement (seeded);
// everything else becomes the test side. A category with fewer than `shots`
// bags is an error naming that category.
Split few_shot_split(const SyntheticDataset& ds, int shots, uint64_t seed);
uint64_t split_hash(const Split& s);

struct TrainResult {
    std::vector<double> epoch_losses;  // mean per-bag loss per epoch
    int epochs_run = 0;
    bool stopped_early = false;
    std::vector<std::string> trained_bag_ids;  // sorted, unique
};

// Batch-size-1 loop with a seeded per-epoch shuffle. Stops early when the
// mean epoch loss has not improved by more than kPlateauTol for
// cfg.patience consecutive epochs.
inline constexpr double kPlateauTol = 1e-6;
TrainResult train_model(MscptModel& model, const std::vector<PreparedBag>& bags,
                        uint64_t shuffle_seed);

Metrics evaluate_model(MscptModel& model, const std::vector<PreparedBag>& bags);

struct ExperimentSetup {
    ModelConfig cfg;
    Toggles toggles;
    DescriptionBank bank;
    TemplateBank templates;
};
// Toy banks sized to the config.
ExperimentSetup make_default_setup(const ModelConfig& cfg, const Toggles& toggles);

struct SeedRow {
    uint64_t seed = 0;
    bool ok = false;
    std::string error;  // set when ok is false
    uint64_t split_hash_v = 0;
    double auc = 0.0, macro_f1 = 0.0, acc = 0.0;
    int epochs = 0;
    double final_loss = 0.0;
    int graph_builds = 0;
    long long wall_ms = 0;  // excluded from the content hash
};

struct RunReport {
    std::string name;
    std::string config_snapshot;
    std::string toggles_line;
    uint64_t dataset_hash_v = 0;
    int shots = 0;
    std::vector<SeedRow> rows;
    int completed = 0;
    double auc_mean = 0.0, auc_std = 0.0;
    double f1_mean = 0.0, f1_std = 0.0;
    double acc_mean = 0.0, acc_std = 0.0;

    // Stable across reruns: every field except wall_ms enters the hash.
    uint64_t content_hash() const;
    std::string to_text() const;
    std::string to_csv() const;
};

// One full experiment: per seed, split -> init -> train -> evaluate.
// A seed that throws is recorded as failed; aggregates cover completed seeds
// only, and a run where every seed failed is an error.
RunReport run_seeds(const ExperimentSetup& setup, const SyntheticDataset& ds, int shots,
                    const std::vector<uint64_t>& seeds, const std::string& name);

// Runs the named variants (standard_variants() when empty) on shared
// per-seed splits and checks the graph instrumentation against each
// variant's toggles. Unknown variant names fail before anything runs.
std::vector<RunReport> run_ablation(const ExperimentSetup& setup, const SyntheticDataset& ds,
                                    int shots, const std::vector<uint64_t>& seeds,
                                    std::vector<std::string> variants = {});

struct ShotsPoint {
    int shots = 0;
    double auc_mean = 0.0, auc_std = 0.0;
    // Mean AUC after dropping the 2 best and 2 worst seeds; only filled when
    // trimming was requested (needs >= 5 completed seeds).
    double auc_trimmed = 0.0;
};

struct SweepResult {
    bool trimmed = false;
    std::vector<ShotsPoint> points;
    std::vector<RunReport> reports;
    std::string to_csv() const;
};

SweepResult sweep_shots(const ExperimentSetup& setup, const SyntheticDataset& ds,
                        const std::vector<int>& shots_list, const std::vector<uint64_t>& seeds,
                        bool trimmed);

// Writes <dir>/<name>.txt and <dir>/<name>.csv.
void write_run_report(const RunReport& report, const std::string& dir);

// Rasterizes per-instance scores onto their grid cells as an ASCII PGM (P2),
// min-max normalized to 0..255 (a constant map renders occupied cells as
// 255), plus a row,col,score CSV. scores must match coords row for row.
void emit_score_map(const Mat& coords, const std::vector<double>& scores,
                    const std::string& pgm_path, const std::string& csv_path);

}  // namespace mscpt
