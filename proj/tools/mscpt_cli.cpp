#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mscpt/cache.hpp"
#include "mscpt/harness.hpp"
#include "mscpt/hash.hpp"

using namespace mscpt;

namespace {

void add_config_flags(CLI::App* a, ModelConfig& cfg) {
    a->add_option("--d_joint", cfg.d_joint);
    a->add_option("--K", cfg.K);
    a->add_option("--C_low", cfg.C_low);
    a->add_option("--C_high", cfg.C_high);
    a->add_option("--n_select", cfg.n_select);
    a->add_option("--tau", cfg.tau);
    a->add_option("--K_top", cfg.K_top);
    a->add_option("--L_text", cfg.L_text);
    a->add_option("--L_img", cfg.L_img);
    a->add_option("--len_glob", cfg.len_glob);
    a->add_option("--len_vis", cfg.len_vis);
    a->add_option("--gcn_layers", cfg.gcn_layers);
    a->add_option("--lr", cfg.lr);
    a->add_option("--weight_decay", cfg.weight_decay);
    a->add_option("--max_epochs", cfg.max_epochs);
    a->add_option("--patience", cfg.patience);
    a->add_option("--seed", cfg.seed);
    a->add_option("--d_model", cfg.d_model);
    a->add_option("--vocab_size", cfg.vocab_size);
    a->add_option("--max_seq_len", cfg.max_seq_len);
}

struct ToggleFlags {
    std::string variant = "full";
    std::string graph;
    int knn_k = 0;
    bool no_mhpt = false, no_isgpt = false, no_npcgp = false, no_cross = false;

    Toggles build() const {
        Toggles t = apply_variant(Toggles{}, variant);
        if (no_mhpt) t.mhpt = false;
        if (no_isgpt) t.isgpt = false;
        if (no_npcgp) t.npcgp = false;
        if (no_cross) t.cross_guidance = false;
        if (graph == "sim") t.graph_source = GraphSource::Sim;
        if (graph == "knn_coord") t.graph_source = GraphSource::KnnCoord;
        if (graph == "knn_feat") t.graph_source = GraphSource::KnnFeat;
        if (knn_k > 0) t.knn_k = knn_k;
        return t;
    }
};

void add_toggle_flags(CLI::App* a, ToggleFlags& tf) {
    a->add_option("--variant", tf.variant, "named toggle preset")
        ->check(CLI::IsMember(standard_variants()));
    a->add_option("--graph", tf.graph, "adjacency source")
        ->check(CLI::IsMember({"sim", "knn_coord", "knn_feat"}));
    a->add_option("--knn_k", tf.knn_k, "neighbors for the knn graph sources");
    a->add_flag("--no-mhpt", tf.no_mhpt, "freeze all prompts");
    a->add_flag("--no-isgpt", tf.no_isgpt, "skip graph propagation");
    a->add_flag("--no-npcgp", tf.no_npcgp, "attention pooling + linear head instead");
    a->add_flag("--no-cross-guidance", tf.no_cross, "same-scale description pooling only");
}

// --config is applied before every other flag, so explicit flags win
// regardless of their position on the command line.
std::string config_path_from_argv(int argc, char** argv) {
    for (int i = 1; i < argc; ++i) {
        const std::string s = argv[i];
        if (s == "--config" && i + 1 < argc) return argv[i + 1];
        if (s.rfind("--config=", 0) == 0) return s.substr(9);
    }
    return "";
}

void print_report(const RunReport& r) {
    std::printf("%-18s shots=%-3d completed=%d/%zu auc=%.4f sd=%.4f acc=%.4f f1=%.4f hash=%s\n",
                r.name.c_str(), r.shots, r.completed, r.rows.size(), r.auc_mean, r.auc_std,
                r.acc_mean, r.f1_mean, hash_hex(r.content_hash()).c_str());
}

const Bag& bag_at(const SyntheticDataset& ds, int index) {
    if (index < 0 || index >= static_cast<int>(ds.bags.size()))
        throw std::runtime_error("bag index " + std::to_string(index) + " out of range [0, " +
                                 std::to_string(ds.bags.size()) + ")");
    return ds.bags[static_cast<size_t>(index)];
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"few-shot multi-scale bag classification workbench"};
    app.require_subcommand(1);

    ModelConfig cfg;
    const std::string config_path = config_path_from_argv(argc, argv);
    if (!config_path.empty()) {
        try {
            cfg = load_config_file(config_path);
        } catch (const std::exception& e) {
            std::fprintf(stderr, "error: %s\n", e.what());
            return 1;
        }
    }
    ToggleFlags tf;
    std::string config_file_opt;  // accepted here, consumed by the pre-scan above

    SyntheticSpec spec;
    std::string gen_out;
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dual-scale dataset");
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--categories", spec.categories);
    gen->add_option("--bags_per_category", spec.bags_per_category);
    gen->add_option("--m_low_min", spec.m_low_min);
    gen->add_option("--m_low_max", spec.m_low_max);
    gen->add_option("--m_high_min", spec.m_high_min);
    gen->add_option("--m_high_max", spec.m_high_max);
    gen->add_option("--d_raw", spec.d_raw);
    gen->add_option("--witness_rate", spec.witness_rate);
    gen->add_flag("--context_mode", spec.context_mode,
                  "co-occurrence labels instead of witness labels");
    gen->add_option("--noise_scale", spec.noise_scale);
    gen->add_option("--grid", spec.grid);
    gen->add_option("--data_seed", spec.seed);

    std::string data_dir, params_path, out_dir = "runs", out_prefix = "heatmap";
    int shots = 16, bag_index = 0, category = 1;
    std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};
    std::vector<int> shots_list = {16, 8, 4, 2, 1};
    bool trimmed = false;
    std::vector<std::string> variants;

    auto add_model_inputs = [&](CLI::App* a) {
        a->add_option("--data", data_dir, "dataset directory")->required();
        a->add_option("--config", config_file_opt, "key = value config file");
        add_config_flags(a, cfg);
        add_toggle_flags(a, tf);
    };

    auto* select = app.add_subcommand("select", "show patch selection for one bag");
    add_model_inputs(select);
    select->add_option("--bag", bag_index, "bag index");

    auto* train = app.add_subcommand("train", "train on a few-shot split and report test metrics");
    add_model_inputs(train);
    train->add_option("--shots", shots, "training bags per category");
    train->add_option("--params_out", params_path, "write trained parameters here");

    auto* evalc = app.add_subcommand("eval", "evaluate saved parameters on the test split");
    add_model_inputs(evalc);
    evalc->add_option("--shots", shots, "training bags per category (fixes the split)");
    evalc->add_option("--params", params_path, "parameters written by train")->required();

    auto* ablate = app.add_subcommand("ablate", "run toggle variants on shared splits");
    add_model_inputs(ablate);
    ablate->add_option("--shots", shots);
    ablate->add_option("--seeds", seeds)->delimiter(',');
    ablate->add_option("--variants", variants)->delimiter(',');
    ablate->add_option("--out", out_dir, "report directory");

    auto* sweep = app.add_subcommand("sweep-shots", "AUC as the shot count shrinks");
    add_model_inputs(sweep);
    sweep->add_option("--shots_list", shots_list)->delimiter(',');
    sweep->add_option("--seeds", seeds)->delimiter(',');
    sweep->add_flag("--trimmed", trimmed, "also report the mean without the 2 best/2 worst seeds");
    sweep->add_option("--out", out_dir, "report directory");

    auto* heat = app.add_subcommand("heatmap", "zero-shot score raster for one bag");
    add_model_inputs(heat);
    heat->add_option("--bag", bag_index, "bag index");
    heat->add_option("--category", category, "score column to rasterize");
    heat->add_option("--out_prefix", out_prefix, "writes <prefix>.pgm and <prefix>.csv");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            SyntheticDataset ds = generate_synthetic_dataset(spec);
            save_dataset(ds, gen_out);
            std::printf("wrote %zu bags to %s (hash %s)\n", ds.bags.size(), gen_out.c_str(),
                        hash_hex(dataset_hash(ds)).c_str());
            return 0;
        }

        SyntheticDataset ds = load_dataset(data_dir);
        const Toggles tog = tf.build();
        ExperimentSetup setup = make_default_setup(cfg, tog);

        if (select->parsed()) {
            const Bag& bag = bag_at(ds, bag_index);
            MscptModel model(cfg, tog, setup.bank, setup.templates, ds.spec.d_raw);
            PreparedBag pb = model.prepare(bag);
            std::printf("bag %s label %d low_instances %d high_instances %d\n",
                        bag.bag_id.c_str(), bag.label, bag.low->instances.rows,
                        bag.high->instances.rows);
            std::printf("selected %zu:", pb.selected.size());
            for (int id : pb.selected) std::printf(" %d", id);
            std::printf("\n");
        } else if (train->parsed()) {
            Split sp = few_shot_split(ds, shots, cfg.seed);
            MscptModel model(cfg, tog, setup.bank, setup.templates, ds.spec.d_raw);
            std::vector<PreparedBag> train_bags, test_bags;
            for (int id : sp.train_ids) train_bags.push_back(model.prepare(ds.bags[id]));
            for (int id : sp.test_ids) test_bags.push_back(model.prepare(ds.bags[id]));
            TrainResult tr = train_model(model, train_bags, cfg.seed ^ 0x9e3779b97f4a7c15ull);
            Metrics m = evaluate_model(model, test_bags);
            std::printf("toggles %s\n", toggles_to_string(tog).c_str());
            std::printf("epochs %d%s final_loss %.6f\n", tr.epochs_run,
                        tr.stopped_early ? " (early stop)" : "", tr.epoch_losses.back());
            std::printf("test auc %.4f acc %.4f macro_f1 %.4f (%zu bags)\n", m.auc, m.acc,
                        m.macro_f1, test_bags.size());
            if (!params_path.empty()) {
                model.save_params(params_path);
                std::printf("params -> %s\n", params_path.c_str());
            }
        } else if (evalc->parsed()) {
            Split sp = few_shot_split(ds, shots, cfg.seed);
            MscptModel model(cfg, tog, setup.bank, setup.templates, ds.spec.d_raw);
            model.load_params(params_path);
            std::vector<PreparedBag> test_bags;
            for (int id : sp.test_ids) test_bags.push_back(model.prepare(ds.bags[id]));
            Metrics m = evaluate_model(model, test_bags);
            std::printf("test auc %.4f acc %.4f macro_f1 %.4f (%zu bags)\n", m.auc, m.acc,
                        m.macro_f1, test_bags.size());
        } else if (ablate->parsed()) {
            std::vector<RunReport> reports = run_ablation(setup, ds, shots, seeds, variants);
            for (const RunReport& r : reports) {
                write_run_report(r, out_dir);
                print_report(r);
            }
            std::printf("reports -> %s\n", out_dir.c_str());
        } else if (sweep->parsed()) {
            SweepResult sr = sweep_shots(setup, ds, shots_list, seeds, trimmed);
            for (const RunReport& r : sr.reports) {
                write_run_report(r, out_dir);
                print_report(r);
            }
            std::filesystem::create_directories(out_dir);
            const std::string sweep_csv = out_dir + "/sweep.csv";
            atomic_write_text(sweep_csv, sr.to_csv());
            std::printf("sweep -> %s\n", sweep_csv.c_str());
        } else if (heat->parsed()) {
            const Bag& bag = bag_at(ds, bag_index);
            if (category < 0 || category >= cfg.K)
                throw std::runtime_error("category " + std::to_string(category) +
                                         " out of range [0, " + std::to_string(cfg.K) + ")");
            MscptModel model(cfg, tog, setup.bank, setup.templates, ds.spec.d_raw);
            Mat scores = model.zero_shot_score_map(bag);
            std::vector<double> col(scores.rows);
            for (int i = 0; i < scores.rows; ++i) col[i] = scores.at(i, category);
            const auto parent = std::filesystem::path(out_prefix).parent_path();
            if (!parent.empty()) std::filesystem::create_directories(parent);
            emit_score_map(bag.low->coords, col, out_prefix + ".pgm", out_prefix + ".csv");
            std::printf("heatmap -> %s.pgm %s.csv\n", out_prefix.c_str(), out_prefix.c_str());
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
