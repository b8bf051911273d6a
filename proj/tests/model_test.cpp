#include "mscpt/model.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "doctest.h"
#include "mscpt/data.hpp"

namespace fs = std::filesystem;
using namespace mscpt;

namespace {

ModelConfig tiny_cfg() {
    ModelConfig cfg;
    cfg.d_joint = 8;
    cfg.K = 2;
    cfg.C_low = 2;
    cfg.C_high = 2;
    cfg.n_select = 6;
    cfg.K_top = 2;
    cfg.L_text = 1;
    cfg.L_img = 1;
    cfg.len_glob = 1;
    cfg.len_vis = 1;
    cfg.d_model = 8;
    cfg.lr = 5e-3;
    cfg.seed = 7;
    return cfg;
}

SyntheticSpec tiny_spec() {
    SyntheticSpec s;
    s.categories = 2;
    s.bags_per_category = 3;
    s.m_low_min = 4;
    s.m_low_max = 6;
    s.m_high_min = 6;
    s.m_high_max = 10;
    s.d_raw = 10;
    s.witness_rate = 0.3;
    s.grid = 8;
    s.seed = 11;
    return s;
}

struct Rig {
    ModelConfig cfg;
    SyntheticDataset ds;
    DescriptionBank bank;
    TemplateBank templates;

    Rig(const ModelConfig& c, const SyntheticSpec& s)
        : cfg(c),
          ds(generate_synthetic_dataset(s)),
          bank(make_toy_descriptions(c.K, c.C_low, c.C_high)),
          templates(make_toy_templates(c.K, 8)) {}

    MscptModel make(const Toggles& t = Toggles{}) const {
        return MscptModel(cfg, t, bank, templates, ds.spec.d_raw);
    }
};

std::vector<std::string> param_names(const MscptModel& m) {
    std::vector<std::string> out;
    for (const Param& p : m.params()) out.push_back(p.name);
    return out;
}

Bag shuffle_bag(const Bag& b, uint64_t seed) {
    Rng rng(seed);
    Bag out = b;
    auto shuffle_view = [&rng](const ScaleView& v) {
        const int m = v.instances.rows;
        std::vector<int> perm(m);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        ScaleView s;
        s.instances = Mat::zeros(m, v.instances.cols);
        s.coords = Mat::zeros(m, 2);
        if (!v.instance_labels.empty()) s.instance_labels.resize(m);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < v.instances.cols; ++j)
                s.instances.at(i, j) = v.instances.at(perm[i], j);
            s.coords.at(i, 0) = v.coords.at(perm[i], 0);
            s.coords.at(i, 1) = v.coords.at(perm[i], 1);
            if (!v.instance_labels.empty()) s.instance_labels[i] = v.instance_labels[perm[i]];
        }
        return s;
    };
    if (out.low) out.low = shuffle_view(*b.low);
    if (out.high) out.high = shuffle_view(*b.high);
    return out;
}

double max_logit_gap(const std::vector<double>& a, const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    double worst = 0.0;
    for (size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::fabs(a[i] - b[i]));
    return worst;
}

}  // namespace

TEST_CASE("parameter registry follows the toggles") {
    Rig rig(tiny_cfg(), tiny_spec());

    MscptModel full = rig.make();
    CHECK(param_names(full) ==
          std::vector<std::string>{"p_glob.0", "p_vis.0", "g.W1", "g.b1", "g.W2", "g.b2",
                                   "gcn_low.W0", "gcn_high.W0"});

    MscptModel bare = rig.make(apply_variant(Toggles{}, "all_off"));
    CHECK(param_names(bare) ==
          std::vector<std::string>{"att_low.V", "att_low.U", "att_low.w", "att_high.V",
                                   "att_high.U", "att_high.w", "head.W", "head.b"});
    CHECK(bare.param_value("head.W").rows == 2 * rig.cfg.d_joint);
    CHECK(bare.param_value("head.W").cols == rig.cfg.K);

    MscptModel pooled = rig.make(apply_variant(Toggles{}, "npcgp_off"));
    CHECK(pooled.params().size() == 16);

    MscptModel frozen_prompts = rig.make(apply_variant(Toggles{}, "mhpt_off"));
    CHECK(param_names(frozen_prompts) == std::vector<std::string>{"gcn_low.W0", "gcn_high.W0"});

    CHECK_THROWS_WITH(full.param_value("nope"), doctest::Contains("no parameter named"));
}

TEST_CASE("ablation variants are named and unknown names are rejected") {
    for (const std::string& v : standard_variants()) CHECK_NOTHROW(apply_variant(Toggles{}, v));
    CHECK(apply_variant(Toggles{}, "all_off").mhpt == false);
    CHECK(apply_variant(Toggles{}, "all_off").npcgp == false);
    CHECK(apply_variant(Toggles{}, "graph_knn_coord").graph_source == GraphSource::KnnCoord);
    CHECK(apply_variant(Toggles{}, "no_cross_guidance").cross_guidance == false);
    CHECK_THROWS_WITH(apply_variant(Toggles{}, "bogus"),
                      doctest::Contains("unknown variant 'bogus'"));
    CHECK(toggles_to_string(Toggles{}) == "mhpt=1 isgpt=1 npcgp=1 cross_guidance=1 graph=sim knn_k=4");
}

TEST_CASE("prepare runs selection at the low scale and embeds both scales") {
    Rig rig(tiny_cfg(), tiny_spec());
    MscptModel model = rig.make();
    const Bag& bag = rig.ds.bags[0];
    const int m_low = bag.low->instances.rows;

    PreparedBag pb = model.prepare(bag);
    CHECK(pb.bag_id == bag.bag_id);
    CHECK(pb.label == bag.label);
    // n_select >= M keeps everything.
    REQUIRE(static_cast<int>(pb.selected.size()) == m_low);
    CHECK(std::is_sorted(pb.selected.begin(), pb.selected.end()));
    CHECK(pb.low_frozen.rows == m_low);
    CHECK(pb.low_frozen.cols == rig.cfg.d_joint);
    CHECK(pb.high_frozen.rows == bag.high->instances.rows);
    CHECK(pb.low_coords.rows == m_low);

    ModelConfig narrow = rig.cfg;
    narrow.n_select = 2;
    Rig rig2(narrow, tiny_spec());
    MscptModel model2 = rig2.make();
    PreparedBag pb2 = model2.prepare(rig2.ds.bags[0]);
    CHECK(pb2.selected.size() >= 2);
    CHECK(pb2.selected.size() <= 4);  // union over two categories
    CHECK(static_cast<int>(pb2.selected.size()) <= m_low);
}

TEST_CASE("prepare rejects missing scales and width mismatches") {
    Rig rig(tiny_cfg(), tiny_spec());
    MscptModel model = rig.make();

    Bag half = rig.ds.bags[0];
    half.high.reset();
    CHECK_THROWS_WITH(model.prepare(half), doctest::Contains("both scales"));

    Bag wrong = rig.ds.bags[0];
    wrong.low->instances = Mat::zeros(wrong.low->instances.rows, 5);
    CHECK_THROWS_WITH(model.prepare(wrong), doctest::Contains("d_raw"));
}

TEST_CASE("a single bag can be overfit") {
    ModelConfig cfg = tiny_cfg();
    cfg.lr = 2e-2;
    Rig rig(cfg, tiny_spec());
    MscptModel model = rig.make();
    PreparedBag pb = model.prepare(rig.ds.bags[0]);

    const double first = model.train_step(pb);
    double last = first;
    for (int s = 1; s < 200; ++s) last = model.train_step(pb);
    CHECK(model.steps_taken() == 200);
    CHECK(last <= 0.1 * first);
}

TEST_CASE("the pooled-head variant also overfits a single bag") {
    ModelConfig cfg = tiny_cfg();
    cfg.lr = 2e-2;
    Rig rig(cfg, tiny_spec());
    MscptModel model = rig.make(apply_variant(Toggles{}, "all_off"));
    PreparedBag pb = model.prepare(rig.ds.bags[1]);

    const double first = model.train_step(pb);
    double last = first;
    for (int s = 1; s < 200; ++s) last = model.train_step(pb);
    CHECK(last <= 0.1 * first);
}

TEST_CASE("frozen towers stay frozen through training") {
    Rig rig(tiny_cfg(), tiny_spec());
    MscptModel model = rig.make();
    std::vector<PreparedBag> prepared;
    for (const Bag& b : rig.ds.bags) prepared.push_back(model.prepare(b));

    const uint64_t frozen_before = model.frozen_hash();
    const uint64_t trainable_before = model.trainable_hash();
    for (int s = 0; s < 24; ++s) model.train_step(prepared[s % prepared.size()]);
    CHECK(model.frozen_hash() == frozen_before);
    CHECK(model.trainable_hash() != trainable_before);
}

TEST_CASE("the same seed replays the same loss history") {
    Rig rig(tiny_cfg(), tiny_spec());
    MscptModel a = rig.make();
    MscptModel b = rig.make();
    CHECK(a.frozen_hash() == b.frozen_hash());
    CHECK(a.trainable_hash() == b.trainable_hash());

    for (int s = 0; s < 12; ++s) {
        const Bag& bag = rig.ds.bags[s % rig.ds.bags.size()];
        const double la = a.train_step(a.prepare(bag));
        const double lb = b.train_step(b.prepare(bag));
        CHECK(la == lb);
    }
    CHECK(a.trainable_hash() == b.trainable_hash());
}

TEST_CASE("graph construction is instrumented and gated by the toggle") {
    Rig rig(tiny_cfg(), tiny_spec());

    MscptModel on = rig.make();
    PreparedBag pb = on.prepare(rig.ds.bags[0]);
    CHECK(on.graph_builds() == 0);
    on.train_step(pb);
    CHECK(on.graph_builds() == 2);  // one adjacency per scale
    on.infer(pb);
    CHECK(on.graph_builds() == 4);

    MscptModel off = rig.make(apply_variant(Toggles{}, "isgpt_off"));
    PreparedBag pb2 = off.prepare(rig.ds.bags[0]);
    off.train_step(pb2);
    off.infer(pb2);
    CHECK(off.graph_builds() == 0);
}

TEST_CASE("instance order does not change the logits") {
    Rig rig(tiny_cfg(), tiny_spec());
    for (const char* variant : {"full", "graph_knn_feat", "npcgp_off", "isgpt_off"}) {
        CAPTURE(variant);
        MscptModel model = rig.make(apply_variant(Toggles{}, variant));
        for (int s = 0; s < 4; ++s) model.train_step(model.prepare(rig.ds.bags[s % 3]));

        const Bag& bag = rig.ds.bags[4];
        ForwardOutput base = model.infer(model.prepare(bag));
        ForwardOutput perm = model.infer(model.prepare(shuffle_bag(bag, 99)));

        if (model.toggles().npcgp) {
            CHECK(max_logit_gap(base.triple.overall, perm.triple.overall) <= 1e-6);
            CHECK(max_logit_gap(base.triple.high, perm.triple.high) <= 1e-6);
            CHECK(max_logit_gap(base.triple.low, perm.triple.low) <= 1e-6);
        } else {
            CHECK(max_logit_gap(base.head_logits, perm.head_logits) <= 1e-6);
        }
        CHECK(base.predicted == perm.predicted);
    }
}

TEST_CASE("training and inference agree on the loss") {
    Rig rig(tiny_cfg(), tiny_spec());
    MscptModel model = rig.make();
    PreparedBag pb = model.prepare(rig.ds.bags[2]);
    for (int s = 0; s < 3; ++s) model.train_step(pb);
    const double train_path = model.loss_value(pb);
    const double infer_path = model.infer(pb).loss;
    CHECK(std::fabs(train_path - infer_path) <= 1e-12);
}

TEST_CASE("analytic gradients match finite differences for every parameter") {
    Rig rig(tiny_cfg(), tiny_spec());
    for (const char* variant : {"full", "npcgp_off"}) {
        CAPTURE(variant);
        MscptModel model = rig.make(apply_variant(Toggles{}, variant));
        PreparedBag pb = model.prepare(rig.ds.bags[1]);

        auto [base, grads] = model.loss_and_grads(pb);
        REQUIRE(std::isfinite(base));
        const size_t n = model.params().size();
        for (size_t i = 0; i < n; ++i) {
            const std::string name = model.params()[i].name;
            CAPTURE(name);
            Mat& value = model.param_value(name);
            std::vector<size_t> picks = {0, value.a.size() / 2, value.a.size() - 1};
            std::sort(picks.begin(), picks.end());
            picks.erase(std::unique(picks.begin(), picks.end()), picks.end());
            for (size_t j : picks) {
                const double x0 = value.a[j];
                const double h = 1e-5 * std::max(1.0, std::fabs(x0));
                value.a[j] = x0 + h;
                const double lp = model.loss_value(pb);
                value.a[j] = x0 - h;
                const double lm = model.loss_value(pb);
                value.a[j] = x0;
                const double fd = (lp - lm) / (2.0 * h);
                const double an = grads[i].a[j];
                const double rel =
                    std::fabs(fd - an) / std::max(1.0, std::fabs(fd) + std::fabs(an));
                CAPTURE(j);
                CHECK(rel <= 1e-4);
            }
        }
    }
}

TEST_CASE("non-finite losses abort with the bag named") {
    Rig rig(tiny_cfg(), tiny_spec());
    MscptModel model = rig.make();
    PreparedBag pb = model.prepare(rig.ds.bags[0]);
    Mat& w = model.param_value("gcn_low.W0");
    w.a[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_WITH(model.train_step(pb), doctest::Contains(pb.bag_id.c_str()));
}

TEST_CASE("saved parameters reload into an identical model") {
    fs::path dir = fs::temp_directory_path() / "mscpt_model_tests";
    fs::create_directories(dir);
    const std::string path = (dir / "params.txt").string();

    Rig rig(tiny_cfg(), tiny_spec());
    MscptModel a = rig.make();
    PreparedBag pb = a.prepare(rig.ds.bags[0]);
    for (int s = 0; s < 6; ++s) a.train_step(pb);
    a.save_params(path);

    MscptModel b = rig.make();
    CHECK(b.trainable_hash() != a.trainable_hash());
    b.load_params(path);
    CHECK(b.trainable_hash() == a.trainable_hash());

    ForwardOutput oa = a.infer(pb);
    ForwardOutput ob = b.infer(pb);
    CHECK(max_logit_gap(oa.probs, ob.probs) == 0.0);

    MscptModel c = rig.make(apply_variant(Toggles{}, "all_off"));
    CHECK_THROWS_WITH(c.load_params(path), doctest::Contains("expected att_low.V"));
    CHECK_THROWS_WITH(b.load_params((dir / "missing.txt").string()),
                      doctest::Contains("cannot open"));
}

TEST_CASE("zero-shot score maps are per-instance distributions") {
    Rig rig(tiny_cfg(), tiny_spec());
    MscptModel model = rig.make();
    const Bag& bag = rig.ds.bags[0];
    Mat scores = model.zero_shot_score_map(bag);
    REQUIRE(scores.rows == bag.low->instances.rows);
    REQUIRE(scores.cols == rig.cfg.K);
    for (int i = 0; i < scores.rows; ++i) {
        double sum = 0.0;
        for (int k = 0; k < scores.cols; ++k) {
            CHECK(scores.at(i, k) >= 0.0);
            sum += scores.at(i, k);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
}
