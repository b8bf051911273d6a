#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "doctest.h"
#include "mscpt/core.hpp"

using mscpt::Bag;
using mscpt::Mat;
using mscpt::ModelConfig;
using mscpt::ScaleView;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    const std::string path = "/tmp/" + name;
    std::ofstream out(path);
    out << content;
    return path;
}

}  // namespace

TEST_SUITE("core") {

TEST_CASE("bag label is 0 iff every instance label is 0") {
    CHECK(mscpt::bag_label_from_instances({0, 0, 0}) == 0);
    CHECK(mscpt::bag_label_from_instances({0, 1, 0}) == 1);
    CHECK(mscpt::bag_label_from_instances({1, 1, 1}) == 1);
    CHECK(mscpt::bag_label_from_instances({0}) == 0);
    CHECK_THROWS_AS(mscpt::bag_label_from_instances({}), std::invalid_argument);
    CHECK_THROWS_AS(mscpt::bag_label_from_instances({0, 2}), std::invalid_argument);
}

TEST_CASE("bag label is permutation invariant") {
    std::vector<int> labels = {0, 0, 1, 0, 1};
    const int want = mscpt::bag_label_from_instances(labels);
    std::sort(labels.begin(), labels.end());
    do {
        CHECK(mscpt::bag_label_from_instances(labels) == want);
    } while (std::next_permutation(labels.begin(), labels.end()));
}

TEST_CASE("default config validates cleanly and idempotently") {
    ModelConfig cfg;
    auto r1 = mscpt::validate_config(cfg);
    CHECK(r1.ok());
    ModelConfig same = mscpt::checked_config(cfg);
    auto r2 = mscpt::validate_config(same);
    CHECK(r2.ok());
}

TEST_CASE("validation names each violated field") {
    ModelConfig cfg;
    cfg.tau = 0.0;
    cfg.K_top = 0;
    cfg.patience = 99;
    cfg.max_epochs = 10;
    auto r = mscpt::validate_config(cfg);
    CHECK(!r.ok());
    const std::string msg = r.to_string();
    CHECK(msg.find("tau") != std::string::npos);
    CHECK(msg.find("K_top") != std::string::npos);
    CHECK(msg.find("patience") != std::string::npos);
    CHECK_THROWS_AS(mscpt::checked_config(cfg), std::runtime_error);
}

TEST_CASE("zero prompt lengths are allowed") {
    ModelConfig cfg;
    cfg.len_glob = 0;
    cfg.len_vis = 0;
    CHECK(mscpt::validate_config(cfg).ok());
    cfg.len_vis = -1;
    CHECK(!mscpt::validate_config(cfg).ok());
}

TEST_CASE("config files round trip through the canonical snapshot") {
    ModelConfig cfg;
    cfg.K = 3;
    cfg.tau = 0.05;
    cfg.seed = 42;
    const std::string path = write_temp("cfg_roundtrip.txt", mscpt::config_to_string(cfg));
    ModelConfig loaded = mscpt::load_config_file(path);
    CHECK(mscpt::config_to_string(loaded) == mscpt::config_to_string(cfg));
    std::remove(path.c_str());
}

TEST_CASE("config file accepts comments and blank lines") {
    const std::string path = write_temp("cfg_comments.txt",
                                        "# experiment setup\n"
                                        "\n"
                                        "K = 4   # categories\n"
                                        "tau=0.2\n");
    ModelConfig cfg = mscpt::load_config_file(path);
    CHECK(cfg.K == 4);
    CHECK(cfg.tau == doctest::Approx(0.2));
    std::remove(path.c_str());
}

TEST_CASE("unknown config keys fail loudly, all named") {
    const std::string path = write_temp("cfg_unknown.txt",
                                        "K = 2\n"
                                        "warmup = 5\n"
                                        "dropout = 0.1\n");
    try {
        mscpt::load_config_file(path);
        FAIL("expected an error");
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("warmup") != std::string::npos);
        CHECK(msg.find("dropout") != std::string::npos);
    }
    std::remove(path.c_str());
}

TEST_CASE("malformed config values are rejected") {
    const std::string path = write_temp("cfg_bad.txt", "K = two\n");
    CHECK_THROWS_AS(mscpt::load_config_file(path), std::runtime_error);
    std::remove(path.c_str());
    const std::string path2 = write_temp("cfg_bad2.txt", "no equals sign here\n");
    CHECK_THROWS_AS(mscpt::load_config_file(path2), std::runtime_error);
    std::remove(path2.c_str());
}

TEST_CASE("bag validation enforces shape and coordinate uniqueness") {
    Bag bag;
    bag.bag_id = "b0";
    bag.label = 1;
    ScaleView v;
    v.instances = Mat::zeros(3, 4);
    v.coords = Mat::zeros(3, 2);
    v.coords.at(1, 0) = 1.0;
    v.coords.at(2, 1) = 1.0;
    bag.low = v;
    CHECK_NOTHROW(mscpt::validate_bag(bag, 2));

    Bag dup = bag;
    dup.low->coords.at(2, 1) = 0.0;
    dup.low->coords.at(2, 0) = 1.0;  // same as instance 1
    CHECK_THROWS_WITH_AS(mscpt::validate_bag(dup, 2), doctest::Contains("duplicate"),
                         std::runtime_error);

    Bag empty;
    empty.bag_id = "b1";
    CHECK_THROWS_AS(mscpt::validate_bag(empty, 2), std::runtime_error);

    Bag range = bag;
    range.label = 5;
    CHECK_THROWS_AS(mscpt::validate_bag(range, 2), std::runtime_error);
}

TEST_CASE("bag validation cross-checks instance labels for two categories") {
    Bag bag;
    bag.bag_id = "b2";
    bag.label = 1;
    ScaleView v;
    v.instances = Mat::zeros(2, 4);
    v.coords = Mat::zeros(2, 2);
    v.coords.at(1, 0) = 1.0;
    v.instance_labels = {0, 1};
    bag.low = v;
    CHECK_NOTHROW(mscpt::validate_bag(bag, 2));

    bag.low->instance_labels = {0, 0};
    CHECK_THROWS_WITH_AS(mscpt::validate_bag(bag, 2), doctest::Contains("inconsistent"),
                         std::runtime_error);

    // Multi-category bags skip the binary relation.
    bag.label = 1;
    CHECK_NOTHROW(mscpt::validate_bag(bag, 3));
}

}  // TEST_SUITE
