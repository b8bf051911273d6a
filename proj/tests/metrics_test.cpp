#include <cmath>
#include <vector>

#include "doctest.h"
#include "mscpt/mat.hpp"
#include "mscpt/metrics.hpp"

using namespace mscpt;

namespace {

// Rank-statistic oracle: count pairwise wins and half-credit ties directly.
double oracle_auc(const std::vector<double>& s, const std::vector<int>& y) {
    double u = 0.0;
    long long pairs = 0;
    for (size_t i = 0; i < s.size(); ++i) {
        for (size_t j = 0; j < s.size(); ++j) {
            if (y[i] == 1 && y[j] == 0) {
                ++pairs;
                if (s[i] > s[j]) u += 1.0;
                if (s[i] == s[j]) u += 0.5;
            }
        }
    }
    return u / pairs;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("the handcrafted six-bag case matches the rank-statistic oracle") {
    std::vector<double> scores = {0.9, 0.4, 0.6, 0.5, 0.4, 0.1};
    std::vector<int> labels = {1, 1, 1, 0, 0, 0};
    double got = binary_auc(scores, labels);
    CHECK(got == doctest::Approx(oracle_auc(scores, labels)).epsilon(1e-12));
    // 0.9 beats all three; 0.4 beats 0.1 and ties 0.4; 0.6 beats all three.
    CHECK(got == doctest::Approx(7.5 / 9.0).epsilon(1e-12));
}

TEST_CASE("perfect separation scores one, reversal scores zero, constants half") {
    std::vector<int> labels = {0, 0, 1, 1};
    CHECK(binary_auc({0.1, 0.2, 0.8, 0.9}, labels) == doctest::Approx(1.0));
    CHECK(binary_auc({0.9, 0.8, 0.2, 0.1}, labels) == doctest::Approx(0.0));
    CHECK(binary_auc({0.5, 0.5, 0.5, 0.5}, labels) == doctest::Approx(0.5));
}

TEST_CASE("degenerate label sets are rejected") {
    CHECK_THROWS_AS((void)binary_auc({0.5, 0.6}, {1, 1}), std::invalid_argument);
    CHECK_THROWS_AS((void)binary_auc({0.5, 0.6}, {0, 0}), std::invalid_argument);
    CHECK_THROWS_AS((void)binary_auc({0.5}, {0, 1}), std::invalid_argument);
    CHECK_THROWS_AS((void)binary_auc({0.5, 0.5}, {0, 2}), std::invalid_argument);
}

TEST_CASE("random scores match the pairwise oracle") {
    Rng rng(5);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<double> s;
        std::vector<int> y;
        for (int i = 0; i < 20; ++i) {
            // Quantized scores so ties actually occur.
            s.push_back(std::floor(unif(rng) * 8.0) / 8.0);
            y.push_back(i < 8 ? 1 : 0);
        }
        CHECK(binary_auc(s, y) == doctest::Approx(oracle_auc(s, y)).epsilon(1e-12));
    }
}

TEST_CASE("binary macro one-vs-rest equals the plain binary AUC") {
    std::vector<int> labels = {1, 1, 1, 0, 0, 0};
    std::vector<double> p1 = {0.9, 0.4, 0.6, 0.5, 0.4, 0.1};
    Mat probs(6, 2);
    for (int i = 0; i < 6; ++i) {
        probs.at(i, 1) = p1[static_cast<size_t>(i)];
        probs.at(i, 0) = 1.0 - p1[static_cast<size_t>(i)];
    }
    CHECK(macro_ovr_auc(probs, labels) ==
          doctest::Approx(binary_auc(p1, labels)).epsilon(1e-12));
    CHECK_THROWS_WITH_AS((void)macro_ovr_auc(probs, {1, 1, 1, 1, 1, 1}),
                         doctest::Contains("single-category"), std::invalid_argument);
}

TEST_CASE("three-way macro AUC averages the per-class one-vs-rest values") {
    //               class probs                true
    Mat probs(6, 3);
    std::vector<std::vector<double>> rows = {
        {0.8, 0.1, 0.1}, {0.6, 0.3, 0.1}, {0.2, 0.7, 0.1},
        {0.1, 0.8, 0.1}, {0.3, 0.2, 0.5}, {0.1, 0.1, 0.8},
    };
    for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 3; ++j) probs.at(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
    }
    std::vector<int> labels = {0, 0, 1, 1, 2, 2};
    double want = 0.0;
    for (int k = 0; k < 3; ++k) {
        std::vector<double> s;
        std::vector<int> y;
        for (int i = 0; i < 6; ++i) {
            s.push_back(probs.at(i, k));
            y.push_back(labels[static_cast<size_t>(i)] == k ? 1 : 0);
        }
        want += oracle_auc(s, y);
    }
    CHECK(macro_ovr_auc(probs, labels) == doctest::Approx(want / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax rows are proper distributions and preserve order") {
    Mat logits(2, 3);
    logits.at(0, 0) = 1.0; logits.at(0, 1) = 3.0; logits.at(0, 2) = 2.0;
    logits.at(1, 0) = -500.0; logits.at(1, 1) = 500.0; logits.at(1, 2) = 0.0;
    Mat p = softmax_rows(logits);
    for (int i = 0; i < 2; ++i) {
        double s = 0.0;
        for (int j = 0; j < 3; ++j) s += p.at(i, j);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(p.at(0, 1) > p.at(0, 2));
    CHECK(p.at(0, 2) > p.at(0, 0));
    CHECK(p.at(1, 1) == doctest::Approx(1.0).epsilon(1e-9));  // extreme logits stay finite
}

TEST_CASE("perfect predictions give F1 and accuracy of one") {
    std::vector<int> labels = {0, 1, 2, 0, 1, 2};
    CHECK(macro_f1_score(labels, labels, 3) == doctest::Approx(1.0));
    CHECK(accuracy(labels, labels) == doctest::Approx(1.0));
}

TEST_CASE("macro F1 matches a hand-computed confusion table") {
    // truth:      0 0 0 1 1
    // predicted:  0 1 0 1 0
    std::vector<int> labels = {0, 0, 0, 1, 1};
    std::vector<int> preds = {0, 1, 0, 1, 0};
    // class 0: tp=2 fp=1 fn=1 -> f1 = 4/6; class 1: tp=1 fp=1 fn=1 -> f1 = 2/4.
    double want = 0.5 * (4.0 / 6.0 + 2.0 / 4.0);
    CHECK(macro_f1_score(preds, labels, 2) == doctest::Approx(want).epsilon(1e-12));
    CHECK(accuracy(preds, labels) == doctest::Approx(3.0 / 5.0).epsilon(1e-12));
}

TEST_CASE("classes without test support are excluded from the macro F1 average") {
    std::vector<int> labels = {0, 0, 1, 1};
    std::vector<int> preds = {0, 0, 1, 1};
    CHECK(macro_f1_score(preds, labels, 5) == doctest::Approx(1.0));
}

}  // TEST_SUITE
