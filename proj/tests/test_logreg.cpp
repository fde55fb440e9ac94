#include "skinbias/logreg.hpp"

#include "skinbias/common.hpp"
#include "skinbias/metrics.hpp"

#include "doctest.h"

#include <cmath>
#include <set>

using namespace skinbias;
using namespace skinbias::logreg;

namespace {

double naive_loss(const Vector& w, double b, double C, const Matrix& X, const std::vector<int>& y) {
    double loss = 0.5 * w.squaredNorm();
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const double z = (2 * y[i] - 1) * (X.row(i).dot(w) + b);
        loss += C * std::log1p(std::exp(-z));
    }
    return loss;
}

struct Instance {
    Matrix X;
    std::vector<int> y;
};

Instance random_instance(Rng& rng, int n, int d, double signal = 0.0) {
    Instance inst{Matrix(n, d), std::vector<int>(n)};
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) inst.X(i, j) = rng.uniform(-2, 2);
        const double p = 1.0 / (1.0 + std::exp(-signal * inst.X(i, 0)));
        inst.y[i] = rng.uniform() < p ? 1 : 0;
    }
    inst.y[0] = 0, inst.y[1] = 1;
    return inst;
}

}  // namespace

TEST_SUITE("logreg") {

TEST_CASE("softplus and sigmoid are stable") {
    CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)));
    CHECK(softplus(1000.0) == doctest::Approx(1000.0));
    CHECK(softplus(-1000.0) >= 0.0);
    CHECK(softplus(-1000.0) < 1e-300);
    CHECK(sigmoid(0.0) == 0.5);
    CHECK(sigmoid(1000.0) == 1.0);
    CHECK(sigmoid(-1000.0) == doctest::Approx(0.0));
    CHECK(std::isfinite(sigmoid(-1000.0)));
}

TEST_CASE("loss at the origin") {
    Matrix X(4, 2);
    X << 1, 2, -1, 0.5, 3, -2, 0, 1;
    const std::vector<int> y = {0, 1, 1, 0};
    const auto lg = loss_and_gradient(Vector::Zero(2), 0.0, 2.0, X, y);
    CHECK(lg.loss == doctest::Approx(2.0 * 4 * std::log(2.0)).epsilon(1e-15));
    CHECK(lg.grad_bias == doctest::Approx(0.0).epsilon(1e-15));
    CHECK_THROWS_AS(loss_and_gradient(Vector::Zero(3), 0.0, 1.0, X, y), Error);
    const std::vector<int> short_y = {0, 1};
    CHECK_THROWS_AS(loss_and_gradient(Vector::Zero(2), 0.0, 1.0, X, short_y), Error);
}

TEST_CASE("loss matches a naive sum and survives large margins") {
    Rng rng(1);
    auto inst = random_instance(rng, 30, 4);
    Vector w(4);
    w << 0.3, -1.2, 0.7, 2.0;
    CHECK(loss_and_gradient(w, 0.4, 1.7, inst.X, inst.y).loss ==
          doctest::Approx(naive_loss(w, 0.4, 1.7, inst.X, inst.y)).epsilon(1e-12));
    const auto big = loss_and_gradient(w * 500.0, 0.0, 1.0, inst.X, inst.y);
    CHECK(std::isfinite(big.loss));
    CHECK(big.grad_weights.allFinite());
}

TEST_CASE("gradient matches central differences") {
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const int d = 1 + static_cast<int>(rng.below(8));
        auto inst = random_instance(rng, 20 + static_cast<int>(rng.below(50)), d);
        Vector w(d);
        for (int j = 0; j < d; ++j) w(j) = rng.uniform(-2, 2);
        const double b = rng.uniform(-1, 1), C = std::exp(rng.uniform(-3, 2));
        const auto lg = loss_and_gradient(w, b, C, inst.X, inst.y);
        const double h = 1e-5;
        for (int j = 0; j < d; ++j) {
            Vector wp = w, wm = w;
            wp(j) += h, wm(j) -= h;
            const double fd = (loss_and_gradient(wp, b, C, inst.X, inst.y).loss -
                               loss_and_gradient(wm, b, C, inst.X, inst.y).loss) / (2 * h);
            CHECK(std::fabs(fd - lg.grad_weights(j)) <= 1e-5 * std::max(1.0, std::fabs(fd)));
        }
        const double fd_b = (loss_and_gradient(w, b + h, C, inst.X, inst.y).loss -
                             loss_and_gradient(w, b - h, C, inst.X, inst.y).loss) / (2 * h);
        CHECK(std::fabs(fd_b - lg.grad_bias) <= 1e-5 * std::max(1.0, std::fabs(fd_b)));
    }
}

TEST_CASE("small C is dominated by the penalty") {
    Rng rng(3);
    auto inst = random_instance(rng, 50, 3);
    Vector w(3);
    w << 1, -2, 0.5;
    const auto lg = loss_and_gradient(w, 0.0, 1e-9, inst.X, inst.y);
    CHECK(lg.loss == doctest::Approx(0.5 * w.squaredNorm()).epsilon(1e-6));
}

TEST_CASE("separable 1-D data") {
    Matrix X(2, 1);
    X << -1, 1;
    const std::vector<int> y = {0, 1};
    const auto [model, report] = fit(X, y, 5.0);
    const auto p = predict_proba(model, X);
    CHECK(p[0] < 0.2);
    CHECK(p[1] > 0.8);
    CHECK(report.converged);
    // Stationarity: w = 2C sigmoid(-w) with b = 0.
    const double w = model.weights(0);
    CHECK(w == doctest::Approx(10.0 * sigmoid(-w)).epsilon(1e-6));
    CHECK(std::fabs(model.bias) < 1e-8);
}

TEST_CASE("noise labels give small weights") {
    Rng rng(4);
    const int n = 400;
    Matrix X(n, 3);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < 3; ++j) X(i, j) = rng.uniform(-1, 1);
        y[i] = i % 2;
    }
    const auto [model, report] = fit(X, y, 0.01);
    CHECK(model.weights.norm() < 0.2);
    const auto p = predict_proba(model, X);
    const auto auc = metrics::auroc(p, y);
    REQUIRE(auc);
    CHECK(std::fabs(*auc - 0.5) < 0.1);
}

TEST_CASE("duplicated data with half C has the same optimum") {
    Rng rng(5);
    auto inst = random_instance(rng, 60, 3, 2.0);
    Matrix X2(120, 3);
    X2 << inst.X, inst.X;
    std::vector<int> y2 = inst.y;
    y2.insert(y2.end(), inst.y.begin(), inst.y.end());
    FitOptions opt;
    opt.tolerance = 1e-10;
    const auto a = fit(inst.X, inst.y, 1.0, opt).first;
    const auto b = fit(X2, y2, 0.5, opt).first;
    for (int j = 0; j < 3; ++j) CHECK(b.weights(j) == doctest::Approx(a.weights(j)).epsilon(1e-7));
    CHECK(b.bias == doctest::Approx(a.bias).epsilon(1e-7));
}

TEST_CASE("fit is deterministic and converges") {
    Rng rng(6);
    auto inst = random_instance(rng, 200, 5, 1.5);
    const auto [m1, r1] = fit(inst.X, inst.y, 0.5);
    const auto [m2, r2] = fit(inst.X, inst.y, 0.5);
    CHECK(m1.weights == m2.weights);
    CHECK(m1.bias == m2.bias);
    CHECK(r1.converged);
    CHECK(r1.gradient_norm < 1e-6);
    for (std::size_t i = 1; i < r1.loss_history.size(); ++i) CHECK(r1.loss_history[i] <= r1.loss_history[i - 1]);
    CHECK(loss_and_gradient(m1.weights, m1.bias, 0.5, inst.X, inst.y).loss == doctest::Approx(r1.final_loss));
}

TEST_CASE("fit rejects bad input") {
    Matrix X(3, 1);
    X << 1, 2, 3;
    const std::vector<int> same = {1, 1, 1};
    CHECK_THROWS_AS(fit(X, same, 1.0), Error);
    Matrix bad(2, 1);
    bad << 1, std::numeric_limits<double>::quiet_NaN();
    const std::vector<int> y = {0, 1};
    CHECK_THROWS_AS(fit(bad, y, 1.0), Error);
}

TEST_CASE("prediction") {
    LRModel m;
    m.weights = Vector::Zero(2);
    m.feature_names = {"a", "b"};
    Matrix X(3, 2);
    X << 1, 2, 3, 4, -5, 6;
    for (double p : predict_proba(m, X)) CHECK(p == 0.5);
    m.bias = 30.0;
    for (double p : predict_proba(m, X)) CHECK(p > 1 - 1e-9);
    CHECK_THROWS_AS(predict_proba(m, X, {"b", "a"}), Error);
    CHECK_NOTHROW(predict_proba(m, X, {"a", "b"}));

    // Fixed model, values from the sigmoid of the affine score.
    m.weights << 0.5, -0.25;
    m.bias = 0.1;
    const auto p = predict_proba(m, X);
    CHECK(p[0] == doctest::Approx(1 / (1 + std::exp(-(0.5 - 0.5 + 0.1)))).epsilon(1e-15));
    CHECK(p[1] == doctest::Approx(1 / (1 + std::exp(-(1.5 - 1.0 + 0.1)))).epsilon(1e-15));
    CHECK(p[2] == doctest::Approx(1 / (1 + std::exp(-(-2.5 - 1.5 + 0.1)))).epsilon(1e-15));
}

TEST_CASE("group stratified folds") {
    Rng rng(7);
    std::vector<std::string> groups;
    std::vector<int> y;
    for (int p = 0; p < 60; ++p) {
        const int lesions = 1 + static_cast<int>(rng.below(3));
        for (int k = 0; k < lesions; ++k) {
            groups.push_back("P" + std::to_string(p));
            y.push_back(p % 3 == 0);
        }
    }
    const auto folds = group_stratified_folds(groups, y, 5, 11);
    REQUIRE(folds.size() == groups.size());
    std::map<std::string, std::set<int>> of;
    std::map<int, int> pos, total;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        of[groups[i]].insert(folds[i]);
        pos[folds[i]] += y[i];
        ++total[folds[i]];
    }
    for (const auto& [g, f] : of) CHECK(f.size() == 1);
    CHECK(total.size() == 5);
    for (const auto& [f, p] : pos) CHECK(p > 0);
    CHECK(group_stratified_folds(groups, y, 5, 11) == folds);
}

TEST_CASE("grid search") {
    Rng rng(8);
    std::vector<std::string> groups;
    for (int i = 0; i < 200; ++i) groups.push_back("P" + std::to_string(i / 2));

    SUBCASE("single value") {
        auto inst = random_instance(rng, 200, 3, 1.0);
        const auto r = grid_search(inst.X, inst.y, groups, {0.7}, 5, 1);
        CHECK(r.best_C == 0.7);
    }
    SUBCASE("ties go to the smallest C") {
        // One feature: AUROC is rank based and the sign of w is fixed by the
        // data, so every C scores the same.
        auto inst = random_instance(rng, 200, 1, 2.0);
        const auto r = grid_search(inst.X, inst.y, groups, {5.0, 0.01, 1.0}, 5, 1);
        CHECK(r.grid_scores.size() == 3);
        CHECK(r.grid_scores.at(0.01) == r.grid_scores.at(5.0));
        CHECK(r.best_C == 0.01);
    }
    SUBCASE("strong signal prefers weaker regularisation") {
        Instance inst{Matrix(200, 6), std::vector<int>(200)};
        for (int i = 0; i < 200; ++i) {
            for (int j = 0; j < 6; ++j) inst.X(i, j) = rng.uniform(-1, 1) * (j == 0 ? 0.05 : 1.0);
            inst.y[i] = inst.X(i, 0) + 0.005 * rng.uniform(-1, 1) > 0;
        }
        const auto r = grid_search(inst.X, inst.y, groups, {0.01, 0.05, 0.1, 0.5, 1, 2, 5}, 5, 3);
        CHECK(r.best_C > 0.01);
        CHECK(r.grid_scores.at(r.best_C) > r.grid_scores.at(0.01));
    }
}

TEST_CASE("model json") {
    Matrix X(2, 1);
    X << -1, 1;
    const std::vector<int> y = {0, 1};
    const auto [model, report] = fit(X, y, 5.0, {}, {"f"});
    const auto j = to_json(model, report);
    CHECK(j.find("\"weights\"") != std::string::npos);
    CHECK(j.find("\"f\"") != std::string::npos);
}

}
