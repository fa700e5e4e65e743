#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "sdar/errors.hpp"
#include "sdar/metrics.hpp"

using namespace sdar;

namespace {

// Acts (with a fresh value) on steps where t % n == 0, repeats otherwise.
EpisodeTrace nrep_trace(int n, int length, std::size_t dims) {
    EpisodeTrace tr;
    tr.initial_action.assign(dims, 0.0);
    std::vector<double> a(dims, 0.0);
    for (int t = 0; t < length; ++t) {
        const bool act = t % n == 0;
        if (act)
            for (std::size_t i = 0; i < dims; ++i) a[i] = std::sin(1.0 + t + 0.37 * static_cast<double>(i)) * 0.9;
        tr.actions.push_back(a);
        tr.schemas.emplace_back(dims, act ? 1 : 0);
        tr.rewards.push_back(1.0);
    }
    return tr;
}

}  // namespace

TEST_CASE("APR: no repeats gives 1") {
    const auto tr = nrep_trace(1, 50, 3);
    const std::vector<EpisodeTrace> v{tr};
    const auto r = apr(v);
    CHECK(r.p == 0.0);
    CHECK(r.apr == 1.0);
}

TEST_CASE("APR: N-Rep traces give exactly n") {
    for (int n : {2, 4}) {
        const std::vector<EpisodeTrace> v{nrep_trace(n, 200, 2), nrep_trace(n, 120, 2)};
        const auto r = apr(v);
        CHECK(std::abs(r.apr - n) < 1e-12);
        for (double d : r.apr_per_dim) CHECK(std::abs(d - n) < 1e-12);
    }
}

TEST_CASE("APR: p = 0.75 gives 4") {
    EpisodeTrace tr;
    tr.initial_action = {0.0};
    const double seq[] = {0.1, 0.1, 0.1, 0.1, 0.2, 0.2, 0.2, 0.2};
    for (double x : seq) {
        tr.actions.push_back({x});
        tr.schemas.push_back({1});
        tr.rewards.push_back(0.0);
    }
    const std::vector<EpisodeTrace> v{tr};
    const auto r = apr(v);
    CHECK(r.p == 0.75);
    CHECK(r.apr == 4.0);
}

TEST_CASE("APR: all-repeat after the first step equals the episode length") {
    EpisodeTrace tr;
    tr.initial_action = {0.0, 0.0};
    for (int t = 0; t < 37; ++t) {
        tr.actions.push_back({0.4, -0.1});
        tr.schemas.push_back({static_cast<std::uint8_t>(t == 0), static_cast<std::uint8_t>(t == 0)});
        tr.rewards.push_back(0.0);
    }
    const std::vector<EpisodeTrace> v{tr};
    CHECK(std::abs(apr(v).apr - 37.0) < 1e-12);
}

TEST_CASE("APR: fully constant trajectories report the mean episode length") {
    EpisodeTrace tr;
    tr.initial_action = {0.0};
    for (int t = 0; t < 10; ++t) {
        tr.actions.push_back({0.0});
        tr.schemas.push_back({0});
        tr.rewards.push_back(0.0);
    }
    const std::vector<EpisodeTrace> v{tr};
    const auto r = apr(v);
    CHECK(r.p == 1.0);
    CHECK(r.apr == 10.0);
}

TEST_CASE("APR: per-dimension p averages back to the pooled p") {
    EpisodeTrace tr;
    tr.initial_action = {0.0, 0.0, 0.0};
    for (int t = 0; t < 60; ++t) {
        tr.actions.push_back({t % 2 ? 0.5 : -0.5, t % 3 ? 0.1 : 0.2 + 0.001 * t, 0.3});
        tr.schemas.push_back({1, 1, 1});
        tr.rewards.push_back(0.0);
    }
    const std::vector<EpisodeTrace> v{tr};
    const auto r = apr(v);
    const double mean = (r.p_per_dim[0] + r.p_per_dim[1] + r.p_per_dim[2]) / 3.0;
    CHECK(std::abs(mean - r.p) < 1e-12);
}

TEST_CASE("APR ignores rewards; tolerance option") {
    auto tr = nrep_trace(4, 40, 1);
    const std::vector<EpisodeTrace> a{tr};
    for (auto& r : tr.rewards) r *= -300.0;
    const std::vector<EpisodeTrace> b{tr};
    CHECK(apr(a).apr == apr(b).apr);

    EpisodeTrace q;
    q.initial_action = {0.0};
    for (int t = 0; t < 4; ++t) {
        q.actions.push_back({0.5 + 1e-9 * t});
        q.schemas.push_back({1});
        q.rewards.push_back(0.0);
    }
    const std::vector<EpisodeTrace> v{q};
    CHECK(apr(v).p == 0.0);
    CHECK(apr(v, AprOptions{1e-6}).p == 0.75);
}

TEST_CASE("AFR examples") {
    EpisodeTrace c;
    c.initial_action = {0.2};
    for (int t = 0; t < 5; ++t) {
        c.actions.push_back({0.2});
        c.schemas.push_back({0});
        c.rewards.push_back(0.0);
    }
    const std::vector<EpisodeTrace> vc{c};
    CHECK(afr(vc) == 0.0);

    EpisodeTrace alt;
    alt.initial_action = {-1.0};
    for (int t = 0; t < 6; ++t) {
        alt.actions.push_back({t % 2 ? -1.0 : 1.0});
        alt.schemas.push_back({1});
        alt.rewards.push_back(0.0);
    }
    const std::vector<EpisodeTrace> va{alt};
    CHECK(afr(va) == 2.0);

    EpisodeTrace d;
    d.initial_action = {-0.3, -0.4};
    d.actions.push_back({0.0, 0.0});
    d.schemas.push_back({1, 1});
    d.rewards.push_back(0.0);
    // The test range only allows |a| <= 1, so scale the 3-4-5 triangle by 0.1.
    const std::vector<EpisodeTrace> vd{d};
    CHECK(std::abs(afr(vd) - 0.5) < 1e-15);
    CHECK(std::abs(afr(vd, AfrNorm::mean_abs) - 0.35) < 1e-15);
}

TEST_CASE("AFR of concatenated traces is the length-weighted mean") {
    const auto a = nrep_trace(1, 30, 2);
    const auto b = nrep_trace(3, 70, 2);
    const std::vector<EpisodeTrace> va{a};
    const std::vector<EpisodeTrace> vb{b};
    const std::vector<EpisodeTrace> both{a, b};
    CHECK(std::abs(afr(both) - (30 * afr(va) + 70 * afr(vb)) / 100.0) < 1e-12);
}

TEST_CASE("n-score") {
    CHECK(n_score(-50.0, {-50.0, 150.0}) == 0.0);
    CHECK(n_score(150.0, {-50.0, 150.0}) == 1.0);
    CHECK(n_score(100.0, {-50.0, 150.0}) == 0.75);
    CHECK(n_score(100.0 + 7.5, {-50.0 + 7.5, 150.0 + 7.5}) == doctest::Approx(0.75).epsilon(1e-15));
    CHECK_THROWS_AS(n_score(1.0, {2.0, 2.0}), ConfigError);
}

TEST_CASE("AUC") {
    const std::vector<std::pair<double, double>> flat{{0, 3.5}, {10, 3.5}, {25, 3.5}};
    CHECK(auc(flat) == 3.5);
    const std::vector<std::pair<double, double>> ramp{{100, 0.0}, {300, 1.0}};
    CHECK(auc(ramp) == 0.5);
    CHECK_THROWS_AS(auc(std::vector<std::pair<double, double>>{{0, 1}}), PreconditionError);
    CHECK_THROWS_AS(auc(std::vector<std::pair<double, double>>{{0, 1}, {0, 2}}), PreconditionError);

    // Piecewise-linear curve against dense sampling of its interpolant.
    const std::vector<std::pair<double, double>> pw{{0, 0.0}, {1, 2.0}, {3, -1.0}, {7, 4.0}, {8, 4.0}};
    const int grid = 800000;
    double sum = 0.0;
    for (int i = 0; i < grid; ++i) {
        const double x = 8.0 * (i + 0.5) / grid;
        std::size_t k = 0;
        while (pw[k + 1].first < x) ++k;
        const double t = (x - pw[k].first) / (pw[k + 1].first - pw[k].first);
        sum += pw[k].second + t * (pw[k + 1].second - pw[k].second);
    }
    CHECK(auc(pw) == doctest::Approx(sum / grid).epsilon(1e-9));
}

TEST_CASE("best-normalized scores") {
    const std::vector<double> v{2.0, 8.0, 4.0};
    const auto n = best_normalized(v);
    CHECK(n[1] == 1.0);
    CHECK(n[0] == 0.25);
    CHECK_THROWS_AS(best_normalized(std::vector<double>{0.0, 0.0}), ConfigError);
    const auto neg = best_normalized(std::vector<double>{-4.0, -1.0, -2.0});
    CHECK(neg == std::vector<double>{0.25, 1.0, 0.5});
}

TEST_CASE("selection trace export") {
    const auto dir = std::filesystem::temp_directory_path() / "sdar_trace_test";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "t.csv").string();

    const auto all_act = nrep_trace(1, 12, 3);
    export_selection_trace(all_act, path);
    for (const auto& row : read_selection_trace(path))
        for (auto b : row) CHECK(b == 1);

    const auto two = nrep_trace(2, 11, 2);
    export_selection_trace(two, path);
    const auto parsed = read_selection_trace(path);
    REQUIRE(parsed.size() == 11);
    for (std::size_t t = 0; t < parsed.size(); ++t)
        for (auto b : parsed[t]) CHECK(b == (t % 2 == 0 ? 1 : 0));
    CHECK(parsed == two.schemas);
    std::filesystem::remove_all(dir);
}
