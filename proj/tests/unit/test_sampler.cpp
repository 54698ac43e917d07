#include "helpers.hpp"

#include "scdd/error.hpp"
#include "scdd/sampler.hpp"
#include "scdd/verification.hpp"

#include <doctest.h>
#include <sstream>

using namespace scdd;
using testing::dist;

namespace {

SampleTrace hand_trace(int L, int T, std::vector<int> steps) {
    SampleTrace trace;
    trace.L = L;
    trace.T = T;
    for (int s : steps) {
        trace.corrections.push_back({s, 1, 0, 2});
    }
    return trace;
}

} // namespace

TEST_CASE("one-step grid with a uniform denoiser samples uniformly") {
    const Vocab vocab(4);
    const testing::FixedDenoiser uniform(4, TokenDist::uniform_clean(vocab));
    const auto grid = discretize(NoiseSchedule::gidd_aligned(0.2), 1);
    Rng rng(1);
    const int n = 40000;
    std::vector<double> counts(4, 0.0);
    for (int i = 0; i < n; ++i) {
        const auto trace = sample(uniform, grid, 1, rng);
        REQUIRE(trace.final_seq.size() == 1);
        REQUIRE(trace.final_seq[0] < 4);
        counts[trace.final_seq[0]] += 1;
    }
    const double sigma = std::sqrt(0.25 * 0.75 / n);
    for (double c : counts) {
        CHECK(std::abs(c / n - 0.25) <= 3 * sigma);
    }
}

TEST_CASE("traces start all-mask, end mask-free and never remask") {
    Rng rng(2);
    const auto grid = discretize(NoiseSchedule::gidd_aligned(0.2), 32);
    for (int i = 0; i < 50; ++i) {
        const auto den = random_denoiser(6, rng);
        const auto trace = sample(den, grid, 8, rng, i % 2 ? std::optional<double>(0.9) : std::nullopt);
        CHECK(trace.steps.size() >= 33);
        for (Token v : trace.steps.front().z) {
            CHECK(v == 6);
        }
        CHECK(trace.steps.front().t == 1.0);
        for (Token v : trace.final_seq) {
            CHECK(v < 6);
        }
        CHECK(trace.remaskings == 0);
        for (const auto& e : trace.corrections) {
            CHECK(e.from < 6);
            CHECK(e.to < 6);
            CHECK(e.from != e.to);
            CHECK(e.step >= 1);
            CHECK(e.step <= 32);
        }
        for (std::size_t s = 1; s < trace.steps.size(); ++s) {
            for (std::size_t l = 0; l < 8; ++l) {
                if (trace.steps[s - 1].z[l] != 6) {
                    CHECK(trace.steps[s].z[l] != 6);
                }
            }
        }
    }
}

TEST_CASE("sampling is deterministic under a seed") {
    Rng init(3);
    const auto den = random_denoiser(5, init);
    const auto grid = discretize(NoiseSchedule::peak_shifted(0.3, 0.6), 16);
    Rng a(99), b(99);
    const auto ta = sample(den, grid, 6, a);
    const auto tb = sample(den, grid, 6, b);
    CHECK(ta.final_seq == tb.final_seq);
    CHECK(ta.corrections == tb.corrections);
    REQUIRE(ta.steps.size() == tb.steps.size());
    for (std::size_t i = 0; i < ta.steps.size(); ++i) {
        CHECK(ta.steps[i].z == tb.steps[i].z);
    }
}

TEST_CASE("mask-only schedule never corrects") {
    Rng rng(4);
    const auto grid = discretize(NoiseSchedule::mask_only("linear"), 16);
    for (int i = 0; i < 100; ++i) {
        const auto den = random_denoiser(6, rng);
        const auto trace = sample(den, grid, 8, rng);
        CHECK(trace.corrections.empty());
        CHECK(trace.unmaskings == 8);
    }
}

TEST_CASE("correction rate examples") {
    const auto trace = hand_trace(4, 8, {3, 7});
    CHECK(correction_rate(trace) == 0.5);
    CHECK(correction_rate_per_step(trace, 8) == 0.0625);
    const auto doubled = hand_trace(4, 16, {3, 7});
    CHECK(correction_rate_per_step(doubled, 16) == 0.03125);
    CHECK_THROWS_AS(correction_rate_per_step(trace, 16), InvalidArgument);

    const auto none = hand_trace(4, 8, {});
    CHECK(correction_rate(none) == 0.0);
    CHECK(correction_rate_per_step(none, 8) == 0.0);
}

TEST_CASE("cumulative correction curve") {
    const auto curve = cumulative_correction_curve(hand_trace(4, 8, {3, 7}));
    REQUIRE(curve.size() == 8);
    const double expect[] = {0, 0, 0.5, 0.5, 0.5, 0.5, 1.0, 1.0};
    for (int s = 0; s < 8; ++s) {
        CHECK(curve[s].first == s + 1);
        CHECK(curve[s].second == expect[s]);
    }
    for (const auto& [step, f] : cumulative_correction_curve(hand_trace(4, 8, {}))) {
        CHECK(f == 0.0);
    }

    const std::vector<SampleTrace> traces{hand_trace(4, 4, {1}), hand_trace(4, 4, {4, 4, 2})};
    const auto pooled = pooled_correction_curve(traces);
    REQUIRE(pooled.size() == 4);
    CHECK(pooled[0].second == 0.25);
    CHECK(pooled[1].second == 0.5);
    CHECK(pooled[2].second == 0.5);
    CHECK(pooled[3].second == 1.0);
}

TEST_CASE("sampled curves are monotone and end at 0 or 1") {
    Rng rng(5);
    const auto grid = discretize(NoiseSchedule::gidd_aligned(0.4), 24);
    for (int i = 0; i < 30; ++i) {
        const auto trace = sample(random_denoiser(4, rng), grid, 8, rng);
        const auto curve = cumulative_correction_curve(trace);
        REQUIRE(curve.size() == 24);
        for (std::size_t s = 1; s < curve.size(); ++s) {
            CHECK(curve[s].second >= curve[s - 1].second);
        }
        CHECK((curve.back().second == 1.0 || curve.back().second == 0.0));
        CHECK((curve.back().second == 1.0) == !trace.corrections.empty());
    }
}

TEST_CASE("nucleus filter") {
    const auto p = dist({0.15, 0.6, 0.25, 0.0});
    const auto f = nucleus_filter(p, 0.8);
    CHECK(f[0] == 0.0);
    CHECK(f[1] == doctest::Approx(0.6 / 0.85));
    CHECK(f[2] == doctest::Approx(0.25 / 0.85));
    CHECK(f[3] == 0.0);

    const auto top = nucleus_filter(p, 0.1);
    CHECK(top[1] == 1.0);
    CHECK(nucleus_filter(p, 1.0).probs == p.probs);

    const auto tie = nucleus_filter(dist({0.4, 0.2, 0.4, 0.0}), 0.3);
    CHECK(tie[0] == 1.0);
    CHECK(tie[2] == 0.0);

    CHECK_THROWS_AS(nucleus_filter(p, 0.0), InvalidArgument);
    CHECK_THROWS_AS(nucleus_filter(p, 1.5), InvalidArgument);
    const Vocab vocab(3);
    const testing::FixedDenoiser den(3, p);
    Rng rng(0);
    CHECK_THROWS_AS(sample(den, discretize(NoiseSchedule::gidd_aligned(0.2), 4), 2, rng, -0.2), InvalidArgument);
    CHECK_THROWS_AS(sample(den, discretize(NoiseSchedule::gidd_aligned(0.2), 4), 0, rng), InvalidArgument);
}

TEST_CASE("nucleus sampling with a tiny p emits only the top token") {
    const testing::FixedDenoiser den(3, dist({0.2, 0.5, 0.3, 0.0}));
    const auto grid = discretize(NoiseSchedule::gidd_aligned(0.2), 8);
    Rng rng(6);
    for (int i = 0; i < 50; ++i) {
        const auto trace = sample(den, grid, 5, rng, 0.05);
        for (Token v : trace.final_seq) {
            CHECK(v == 1);
        }
    }
}

TEST_CASE("trace export format") {
    SampleTrace trace;
    trace.L = 2;
    trace.T = 2;
    trace.steps = {{1.0, {3, 3}}, {0.5, {0, 3}}, {0.0, {1, 2}}};
    trace.corrections = {{2, 0, 0, 1}};
    trace.final_seq = {1, 2};
    std::ostringstream out;
    write_trace(out, trace);
    CHECK(out.str() == "3 3\n0 3\n1 2\n# 2 0 0 1\n");
}
