#include "helpers.hpp"

#include "scdd/checkpoint.hpp"
#include "scdd/config.hpp"
#include "scdd/error.hpp"

#include <doctest.h>
#include <limits>
#include <sstream>

using namespace scdd;

namespace {

RunConfig parse(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

Checkpoint awkward_checkpoint(Rng& rng) {
    Checkpoint c;
    c.schedule = NoiseSchedule::peak_shifted(0.15, 0.3, 1.2);
    c.T = 321;
    c.step = 4567;
    const ModelDims dims{5, 3, 4};
    c.params = DenoiserParams::init(dims, rng, 0.7);
    c.params.w1(0, 0) = 1.0 / 3.0;
    c.params.w1(0, 1) = -0.0;
    c.params.w1(0, 2) = std::numeric_limits<double>::denorm_min();
    c.params.w1(0, 3) = std::numeric_limits<double>::max();
    c.params.b1(1, 0) = -std::numeric_limits<double>::min();
    c.optimizer = OptimizerState::init(c.params);
    c.optimizer.step_count = 4567;
    for (Matrix* m : c.optimizer.m1.tensors()) {
        for (double& v : m->data) {
            v = (uniform01(rng) - 0.5) * 1e-7;
        }
    }
    for (Matrix* m : c.optimizer.m2.tensors()) {
        for (double& v : m->data) {
            v = uniform01(rng) * 1e-13;
        }
    }
    return c;
}

} // namespace

TEST_CASE("config defaults") {
    const auto cfg = parse("");
    CHECK(cfg.schedule.kind == ScheduleKind::GiddAligned);
    CHECK(cfg.schedule.p_u == 0.2);
    CHECK(cfg.T == 1000);
    CHECK(cfg.train.dims.K == 16);
    CHECK(cfg.L == 8);
    CHECK(cfg.train.dims.d == 32);
    CHECK(cfg.train.dims.h == 64);
    CHECK(cfg.train.batch == 64);
    CHECK(cfg.train.lr == 3e-3);
    CHECK(cfg.train.warmup == 200);
    CHECK(cfg.train.steps == 20000);
    CHECK(cfg.sample_steps == std::vector<int>{8, 16, 32, 64});
    CHECK_FALSE(cfg.nucleus_p.has_value());
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("config parsing") {
    const auto cfg = parse("# comment\n"
                           "schedule_kind = peak_shifted   # trailing\n"
                           "p_u = 0.1\n"
                           "t_peak = 0.75\n"
                           "\n"
                           "T=64\n"
                           "K = 6\n"
                           "sample_steps = 4, 8\n"
                           "nucleus_p = 0.9\n"
                           "seed = 18446744073709551615\n"
                           "use_ema = true\n");
    CHECK(cfg.schedule.kind == ScheduleKind::PeakShifted);
    CHECK(cfg.schedule.p_u == 0.1);
    CHECK(cfg.schedule.t_peak == 0.75);
    CHECK(cfg.T == 64);
    CHECK(cfg.train.dims.K == 6);
    CHECK(cfg.sample_steps == std::vector<int>{4, 8});
    CHECK(*cfg.nucleus_p == 0.9);
    CHECK(cfg.seed == 18446744073709551615ULL);
    CHECK(cfg.use_ema);

    const auto mo = parse("schedule_kind = mask_only\nmask_alpha = cosine\n");
    CHECK(mo.schedule.kind == ScheduleKind::MaskOnly);
    CHECK(eval_schedule(mo.schedule, 0.5).gamma == doctest::Approx(std::cos(M_PI / 4)));
    CHECK(eval_schedule(mo.schedule, 0.5).rho == 1.0);
}

TEST_CASE("config errors") {
    CHECK_THROWS_AS(parse("bogus = 1\n"), ParseError);
    CHECK_THROWS_AS(parse("T = 5\nT = 6\n"), ParseError);
    CHECK_THROWS_AS(parse("T = five\n"), ParseError);
    CHECK_THROWS_AS(parse("T 5\n"), ParseError);
    CHECK_THROWS_AS(parse("p_u = 1.0\n"), InvalidSchedule);
    CHECK_THROWS_AS(parse("schedule_kind = cosine\n"), Error);
    CHECK_THROWS_AS(parse("T = 0\n").validate(), InvalidArgument);
    CHECK_THROWS_AS(parse("nucleus_p = 0\n").validate(), InvalidArgument);
    CHECK_THROWS_AS(parse("source_kind = constant\nsource_token = 16\n").validate(), InvalidArgument);
    CHECK_THROWS_AS(parse("sample_steps = 8, 0\n").validate(), InvalidArgument);
    CHECK_THROWS_AS(load_config("/nonexistent/scdd.cfg"), ParseError);
}

TEST_CASE("checkpoint round trip is bit exact") {
    Rng rng(1);
    const auto c = awkward_checkpoint(rng);
    std::stringstream ss;
    write_checkpoint(ss, c);
    CHECK(ss.str().rfind(std::string(kCheckpointHeader) + "\n", 0) == 0);
    const auto back = read_checkpoint(ss);
    CHECK(bit_equal(c, back));
    CHECK(back.T == 321);
    CHECK(back.step == 4567);
    CHECK(back.schedule.kind == ScheduleKind::PeakShifted);
    CHECK(back.schedule.t_peak == 0.3);
    CHECK(std::signbit(back.params.w1(0, 1)));

    std::stringstream again;
    write_checkpoint(again, back);
    CHECK(again.str() == ss.str());

    auto changed = back;
    changed.optimizer.m2.b2(0, 0) = std::nextafter(changed.optimizer.m2.b2(0, 0), 1.0);
    CHECK_FALSE(bit_equal(c, changed));
}

TEST_CASE("mask-only checkpoint keeps its survival function") {
    Checkpoint c;
    c.schedule = NoiseSchedule::mask_only("cosine");
    c.T = 10;
    c.params = DenoiserParams::zeros(ModelDims{3, 2, 2});
    c.optimizer = OptimizerState::init(c.params);
    std::stringstream ss;
    write_checkpoint(ss, c);
    const auto back = read_checkpoint(ss);
    CHECK(back.schedule.kind == ScheduleKind::MaskOnly);
    CHECK(eval_schedule(back.schedule, 0.3).gamma == eval_schedule(c.schedule, 0.3).gamma);
}

TEST_CASE("corrupt checkpoints are rejected") {
    Rng rng(2);
    std::stringstream ss;
    write_checkpoint(ss, awkward_checkpoint(rng));
    const std::string good = ss.str();

    auto reject = [](const std::string& text) {
        std::istringstream in(text);
        CHECK_THROWS_AS(read_checkpoint(in), ParseError);
    };
    reject("SCDD-CKPT v2" + good.substr(good.find('\n')));
    reject("garbage\n");
    reject("");
    reject(good.substr(0, good.size() / 2));
    const auto pos = good.find("tensor params.w1 4 8");
    REQUIRE(pos != std::string::npos);
    std::string reshaped = good;
    reshaped.replace(pos, 20, "tensor params.w1 8 4");
    reject(reshaped);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/checkpoint.txt"), ParseError);
}
