#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>

#include "editground/error.hpp"
#include "editground/harness.hpp"
#include "editground/synthetic.hpp"
#include "editground/tensor_io.hpp"
#include "support/oracles.hpp"

using namespace editground;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an editground::Error");
    return ErrorKind::io;
}

PlantSuite small_suite(std::size_t count) {
    PlantSuite suite;
    suite.name = "harness";
    for (std::size_t i = 0; i < count; ++i) suite.seeds.push_back(100 + i);
    return suite;
}

}  // namespace

TEST_CASE("build_instruction") {
    CHECK(build_instruction("the red car") == "remove the red car");
    CHECK(build_instruction("  dog on the left \n") == "remove dog on the left");
    CHECK(kind_of([] { build_instruction("   "); }) == ErrorKind::validation);
}

TEST_CASE("default_feature_block") {
    CHECK(default_feature_block("flux") == 20);
    CHECK(default_feature_block("step1x") == 40);
    CHECK_FALSE(default_feature_block("synthetic").has_value());
}

TEST_CASE("parallel_for visits every index once") {
    for (std::size_t workers : {1u, 2u, 7u}) {
        std::vector<std::atomic<int>> hits(101);
        parallel_for(hits.size(), workers, [&](std::size_t i) { hits[i]++; });
        for (const auto& h : hits) CHECK(h.load() == 1);
    }
}

TEST_CASE("config echo round-trips") {
    RunConfig c;
    c.segment.tau = 0.7;
    c.segment.blocks = BlockSelection::parse("1,3");
    c.segment.feature_block = 12;
    c.segment.mode = LocalizationMode::cam_binarize;
    c.segment.upsample = UpsamplePath::full_feature;
    c.attention_timestep = 4;
    c.workers = 3;
    const auto echo = c.echo_json();
    CHECK(echo.find("workers") == std::string::npos);
    const auto back = RunConfig::from_json(echo);
    CHECK(back.echo_json() == echo);
    CHECK(back.segment.tau == 0.7);
    CHECK(back.segment.feature_block == 12);
    CHECK(RunConfig::from_json(R"({"config":)" + echo + "}").echo_json() == echo);
}

TEST_CASE("run_eval") {
    oracle::TempDir dir("harness_eval");
    auto suite = small_suite(6);
    suite.base.hotspots = 0;
    suite.base.feat_noise = 0.0;
    auto manifest = write_plant_suite(suite, dir.path());

    SUBCASE("clean plants are recovered") {
        const auto report = run_eval(manifest, {});
        REQUIRE(report.aggregate);
        CHECK(report.failures == 0);
        CHECK(report.aggregate->count == 6);
        CHECK(report.aggregate->oiou >= 0.97);
        CHECK(report.samples[0].instruction == "remove " + manifest[0].expression);
    }
    SUBCASE("reports do not depend on the worker count") {
        RunConfig one, four;
        one.workers = 1;
        four.workers = 4;
        const auto a = run_eval(manifest, one), b = run_eval(manifest, four);
        CHECK(report_json(a) == report_json(b));
        CHECK(report_csv(a) == report_csv(b));
        CHECK(report_table(a) == report_table(b));
    }
    SUBCASE("a broken sample does not stop the run") {
        manifest[2].bundle_path = dir.path() / "missing";
        const auto report = run_eval(manifest, {});
        CHECK(report.failures == 1);
        CHECK(report.partial_failure());
        CHECK_FALSE(report.samples[2].error.empty());
        CHECK(report.aggregate->count == 5);
        for (auto& m : manifest) m.bundle_path = dir.path() / "missing";
        CHECK_THROWS_AS(run_eval(manifest, {}), Error);
    }
    SUBCASE("mismatched attention timestep is rejected per sample") {
        RunConfig c;
        c.attention_timestep = 9;
        CHECK_THROWS_AS(run_eval(manifest, c), Error);
    }
    SUBCASE("masks and report files are written") {
        oracle::TempDir out("harness_out");
        EvalOptions opt;
        opt.mask_dir = out.path() / "masks";
        const auto report = run_eval(manifest, {}, opt);
        write_eval_report(report, out.path());
        CHECK(std::filesystem::exists(out.path() / "report.json"));
        CHECK(std::filesystem::exists(out.path() / "samples.csv"));
        CHECK(std::filesystem::exists(out.path() / "summary.txt"));
        const auto mask = read_mask_pgm(*opt.mask_dir / (manifest[0].sample_id + ".pgm"));
        CHECK(mask.shape == manifest[0].image_size.shape());
    }
}

TEST_CASE("sweeps") {
    oracle::TempDir dir("harness_sweep");
    auto suite = small_suite(5);
    // Only (t=10, l=20) carries separable features.
    suite.base.feat_separation = 0.05;
    suite.base.feat_noise = 0.5;
    suite.base.extra_features = {{0, 5, 0.05, 0.5}, {10, 5, 0.05, 0.5}, {10, 20, std::numbers::pi, 0.1}};
    const auto manifest = write_plant_suite(suite, dir.path());

    SUBCASE("single cell equals run_eval") {
        RunConfig c;
        c.workers = 2;
        const auto sweep = run_sweep(manifest, {0}, {20}, c);
        REQUIRE(sweep.cells.size() == 1);
        RunConfig e = c;
        e.segment.feature_block = 20;
        e.segment.feature_timestep = 0;
        const auto report = run_eval(manifest, e);
        REQUIRE(sweep.cells[0].segmentation);
        CHECK(sweep.cells[0].segmentation->oiou == report.aggregate->oiou);
        CHECK(sweep.cells[0].segmentation->miou == report.aggregate->miou);
    }
    SUBCASE("the separable cell wins on both measures") {
        const auto sweep = run_sweep(manifest, {0, 10}, {5, 20}, {});
        REQUIRE(sweep.cells.size() == 4);
        const auto& best = sweep.cells[3];
        CHECK(best.timestep == 10);
        CHECK(best.block == 20);
        for (std::size_t i = 0; i < 3; ++i) {
            REQUIRE(sweep.cells[i].segmentation);
            CHECK(sweep.cells[i].segmentation->oiou + 0.1 < best.segmentation->oiou);
            CHECK(sweep.cells[i].separability.median < best.separability.median);
        }
        CHECK(sweep.records.size() == 20);
        CHECK_FALSE(sweep_csv(sweep).empty());
    }
    SUBCASE("absent cells are reported, not fatal") {
        const auto sweep = run_sweep(manifest, {0}, {20, 31}, {});
        CHECK(sweep.cells[0].present);
        CHECK_FALSE(sweep.cells[1].present);
        CHECK(sweep.cells[1].separability.excluded == 5);
    }
    SUBCASE("empty lists are configuration errors") {
        CHECK(kind_of([&] { run_sweep(manifest, {}, {20}, {}); }) == ErrorKind::config);
        CHECK(kind_of([&] { run_sweep(manifest, {0}, {}, {}); }) == ErrorKind::config);
    }
    SUBCASE("separability output") {
        const auto records = run_separability(manifest, {0, 10}, {20}, 3);
        CHECK(records.size() == 10);
        CHECK(records[0].sample_id == manifest[0].sample_id);
        const auto csv = separability_csv(records);
        CHECK(csv.rfind("sample_id,t,l,J,flag\n", 0) == 0);
        CHECK(separability_csv(run_separability(manifest, {0, 10}, {20}, 1)) == csv);
    }
}
