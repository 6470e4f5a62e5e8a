#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>
#include <sstream>

#include "editground/error.hpp"
#include "editground/metrics.hpp"
#include "editground/philox.hpp"
#include "editground/semantic_localization.hpp"
#include "editground/synthetic.hpp"
#include "support/oracles.hpp"

using namespace editground;
namespace fs = std::filesystem;

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

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// Mean IoU of the full method over a seed range.
double mean_iou(PlantSpec spec, int seeds, const SegmentConfig& config = {}) {
    double total = 0;
    for (int s = 0; s < seeds; ++s) {
        spec.seed = static_cast<std::uint64_t>(1000 + s);
        const auto sample = generate(spec);
        total += iou(segment(sample.bundle, config), sample.gt).iou;
    }
    return total / seeds;
}

}  // namespace

TEST_CASE("philox known answers") {
    CHECK(philox4x32_10({0, 0, 0, 0}, {0, 0}) == PhiloxCounter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(philox4x32_10({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
          PhiloxCounter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(philox4x32_10({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
          PhiloxCounter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("counter rng") {
    CounterRng a(42, 7), b(42, 7), c(42, 8);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next_u32();
        CHECK(x == b.next_u32());
        differs |= x != c.next_u32();
    }
    CHECK(differs);

    CounterRng r(1, 1);
    double sum = 0, sq = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        const auto k = r.uniform_int(3, 5);
        CHECK(k >= 3);
        CHECK(k <= 5);
        const double g = r.normal();
        sum += g;
        sq += g * g;
    }
    CHECK(std::abs(sum / n) < 0.05);
    CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("rasterize") {
    const auto gt = rasterize({{1, 0, 1, 2}}, {2, 4}, {4, 8});
    for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 8; ++x) CHECK(gt.at(y, x) == (y >= 2 && x < 4 ? 1 : 0));
}

TEST_CASE("generate") {
    SUBCASE("ground truth matches the planted rectangle") {
        PlantSpec spec;
        spec.object = {{2, 3, 4, 5}};
        const auto s = generate(spec);
        CHECK(s.gt == rasterize(spec.object, spec.grid, spec.image_size));
        CHECK(count_ones(s.token_truth) == 20);
        CHECK(s.attended.size() == 20);
        validate_bundle(s.bundle);
    }
    SUBCASE("partial coverage attends the leading object tokens") {
        PlantSpec spec;
        spec.object = {{0, 0, 2, 5}};
        spec.partial_coverage = 0.5;
        const auto s = generate(spec);
        CHECK(s.attended == std::vector<std::size_t>{0, 1, 2, 3, 4});
    }
    SUBCASE("same seed, same bundle") {
        PlantSpec spec;
        spec.seed = 17;
        const auto a = generate(spec), b = generate(spec);
        CHECK(a.gt == b.gt);
        CHECK(a.bundle.feature.values.data == b.bundle.feature.values.data);
        for (std::size_t i = 0; i < a.bundle.blocks.size(); ++i) {
            CHECK(a.bundle.blocks[i].attn_vp.data == b.bundle.blocks[i].attn_vp.data);
            CHECK(a.bundle.blocks[i].attn_vv.data == b.bundle.blocks[i].attn_vv.data);
        }
        spec.seed = 18;
        CHECK(generate(spec).bundle.feature.values.data != a.bundle.feature.values.data);
    }
    SUBCASE("configuration errors") {
        PlantSpec spec;
        spec.partial_coverage = 0.0;
        CHECK(kind_of([&] { generate(spec); }) == ErrorKind::config);
        spec = {};
        spec.object = {{14, 14, 4, 4}};
        CHECK(kind_of([&] { generate(spec); }) == ErrorKind::config);
        spec = {};
        spec.object = {{0, 0, 16, 16}};
        CHECK(kind_of([&] { generate(spec); }) == ErrorKind::config);
        spec = {};
        spec.attn_snr = 0.5;
        CHECK(kind_of([&] { generate(spec); }) == ErrorKind::config);
        spec = {};
        spec.image_size = {8, 8};
        CHECK(kind_of([&] { generate(spec); }) == ErrorKind::config);
    }
}

TEST_CASE("plant suites") {
    PlantSuite suite;
    suite.name = "tiny";
    suite.base.partial_coverage = 0.5;
    suite.base.extra_features = {{10, 5, 0.3, 0.2}};
    suite.seeds = {3, 4, 5};

    std::istringstream in(plant_suite_json(suite));
    const auto back = parse_plant_suite(in);
    CHECK(back.name == suite.name);
    CHECK(back.base == suite.base);
    CHECK(back.seeds == suite.seeds);

    std::istringstream ranged(R"({"name":"r","spec":{"feat_separation":"antipodal","object_size":[3,5]},
                                 "seed_start":10,"seed_count":3})");
    const auto r = parse_plant_suite(ranged);
    CHECK(r.seeds == std::vector<std::uint64_t>{10, 11, 12});
    CHECK(r.base.min_object == 3);
    CHECK(r.base.max_object == 5);

    std::istringstream none(R"({"name":"x","spec":{},"seeds":[]})");
    CHECK(kind_of([&] { parse_plant_suite(none); }) == ErrorKind::config);

    SUBCASE("written suites are byte-identical across runs") {
        oracle::TempDir a("suite_a"), b("suite_b");
        const auto ma = write_plant_suite(suite, a.path());
        write_plant_suite(suite, b.path());
        CHECK(ma.size() == 3);
        std::size_t files = 0;
        for (const auto& e : fs::recursive_directory_iterator(a.path())) {
            if (!e.is_regular_file()) continue;
            const auto rel = fs::relative(e.path(), a.path());
            CHECK(slurp(e.path()) == slurp(b.path() / rel));
            ++files;
        }
        CHECK(files > 3 * 5);
        const auto reread = read_manifest(a.path() / "manifest.jsonl");
        CHECK(reread.size() == 3);
        const auto sample = load_sample_bundle(reread[1]);
        CHECK(sample.extra_features.size() == 1);
    }
}

TEST_CASE("planted model behaviour") {
    const int seeds = 50;

    SUBCASE("object-coherent affinity spreads partial attention over the object") {
        PlantSpec spec;
        spec.partial_coverage = 0.5;
        SegmentConfig ram;
        ram.mode = LocalizationMode::ram_binarize;
        spec.affinity = AffinityMode::identity;
        const double ident_ram = mean_iou(spec, seeds, ram);
        const double ident_full = mean_iou(spec, seeds);
        spec.affinity = AffinityMode::object_coherent;
        const double coherent_ram = mean_iou(spec, seeds, ram);
        const double coherent_full = mean_iou(spec, seeds);
        MESSAGE("ram: identity " << ident_ram << " object-coherent " << coherent_ram);
        MESSAGE("full: identity " << ident_full << " object-coherent " << coherent_full);
        CHECK(coherent_ram > ident_ram + 0.05);
        CHECK(ident_ram < 0.6);
        CHECK(coherent_full >= ident_full);
        CHECK(coherent_full >= 0.85);

        for (int seed = 0; seed < seeds; ++seed) {
            spec.seed = static_cast<std::uint64_t>(1000 + seed);
            const auto sample = generate(spec);
            const auto blocks = resolve_blocks(sample.bundle, {});
            const auto ram = count_ones(binarize(aggregate_ram(sample.bundle, blocks), 0.8));
            const auto cam = count_ones(binarize(aggregate_cam(sample.bundle, blocks), 0.8));
            CHECK(ram >= cam);
        }
    }
    SUBCASE("recovery does not decrease with separation or SNR") {
        PlantSpec spec;
        spec.feat_noise = 0.6;
        double last = -1;
        for (double delta : {0.25, 0.5, 1.0, std::numbers::pi}) {
            spec.feat_separation = delta;
            const double m = mean_iou(spec, seeds);
            MESSAGE("separation " << delta << " mIoU " << m);
            CHECK(m >= last - 0.01);
            last = m;
        }
        spec = {};
        spec.partial_coverage = 0.5;
        last = -1;
        for (double snr : {1.0, 2.0, 5.0, 10.0}) {
            spec.attn_snr = snr;
            const double m = mean_iou(spec, seeds);
            MESSAGE("snr " << snr << " mIoU " << m);
            CHECK(m >= last - 0.01);
            last = m;
        }
    }
    SUBCASE("a distractor with foreground features is segmented as foreground") {
        PlantSpec spec;
        spec.object = {{1, 1, 5, 5}};
        spec.distractor = {{9, 9, 5, 5}};
        spec.seed = 2;
        const auto s = generate(spec);
        const auto distractor = rasterize(spec.distractor, spec.grid, spec.image_size);
        CHECK(count_ones(s.gt) == 25 * 16);
        const auto pred = segment(s.bundle, {});
        const auto overlap = iou(pred, distractor);
        CHECK(overlap.intersection >= count_ones(distractor) * 9 / 10);
        CHECK(iou(pred, s.gt).iou < 0.6);
    }
}
