#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "editground/error.hpp"
#include "editground/metrics.hpp"

using namespace editground;

namespace {

PixelMask mask(std::size_t h, std::size_t w, std::vector<std::uint8_t> v) { return PixelMask(GridShape{h, w}, std::move(v)); }

}  // namespace

TEST_CASE("iou examples") {
    const auto left = mask(2, 2, {1, 0, 1, 0});
    const auto top = mask(2, 2, {1, 1, 0, 0});
    const auto r = iou(left, top, "a");
    CHECK(r.intersection == 1);
    CHECK(r.union_count == 3);
    CHECK(r.iou == doctest::Approx(1.0 / 3.0));

    CHECK(iou(left, left).iou == 1.0);
    CHECK(iou(left, mask(2, 2, {0, 1, 0, 1})).iou == 0.0);

    const auto empty = iou(mask(2, 2, {0, 0, 0, 0}), mask(2, 2, {0, 0, 0, 0}));
    CHECK(empty.iou == 1.0);
    CHECK(empty.empty_union);

    CHECK_THROWS_AS(iou(left, mask(1, 4, {1, 0, 1, 0})), Error);
}

TEST_CASE("aggregate") {
    SUBCASE("overall versus mean") {
        std::vector<IoURecord> rs(2);
        rs[0].intersection = 1;
        rs[0].union_count = 2;
        rs[0].iou = 0.5;
        rs[1].intersection = 3;
        rs[1].union_count = 4;
        rs[1].iou = 0.75;
        const auto a = aggregate(rs);
        CHECK(a.oiou == doctest::Approx(4.0 / 6.0));
        CHECK(a.miou == doctest::Approx(0.625));
        CHECK(a.count == 2);
    }
    SUBCASE("large objects dominate oIoU") {
        std::vector<IoURecord> rs(2);
        rs[0].intersection = 10000;
        rs[0].union_count = 10000;
        rs[0].iou = 1.0;
        rs[1].intersection = 0;
        rs[1].union_count = 10;
        rs[1].iou = 0.0;
        const auto a = aggregate(rs);
        CHECK(a.oiou == doctest::Approx(10000.0 / 10010.0));
        CHECK(a.miou == doctest::Approx(0.5));
    }
    SUBCASE("empty input") {
        CHECK_THROWS_AS(aggregate(std::vector<IoURecord>{}), Error);
    }
}

TEST_CASE("iou properties") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t h = 1 + rng() % 9, w = 1 + rng() % 9;
        PixelMask a(GridShape{h, w}), b(GridShape{h, w});
        for (auto& v : a.values) v = rng() % 2;
        for (auto& v : b.values) v = rng() % 2;
        const auto ab = iou(a, b), ba = iou(b, a);
        CHECK(ab.iou == ba.iou);
        CHECK(ab.iou >= 0.0);
        CHECK(ab.iou <= 1.0);
        CHECK(ab.intersection <= ab.union_count);
        CHECK(iou(a, a).iou == 1.0);

        std::vector<IoURecord> rs{ab, iou(a, a)};
        const auto agg = aggregate(rs);
        CHECK(agg.oiou >= 0.0);
        CHECK(agg.oiou <= 1.0);
    }
}
