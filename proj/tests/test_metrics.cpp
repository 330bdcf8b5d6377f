#include <cmath>
#include <fstream>

#include "doctest.h"
#include "memdiff/data.hpp"
#include "memdiff/errors.hpp"
#include "memdiff/metrics.hpp"
#include "memdiff/rng.hpp"
#include "test_support.hpp"

using namespace memdiff;

namespace {

LabelMask box_mask(int h, int w, int y0, int y1, int x0, int x1, int cls) {
    LabelMask m(h, w);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) m.at(y, x) = static_cast<std::uint8_t>(cls);
    return m;
}

} // namespace

TEST_CASE("dice coefficient basics") {
    const auto a = box_mask(8, 8, 0, 2, 0, 2, 1); // 4 pixels
    SUBCASE("identical nonempty masks") { CHECK(dice(a, a, 1) == 1.0); }
    SUBCASE("disjoint nonempty masks") {
        const auto b = box_mask(8, 8, 4, 6, 4, 6, 1);
        CHECK(dice(a, b, 1) == 0.0);
    }
    SUBCASE("half overlap: |A|=4, |B|=4, |A n B|=2") {
        const auto b = box_mask(8, 8, 0, 2, 1, 3, 1); // shifted by one column
        CHECK(dice(a, b, 1) == doctest::Approx(0.5));
    }
    SUBCASE("both empty is a correct prediction") {
        const LabelMask empty(8, 8);
        CHECK(dice(empty, empty, 1) == 1.0);
    }
    SUBCASE("symmetry") {
        Rng rng(5);
        for (int trial = 0; trial < 20; ++trial) {
            LabelMask p(8, 8), t(8, 8);
            for (auto& l : p.labels) l = static_cast<std::uint8_t>(rng.uniform_int(0, 2));
            for (auto& l : t.labels) l = static_cast<std::uint8_t>(rng.uniform_int(0, 2));
            for (int cls = 1; cls <= 2; ++cls) {
                CHECK(dice(p, t, cls) == dice(t, p, cls));
                CHECK(dice(p, p, cls) == 1.0);
            }
        }
    }
    SUBCASE("shape mismatch rejected") {
        CHECK_THROWS_AS(dice(a, LabelMask(4, 4), 1), DataError);
    }
}

TEST_CASE("volume-level dice pools voxels across slices") {
    // slice 0: |A|=4,|B|=4,inter=2 ; slice 1: A empty, B empty
    std::vector<LabelMask> pred{box_mask(8, 8, 0, 2, 0, 2, 1), LabelMask(8, 8)};
    std::vector<LabelMask> truth{box_mask(8, 8, 0, 2, 1, 3, 1), LabelMask(8, 8)};
    CHECK(dice_volume(pred, truth, 1) == doctest::Approx(0.5)); // 2*2/(4+4), empties add nothing
}

TEST_CASE("evaluate produces a per-organ, per-volume report") {
    auto vols = generate_synthetic_dataset(2, 4, {32, 32}, 2, 9);

    SUBCASE("perfect predictions score 1.0 everywhere") {
        std::map<std::string, std::vector<LabelMask>> preds;
        for (const auto& v : vols) preds[v.volume_id] = v.masks;
        const auto report = evaluate(preds, vols, {1, 2}, 0xbeef, 3);
        CHECK(report.n_volumes == 2);
        CHECK(report.mean == 1.0);
        for (const auto& [organ, d] : report.per_organ) CHECK(d == 1.0);
        CHECK(report.rows.size() == 4);
    }
    SUBCASE("all-background predictions score 0 against nonempty truths") {
        std::map<std::string, std::vector<LabelMask>> preds;
        for (const auto& v : vols)
            preds[v.volume_id] = std::vector<LabelMask>(v.slice_count(), LabelMask(32, 32));
        const auto report = evaluate(preds, vols, {1, 2}, 0, 0);
        for (const auto& [organ, d] : report.per_organ) CHECK(d == 0.0);
        CHECK(report.mean == 0.0);
    }
    SUBCASE("hand-built two-volume fixture matches manual computation") {
        std::vector<VolumeRecord> fixture(2);
        fixture[0].volume_id = "a";
        fixture[0].k_classes = 2;
        fixture[0].slices = {SliceImage(8, 8)};
        fixture[0].masks = {box_mask(8, 8, 0, 2, 0, 2, 1)}; // class1: 4 px
        fixture[1].volume_id = "b";
        fixture[1].k_classes = 2;
        fixture[1].slices = {SliceImage(8, 8)};
        fixture[1].masks = {box_mask(8, 8, 0, 4, 0, 4, 2)}; // class2: 16 px

        std::map<std::string, std::vector<LabelMask>> preds;
        preds["a"] = {box_mask(8, 8, 0, 2, 1, 3, 1)}; // overlap 2 -> dice 0.5
        preds["b"] = {box_mask(8, 8, 0, 4, 0, 2, 2)}; // |B|=8, inter 8 -> 2*8/24 = 2/3

        const auto report = evaluate(preds, fixture, {1, 2}, 0, 0);
        // organ 1: vol a = 0.5, vol b = 1.0 (both empty) -> mean 0.75
        CHECK(report.per_organ.at(1) == doctest::Approx(0.75));
        // organ 2: vol a = 1.0 (both empty), vol b = 2/3 -> mean 5/6
        CHECK(report.per_organ.at(2) == doctest::Approx(5.0 / 6.0));
        CHECK(report.mean == doctest::Approx((0.75 + 5.0 / 6.0) / 2.0));
    }
    SUBCASE("missing volumes are listed and fail the run") {
        std::map<std::string, std::vector<LabelMask>> preds;
        preds[vols[0].volume_id] = vols[0].masks;
        CHECK_THROWS_WITH_AS(evaluate(preds, vols, {1}, 0, 0), doctest::Contains("vol_001"), DataError);
    }
}

TEST_CASE("dice csv layout") {
    const auto dir = testutil::fresh_dir("dice_csv");
    DiceReport report;
    report.config_hash = 0xff;
    report.seed = 2;
    report.n_volumes = 1;
    report.per_organ = {{1, 0.5}};
    report.mean = 0.5;
    report.rows = {{1, "vol_000", 0.5}};
    write_dice_csv(report, dir / "dice.csv");
    std::ifstream f(dir / "dice.csv");
    std::string all((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    CHECK(all.find("organ,volume_id,dice") != std::string::npos);
    CHECK(all.find("1,vol_000,0.5") != std::string::npos);
    CHECK(all.find("1,mean,0.5") != std::string::npos);
    CHECK(all.find("all,mean,0.5") != std::string::npos);
    CHECK(all.find("# config_hash=00000000000000ff") != std::string::npos);
}

TEST_CASE("cluster diagnostic") {
    Rng rng(8);
    std::vector<std::pair<Grid3, int>> truth;
    for (int cls = 1; cls <= 3; ++cls)
        for (int i = 0; i < 5; ++i) {
            Grid3 g(2, 3, 3);
            rng.fill_normal(g);
            for (auto& v : g.v) v += 3.0 * cls; // separated class clusters
            truth.emplace_back(std::move(g), cls);
        }

    SUBCASE("generated == truth gives zero gaps and unit spread ratio") {
        const auto diag = cluster_diagnostic(truth, truth);
        for (const auto& s : diag.stats) {
            REQUIRE(s.present);
            CHECK(s.gap == doctest::Approx(0.0).epsilon(1e-12));
            CHECK(s.spread_ratio == doctest::Approx(1.0));
        }
        CHECK(diag.points.size() == 2 * truth.size());
    }
    SUBCASE("constant offset appears as exactly |c| in every gap") {
        auto generated = truth;
        const double offset = 0.75;
        for (auto& [g, cls] : generated)
            for (auto& v : g.v) v += offset;
        const auto diag = cluster_diagnostic(generated, truth);
        const double expect = offset * std::sqrt(static_cast<double>(truth[0].first.size()));
        for (const auto& s : diag.stats) CHECK(s.gap == doctest::Approx(expect).epsilon(1e-9));
    }
    SUBCASE("projection is reproducible") {
        const auto a = cluster_diagnostic(truth, truth);
        const auto b = cluster_diagnostic(truth, truth);
        REQUIRE(a.points.size() == b.points.size());
        for (std::size_t i = 0; i < a.points.size(); ++i) {
            CHECK(a.points[i].x == b.points[i].x);
            CHECK(a.points[i].y == b.points[i].y);
        }
    }
    SUBCASE("class missing on one side is reported absent, not an error") {
        auto generated = truth;
        std::erase_if(generated, [](const auto& p) { return p.second == 2; });
        const auto diag = cluster_diagnostic(generated, truth);
        for (const auto& s : diag.stats) CHECK(s.present == (s.cls != 2));
    }
}

TEST_CASE("report mean equals the arithmetic mean of per-organ values") {
    auto vols = generate_synthetic_dataset(2, 4, {32, 32}, 3, 13);
    std::map<std::string, std::vector<LabelMask>> preds;
    preds[vols[0].volume_id] = vols[0].masks;
    // volume 1 mispredicted as volume 0's masks: imperfect but valid
    preds[vols[1].volume_id] = vols[0].masks;
    const auto report = evaluate(preds, vols, {1, 2, 3}, 0, 0);
    double mean = 0.0;
    for (const auto& [organ, d] : report.per_organ) {
        CHECK(d >= 0.0);
        CHECK(d <= 1.0);
        mean += d;
    }
    CHECK(report.mean == doctest::Approx(mean / 3.0).epsilon(1e-12));
}
