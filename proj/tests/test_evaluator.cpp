#include <doctest.h>

#include <functional>
#include <set>

#include "fsed/errors.hpp"
#include "fsed/evaluator.hpp"
#include "fsed/rng.hpp"

using namespace fsed;

namespace {

// Test-side exhaustive matcher (independent of the library's flow solver).
std::pair<int, double> brute_match(const std::vector<Interval>& preds,
                                   const std::vector<Interval>& gts, double min_iou) {
    const int n_preds = static_cast<int>(preds.size());
    const int n_gts = static_cast<int>(gts.size());
    std::function<std::pair<int, double>(int, unsigned)> rec =
        [&](int i, unsigned mask) -> std::pair<int, double> {
        if (i == n_preds) return {0, 0.0};
        std::pair<int, double> best = rec(i + 1, mask);
        for (int j = 0; j < n_gts; ++j) {
            if (mask & (1u << j)) continue;
            const double v = iou(preds[i], gts[j]);
            if (v < min_iou) continue;
            auto [c, s] = rec(i + 1, mask | (1u << j));
            if (c + 1 > best.first || (c + 1 == best.first && s + v > best.second))
                best = {c + 1, s + v};
        }
        return best;
    };
    return rec(0, 0);
}

}  // namespace

TEST_CASE("iou: fixed values and properties") {
    CHECK(iou({1.0, 3.0}, {1.0, 3.0}) == 1.0);
    CHECK(iou({0.0, 1.0}, {2.0, 3.0}) == 0.0);
    CHECK(iou({0.0, 2.0}, {1.0, 3.0}) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    Rng rng(1);
    for (int t = 0; t < 100; ++t) {
        Interval a{rng.uniform(0.0, 5.0), 0};
        a.end = a.start + rng.uniform(0.01, 2.0);
        Interval b{rng.uniform(0.0, 5.0), 0};
        b.end = b.start + rng.uniform(0.01, 2.0);
        const double v = iou(a, b);
        CHECK(v == iou(b, a));
        CHECK(v >= 0.0);
        const double la = a.end - a.start, lb = b.end - b.start;
        CHECK(v <= std::min(la, lb) / std::max(la, lb) + 1e-12);
    }
}

TEST_CASE("remove_unk: positive overlap removes, endpoint touch keeps") {
    const std::vector<Interval> preds = {{0.0, 1.0}, {2.0, 3.0}, {5.0, 6.0}};
    CHECK(remove_unk(preds, {}).size() == 3);

    // Second prediction fully inside an UNK region.
    const auto kept = remove_unk(preds, {{1.5, 3.5}});
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].start == 0.0);
    CHECK(kept[1].start == 5.0);

    // Zero-length overlap at the boundary does not remove.
    CHECK(remove_unk({{0.0, 1.0}}, {{1.0, 2.0}}).size() == 1);
}

TEST_CASE("match_events: perfect, empty and crossing cases") {
    const std::vector<Interval> gts = {{0.0, 1.0}, {1.0, 2.0}};

    MatchResult r = match_events(gts, gts, 0.3);
    CHECK(r.tp == 2);
    CHECK(r.fp == 0);
    CHECK(r.fn == 0);
    CHECK(r.pairs == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}});

    r = match_events({}, gts, 0.3);
    CHECK(r.tp == 0);
    CHECK(r.fn == 2);

    // pred 0 overlaps both gts, pred 1 only gt 0; greedy-in-order finds one
    // pair, the maximum matching finds two.
    const std::vector<Interval> preds = {{0.5, 1.5}, {0.0, 1.0}};
    r = match_events(preds, gts, 0.3);
    CHECK(r.tp == 2);
    CHECK(r.pairs == std::vector<std::pair<int, int>>{{0, 1}, {1, 0}});
}

TEST_CASE("match_events equals exhaustive matching on 1000 random instances") {
    Rng rng(2);
    for (int t = 0; t < 1000; ++t) {
        auto make = [&](std::size_t n) {
            std::vector<Interval> v(n);
            for (Interval& iv : v) {
                iv.start = rng.uniform(0.0, 8.0);
                iv.end = iv.start + rng.uniform(0.05, 2.0);
            }
            return v;
        };
        const auto preds = make(rng.uniform_int(9));
        const auto gts = make(rng.uniform_int(9));
        const MatchResult got = match_events(preds, gts, 0.3);
        const auto [card, best_iou] = brute_match(preds, gts, 0.3);
        CHECK(got.tp == card);
        double got_iou = 0;
        for (const auto& [p, g] : got.pairs) got_iou += iou(preds[p], gts[g]);
        CHECK(got_iou == doctest::Approx(best_iou).epsilon(1e-9));
        // Each index appears at most once.
        std::set<int> ps, gs;
        for (const auto& [p, g] : got.pairs) {
            CHECK(ps.insert(p).second);
            CHECK(gs.insert(g).second);
        }
    }
}

TEST_CASE("compute_metrics: reported fixtures and invariants") {
    Metrics m = compute_metrics(33, 62, 197);
    CHECK(100 * m.precision == doctest::Approx(34.73).epsilon(3e-4));
    CHECK(100 * m.recall == doctest::Approx(14.34).epsilon(6e-4));
    CHECK(100 * m.fscore == doctest::Approx(20.31).epsilon(5e-4));

    m = compute_metrics(21, 1333, 209);
    CHECK(100 * m.precision == doctest::Approx(1.55).epsilon(1e-3));
    CHECK(100 * m.recall == doctest::Approx(9.13).epsilon(1e-4));
    CHECK(100 * m.fscore == doctest::Approx(2.65).epsilon(1e-3));

    m = compute_metrics(11, 1871, 219);
    CHECK(100 * m.precision == doctest::Approx(0.58).epsilon(1e-2));
    CHECK(100 * m.recall == doctest::Approx(4.78).epsilon(1e-3));
    CHECK(100 * m.fscore == doctest::Approx(1.042).epsilon(1e-3));

    CHECK(compute_metrics(0, 0, 0).fscore == 0.0);
    CHECK(compute_metrics(0, 5, 0).precision == 0.0);

    // Scale invariance.
    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
        const long tp = static_cast<long>(rng.uniform_int(50));
        const long fp = static_cast<long>(rng.uniform_int(50));
        const long fn = static_cast<long>(rng.uniform_int(50));
        const Metrics base = compute_metrics(tp, fp, fn);
        for (long k : {2L, 7L}) {
            const Metrics scaled = compute_metrics(k * tp, k * fp, k * fn);
            CHECK(scaled.precision == doctest::Approx(base.precision).epsilon(1e-12));
            CHECK(scaled.recall == doctest::Approx(base.recall).epsilon(1e-12));
            CHECK(scaled.fscore == doctest::Approx(base.fscore).epsilon(1e-12));
        }
        // An extra unmatched prediction hurts precision, not recall.
        if (tp + fp > 0 && tp > 0) {
            const Metrics worse = compute_metrics(tp, fp + 1, fn);
            CHECK(worse.precision < base.precision);
            CHECK(worse.recall == base.recall);
        }
    }
}

TEST_CASE("score_file: pooling, UNK handling and unknown recordings") {
    const std::string gt =
        "Audiofilename,Starttime,Endtime,Q\n"
        "a.wav,1.0,2.0,POS\n"
        "b.wav,0.0,1.0,POS\n"
        "b.wav,4.0,5.0,POS\n"
        "b.wav,9.0,10.0,UNK\n";

    SUBCASE("perfect predictions pool to F = 1") {
        const std::string pred =
            "Audiofilename,Starttime,Endtime\n"
            "a.wav,1.0,2.0\n"
            "b.wav,0.0,1.0\n"
            "b.wav,4.0,5.0\n";
        const ScoreReport r = score_file(pred, gt, 0.3);
        CHECK(r.pooled.fscore == 1.0);
        CHECK(r.tp == 3);
        CHECK(r.per_file.at("a.wav").metrics.fscore == 1.0);
    }

    SUBCASE("per-recording counts pool before the metric") {
        // a.wav: (1,0,0); b.wav: (0,2,2) -> pooled (1,2,2).
        const std::string pred =
            "Audiofilename,Starttime,Endtime\n"
            "a.wav,1.0,2.0\n"
            "b.wav,6.0,7.0\n"
            "b.wav,7.0,8.0\n";
        const ScoreReport r = score_file(pred, gt, 0.3);
        CHECK(r.tp == 1);
        CHECK(r.fp == 2);
        CHECK(r.fn == 2);
        CHECK(r.pooled.precision == doctest::Approx(1.0 / 3.0));
        CHECK(r.pooled.recall == doctest::Approx(1.0 / 3.0));
        const auto json = r.to_json();
        CHECK(json["pooled"]["tp"] == 1);
        CHECK(json["per_file"]["b.wav"]["fp"] == 2);
    }

    SUBCASE("predictions inside UNK regions are neither TP nor FP") {
        const std::string pred =
            "Audiofilename,Starttime,Endtime\n"
            "b.wav,9.2,9.8\n";
        const ScoreReport r = score_file(pred, gt, 0.3);
        CHECK(r.tp == 0);
        CHECK(r.fp == 0);
        CHECK(r.fn == 3);  // a.wav 1 + b.wav 2
    }

    SUBCASE("empty prediction body gives recall 0") {
        const ScoreReport r = score_file("Audiofilename,Starttime,Endtime\n", gt, 0.3);
        CHECK(r.pooled.recall == 0.0);
        CHECK(r.fn == 3);
    }

    SUBCASE("unknown recording is an error naming it") {
        const std::string pred =
            "Audiofilename,Starttime,Endtime\n"
            "mystery.wav,0.0,1.0\n";
        CHECK_THROWS_WITH_AS(score_file(pred, gt, 0.3), doctest::Contains("mystery.wav"),
                             DataError);
    }

    SUBCASE("malformed prediction rows carry line numbers") {
        CHECK_THROWS_WITH_AS(
            score_file("Audiofilename,Starttime,Endtime\na.wav,oops,1.0\n", gt, 0.3),
            doctest::Contains("line 2"), ParseError);
    }
}
