#include <numeric>

#include "doctest.h"
#include "maxrr/error.hpp"
#include "maxrr/ranking.hpp"
#include "maxrr/rng.hpp"

using namespace maxrr;

namespace {

CoreRanking make_ranking(std::vector<int64_t> ids, std::vector<int> freq, int runs) {
    CoreRanking cr;
    cr.corpus_ids = std::move(ids);
    cr.freq = std::move(freq);
    cr.runs = runs;
    cr.base_seed = 0;
    for (int r = 0; r < runs; ++r) cr.run_seeds.push_back(uint64_t(r));
    return cr;
}

RankingConfig blob_ranking_config() {
    RankingConfig rc;
    rc.arch = ArchSpec::small_mlp(4, 8, 6, 3);
    rc.hyper = TrainConfig{4, 0.05, 16, 0.9};
    rc.svm = SvmConfig{};
    return rc;
}

}  // namespace

TEST_CASE("top_k ordering, ties and bounds") {
    const CoreRanking cr = make_ranking({0, 1, 2, 3}, {5, 1, 5, 0}, 5);

    SUBCASE("forced ordering") {
        CHECK(top_k(cr, 2).ids == std::vector<int64_t>{0, 2});
        CHECK(non_top_k(cr, 2).ids == std::vector<int64_t>{1, 3});
    }
    SUBCASE("extremes") {
        CHECK(top_k(cr, 0).empty());
        CHECK(top_k(cr, 4).ids == cr.corpus_ids);
        CHECK(non_top_k(cr, 0).ids == cr.corpus_ids);
        CHECK(non_top_k(cr, 4).empty());
    }
    SUBCASE("k out of range") {
        CHECK_THROWS_AS(top_k(cr, 5), KOutOfRange);
    }
    SUBCASE("ties at the cut break toward lower ids") {
        const CoreRanking tied = make_ranking({7, 8, 9}, {3, 3, 3}, 3);
        CHECK(top_k(tied, 2).ids == std::vector<int64_t>{7, 8});
    }
}

TEST_CASE("partition, nesting and frequency-ordering properties") {
    Rng rng(55);
    std::vector<int64_t> ids(40);
    std::vector<int> freq(40);
    for (size_t i = 0; i < ids.size(); ++i) {
        ids[i] = int64_t(i * 3);  // sparse ids
        freq[i] = int(rng.uniform_int(6));
    }
    const CoreRanking cr = make_ranking(ids, freq, 5);
    IdSet corpus;
    corpus.ids = cr.corpus_ids;

    for (size_t k = 0; k <= cr.size(); ++k) {
        const IdSet top = top_k(cr, k);
        const IdSet rest = non_top_k(cr, k);
        CHECK(top.size() == k);
        CHECK(rest.size() == cr.size() - k);
        CHECK_FALSE(top.intersects(rest));
        CHECK(top.set_union(rest) == corpus);
        if (k > 0) {
            CHECK(top_k(cr, k - 1).is_subset_of(top));
            int min_top = 1 << 30, max_rest = -1;
            for (int64_t id : top.ids) min_top = std::min(min_top, cr.freq_of(id));
            for (int64_t id : rest.ids) max_rest = std::max(max_rest, cr.freq_of(id));
            if (max_rest >= 0 && min_top != max_rest) CHECK(min_top > max_rest);
        }
    }
}

TEST_CASE("build_ranking counts support unions over seeded runs") {
    const LabeledDataset ds = synth_blobs(3, 40, 4, 5.0, 71);
    const RankingConfig rc = blob_ranking_config();

    SUBCASE("single run is the indicator of that run's support union") {
        const CoreRanking cr = build_ranking(ds, rc, 1, 100);
        const FeatureExtractor fe = train_fe(init_fe(rc.arch, 100), ds, rc.hyper, 100);
        const OvrSvm svm = fit_ovr(embed(fe, ds), ds.labels, rc.svm);
        const IdSet support = svm.support_union();
        for (size_t i = 0; i < cr.size(); ++i) {
            CHECK(cr.freq[i] == (support.contains(cr.corpus_ids[i]) ? 1 : 0));
        }
    }
    SUBCASE("deterministic and bounded") {
        const CoreRanking a = build_ranking(ds, rc, 3, 9);
        const CoreRanking b = build_ranking(ds, rc, 3, 9);
        CHECK(a.freq == b.freq);
        for (int f : a.freq) {
            CHECK(f >= 0);
            CHECK(f <= 3);
        }
        CHECK(a.run_seeds == std::vector<uint64_t>{9, 10, 11});
    }
    SUBCASE("run count must be positive") {
        CHECK_THROWS_AS(build_ranking(ds, rc, 0, 1), InvalidParam);
    }
}

TEST_CASE("support-vector frequencies are bimodal at desk scale") {
    // >= 5 runs over a >= 5k corpus: a solid block of samples are support
    // vectors in every run, another solid block in at most one.
    const LabeledDataset ds = synth_blobs(3, 1700, 8, 3.0, 91);
    RankingConfig rc;
    rc.arch = ArchSpec::small_mlp(8, 12, 8, 3);
    rc.hyper = TrainConfig{3, 0.05, 32, 0.9};
    const CoreRanking cr = build_ranking(ds, rc, 5, 17);
    size_t at_max = 0, at_low = 0;
    for (int f : cr.freq) {
        if (f == cr.runs) ++at_max;
        if (f <= 1) ++at_low;
    }
    CHECK(double(at_max) >= 0.02 * double(cr.size()));
    CHECK(double(at_low) >= 0.02 * double(cr.size()));
}

TEST_CASE("histogram conserves the corpus") {
    const CoreRanking cr = make_ranking({0, 1, 2, 3, 4}, {0, 2, 2, 1, 2}, 2);
    const auto hist = frequency_histogram(cr);
    REQUIRE(hist.size() == 3);
    CHECK(hist[0] == std::pair<int, size_t>{0, 1});
    CHECK(hist[1] == std::pair<int, size_t>{1, 1});
    CHECK(hist[2] == std::pair<int, size_t>{2, 3});
    size_t total = 0;
    for (const auto& [f, c] : hist) total += c;
    CHECK(total == cr.size());
}

TEST_CASE("ranking csv round trip") {
    const CoreRanking cr = make_ranking({2, 5, 9}, {3, 0, 2}, 3);
    const std::string csv = ranking_to_csv(cr);
    CHECK(csv.find("# runs=3 base_seed=0") == 0);
    const CoreRanking back = ranking_from_csv(csv);
    CHECK(back.corpus_ids == cr.corpus_ids);
    CHECK(back.freq == cr.freq);
    CHECK(back.runs == cr.runs);
    CHECK(ranking_to_csv(back) == csv);

    CHECK_THROWS_AS(ranking_from_csv("id,freq\n1,2\n"), InvalidParam);   // no header
    CHECK_THROWS_AS(ranking_from_csv("# runs=2 base_seed=0\nid,freq\n1,5\n"),
                    InvalidParam);  // freq > runs
}

TEST_CASE("forget-set directives resolve against the ranking") {
    const CoreRanking cr = make_ranking({0, 1, 2, 3, 4, 5}, {6, 5, 4, 3, 2, 1}, 6);

    CHECK(resolve_forget(parse_forget_spec("top-k:2"), cr).ids ==
          std::vector<int64_t>{0, 1});
    CHECK(resolve_forget(parse_forget_spec("non-top-k:4"), cr).ids ==
          std::vector<int64_t>{4, 5});
    CHECK(resolve_forget(parse_forget_spec("3\n5"), cr).ids == std::vector<int64_t>{3, 5});

    SUBCASE("union of directives") {
        const IdSet ids = resolve_forget(parse_forget_spec("top-k:1\n5\ntop-k:2"), cr);
        CHECK(ids.ids == std::vector<int64_t>{0, 1, 5});
    }
    SUBCASE("random draw from a pool") {
        const IdSet draw =
            resolve_forget(parse_forget_spec("random:2:123:non-top-k:3"), cr);
        CHECK(draw.size() == 2);
        CHECK(draw.is_subset_of(non_top_k(cr, 3)));
        const IdSet again =
            resolve_forget(parse_forget_spec("random:2:123:non-top-k:3"), cr);
        CHECK(draw == again);
    }
    SUBCASE("oversized draw fails") {
        CHECK_THROWS_AS(resolve_forget(parse_forget_spec("random:5:1:non-top-k:3"), cr),
                        InvalidParam);
    }
    SUBCASE("unknown id fails") {
        CHECK_THROWS_AS(resolve_forget(parse_forget_spec("77"), cr), UnknownId);
    }
}
