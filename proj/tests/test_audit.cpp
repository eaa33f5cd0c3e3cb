#include <cmath>

#include "doctest.h"
#include "maxrr/audit.hpp"
#include "maxrr/error.hpp"
#include "maxrr/rng.hpp"
#include "oracles.hpp"

using namespace maxrr;

namespace {

// Model whose decision values are all zero; per-class Platt offsets steer the
// calibrated probabilities exactly.
SplitModel flat_model(int num_classes, int dim, const std::vector<double>& platt_b) {
    SplitModel m;
    m.fe = init_fe(ArchSpec::small_mlp(dim, 4, 3, num_classes), 1);
    for (auto& lw : m.fe.weights) {
        std::fill(lw.W.begin(), lw.W.end(), 0.0);
        std::fill(lw.b.begin(), lw.b.end(), 0.0);
    }
    m.svm.classes.resize(size_t(num_classes));
    m.svm.platt.resize(size_t(num_classes));
    for (int c = 0; c < num_classes; ++c) {
        m.svm.classes[size_t(c)].w.assign(3, 0.0);  // embedding dim of small_mlp(…,3,…)
        m.svm.classes[size_t(c)].bias = 0.0;
        m.svm.platt[size_t(c)] = PlattParams{0.0, platt_b[size_t(c)], true};
    }
    return m;
}

LabeledDataset tiny_ds(int num_classes, int dim, int rows) {
    LabeledDataset ds;
    ds.features = Matrix(size_t(rows), size_t(dim));
    ds.labels.resize(size_t(rows));
    ds.ids.resize(size_t(rows));
    ds.num_classes = num_classes;
    for (int i = 0; i < rows; ++i) {
        ds.labels[size_t(i)] = i % num_classes;
        ds.ids[size_t(i)] = i;
    }
    return ds;
}

std::vector<MembershipPoint> points(const std::vector<double>& members,
                                    const std::vector<double>& nonmembers) {
    std::vector<MembershipPoint> out;
    int64_t id = 0;
    for (double c : members) out.push_back({c, true, id++});
    for (double c : nonmembers) out.push_back({c, false, id++});
    return out;
}

}  // namespace

TEST_CASE("cross-entropy confidences") {
    SUBCASE("uniform probabilities give ln(num_classes)") {
        const SplitModel m = flat_model(10, 4, std::vector<double>(10, 0.0));
        const LabeledDataset ds = tiny_ds(10, 4, 10);
        const ConfidenceSet c = confidences(m, ds);
        for (double v : c.values) {
            CHECK(v == doctest::Approx(std::log(10.0)).epsilon(1e-12));
        }
    }
    SUBCASE("probability 1 gives confidence 0") {
        // class 0 sigmoid ~1, the other class ~0: normalized prob of 0 is ~1
        const SplitModel m = flat_model(2, 4, {-80.0, 80.0});
        LabeledDataset ds = tiny_ds(2, 4, 1);
        ds.labels[0] = 0;
        const ConfidenceSet c = confidences(m, ds);
        CHECK(c.values[0] == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("clamp bounds the confidence at 12 ln 10") {
        const SplitModel m = flat_model(2, 4, {80.0, -80.0});  // true class prob ~ e^-160
        LabeledDataset ds = tiny_ds(2, 4, 1);
        ds.labels[0] = 0;
        const ConfidenceSet c = confidences(m, ds);
        CHECK(c.values[0] == doctest::Approx(12.0 * std::log(10.0)).epsilon(1e-9));
    }
    SUBCASE("missing calibration is an error") {
        SplitModel m = flat_model(2, 4, {0.0, 0.0});
        m.svm.platt.clear();
        m.svm.platt.resize(2);
        CHECK_THROWS_AS(confidences(m, tiny_ds(2, 4, 2)), MissingCalibration);
    }
}

TEST_CASE("membership set construction") {
    ConfidenceSet members{{0, 1}, {0.1, 0.2}, 0};
    ConfidenceSet nonmembers{{5, 6}, {0.9, 1.0}, 0};
    const auto m = build_membership_set(members, nonmembers);
    REQUIRE(m.size() == 4);
    CHECK(m[0].member);
    CHECK_FALSE(m[3].member);

    ConfidenceSet overlapping{{1, 7}, {0.4, 0.5}, 0};
    CHECK_THROWS_AS(build_membership_set(members, overlapping), OverlappingPools);
    CHECK_THROWS_AS(build_membership_set(ConfidenceSet{}, nonmembers), EmptyPool);
}

TEST_CASE("roc threshold optimization") {
    SUBCASE("separated pools reach J = 1 at the midpoint") {
        const auto m = points({0.1, 0.2}, {0.9, 1.0});
        const RocResult r = roc_and_threshold(m);
        CHECK(r.j_star == doctest::Approx(1.0));
        CHECK(r.tau_star == doctest::Approx(0.55));
    }
    SUBCASE("identical multisets cannot be separated") {
        const auto m = points({0.3, 0.7}, {0.3, 0.7});
        const RocResult r = roc_and_threshold(m);
        CHECK(r.j_star == doctest::Approx(0.0));
    }
    SUBCASE("curve is monotone with anchored endpoints") {
        Rng rng(8);
        std::vector<double> a, b;
        for (int i = 0; i < 40; ++i) a.push_back(rng.uniform());
        for (int i = 0; i < 25; ++i) b.push_back(0.3 + rng.uniform());
        const RocResult r = roc_and_threshold(points(a, b));
        CHECK(r.curve.fpr.front() == 0.0);
        CHECK(r.curve.tpr.front() == 0.0);
        CHECK(r.curve.fpr.back() == 1.0);
        CHECK(r.curve.tpr.back() == 1.0);
        for (size_t i = 1; i < r.curve.thresholds.size(); ++i) {
            CHECK(r.curve.thresholds[i] > r.curve.thresholds[i - 1]);
            CHECK(r.curve.fpr[i] >= r.curve.fpr[i - 1]);
            CHECK(r.curve.tpr[i] >= r.curve.tpr[i - 1]);
        }
    }
    SUBCASE("matches the quadratic brute-force oracle exactly") {
        Rng rng(99);
        for (int trial = 0; trial < 10; ++trial) {
            std::vector<double> a, b;
            const size_t na = 2 + rng.uniform_int(30);
            const size_t nb = 2 + rng.uniform_int(30);
            for (size_t i = 0; i < na; ++i) a.push_back(std::round(rng.uniform() * 20) / 10.0);
            for (size_t i = 0; i < nb; ++i) b.push_back(std::round(rng.uniform() * 20) / 10.0);
            const auto m = points(a, b);
            const RocResult fast = roc_and_threshold(m);
            const auto brute = oracle::brute_force_roc(m);
            CHECK(fast.curve.thresholds == brute.thresholds);
            CHECK(fast.curve.fpr == brute.fpr);
            CHECK(fast.curve.tpr == brute.tpr);
            CHECK(fast.tau_star == brute.tau_star);
        }
    }
    SUBCASE("ties prefer the smallest threshold") {
        // J = 0 everywhere; the minimum-value sentinel wins
        const auto m = points({0.5}, {0.5});
        const RocResult r = roc_and_threshold(m);
        CHECK(r.tau_star == 0.5);
    }
    SUBCASE("single class is rejected") {
        std::vector<MembershipPoint> m = {{0.1, true, 0}, {0.2, true, 1}};
        CHECK_THROWS_AS(roc_and_threshold(m), SingleClass);
    }
    SUBCASE("verdicts are scale invariant") {
        Rng rng(4);
        std::vector<double> a, b, queries;
        for (int i = 0; i < 30; ++i) a.push_back(rng.uniform());
        for (int i = 0; i < 30; ++i) b.push_back(0.4 + rng.uniform());
        for (int i = 0; i < 50; ++i) queries.push_back(1.4 * rng.uniform());
        const double tau1 = roc_and_threshold(points(a, b)).tau_star;
        const double scale = 37.5;
        std::vector<double> sa = a, sb = b;
        for (double& v : sa) v *= scale;
        for (double& v : sb) v *= scale;
        const double tau2 = roc_and_threshold(points(sa, sb)).tau_star;
        for (double q : queries) {
            CHECK((q < tau1) == (q * scale < tau2));
        }
    }
}

TEST_CASE("end-to-end verification on a model that never saw the forget set") {
    const LabeledDataset corpus = synth_blobs(3, 90, 4, 4.0, 515);
    LabeledDataset test = synth_blobs(3, 60, 4, 4.0, 516);
    for (auto& id : test.ids) id += 1000000;

    PipelineConfig pc;
    pc.arch = ArchSpec::small_mlp(4, 10, 6, 3);
    pc.hyper = TrainConfig{4, 0.05, 16, 0.9};
    pc.platt_holdout = 0.5;

    const IdSet forget = sample_ids(corpus.id_set(), 40, 77);
    // fully retrained on corpus \ forget: the model genuinely never saw D_f
    const SplitModel m = full_retrain(corpus, {forget}, nullptr, 0, false, pc, 9);
    const AuditReport report =
        verify_unlearning(m, corpus, test, forget, MemberPool::Full);

    // Verdicts recomputable from (confidence, tau*) bit-exactly.
    for (size_t i = 0; i < report.ids.size(); ++i) {
        CHECK(report.member[i] == (report.confidence[i] < report.tau_star ? 1 : 0));
    }

    // D_f behaves like the test distribution, so the claimed-unlearned rate
    // should approximate 1 - FPR(tau*).
    double fpr_at_tau = 0.0;
    for (size_t i = 0; i < report.roc.curve.thresholds.size(); ++i) {
        if (report.roc.curve.thresholds[i] == report.tau_star) {
            fpr_at_tau = report.roc.curve.fpr[i];
        }
    }
    const double claimed = double(report.claimed_unlearned()) / double(report.ids.size());
    CHECK(std::abs(claimed - (1.0 - fpr_at_tau)) <= 0.2);

    SUBCASE("forget ids must come from the training corpus") {
        CHECK_THROWS_AS(verify_unlearning(m, corpus, test, IdSet({424242}), MemberPool::Full),
                        UnknownId);
    }
}

TEST_CASE("restricted member pool excludes core samples") {
    const LabeledDataset corpus = synth_blobs(3, 60, 4, 5.0, 99);
    LabeledDataset test = synth_blobs(3, 40, 4, 5.0, 98);
    for (auto& id : test.ids) id += 1000000;

    PipelineConfig pc;
    pc.arch = ArchSpec::small_mlp(4, 8, 6, 3);
    pc.hyper = TrainConfig{3, 0.05, 16, 0.9};
    pc.platt_holdout = 0.5;
    RankingConfig rc{pc.arch, pc.hyper, pc.svm};
    const CoreRanking cr = build_ranking(corpus, rc, 1, 5);
    const SplitModel m = train_unlearning_aware(corpus, cr, 50, pc, 3);

    const IdSet forget = sample_ids(non_top_k(cr, 50), 20, 7);
    const AuditReport full = verify_unlearning(m, corpus, test, forget, MemberPool::Full);
    const AuditReport restricted =
        verify_unlearning(m, corpus, test, forget, MemberPool::NonCore);
    CHECK(full.pool_desc == "full");
    CHECK(restricted.pool_desc == "non_core");
    // Pool choice changes tau*; both verdict sets stay internally consistent.
    for (size_t i = 0; i < restricted.ids.size(); ++i) {
        CHECK(restricted.member[i] ==
              (restricted.confidence[i] < restricted.tau_star ? 1 : 0));
    }
}

TEST_CASE("agreement curves") {
    auto make_report = [](std::vector<uint8_t> verdicts) {
        AuditReport r;
        r.ids.resize(verdicts.size());
        for (size_t i = 0; i < verdicts.size(); ++i) r.ids[i] = int64_t(i);
        r.confidence.assign(verdicts.size(), 0.0);
        r.member = std::move(verdicts);
        return r;
    };

    SUBCASE("identical runs agree everywhere") {
        std::vector<AuditReport> a, b;
        for (int r = 0; r < 4; ++r) {
            a.push_back(make_report({1, 0, 1, 0, 1}));
            b.push_back(make_report({1, 0, 1, 0, 1}));
        }
        const AgreementCurve c = agreement_curve(a, b);
        for (double pct : c.sample_pct) CHECK(pct == 100.0);
        CHECK(c.agreement_pct.front() == 0.0);
        CHECK(c.agreement_pct.back() == 100.0);
    }
    SUBCASE("independent coin-flip verdicts rarely agree in every run") {
        Rng rng(17);
        const size_t n = 2000;
        const int runs = 20;
        std::vector<AuditReport> a, b;
        for (int r = 0; r < runs; ++r) {
            std::vector<uint8_t> va(n), vb(n);
            for (size_t i = 0; i < n; ++i) {
                va[i] = rng.uniform() < 0.5 ? 1 : 0;
                vb[i] = rng.uniform() < 0.5 ? 1 : 0;
            }
            a.push_back(make_report(std::move(va)));
            b.push_back(make_report(std::move(vb)));
        }
        const AgreementCurve c = agreement_curve(a, b);
        CHECK(c.sample_pct.back() <= 1.0);   // (1/2)^20 of full agreement
        CHECK(c.sample_pct.front() == 100.0);
    }
    SUBCASE("histogram totals match the sample count") {
        std::vector<AuditReport> a;
        a.push_back(make_report({1, 0, 0}));
        a.push_back(make_report({1, 1, 0}));
        const auto hist = claims_histogram(a);
        REQUIRE(hist.size() == 3);
        CHECK(hist[0] == 1);  // first sample never claimed unlearned
        CHECK(hist[1] == 1);
        CHECK(hist[2] == 1);
    }
    SUBCASE("mismatched runs are rejected") {
        std::vector<AuditReport> a = {make_report({1, 0})};
        std::vector<AuditReport> b = {make_report({1, 0}), make_report({1, 0})};
        CHECK_THROWS_AS(agreement_curve(a, b), RunMismatch);
        std::vector<AuditReport> c = {make_report({1, 0, 1})};
        CHECK_THROWS_AS(agreement_curve(a, c), RunMismatch);
    }
}
