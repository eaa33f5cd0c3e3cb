// Acceptance suite: one line of output per criterion, nonzero exit on any
// failure. Criteria 6-8 need the Fashion-MNIST IDX files (see README); they
// report as failed-blocked when the data directory is missing.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "maxrr/audit.hpp"
#include "maxrr/error.hpp"
#include "maxrr/experiment.hpp"
#include "maxrr/model_io.hpp"
#include "maxrr/pipeline.hpp"
#include "maxrr/rng.hpp"
#include "oracles.hpp"

using namespace maxrr;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
    bool passed = false;
    std::string detail;
};

// ---------------------------------------------------------------------------
// Criterion 1: retraining after removing non-support samples reproduces the
// decision function (50 random instances, deviation <= 1e-6, < 30 s).
// ---------------------------------------------------------------------------
Outcome criterion_1() {
    const auto start = Clock::now();
    const double c_grid[3] = {0.5, 1.0, 10.0};
    double worst = 0.0;
    Rng rng(20240601);
    for (int inst = 0; inst < 50; ++inst) {
        const size_t m = 8 + rng.uniform_int(53);   // <= 60
        const size_t d = 1 + rng.uniform_int(5);    // <= 5
        Matrix X(m, d);
        std::vector<int8_t> y(m);
        std::vector<int64_t> ids(m);
        for (size_t i = 0; i < m; ++i) {
            y[i] = i % 2 == 0 ? 1 : -1;
            ids[i] = int64_t(i);
            for (size_t j = 0; j < d; ++j) {
                X.at(i, j) = rng.uniform(-2.0, 2.0) + 1.2 * double(y[i]);
            }
        }
        SvmConfig cfg;
        cfg.C = c_grid[inst % 3];
        cfg.tol = 1e-8;
        const BinarySvm full = solve_dual(X, y, ids, cfg);

        // random subset of the non-support samples
        std::vector<char> drop(m, 0);
        for (size_t i = 0; i < m; ++i) {
            if (full.alpha[i] <= cfg.alpha_tol && rng.uniform() < 0.7) drop[i] = 1;
        }
        std::vector<size_t> keep_rows;
        for (size_t i = 0; i < m; ++i) {
            if (!drop[i]) keep_rows.push_back(i);
        }
        Matrix Xr(keep_rows.size(), d);
        std::vector<int8_t> yr(keep_rows.size());
        std::vector<int64_t> idr(keep_rows.size());
        for (size_t i = 0; i < keep_rows.size(); ++i) {
            const auto row = X.row(keep_rows[i]);
            std::copy(row.begin(), row.end(), Xr.row(i).begin());
            yr[i] = y[keep_rows[i]];
            idr[i] = ids[keep_rows[i]];
        }
        const BinarySvm reduced = solve_dual(Xr, yr, idr, cfg);

        for (int q = 0; q < 100; ++q) {
            std::vector<double> x(d);
            for (double& v : x) v = rng.uniform(-4.0, 4.0);
            worst = std::max(worst,
                             std::abs(full.decision_linear(x) - reduced.decision_linear(x)));
        }
    }
    const double elapsed = seconds_since(start);
    Outcome out;
    out.passed = worst <= 1e-6 && elapsed < 30.0;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "max decision deviation %.3g (limit 1e-6), %.1fs (limit 30s)",
                  worst, elapsed);
    out.detail = buf;
    return out;
}

// ---------------------------------------------------------------------------
// Criterion 2: solver objective equals the projected-gradient oracle within
// 1e-6 and KKT residuals stay within tol (200 instances, < 60 s).
// ---------------------------------------------------------------------------
Outcome criterion_2() {
    const auto start = Clock::now();
    double worst_obj = 0.0, worst_kkt = 0.0;
    Rng rng(777002);
    const double tol = 1e-6;
    for (int inst = 0; inst < 200; ++inst) {
        const size_t m = 4 + rng.uniform_int(9);   // <= 12
        const size_t d = 1 + rng.uniform_int(3);   // <= 3
        Matrix X(m, d);
        std::vector<int8_t> y(m);
        std::vector<int64_t> ids(m);
        for (size_t i = 0; i < m; ++i) {
            y[i] = i % 2 == 0 ? 1 : -1;
            ids[i] = int64_t(i);
            for (size_t j = 0; j < d; ++j) {
                X.at(i, j) = rng.uniform(-2.0, 2.0) + 0.8 * double(y[i]);
            }
        }
        SvmConfig cfg;
        cfg.C = inst % 4 == 0 ? 0.5 : (inst % 4 == 1 ? 1.0 : (inst % 4 == 2 ? 3.0 : 10.0));
        cfg.tol = tol;
        const BinarySvm m_smo = solve_dual(X, y, ids, cfg);
        const double obj_smo = oracle::dual_objective(X, y, m_smo.alpha);
        const auto ref = oracle::pg_dual(X, y, cfg.C, 30000);
        worst_obj = std::max(worst_obj, std::abs(obj_smo - ref.objective));
        worst_kkt = std::max(
            worst_kkt, oracle::kkt_residual(X, y, m_smo.alpha, m_smo.bias, cfg.C));
    }
    const double elapsed = seconds_since(start);
    Outcome out;
    out.passed = worst_obj <= 1e-6 && worst_kkt <= tol && elapsed < 60.0;
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "max |objective gap| %.3g (limit 1e-6), max KKT residual %.3g (limit %.0e), "
                  "%.1fs (limit 60s)",
                  worst_obj, worst_kkt, tol, elapsed);
    out.detail = buf;
    return out;
}

// ---------------------------------------------------------------------------
// Criterion 3: analytic gradients match central finite differences to 1e-4
// relative error over 100 random draws (< 60 s).
// ---------------------------------------------------------------------------
Outcome criterion_3() {
    const auto start = Clock::now();
    double worst = 0.0;
    int draws = 0;
    Rng rng(31337);
    while (draws < 100) {
        ArchSpec arch;
        if (draws % 4 == 3) {
            arch.name = "conv";
            arch.input = Shape3{8, 8, 1};
            arch.layers = {
                LayerDesc{LayerKind::Conv5x5, 0, 2, 0},
                LayerDesc{LayerKind::Relu},
                LayerDesc{LayerKind::AvgPool2x2},
                LayerDesc{LayerKind::Linear, 2 + int(rng.uniform_int(3))},
                LayerDesc{LayerKind::Softmax},
            };
        } else {
            const int in = 3 + int(rng.uniform_int(6));
            const int h = 2 + int(rng.uniform_int(8));
            const int nc = 2 + int(rng.uniform_int(4));
            arch.name = "mlp";
            arch.input = Shape3{1, 1, in};
            arch.layers = {
                LayerDesc{LayerKind::Linear, h},
                LayerDesc{LayerKind::Relu},
                LayerDesc{LayerKind::Linear, nc},
                LayerDesc{LayerKind::Softmax},
            };
        }
        const FeatureExtractor fe = init_fe(arch, rng.next_u64());
        if (fe.param_count() > 500) continue;  // stay inside the stated envelope
        ++draws;
        const size_t batch = 1 + rng.uniform_int(8);
        Matrix bx(batch, size_t(arch.input.count()));
        for (double& v : bx.data) v = rng.uniform(-1.0, 1.0);
        std::vector<int> by(batch);
        for (auto& v : by) v = int(rng.uniform_int(uint64_t(arch.num_classes())));

        const Gradients analytic = loss_and_grads(fe, bx, by);
        const auto numeric = oracle::finite_diff_grads(fe, bx, by, 1e-5);
        auto rel = [](double a, double n) {
            return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
        };
        for (size_t li = 0; li < analytic.layers.size(); ++li) {
            for (size_t i = 0; i < analytic.layers[li].W.size(); ++i) {
                worst = std::max(worst, rel(analytic.layers[li].W[i], numeric[li].W[i]));
            }
            for (size_t i = 0; i < analytic.layers[li].b.size(); ++i) {
                worst = std::max(worst, rel(analytic.layers[li].b[i], numeric[li].b[i]));
            }
        }
    }
    const double elapsed = seconds_since(start);
    Outcome out;
    out.passed = worst <= 1e-4 && elapsed < 60.0;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "max relative error %.3g (limit 1e-4), %.1fs (limit 60s)",
                  worst, elapsed);
    out.detail = buf;
    return out;
}

// ---------------------------------------------------------------------------
// Criterion 4: ROC points and the optimized threshold match brute force
// exactly on 100 random membership sets (< 10 s).
// ---------------------------------------------------------------------------
Outcome criterion_4() {
    const auto start = Clock::now();
    size_t mismatches = 0;
    Rng rng(2718);
    for (int inst = 0; inst < 100; ++inst) {
        const size_t n_pos = 1 + rng.uniform_int(100);
        const size_t n_neg = 1 + rng.uniform_int(100);
        std::vector<MembershipPoint> m;
        int64_t id = 0;
        for (size_t i = 0; i < n_pos; ++i) {
            m.push_back({std::floor(rng.uniform() * 50.0) / 10.0, true, id++});
        }
        for (size_t i = 0; i < n_neg; ++i) {
            m.push_back({std::floor(rng.uniform() * 50.0) / 10.0 + rng.uniform(), false, id++});
        }
        const RocResult fast = roc_and_threshold(m);
        const auto brute = oracle::brute_force_roc(m);
        if (fast.curve.thresholds != brute.thresholds || fast.curve.fpr != brute.fpr ||
            fast.curve.tpr != brute.tpr || fast.tau_star != brute.tau_star) {
            ++mismatches;
        }
    }
    const double elapsed = seconds_since(start);
    Outcome out;
    out.passed = mismatches == 0 && elapsed < 10.0;
    char buf[120];
    std::snprintf(buf, sizeof(buf), "%zu/100 instances mismatched, %.1fs (limit 10s)",
                  mismatches, elapsed);
    out.detail = buf;
    return out;
}

// ---------------------------------------------------------------------------
// Criterion 5: unlearning anything outside S and D_k is a byte-level no-op
// whose witness reconstruction deviates by exactly zero (20 random requests).
// ---------------------------------------------------------------------------
Outcome criterion_5() {
    const LabeledDataset train = synth_blobs(3, 120, 4, 6.0, 6001);
    LabeledDataset test = synth_blobs(3, 40, 4, 6.0, 6002);
    for (auto& id : test.ids) id += 1000000;

    PipelineConfig pc;
    pc.arch = ArchSpec::small_mlp(4, 10, 6, 3);
    pc.hyper = TrainConfig{4, 0.05, 16, 0.9};
    pc.platt_holdout = 0.5;
    RankingConfig rc{pc.arch, pc.hyper, pc.svm};
    const CoreRanking cr = build_ranking(train, rc, 2, 6003);
    const SplitModel model = train_unlearning_aware(train, cr, 90, pc, 6004);

    const IdSet quiet = train.id_set()
                            .set_difference(model.support_ids)
                            .set_difference(model.fe_train_ids);
    if (quiet.empty()) return {false, "no samples outside S and D_k on this corpus"};

    const uint64_t base_hash = model.hash();
    size_t failures = 0;
    double worst_dev = 0.0;
    for (uint64_t trial = 0; trial < 20; ++trial) {
        const IdSet forget = sample_ids(quiet, 1 + trial % quiet.size(), trial);
        const UnlearnOutcome out = unlearn(model, {forget}, PoolPolicy::Full, train);
        const WitnessReport wr = check_generalized_exact(train, out, trial, &test);
        worst_dev = std::max(worst_dev, wr.max_deviation);
        if (out.mode != UnlearnMode::ExactNoOp || out.model.hash() != base_hash ||
            !wr.passed || wr.max_deviation != 0.0) {
            ++failures;
        }
    }
    Outcome out;
    out.passed = failures == 0;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "%zu/20 requests violated the no-op contract (max witness deviation %.3g)",
                  failures, worst_dev);
    out.detail = buf;
    return out;
}

// ---------------------------------------------------------------------------
// Criteria 6-8 share one desk-scale Fashion-MNIST study.
// ---------------------------------------------------------------------------
struct DeskStudy {
    bool data_found = false;
    std::string data_note;
    double elapsed = 0.0;

    // mean accuracies over the runs
    double acc_aware = 0.0;          // extractor on core, SVM on all (no unlearning)
    double acc_retrain_core = 0.0;   // full retrain on the core set alone
    double acc_base_full = 0.0;      // plain end-to-end model, no unlearning
    double acc_base_svm_unl = 0.0;   // base model after SVM-only unlearning of D_k
    double acc_maxrr_unl = 0.0;      // unlearning-aware model after unlearning D_k
    double acc_full_retrain = 0.0;   // exact baseline: retrain everything on D \ D_k

    CoreRanking ranking;
    std::vector<AuditReport> audit_maxrr;
    std::vector<AuditReport> audit_baseline;
    int runs = 0;
};

std::string data_directory() {
    const char* env = std::getenv("MAXRR_DATA_DIR");
    return env != nullptr ? env : "data";
}

const DeskStudy& desk_study() {
    static const DeskStudy study = [] {
        DeskStudy s;
        const auto start = Clock::now();
        const std::string dir = data_directory();
        const fs::path images = fs::path(dir) / "train-images-idx3-ubyte";
        if (!fs::exists(images)) {
            s.data_note = "Fashion-MNIST not found under '" + dir +
                          "' (set MAXRR_DATA_DIR); criteria 6-8 cannot run";
            return s;
        }
        s.data_found = true;

        CorpusConfig cc;
        cc.kind = "fashion-mnist";
        cc.data_dir = dir;
        cc.train_subset = 10000;
        cc.test_subset = 2000;
        cc.subset_seed = 99;
        const LoadedCorpus corpus = load_corpus(cc);
        const size_t m = corpus.train.size();
        const size_t k = m / 3;

        PipelineConfig pc;
        pc.arch = ArchSpec::mlp(int(corpus.train.dim()), corpus.train.num_classes);
        pc.hyper = TrainConfig{10, 0.01, 64, 0.9};
        pc.svm = SvmConfig{};
        pc.platt_holdout = 0.2;

        RankingConfig rc{pc.arch, pc.hyper, pc.svm};
        const int R = 5;
        s.ranking = build_ranking(corpus.train, rc, R, 4242);
        s.runs = 5;

        const IdSet dk = top_k(s.ranking, k);
        const IdSet dnk = non_top_k(s.ranking, k);
        const UnlearnRequest forget_core{dk};
        const UnlearnRequest forget_rest{dnk};

        for (int r = 0; r < s.runs; ++r) {
            const uint64_t seed = mix_seed(4242, 0x52554E00ULL + uint64_t(r));

            // Unlearning-aware model and its SVM-only unlearning of D_k.
            const SplitModel aware =
                train_unlearning_aware(corpus.train, s.ranking, k, pc, seed);
            s.acc_aware += model_accuracy(aware, corpus.test);
            const SplitModel maxrr_unl =
                unlearn(aware, forget_core, PoolPolicy::Full, corpus.train).model;
            s.acc_maxrr_unl += model_accuracy(maxrr_unl, corpus.test);

            // Plain end-to-end baseline and its SVM-only unlearning of D_k.
            const SplitModel base = train_split_model(corpus.train, corpus.train, pc, seed, 0);
            s.acc_base_full += model_accuracy(base, corpus.test);
            s.acc_base_svm_unl += model_accuracy(
                unlearn(base, forget_core, PoolPolicy::Full, corpus.train).model, corpus.test);

            // Full retrain on the core alone (everything else forgotten).
            const SplitModel retrain_core =
                full_retrain(corpus.train, forget_rest, nullptr, 0, false, pc, seed);
            s.acc_retrain_core += model_accuracy(retrain_core, corpus.test);

            // Exact baseline for unlearning D_k: retrain everything on D \ D_k.
            const SplitModel full_rt =
                full_retrain(corpus.train, forget_core, nullptr, 0, false, pc, seed);
            s.acc_full_retrain += model_accuracy(full_rt, corpus.test);

            s.audit_maxrr.push_back(verify_unlearning(maxrr_unl, corpus.train, corpus.test,
                                                      dk, MemberPool::Full));
            s.audit_baseline.push_back(verify_unlearning(full_rt, corpus.train, corpus.test,
                                                         dk, MemberPool::Full));
        }
        for (double* v : {&s.acc_aware, &s.acc_retrain_core, &s.acc_base_full,
                          &s.acc_base_svm_unl, &s.acc_maxrr_unl, &s.acc_full_retrain}) {
            *v /= double(s.runs);
        }
        s.elapsed = seconds_since(start);
        return s;
    }();
    return study;
}

Outcome criterion_6() {
    const DeskStudy& s = desk_study();
    if (!s.data_found) return {false, s.data_note};

    const double gap_a = s.acc_aware - s.acc_retrain_core;
    const double gap_b = std::abs(s.acc_base_svm_unl - s.acc_base_full);
    const double gap_c = s.acc_maxrr_unl - s.acc_full_retrain;
    const bool ok_a = gap_a >= 0.05;
    const bool ok_b = gap_b <= 0.03;
    const bool ok_c = gap_c >= -0.01;
    const bool ok_t = s.elapsed < 1800.0;

    Outcome out;
    out.passed = ok_a && ok_b && ok_c && ok_t;
    char buf[352];
    std::snprintf(
        buf, sizeof(buf),
        "(a) core-FE+full-SVM %.4f vs core-only retrain %.4f (gap %+.4f, need >= +0.05) | "
        "(b) SVM-unlearn %.4f vs baseline %.4f (|gap| %.4f, limit 0.03) | "
        "(c) MaxRR %.4f vs full retrain %.4f (gap %+.4f, need >= -0.01) | %.0fs (limit 1800s)",
        s.acc_aware, s.acc_retrain_core, gap_a, s.acc_base_svm_unl, s.acc_base_full, gap_b,
        s.acc_maxrr_unl, s.acc_full_retrain, gap_c, s.elapsed);
    out.detail = buf;
    return out;
}

Outcome criterion_7() {
    const DeskStudy& s = desk_study();
    if (!s.data_found) return {false, s.data_note};

    const size_t m = s.ranking.size();
    size_t at_max = 0, at_low = 0;
    for (int f : s.ranking.freq) {
        if (f == s.ranking.runs) ++at_max;
        if (f <= 1) ++at_low;
    }
    const double pct_max = 100.0 * double(at_max) / double(m);
    const double pct_low = 100.0 * double(at_low) / double(m);
    Outcome out;
    out.passed = pct_max >= 2.0 && pct_low >= 2.0;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "%.1f%% of samples at f=R and %.1f%% at f<=1 (both need >= 2%%)", pct_max,
                  pct_low);
    out.detail = buf;
    return out;
}

Outcome criterion_8() {
    const DeskStudy& s = desk_study();
    if (!s.data_found) return {false, s.data_note};

    const AgreementCurve curve = agreement_curve(s.audit_maxrr, s.audit_baseline);
    // percentage of samples with identical verdicts in >= 80% of the runs
    double pct_at_80 = 0.0;
    for (size_t i = 0; i < curve.agreement_pct.size(); ++i) {
        if (curve.agreement_pct[i] >= 80.0 - 1e-9) {
            pct_at_80 = curve.sample_pct[i];
            break;
        }
    }
    Outcome out;
    out.passed = pct_at_80 >= 70.0;
    char buf[120];
    std::snprintf(buf, sizeof(buf),
                  "%.1f%% of samples agree in >= 80%% of runs (need >= 70%%)", pct_at_80);
    out.detail = buf;
    return out;
}

// ---------------------------------------------------------------------------
// Criterion 9: rerunning every CLI command under an identical config yields
// byte-identical artifacts.
// ---------------------------------------------------------------------------
std::string read_bytes(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

Outcome criterion_9() {
    const fs::path dir = fs::temp_directory_path() / "maxrr_acceptance_determinism";
    fs::remove_all(dir);

    ExperimentConfig cfg;
    cfg.corpus.kind = "blobs";
    cfg.corpus.num_classes = 3;
    cfg.corpus.per_class = 60;
    cfg.corpus.dim = 6;
    cfg.corpus.separation = 6.0;
    cfg.corpus.blob_seed = 88;
    cfg.corpus.test_per_class = 30;
    cfg.arch = "mlp:10:6";
    cfg.hyper = TrainConfig{3, 0.05, 16, 0.9};
    cfg.platt_holdout = 0.5;
    cfg.ranking_runs = 2;
    cfg.runs = 2;
    cfg.k = 50;
    cfg.seed = 12;
    cfg.out_dir = dir.string();

    auto run_all = [&] {
        cmd_rank(cfg);
        cmd_train(cfg);
        cmd_unlearn(cfg, "", "top-k:50");
        cmd_audit(cfg, "maxrr", "full-retrain", "top-k:50");
        cmd_table1(cfg);
        cmd_sensitivity(cfg);
    };

    run_all();
    std::vector<std::pair<std::string, std::string>> first;
    for (const auto& entry : fs::directory_iterator(dir)) {
        first.emplace_back(entry.path().filename().string(), read_bytes(entry.path()));
    }
    std::sort(first.begin(), first.end());

    run_all();  // same config, same directory
    size_t mismatched = 0;
    for (const auto& [name, bytes] : first) {
        if (read_bytes(dir / name) != bytes) ++mismatched;
    }

    Outcome out;
    out.passed = mismatched == 0 && !first.empty();
    char buf[120];
    std::snprintf(buf, sizeof(buf), "%zu/%zu artifacts changed across reruns", mismatched,
                  first.size());
    out.detail = buf;
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    struct Entry {
        int id;
        const char* name;
        std::function<Outcome()> run;
    };
    const std::vector<Entry> criteria = {
        {1, "non-support removal preserves the decision function", criterion_1},
        {2, "dual solver matches the projected-gradient oracle", criterion_2},
        {3, "analytic gradients match finite differences", criterion_3},
        {4, "ROC and threshold match brute force", criterion_4},
        {5, "no-op exact unlearning outside S and D_k", criterion_5},
        {6, "desk-scale accuracy-table orderings (Fashion-MNIST)", criterion_6},
        {7, "desk-scale support-frequency bimodality (Fashion-MNIST)", criterion_7},
        {8, "desk-scale verification agreement (Fashion-MNIST)", criterion_8},
        {9, "byte-identical artifacts across reruns", criterion_9},
    };

    std::vector<int> only;
    for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));

    int failures = 0;
    for (const Entry& entry : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), entry.id) == only.end()) {
            continue;
        }
        Outcome out;
        try {
            out = entry.run();
        } catch (const std::exception& e) {
            out.passed = false;
            out.detail = std::string("exception: ") + e.what();
        }
        std::printf("[%s] criterion %d: %s - %s\n", out.passed ? "PASS" : "FAIL", entry.id,
                    entry.name, out.detail.c_str());
        std::fflush(stdout);
        if (!out.passed) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
