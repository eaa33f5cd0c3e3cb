#include "maxrr/experiment.hpp"

#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "maxrr/error.hpp"
#include "maxrr/hash.hpp"
#include "maxrr/model_io.hpp"
#include "maxrr/parallel.hpp"
#include "maxrr/rng.hpp"

namespace maxrr {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Test-set IDs live far above any training ID so membership pools never collide.
constexpr int64_t kTestIdOffset = 1'000'000'000'000LL;

LabeledDataset offset_ids(LabeledDataset ds, int64_t delta) {
    for (int64_t& id : ds.ids) id += delta;
    return ds;
}

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path + " for writing");
    out << content;
    if (!out) throw Error("short write to " + path);
}

std::string output_path(const ExperimentConfig& cfg, const std::string& name) {
    fs::create_directories(cfg.out_dir);
    return (fs::path(cfg.out_dir) / name).string();
}

std::string config_comment(const ExperimentConfig& cfg) {
    return "# config=" + to_hex(cfg.config_hash()) + "\n";
}

CoreRanking load_ranking(const ExperimentConfig& cfg) {
    const std::string path = (fs::path(cfg.out_dir) / "ranking.csv").string();
    std::ifstream in(path);
    if (!in) {
        throw Error("ranking file " + path + " not found; run the `rank` subcommand first");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ranking_from_csv(ss.str());
}

ForgetSpec forget_spec_from_text(const std::string& text) {
    if (!text.empty() && text[0] == '@') return load_forget_spec(text.substr(1));
    std::string lines = text;
    for (char& c : lines) {
        if (c == ';') c = '\n';
    }
    return parse_forget_spec(lines);
}

KernelKind kernel_from_string(const std::string& s) {
    if (s == "linear") return KernelKind::Linear;
    throw InvalidParam("unknown kernel '" + s + "'");
}

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

// Wall-clock timings go to stderr only; artifacts stay byte-identical across reruns.
void log_timing(const char* what, const Timer& t) {
    std::fprintf(stderr, "[maxrr] %s took %.1fs\n", what, t.seconds());
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
    const json j = json::parse(text);
    ExperimentConfig cfg;
    if (j.contains("corpus")) {
        const json& c = j.at("corpus");
        cfg.corpus.kind = c.value("kind", cfg.corpus.kind);
        cfg.corpus.train_images = c.value("train_images", cfg.corpus.train_images);
        cfg.corpus.train_labels = c.value("train_labels", cfg.corpus.train_labels);
        cfg.corpus.test_images = c.value("test_images", cfg.corpus.test_images);
        cfg.corpus.test_labels = c.value("test_labels", cfg.corpus.test_labels);
        cfg.corpus.data_dir = c.value("data_dir", cfg.corpus.data_dir);
        cfg.corpus.num_classes = c.value("num_classes", cfg.corpus.num_classes);
        cfg.corpus.per_class = c.value("per_class", cfg.corpus.per_class);
        cfg.corpus.dim = c.value("dim", cfg.corpus.dim);
        cfg.corpus.separation = c.value("separation", cfg.corpus.separation);
        cfg.corpus.blob_seed = c.value("blob_seed", cfg.corpus.blob_seed);
        cfg.corpus.test_per_class = c.value("test_per_class", cfg.corpus.test_per_class);
        cfg.corpus.train_subset = c.value("train_subset", cfg.corpus.train_subset);
        cfg.corpus.test_subset = c.value("test_subset", cfg.corpus.test_subset);
        cfg.corpus.subset_seed = c.value("subset_seed", cfg.corpus.subset_seed);
    }
    cfg.arch = j.value("arch", cfg.arch);
    if (j.contains("hyper")) {
        const json& h = j.at("hyper");
        cfg.hyper.epochs = h.value("epochs", cfg.hyper.epochs);
        cfg.hyper.lr = h.value("lr", cfg.hyper.lr);
        cfg.hyper.batch = h.value("batch", cfg.hyper.batch);
        cfg.hyper.momentum = h.value("momentum", cfg.hyper.momentum);
    }
    if (j.contains("svm")) {
        const json& s = j.at("svm");
        cfg.svm.C = s.value("C", cfg.svm.C);
        cfg.svm.tol = s.value("tol", cfg.svm.tol);
        cfg.svm.alpha_tol = s.value("alpha_tol", cfg.svm.alpha_tol);
        cfg.svm.max_iter = s.value("max_iter", cfg.svm.max_iter);
        cfg.svm.kernel = kernel_from_string(s.value("kernel", std::string("linear")));
    }
    cfg.platt_holdout = j.value("platt_holdout", cfg.platt_holdout);
    cfg.k = j.value("k", cfg.k);
    cfg.ranking_runs = j.value("ranking_runs", cfg.ranking_runs);
    cfg.runs = j.value("runs", cfg.runs);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.forget_spec = j.value("forget_spec", cfg.forget_spec);
    const std::string pool = j.value("pool", std::string("full"));
    if (pool == "full") {
        cfg.pool = PoolPolicy::Full;
    } else if (pool == "support") {
        cfg.pool = PoolPolicy::Support;
    } else {
        throw InvalidParam("config: pool must be 'full' or 'support'");
    }
    const std::string mia = j.value("mia_pool", std::string("full"));
    if (mia == "full") {
        cfg.mia_pool = MemberPool::Full;
    } else if (mia == "non-core") {
        cfg.mia_pool = MemberPool::NonCore;
    } else {
        throw InvalidParam("config: mia_pool must be 'full' or 'non-core'");
    }
    cfg.dr_size = j.value("dr_size", cfg.dr_size);
    cfg.sensitivity_fraction = j.value("sensitivity_fraction", cfg.sensitivity_fraction);
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

std::string ExperimentConfig::to_json() const {
    json j;
    j["corpus"] = {{"kind", corpus.kind},
                   {"train_images", corpus.train_images},
                   {"train_labels", corpus.train_labels},
                   {"test_images", corpus.test_images},
                   {"test_labels", corpus.test_labels},
                   {"data_dir", corpus.data_dir},
                   {"num_classes", corpus.num_classes},
                   {"per_class", corpus.per_class},
                   {"dim", corpus.dim},
                   {"separation", corpus.separation},
                   {"blob_seed", corpus.blob_seed},
                   {"test_per_class", corpus.test_per_class},
                   {"train_subset", corpus.train_subset},
                   {"test_subset", corpus.test_subset},
                   {"subset_seed", corpus.subset_seed}};
    j["arch"] = arch;
    j["hyper"] = {{"epochs", hyper.epochs},
                  {"lr", hyper.lr},
                  {"batch", hyper.batch},
                  {"momentum", hyper.momentum}};
    j["svm"] = {{"C", svm.C},
                {"tol", svm.tol},
                {"alpha_tol", svm.alpha_tol},
                {"max_iter", svm.max_iter},
                {"kernel", "linear"}};
    j["platt_holdout"] = platt_holdout;
    j["k"] = k;
    j["ranking_runs"] = ranking_runs;
    j["runs"] = runs;
    j["seed"] = seed;
    j["forget_spec"] = forget_spec;
    j["pool"] = to_string(pool);
    j["mia_pool"] = mia_pool == MemberPool::Full ? "full" : "non-core";
    j["dr_size"] = dr_size;
    j["sensitivity_fraction"] = sensitivity_fraction;
    j["out_dir"] = out_dir;
    return j.dump(2);
}

uint64_t ExperimentConfig::config_hash() const {
    // Where artifacts land has no bearing on what they contain.
    ExperimentConfig canon_cfg = *this;
    canon_cfg.out_dir.clear();
    const std::string canon = canon_cfg.to_json();
    return fnv1a(canon.data(), canon.size());
}

size_t ExperimentConfig::resolve_k(size_t corpus_size) const {
    const size_t kk = k > 0 ? k : corpus_size / 3;
    if (kk > corpus_size) throw KOutOfRange("k exceeds corpus size");
    return kk;
}

size_t ExperimentConfig::resolve_dr(size_t corpus_size) const {
    return dr_size > 0 ? dr_size : corpus_size / 6;
}

LoadedCorpus load_corpus(const CorpusConfig& cfg) {
    LoadedCorpus out;
    if (cfg.kind == "blobs") {
        out.train = synth_blobs(cfg.num_classes, cfg.per_class, cfg.dim, cfg.separation,
                                cfg.blob_seed);
        out.test = offset_ids(synth_blobs(cfg.num_classes, cfg.test_per_class, cfg.dim,
                                          cfg.separation, cfg.blob_seed + 1),
                              kTestIdOffset);
    } else if (cfg.kind == "fashion-mnist" || cfg.kind == "mnist" || cfg.kind == "idx") {
        std::string dir = cfg.data_dir;
        if (dir.empty()) {
            const char* env = std::getenv("MAXRR_DATA_DIR");
            dir = env != nullptr ? env : "data";
        }
        auto resolve = [&](const std::string& given, const char* fallback) {
            return given.empty() ? (fs::path(dir) / fallback).string() : given;
        };
        out.train = load_idx(resolve(cfg.train_images, "train-images-idx3-ubyte"),
                             resolve(cfg.train_labels, "train-labels-idx1-ubyte"));
        out.test = offset_ids(load_idx(resolve(cfg.test_images, "t10k-images-idx3-ubyte"),
                                       resolve(cfg.test_labels, "t10k-labels-idx1-ubyte")),
                              kTestIdOffset);
    } else {
        throw InvalidParam("unknown corpus kind '" + cfg.kind + "'");
    }

    if (cfg.train_subset > 0 && cfg.train_subset < out.train.size()) {
        out.train = subset(out.train,
                           sample_ids(out.train.id_set(), cfg.train_subset, cfg.subset_seed));
    }
    if (cfg.test_subset > 0 && cfg.test_subset < out.test.size()) {
        out.test = subset(out.test,
                          sample_ids(out.test.id_set(), cfg.test_subset, cfg.subset_seed + 1));
    }
    // Keep class counts aligned across the two sets.
    out.train.num_classes = out.test.num_classes =
        std::max(out.train.num_classes, out.test.num_classes);
    return out;
}

uint64_t run_seed(const ExperimentConfig& cfg, int r) {
    return mix_seed(cfg.seed, 0x52554E00ULL + uint64_t(r));
}

PipelineConfig pipeline_config(const ExperimentConfig& cfg, size_t input_dim, int num_classes) {
    PipelineConfig pc;
    pc.arch = ArchSpec::by_name(cfg.arch, int(input_dim), num_classes);
    pc.hyper = cfg.hyper;
    pc.svm = cfg.svm;
    pc.platt_holdout = cfg.platt_holdout;
    return pc;
}

void cmd_rank(const ExperimentConfig& cfg) {
    Timer timer;
    const LoadedCorpus corpus = load_corpus(cfg.corpus);
    RankingConfig rc;
    rc.arch = ArchSpec::by_name(cfg.arch, int(corpus.train.dim()), corpus.train.num_classes);
    rc.hyper = cfg.hyper;
    rc.svm = cfg.svm;
    const CoreRanking cr = build_ranking(corpus.train, rc, cfg.ranking_runs, cfg.seed);
    write_file(output_path(cfg, "ranking.csv"), config_comment(cfg) + ranking_to_csv(cr));
    write_file(output_path(cfg, "histogram.csv"), config_comment(cfg) + histogram_to_csv(cr));
    log_timing("rank", timer);
}

void cmd_train(const ExperimentConfig& cfg) {
    Timer timer;
    const LoadedCorpus corpus = load_corpus(cfg.corpus);
    const CoreRanking cr = load_ranking(cfg);
    const size_t k = cfg.resolve_k(corpus.train.size());
    const PipelineConfig pc =
        pipeline_config(cfg, corpus.train.dim(), corpus.train.num_classes);
    const SplitModel model = train_unlearning_aware(corpus.train, cr, k, pc, cfg.seed);
    save_model(model, output_path(cfg, "model.bin"));
    write_file(output_path(cfg, "manifest.json"),
               json::parse(model.manifest.to_json()).dump(2) + "\n");

    json summary;
    summary["config_hash"] = to_hex(cfg.config_hash());
    summary["model_hash"] = to_hex(model.hash());
    summary["k"] = k;
    summary["support_size"] = model.support_ids.size();
    summary["exact_unlearnable"] =
        corpus.train.size() - model.support_ids.set_union(model.fe_train_ids).size();
    summary["train_accuracy"] = model_accuracy(model, corpus.train);
    summary["test_accuracy"] = model_accuracy(model, corpus.test);
    write_file(output_path(cfg, "train_summary.json"), summary.dump(2) + "\n");
    log_timing("train", timer);
}

void cmd_unlearn(const ExperimentConfig& cfg, const std::string& model_path,
                 const std::string& forget_text) {
    Timer timer;
    const LoadedCorpus corpus = load_corpus(cfg.corpus);
    const std::string path =
        model_path.empty() ? (fs::path(cfg.out_dir) / "model.bin").string() : model_path;
    const SplitModel model = load_model(path);
    const CoreRanking cr = load_ranking(cfg);
    const std::string text = forget_text.empty() ? cfg.forget_spec : forget_text;
    const IdSet forget = resolve_forget(forget_spec_from_text(text), cr);

    const UnlearnRequest req{forget};
    const UnlearnOutcome outcome = unlearn(model, req, cfg.pool, corpus.train);
    save_model(outcome.model, output_path(cfg, "model_unlearned.bin"));

    json j;
    j["config_hash"] = to_hex(cfg.config_hash());
    j["mode"] = to_string(outcome.mode);
    j["guarantee"] = to_string(outcome.guarantee);
    j["pool_policy"] = to_string(cfg.pool);
    j["forget_size"] = forget.size();
    j["cost"] = {{"fe_retrained", outcome.cost.fe_retrained},
                 {"svm_retrained", outcome.cost.svm_retrained},
                 {"platt_refit", outcome.cost.platt_refit},
                 {"svm_train_size", outcome.cost.svm_train_size}};
    j["input_model_hash"] = to_hex(model.hash());
    j["output_model_hash"] = to_hex(outcome.model.hash());
    j["test_accuracy"] = model_accuracy(outcome.model, corpus.test);
    if (outcome.guarantee == Guarantee::Exact) {
        const WitnessReport wr =
            check_generalized_exact(corpus.train, outcome, cfg.seed, &corpus.test);
        j["witness"] = {{"passed", wr.passed}, {"max_deviation", wr.max_deviation}};
    } else {
        j["witness"] = nullptr;
    }
    write_file(output_path(cfg, "outcome.json"), j.dump(2) + "\n");
    log_timing("unlearn", timer);
}

namespace {

SplitModel build_strategy_model(const std::string& strategy, const ExperimentConfig& cfg,
                                const LoadedCorpus& corpus, const CoreRanking& cr, size_t k,
                                const PipelineConfig& pc, const UnlearnRequest& req,
                                uint64_t seed) {
    if (strategy == "maxrr") {
        const SplitModel m = train_unlearning_aware(corpus.train, cr, k, pc, seed);
        return unlearn(m, req, cfg.pool, corpus.train).model;
    }
    if (strategy == "full-retrain") {
        return full_retrain(corpus.train, req, &cr, k, false, pc, seed);
    }
    if (strategy == "fe-only") {
        return fe_only_unlearn(corpus.train, req, pc, seed);
    }
    throw InvalidParam("unknown strategy '" + strategy +
                       "' (expected maxrr, full-retrain or fe-only)");
}

}  // namespace

void cmd_audit(const ExperimentConfig& cfg, const std::string& strategy_a,
               const std::string& strategy_b, const std::string& forget_text) {
    Timer timer;
    const LoadedCorpus corpus = load_corpus(cfg.corpus);
    const CoreRanking cr = load_ranking(cfg);
    const size_t k = cfg.resolve_k(corpus.train.size());
    const PipelineConfig pc =
        pipeline_config(cfg, corpus.train.dim(), corpus.train.num_classes);
    const std::string text = forget_text.empty() ? cfg.forget_spec : forget_text;
    const IdSet forget = resolve_forget(forget_spec_from_text(text), cr);
    const UnlearnRequest req{forget};

    std::vector<AuditReport> reports_a(size_t(cfg.runs)), reports_b(size_t(cfg.runs));
    parallel_for(size_t(cfg.runs), [&](size_t r) {
        const uint64_t seed = run_seed(cfg, int(r));
        const SplitModel ma = build_strategy_model(strategy_a, cfg, corpus, cr, k, pc, req, seed);
        const SplitModel mb = build_strategy_model(strategy_b, cfg, corpus, cr, k, pc, req, seed);
        reports_a[r] = verify_unlearning(ma, corpus.train, corpus.test, forget, cfg.mia_pool);
        reports_b[r] = verify_unlearning(mb, corpus.train, corpus.test, forget, cfg.mia_pool);
    });

    write_file(output_path(cfg, "claims_histogram.csv"),
               config_comment(cfg) + claims_to_csv(reports_a, reports_b));
    write_file(output_path(cfg, "agreement_cdf.csv"),
               config_comment(cfg) + agreement_to_csv(agreement_curve(reports_a, reports_b)));
    write_file(output_path(cfg, "roc_a.csv"), config_comment(cfg) + roc_to_csv(reports_a[0].roc));
    write_file(output_path(cfg, "roc_b.csv"), config_comment(cfg) + roc_to_csv(reports_b[0].roc));
    write_file(output_path(cfg, "verdicts_a.csv"),
               config_comment(cfg) + verdicts_to_csv(reports_a[0]));
    write_file(output_path(cfg, "verdicts_b.csv"),
               config_comment(cfg) + verdicts_to_csv(reports_b[0]));
    log_timing("audit", timer);
}

void cmd_table1(const ExperimentConfig& cfg) {
    Timer timer;
    const LoadedCorpus corpus = load_corpus(cfg.corpus);
    const CoreRanking cr = load_ranking(cfg);
    const size_t m = corpus.train.size();
    const size_t k = cfg.resolve_k(m);
    const PipelineConfig pc =
        pipeline_config(cfg, corpus.train.dim(), corpus.train.num_classes);

    const IdSet dk = top_k(cr, k);
    const IdSet dnk = non_top_k(cr, k);
    const size_t dr_n = std::min(cfg.resolve_dr(m), dnk.size());
    const IdSet dr = sample_ids(dnk, dr_n, mix_seed(cfg.seed, 0xD5DAAULL));
    const std::vector<std::pair<std::string, IdSet>> forget_sets = {
        {"top_k", dk},
        {"top_k_union_dr", dk.set_union(dr)},
        {"non_top_k", dnk},
    };

    // scenario x forget-set accuracies per run, reduced in run order
    std::vector<std::vector<std::vector<double>>> per_run(
        size_t(cfg.runs),
        std::vector<std::vector<double>>(4, std::vector<double>(forget_sets.size(), 0.0)));
    parallel_for(size_t(cfg.runs), [&](size_t r) {
        const uint64_t seed = run_seed(cfg, int(r));
        auto& acc = per_run[r];
        const SplitModel base = train_split_model(corpus.train, corpus.train, pc, seed, 0);
        const double base_acc = model_accuracy(base, corpus.test);
        for (size_t f = 0; f < forget_sets.size(); ++f) {
            const UnlearnRequest req{forget_sets[f].second};
            acc[0][f] = base_acc;
            acc[1][f] = model_accuracy(unlearn(base, req, PoolPolicy::Full, corpus.train).model,
                                       corpus.test);
            acc[2][f] = model_accuracy(
                full_retrain(corpus.train, req, &cr, k, false, pc, seed), corpus.test);
            acc[3][f] = model_accuracy(fe_only_unlearn(corpus.train, req, pc, seed),
                                       corpus.test);
        }
    });
    std::vector<std::vector<double>> acc(4, std::vector<double>(forget_sets.size(), 0.0));
    for (int r = 0; r < cfg.runs; ++r) {
        for (size_t sname = 0; sname < 4; ++sname) {
            for (size_t f = 0; f < forget_sets.size(); ++f) {
                acc[sname][f] += per_run[size_t(r)][sname][f];
            }
        }
    }

    std::ostringstream out;
    out << config_comment(cfg);
    out << "scenario";
    for (const auto& [name, ids] : forget_sets) out << "," << name;
    out << "\n";
    const char* row_names[4] = {"no", "svm", "fe_svm", "fe"};
    for (size_t s = 0; s < 4; ++s) {
        out << row_names[s];
        for (size_t f = 0; f < forget_sets.size(); ++f) {
            out << "," << fmt_double(acc[s][f] / double(cfg.runs));
        }
        out << "\n";
    }
    write_file(output_path(cfg, "table1.csv"), out.str());
    log_timing("table1", timer);
}

void cmd_sensitivity(const ExperimentConfig& cfg) {
    Timer timer;
    const LoadedCorpus corpus = load_corpus(cfg.corpus);
    const PipelineConfig pc =
        pipeline_config(cfg, corpus.train.dim(), corpus.train.num_classes);
    if (cfg.sensitivity_fraction <= 0.0 || cfg.sensitivity_fraction >= 1.0) {
        throw InvalidParam("sensitivity_fraction must be in (0,1)");
    }

    std::vector<std::array<double, 4>> per_run(size_t(cfg.runs));
    parallel_for(size_t(cfg.runs), [&](size_t r) {
        const uint64_t seed = run_seed(cfg, int(r));
        const SplitModel base = train_split_model(corpus.train, corpus.train, pc, seed, 0);
        const size_t n_forget = std::max<size_t>(
            1, size_t(std::llround(cfg.sensitivity_fraction * double(base.support_ids.size()))));
        const IdSet forget =
            sample_ids(base.support_ids, n_forget, mix_seed(seed, 0x53454ECULL));
        const UnlearnRequest req{forget};

        per_run[r][0] = model_accuracy(base, corpus.test);
        per_run[r][1] = model_accuracy(unlearn(base, req, PoolPolicy::Full, corpus.train).model,
                                       corpus.test);
        per_run[r][2] = model_accuracy(fe_only_unlearn(corpus.train, req, pc, seed),
                                       corpus.test);
        per_run[r][3] = model_accuracy(
            full_retrain(corpus.train, req, nullptr, 0, false, pc, seed), corpus.test);
    });
    double acc_base = 0.0, acc_svm = 0.0, acc_fe = 0.0, acc_full = 0.0;
    for (const auto& row : per_run) {
        acc_base += row[0];
        acc_svm += row[1];
        acc_fe += row[2];
        acc_full += row[3];
    }

    std::ostringstream out;
    out << config_comment(cfg);
    out << "scenario,mean_test_accuracy\n";
    out << "baseline," << fmt_double(acc_base / cfg.runs) << "\n";
    out << "svm_unlearned," << fmt_double(acc_svm / cfg.runs) << "\n";
    out << "fe_unlearned_svm_on_all," << fmt_double(acc_fe / cfg.runs) << "\n";
    out << "fully_unlearned," << fmt_double(acc_full / cfg.runs) << "\n";
    write_file(output_path(cfg, "sensitivity.csv"), out.str());
    log_timing("sensitivity", timer);
}

}  // namespace maxrr
