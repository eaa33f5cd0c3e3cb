#include "maxrr/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "maxrr/error.hpp"
#include "maxrr/hash.hpp"
#include "maxrr/model_io.hpp"
#include "maxrr/rng.hpp"

namespace maxrr {

using nlohmann::json;

namespace {

constexpr uint64_t kPlattStream = 0x706C6174;  // seed stream for calibration
constexpr uint64_t kProbeStream = 0x70726F62;  // seed stream for probe grids

const char* kernel_name(KernelKind k) {
    switch (k) {
        case KernelKind::Linear:
            return "linear";
    }
    return "?";
}

KernelKind kernel_from_name(const std::string& s) {
    if (s == "linear") return KernelKind::Linear;
    throw InvalidParam("unknown kernel '" + s + "'");
}

// A class present in the model must survive in the remaining pool.
void require_all_classes(const LabeledDataset& ds, int num_classes, const char* what) {
    std::vector<bool> seen(size_t(num_classes), false);
    for (int lab : ds.labels) {
        if (lab >= 0 && lab < num_classes) seen[size_t(lab)] = true;
    }
    for (int c = 0; c < num_classes; ++c) {
        if (!seen[size_t(c)]) {
            throw EmptyRemainder(std::string(what) + " lacks class " + std::to_string(c));
        }
    }
}

}  // namespace

const char* to_string(UnlearnMode mode) {
    switch (mode) {
        case UnlearnMode::ExactNoOp: return "exact_noop";
        case UnlearnMode::ExactSvmRetrain: return "exact_svm_retrain";
        case UnlearnMode::ApproxSvmRetrain: return "approx_svm_retrain";
        case UnlearnMode::FullRetrain: return "full_retrain";
        case UnlearnMode::FeOnlyRetrain: return "fe_only_retrain";
    }
    return "?";
}

const char* to_string(Guarantee g) {
    return g == Guarantee::Exact ? "exact" : "approximate";
}

const char* to_string(PoolPolicy p) {
    return p == PoolPolicy::Full ? "full" : "support";
}

std::string Manifest::to_json() const {
    json j;
    j["arch"] = arch_name;
    j["core_k"] = core_k;
    j["ranking_runs"] = ranking_runs;
    j["ranking_base_seed"] = ranking_base_seed;
    j["corpus_hash"] = to_hex(corpus_hash);
    j["hyper"] = {{"epochs", hyper.epochs},
                  {"lr", hyper.lr},
                  {"batch", hyper.batch},
                  {"momentum", hyper.momentum}};
    j["svm"] = {{"C", svm.C},
                {"tol", svm.tol},
                {"alpha_tol", svm.alpha_tol},
                {"max_iter", svm.max_iter},
                {"kernel", kernel_name(svm.kernel)}};
    j["platt_holdout"] = platt_holdout;
    j["platt_seed"] = platt_seed;
    j["train_seed"] = train_seed;
    j["mode_history"] = mode_history;
    return j.dump();
}

Manifest Manifest::from_json(const std::string& text) {
    json j = json::parse(text);
    Manifest m;
    m.arch_name = j.at("arch").get<std::string>();
    m.core_k = j.at("core_k").get<size_t>();
    m.ranking_runs = j.value("ranking_runs", 0);
    m.ranking_base_seed = j.value("ranking_base_seed", uint64_t(0));
    m.corpus_hash = std::stoull(j.at("corpus_hash").get<std::string>(), nullptr, 16);
    m.hyper.epochs = j.at("hyper").at("epochs").get<int>();
    m.hyper.lr = j.at("hyper").at("lr").get<double>();
    m.hyper.batch = j.at("hyper").at("batch").get<int>();
    m.hyper.momentum = j.at("hyper").at("momentum").get<double>();
    m.svm.C = j.at("svm").at("C").get<double>();
    m.svm.tol = j.at("svm").at("tol").get<double>();
    m.svm.alpha_tol = j.at("svm").at("alpha_tol").get<double>();
    m.svm.max_iter = j.at("svm").at("max_iter").get<long>();
    m.svm.kernel = kernel_from_name(j.at("svm").at("kernel").get<std::string>());
    m.platt_holdout = j.at("platt_holdout").get<double>();
    m.platt_seed = j.at("platt_seed").get<uint64_t>();
    m.train_seed = j.at("train_seed").get<uint64_t>();
    m.mode_history = j.at("mode_history").get<std::vector<std::string>>();
    return m;
}

uint64_t SplitModel::hash() const {
    const auto bytes = serialize_model(*this);
    return fnv1a(bytes.data(), bytes.size());
}

std::vector<double> SplitModel::decision_values(std::span<const double> raw_input) const {
    Matrix one(1, raw_input.size());
    std::copy(raw_input.begin(), raw_input.end(), one.row(0).begin());
    const Matrix emb = embed_features(fe, one);
    return svm.decision_values(emb.row(0));
}

int SplitModel::predict(std::span<const double> raw_input) const {
    const auto vals = decision_values(raw_input);
    size_t best = 0;
    for (size_t c = 1; c < vals.size(); ++c) {
        if (vals[c] > vals[best]) best = c;
    }
    return int(best);
}

SplitModel train_split_model(const LabeledDataset& fe_ds, const LabeledDataset& svm_ds,
                             const PipelineConfig& pc, uint64_t seed, size_t core_k) {
    SplitModel m;
    m.fe = train_fe(init_fe(pc.arch, seed), fe_ds, pc.hyper, seed);
    const EmbeddingSet emb = embed(m.fe, svm_ds);
    const uint64_t platt_seed = mix_seed(seed, kPlattStream);
    m.svm = fit_ovr(emb, svm_ds.labels, pc.svm);
    m.svm = fit_platt(std::move(m.svm), emb, svm_ds.labels, pc.platt_holdout, platt_seed);
    m.fe_train_ids = m.fe.train_ids;
    m.svm_train_ids = m.svm.train_ids;
    m.platt_ids = m.svm.train_ids;
    m.support_ids = m.svm.support_union();

    m.manifest.arch_name = pc.arch.name;
    m.manifest.hyper = pc.hyper;
    m.manifest.svm = pc.svm;
    m.manifest.platt_holdout = pc.platt_holdout;
    m.manifest.platt_seed = platt_seed;
    m.manifest.train_seed = seed;
    m.manifest.corpus_hash = svm_ds.content_hash();
    m.manifest.core_k = core_k;
    m.manifest.mode_history = {"train"};
    return m;
}

SplitModel train_unlearning_aware(const LabeledDataset& ds, const CoreRanking& cr, size_t k,
                                  const PipelineConfig& pc, uint64_t seed) {
    if (cr.corpus_ids != ds.ids) {
        throw UnknownId("train_unlearning_aware: ranking corpus does not match dataset");
    }
    const IdSet core = top_k(cr, k);
    SplitModel m = train_split_model(subset(ds, core), ds, pc, seed, k);
    m.manifest.ranking_runs = cr.runs;
    m.manifest.ranking_base_seed = cr.base_seed;
    return m;
}

UnlearnMode classify_request(const SplitModel& model, const UnlearnRequest& req) {
    const IdSet known = model.fe_train_ids.set_union(model.svm_train_ids);
    if (!req.forget.is_subset_of(known)) {
        throw UnknownId("classify_request: forget set contains ids unknown to the model");
    }
    const bool touches_core = req.forget.intersects(model.fe_train_ids);
    if (touches_core) return UnlearnMode::ApproxSvmRetrain;
    if (req.forget.intersects(model.support_ids)) return UnlearnMode::ExactSvmRetrain;
    return UnlearnMode::ExactNoOp;
}

UnlearnOutcome unlearn(const SplitModel& model, const UnlearnRequest& req, PoolPolicy policy,
                       const LabeledDataset& corpus) {
    const UnlearnMode mode = classify_request(model, req);

    UnlearnOutcome out;
    out.mode = mode;
    out.guarantee = (mode == UnlearnMode::ExactNoOp || mode == UnlearnMode::ExactSvmRetrain)
                        ? Guarantee::Exact
                        : Guarantee::Approximate;
    if (mode == UnlearnMode::ExactNoOp) {
        out.model = model;  // untouched, hash preserved
        return out;
    }

    const IdSet remain = model.svm_train_ids.set_difference(req.forget);
    const IdSet pool = policy == PoolPolicy::Support
                           ? model.support_ids.set_difference(req.forget)
                           : remain;
    const LabeledDataset remain_ds = subset(corpus, remain);
    require_all_classes(remain_ds, model.svm.num_classes(), "remaining data");
    const LabeledDataset pool_ds =
        policy == PoolPolicy::Support ? subset(corpus, pool) : remain_ds;
    if (policy == PoolPolicy::Support) {
        require_all_classes(pool_ds, model.svm.num_classes(), "support pool");
    }

    SplitModel next = model;  // extractor and core set carried over bit-identically
    const EmbeddingSet emb_pool = embed(model.fe, pool_ds);
    next.svm = fit_ovr(emb_pool, pool_ds.labels, model.manifest.svm, model.svm.num_classes());
    if (policy == PoolPolicy::Support) {
        const EmbeddingSet emb_remain = embed(model.fe, remain_ds);
        next.svm = fit_platt(std::move(next.svm), emb_remain, remain_ds.labels,
                             model.manifest.platt_holdout, model.manifest.platt_seed);
    } else {
        next.svm = fit_platt(std::move(next.svm), emb_pool, remain_ds.labels,
                             model.manifest.platt_holdout, model.manifest.platt_seed);
    }
    next.svm_train_ids = next.svm.train_ids;
    next.platt_ids = remain;
    next.support_ids = next.svm.support_union();
    next.manifest.mode_history.push_back(std::string(to_string(mode)) + ":" +
                                         std::to_string(req.forget.size()));

    out.cost.svm_retrained = true;
    out.cost.platt_refit = true;
    out.cost.svm_train_size = pool.size();
    out.cost.fe_train_size = 0;
    out.model = std::move(next);
    return out;
}

SplitModel full_retrain(const LabeledDataset& ds, const UnlearnRequest& req,
                        const CoreRanking* cr, size_t k, bool fe_on_core,
                        const PipelineConfig& pc, uint64_t seed) {
    const IdSet remain_ids = ds.id_set().set_difference(req.forget);
    const LabeledDataset remain = subset(ds, remain_ids);
    require_all_classes(remain, ds.num_classes, "remaining data");

    LabeledDataset fe_pool = remain;
    size_t core_k = 0;
    if (fe_on_core) {
        if (cr == nullptr) throw InvalidParam("full_retrain: core restriction needs a ranking");
        const IdSet core = top_k(*cr, k).set_difference(req.forget);
        if (core.empty()) throw EmptyDataset("full_retrain: no core samples survive");
        fe_pool = subset(ds, core);
        core_k = k;
    }
    SplitModel m = train_split_model(fe_pool, remain, pc, seed, core_k);
    if (fe_on_core) {
        m.manifest.ranking_runs = cr->runs;
        m.manifest.ranking_base_seed = cr->base_seed;
    }
    m.manifest.mode_history = {std::string(to_string(UnlearnMode::FullRetrain)) + ":" +
                               std::to_string(req.forget.size())};
    return m;
}

SplitModel fe_only_unlearn(const LabeledDataset& ds, const UnlearnRequest& req,
                           const PipelineConfig& pc, uint64_t seed) {
    const IdSet remain_ids = ds.id_set().set_difference(req.forget);
    const LabeledDataset remain = subset(ds, remain_ids);
    if (remain.size() == 0) throw EmptyDataset("fe_only_unlearn: nothing left to train on");
    SplitModel m = train_split_model(remain, ds, pc, seed, 0);
    m.manifest.mode_history = {std::string(to_string(UnlearnMode::FeOnlyRetrain)) + ":" +
                               std::to_string(req.forget.size())};
    return m;
}

WitnessReport check_generalized_exact(const LabeledDataset& corpus, const UnlearnOutcome& outcome,
                                      uint64_t witness_seed, const LabeledDataset* testset) {
    if (outcome.guarantee != Guarantee::Exact) {
        throw InvalidParam("check_generalized_exact: outcome carries no exact guarantee");
    }
    const SplitModel& m = outcome.model;
    const Manifest& mf = m.manifest;

    // Witness: re-derive the model from its manifest. The extractor comes from
    // the recorded core set and seed; the SVM and Platt fit replay on the
    // recorded pools with the deterministic solver.
    FeatureExtractor wfe = train_fe(init_fe(m.fe.arch, mf.train_seed),
                                    subset(corpus, m.fe_train_ids), mf.hyper, mf.train_seed);
    const LabeledDataset svm_ds = subset(corpus, m.svm_train_ids);
    const EmbeddingSet emb = embed(wfe, svm_ds);
    OvrSvm wsvm = fit_ovr(emb, svm_ds.labels, mf.svm, m.svm.num_classes());
    const LabeledDataset platt_ds = subset(corpus, m.platt_ids);
    const EmbeddingSet platt_emb = embed(wfe, platt_ds);
    wsvm = fit_platt(std::move(wsvm), platt_emb, platt_ds.labels, mf.platt_holdout,
                     mf.platt_seed);

    SplitModel witness;
    witness.fe = std::move(wfe);
    witness.svm = std::move(wsvm);

    // Fixed probe grid plus the test set.
    const size_t input_dim = size_t(m.fe.arch.input.count());
    Matrix probes(100, input_dim);
    Rng rng(mix_seed(witness_seed, kProbeStream));
    for (double& v : probes.data) v = rng.uniform();

    WitnessReport report;
    report.passed = true;
    auto compare_on = [&](const Matrix& features) {
        const Matrix emb_a = embed_features(m.fe, features);
        const Matrix emb_b = embed_features(witness.fe, features);
        for (size_t r = 0; r < features.rows; ++r) {
            const auto va = m.svm.decision_values(emb_a.row(r));
            const auto vb = witness.svm.decision_values(emb_b.row(r));
            size_t best_a = 0, best_b = 0;
            for (size_t c = 0; c < va.size(); ++c) {
                report.max_deviation = std::max(report.max_deviation, std::abs(va[c] - vb[c]));
                if (va[c] > va[best_a]) best_a = c;
                if (vb[c] > vb[best_b]) best_b = c;
            }
            if (best_a != best_b) report.passed = false;
        }
    };
    compare_on(probes);
    if (testset != nullptr) compare_on(testset->features);
    if (report.max_deviation > 1e-9) report.passed = false;
    return report;
}

double model_accuracy(const SplitModel& model, const LabeledDataset& ds) {
    const EmbeddingSet emb = embed(model.fe, ds);
    return ovr_accuracy(model.svm, emb, ds.labels);
}

}  // namespace maxrr
