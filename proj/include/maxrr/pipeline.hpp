#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maxrr/dataset.hpp"
#include "maxrr/nn.hpp"
#include "maxrr/ranking.hpp"
#include "maxrr/svm.hpp"

namespace maxrr {

// Everything needed to re-derive a split model bit-exactly: seeds, hyper-
// parameters and the training-set identity. Stored inside the model container
// and exported as JSON.
struct Manifest {
    std::string arch_name;
    TrainConfig hyper;
    SvmConfig svm;
    double platt_holdout = 0.2;
    uint64_t platt_seed = 0;
    uint64_t train_seed = 0;
    uint64_t corpus_hash = 0;
    size_t core_k = 0;
    int ranking_runs = 0;            // R behind the core set, 0 when no ranking was used
    uint64_t ranking_base_seed = 0;
    std::vector<std::string> mode_history;

    std::string to_json() const;
    static Manifest from_json(const std::string& text);
};

// A feature extractor composed with an OvR SVM head. The extractor is trained
// on the core set only; the SVM sees embeddings of the whole corpus.
struct SplitModel {
    FeatureExtractor fe;
    OvrSvm svm;
    IdSet fe_train_ids;   // == fe.train_ids (the core set D_k)
    IdSet svm_train_ids;  // == svm.train_ids
    IdSet platt_ids;      // calibration pool (never contains forgotten IDs)
    IdSet support_ids;    // union of per-class support sets
    Manifest manifest;

    uint64_t hash() const;  // over the serialized container bytes
    std::vector<double> decision_values(std::span<const double> raw_input) const;
    int predict(std::span<const double> raw_input) const;
};

struct UnlearnRequest {
    IdSet forget;
};

enum class UnlearnMode : uint8_t {
    ExactNoOp = 0,
    ExactSvmRetrain = 1,
    ApproxSvmRetrain = 2,
    FullRetrain = 3,
    FeOnlyRetrain = 4,
};

enum class Guarantee : uint8_t { Exact = 0, Approximate = 1 };

// Retraining pool for SVM-only unlearning: the full remainder D \ D_f, or the
// cheaper surviving-support pool S \ D_f.
enum class PoolPolicy : uint8_t { Full = 0, Support = 1 };

struct CostReport {
    bool fe_retrained = false;
    bool svm_retrained = false;
    bool platt_refit = false;
    size_t fe_train_size = 0;
    size_t svm_train_size = 0;
};

struct UnlearnOutcome {
    SplitModel model;
    UnlearnMode mode = UnlearnMode::ExactNoOp;
    Guarantee guarantee = Guarantee::Exact;
    CostReport cost;
};

const char* to_string(UnlearnMode mode);
const char* to_string(Guarantee g);
const char* to_string(PoolPolicy p);

struct PipelineConfig {
    ArchSpec arch;
    TrainConfig hyper;
    SvmConfig svm;
    double platt_holdout = 0.2;
};

// Unlearning-aware training: extractor on top_k(cr, k), SVM (+Platt) on the
// embeddings of the whole corpus.
SplitModel train_unlearning_aware(const LabeledDataset& ds, const CoreRanking& cr, size_t k,
                                  const PipelineConfig& pc, uint64_t seed);

// Plain end-to-end training with explicit extractor/SVM corpora (the model
// splitting procedure itself).
SplitModel train_split_model(const LabeledDataset& fe_ds, const LabeledDataset& svm_ds,
                             const PipelineConfig& pc, uint64_t seed, size_t core_k);

// D_f disjoint from S and D_k        -> ExactNoOp
// D_f outside D_k but touching S     -> ExactSvmRetrain
// D_f touching D_k                   -> ApproxSvmRetrain
UnlearnMode classify_request(const SplitModel& model, const UnlearnRequest& req);

// Applies the mode chosen by classify_request. The extractor is never touched;
// retrain modes refit the SVM on embeddings of the pool and recalibrate Platt
// on D \ D_f only.
UnlearnOutcome unlearn(const SplitModel& model, const UnlearnRequest& req, PoolPolicy policy,
                       const LabeledDataset& corpus);

// Baseline: retrain extractor and SVM from scratch on D \ D_f. With
// fe_on_core set, the extractor pool is additionally restricted to the
// surviving core set (the unlearning-aware variant of the baseline).
SplitModel full_retrain(const LabeledDataset& ds, const UnlearnRequest& req,
                        const CoreRanking* cr, size_t k, bool fe_on_core,
                        const PipelineConfig& pc, uint64_t seed);

// Extractor retrained on D \ D_f, SVM retrained on all of D.
SplitModel fe_only_unlearn(const LabeledDataset& ds, const UnlearnRequest& req,
                           const PipelineConfig& pc, uint64_t seed);

struct WitnessReport {
    bool passed = false;
    double max_deviation = 0.0;
};

// Rebuilds the model from its manifest (extractor from the recorded core set
// and seed, SVM from the recorded pool with the deterministic solver) and
// compares decision values on a seeded probe grid plus an optional test set.
WitnessReport check_generalized_exact(const LabeledDataset& corpus, const UnlearnOutcome& outcome,
                                      uint64_t witness_seed,
                                      const LabeledDataset* testset = nullptr);

double model_accuracy(const SplitModel& model, const LabeledDataset& ds);

}  // namespace maxrr
