#pragma once

#include <cstdint>
#include <string>

#include "maxrr/audit.hpp"
#include "maxrr/dataset.hpp"
#include "maxrr/pipeline.hpp"
#include "maxrr/ranking.hpp"

namespace maxrr {

struct CorpusConfig {
    std::string kind = "blobs";  // blobs | fashion-mnist | mnist | idx

    // IDX corpora. Empty paths resolve against data_dir with the standard
    // train-images-idx3-ubyte / t10k-* filenames; data_dir itself falls back
    // to $MAXRR_DATA_DIR, then "data".
    std::string train_images, train_labels, test_images, test_labels;
    std::string data_dir;

    // blobs corpora (test set drawn with blob_seed + 1)
    int num_classes = 3;
    int per_class = 200;
    int dim = 16;
    double separation = 6.0;
    uint64_t blob_seed = 7;
    int test_per_class = 50;

    // deterministic subsampling, 0 = keep everything
    size_t train_subset = 0;
    size_t test_subset = 0;
    uint64_t subset_seed = 99;
};

struct ExperimentConfig {
    CorpusConfig corpus;
    std::string arch = "mlp";
    TrainConfig hyper;
    SvmConfig svm;
    double platt_holdout = 0.2;
    size_t k = 0;          // core-set size, 0 -> m/3
    int ranking_runs = 5;  // R
    int runs = 5;
    uint64_t seed = 1;
    std::string forget_spec;  // inline directives (';' separated) or @file
    PoolPolicy pool = PoolPolicy::Full;
    MemberPool mia_pool = MemberPool::Full;
    size_t dr_size = 0;  // random draw added to D_k in the accuracy table, 0 -> m/6
    double sensitivity_fraction = 0.5;
    std::string out_dir = "out";

    static ExperimentConfig from_file(const std::string& path);
    static ExperimentConfig from_json_text(const std::string& text);
    std::string to_json() const;
    uint64_t config_hash() const;

    size_t resolve_k(size_t corpus_size) const;
    size_t resolve_dr(size_t corpus_size) const;
};

struct LoadedCorpus {
    LabeledDataset train;
    LabeledDataset test;  // IDs offset so the two sets never collide
};

LoadedCorpus load_corpus(const CorpusConfig& cfg);

// Seed for run r of a multi-run study; a separate stream from the ranking's
// base_seed + r so study models never replicate ranking models.
uint64_t run_seed(const ExperimentConfig& cfg, int r);

PipelineConfig pipeline_config(const ExperimentConfig& cfg, size_t input_dim, int num_classes);

// Subcommands. Each writes its artifacts under cfg.out_dir and is
// deterministic given the config; reruns produce byte-identical files.
void cmd_rank(const ExperimentConfig& cfg);
void cmd_train(const ExperimentConfig& cfg);
void cmd_unlearn(const ExperimentConfig& cfg, const std::string& model_path,
                 const std::string& forget_spec);
void cmd_audit(const ExperimentConfig& cfg, const std::string& strategy_a,
               const std::string& strategy_b, const std::string& forget_spec);
void cmd_table1(const ExperimentConfig& cfg);
void cmd_sensitivity(const ExperimentConfig& cfg);

}  // namespace maxrr
