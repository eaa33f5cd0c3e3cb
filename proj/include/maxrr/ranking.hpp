#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "maxrr/dataset.hpp"
#include "maxrr/nn.hpp"
#include "maxrr/svm.hpp"

namespace maxrr {

// Empirical support-vector frequency over repeated seeded trainings. The k
// most frequent samples form the core set D_k used to train the extractor.
struct CoreRanking {
    std::vector<int64_t> corpus_ids;  // ascending
    std::vector<int> freq;            // aligned, each in [0, runs]
    int runs = 0;
    uint64_t base_seed = 0;
    std::vector<uint64_t> run_seeds;  // base_seed .. base_seed + runs - 1

    size_t size() const { return corpus_ids.size(); }
    int freq_of(int64_t id) const;
};

struct RankingConfig {
    ArchSpec arch;
    TrainConfig hyper;
    SvmConfig svm;
};

// One end-to-end split-model training per run (extractor + SVM on the full
// corpus, seed base_seed + r); every sample in the run's support union gets
// its frequency bumped. Runs execute concurrently.
CoreRanking build_ranking(const LabeledDataset& ds, const RankingConfig& cfg, int runs,
                          uint64_t base_seed);

// k highest-frequency samples; ties at the cut break toward the lower ID.
IdSet top_k(const CoreRanking& cr, size_t k);
IdSet non_top_k(const CoreRanking& cr, size_t k);

// freq -> sample count, for frequencies 0..runs.
std::vector<std::pair<int, size_t>> frequency_histogram(const CoreRanking& cr);

IdSet resolve_forget(const ForgetSpec& spec, const CoreRanking& cr);

std::string ranking_to_csv(const CoreRanking& cr);
CoreRanking ranking_from_csv(const std::string& text);
std::string histogram_to_csv(const CoreRanking& cr);

}  // namespace maxrr
