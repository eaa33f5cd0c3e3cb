#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "maxrr/matrix.hpp"

namespace maxrr {

// Sorted set of sample IDs. IDs are stable across subsetting, so forget sets
// and support sets stay meaningful through any chain of dataset operations.
struct IdSet {
    std::vector<int64_t> ids;  // ascending, no duplicates

    IdSet() = default;
    explicit IdSet(std::vector<int64_t> raw);  // sorts and dedups

    size_t size() const { return ids.size(); }
    bool empty() const { return ids.empty(); }
    bool contains(int64_t id) const;

    IdSet set_union(const IdSet& other) const;
    IdSet set_difference(const IdSet& other) const;
    IdSet set_intersection(const IdSet& other) const;
    bool is_subset_of(const IdSet& other) const;
    bool intersects(const IdSet& other) const;

    bool operator==(const IdSet& other) const { return ids == other.ids; }
};

// Draw n distinct IDs from pool without replacement, deterministically.
IdSet sample_ids(const IdSet& pool, size_t n, uint64_t seed);

struct LabeledDataset {
    Matrix features;             // m x d, finite values
    std::vector<int> labels;     // in [0, num_classes)
    std::vector<int64_t> ids;    // ascending, unique
    int num_classes = 0;

    size_t size() const { return ids.size(); }
    size_t dim() const { return features.cols; }
    IdSet id_set() const { return IdSet{std::vector<int64_t>(ids)}; }

    // Row index of a sample ID; throws UnknownId.
    size_t index_of(int64_t id) const;

    void validate() const;  // checks the type invariants
    uint64_t content_hash() const;
};

// IDX container files (big-endian, magic 0x803 for images / 0x801 for labels).
// Pixels are scaled to [0,1] by /255; IDs are assigned 0..m-1 in file order.
LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path);

// Gaussian clusters with unit variance. Class means sit on a circle in the
// first two dimensions (on a line for d == 1) with adjacent means exactly
// `separation` apart, so every class is linearly separable from the rest once
// separation is large.
LabeledDataset synth_blobs(int num_classes, int per_class, int d, double separation,
                           uint64_t seed);

// Rows restricted to `keep`; original IDs preserved, order stays ascending.
LabeledDataset subset(const LabeledDataset& ds, const IdSet& keep);

// Deterministic train/test split by fraction or explicit ID lists.
struct SplitSpec {
    double train_fraction = 0.8;
    uint64_t seed = 0;
    std::optional<IdSet> train_ids;  // when set, fraction is ignored
    std::optional<IdSet> test_ids;
};

struct SplitResult {
    LabeledDataset train;
    LabeledDataset test;
};

SplitResult split(const LabeledDataset& ds, const SplitSpec& spec);

// Forget-set specification. A spec file is newline-separated entries; each
// line is either an integer sample ID or a directive:
//   top-k:<k>
//   non-top-k:<k>
//   random:<n>:<seed>:<pool>      pool = all | top-k:<k> | non-top-k:<k>
// The resolved forget set is the union over all lines. Directives are
// resolved against a CoreRanking (see ranking.hpp).
struct ForgetDirective {
    enum class Kind { Id, TopK, NonTopK, Random };
    Kind kind = Kind::Id;
    int64_t id = 0;       // Id
    size_t k = 0;         // TopK / NonTopK, and pool parameter for Random
    size_t n = 0;         // Random
    uint64_t seed = 0;    // Random
    enum class Pool { All, TopK, NonTopK };
    Pool pool = Pool::All;  // Random
};

struct ForgetSpec {
    std::vector<ForgetDirective> directives;
};

ForgetSpec parse_forget_spec(const std::string& text);
ForgetSpec load_forget_spec(const std::string& path);

}  // namespace maxrr
