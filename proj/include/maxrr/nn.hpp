#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "maxrr/dataset.hpp"
#include "maxrr/matrix.hpp"

namespace maxrr {

enum class LayerKind : uint8_t { Conv5x5 = 0, AvgPool2x2 = 1, Relu = 2, Linear = 3, Softmax = 4 };

struct LayerDesc {
    LayerKind kind = LayerKind::Relu;
    int units = 0;    // Linear
    int filters = 0;  // Conv5x5
    int pad = 0;      // Conv5x5 zero padding per side
};

struct Shape3 {
    int h = 0, w = 0, c = 0;
    int count() const { return h * w * c; }
    bool operator==(const Shape3&) const = default;
};

// Network architecture: a feature extractor followed by exactly one trailing
// Linear+Softmax prediction layer. The embedding is the output of the last
// feature layer.
struct ArchSpec {
    std::string name;
    Shape3 input;
    std::vector<LayerDesc> layers;

    void validate() const;       // throws ShapeMismatch on inconsistent chains
    int embedding_dim() const;   // flat output dim of the feature part
    int num_classes() const;     // units of the trailing Linear
    size_t feature_layer_count() const { return layers.size() - 2; }

    // Flat output dim after each layer, starting with the input dim.
    std::vector<Shape3> shape_chain() const;

    bool operator==(const ArchSpec&) const = default;

    static ArchSpec lenet5();                       // 28x28x1 input, embedding 84
    static ArchSpec mlp(int in_dim, int num_classes);  // in->128->84 (+PL)
    static ArchSpec small_mlp(int in_dim, int h1, int h2, int num_classes);
    static ArchSpec by_name(const std::string& name, int in_dim, int num_classes);
};

// Per-layer parameters; empty for non-parametric layers.
struct LayerWeights {
    std::vector<double> W;
    std::vector<double> b;
};

struct FeatureExtractor {
    ArchSpec arch;
    std::vector<LayerWeights> weights;  // aligned with arch.layers
    IdSet train_ids;
    uint64_t seed = 0;

    size_t param_count() const;
    uint64_t fingerprint() const;  // hash over all weight bytes
};

struct TrainConfig {
    int epochs = 10;
    double lr = 0.01;
    int batch = 64;
    double momentum = 0.9;
};

struct EmbeddingSet {
    Matrix values;             // |ids| x embedding_dim, aligned to ids
    std::vector<int64_t> ids;  // ascending
    uint64_t producer = 0;     // fingerprint of the producing extractor

    size_t size() const { return ids.size(); }
};

// Kaiming-style scaled uniform init (bound sqrt(6/fan_in)), zero biases.
FeatureExtractor init_fe(const ArchSpec& arch, uint64_t seed);

// SGD with momentum on softmax cross-entropy over the full net (feature part
// plus prediction layer). Batch order is seeded per epoch. Returns a new
// extractor with train_ids set to ds.ids.
FeatureExtractor train_fe(const FeatureExtractor& fe, const LabeledDataset& ds,
                          const TrainConfig& cfg, uint64_t seed);

struct Gradients {
    double loss = 0.0;
    std::vector<LayerWeights> layers;  // aligned with arch.layers
};

// Mean cross-entropy over the batch and its analytic gradients.
Gradients loss_and_grads(const FeatureExtractor& fe, const Matrix& batch_features,
                         std::span<const int> batch_labels);

// Forward through the feature part only (prediction layer dropped).
EmbeddingSet embed(const FeatureExtractor& fe, const LabeledDataset& ds);
Matrix embed_features(const FeatureExtractor& fe, const Matrix& features);

// Full-network class predictions (argmax over softmax inputs).
std::vector<int> predict_full(const FeatureExtractor& fe, const Matrix& features);
double full_model_accuracy(const FeatureExtractor& fe, const LabeledDataset& ds);

}  // namespace maxrr
