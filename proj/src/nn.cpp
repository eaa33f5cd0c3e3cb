#include "maxrr/nn.hpp"

#include <algorithm>
#include <cmath>

#include "maxrr/error.hpp"
#include "maxrr/hash.hpp"
#include "maxrr/rng.hpp"

namespace maxrr {

std::vector<Shape3> ArchSpec::shape_chain() const {
    std::vector<Shape3> chain;
    chain.reserve(layers.size() + 1);
    chain.push_back(input);
    Shape3 cur = input;
    for (const LayerDesc& ld : layers) {
        switch (ld.kind) {
            case LayerKind::Conv5x5: {
                const int oh = cur.h + 2 * ld.pad - 4;
                const int ow = cur.w + 2 * ld.pad - 4;
                if (cur.c <= 0 || oh <= 0 || ow <= 0 || ld.filters <= 0) {
                    throw ShapeMismatch(name + ": conv5x5 shape underflow");
                }
                cur = Shape3{oh, ow, ld.filters};
                break;
            }
            case LayerKind::AvgPool2x2: {
                if (cur.h % 2 != 0 || cur.w % 2 != 0 || cur.h == 0) {
                    throw ShapeMismatch(name + ": avgpool needs even spatial dims");
                }
                cur = Shape3{cur.h / 2, cur.w / 2, cur.c};
                break;
            }
            case LayerKind::Relu:
                break;
            case LayerKind::Linear: {
                if (ld.units <= 0) throw ShapeMismatch(name + ": linear units must be positive");
                cur = Shape3{1, 1, ld.units};
                break;
            }
            case LayerKind::Softmax:
                break;
        }
        chain.push_back(cur);
    }
    return chain;
}

void ArchSpec::validate() const {
    if (input.count() <= 0) throw ShapeMismatch(name + ": empty input shape");
    if (layers.size() < 2 || layers[layers.size() - 2].kind != LayerKind::Linear ||
        layers.back().kind != LayerKind::Softmax) {
        throw ShapeMismatch(name + ": architecture must end with Linear+Softmax");
    }
    for (size_t i = 0; i + 1 < layers.size(); ++i) {
        if (layers[i].kind == LayerKind::Softmax) {
            throw ShapeMismatch(name + ": softmax only allowed as the final layer");
        }
    }
    shape_chain();  // throws on incompatible chains
}

int ArchSpec::embedding_dim() const {
    return shape_chain()[layers.size() - 2].count();
}

int ArchSpec::num_classes() const {
    return layers[layers.size() - 2].units;
}

ArchSpec ArchSpec::lenet5() {
    ArchSpec a;
    a.name = "lenet5";
    a.input = Shape3{28, 28, 1};
    a.layers = {
        LayerDesc{LayerKind::Conv5x5, 0, 6, 2},
        LayerDesc{LayerKind::Relu},
        LayerDesc{LayerKind::AvgPool2x2},
        LayerDesc{LayerKind::Conv5x5, 0, 16, 0},
        LayerDesc{LayerKind::Relu},
        LayerDesc{LayerKind::AvgPool2x2},
        LayerDesc{LayerKind::Linear, 120},
        LayerDesc{LayerKind::Relu},
        LayerDesc{LayerKind::Linear, 84},
        LayerDesc{LayerKind::Relu},
        LayerDesc{LayerKind::Linear, 10},
        LayerDesc{LayerKind::Softmax},
    };
    return a;
}

ArchSpec ArchSpec::small_mlp(int in_dim, int h1, int h2, int num_classes) {
    ArchSpec a;
    a.name = "mlp:" + std::to_string(h1) + ":" + std::to_string(h2);
    a.input = Shape3{1, 1, in_dim};
    a.layers = {
        LayerDesc{LayerKind::Linear, h1},
        LayerDesc{LayerKind::Relu},
        LayerDesc{LayerKind::Linear, h2},
        LayerDesc{LayerKind::Relu},
        LayerDesc{LayerKind::Linear, num_classes},
        LayerDesc{LayerKind::Softmax},
    };
    return a;
}

ArchSpec ArchSpec::mlp(int in_dim, int num_classes) {
    ArchSpec a = small_mlp(in_dim, 128, 84, num_classes);
    a.name = "mlp";
    return a;
}

ArchSpec ArchSpec::by_name(const std::string& name, int in_dim, int num_classes) {
    if (name == "lenet5") {
        if (in_dim != 28 * 28) {
            throw ShapeMismatch("lenet5 expects 28x28 inputs, got dim " + std::to_string(in_dim));
        }
        ArchSpec a = lenet5();
        if (num_classes != a.num_classes()) {
            a.layers[a.layers.size() - 2].units = num_classes;
        }
        return a;
    }
    if (name == "mlp") return mlp(in_dim, num_classes);
    if (name.rfind("mlp:", 0) == 0) {
        const auto c = name.find(':', 4);
        if (c == std::string::npos) throw InvalidParam("arch '" + name + "': expected mlp:<h1>:<h2>");
        const int h1 = std::stoi(name.substr(4, c - 4));
        const int h2 = std::stoi(name.substr(c + 1));
        return small_mlp(in_dim, h1, h2, num_classes);
    }
    throw InvalidParam("unknown architecture '" + name + "'");
}

size_t FeatureExtractor::param_count() const {
    size_t n = 0;
    for (const auto& lw : weights) n += lw.W.size() + lw.b.size();
    return n;
}

uint64_t FeatureExtractor::fingerprint() const {
    Fnv1a h;
    for (const auto& lw : weights) {
        h.update_vec(lw.W);
        h.update_vec(lw.b);
    }
    return h.digest();
}

namespace {

struct LayerDims {
    size_t w_size = 0;
    size_t b_size = 0;
    int fan_in = 0;
};

LayerDims layer_dims(const LayerDesc& ld, const Shape3& in) {
    LayerDims d;
    if (ld.kind == LayerKind::Conv5x5) {
        d.w_size = size_t(ld.filters) * in.c * 25;
        d.b_size = size_t(ld.filters);
        d.fan_in = in.c * 25;
    } else if (ld.kind == LayerKind::Linear) {
        d.w_size = size_t(ld.units) * in.count();
        d.b_size = size_t(ld.units);
        d.fan_in = in.count();
    }
    return d;
}

void conv_forward(const LayerDesc& ld, const Shape3& in, const Shape3& out,
                  const LayerWeights& lw, std::span<const double> x, std::span<double> y) {
    const int H = in.h, W = in.w, Cin = in.c, OH = out.h, OW = out.w, F = ld.filters,
              P = ld.pad;
    for (int oy = 0; oy < OH; ++oy) {
        for (int ox = 0; ox < OW; ++ox) {
            for (int f = 0; f < F; ++f) {
                double acc = lw.b[f];
                for (int ky = 0; ky < 5; ++ky) {
                    const int iy = oy - P + ky;
                    if (iy < 0 || iy >= H) continue;
                    for (int kx = 0; kx < 5; ++kx) {
                        const int ix = ox - P + kx;
                        if (ix < 0 || ix >= W) continue;
                        const size_t xoff = (size_t(iy) * W + ix) * Cin;
                        for (int ci = 0; ci < Cin; ++ci) {
                            acc += x[xoff + ci] * lw.W[((size_t(f) * Cin + ci) * 5 + ky) * 5 + kx];
                        }
                    }
                }
                y[(size_t(oy) * OW + ox) * F + f] = acc;
            }
        }
    }
}

void conv_backward(const LayerDesc& ld, const Shape3& in, const Shape3& out,
                   const LayerWeights& lw, std::span<const double> x,
                   std::span<const double> dy, std::span<double> dx, LayerWeights& grad) {
    const int H = in.h, W = in.w, Cin = in.c, OH = out.h, OW = out.w, F = ld.filters,
              P = ld.pad;
    for (int oy = 0; oy < OH; ++oy) {
        for (int ox = 0; ox < OW; ++ox) {
            for (int f = 0; f < F; ++f) {
                const double d = dy[(size_t(oy) * OW + ox) * F + f];
                grad.b[f] += d;
                for (int ky = 0; ky < 5; ++ky) {
                    const int iy = oy - P + ky;
                    if (iy < 0 || iy >= H) continue;
                    for (int kx = 0; kx < 5; ++kx) {
                        const int ix = ox - P + kx;
                        if (ix < 0 || ix >= W) continue;
                        const size_t xoff = (size_t(iy) * W + ix) * Cin;
                        for (int ci = 0; ci < Cin; ++ci) {
                            const size_t widx = ((size_t(f) * Cin + ci) * 5 + ky) * 5 + kx;
                            grad.W[widx] += d * x[xoff + ci];
                            dx[xoff + ci] += d * lw.W[widx];
                        }
                    }
                }
            }
        }
    }
}

void pool_forward(const Shape3& in, const Shape3& out, std::span<const double> x,
                  std::span<double> y) {
    const int W = in.w, C = in.c, OH = out.h, OW = out.w;
    for (int oy = 0; oy < OH; ++oy) {
        for (int ox = 0; ox < OW; ++ox) {
            for (int c = 0; c < C; ++c) {
                const size_t r0 = (size_t(2 * oy) * W + 2 * ox) * C + c;
                const size_t r1 = (size_t(2 * oy + 1) * W + 2 * ox) * C + c;
                y[(size_t(oy) * OW + ox) * C + c] =
                    0.25 * (x[r0] + x[r0 + C] + x[r1] + x[r1 + C]);
            }
        }
    }
}

void pool_backward(const Shape3& in, const Shape3& out, std::span<const double> dy,
                   std::span<double> dx) {
    const int W = in.w, C = in.c, OH = out.h, OW = out.w;
    for (int oy = 0; oy < OH; ++oy) {
        for (int ox = 0; ox < OW; ++ox) {
            for (int c = 0; c < C; ++c) {
                const double d = 0.25 * dy[(size_t(oy) * OW + ox) * C + c];
                const size_t r0 = (size_t(2 * oy) * W + 2 * ox) * C + c;
                const size_t r1 = (size_t(2 * oy + 1) * W + 2 * ox) * C + c;
                dx[r0] += d;
                dx[r0 + C] += d;
                dx[r1] += d;
                dx[r1 + C] += d;
            }
        }
    }
}

void linear_forward(const LayerDesc& ld, int in_dim, const LayerWeights& lw,
                    std::span<const double> x, std::span<double> y) {
    for (int u = 0; u < ld.units; ++u) {
        const double* wrow = lw.W.data() + size_t(u) * in_dim;
        double acc = lw.b[u];
        for (int i = 0; i < in_dim; ++i) acc += wrow[i] * x[i];
        y[u] = acc;
    }
}

void linear_backward(const LayerDesc& ld, int in_dim, const LayerWeights& lw,
                     std::span<const double> x, std::span<const double> dy,
                     std::span<double> dx, LayerWeights& grad) {
    for (int u = 0; u < ld.units; ++u) {
        const double d = dy[u];
        grad.b[u] += d;
        double* gw = grad.W.data() + size_t(u) * in_dim;
        const double* wrow = lw.W.data() + size_t(u) * in_dim;
        for (int i = 0; i < in_dim; ++i) {
            gw[i] += d * x[i];
            dx[i] += d * wrow[i];
        }
    }
}

void softmax_row(std::span<const double> z, std::span<double> p) {
    double mx = z[0];
    for (double v : z) mx = std::max(mx, v);
    double sum = 0.0;
    for (size_t i = 0; i < z.size(); ++i) {
        p[i] = std::exp(z[i] - mx);
        sum += p[i];
    }
    for (size_t i = 0; i < z.size(); ++i) p[i] /= sum;
}

// Activations for every layer of one forward pass over a batch.
struct Workspace {
    std::vector<Matrix> act;  // act[0] = input, act[i+1] = output of layer i
};

void forward(const FeatureExtractor& fe, const Matrix& batch, size_t layer_count,
             Workspace& ws) {
    const auto chain = fe.arch.shape_chain();
    ws.act.assign(layer_count + 1, Matrix{});
    ws.act[0] = batch;
    for (size_t li = 0; li < layer_count; ++li) {
        const LayerDesc& ld = fe.arch.layers[li];
        const Shape3& in = chain[li];
        const Shape3& out = chain[li + 1];
        Matrix& src = ws.act[li];
        Matrix dst(batch.rows, size_t(out.count()));
        for (size_t r = 0; r < batch.rows; ++r) {
            auto x = src.row(r);
            auto y = dst.row(r);
            switch (ld.kind) {
                case LayerKind::Conv5x5:
                    conv_forward(ld, in, out, fe.weights[li], x, y);
                    break;
                case LayerKind::AvgPool2x2:
                    pool_forward(in, out, x, y);
                    break;
                case LayerKind::Relu:
                    for (size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
                    break;
                case LayerKind::Linear:
                    linear_forward(ld, in.count(), fe.weights[li], x, y);
                    break;
                case LayerKind::Softmax:
                    softmax_row(x, y);
                    break;
            }
        }
        ws.act[li + 1] = std::move(dst);
    }
}

void check_batch_shape(const FeatureExtractor& fe, const Matrix& batch) {
    if (batch.cols != size_t(fe.arch.input.count())) {
        throw ShapeMismatch("batch feature dim " + std::to_string(batch.cols) +
                            " does not match arch input dim " +
                            std::to_string(fe.arch.input.count()));
    }
}

std::vector<LayerWeights> zero_like(const FeatureExtractor& fe) {
    std::vector<LayerWeights> out(fe.weights.size());
    for (size_t i = 0; i < fe.weights.size(); ++i) {
        out[i].W.assign(fe.weights[i].W.size(), 0.0);
        out[i].b.assign(fe.weights[i].b.size(), 0.0);
    }
    return out;
}

}  // namespace

FeatureExtractor init_fe(const ArchSpec& arch, uint64_t seed) {
    arch.validate();
    FeatureExtractor fe;
    fe.arch = arch;
    fe.seed = seed;
    fe.weights.resize(arch.layers.size());
    const auto chain = arch.shape_chain();
    for (size_t li = 0; li < arch.layers.size(); ++li) {
        const LayerDims dims = layer_dims(arch.layers[li], chain[li]);
        if (dims.w_size == 0) continue;
        Rng rng(mix_seed(seed, li));
        const double bound = std::sqrt(6.0 / double(dims.fan_in));
        fe.weights[li].W.resize(dims.w_size);
        for (double& w : fe.weights[li].W) w = rng.uniform(-bound, bound);
        fe.weights[li].b.assign(dims.b_size, 0.0);
    }
    return fe;
}

Gradients loss_and_grads(const FeatureExtractor& fe, const Matrix& batch_features,
                         std::span<const int> batch_labels) {
    if (batch_features.rows == 0) throw EmptyDataset("loss_and_grads: empty batch");
    if (batch_features.rows != batch_labels.size()) {
        throw ShapeMismatch("loss_and_grads: feature/label count mismatch");
    }
    check_batch_shape(fe, batch_features);

    const size_t nl = fe.arch.layers.size();
    const auto chain = fe.arch.shape_chain();
    Workspace ws;
    forward(fe, batch_features, nl, ws);

    const size_t batch = batch_features.rows;
    const Matrix& probs = ws.act[nl];
    const int nc = fe.arch.num_classes();

    Gradients grads;
    grads.layers = zero_like(fe);
    double loss = 0.0;
    // Combined softmax + cross-entropy gradient at the softmax input.
    Matrix delta(batch, size_t(nc));
    for (size_t r = 0; r < batch; ++r) {
        const int y = batch_labels[r];
        if (y < 0 || y >= nc) throw ShapeMismatch("label out of range for architecture");
        const double p = std::max(probs.at(r, size_t(y)), 1e-300);
        loss -= std::log(p);
        for (int c = 0; c < nc; ++c) {
            delta.at(r, size_t(c)) = (probs.at(r, size_t(c)) - (c == y ? 1.0 : 0.0)) / double(batch);
        }
    }
    grads.loss = loss / double(batch);

    // Backward pass, skipping the softmax layer (already folded into delta).
    Matrix dcur = std::move(delta);
    for (size_t li = nl - 1; li-- > 0;) {
        const LayerDesc& ld = fe.arch.layers[li];
        const Shape3& in = chain[li];
        const Shape3& out = chain[li + 1];
        Matrix dprev(batch, size_t(in.count()));
        for (size_t r = 0; r < batch; ++r) {
            auto x = ws.act[li].row(r);
            auto dy = dcur.row(r);
            auto dx = dprev.row(r);
            switch (ld.kind) {
                case LayerKind::Conv5x5:
                    conv_backward(ld, in, out, fe.weights[li], x, dy, dx, grads.layers[li]);
                    break;
                case LayerKind::AvgPool2x2:
                    pool_backward(in, out, dy, dx);
                    break;
                case LayerKind::Relu: {
                    auto yact = ws.act[li + 1].row(r);
                    for (size_t i = 0; i < dx.size(); ++i) dx[i] = yact[i] > 0.0 ? dy[i] : 0.0;
                    break;
                }
                case LayerKind::Linear:
                    linear_backward(ld, in.count(), fe.weights[li], x, dy, dx, grads.layers[li]);
                    break;
                case LayerKind::Softmax:
                    break;  // unreachable: softmax is only the final layer
            }
        }
        dcur = std::move(dprev);
    }
    return grads;
}

FeatureExtractor train_fe(const FeatureExtractor& fe, const LabeledDataset& ds,
                          const TrainConfig& cfg, uint64_t seed) {
    if (ds.size() == 0) throw EmptyDataset("train_fe: dataset is empty");
    if (cfg.epochs < 0 || !(cfg.lr > 0.0) || cfg.batch < 1 || cfg.momentum < 0.0) {
        throw InvalidParam("train_fe: hyperparameters must be positive");
    }
    check_batch_shape(fe, ds.features);
    if (ds.num_classes > fe.arch.num_classes()) {
        throw ShapeMismatch("dataset has more classes than the prediction layer");
    }

    FeatureExtractor out = fe;
    out.train_ids = ds.id_set();
    out.seed = seed;

    std::vector<LayerWeights> velocity = zero_like(out);
    std::vector<size_t> order(ds.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    const size_t m = ds.size();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(mix_seed(seed, 0x10000u + uint64_t(epoch)));
        rng.shuffle(order);
        for (size_t start = 0; start < m; start += size_t(cfg.batch)) {
            const size_t count = std::min(size_t(cfg.batch), m - start);
            Matrix bx(count, ds.dim());
            std::vector<int> by(count);
            for (size_t i = 0; i < count; ++i) {
                const size_t src = order[start + i];
                auto row = ds.features.row(src);
                std::copy(row.begin(), row.end(), bx.row(i).begin());
                by[i] = ds.labels[src];
            }
            Gradients g = loss_and_grads(out, bx, by);
            if (!std::isfinite(g.loss)) {
                throw DivergedLoss("train_fe: loss diverged at epoch " + std::to_string(epoch));
            }
            for (size_t li = 0; li < out.weights.size(); ++li) {
                auto& w = out.weights[li];
                auto& v = velocity[li];
                const auto& gl = g.layers[li];
                for (size_t i = 0; i < w.W.size(); ++i) {
                    v.W[i] = cfg.momentum * v.W[i] + gl.W[i];
                    w.W[i] -= cfg.lr * v.W[i];
                }
                for (size_t i = 0; i < w.b.size(); ++i) {
                    v.b[i] = cfg.momentum * v.b[i] + gl.b[i];
                    w.b[i] -= cfg.lr * v.b[i];
                }
            }
        }
    }
    return out;
}

Matrix embed_features(const FeatureExtractor& fe, const Matrix& features) {
    const int edim = fe.arch.embedding_dim();
    Matrix out(features.rows, size_t(edim));
    if (features.rows == 0) return out;
    check_batch_shape(fe, features);

    const size_t feature_layers = fe.arch.feature_layer_count();
    const size_t chunk = 256;
    Workspace ws;
    for (size_t start = 0; start < features.rows; start += chunk) {
        const size_t count = std::min(chunk, features.rows - start);
        Matrix bx(count, features.cols);
        for (size_t i = 0; i < count; ++i) {
            auto row = features.row(start + i);
            std::copy(row.begin(), row.end(), bx.row(i).begin());
        }
        forward(fe, bx, feature_layers, ws);
        const Matrix& emb = ws.act[feature_layers];
        for (size_t i = 0; i < count; ++i) {
            auto src = emb.row(i);
            std::copy(src.begin(), src.end(), out.row(start + i).begin());
        }
    }
    return out;
}

EmbeddingSet embed(const FeatureExtractor& fe, const LabeledDataset& ds) {
    EmbeddingSet out;
    out.ids = ds.ids;
    out.producer = fe.fingerprint();
    out.values = embed_features(fe, ds.features);
    return out;
}

std::vector<int> predict_full(const FeatureExtractor& fe, const Matrix& features) {
    std::vector<int> pred(features.rows, 0);
    if (features.rows == 0) return pred;
    check_batch_shape(fe, features);
    // Argmax over the prediction layer's inputs; softmax is monotone.
    const size_t logits_layer = fe.arch.layers.size() - 1;
    const size_t chunk = 256;
    Workspace ws;
    for (size_t start = 0; start < features.rows; start += chunk) {
        const size_t count = std::min(chunk, features.rows - start);
        Matrix bx(count, features.cols);
        for (size_t i = 0; i < count; ++i) {
            auto row = features.row(start + i);
            std::copy(row.begin(), row.end(), bx.row(i).begin());
        }
        forward(fe, bx, logits_layer, ws);
        const Matrix& logits = ws.act[logits_layer];
        for (size_t i = 0; i < count; ++i) {
            auto row = logits.row(i);
            size_t best = 0;
            for (size_t c = 1; c < row.size(); ++c) {
                if (row[c] > row[best]) best = c;
            }
            pred[start + i] = int(best);
        }
    }
    return pred;
}

double full_model_accuracy(const FeatureExtractor& fe, const LabeledDataset& ds) {
    if (ds.size() == 0) throw EmptyDataset("full_model_accuracy: empty dataset");
    const auto pred = predict_full(fe, ds.features);
    size_t hits = 0;
    for (size_t i = 0; i < ds.size(); ++i) {
        if (pred[i] == ds.labels[i]) ++hits;
    }
    return double(hits) / double(ds.size());
}

}  // namespace maxrr
