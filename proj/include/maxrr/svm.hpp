#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "maxrr/dataset.hpp"
#include "maxrr/matrix.hpp"
#include "maxrr/nn.hpp"

namespace maxrr {

enum class KernelKind : uint8_t { Linear = 0 };

double kernel_eval(KernelKind k, std::span<const double> a, std::span<const double> b);

struct SvmConfig {
    double C = 1.0;
    double tol = 1e-4;        // KKT stopping tolerance
    double alpha_tol = 1e-8;  // support-set membership threshold
    long max_iter = 0;        // 0 = auto (scales with sample count)
    KernelKind kernel = KernelKind::Linear;
};

// One binary soft-margin SVM solved in the dual. Immutable once returned.
struct BinarySvm {
    std::vector<int64_t> train_ids;  // ascending, aligned with alpha/y
    std::vector<double> alpha;
    std::vector<int8_t> y;           // +-1
    IdSet support_ids;               // { id : alpha > alpha_tol }
    Matrix sv_x;                     // support rows of the training matrix
    std::vector<double> sv_coef;     // alpha * y for support rows
    std::vector<double> w;           // cached linear weights (kernel-sum identity)
    double bias = 0.0;
    double C = 1.0;
    double alpha_tol = 1e-8;
    KernelKind kernel = KernelKind::Linear;
    long iterations = 0;

    // Kernel-sum decision value sum_{l in S} alpha_l y_l K(x_l, x) + b.
    double decision(std::span<const double> x) const;
    // <w, x> + b; equals decision() within 1e-9 for the linear kernel.
    double decision_linear(std::span<const double> x) const;
};

BinarySvm solve_dual(const Matrix& X, std::span<const int8_t> y,
                     std::span<const int64_t> ids, const SvmConfig& cfg);
BinarySvm solve_dual(const EmbeddingSet& emb, std::span<const int8_t> y, const SvmConfig& cfg);

struct PlattParams {
    double a = 0.0;
    double b = 0.0;
    bool fitted = false;
};

// One-vs-rest multiclass SVM with optional Platt calibration.
struct OvrSvm {
    std::vector<BinarySvm> classes;
    std::vector<PlattParams> platt;
    IdSet train_ids;
    double platt_holdout = 0.0;
    uint64_t platt_seed = 0;

    int num_classes() const { return int(classes.size()); }
    bool has_platt() const;
    IdSet support_union() const;

    std::vector<double> decision_values(std::span<const double> x) const;
    int predict(std::span<const double> x) const;  // argmax, ties -> lowest class
    // Per-class sigmoid probabilities normalized to sum 1. Requires Platt fit.
    std::vector<double> probabilities(std::span<const double> x) const;
};

// Class c's binary problem labels class c +1, the rest -1. num_classes == 0
// derives the class count from the labels.
OvrSvm fit_ovr(const EmbeddingSet& emb, std::span<const int> labels, const SvmConfig& cfg,
               int num_classes = 0);

// Sigmoid calibration p_c = 1 / (1 + exp(A_c f_c + B_c)) fit by Newton
// iterations on regularized log-loss over a seeded holdout split.
OvrSvm fit_platt(OvrSvm model, const EmbeddingSet& emb, std::span<const int> labels,
                 double holdout_fraction, uint64_t seed);

// Fresh dual solve restricted to a subset of the previous training IDs.
OvrSvm retrain_on(const OvrSvm& prev, const EmbeddingSet& emb_subset,
                  std::span<const int> labels_subset, const SvmConfig& cfg);

std::vector<int> predict_all(const OvrSvm& model, const EmbeddingSet& emb);
double ovr_accuracy(const OvrSvm& model, const EmbeddingSet& emb, std::span<const int> labels);

}  // namespace maxrr
