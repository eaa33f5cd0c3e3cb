#pragma once

// Independent reference implementations used only by tests. Nothing here may
// call into the solver/backprop/ROC code paths they are checking.

#include <span>
#include <vector>

#include "maxrr/audit.hpp"
#include "maxrr/matrix.hpp"
#include "maxrr/nn.hpp"

namespace maxrr::oracle {

// Dual objective sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j <x_i, x_j>.
double dual_objective(const Matrix& X, std::span<const int8_t> y,
                      std::span<const double> alpha);

struct DualSolution {
    std::vector<double> alpha;
    double objective = 0.0;
};

// Projected-gradient ascent on the dual with exact projection onto the
// box-and-hyperplane feasible set (bisection on the hyperplane multiplier).
DualSolution pg_dual(const Matrix& X, std::span<const int8_t> y, double C, int iters);

// Worst KKT residual of a candidate solution (uses the given bias).
double kkt_residual(const Matrix& X, std::span<const int8_t> y, std::span<const double> alpha,
                    double bias, double C);

// Central finite differences of the batch cross-entropy loss, one weight at a
// time.
std::vector<LayerWeights> finite_diff_grads(const FeatureExtractor& fe, const Matrix& bx,
                                            std::span<const int> by, double h);

struct BruteRoc {
    std::vector<double> thresholds;
    std::vector<double> fpr;
    std::vector<double> tpr;
    double tau_star = 0.0;
    double j_star = 0.0;
};

// Quadratic-time ROC: per threshold, count members/non-members below it by
// direct scan. Threshold set mirrors the contract (value midpoints plus
// sentinels at the minimum and past the maximum).
BruteRoc brute_force_roc(std::span<const MembershipPoint> m);

}  // namespace maxrr::oracle
