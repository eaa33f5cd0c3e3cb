#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "maxrr/dataset.hpp"
#include "maxrr/pipeline.hpp"

namespace maxrr {

// Per-sample cross-entropy confidence c = -log p(true label), calibrated
// probabilities clamped to [1e-12, 1] before the log.
struct ConfidenceSet {
    std::vector<int64_t> ids;    // ascending
    std::vector<double> values;  // aligned, >= 0
    uint64_t model_fingerprint = 0;

    double value_of(int64_t id) const;
    ConfidenceSet restricted_to(const IdSet& keep) const;
};

ConfidenceSet confidences(const SplitModel& model, const LabeledDataset& ds);

struct MembershipPoint {
    double confidence = 0.0;
    bool member = false;
    int64_t id = 0;
};

// Members labeled 1, non-members 0; the two ID pools must be disjoint.
std::vector<MembershipPoint> build_membership_set(const ConfidenceSet& members,
                                                  const ConfidenceSet& nonmembers);

// Thresholds ascend; a sample is predicted member iff confidence < tau, so
// TPR and FPR are nondecreasing with (0,0) and (1,1) anchored at the ends.
struct RocCurve {
    std::vector<double> thresholds;
    std::vector<double> fpr;
    std::vector<double> tpr;
};

struct RocResult {
    RocCurve curve;
    double tau_star = 0.0;  // maximizes Youden's J = TPR - FPR, ties -> smallest
    double j_star = 0.0;
};

RocResult roc_and_threshold(std::span<const MembershipPoint> m);

enum class MemberPool : uint8_t { Full = 0, NonCore = 1 };

struct AuditReport {
    double tau_star = 0.0;
    std::vector<int64_t> ids;         // the queried forget set, ascending
    std::vector<double> confidence;   // aligned
    std::vector<uint8_t> member;      // 1 = claimed member (NOT unlearned)
    std::string pool_desc;
    RocResult roc;

    size_t claimed_unlearned() const;
};

// Full MIA pass: confidences on train/test, membership set per pool policy,
// optimized threshold, per-sample verdicts for the forget set.
AuditReport verify_unlearning(const SplitModel& model, const LabeledDataset& ds_train,
                              const LabeledDataset& ds_test, const IdSet& forget,
                              MemberPool pool);

// Complementary CDF of per-sample cross-strategy agreement: row i holds the
// percentage of samples whose verdicts agree in at least i/R of the runs.
struct AgreementCurve {
    std::vector<double> agreement_pct;  // 0, 100/R, ..., 100
    std::vector<double> sample_pct;
};

AgreementCurve agreement_curve(std::span<const AuditReport> a, std::span<const AuditReport> b);

// Runs-claimed-unlearned counts per sample, as a histogram over 0..R.
std::vector<size_t> claims_histogram(std::span<const AuditReport> reports);

std::string roc_to_csv(const RocResult& roc);
std::string verdicts_to_csv(const AuditReport& report);
std::string claims_to_csv(std::span<const AuditReport> a, std::span<const AuditReport> b);
std::string agreement_to_csv(const AgreementCurve& curve);

}  // namespace maxrr
