#include "maxrr/audit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "maxrr/error.hpp"

namespace maxrr {

namespace {

constexpr double kProbFloor = 1e-12;

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

}  // namespace

double ConfidenceSet::value_of(int64_t id) const {
    auto it = std::lower_bound(ids.begin(), ids.end(), id);
    if (it == ids.end() || *it != id) {
        throw UnknownId("confidence set: id " + std::to_string(id) + " missing");
    }
    return values[size_t(it - ids.begin())];
}

ConfidenceSet ConfidenceSet::restricted_to(const IdSet& keep) const {
    ConfidenceSet out;
    out.model_fingerprint = model_fingerprint;
    out.ids.reserve(keep.size());
    out.values.reserve(keep.size());
    for (int64_t id : keep.ids) {
        out.values.push_back(value_of(id));
        out.ids.push_back(id);
    }
    return out;
}

ConfidenceSet confidences(const SplitModel& model, const LabeledDataset& ds) {
    if (!model.svm.has_platt()) {
        throw MissingCalibration("confidences: model has no Platt calibration");
    }
    ConfidenceSet out;
    out.ids = ds.ids;
    out.values.resize(ds.size());
    out.model_fingerprint = model.fe.fingerprint();

    const EmbeddingSet emb = embed(model.fe, ds);
    for (size_t i = 0; i < ds.size(); ++i) {
        const auto probs = model.svm.probabilities(emb.values.row(i));
        const double p = std::clamp(probs[size_t(ds.labels[i])], kProbFloor, 1.0);
        out.values[i] = -std::log(p);
    }
    return out;
}

std::vector<MembershipPoint> build_membership_set(const ConfidenceSet& members,
                                                  const ConfidenceSet& nonmembers) {
    if (members.ids.empty() || nonmembers.ids.empty()) {
        throw EmptyPool("build_membership_set: both pools must be non-empty");
    }
    const IdSet a{std::vector<int64_t>(members.ids)};
    const IdSet b{std::vector<int64_t>(nonmembers.ids)};
    if (a.intersects(b)) {
        throw OverlappingPools("build_membership_set: member and non-member ids overlap");
    }
    std::vector<MembershipPoint> out;
    out.reserve(members.ids.size() + nonmembers.ids.size());
    for (size_t i = 0; i < members.ids.size(); ++i) {
        out.push_back({members.values[i], true, members.ids[i]});
    }
    for (size_t i = 0; i < nonmembers.ids.size(); ++i) {
        out.push_back({nonmembers.values[i], false, nonmembers.ids[i]});
    }
    return out;
}

RocResult roc_and_threshold(std::span<const MembershipPoint> m) {
    size_t n_pos = 0, n_neg = 0;
    for (const auto& p : m) (p.member ? n_pos : n_neg) += 1;
    if (n_pos == 0 || n_neg == 0) {
        throw SingleClass("roc_and_threshold: need both members and non-members");
    }

    std::vector<double> values;
    values.reserve(m.size());
    for (const auto& p : m) values.push_back(p.confidence);
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());

    // Thresholds: midpoints between consecutive distinct confidences, plus a
    // sentinel at the minimum (predicts nobody, since membership is strict <)
    // and one past the maximum (predicts everybody).
    std::vector<double> thresholds;
    thresholds.reserve(values.size() + 1);
    thresholds.push_back(values.front());
    for (size_t i = 0; i + 1 < values.size(); ++i) {
        thresholds.push_back(0.5 * (values[i] + values[i + 1]));
    }
    thresholds.push_back(values.back() + 1.0);

    RocResult res;
    res.curve.thresholds = thresholds;
    res.curve.fpr.resize(thresholds.size());
    res.curve.tpr.resize(thresholds.size());
    res.tau_star = thresholds.front();
    res.j_star = -1.0;
    for (size_t t = 0; t < thresholds.size(); ++t) {
        size_t tp = 0, fp = 0;
        for (const auto& p : m) {
            if (p.confidence < thresholds[t]) (p.member ? tp : fp) += 1;
        }
        const double tpr = double(tp) / double(n_pos);
        const double fpr = double(fp) / double(n_neg);
        res.curve.tpr[t] = tpr;
        res.curve.fpr[t] = fpr;
        const double j = tpr - fpr;
        if (j > res.j_star) {
            res.j_star = j;
            res.tau_star = thresholds[t];
        }
    }
    return res;
}

size_t AuditReport::claimed_unlearned() const {
    size_t n = 0;
    for (uint8_t v : member) n += v == 0 ? 1 : 0;
    return n;
}

AuditReport verify_unlearning(const SplitModel& model, const LabeledDataset& ds_train,
                              const LabeledDataset& ds_test, const IdSet& forget,
                              MemberPool pool) {
    if (!forget.is_subset_of(ds_train.id_set())) {
        throw UnknownId("verify_unlearning: forget ids outside the training corpus");
    }
    const ConfidenceSet c_train = confidences(model, ds_train);
    const ConfidenceSet c_test = confidences(model, ds_test);

    IdSet member_ids = ds_train.id_set().set_difference(forget);
    std::string pool_desc = "full";
    if (pool == MemberPool::NonCore) {
        member_ids = member_ids.set_difference(model.fe_train_ids);
        pool_desc = "non_core";
    }
    if (member_ids.empty()) throw EmptyPool("verify_unlearning: member pool is empty");

    const auto m = build_membership_set(c_train.restricted_to(member_ids), c_test);
    const RocResult roc = roc_and_threshold(m);

    AuditReport report;
    report.tau_star = roc.tau_star;
    report.roc = roc;
    report.pool_desc = pool_desc;
    report.ids = forget.ids;
    report.confidence.resize(forget.size());
    report.member.resize(forget.size());
    for (size_t i = 0; i < forget.size(); ++i) {
        const double c = c_train.value_of(forget.ids[i]);
        report.confidence[i] = c;
        report.member[i] = c < roc.tau_star ? 1 : 0;
    }
    return report;
}

AgreementCurve agreement_curve(std::span<const AuditReport> a, std::span<const AuditReport> b) {
    if (a.size() != b.size() || a.empty()) {
        throw RunMismatch("agreement_curve: run counts differ or are empty");
    }
    const size_t runs = a.size();
    const auto& ids = a[0].ids;
    for (size_t r = 0; r < runs; ++r) {
        if (a[r].ids != ids || b[r].ids != ids) {
            throw RunMismatch("agreement_curve: forget sets differ across runs");
        }
    }

    const size_t n = ids.size();
    std::vector<size_t> agree(n, 0);
    for (size_t r = 0; r < runs; ++r) {
        for (size_t i = 0; i < n; ++i) {
            if (a[r].member[i] == b[r].member[i]) agree[i] += 1;
        }
    }

    AgreementCurve curve;
    curve.agreement_pct.reserve(runs + 1);
    curve.sample_pct.reserve(runs + 1);
    for (size_t level = 0; level <= runs; ++level) {
        size_t count = 0;
        for (size_t v : agree) {
            if (v >= level) ++count;
        }
        curve.agreement_pct.push_back(100.0 * double(level) / double(runs));
        curve.sample_pct.push_back(100.0 * double(count) / double(n));
    }
    return curve;
}

std::vector<size_t> claims_histogram(std::span<const AuditReport> reports) {
    if (reports.empty()) throw RunMismatch("claims_histogram: no reports");
    const size_t runs = reports.size();
    const auto& ids = reports[0].ids;
    for (const auto& r : reports) {
        if (r.ids != ids) throw RunMismatch("claims_histogram: forget sets differ across runs");
    }
    std::vector<size_t> per_sample(ids.size(), 0);
    for (const auto& r : reports) {
        for (size_t i = 0; i < ids.size(); ++i) {
            if (r.member[i] == 0) per_sample[i] += 1;  // claimed unlearned this run
        }
    }
    std::vector<size_t> hist(runs + 1, 0);
    for (size_t v : per_sample) hist[v] += 1;
    return hist;
}

std::string roc_to_csv(const RocResult& roc) {
    std::ostringstream out;
    out << "tau,fpr,tpr\n";
    for (size_t i = 0; i < roc.curve.thresholds.size(); ++i) {
        out << fmt_double(roc.curve.thresholds[i]) << "," << fmt_double(roc.curve.fpr[i]) << ","
            << fmt_double(roc.curve.tpr[i]) << "\n";
    }
    return out.str();
}

std::string verdicts_to_csv(const AuditReport& report) {
    std::ostringstream out;
    out << "id,confidence,verdict\n";
    for (size_t i = 0; i < report.ids.size(); ++i) {
        out << report.ids[i] << "," << fmt_double(report.confidence[i]) << ","
            << (report.member[i] ? "member" : "unlearned") << "\n";
    }
    return out.str();
}

std::string claims_to_csv(std::span<const AuditReport> a, std::span<const AuditReport> b) {
    const auto ha = claims_histogram(a);
    const auto hb = claims_histogram(b);
    if (ha.size() != hb.size()) throw RunMismatch("claims_to_csv: run counts differ");
    std::ostringstream out;
    out << "claims,count_strategy_a,count_strategy_b\n";
    for (size_t i = 0; i < ha.size(); ++i) {
        out << i << "," << ha[i] << "," << hb[i] << "\n";
    }
    return out.str();
}

std::string agreement_to_csv(const AgreementCurve& curve) {
    std::ostringstream out;
    out << "agreement_pct,sample_pct\n";
    for (size_t i = 0; i < curve.agreement_pct.size(); ++i) {
        out << fmt_double(curve.agreement_pct[i]) << "," << fmt_double(curve.sample_pct[i])
            << "\n";
    }
    return out.str();
}

}  // namespace maxrr
