#include "maxrr/svm.hpp"

#include <algorithm>
#include <cmath>

#include "maxrr/error.hpp"
#include "maxrr/parallel.hpp"
#include "maxrr/rng.hpp"

namespace maxrr {

double kernel_eval(KernelKind k, std::span<const double> a, std::span<const double> b) {
    switch (k) {
        case KernelKind::Linear:
            return dot(a, b);
    }
    throw InvalidParam("unknown kernel");
}

double BinarySvm::decision(std::span<const double> x) const {
    if (x.size() != w.size()) {
        throw ShapeMismatch("decision: query dim " + std::to_string(x.size()) +
                            " != model dim " + std::to_string(w.size()));
    }
    if (sv_x.rows == 0) return bias;
    double acc = bias;
    for (size_t s = 0; s < sv_x.rows; ++s) {
        acc += sv_coef[s] * kernel_eval(kernel, sv_x.row(s), x);
    }
    return acc;
}

double BinarySvm::decision_linear(std::span<const double> x) const {
    if (x.size() != w.size()) {
        throw ShapeMismatch("decision_linear: query dim mismatch");
    }
    return dot(w, x) + bias;
}

namespace {

// Pair update shared by both SMO phases. Solves the two-variable subproblem
// for (i, j) against the exact current weights, with bound snapping so box
// states stay exact. Returns false when the pair cannot move.
struct PairUpdate {
    double ai_new = 0.0;
    double aj_new = 0.0;
    double di = 0.0;
    double dj = 0.0;
};

bool solve_pair(const Matrix& X, std::span<const int8_t> y, std::span<const double> alpha,
                double C, size_t i, size_t j, double ei, double ej, PairUpdate& out) {
    if (i == j) return false;
    const auto xi = X.row(i);
    const auto xj = X.row(j);
    const double kii = dot(xi, xi);
    const double kjj = dot(xj, xj);
    const double kij = dot(xi, xj);
    double eta = kii + kjj - 2.0 * kij;
    if (eta < 1e-12) eta = 1e-12;

    const double ai_old = alpha[i];
    const double aj_old = alpha[j];
    // Bounds via the alpha difference/sum so that equal alphas give exact
    // 0/C endpoints (C + aj - ai rounds one ulp short of C otherwise).
    double lo, hi;
    if (y[i] != y[j]) {
        const double diff = aj_old - ai_old;
        lo = std::max(0.0, diff);
        hi = std::min(C, C + diff);
    } else {
        const double sum = ai_old + aj_old;
        lo = std::max(0.0, sum - C);
        hi = std::min(C, sum);
    }

    // Snap to the exact box bounds: alphas one ulp away from 0 or C would
    // otherwise be misclassified as free by the working-set selection.
    const double snap = 1e-12 * (1.0 + C);
    double aj = aj_old + double(y[j]) * (ei - ej) / eta;
    aj = std::clamp(aj, lo, hi);
    if (aj < snap) {
        aj = 0.0;
    } else if (C - aj < snap) {
        aj = C;
    }
    if (std::abs(aj - aj_old) < 1e-16) return false;
    double ai = ai_old + double(y[i]) * double(y[j]) * (aj_old - aj);
    ai = std::clamp(ai, 0.0, C);
    if (ai < snap) {
        ai = 0.0;
    } else if (C - ai < snap) {
        ai = C;
    }
    out.ai_new = ai;
    out.aj_new = aj;
    out.di = ai - ai_old;
    out.dj = aj - aj_old;
    return true;
}

// Bulk phase: Platt-style alternating passes with an error cache over the
// free set. Every accepted step is an exact two-variable ascent against the
// exact maintained weights; only the candidate choice uses cached values, so
// staleness can waste a step but never corrupt the state. The caller owns the
// final optimality certificate.
void smo_bulk_phase(const Matrix& X, std::span<const int8_t> y, double C, double tol,
                    long budget, std::vector<double>& alpha, std::vector<double>& w,
                    long& steps) {
    const size_t m = X.rows;
    const size_t d = X.cols;
    double b = 0.0;
    std::vector<double> ecache(m, 0.0);  // meaningful for free indices only
    std::vector<char> is_free(m, 0);
    std::vector<uint32_t> free_idx;  // ascending
    std::vector<double> dw(d, 0.0);

    auto raw = [&](size_t l) { return dot(w, X.row(l)); };

    auto set_free = [&](size_t l, bool now_free) {
        if (bool(is_free[l]) == now_free) return;
        is_free[l] = now_free ? 1 : 0;
        auto it = std::lower_bound(free_idx.begin(), free_idx.end(), uint32_t(l));
        if (now_free) {
            free_idx.insert(it, uint32_t(l));
        } else {
            free_idx.erase(it);
        }
    };

    auto take_step = [&](size_t i, size_t j, double ei, double ej) {
        PairUpdate up;
        if (!solve_pair(X, y, alpha, C, i, j, ei, ej, up)) return false;
        const auto xi = X.row(i);
        const auto xj = X.row(j);
        const double ci = up.di * double(y[i]);
        const double cj = up.dj * double(y[j]);
        const double kii = dot(xi, xi), kjj = dot(xj, xj), kij = dot(xi, xj);

        // Threshold update (midpoint rule when both land on a bound).
        const double b1 = b - ei - ci * kii - cj * kij;
        const double b2 = b - ej - ci * kij - cj * kjj;
        const bool i_free = up.ai_new > 0.0 && up.ai_new < C;
        const bool j_free = up.aj_new > 0.0 && up.aj_new < C;
        const double b_new = i_free ? b1 : (j_free ? b2 : 0.5 * (b1 + b2));

        alpha[i] = up.ai_new;
        alpha[j] = up.aj_new;
        for (size_t t = 0; t < d; ++t) dw[t] = ci * xi[t] + cj * xj[t];
        for (size_t t = 0; t < d; ++t) w[t] += dw[t];
        const double db = b_new - b;
        b = b_new;
        set_free(i, i_free);
        set_free(j, j_free);
        for (uint32_t f : free_idx) {
            if (f == i || f == j) continue;
            ecache[f] += dot(dw, X.row(f)) + db;
        }
        if (is_free[i]) ecache[i] = raw(i) + b - double(y[i]);
        if (is_free[j]) ecache[j] = raw(j) + b - double(y[j]);
        ++steps;
        return true;
    };

    auto examine = [&](size_t i) {
        const double ei = is_free[i] ? ecache[i] : raw(i) + b - double(y[i]);
        const double r = ei * double(y[i]);  // y f - 1
        const bool violated =
            (r < -tol && alpha[i] < C) || (r > tol && alpha[i] > 0.0);
        if (!violated) return false;

        // Partner hierarchy: best cached error gap over the free set, then
        // the free set in index order, then everything in index order.
        if (!free_idx.empty()) {
            size_t best = m;
            double best_gap = -1.0;
            for (uint32_t f : free_idx) {
                const double gap = std::abs(ei - ecache[f]);
                if (gap > best_gap) {
                    best_gap = gap;
                    best = f;
                }
            }
            if (best < m && take_step(i, best, ei, ecache[best])) return true;
        }
        for (uint32_t f : free_idx) {
            if (take_step(i, f, ei, ecache[f])) return true;
        }
        for (size_t l = 0; l < m; ++l) {
            if (is_free[l]) continue;  // already tried above
            if (take_step(i, l, ei, raw(l) + b - double(y[l]))) return true;
        }
        return false;
    };

    bool examine_all = true;
    size_t changed = 1;
    while ((changed > 0 || examine_all) && steps < budget) {
        changed = 0;
        if (examine_all) {
            for (size_t l = 0; l < m && steps < budget; ++l) changed += examine(l);
        } else {
            // the free list mutates during iteration; walk a snapshot
            const std::vector<uint32_t> snapshot = free_idx;
            for (uint32_t l : snapshot) {
                if (steps >= budget) break;
                changed += examine(l);
            }
        }
        if (examine_all) {
            examine_all = false;
        } else if (changed == 0) {
            examine_all = true;
        }
    }
}

}  // namespace

BinarySvm solve_dual(const Matrix& X, std::span<const int8_t> y,
                     std::span<const int64_t> ids, const SvmConfig& cfg) {
    const size_t m = X.rows;
    const size_t d = X.cols;
    if (m != y.size() || m != ids.size()) {
        throw ShapeMismatch("solve_dual: row/label/id counts disagree");
    }
    if (!(cfg.C > 0.0) || !(cfg.tol > 0.0)) {
        throw InvalidParam("solve_dual: C and tol must be positive");
    }
    size_t pos = 0;
    for (int8_t v : y) {
        if (v != 1 && v != -1) throw InvalidParam("solve_dual: labels must be +-1");
        if (v == 1) ++pos;
    }
    if (pos == 0 || pos == m) {
        throw DegenerateLabels("solve_dual: need at least one sample of each sign");
    }

    const double C = cfg.C;
    const long max_iter =
        cfg.max_iter > 0 ? cfg.max_iter : std::max<long>(200000, 100 * long(m));

    std::vector<double> alpha(m, 0.0);
    std::vector<double> w(d, 0.0);
    std::vector<double> dw(d, 0.0);

    // Bulk of the work happens in cheap Platt-style passes; the maximal-
    // violating-pair loop below then certifies (and if needed restores) the
    // KKT gap criterion the contract promises.
    long iter = 0;
    smo_bulk_phase(X, y, C, cfg.tol, max_iter, alpha, w, iter);

    std::vector<double> u(m, 0.0);  // raw margins, u_l = w . x_l
    for (size_t l = 0; l < m; ++l) u[l] = dot(w, X.row(l));

    // Maximal-violating-pair SMO on the dual. g_l = y_l - u_l is the negated
    // KKT gradient; optimality is max_{I_up} g - min_{I_low} g <= tol.
    for (; iter < max_iter; ++iter) {
        double gmax = -1e300, gmin = 1e300;
        size_t i = m, j = m;
        for (size_t l = 0; l < m; ++l) {
            const double g = double(y[l]) - u[l];
            const bool up = (y[l] == 1) ? (alpha[l] < C) : (alpha[l] > 0.0);
            const bool low = (y[l] == 1) ? (alpha[l] > 0.0) : (alpha[l] < C);
            if (up && g > gmax) {
                gmax = g;
                i = l;
            }
            if (low && g < gmin) {
                gmin = g;
                j = l;
            }
        }
        if (i >= m || j >= m) break;  // cannot happen with both signs present
        if (gmax - gmin <= cfg.tol) break;

        PairUpdate up;
        if (!solve_pair(X, y, alpha, C, i, j, u[i] - double(y[i]), u[j] - double(y[j]), up)) {
            throw NoConvergence("solve_dual: stalled at gap " + std::to_string(gmax - gmin) +
                                " after " + std::to_string(iter) + " iterations");
        }
        alpha[i] = up.ai_new;
        alpha[j] = up.aj_new;

        // Linear-kernel margin update: u += X . dw with dw rank-2.
        const auto xi = X.row(i);
        const auto xj = X.row(j);
        const double ci = up.di * double(y[i]);
        const double cj = up.dj * double(y[j]);
        for (size_t t = 0; t < d; ++t) dw[t] = ci * xi[t] + cj * xj[t];
        for (size_t l = 0; l < m; ++l) u[l] += dot(dw, X.row(l));
        for (size_t t = 0; t < d; ++t) w[t] += dw[t];
    }
    if (iter >= max_iter) {
        double gmax = -1e300, gmin = 1e300;
        for (size_t l = 0; l < m; ++l) {
            const double g = double(y[l]) - u[l];
            const bool up = (y[l] == 1) ? (alpha[l] < C) : (alpha[l] > 0.0);
            const bool low = (y[l] == 1) ? (alpha[l] > 0.0) : (alpha[l] < C);
            if (up) gmax = std::max(gmax, g);
            if (low) gmin = std::min(gmin, g);
        }
        throw NoConvergence("solve_dual: iteration budget " + std::to_string(max_iter) +
                            " exhausted, KKT gap " + std::to_string(gmax - gmin));
    }

    BinarySvm model;
    model.train_ids.assign(ids.begin(), ids.end());
    model.alpha = std::move(alpha);
    model.y.assign(y.begin(), y.end());
    model.C = C;
    model.alpha_tol = cfg.alpha_tol;
    model.kernel = cfg.kernel;
    model.iterations = iter;

    // Support set and the cached linear weights, rebuilt fresh from the final
    // alphas so cached_w is exactly the kernel-sum aggregate.
    std::vector<size_t> sv_rows;
    for (size_t l = 0; l < m; ++l) {
        if (model.alpha[l] > cfg.alpha_tol) sv_rows.push_back(l);
    }
    model.sv_x = Matrix(sv_rows.size(), d);
    model.sv_coef.resize(sv_rows.size());
    model.w.assign(d, 0.0);
    std::vector<int64_t> sv_ids(sv_rows.size());
    for (size_t s = 0; s < sv_rows.size(); ++s) {
        const size_t l = sv_rows[s];
        sv_ids[s] = ids[l];
        const auto row = X.row(l);
        std::copy(row.begin(), row.end(), model.sv_x.row(s).begin());
        const double coef = model.alpha[l] * double(model.y[l]);
        model.sv_coef[s] = coef;
        for (size_t t = 0; t < d; ++t) model.w[t] += coef * row[t];
    }
    model.support_ids = IdSet(std::move(sv_ids));

    // Bias averaged over free support vectors (0 < alpha < C), falling back to
    // all support vectors when none are free. The free-vector average always
    // lies inside the KKT-feasible interval; the all-vector fallback need not,
    // so it is clamped there to keep the stated margin conditions within tol.
    double bsum = 0.0;
    size_t bcount = 0;
    for (const size_t l : sv_rows) {
        if (model.alpha[l] < C - cfg.alpha_tol) {
            bsum += double(model.y[l]) - dot(model.w, X.row(l));
            ++bcount;
        }
    }
    if (bcount > 0) {
        model.bias = bsum / double(bcount);
    } else {
        for (const size_t l : sv_rows) {
            bsum += double(model.y[l]) - dot(model.w, X.row(l));
            ++bcount;
        }
        double avg = bcount > 0 ? bsum / double(bcount) : 0.0;
        double gmax = -1e300, gmin = 1e300;
        for (size_t l = 0; l < m; ++l) {
            const double g = double(model.y[l]) - dot(model.w, X.row(l));
            const bool up = (model.y[l] == 1) ? (model.alpha[l] < C) : (model.alpha[l] > 0.0);
            const bool low = (model.y[l] == 1) ? (model.alpha[l] > 0.0) : (model.alpha[l] < C);
            if (up) gmax = std::max(gmax, g);
            if (low) gmin = std::min(gmin, g);
        }
        const double margin = cfg.tol * (1.0 - 1e-3);
        const double lo_b = gmax - margin;
        const double hi_b = gmin + margin;
        if (lo_b <= hi_b) {
            avg = std::clamp(avg, lo_b, hi_b);
        } else {
            avg = 0.5 * (gmax + gmin);
        }
        model.bias = avg;
    }
    return model;
}

BinarySvm solve_dual(const EmbeddingSet& emb, std::span<const int8_t> y, const SvmConfig& cfg) {
    return solve_dual(emb.values, y, emb.ids, cfg);
}

bool OvrSvm::has_platt() const {
    if (platt.size() != classes.size() || platt.empty()) return false;
    for (const auto& p : platt) {
        if (!p.fitted || !std::isfinite(p.a) || !std::isfinite(p.b)) return false;
    }
    return true;
}

IdSet OvrSvm::support_union() const {
    IdSet s;
    for (const auto& c : classes) s = s.set_union(c.support_ids);
    return s;
}

std::vector<double> OvrSvm::decision_values(std::span<const double> x) const {
    std::vector<double> out(classes.size());
    for (size_t c = 0; c < classes.size(); ++c) out[c] = classes[c].decision_linear(x);
    return out;
}

int OvrSvm::predict(std::span<const double> x) const {
    const auto vals = decision_values(x);
    size_t best = 0;
    for (size_t c = 1; c < vals.size(); ++c) {
        if (vals[c] > vals[best]) best = c;
    }
    return int(best);
}

std::vector<double> OvrSvm::probabilities(std::span<const double> x) const {
    if (!has_platt()) throw MissingCalibration("probabilities: model has no Platt fit");
    std::vector<double> p(classes.size());
    double sum = 0.0;
    for (size_t c = 0; c < classes.size(); ++c) {
        const double f = classes[c].decision_linear(x);
        const double z = platt[c].a * f + platt[c].b;
        p[c] = z >= 0.0 ? std::exp(-z) / (1.0 + std::exp(-z)) : 1.0 / (1.0 + std::exp(z));
        sum += p[c];
    }
    for (double& v : p) v /= sum;
    return p;
}

OvrSvm fit_ovr(const EmbeddingSet& emb, std::span<const int> labels, const SvmConfig& cfg,
               int num_classes) {
    if (emb.size() != labels.size()) throw ShapeMismatch("fit_ovr: label count mismatch");
    int nc = num_classes;
    for (int lab : labels) nc = std::max(nc, lab + 1);
    int distinct = 0;
    {
        std::vector<bool> seen(size_t(nc), false);
        for (int lab : labels) {
            if (lab < 0) throw InvalidParam("fit_ovr: negative label");
            if (!seen[size_t(lab)]) {
                seen[size_t(lab)] = true;
                ++distinct;
            }
        }
    }
    if (distinct < 2) throw DegenerateLabels("fit_ovr: need at least two classes present");

    OvrSvm model;
    model.classes.resize(size_t(nc));
    model.platt.resize(size_t(nc));
    model.train_ids = IdSet(std::vector<int64_t>(emb.ids));

    parallel_for(size_t(nc), [&](size_t c) {
        std::vector<int8_t> y(emb.size());
        for (size_t i = 0; i < emb.size(); ++i) y[i] = labels[i] == int(c) ? 1 : -1;
        model.classes[c] = solve_dual(emb.values, y, emb.ids, cfg);
    });
    return model;
}

namespace {

// Sigmoid fit of Lin/Weng/Platt form on decision value + target pairs.
PlattParams fit_sigmoid(std::span<const double> f, std::span<const uint8_t> positive) {
    const size_t n = f.size();
    double prior1 = 0.0, prior0 = 0.0;
    for (uint8_t p : positive) (p ? prior1 : prior0) += 1.0;

    const double hi_target = (prior1 + 1.0) / (prior1 + 2.0);
    const double lo_target = 1.0 / (prior0 + 2.0);
    std::vector<double> t(n);
    for (size_t i = 0; i < n; ++i) t[i] = positive[i] ? hi_target : lo_target;

    double a = 0.0;
    double b = std::log((prior0 + 1.0) / (prior1 + 1.0));

    auto objective = [&](double aa, double bb) {
        double val = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const double z = f[i] * aa + bb;
            if (z >= 0.0) {
                val += t[i] * z + std::log1p(std::exp(-z));
            } else {
                val += (t[i] - 1.0) * z + std::log1p(std::exp(z));
            }
        }
        return val;
    };

    double fval = objective(a, b);
    const int max_newton = 100;
    const double sigma = 1e-12;
    int it = 0;
    for (; it < max_newton; ++it) {
        double h11 = sigma, h22 = sigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const double z = f[i] * a + b;
            double p, q;
            if (z >= 0.0) {
                const double e = std::exp(-z);
                p = e / (1.0 + e);
                q = 1.0 / (1.0 + e);
            } else {
                const double e = std::exp(z);
                p = 1.0 / (1.0 + e);
                q = e / (1.0 + e);
            }
            const double d2 = p * q;
            h11 += f[i] * f[i] * d2;
            h22 += d2;
            h21 += f[i] * d2;
            const double d1 = t[i] - p;
            g1 += f[i] * d1;
            g2 += d1;
        }
        if (std::abs(g1) < 1e-5 && std::abs(g2) < 1e-5) break;

        const double det = h11 * h22 - h21 * h21;
        const double da = -(h22 * g1 - h21 * g2) / det;
        const double db = -(-h21 * g1 + h11 * g2) / det;
        const double gd = g1 * da + g2 * db;

        double step = 1.0;
        bool accepted = false;
        while (step >= 1e-10) {
            const double na = a + step * da;
            const double nb = b + step * db;
            const double nf = objective(na, nb);
            if (nf < fval + 1e-4 * step * gd) {
                a = na;
                b = nb;
                fval = nf;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            throw NoConvergence("fit_platt: sigmoid line search failed");
        }
    }
    if (it >= max_newton) {
        throw NoConvergence("fit_platt: Newton iterations exhausted");
    }
    PlattParams out;
    out.a = a;
    out.b = b;
    out.fitted = true;
    return out;
}

}  // namespace

OvrSvm fit_platt(OvrSvm model, const EmbeddingSet& emb, std::span<const int> labels,
                 double holdout_fraction, uint64_t seed) {
    if (emb.size() != labels.size()) throw ShapeMismatch("fit_platt: label count mismatch");
    if (model.classes.empty()) throw InvalidParam("fit_platt: empty model");

    std::vector<size_t> calib(emb.size());
    for (size_t i = 0; i < calib.size(); ++i) calib[i] = i;
    if (holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        Rng rng(seed);
        rng.shuffle(calib);
        const size_t keep =
            std::max<size_t>(1, size_t(std::llround(holdout_fraction * double(emb.size()))));
        calib.resize(std::min(keep, calib.size()));
        std::sort(calib.begin(), calib.end());
    }

    const int nc = model.num_classes();
    std::vector<bool> seen(size_t(nc), false);
    for (size_t i : calib) {
        if (labels[i] >= 0 && labels[i] < nc) seen[size_t(labels[i])] = true;
    }
    for (int c = 0; c < nc; ++c) {
        if (!seen[size_t(c)]) {
            throw DegenerateLabels("fit_platt: class " + std::to_string(c) +
                                   " absent from calibration split");
        }
    }

    model.platt_holdout = holdout_fraction;
    model.platt_seed = seed;
    parallel_for(size_t(nc), [&](size_t c) {
        std::vector<double> f(calib.size());
        std::vector<uint8_t> pos(calib.size());
        for (size_t i = 0; i < calib.size(); ++i) {
            f[i] = model.classes[c].decision_linear(emb.values.row(calib[i]));
            pos[i] = labels[calib[i]] == int(c) ? 1 : 0;
        }
        model.platt[c] = fit_sigmoid(f, pos);
    });
    return model;
}

OvrSvm retrain_on(const OvrSvm& prev, const EmbeddingSet& emb_subset,
                  std::span<const int> labels_subset, const SvmConfig& cfg) {
    const IdSet subset_ids(std::vector<int64_t>(emb_subset.ids));
    if (!subset_ids.is_subset_of(prev.train_ids)) {
        throw UnknownId("retrain_on: subset contains ids outside the previous training set");
    }
    return fit_ovr(emb_subset, labels_subset, cfg, prev.num_classes());
}

std::vector<int> predict_all(const OvrSvm& model, const EmbeddingSet& emb) {
    std::vector<int> pred(emb.size());
    for (size_t i = 0; i < emb.size(); ++i) pred[i] = model.predict(emb.values.row(i));
    return pred;
}

double ovr_accuracy(const OvrSvm& model, const EmbeddingSet& emb, std::span<const int> labels) {
    if (emb.size() == 0) throw EmptyDataset("ovr_accuracy: empty embedding set");
    if (emb.size() != labels.size()) throw ShapeMismatch("ovr_accuracy: label count mismatch");
    const auto pred = predict_all(model, emb);
    size_t hits = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] == labels[i]) ++hits;
    }
    return double(hits) / double(pred.size());
}

}  // namespace maxrr
