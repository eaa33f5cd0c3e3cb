#include "maxrr/ranking.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "maxrr/error.hpp"
#include "maxrr/parallel.hpp"

namespace maxrr {

int CoreRanking::freq_of(int64_t id) const {
    auto it = std::lower_bound(corpus_ids.begin(), corpus_ids.end(), id);
    if (it == corpus_ids.end() || *it != id) {
        throw UnknownId("ranking: id " + std::to_string(id) + " not in corpus");
    }
    return freq[size_t(it - corpus_ids.begin())];
}

CoreRanking build_ranking(const LabeledDataset& ds, const RankingConfig& cfg, int runs,
                          uint64_t base_seed) {
    if (runs < 1) throw InvalidParam("build_ranking: runs must be >= 1");
    if (ds.size() == 0) throw EmptyDataset("build_ranking: empty corpus");

    CoreRanking cr;
    cr.corpus_ids = ds.ids;
    cr.freq.assign(ds.size(), 0);
    cr.runs = runs;
    cr.base_seed = base_seed;
    for (int r = 0; r < runs; ++r) cr.run_seeds.push_back(base_seed + uint64_t(r));

    std::vector<IdSet> supports(static_cast<size_t>(runs));
    parallel_for(size_t(runs), [&](size_t r) {
        const uint64_t seed = base_seed + r;
        try {
            FeatureExtractor fe = train_fe(init_fe(cfg.arch, seed), ds, cfg.hyper, seed);
            const EmbeddingSet emb = embed(fe, ds);
            const OvrSvm svm = fit_ovr(emb, ds.labels, cfg.svm);
            supports[r] = svm.support_union();
        } catch (const Error& e) {
            throw Error("ranking run " + std::to_string(r) + ": " + e.what());
        }
    });

    // Deterministic reduction: integer sums are order independent.
    for (const IdSet& s : supports) {
        for (int64_t id : s.ids) {
            auto it = std::lower_bound(cr.corpus_ids.begin(), cr.corpus_ids.end(), id);
            cr.freq[size_t(it - cr.corpus_ids.begin())] += 1;
        }
    }
    return cr;
}

IdSet top_k(const CoreRanking& cr, size_t k) {
    if (k > cr.size()) {
        throw KOutOfRange("top_k: k = " + std::to_string(k) + " exceeds corpus size " +
                          std::to_string(cr.size()));
    }
    std::vector<size_t> order(cr.size());
    std::iota(order.begin(), order.end(), size_t(0));
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (cr.freq[a] != cr.freq[b]) return cr.freq[a] > cr.freq[b];
        return cr.corpus_ids[a] < cr.corpus_ids[b];
    });
    std::vector<int64_t> ids(k);
    for (size_t i = 0; i < k; ++i) ids[i] = cr.corpus_ids[order[i]];
    return IdSet(std::move(ids));
}

IdSet non_top_k(const CoreRanking& cr, size_t k) {
    IdSet corpus;
    corpus.ids = cr.corpus_ids;
    return corpus.set_difference(top_k(cr, k));
}

std::vector<std::pair<int, size_t>> frequency_histogram(const CoreRanking& cr) {
    std::vector<std::pair<int, size_t>> hist;
    hist.reserve(size_t(cr.runs) + 1);
    for (int f = 0; f <= cr.runs; ++f) hist.emplace_back(f, 0);
    for (int f : cr.freq) hist[size_t(f)].second += 1;
    return hist;
}

IdSet resolve_forget(const ForgetSpec& spec, const CoreRanking& cr) {
    IdSet out;
    for (const ForgetDirective& d : spec.directives) {
        switch (d.kind) {
            case ForgetDirective::Kind::Id: {
                if (!std::binary_search(cr.corpus_ids.begin(), cr.corpus_ids.end(), d.id)) {
                    throw UnknownId("forget spec: id " + std::to_string(d.id) +
                                    " not in corpus");
                }
                out = out.set_union(IdSet({d.id}));
                break;
            }
            case ForgetDirective::Kind::TopK:
                out = out.set_union(top_k(cr, d.k));
                break;
            case ForgetDirective::Kind::NonTopK:
                out = out.set_union(non_top_k(cr, d.k));
                break;
            case ForgetDirective::Kind::Random: {
                IdSet pool;
                switch (d.pool) {
                    case ForgetDirective::Pool::All:
                        pool.ids = cr.corpus_ids;
                        break;
                    case ForgetDirective::Pool::TopK:
                        pool = top_k(cr, d.k);
                        break;
                    case ForgetDirective::Pool::NonTopK:
                        pool = non_top_k(cr, d.k);
                        break;
                }
                out = out.set_union(sample_ids(pool, d.n, d.seed));
                break;
            }
        }
    }
    return out;
}

std::string ranking_to_csv(const CoreRanking& cr) {
    std::ostringstream out;
    out << "# runs=" << cr.runs << " base_seed=" << cr.base_seed << "\n";
    out << "id,freq\n";
    for (size_t i = 0; i < cr.size(); ++i) {
        out << cr.corpus_ids[i] << "," << cr.freq[i] << "\n";
    }
    return out.str();
}

CoreRanking ranking_from_csv(const std::string& text) {
    CoreRanking cr;
    std::istringstream in(text);
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty() || line == "id,freq") continue;
        if (line[0] == '#') {
            int runs = 0;
            unsigned long long base = 0;
            if (std::sscanf(line.c_str(), "# runs=%d base_seed=%llu", &runs, &base) == 2) {
                cr.runs = runs;
                cr.base_seed = base;
                header_seen = true;
            }
            continue;
        }
        int64_t id = 0;
        int f = 0;
        if (std::sscanf(line.c_str(), "%" SCNd64 ",%d", &id, &f) != 2) {
            throw InvalidParam("ranking csv: bad line '" + line + "'");
        }
        cr.corpus_ids.push_back(id);
        cr.freq.push_back(f);
    }
    if (!header_seen) throw InvalidParam("ranking csv: missing '# runs=...' header");
    for (size_t i = 1; i < cr.corpus_ids.size(); ++i) {
        if (cr.corpus_ids[i] <= cr.corpus_ids[i - 1]) {
            throw InvalidParam("ranking csv: ids not ascending");
        }
    }
    for (int f : cr.freq) {
        if (f < 0 || f > cr.runs) throw InvalidParam("ranking csv: frequency out of range");
    }
    for (int r = 0; r < cr.runs; ++r) cr.run_seeds.push_back(cr.base_seed + uint64_t(r));
    return cr;
}

std::string histogram_to_csv(const CoreRanking& cr) {
    std::ostringstream out;
    out << "freq,count\n";
    for (const auto& [f, count] : frequency_histogram(cr)) {
        out << f << "," << count << "\n";
    }
    return out.str();
}

}  // namespace maxrr
