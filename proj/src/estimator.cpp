#include "metatopic/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "metatopic/rng.hpp"

namespace metatopic {

namespace {

using SparseDoc = std::vector<std::pair<int, double>>;  // (word, weight), weights sum to 1

double sparse_dot(const SparseDoc& a, const SparseDoc& b) {
    double s = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i].first < b[j].first) ++i;
        else if (a[i].first > b[j].first) ++j;
        else s += a[i++].second * b[j++].second;
    }
    return s;
}

double sparse_dense_dot(const SparseDoc& a, const Vec& d) {
    double s = 0.0;
    for (const auto& [w, p] : a) s += p * d[static_cast<std::size_t>(w)];
    return s;
}

// Embedded document: direction (nd - C)/r handled implicitly through nd, the
// precomputed <nd, C>, and r = |nd - C|.
struct EmbeddedDoc {
    SparseDoc nd;
    double dot_c = 0.0;  // <nd, C>
    double r = 0.0;
};

struct Cluster {
    Vec mu;              // dense unit centroid (sum-zero)
    double dot_c = 0.0;  // <C, mu>, cached per update
};

double doc_centroid_cos(const EmbeddedDoc& d, const Cluster& c) {
    return (sparse_dense_dot(d.nd, c.mu) - c.dot_c) / d.r;
}

double doc_doc_cos(const EmbeddedDoc& a, const EmbeddedDoc& b, double c_sq) {
    return (sparse_dot(a.nd, b.nd) - a.dot_c - b.dot_c + c_sq) / (a.r * b.r);
}

struct KmeansRun {
    double dispersion = std::numeric_limits<double>::infinity();
    std::vector<Cluster> clusters;
    std::vector<int> assign;
};

KmeansRun run_kmeans(const std::vector<EmbeddedDoc>& docs, const Vec& C, double c_sq,
                     int K, const EstimatorConfig& cfg, Rng& rng) {
    const std::size_t n = docs.size();
    const std::size_t V = C.size();
    KmeansRun best;
    for (int rep = 0; rep < std::max(cfg.restarts, 1); ++rep) {
        // k-means++ seeding over document directions
        std::vector<std::size_t> seeds;
        seeds.push_back(rng.uniform_int(n));
        std::vector<double> d2(n);
        for (std::size_t d = 0; d < n; ++d)
            d2[d] = std::max(1.0 - doc_doc_cos(docs[d], docs[seeds[0]], c_sq), 0.0);
        while (seeds.size() < static_cast<std::size_t>(K)) {
            double total = 0.0;
            for (double x : d2) total += x;
            if (total <= 1e-15) break;  // all remaining directions coincide with a seed
            double target = rng.uniform() * total;
            std::size_t pick = n - 1;
            for (std::size_t d = 0; d < n; ++d) {
                target -= d2[d];
                if (target <= 0.0) { pick = d; break; }
            }
            seeds.push_back(pick);
            for (std::size_t d = 0; d < n; ++d)
                d2[d] = std::min(d2[d], std::max(1.0 - doc_doc_cos(docs[d], docs[pick], c_sq), 0.0));
        }

        std::vector<Cluster> clusters(seeds.size());
        for (std::size_t c = 0; c < seeds.size(); ++c) {
            const EmbeddedDoc& s = docs[seeds[c]];
            Vec mu(V, 0.0);
            for (const auto& [w, p] : s.nd) mu[static_cast<std::size_t>(w)] = p;
            axpy(-1.0, C, mu);
            scale_inplace(mu, 1.0 / s.r);
            clusters[c].mu = std::move(mu);
            clusters[c].dot_c = dot(C, clusters[c].mu);
        }

        std::vector<int> assign(n, -1);
        for (int iter = 0; iter < cfg.kmeans_iters; ++iter) {
            bool moved = false;
            for (std::size_t d = 0; d < n; ++d) {
                int arg = 0;
                double bestv = -std::numeric_limits<double>::infinity();
                for (std::size_t c = 0; c < clusters.size(); ++c) {
                    const double v = sparse_dense_dot(docs[d].nd, clusters[c].mu) - clusters[c].dot_c;
                    if (v > bestv) { bestv = v; arg = static_cast<int>(c); }
                }
                if (assign[d] != arg) { assign[d] = arg; moved = true; }
            }
            if (!moved) break;
            for (std::size_t c = 0; c < clusters.size(); ++c) {
                Vec acc(V, 0.0);
                double wsum = 0.0;
                bool nonempty = false;
                for (std::size_t d = 0; d < n; ++d) {
                    if (assign[d] != static_cast<int>(c)) continue;
                    nonempty = true;
                    const double inv_r = 1.0 / docs[d].r;
                    for (const auto& [w, p] : docs[d].nd) acc[static_cast<std::size_t>(w)] += p * inv_r;
                    wsum += inv_r;
                }
                if (!nonempty) continue;
                axpy(-wsum, C, acc);
                const double nrm = norm2(acc);
                if (nrm < kDegenerateTol) continue;
                scale_inplace(acc, 1.0 / nrm);
                clusters[c].mu = std::move(acc);
                clusters[c].dot_c = dot(C, clusters[c].mu);
            }
        }

        double W = 0.0;
        for (std::size_t d = 0; d < n; ++d)
            W += 1.0 - doc_centroid_cos(docs[d], clusters[static_cast<std::size_t>(assign[d])]);
        if (W < best.dispersion) {
            best.dispersion = W;
            best.clusters = clusters;
            best.assign = assign;
        }
    }
    return best;
}

}  // namespace

TopicEstimate estimate_topics(const DocBatch& batch, const ReferencePoint& ref,
                              const EstimatorConfig& cfg) {
    if (batch.docs.size() < 2) throw TooFewDocs();
    const auto V = static_cast<std::size_t>(batch.vocab_size);

    std::vector<SparseDoc> normalized;
    normalized.reserve(batch.docs.size());
    for (const auto& doc : batch.docs) {
        double total = 0.0;
        for (const auto& [w, c] : doc) total += c;
        SparseDoc nd;
        nd.reserve(doc.size());
        for (const auto& [w, c] : doc) nd.emplace_back(w, c / total);
        normalized.push_back(std::move(nd));
    }

    // reference: the caller's running mean, or this batch's own mean when the
    // reference has absorbed nothing yet
    Vec C;
    if (ref.doc_count > 0) {
        if (ref.mean.size() != V)
            throw std::invalid_argument("reference point dimension does not match the vocabulary");
        C = ref.mean;
    } else {
        C.assign(V, 0.0);
        for (const auto& nd : normalized)
            for (const auto& [w, p] : nd) C[static_cast<std::size_t>(w)] += p;
        scale_inplace(C, 1.0 / static_cast<double>(normalized.size()));
    }
    const double c_sq = dot(C, C);

    std::vector<EmbeddedDoc> docs;
    docs.reserve(normalized.size());
    for (auto& nd : normalized) {
        EmbeddedDoc d;
        d.dot_c = sparse_dense_dot(nd, C);
        double q = 0.0;
        for (const auto& [w, p] : nd) q += p * p;
        double r_sq = q - 2.0 * d.dot_c + c_sq;
        if (r_sq < 1e-12) {
            // the cancelling identity bottoms out near machine noise; settle
            // near-degenerate documents with an explicit difference
            Vec diff = C;
            scale_inplace(diff, -1.0);
            for (const auto& [w, p] : nd) diff[static_cast<std::size_t>(w)] += p;
            r_sq = dot(diff, diff);
            if (r_sq < 1e-24) continue;  // document coincides with the reference point
        }
        d.r = std::sqrt(r_sq);
        d.nd = std::move(nd);
        docs.push_back(std::move(d));
    }
    if (docs.size() < 2) throw TooFewDocs();

    // dispersion for K=1 about the pooled mean direction; an exactly
    // cancelling resultant means maximal spread, not a degenerate batch
    double w1;
    {
        Vec acc(V, 0.0);
        double wsum = 0.0;
        for (const auto& d : docs) {
            const double inv_r = 1.0 / d.r;
            for (const auto& [w, p] : d.nd) acc[static_cast<std::size_t>(w)] += p * inv_r;
            wsum += inv_r;
        }
        axpy(-wsum, C, acc);
        const double nrm = norm2(acc);
        if (nrm < kDegenerateTol) {
            w1 = 2.0 * static_cast<double>(docs.size());
        } else {
            scale_inplace(acc, 1.0 / nrm);
            Cluster c0{std::move(acc), 0.0};
            c0.dot_c = dot(C, c0.mu);
            w1 = 0.0;
            for (const auto& d : docs) w1 += 1.0 - doc_centroid_cos(d, c0);
            if (w1 <= 1e-12) throw TooFewDocs();  // all directions identical
        }
    }

    const int k_hi = std::min({cfg.k_max, static_cast<int>(docs.size()), cfg.max_topics});
    const int k_lo = std::min(cfg.k_min, k_hi);

    Rng rng(cfg.seed);
    std::vector<double> W(static_cast<std::size_t>(k_hi) + 1, 0.0);
    W[1] = w1;
    std::vector<KmeansRun> runs(static_cast<std::size_t>(k_hi) + 1);
    for (int K = 2; K <= k_hi; ++K) {
        runs[static_cast<std::size_t>(K)] = run_kmeans(docs, C, c_sq, K, cfg, rng);
        W[static_cast<std::size_t>(K)] = runs[static_cast<std::size_t>(K)].dispersion;
    }

    // pick K with the single largest relative dispersion drop above the
    // threshold; fall back to k_min when no drop qualifies
    int k_star = k_lo;
    double best_drop = cfg.elbow_threshold;
    for (int K = std::max(k_lo, 2); K <= k_hi; ++K) {
        const double prev = W[static_cast<std::size_t>(K - 1)];
        if (prev <= 1e-15) break;
        const double drop = (prev - W[static_cast<std::size_t>(K)]) / prev;
        if (drop > best_drop) {
            best_drop = drop;
            k_star = K;
        }
    }

    TopicEstimate out;
    out.source = TopicEstimate::Source::baseline;
    const ReferencePoint smoothed{interior_smooth(C).coords(), ref.doc_count};
    if (k_star < 2) {
        // degenerate tiny batch: a single pooled topic
        Vec acc(V, 0.0);
        double wsum = 0.0;
        for (const auto& d : docs) {
            const double inv_r = 1.0 / d.r;
            for (const auto& [w, p] : d.nd) acc[static_cast<std::size_t>(w)] += p * inv_r;
            wsum += inv_r;
        }
        axpy(-wsum, C, acc);
        out.topics.push_back(inverse_embed(UnitDirection::normalized(std::move(acc)), smoothed));
        return out;
    }
    const KmeansRun& chosen = runs[static_cast<std::size_t>(k_star)];
    std::vector<char> used(chosen.clusters.size(), 0);
    for (int a : chosen.assign) used[static_cast<std::size_t>(a)] = 1;
    for (std::size_t c = 0; c < chosen.clusters.size(); ++c) {
        if (!used[c]) continue;  // empty cluster
        out.topics.push_back(
            inverse_embed(UnitDirection::normalized(chosen.clusters[c].mu), smoothed));
    }
    return out;
}

TopicEstimate load_topics(const std::string& path, int vocab_size) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open topic file: " + path);
    TopicEstimate out;
    out.source = TopicEstimate::Source::loaded;
    std::string line;
    int row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        Vec coords;
        coords.reserve(static_cast<std::size_t>(vocab_size));
        std::size_t pos = 0;
        int col = 0;
        while (pos <= line.size()) {
            const std::size_t comma = line.find(',', pos);
            const std::string field =
                line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
            ++col;
            try {
                std::size_t consumed = 0;
                const double v = std::stod(field, &consumed);
                while (consumed < field.size() && std::isspace(static_cast<unsigned char>(field[consumed])))
                    ++consumed;
                if (consumed != field.size()) throw std::invalid_argument("trailing characters");
                if (v < 0.0) throw std::invalid_argument("negative");
                coords.push_back(v);
            } catch (const std::exception&) {
                throw ParseError("topic file row " + std::to_string(row) + " column " +
                                 std::to_string(col) + ": not a nonnegative real");
            }
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        if (coords.size() != static_cast<std::size_t>(vocab_size))
            throw ParseError("topic file row " + std::to_string(row) + ": expected " +
                             std::to_string(vocab_size) + " columns, got " +
                             std::to_string(coords.size()));
        const double total = coord_sum(coords);
        if (total <= 0.0) throw ZeroRow(row);
        scale_inplace(coords, 1.0 / total);
        out.topics.push_back(SimplexPoint::unchecked(std::move(coords)));
    }
    if (out.topics.empty()) throw ParseError("topic file has no rows: " + path);
    return out;
}

}  // namespace metatopic
