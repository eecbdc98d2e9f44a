#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "metatopic/geometry.hpp"

namespace metatopic {

struct TooFewDocs : std::runtime_error {
    TooFewDocs() : std::runtime_error("batch has fewer than two usable documents") {}
};
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ZeroRow : std::runtime_error {
    explicit ZeroRow(int row)
        : std::runtime_error("topic row " + std::to_string(row) + " sums to zero") {}
};

// Sparse bag-of-words batch: per document, (word id, count) pairs with ids
// ascending and counts positive.
struct DocBatch {
    std::vector<std::vector<std::pair<int, int>>> docs;
    int vocab_size = 0;
};

struct EstimatorConfig {
    int k_min = 2;
    int k_max = 30;  // additionally clamped to the number of documents
    double elbow_threshold = 0.05;
    int kmeans_iters = 50;
    int restarts = 2;
    int max_topics = 500;
    std::uint64_t seed = 0;
};

struct TopicEstimate {
    enum class Source { baseline, loaded };
    std::vector<SimplexPoint> topics;
    Source source = Source::baseline;
};

// Baseline static estimator standing in for any per-batch topic algorithm:
// normalize documents, embed them about the reference point, cluster the
// document directions with spherical k-means++ (K chosen by the largest
// relative dispersion drop above the elbow threshold), and map each cluster
// mean back to the simplex boundary.
TopicEstimate estimate_topics(const DocBatch& batch, const ReferencePoint& ref,
                              const EstimatorConfig& cfg);

// CSV loader for externally computed topics: one row per topic, vocab_size
// columns, rows L1-normalized.
TopicEstimate load_topics(const std::string& path, int vocab_size);

}  // namespace metatopic
