#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "metatopic/estimator.hpp"
#include "metatopic/geometry.hpp"
#include "metatopic/hyper.hpp"
#include "metatopic/synthetic.hpp"

namespace metatopic {

struct IdOutOfRange : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class ModelKind { sdm, dm, sddm };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);

// Timestamped, group-labeled corpus on disk:
//   root/vocab.txt            one word per line
//   root/manifest.tsv         header "t\tgroup\tfile", rows sorted by (t, group)
//   root/t<index>/g<label>.uci
struct BatchEntry {
    int t = 0;
    std::string group;
    std::string file;  // relative to root
};

struct BatchStream {
    std::string root;
    std::vector<std::string> vocab;
    std::vector<BatchEntry> entries;

    std::vector<int> timesteps() const;
    std::vector<std::string> group_labels() const;  // sorted distinct labels
};

// Sparse bag-of-words reader: header D W NNZ (line breaks optional), then
// "docID wordID count" triples with 1-based ids.
std::pair<DocBatch, std::vector<std::string>> ingest_uci(const std::string& docword_path,
                                                         const std::string& vocab_path);
DocBatch read_uci_docs(const std::string& path, int vocab_size);
void write_uci(const std::string& path, const DocBatch& batch);

BatchStream open_stream(const std::string& root);
void save_stream(const std::string& root, const std::vector<std::string>& vocab,
                 const std::vector<std::tuple<int, std::string, DocBatch>>& batches);

struct RunConfig {
    ModelKind kind = ModelKind::sddm;
    ModelHyperparams hyper;
    EstimatorConfig estimator;
    std::uint64_t seed = 0;
    int threads = 1;
    int max_sweeps = 100;
    bool keep_history = false;
    std::string report_path;      // deterministic per-step CSV (counts only)
    std::string timing_path;      // wall-clock per step; never byte-compared
    std::string checkpoint_path;  // written after every step when set
    bool resume = false;
    std::string topics_out;  // final topics as simplex rows
    std::string thetas_out;  // final topic directions
    int stop_after_steps = 0;  // 0 = run to the end
};

struct RunResult {
    std::vector<SimplexPoint> topics;
    std::vector<UnitDirection> thetas;
    bool not_converged = false;
    int steps_completed = 0;
};

// Full loop per the streaming algorithms: per timestep update the reference
// point with that step's normalized documents, estimate topics per group
// (concurrently up to `threads`), embed about the current reference, and step
// the chosen model. dm pools each group's documents across timesteps and runs
// the sweep solver once.
RunResult run_model(const RunConfig& cfg, const BatchStream& stream);

// Fold-in perplexity: topics smoothed by eps and renormalized, per-document
// EM over mixture weights with the topics frozen, Dirichlet smoothing on the
// weights; exp(-sum log p(doc) / total tokens).
double eval_perplexity(const std::vector<SimplexPoint>& topics, const DocBatch& heldout,
                       int em_iters = 50, double weight_smoothing = 0.1,
                       double topic_smoothing = 1e-6);

// Hungarian match on cosine similarity; the fraction of truth directions
// whose match lies within 0.2 rad.
double eval_matching_accuracy(const std::vector<UnitDirection>& inferred,
                              const std::vector<UnitDirection>& truth_dirs);
double eval_matching_accuracy(const std::vector<UnitDirection>& inferred,
                              const GroundTruth& truth);

// topics/directions CSV helpers (17 significant digits, one row per topic)
void write_matrix_csv(const std::string& path, const std::vector<Vec>& rows);
std::vector<Vec> read_matrix_csv(const std::string& path);

std::vector<std::string> read_vocab(const std::string& path);

}  // namespace metatopic
