#pragma once

#include <vector>

#include "metatopic/estimator.hpp"
#include "metatopic/geometry.hpp"
#include "metatopic/hyper.hpp"
#include "metatopic/rng.hpp"

namespace metatopic {

struct GroundTruthObservation {
    int atom = 0;
    UnitDirection dir;
};

// Forward samples of the generative models; the variant populated depends on
// which sampler produced it (time-indexed, group-indexed, or both).
struct GroundTruth {
    ModelHyperparams hyper;
    int vocab_size = 0;
    int horizon = 0;  // T
    int groups = 0;   // J

    std::vector<double> weights;  // stick-breaking q_i, decreasing
    double tail_mass = 0.0;       // expected mass beyond the truncation

    // [atom][t] for t = 0..T; group-only truth stores a single entry per atom
    std::vector<std::vector<UnitDirection>> trajectories;

    std::vector<std::vector<char>> active_t;                // [atom][t-1]
    std::vector<std::vector<char>> active_j;                // [atom][j]
    std::vector<std::vector<std::vector<char>>> active_jt;  // [atom][j][t-1]
    std::vector<std::vector<double>> group_weights;         // [atom][j] p_ji

    std::vector<std::vector<GroundTruthObservation>> obs_t;                 // [t-1]
    std::vector<std::vector<GroundTruthObservation>> obs_j;                 // [j]
    std::vector<std::vector<std::vector<GroundTruthObservation>>> obs_tj;   // [t-1][j]

    // atoms observed at least once, ascending
    std::vector<int> ever_active_atoms() const;

    // per ever-active atom, the direction at its last active timestep (or the
    // static direction for group-only truth); the natural comparison target
    // for recovered topics
    std::vector<UnitDirection> reference_directions() const;
};

// q_i = prod_{k<=i} mu_k with mu_k ~ Beta(gamma0, 1)
std::vector<double> sample_stick_weights(double gamma0, int truncation, Rng& rng);

// Single polytope drifting over T steps; per-step Bernoulli(q_i) activity and
// one vMF(tau1) observation per active atom. The truncation is raised to
// max(requested, 50, ceil(20 * gamma0)).
GroundTruth sample_dynamic(const ModelHyperparams& hyper, int vocab_size, int horizon,
                           int truncation, Rng& rng);

// Static atoms shared across J groups via Bernoulli(q_i) selections.
GroundTruth sample_grouped(const ModelHyperparams& hyper, int vocab_size, int groups, Rng& rng);

// Hierarchical variant: group weights p_ji ~ Beta(gamma_j q_i, gamma_j (1-q_i))
// (moment-matched around q_i, generation only), then per-(j,t) activity over
// shared drifting trajectories. gamma_j defaults to gamma0 for every group.
GroundTruth sample_hierarchical(const ModelHyperparams& hyper, int vocab_size, int groups,
                                int horizon, Rng& rng);

// Admixture documents: per doc, Dirichlet(alpha) weights over the topics and
// doc_len multinomial words from the mixture.
DocBatch sample_documents(const std::vector<SimplexPoint>& topics, int n_docs, int doc_len,
                          double dirichlet_alpha, Rng& rng);

}  // namespace metatopic
