#include "metatopic/synthetic.hpp"

#include <algorithm>
#include <cmath>

namespace metatopic {

std::vector<int> GroundTruth::ever_active_atoms() const {
    std::vector<int> out;
    const auto mark = [&](std::size_t atom) {
        if (out.empty() || out.back() != static_cast<int>(atom)) out.push_back(static_cast<int>(atom));
    };
    for (std::size_t a = 0; a < trajectories.size(); ++a) {
        bool active = false;
        if (a < active_t.size())
            for (char b : active_t[a]) active |= (b != 0);
        if (a < active_j.size())
            for (char b : active_j[a]) active |= (b != 0);
        if (a < active_jt.size())
            for (const auto& row : active_jt[a])
                for (char b : row) active |= (b != 0);
        if (active) mark(a);
    }
    return out;
}

std::vector<UnitDirection> GroundTruth::reference_directions() const {
    std::vector<UnitDirection> out;
    for (int a : ever_active_atoms()) {
        const auto atom = static_cast<std::size_t>(a);
        int last_t = 0;
        if (atom < active_t.size()) {
            for (std::size_t t = 0; t < active_t[atom].size(); ++t)
                if (active_t[atom][t]) last_t = static_cast<int>(t) + 1;
        }
        if (atom < active_jt.size()) {
            for (const auto& row : active_jt[atom])
                for (std::size_t t = 0; t < row.size(); ++t)
                    if (row[t]) last_t = std::max(last_t, static_cast<int>(t) + 1);
        }
        const auto& traj = trajectories[atom];
        out.push_back(traj[std::min<std::size_t>(static_cast<std::size_t>(last_t), traj.size() - 1)]);
    }
    return out;
}

std::vector<double> sample_stick_weights(double gamma0, int truncation, Rng& rng) {
    std::vector<double> q(static_cast<std::size_t>(truncation));
    double prod = 1.0;
    for (auto& w : q) {
        prod *= rng.beta(gamma0, 1.0);
        w = prod;
    }
    return q;
}

namespace {

int effective_truncation(double gamma0, int requested) {
    return std::max({requested, 50, static_cast<int>(std::ceil(20.0 * gamma0))});
}

std::vector<std::vector<UnitDirection>> sample_trajectories(int atoms, int vocab_size, int horizon,
                                                            double tau0, Rng& rng) {
    std::vector<std::vector<UnitDirection>> out;
    out.reserve(static_cast<std::size_t>(atoms));
    for (int a = 0; a < atoms; ++a) {
        std::vector<UnitDirection> traj;
        traj.reserve(static_cast<std::size_t>(horizon) + 1);
        traj.push_back(uniform_direction(static_cast<std::size_t>(vocab_size), rng));
        for (int t = 1; t <= horizon; ++t)
            traj.push_back(vmf_sample(VmfParams{traj.back(), tau0}, rng));
        out.push_back(std::move(traj));
    }
    return out;
}

}  // namespace

GroundTruth sample_dynamic(const ModelHyperparams& hyper, int vocab_size, int horizon,
                           int truncation, Rng& rng) {
    GroundTruth gt;
    gt.hyper = hyper;
    gt.vocab_size = vocab_size;
    gt.horizon = horizon;
    gt.groups = 0;
    const int n = effective_truncation(hyper.gamma0, truncation);
    gt.weights = sample_stick_weights(hyper.gamma0, n, rng);
    // E[sum of sticks beyond the truncation | last weight] = q_n * gamma0
    gt.tail_mass = gt.weights.back() * hyper.gamma0;
    gt.trajectories = sample_trajectories(n, vocab_size, horizon, hyper.tau0, rng);

    gt.active_t.assign(static_cast<std::size_t>(n), std::vector<char>(static_cast<std::size_t>(horizon), 0));
    gt.obs_t.assign(static_cast<std::size_t>(horizon), {});
    for (int t = 1; t <= horizon; ++t) {
        for (int a = 0; a < n; ++a) {
            if (!rng.bernoulli(gt.weights[static_cast<std::size_t>(a)])) continue;
            gt.active_t[static_cast<std::size_t>(a)][static_cast<std::size_t>(t - 1)] = 1;
            const auto& theta = gt.trajectories[static_cast<std::size_t>(a)][static_cast<std::size_t>(t)];
            gt.obs_t[static_cast<std::size_t>(t - 1)].push_back(
                GroundTruthObservation{a, vmf_sample(VmfParams{theta, hyper.tau1}, rng)});
        }
    }
    return gt;
}

GroundTruth sample_grouped(const ModelHyperparams& hyper, int vocab_size, int groups, Rng& rng) {
    GroundTruth gt;
    gt.hyper = hyper;
    gt.vocab_size = vocab_size;
    gt.horizon = 0;
    gt.groups = groups;
    const int n = effective_truncation(hyper.gamma0, 0);
    gt.weights = sample_stick_weights(hyper.gamma0, n, rng);
    gt.tail_mass = gt.weights.back() * hyper.gamma0;
    gt.trajectories = sample_trajectories(n, vocab_size, 0, hyper.tau0, rng);

    gt.active_j.assign(static_cast<std::size_t>(n), std::vector<char>(static_cast<std::size_t>(groups), 0));
    gt.obs_j.assign(static_cast<std::size_t>(groups), {});
    for (int j = 0; j < groups; ++j) {
        for (int a = 0; a < n; ++a) {
            if (!rng.bernoulli(gt.weights[static_cast<std::size_t>(a)])) continue;
            gt.active_j[static_cast<std::size_t>(a)][static_cast<std::size_t>(j)] = 1;
            const auto& theta = gt.trajectories[static_cast<std::size_t>(a)][0];
            gt.obs_j[static_cast<std::size_t>(j)].push_back(
                GroundTruthObservation{a, vmf_sample(VmfParams{theta, hyper.tau1}, rng)});
        }
    }
    return gt;
}

GroundTruth sample_hierarchical(const ModelHyperparams& hyper, int vocab_size, int groups,
                                int horizon, Rng& rng) {
    GroundTruth gt;
    gt.hyper = hyper;
    gt.vocab_size = vocab_size;
    gt.horizon = horizon;
    gt.groups = groups;
    const int n = effective_truncation(hyper.gamma0, 0);
    gt.weights = sample_stick_weights(hyper.gamma0, n, rng);
    gt.tail_mass = gt.weights.back() * hyper.gamma0;
    gt.trajectories = sample_trajectories(n, vocab_size, horizon, hyper.tau0, rng);

    const double gamma_j = hyper.gamma0;  // per-group mass, shared default
    gt.group_weights.assign(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(groups), 0.0));
    for (int a = 0; a < n; ++a) {
        const double q = gt.weights[static_cast<std::size_t>(a)];
        for (int j = 0; j < groups; ++j)
            gt.group_weights[static_cast<std::size_t>(a)][static_cast<std::size_t>(j)] =
                rng.beta(gamma_j * q, gamma_j * (1.0 - q));
    }

    gt.active_jt.assign(static_cast<std::size_t>(n),
                        std::vector<std::vector<char>>(static_cast<std::size_t>(groups),
                                                       std::vector<char>(static_cast<std::size_t>(horizon), 0)));
    gt.obs_tj.assign(static_cast<std::size_t>(horizon),
                     std::vector<std::vector<GroundTruthObservation>>(static_cast<std::size_t>(groups)));
    for (int t = 1; t <= horizon; ++t) {
        for (int j = 0; j < groups; ++j) {
            for (int a = 0; a < n; ++a) {
                const double p = gt.group_weights[static_cast<std::size_t>(a)][static_cast<std::size_t>(j)];
                if (!rng.bernoulli(p)) continue;
                gt.active_jt[static_cast<std::size_t>(a)][static_cast<std::size_t>(j)][static_cast<std::size_t>(t - 1)] = 1;
                const auto& theta = gt.trajectories[static_cast<std::size_t>(a)][static_cast<std::size_t>(t)];
                gt.obs_tj[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(j)].push_back(
                    GroundTruthObservation{a, vmf_sample(VmfParams{theta, hyper.tau1}, rng)});
            }
        }
    }
    return gt;
}

DocBatch sample_documents(const std::vector<SimplexPoint>& topics, int n_docs, int doc_len,
                          double dirichlet_alpha, Rng& rng) {
    if (topics.empty()) throw std::invalid_argument("sample_documents needs at least one topic");
    const auto K = topics.size();
    const auto V = topics.front().dim();
    DocBatch batch;
    batch.vocab_size = static_cast<int>(V);
    batch.docs.reserve(static_cast<std::size_t>(n_docs));

    std::vector<double> weights(K);
    Vec mix(V), cdf(V);
    std::vector<int> counts(V);
    for (int d = 0; d < n_docs; ++d) {
        double wsum = 0.0;
        for (auto& w : weights) {
            w = rng.gamma(dirichlet_alpha);
            wsum += w;
        }
        std::fill(mix.begin(), mix.end(), 0.0);
        for (std::size_t k = 0; k < K; ++k) axpy(weights[k] / wsum, topics[k].coords(), mix);

        double acc = 0.0;
        for (std::size_t v = 0; v < V; ++v) {
            acc += mix[v];
            cdf[v] = acc;
        }
        std::fill(counts.begin(), counts.end(), 0);
        for (int w = 0; w < doc_len; ++w) {
            const double u = rng.uniform() * acc;
            const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
            counts[static_cast<std::size_t>(it - cdf.begin())] += 1;
        }
        std::vector<std::pair<int, int>> doc;
        for (std::size_t v = 0; v < V; ++v)
            if (counts[v] > 0) doc.emplace_back(static_cast<int>(v), counts[v]);
        batch.docs.push_back(std::move(doc));
    }
    return batch;
}

}  // namespace metatopic
