// metatopic: streaming inference of evolving topic polytopes.
//
// Subcommands: synth-gen, sdm-run, dm-run, sddm-run, eval-perplexity,
// match-accuracy, export-topics, top-words. Exit codes: 0 ok, 2 parse error,
// 3 not converged, 4 internal error.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <tuple>

#include "CLI11.hpp"
#include "json.hpp"
#include "metatopic/pipeline.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace metatopic;

namespace {

struct CommonRunFlags {
    std::string data;
    std::string out = "out";
    std::string report;
    std::string checkpoint;
    bool resume = false;
    std::uint64_t seed = 0;
    int threads = 1;
    int max_sweeps = 100;
    bool keep_history = false;
    int saturation = 250;
    int new_topic_cap = 1;
    int pop_cap = 10;
    int kmin = 2;
    int kmax = 30;
    double elbow = 0.05;
    int restarts = 2;
    int kmeans_iters = 50;
    int stop_after = 0;
};

void add_run_flags(CLI::App* cmd, CommonRunFlags& f, ModelHyperparams& hyper, bool with_tau0) {
    cmd->add_option("--data", f.data, "corpus root (vocab.txt + manifest.tsv)")->required();
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--report", f.report, "per-step report CSV (default <out>/report.csv)");
    cmd->add_option("--checkpoint", f.checkpoint, "checkpoint file, written after every step");
    cmd->add_flag("--resume", f.resume, "resume from --checkpoint");
    cmd->add_option("--seed", f.seed, "random seed");
    cmd->add_option("--threads", f.threads, "estimator worker threads");
    cmd->add_option("--max-sweeps", f.max_sweeps, "matching sweep cap per solve");
    cmd->add_option("--stop-after", f.stop_after, "stop after this many steps (0 = run to the end)");
    cmd->add_flag("--keep-history", f.keep_history, "retain per-step topic snapshots (sdm)");
    if (with_tau0) cmd->add_option("--tau0", hyper.tau0, "dynamics concentration");
    cmd->add_option("--tau1", hyper.tau1, "observation concentration");
    cmd->add_option("--gamma0", hyper.gamma0, "new-topic mass");
    cmd->add_option("--saturation", f.saturation, "topic count before new-topic rows truncate");
    cmd->add_option("--new-topic-cap", f.new_topic_cap, "new rows offered when saturated");
    cmd->add_option("--pop-cap", f.pop_cap, "popularity count truncation in the prior odds");
    cmd->add_option("--kmin", f.kmin, "estimator: smallest K");
    cmd->add_option("--kmax", f.kmax, "estimator: largest K");
    cmd->add_option("--elbow", f.elbow, "estimator: relative dispersion-drop threshold");
    cmd->add_option("--restarts", f.restarts, "estimator: k-means restarts");
    cmd->add_option("--kmeans-iters", f.kmeans_iters, "estimator: k-means iteration cap");
}

int do_run(ModelKind kind, const CommonRunFlags& f, ModelHyperparams hyper) {
    if (f.resume && f.checkpoint.empty()) throw ParseError("--resume needs --checkpoint");
    hyper.saturation = f.saturation > 0 ? std::optional<int>(f.saturation) : std::nullopt;
    hyper.new_topic_cap_c = f.new_topic_cap;
    hyper.popularity_cap = f.pop_cap > 0 ? std::optional<int>(f.pop_cap) : std::nullopt;

    fs::create_directories(f.out);
    RunConfig cfg;
    cfg.kind = kind;
    cfg.hyper = hyper;
    cfg.estimator.k_min = f.kmin;
    cfg.estimator.k_max = f.kmax;
    cfg.estimator.elbow_threshold = f.elbow;
    cfg.estimator.restarts = f.restarts;
    cfg.estimator.kmeans_iters = f.kmeans_iters;
    cfg.seed = f.seed;
    cfg.threads = f.threads;
    cfg.max_sweeps = f.max_sweeps;
    cfg.keep_history = f.keep_history;
    cfg.report_path = f.report.empty() ? (fs::path(f.out) / "report.csv").string() : f.report;
    cfg.timing_path = (fs::path(f.out) / "timings.csv").string();
    cfg.checkpoint_path = f.checkpoint;
    cfg.resume = f.resume;
    cfg.topics_out = (fs::path(f.out) / "topics.csv").string();
    cfg.thetas_out = (fs::path(f.out) / "thetas.csv").string();
    cfg.stop_after_steps = f.stop_after;

    const BatchStream stream = open_stream(f.data);
    const RunResult result = run_model(cfg, stream);
    std::cout << to_string(kind) << ": " << result.steps_completed << " step(s), "
              << result.topics.size() << " topic(s); outputs in " << f.out << "\n";
    if (result.not_converged) {
        std::cerr << "warning: a matching solve hit the sweep cap without reaching a fixed point\n";
        return 3;
    }
    return 0;
}

// simplex topics for the atoms active at (t, j), mapped about the uniform center
std::vector<SimplexPoint> active_topics(const GroundTruth& gt, int t, int j) {
    const std::size_t V = static_cast<std::size_t>(gt.vocab_size);
    const ReferencePoint center{Vec(V, 1.0 / static_cast<double>(V)), 1};
    std::vector<SimplexPoint> topics;
    for (std::size_t a = 0; a < gt.trajectories.size(); ++a) {
        bool on = false;
        if (!gt.active_jt.empty()) {
            on = gt.active_jt[a][static_cast<std::size_t>(j)][static_cast<std::size_t>(t - 1)];
        } else if (!gt.active_t.empty()) {
            on = gt.active_t[a][static_cast<std::size_t>(t - 1)];
        } else if (!gt.active_j.empty()) {
            on = gt.active_j[a][static_cast<std::size_t>(j)];
        }
        if (!on) continue;
        const auto& traj = gt.trajectories[a];
        const UnitDirection& dir = traj[std::min<std::size_t>(static_cast<std::size_t>(t), traj.size() - 1)];
        topics.push_back(inverse_embed(dir, center));
    }
    return topics;
}

int do_synth_gen(const std::string& model, int V, int T, int J, int truncation,
                 ModelHyperparams hyper, int docs_per_batch, int doc_len, double alpha,
                 std::uint64_t seed, const std::string& out) {
    Rng rng(seed);
    GroundTruth gt;
    if (model == "dynamic") {
        gt = sample_dynamic(hyper, V, T, truncation, rng);
    } else if (model == "grouped") {
        gt = sample_grouped(hyper, V, J, rng);
    } else if (model == "hierarchical") {
        gt = sample_hierarchical(hyper, V, J, T, rng);
    } else {
        throw std::invalid_argument("unknown model: " + model);
    }

    fs::create_directories(out);
    std::vector<std::string> vocab;
    for (int v = 0; v < V; ++v) vocab.push_back("word" + std::to_string(v));

    Rng doc_rng(mix_seed(seed, 0xd0c5ULL));
    std::vector<std::tuple<int, std::string, DocBatch>> batches;
    const int steps = (model == "grouped") ? 1 : T;
    const int groups = (model == "dynamic") ? 1 : J;
    for (int t = 1; t <= steps; ++t) {
        for (int j = 0; j < groups; ++j) {
            const std::vector<SimplexPoint> topics = active_topics(gt, t, j);
            if (topics.empty()) continue;
            batches.emplace_back(t, std::to_string(j),
                                 sample_documents(topics, docs_per_batch, doc_len, alpha, doc_rng));
        }
    }
    save_stream((fs::path(out) / "corpus").string(), vocab, batches);

    // truth: reference directions (one row per ever-active atom) + manifest
    const std::vector<UnitDirection> dirs = gt.reference_directions();
    std::vector<Vec> rows;
    for (const auto& d : dirs) rows.push_back(d.coords());
    write_matrix_csv((fs::path(out) / "truth_dirs.csv").string(), rows);

    json manifest;
    manifest["model"] = model;
    manifest["vocab_size"] = V;
    manifest["horizon"] = gt.horizon;
    manifest["groups"] = gt.groups;
    manifest["seed"] = seed;
    manifest["weights"] = gt.weights;
    manifest["tail_mass"] = gt.tail_mass;
    manifest["ever_active_atoms"] = gt.ever_active_atoms();
    manifest["hyper"] = {{"tau0", hyper.tau0}, {"tau1", hyper.tau1}, {"gamma0", hyper.gamma0}};
    std::ofstream mf(fs::path(out) / "truth.json");
    mf << manifest.dump(2) << "\n";

    std::cout << "synth-gen: " << batches.size() << " batch(es), " << dirs.size()
              << " active topic(s); corpus in " << (fs::path(out) / "corpus").string() << "\n";
    return 0;
}

int do_eval_perplexity(const std::string& topics_path, const std::string& heldout_path,
                       const std::string& vocab_path, int em_iters, double weight_smoothing) {
    const std::vector<std::string> vocab = read_vocab(vocab_path);
    const TopicEstimate topics = load_topics(topics_path, static_cast<int>(vocab.size()));
    const DocBatch heldout = read_uci_docs(heldout_path, static_cast<int>(vocab.size()));
    const double ppl = eval_perplexity(topics.topics, heldout, em_iters, weight_smoothing);
    std::printf("%.17g\n", ppl);
    return 0;
}

int do_match_accuracy(const std::string& inferred_path, const std::string& truth_path) {
    const auto to_dirs = [](const std::vector<Vec>& rows) {
        std::vector<UnitDirection> dirs;
        for (Vec row : rows) dirs.push_back(UnitDirection::normalized(std::move(row)));
        return dirs;
    };
    const std::vector<UnitDirection> inferred = to_dirs(read_matrix_csv(inferred_path));
    const std::vector<UnitDirection> truth = to_dirs(read_matrix_csv(truth_path));
    std::printf("%.17g\n", eval_matching_accuracy(inferred, truth));
    return 0;
}

std::vector<Vec> thetas_from_checkpoint(const std::string& path, ReferencePoint& ref) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open checkpoint: " + path);
    json ck;
    in >> ck;
    ref.mean = ck.at("ref").at("mean").get<Vec>();
    ref.doc_count = ck.at("ref").at("doc_count").get<std::uint64_t>();
    std::vector<Vec> thetas;
    const json& state = ck.at("state");
    if (state.contains("trajectories")) {
        for (const auto& traj : state.at("trajectories")) thetas.push_back(traj.at("theta").get<Vec>());
    } else {
        for (const auto& row : state.at("thetas")) thetas.push_back(row.get<Vec>());
    }
    return thetas;
}

int do_export_topics(const std::string& checkpoint, const std::string& out, bool spherical) {
    ReferencePoint ref;
    const std::vector<Vec> thetas = thetas_from_checkpoint(checkpoint, ref);
    if (spherical) {
        write_matrix_csv(out, thetas);
    } else {
        const ReferencePoint smoothed{interior_smooth(ref.mean).coords(), ref.doc_count};
        std::vector<Vec> rows;
        for (Vec th : thetas)
            rows.push_back(inverse_embed(UnitDirection::normalized(std::move(th)), smoothed).coords());
        write_matrix_csv(out, rows);
    }
    std::cout << "exported " << thetas.size() << " topic(s) to " << out << "\n";
    return 0;
}

int do_top_words(const std::string& topics_path, const std::string& checkpoint,
                 const std::string& vocab_path, int n) {
    const std::vector<std::string> vocab = read_vocab(vocab_path);
    std::vector<Vec> rows;
    if (!topics_path.empty()) {
        const TopicEstimate est = load_topics(topics_path, static_cast<int>(vocab.size()));
        for (const auto& t : est.topics) rows.push_back(t.coords());
    } else {
        ReferencePoint ref;
        const std::vector<Vec> thetas = thetas_from_checkpoint(checkpoint, ref);
        const ReferencePoint smoothed{interior_smooth(ref.mean).coords(), ref.doc_count};
        for (Vec th : thetas)
            rows.push_back(inverse_embed(UnitDirection::normalized(std::move(th)), smoothed).coords());
    }
    for (std::size_t t = 0; t < rows.size(); ++t) {
        std::vector<std::size_t> order(rows[t].size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::partial_sort(order.begin(), order.begin() + std::min<std::size_t>(n, order.size()),
                          order.end(),
                          [&](std::size_t a, std::size_t b) { return rows[t][a] > rows[t][b]; });
        std::cout << "topic " << t << ":";
        for (int i = 0; i < n && i < static_cast<int>(order.size()); ++i)
            std::cout << ' ' << vocab[order[static_cast<std::size_t>(i)]];
        std::cout << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"streaming topic-polytope matching"};
    app.require_subcommand(1);

    // run subcommands
    CommonRunFlags sdm_f, dm_f, sddm_f;
    ModelHyperparams sdm_h, dm_h, sddm_h;
    sdm_h.tau0 = 2.0; sdm_h.tau1 = 1.0; sdm_h.gamma0 = 1.0;
    dm_h.tau0 = 0.0; dm_h.tau1 = 2.0; dm_h.gamma0 = 1.0;
    sddm_h.tau0 = 4.0; sddm_h.tau1 = 2.0; sddm_h.gamma0 = 2.0;
    CLI::App* sdm_cmd = app.add_subcommand("sdm-run", "streaming dynamic matching over a corpus");
    CLI::App* dm_cmd = app.add_subcommand("dm-run", "static distributed matching across groups");
    CLI::App* sddm_cmd = app.add_subcommand("sddm-run", "streaming dynamic distributed matching");
    add_run_flags(sdm_cmd, sdm_f, sdm_h, true);
    add_run_flags(dm_cmd, dm_f, dm_h, false);
    add_run_flags(sddm_cmd, sddm_f, sddm_h, true);

    // synth-gen
    CLI::App* synth = app.add_subcommand("synth-gen", "sample a synthetic corpus plus ground truth");
    std::string synth_model = "hierarchical", synth_out = "synth";
    int synth_v = 100, synth_t = 5, synth_j = 3, synth_trunc = 50;
    int synth_docs = 200, synth_doclen = 100;
    double synth_alpha = 0.2;
    std::uint64_t synth_seed = 0;
    ModelHyperparams synth_h;
    synth_h.tau0 = 100.0;
    synth_h.tau1 = 200.0;
    synth_h.gamma0 = 1.0;
    synth->add_option("--model", synth_model, "dynamic | grouped | hierarchical");
    synth->add_option("--v", synth_v, "vocabulary size");
    synth->add_option("--t", synth_t, "timesteps");
    synth->add_option("--j", synth_j, "groups");
    synth->add_option("--truncation", synth_trunc, "stick-breaking truncation");
    synth->add_option("--tau0", synth_h.tau0, "trajectory concentration");
    synth->add_option("--tau1", synth_h.tau1, "observation concentration");
    synth->add_option("--gamma0", synth_h.gamma0, "Beta-process mass");
    synth->add_option("--docs", synth_docs, "documents per batch");
    synth->add_option("--doc-len", synth_doclen, "words per document");
    synth->add_option("--alpha", synth_alpha, "document mixture Dirichlet parameter");
    synth->add_option("--seed", synth_seed, "random seed");
    synth->add_option("--out", synth_out, "output directory");

    // eval-perplexity
    CLI::App* evalp = app.add_subcommand("eval-perplexity", "fold-in perplexity of topics on held-out docs");
    std::string evalp_topics, evalp_heldout, evalp_vocab;
    int evalp_iters = 50;
    double evalp_alpha = 0.1;
    evalp->add_option("--topics", evalp_topics, "topic CSV (one topic per row)")->required();
    evalp->add_option("--heldout", evalp_heldout, "held-out docs (uci format)")->required();
    evalp->add_option("--vocab", evalp_vocab, "vocabulary file")->required();
    evalp->add_option("--em-iters", evalp_iters, "fold-in EM iterations");
    evalp->add_option("--weight-smoothing", evalp_alpha, "Dirichlet smoothing on mixture weights");

    // match-accuracy
    CLI::App* match = app.add_subcommand("match-accuracy", "fraction of truth directions recovered");
    std::string match_inferred, match_truth;
    match->add_option("--inferred", match_inferred, "inferred direction CSV")->required();
    match->add_option("--truth", match_truth, "truth direction CSV")->required();

    // export-topics
    CLI::App* expt = app.add_subcommand("export-topics", "write topics from a checkpoint");
    std::string expt_ck, expt_out = "topics.csv";
    bool expt_spherical = false;
    expt->add_option("--checkpoint", expt_ck, "checkpoint file")->required();
    expt->add_option("--out", expt_out, "output CSV");
    expt->add_flag("--spherical", expt_spherical, "write raw directions instead of simplex topics");

    // top-words
    CLI::App* topw = app.add_subcommand("top-words", "print the heaviest words per topic");
    std::string topw_topics, topw_ck, topw_vocab;
    int topw_n = 10;
    topw->add_option("--topics", topw_topics, "topic CSV");
    topw->add_option("--checkpoint", topw_ck, "checkpoint file (used when --topics is absent)");
    topw->add_option("--vocab", topw_vocab, "vocabulary file")->required();
    topw->add_option("--n", topw_n, "words per topic");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (sdm_cmd->parsed()) return do_run(ModelKind::sdm, sdm_f, sdm_h);
        if (dm_cmd->parsed()) return do_run(ModelKind::dm, dm_f, dm_h);
        if (sddm_cmd->parsed()) return do_run(ModelKind::sddm, sddm_f, sddm_h);
        if (synth->parsed())
            return do_synth_gen(synth_model, synth_v, synth_t, synth_j, synth_trunc, synth_h,
                                synth_docs, synth_doclen, synth_alpha, synth_seed, synth_out);
        if (evalp->parsed())
            return do_eval_perplexity(evalp_topics, evalp_heldout, evalp_vocab, evalp_iters,
                                      evalp_alpha);
        if (match->parsed()) return do_match_accuracy(match_inferred, match_truth);
        if (expt->parsed()) return do_export_topics(expt_ck, expt_out, expt_spherical);
        if (topw->parsed()) {
            if (topw_topics.empty() && topw_ck.empty())
                throw ParseError("top-words needs --topics or --checkpoint");
            return do_top_words(topw_topics, topw_ck, topw_vocab, topw_n);
        }
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IdOutOfRange& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}

