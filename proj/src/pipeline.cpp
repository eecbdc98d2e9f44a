#include "metatopic/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "json.hpp"
#include "metatopic/assignment.hpp"
#include "metatopic/dm.hpp"
#include "metatopic/rng.hpp"
#include "metatopic/sdm.hpp"
#include "metatopic/sddm.hpp"

namespace metatopic {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::sdm: return "sdm";
        case ModelKind::dm: return "dm";
        case ModelKind::sddm: return "sddm";
    }
    return "?";
}

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "sdm") return ModelKind::sdm;
    if (s == "dm") return ModelKind::dm;
    if (s == "sddm") return ModelKind::sddm;
    throw std::invalid_argument("unknown model kind: " + s);
}

std::vector<int> BatchStream::timesteps() const {
    std::set<int> ts;
    for (const auto& e : entries) ts.insert(e.t);
    return {ts.begin(), ts.end()};
}

std::vector<std::string> BatchStream::group_labels() const {
    std::set<std::string> labels;
    for (const auto& e : entries) labels.insert(e.group);
    return {labels.begin(), labels.end()};
}

// ---------------------------------------------------------------------------
// corpus I/O

namespace {

struct Token {
    std::string text;
    int line = 0;
};

std::vector<Token> tokenize_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open file: " + path);
    std::vector<Token> tokens;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string tok;
        while (ls >> tok) tokens.push_back(Token{tok, lineno});
    }
    return tokens;
}

long parse_int_token(const Token& tok, const char* what) {
    try {
        std::size_t consumed = 0;
        const long v = std::stol(tok.text, &consumed);
        if (consumed != tok.text.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ParseError("line " + std::to_string(tok.line) + ": expected " + std::string(what));
    }
}

}  // namespace

DocBatch read_uci_docs(const std::string& path, int vocab_size) {
    const std::vector<Token> tokens = tokenize_file(path);
    if (tokens.size() < 3) throw ParseError(path + ": missing D W NNZ header");
    const long D = parse_int_token(tokens[0], "document count");
    const long W = parse_int_token(tokens[1], "vocabulary size");
    const long NNZ = parse_int_token(tokens[2], "entry count");
    if (D < 0 || W <= 0 || NNZ < 0) throw ParseError(path + ": malformed header");
    if (vocab_size > 0 && W != vocab_size)
        throw ParseError(path + ": header W=" + std::to_string(W) + " does not match vocabulary size " +
                         std::to_string(vocab_size));
    if (static_cast<long>(tokens.size()) != 3 + 3 * NNZ)
        throw ParseError(path + ": body has " + std::to_string((tokens.size() - 3) / 3) +
                         " entries, header says " + std::to_string(NNZ));

    std::vector<std::vector<std::pair<int, int>>> docs(static_cast<std::size_t>(D));
    for (long e = 0; e < NNZ; ++e) {
        const Token& td = tokens[static_cast<std::size_t>(3 + 3 * e)];
        const long doc = parse_int_token(td, "document id");
        const long word = parse_int_token(tokens[static_cast<std::size_t>(4 + 3 * e)], "word id");
        const long count = parse_int_token(tokens[static_cast<std::size_t>(5 + 3 * e)], "count");
        if (doc < 1 || doc > D)
            throw IdOutOfRange("line " + std::to_string(td.line) + ": document id " + std::to_string(doc) +
                               " outside 1.." + std::to_string(D));
        if (word < 1 || word > W)
            throw IdOutOfRange("line " + std::to_string(td.line) + ": word id " + std::to_string(word) +
                               " outside 1.." + std::to_string(W));
        if (count < 1) throw ParseError("line " + std::to_string(td.line) + ": count must be positive");
        docs[static_cast<std::size_t>(doc - 1)].emplace_back(static_cast<int>(word - 1),
                                                             static_cast<int>(count));
    }

    DocBatch batch;
    batch.vocab_size = static_cast<int>(W);
    for (auto& doc : docs) {
        if (doc.empty()) continue;  // ids with no entries are dropped
        std::sort(doc.begin(), doc.end());
        // merge duplicate (doc, word) entries
        std::vector<std::pair<int, int>> merged;
        for (const auto& [w, c] : doc) {
            if (!merged.empty() && merged.back().first == w) merged.back().second += c;
            else merged.emplace_back(w, c);
        }
        batch.docs.push_back(std::move(merged));
    }
    return batch;
}

std::vector<std::string> read_vocab(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open vocabulary: " + path);
    std::vector<std::string> vocab;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) vocab.push_back(line);
    }
    if (vocab.empty()) throw ParseError("vocabulary is empty: " + path);
    return vocab;
}

std::pair<DocBatch, std::vector<std::string>> ingest_uci(const std::string& docword_path,
                                                         const std::string& vocab_path) {
    std::vector<std::string> vocab = read_vocab(vocab_path);
    DocBatch batch = read_uci_docs(docword_path, static_cast<int>(vocab.size()));
    return {std::move(batch), std::move(vocab)};
}

void write_uci(const std::string& path, const DocBatch& batch) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    std::size_t nnz = 0;
    for (const auto& d : batch.docs) nnz += d.size();
    out << batch.docs.size() << '\n' << batch.vocab_size << '\n' << nnz << '\n';
    for (std::size_t d = 0; d < batch.docs.size(); ++d)
        for (const auto& [w, c] : batch.docs[d]) out << (d + 1) << ' ' << (w + 1) << ' ' << c << '\n';
}

BatchStream open_stream(const std::string& root) {
    BatchStream stream;
    stream.root = root;
    stream.vocab = read_vocab((fs::path(root) / "vocab.txt").string());

    const std::string manifest = (fs::path(root) / "manifest.tsv").string();
    std::ifstream in(manifest);
    if (!in) throw ParseError("cannot open manifest: " + manifest);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (lineno == 1 && line.rfind("t\t", 0) == 0) continue;  // header
        std::istringstream ls(line);
        BatchEntry e;
        std::string t_field;
        if (!std::getline(ls, t_field, '\t') || !std::getline(ls, e.group, '\t') ||
            !std::getline(ls, e.file, '\t'))
            throw ParseError("manifest line " + std::to_string(lineno) + ": expected t<TAB>group<TAB>file");
        try {
            e.t = std::stoi(t_field);
        } catch (const std::exception&) {
            throw ParseError("manifest line " + std::to_string(lineno) + ": bad timestep");
        }
        stream.entries.push_back(std::move(e));
    }
    std::sort(stream.entries.begin(), stream.entries.end(), [](const BatchEntry& a, const BatchEntry& b) {
        return std::tie(a.t, a.group) < std::tie(b.t, b.group);
    });
    return stream;
}

void save_stream(const std::string& root, const std::vector<std::string>& vocab,
                 const std::vector<std::tuple<int, std::string, DocBatch>>& batches) {
    fs::create_directories(root);
    {
        std::ofstream out(fs::path(root) / "vocab.txt");
        for (const auto& w : vocab) out << w << '\n';
    }
    std::vector<std::tuple<int, std::string, std::string>> rows;
    for (const auto& [t, group, batch] : batches) {
        const std::string dir = "t" + std::to_string(t);
        fs::create_directories(fs::path(root) / dir);
        const std::string rel = dir + "/g" + group + ".uci";
        write_uci((fs::path(root) / rel).string(), batch);
        rows.emplace_back(t, group, rel);
    }
    std::sort(rows.begin(), rows.end());
    std::ofstream out(fs::path(root) / "manifest.tsv");
    out << "t\tgroup\tfile\n";
    for (const auto& [t, group, rel] : rows) out << t << '\t' << group << '\t' << rel << '\n';
}

// ---------------------------------------------------------------------------
// CSV helpers

void write_matrix_csv(const std::string& path, const std::vector<Vec>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    char buf[64];
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.17g", row[i]);
            if (i) out << ',';
            out << buf;
        }
        out << '\n';
    }
}

std::vector<Vec> read_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open csv: " + path);
    std::vector<Vec> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        Vec row;
        std::size_t pos = 0;
        while (pos <= line.size()) {
            const std::size_t comma = line.find(',', pos);
            const std::string field =
                line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
            try {
                std::size_t consumed = 0;
                row.push_back(std::stod(field, &consumed));
            } catch (const std::exception&) {
                throw ParseError("csv line " + std::to_string(lineno) + ": bad number '" + field + "'");
            }
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// threading

namespace {

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    const int workers = std::max(1, std::min(threads, static_cast<int>(n)));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr err;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mutex);
                    if (!err) err = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

// ---------------------------------------------------------------------------
// checkpointing

json hyper_to_json(const ModelHyperparams& h) {
    json out{{"tau0", h.tau0},   {"tau1", h.tau1},
             {"gamma0", h.gamma0}, {"new_topic_cap_c", h.new_topic_cap_c}};
    out["saturation"] = h.saturation ? json(*h.saturation) : json(nullptr);
    out["popularity_cap"] = h.popularity_cap ? json(*h.popularity_cap) : json(nullptr);
    return out;
}

ModelHyperparams hyper_from_json(const json& j) {
    ModelHyperparams h;
    h.tau0 = j.at("tau0").get<double>();
    h.tau1 = j.at("tau1").get<double>();
    h.gamma0 = j.at("gamma0").get<double>();
    h.new_topic_cap_c = j.at("new_topic_cap_c").get<int>();
    h.saturation = j.at("saturation").is_null() ? std::nullopt : std::optional<int>(j.at("saturation").get<int>());
    h.popularity_cap =
        j.at("popularity_cap").is_null() ? std::nullopt : std::optional<int>(j.at("popularity_cap").get<int>());
    return h;
}

json directions_to_json(const std::vector<UnitDirection>& dirs) {
    json arr = json::array();
    for (const auto& d : dirs) arr.push_back(d.coords());
    return arr;
}

std::vector<UnitDirection> directions_from_json(const json& arr) {
    std::vector<UnitDirection> out;
    for (const auto& row : arr) out.push_back(UnitDirection::unchecked(row.get<Vec>()));
    return out;
}

void atomic_write(const std::string& path, const std::string& payload) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out << payload;
    }
    fs::rename(tmp, path);
}

struct StreamingCheckpoint {
    int steps_completed = 0;
    ReferencePoint ref;
    std::string rng_state;
    json model;
};

void save_streaming_checkpoint(const RunConfig& cfg, int steps_completed, const ReferencePoint& ref,
                               const Rng& rng, json model_state) {
    json out;
    out["kind"] = to_string(cfg.kind);
    out["seed"] = cfg.seed;
    out["steps_completed"] = steps_completed;
    out["hyper"] = hyper_to_json(cfg.hyper);
    out["ref"] = json{{"mean", ref.mean}, {"doc_count", ref.doc_count}};
    out["rng"] = rng.serialize();
    out["state"] = std::move(model_state);
    atomic_write(cfg.checkpoint_path, out.dump());
}

StreamingCheckpoint load_checkpoint(const RunConfig& cfg) {
    std::ifstream in(cfg.checkpoint_path);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + cfg.checkpoint_path);
    json j;
    in >> j;
    if (j.at("kind").get<std::string>() != to_string(cfg.kind))
        throw std::runtime_error("checkpoint model kind mismatch");
    StreamingCheckpoint ck;
    ck.steps_completed = j.at("steps_completed").get<int>();
    ck.ref.mean = j.at("ref").at("mean").get<Vec>();
    ck.ref.doc_count = j.at("ref").at("doc_count").get<std::uint64_t>();
    ck.rng_state = j.at("rng").get<std::string>();
    ck.model = j.at("state");
    return ck;
}

// ---------------------------------------------------------------------------
// shared run plumbing

using SparseDocs = std::vector<std::vector<std::pair<int, double>>>;

SparseDocs normalize_docs(const DocBatch& batch) {
    SparseDocs out;
    out.reserve(batch.docs.size());
    for (const auto& doc : batch.docs) {
        double total = 0.0;
        for (const auto& [w, c] : doc) total += c;
        std::vector<std::pair<int, double>> nd;
        nd.reserve(doc.size());
        for (const auto& [w, c] : doc) nd.emplace_back(w, c / total);
        out.push_back(std::move(nd));
    }
    return out;
}

std::vector<UnitDirection> embed_topics(const TopicEstimate& est, const ReferencePoint& ref) {
    std::vector<UnitDirection> dirs;
    dirs.reserve(est.topics.size());
    for (const auto& topic : est.topics) dirs.push_back(embed(topic, ref));
    return dirs;
}

std::vector<SimplexPoint> topics_from_thetas(const std::vector<UnitDirection>& thetas,
                                             const ReferencePoint& ref) {
    const ReferencePoint smoothed{interior_smooth(ref.mean).coords(), ref.doc_count};
    std::vector<SimplexPoint> out;
    out.reserve(thetas.size());
    for (const auto& th : thetas) out.push_back(inverse_embed(th, smoothed));
    return out;
}

void write_outputs(const RunConfig& cfg, RunResult& result, const ReferencePoint& ref,
                   const std::vector<UnitDirection>& thetas) {
    result.thetas = thetas;
    result.topics = topics_from_thetas(thetas, ref);
    if (!cfg.topics_out.empty()) {
        std::vector<Vec> rows;
        for (const auto& t : result.topics) rows.push_back(t.coords());
        write_matrix_csv(cfg.topics_out, rows);
    }
    if (!cfg.thetas_out.empty()) {
        std::vector<Vec> rows;
        for (const auto& t : thetas) rows.push_back(t.coords());
        write_matrix_csv(cfg.thetas_out, rows);
    }
}

// ---------------------------------------------------------------------------
// streaming models (sdm, sddm)

RunResult run_streaming(const RunConfig& cfg, const BatchStream& stream) {
    const int V = static_cast<int>(stream.vocab.size());
    const std::vector<int> timesteps = stream.timesteps();
    const std::vector<std::string> labels = stream.group_labels();
    const auto J = labels.size();
    const auto label_index = [&](const std::string& g) {
        return static_cast<std::size_t>(std::lower_bound(labels.begin(), labels.end(), g) - labels.begin());
    };

    SdmState sdm;
    sdm.hyper = cfg.hyper;
    sdm.keep_history = cfg.keep_history;
    SddmState sddm;
    sddm.hyper = cfg.hyper;
    sddm.group_count = static_cast<int>(J);
    ReferencePoint ref;
    Rng model_rng(mix_seed(cfg.seed, 0x6d6f64656cULL));
    int steps_done = 0;
    bool not_converged = false;

    if (cfg.resume) {
        StreamingCheckpoint ck = load_checkpoint(cfg);
        steps_done = ck.steps_completed;
        ref = ck.ref;
        model_rng.deserialize(ck.rng_state);
        if (cfg.kind == ModelKind::sdm) {
            const json& st = ck.model;
            sdm.t = st.at("t").get<int>();
            for (const auto& traj : st.at("trajectories")) {
                sdm.trajectories.push_back(GlobalTopicTrajectory{
                    UnitDirection::unchecked(traj.at("theta").get<Vec>()), traj.at("popularity").get<int>(),
                    traj.at("born_at").get<int>(), {}});
            }
        } else {
            const json& st = ck.model;
            sddm.t = st.at("t").get<int>();
            sddm.group_count = st.at("group_count").get<int>();
            sddm.global_thetas = directions_from_json(st.at("thetas"));
            sddm.group_popularity = st.at("popularity").get<std::vector<std::vector<int>>>();
            sddm.anchored_count = sddm.global_thetas.size();
            sddm.converged = st.at("converged").get<bool>();
            not_converged = st.at("not_converged").get<bool>();
        }
    }

    std::ofstream report;
    if (!cfg.report_path.empty()) {
        report.open(cfg.report_path, steps_done > 0 ? std::ios::app : std::ios::trunc);
        if (!report) throw std::runtime_error("cannot write report: " + cfg.report_path);
        if (steps_done == 0) report << "t,topics,matched,new,dormant,sweeps,converged\n";
    }
    std::ofstream timing;
    if (!cfg.timing_path.empty()) {
        timing.open(cfg.timing_path, steps_done > 0 ? std::ios::app : std::ios::trunc);
        if (steps_done == 0) timing << "t,wall_ms\n";
    }

    for (std::size_t pos = 1; pos <= timesteps.size(); ++pos) {
        if (static_cast<int>(pos) <= steps_done) continue;
        const auto start = std::chrono::steady_clock::now();
        const int t_val = timesteps[pos - 1];

        // batches present at this timestep, in label order
        std::vector<std::pair<std::size_t, DocBatch>> present;  // (group ordinal, batch)
        for (const auto& e : stream.entries) {
            if (e.t != t_val) continue;
            DocBatch b = read_uci_docs((fs::path(stream.root) / e.file).string(), V);
            if (b.docs.empty()) continue;
            present.emplace_back(label_index(e.group), std::move(b));
        }
        std::sort(present.begin(), present.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });

        // reference point absorbs this step's documents before embedding
        for (const auto& [ord, batch] : present) update_reference_sparse(ref, static_cast<std::size_t>(V), normalize_docs(batch));

        SdmStepInfo sdm_info;
        SddmStepInfo sddm_info;
        int topics_after = 0;
        try {
            if (cfg.kind == ModelKind::sdm) {
                // one polytope per timestep: pool every group's documents
                DocBatch pooled;
                pooled.vocab_size = V;
                for (const auto& [ord, batch] : present)
                    pooled.docs.insert(pooled.docs.end(), batch.docs.begin(), batch.docs.end());
                std::vector<UnitDirection> estimates;
                if (!pooled.docs.empty()) {
                    EstimatorConfig ecfg = cfg.estimator;
                    ecfg.seed = mix_seed(cfg.seed, 0xE57ULL, mix_seed(pos, 0));
                    const TopicEstimate est = estimate_topics(pooled, ref, ecfg);
                    estimates = embed_topics(est, ref);
                }
                sdm_info = sdm_step(sdm, estimates);
                topics_after = static_cast<int>(sdm.trajectories.size());
                if (report)
                    report << t_val << ',' << topics_after << ',' << sdm_info.matched << ','
                           << sdm_info.created << ',' << sdm_info.dormant << ",1,1\n";
            } else {
                std::vector<TopicEstimate> ests(present.size());
                const ReferencePoint& ref_now = ref;
                parallel_for(present.size(), cfg.threads, [&](std::size_t i) {
                    EstimatorConfig ecfg = cfg.estimator;
                    ecfg.seed = mix_seed(cfg.seed, 0xE57ULL, mix_seed(pos, present[i].first + 1));
                    ests[i] = estimate_topics(present[i].second, ref_now, ecfg);
                });
                std::vector<std::vector<UnitDirection>> per_group(J);
                for (std::size_t i = 0; i < present.size(); ++i)
                    per_group[present[i].first] = embed_topics(ests[i], ref);
                sddm_info = sddm_step(sddm, per_group, model_rng, cfg.max_sweeps);
                if (!sddm_info.converged) not_converged = true;
                topics_after = static_cast<int>(sddm.global_thetas.size());
                if (report)
                    report << t_val << ',' << topics_after << ',' << sddm_info.matched << ','
                           << sddm_info.created << ',' << sddm_info.dormant << ',' << sddm_info.sweeps
                           << ',' << (sddm_info.converged ? 1 : 0) << '\n';
            }
        } catch (const std::exception& e) {
            throw std::runtime_error("step t=" + std::to_string(t_val) + ": " + e.what());
        }
        if (report) report.flush();
        if (timing) {
            const double ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.3f", ms);
            timing << t_val << ',' << buf << '\n';
            timing.flush();
        }

        steps_done = static_cast<int>(pos);
        if (!cfg.checkpoint_path.empty()) {
            json model;
            if (cfg.kind == ModelKind::sdm) {
                model["t"] = sdm.t;
                json trajs = json::array();
                for (const auto& traj : sdm.trajectories)
                    trajs.push_back(json{{"theta", traj.theta.coords()},
                                         {"popularity", traj.popularity},
                                         {"born_at", traj.born_at}});
                model["trajectories"] = std::move(trajs);
            } else {
                model["t"] = sddm.t;
                model["group_count"] = sddm.group_count;
                model["thetas"] = directions_to_json(sddm.global_thetas);
                model["popularity"] = sddm.group_popularity;
                model["converged"] = sddm.converged;
                model["not_converged"] = not_converged;
            }
            save_streaming_checkpoint(cfg, steps_done, ref, model_rng, std::move(model));
        }
        if (cfg.stop_after_steps > 0 && steps_done >= cfg.stop_after_steps) break;
    }

    RunResult result;
    result.steps_completed = steps_done;
    result.not_converged = not_converged;
    std::vector<UnitDirection> thetas;
    if (cfg.kind == ModelKind::sdm) {
        for (const auto& traj : sdm.trajectories) thetas.push_back(traj.theta);
    } else {
        thetas = sddm.global_thetas;
    }
    if (!thetas.empty() && ref.doc_count > 0) write_outputs(cfg, result, ref, thetas);
    return result;
}

// ---------------------------------------------------------------------------
// distributed model (dm): groups pooled across time, one matching solve

RunResult run_distributed(const RunConfig& cfg, const BatchStream& stream) {
    const int V = static_cast<int>(stream.vocab.size());
    const std::vector<std::string> labels = stream.group_labels();
    const auto J = labels.size();

    std::vector<DocBatch> pooled(J);
    for (auto& b : pooled) b.vocab_size = V;
    ReferencePoint ref;
    for (const auto& e : stream.entries) {
        DocBatch b = read_uci_docs((fs::path(stream.root) / e.file).string(), V);
        if (b.docs.empty()) continue;
        update_reference_sparse(ref, static_cast<std::size_t>(V), normalize_docs(b));
        const auto j = static_cast<std::size_t>(
            std::lower_bound(labels.begin(), labels.end(), e.group) - labels.begin());
        pooled[j].docs.insert(pooled[j].docs.end(), b.docs.begin(), b.docs.end());
    }

    std::vector<TopicEstimate> ests(J);
    parallel_for(J, cfg.threads, [&](std::size_t j) {
        if (pooled[j].docs.empty()) return;
        EstimatorConfig ecfg = cfg.estimator;
        ecfg.seed = mix_seed(cfg.seed, 0xE57ULL, mix_seed(0, j + 1));
        ests[j] = estimate_topics(pooled[j], ref, ecfg);
    });
    std::vector<std::vector<UnitDirection>> groups(J);
    for (std::size_t j = 0; j < J; ++j)
        if (!ests[j].topics.empty()) groups[j] = embed_topics(ests[j], ref);

    std::ofstream report;
    if (!cfg.report_path.empty()) {
        report.open(cfg.report_path, std::ios::trunc);
        if (!report) throw std::runtime_error("cannot write report: " + cfg.report_path);
        report << "sweep,group,changed,topics\n";
    }
    const DmObserver observer = [&](const DmSweepEvent& ev) {
        if (report)
            report << ev.sweep << ',' << ev.group << ',' << (ev.changed ? 1 : 0) << ',' << ev.topics_after
                   << '\n';
    };

    Rng model_rng(mix_seed(cfg.seed, 0x6d6f64656cULL));
    DmState state = dm_run(groups, cfg.hyper, model_rng, cfg.max_sweeps,
                           report ? observer : DmObserver{});

    RunResult result;
    result.steps_completed = 1;
    result.not_converged = !state.converged;
    if (!cfg.checkpoint_path.empty()) {
        json model;
        model["thetas"] = directions_to_json(state.global_thetas);
        model["support"] = state.support;
        model["assignments"] = state.group_assignments;
        model["converged"] = state.converged;
        save_streaming_checkpoint(cfg, 1, ref, model_rng, std::move(model));
    }
    if (!state.global_thetas.empty() && ref.doc_count > 0)
        write_outputs(cfg, result, ref, state.global_thetas);
    return result;
}

}  // namespace

RunResult run_model(const RunConfig& cfg, const BatchStream& stream) {
    if (stream.vocab.empty()) throw std::invalid_argument("stream has no vocabulary");
    if (stream.entries.empty()) throw std::invalid_argument("stream has no batches");
    if (cfg.kind == ModelKind::dm) {
        if (cfg.resume) throw std::invalid_argument("dm checkpoints are final-state only; resume is not supported");
        return run_distributed(cfg, stream);
    }
    return run_streaming(cfg, stream);
}

// ---------------------------------------------------------------------------
// evaluation

double eval_perplexity(const std::vector<SimplexPoint>& topics, const DocBatch& heldout,
                       int em_iters, double weight_smoothing, double topic_smoothing) {
    if (topics.empty()) throw std::invalid_argument("eval_perplexity needs at least one topic");
    if (heldout.docs.empty()) throw std::invalid_argument("eval_perplexity needs held-out documents");
    const auto K = topics.size();
    const auto V = static_cast<std::size_t>(heldout.vocab_size);

    // smooth and renormalize the topics; boundary topics carry exact zeros
    std::vector<Vec> T(K);
    for (std::size_t k = 0; k < K; ++k) {
        T[k] = topics[k].coords();
        double total = 0.0;
        for (double& x : T[k]) {
            x += topic_smoothing;
            total += x;
        }
        scale_inplace(T[k], 1.0 / total);
    }

    double total_ll = 0.0;
    double total_tokens = 0.0;
    std::vector<double> w(K), nk(K), probs;
    for (const auto& doc : heldout.docs) {
        const std::size_t nnz = doc.size();
        probs.assign(nnz * K, 0.0);
        double N = 0.0;
        for (std::size_t i = 0; i < nnz; ++i) {
            N += doc[i].second;
            for (std::size_t k = 0; k < K; ++k)
                probs[i * K + k] = T[k][static_cast<std::size_t>(doc[i].first)];
        }
        std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(K));
        for (int iter = 0; iter < em_iters; ++iter) {
            std::fill(nk.begin(), nk.end(), 0.0);
            for (std::size_t i = 0; i < nnz; ++i) {
                double denom = 0.0;
                for (std::size_t k = 0; k < K; ++k) denom += w[k] * probs[i * K + k];
                if (denom <= 0.0) continue;
                const double scale = static_cast<double>(doc[i].second) / denom;
                for (std::size_t k = 0; k < K; ++k) nk[k] += scale * w[k] * probs[i * K + k];
            }
            const double denom = N + static_cast<double>(K) * weight_smoothing;
            for (std::size_t k = 0; k < K; ++k) w[k] = (nk[k] + weight_smoothing) / denom;
        }
        for (std::size_t i = 0; i < nnz; ++i) {
            double p = 0.0;
            for (std::size_t k = 0; k < K; ++k) p += w[k] * probs[i * K + k];
            total_ll += static_cast<double>(doc[i].second) * std::log(p);
        }
        total_tokens += N;
    }
    (void)V;
    return std::exp(-total_ll / total_tokens);
}

double eval_matching_accuracy(const std::vector<UnitDirection>& inferred,
                              const std::vector<UnitDirection>& truth_dirs) {
    if (inferred.empty() || truth_dirs.empty())
        throw std::invalid_argument("eval_matching_accuracy needs nonempty inputs");
    const std::size_t n_inf = inferred.size();
    const std::size_t n_true = truth_dirs.size();
    const std::size_t rows = std::max(n_inf, n_true);
    CostMatrix cost(rows, n_true, -2.0);  // padding rows sit below any cosine
    for (std::size_t i = 0; i < n_inf; ++i)
        for (std::size_t k = 0; k < n_true; ++k) cost.at(i, k) = dot(inferred[i], truth_dirs[k]);
    const AssignmentSolution sol = solve_max_assignment(cost);
    const double threshold = std::cos(0.2);
    std::size_t hits = 0;
    for (std::size_t k = 0; k < n_true; ++k) {
        const std::size_t row = sol.col_to_row[k];
        if (row < n_inf && cost.at(row, k) > threshold) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(n_true);
}

double eval_matching_accuracy(const std::vector<UnitDirection>& inferred, const GroundTruth& truth) {
    return eval_matching_accuracy(inferred, truth.reference_directions());
}

}  // namespace metatopic
