#include "mvr/commands.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mvr/clustering.hpp"
#include "mvr/engine.hpp"
#include "mvr/eval.hpp"
#include "mvr/index.hpp"

namespace mvr {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_between(Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration<double>(b - a).count();
}

std::string fmt_g(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

void echo(std::ostream& out, const char* key, const std::string& value) {
    out << "# " << key << " = " << value << "\n";
}

void echo(std::ostream& out, const char* key, const std::filesystem::path& p) {
    echo(out, key, p.empty() ? std::string("(none)") : p.string());
}

void echo(std::ostream& out, const char* key, std::uint64_t v) {
    echo(out, key, std::to_string(v));
}

void echo(std::ostream& out, const char* key, double v) { echo(out, key, fmt_g(v)); }

void echo_flag(std::ostream& out, const char* key, bool v) {
    echo(out, key, std::string(v ? "true" : "false"));
}

void require_path(const std::filesystem::path& p, const char* flag, const char* cmd) {
    if (p.empty()) {
        throw UsageError(std::string(cmd) + ": " + flag + " is required");
    }
}

std::vector<std::string> split_list(const std::string& s, const char* what) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) parts.push_back(cur);
            cur.clear();
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            cur += c;
        }
    }
    if (!cur.empty()) parts.push_back(cur);
    if (parts.empty()) {
        throw UsageError(std::string(what) + ": empty list '" + s + "'");
    }
    return parts;
}

std::uint32_t parse_u32(const std::string& s, const char* what) {
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(s, &pos);
        if (pos == s.size() && v <= 0xffffffffull) return static_cast<std::uint32_t>(v);
    } catch (const std::exception&) {
    }
    throw UsageError(std::string(what) + ": bad value '" + s + "'");
}

float parse_f32(const std::string& s, const char* what) {
    try {
        std::size_t pos = 0;
        const float v = std::stof(s, &pos);
        if (pos == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw UsageError(std::string(what) + ": bad value '" + s + "'");
}

SearchParams make_search_params(const RunConfig& cfg, std::uint32_t kappa_c,
                                std::uint32_t kappa_d, float alpha) {
    SearchParams p;
    p.kappa_c = kappa_c;
    p.kappa_d = kappa_d;
    p.alpha = alpha;
    p.ef_search = cfg.ef_search ? cfg.ef_search : kappa_c * 3 / 2;
    p.k = cfg.k;
    p.exhaustive_centroids = cfg.exhaustive;
    return p;
}

struct SearchRunResult {
    Run run;
    std::vector<PhaseTimings> timings;
};

SearchRunResult run_all_queries(const QuerySet& queries, const SearchIndex& index,
                                const SearchParams& params) {
    SearchRunResult sr;
    sr.timings.reserve(queries.num_queries());
    GraphSearchScratch scratch;
    for (std::size_t q = 0; q < queries.num_queries(); ++q) {
        const SearchResult res =
            search(queries.query_tokens(q), queries.query_len(q), index, params, &scratch);
        std::vector<RunEntry>& entries = sr.run.entries_for(queries.ids[q]);
        entries.reserve(res.ranking.size());
        for (std::size_t r = 0; r < res.ranking.size(); ++r) {
            entries.push_back({std::to_string(res.ranking[r].doc),
                               static_cast<std::uint32_t>(r + 1), res.ranking[r].score});
        }
        sr.timings.push_back(res.timings);
    }
    return sr;
}

void write_timings_csv(const std::filesystem::path& path, const QuerySet& queries,
                       const std::vector<PhaseTimings>& rows) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot create " + path.string());
    out << "query_id,gather_us,prune_us,refine_us,total_us,"
           "candidates_after_gather,candidates_after_prune\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const PhaseTimings& t = rows[i];
        out << queries.ids[i] << ',' << t.gather_us << ',' << t.prune_us << ','
            << t.refine_us << ',' << t.total_us << ',' << t.candidates_after_gather << ','
            << t.candidates_after_prune << '\n';
    }
    if (!out.flush()) throw DataError("write failed for " + path.string());
}

std::filesystem::path timings_path_for(std::filesystem::path run_path) {
    run_path.replace_extension(".timings.csv");
    return run_path;
}

struct Metric {
    std::string name;
    std::uint32_t k = 0;
};

Metric parse_metric(const std::string& s) {
    std::string lower;
    lower.reserve(s.size());
    for (char c : s) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    const std::size_t at = lower.find('@');
    if (at == std::string::npos || at == 0 || at + 1 == lower.size()) {
        throw UsageError("metric must look like mrr@10, success@5 or recall@10, got '" + s +
                         "'");
    }
    Metric m;
    m.name = lower.substr(0, at);
    m.k = parse_u32(lower.substr(at + 1), "metric cutoff");
    if (m.k == 0) throw UsageError("metric cutoff must be >= 1");
    if (m.name != "mrr" && m.name != "success" && m.name != "recall") {
        throw UsageError("unknown metric '" + m.name + "' (expected mrr, success or recall)");
    }
    return m;
}

PhaseStats phase_stats(std::vector<std::uint64_t> samples) {
    PhaseStats st;
    if (samples.empty()) return st;
    std::sort(samples.begin(), samples.end());
    const std::size_t n = samples.size();
    double sum = 0.0;
    for (std::uint64_t v : samples) sum += static_cast<double>(v);
    st.mean_us = sum / static_cast<double>(n);
    st.median_us = (n % 2) ? static_cast<double>(samples[n / 2])
                           : (static_cast<double>(samples[n / 2 - 1]) +
                              static_cast<double>(samples[n / 2])) /
                                 2.0;
    const std::size_t p99 = (99 * n + 99) / 100 - 1;
    st.p99_us = static_cast<double>(samples[std::min(p99, n - 1)]);
    return st;
}

void print_phase(std::ostream& out, const char* name, const PhaseStats& st) {
    out << "  " << name << ": mean " << fmt_g(st.mean_us) << " us, median "
        << fmt_g(st.median_us) << " us, p99 " << fmt_g(st.p99_us) << " us\n";
}

}  // namespace

void cmd_synth(const RunConfig& cfg, std::ostream& out) {
    require_path(cfg.corpus_path, "--corpus", "synth");
    SynthParams p = cfg.synth;
    p.seed = cfg.seed;

    echo(out, "subcommand", std::string("synth"));
    echo(out, "corpus", cfg.corpus_path);
    echo(out, "queries", cfg.queries_path);
    echo(out, "qrels", cfg.qrels_path);
    echo(out, "seed", p.seed);
    echo(out, "dim", std::uint64_t(p.dim));
    echo(out, "vocab_size", std::uint64_t(p.vocab_size));
    echo(out, "num_docs", p.num_docs);
    echo(out, "doc_len_min", std::uint64_t(p.doc_len_min));
    echo(out, "doc_len_max", std::uint64_t(p.doc_len_max));
    echo(out, "zipf_exponent", p.zipf_exponent);
    echo(out, "components_per_token", std::uint64_t(p.components_per_token));
    echo(out, "noise", double(p.noise));
    echo(out, "num_queries", std::uint64_t(p.num_queries));
    echo(out, "query_len", std::uint64_t(p.query_len));
    echo(out, "group_size", std::uint64_t(p.group_size));
    echo(out, "query_noise", double(p.query_noise));

    const SynthOutput res = synthesize(p);
    save_corpus(res.corpus, cfg.corpus_path);
    out << "wrote corpus: " << res.corpus.num_docs() << " docs, " << res.corpus.num_vectors()
        << " vectors, dim " << res.corpus.dim << "\n";
    if (!cfg.queries_path.empty() && res.queries.num_queries() > 0) {
        save_queries(res.queries, cfg.queries_path);
        out << "wrote queries: " << res.queries.num_queries() << "\n";
    }
    if (!cfg.qrels_path.empty() && !res.qrels.judgments.empty()) {
        save_qrels(res.qrels, cfg.qrels_path);
        out << "wrote qrels: " << res.qrels.judgments.size() << " queries\n";
    }
}

ClusterOutcome cmd_cluster(const RunConfig& cfg, std::ostream& out) {
    require_path(cfg.corpus_path, "--corpus", "cluster");
    require_path(cfg.codebook_path, "--codebook", "cluster");
    require_path(cfg.assignment_path, "--assignment", "cluster");

    echo(out, "subcommand", std::string("cluster"));
    echo(out, "corpus", cfg.corpus_path);
    echo(out, "codebook", cfg.codebook_path);
    echo(out, "assignment", cfg.assignment_path);
    echo(out, "kappa", cfg.kappa);
    echo(out, "mu", cfg.mu);
    echo(out, "tau", cfg.tau);
    echo(out, "epsilon", std::uint64_t(cfg.epsilon));
    echo(out, "theta", cfg.theta);
    echo(out, "iterations", std::uint64_t(cfg.iterations));
    echo(out, "stats_sample_cap", cfg.stats_sample_cap);
    echo(out, "seed", cfg.seed);
    echo(out, "threads", std::uint64_t(cfg.threads));
    echo_flag(out, "renormalize", cfg.renormalize);
    echo_flag(out, "baseline", cfg.baseline);
    if (cfg.baseline) echo(out, "baseline_sample_cap", cfg.baseline_sample_cap);

    const TokenVectorCorpus corpus = load_corpus(cfg.corpus_path, cfg.renormalize);
    const TokenIndex tindex = build_token_index(corpus);
    const std::vector<TokenStats> stats =
        compute_token_stats(corpus, tindex, cfg.stats_sample_cap, cfg.seed);

    AllocationParams ap;
    ap.budget = cfg.kappa;
    ap.mu = cfg.mu;
    ap.tau = cfg.tau;
    ap.epsilon = cfg.epsilon;
    ap.theta = cfg.theta;

    ClusterOutcome outcome;
    outcome.plan = allocate(stats, ap);
    const AllocationPlan& plan = outcome.plan;
    try {
        outcome.bound = speedup_lower_bound(stats);
    } catch (const ZeroWeightError&) {
        outcome.bound = std::numeric_limits<double>::quiet_NaN();
    }

    out << "allocation plan (" << stats.size() << " tokens, budget " << cfg.kappa << "):\n";
    const char* names[3] = {"micro", "small", "active"};
    for (int c = 0; c < 3; ++c) {
        std::uint64_t tokens = 0, centroids = 0;
        std::uint32_t lo = 0, hi = 0;
        for (std::size_t j = 0; j < stats.size(); ++j) {
            if (static_cast<int>(plan.category[j]) != c) continue;
            const std::uint32_t kj = plan.centroids_per_token[j];
            if (tokens == 0) {
                lo = hi = kj;
            } else {
                lo = std::min(lo, kj);
                hi = std::max(hi, kj);
            }
            ++tokens;
            centroids += kj;
        }
        out << "  " << names[c] << ": " << tokens << " tokens, " << centroids
            << " centroids";
        if (tokens) out << " (per token " << lo << ".." << hi << ")";
        out << "\n";
    }
    out << "  total allocated: " << plan.total_allocated << " of " << cfg.kappa << "\n";
    if (plan.shortfall) out << "  shortfall: " << plan.shortfall << " (caps exhausted)\n";
    if (plan.surplus) out << "  surplus over budget: " << plan.surplus << " (floors)\n";
    if (std::isnan(outcome.bound)) {
        out << "speedup lower bound: undefined (all token weights zero)\n";
    } else {
        out << "speedup lower bound: " << fmt_g(outcome.bound) << "\n";
    }

    const auto t0 = Clock::now();
    const TokenPartitionedCodebook codebook =
        train(corpus, tindex, stats, plan, cfg.iterations, cfg.seed, cfg.threads,
              &outcome.train_ops);
    const auto t1 = Clock::now();
    const Assignment assignment = assign(corpus, tindex, codebook, cfg.threads,
                                         &outcome.assign_ops);
    const auto t2 = Clock::now();
    outcome.train_seconds = seconds_between(t0, t1);
    outcome.assign_seconds = seconds_between(t1, t2);

    save_codebook(codebook, cfg.codebook_path);
    save_assignment(assignment, cfg.assignment_path);

    out << "train: " << outcome.train_ops << " distance ops, "
        << fmt_g(outcome.train_seconds) << " s\n";
    out << "assign: " << outcome.assign_ops << " distance ops, "
        << fmt_g(outcome.assign_seconds) << " s\n";
    out << "wrote codebook " << cfg.codebook_path.string() << " ("
        << codebook.num_centroids() << " centroids, dim " << codebook.dim << ")\n";
    out << "wrote assignment " << cfg.assignment_path.string() << " (" << assignment.size()
        << " vectors)\n";

    if (cfg.baseline) {
        if (cfg.kappa > 0xffffffffull) {
            throw UsageError("cluster: baseline k-means cannot take kappa > 2^32-1");
        }
        const std::uint32_t k = static_cast<std::uint32_t>(cfg.kappa);
        const auto b0 = Clock::now();
        const std::vector<float> base = baseline_kmeans(
            corpus, k, cfg.iterations, cfg.seed, cfg.baseline_sample_cap,
            &outcome.baseline_train_ops);
        const auto b1 = Clock::now();
        std::vector<std::uint32_t> base_assign(corpus.num_vectors());
        assign_nearest(corpus.vectors.data(), corpus.num_vectors(), corpus.dim, base.data(),
                       k, base_assign.data(), nullptr, &outcome.baseline_assign_ops);
        const auto b2 = Clock::now();
        outcome.baseline_train_seconds = seconds_between(b0, b1);
        outcome.baseline_assign_seconds = seconds_between(b1, b2);

        out << "baseline train: " << outcome.baseline_train_ops << " distance ops, "
            << fmt_g(outcome.baseline_train_seconds) << " s\n";
        out << "baseline assign: " << outcome.baseline_assign_ops << " distance ops, "
            << fmt_g(outcome.baseline_assign_seconds) << " s\n";
        const double tac_total =
            static_cast<double>(outcome.train_ops) + static_cast<double>(outcome.assign_ops);
        const double base_total = static_cast<double>(outcome.baseline_train_ops) +
                                  static_cast<double>(outcome.baseline_assign_ops);
        outcome.measured_ratio = tac_total > 0.0 ? base_total / tac_total : 0.0;
        out << "measured distance-op ratio (baseline / token-aware): "
            << fmt_g(outcome.measured_ratio) << "\n";
        if (!std::isnan(outcome.bound) && outcome.bound > 0.0) {
            out << "  ratio / lower bound: " << fmt_g(outcome.measured_ratio / outcome.bound)
                << "\n";
        }
    }
    return outcome;
}

void cmd_build(const RunConfig& cfg, std::ostream& out) {
    require_path(cfg.corpus_path, "--corpus", "build");
    require_path(cfg.codebook_path, "--codebook", "build");
    require_path(cfg.assignment_path, "--assignment", "build");
    require_path(cfg.index_dir, "--index", "build");

    echo(out, "subcommand", std::string("build"));
    echo(out, "corpus", cfg.corpus_path);
    echo(out, "codebook", cfg.codebook_path);
    echo(out, "assignment", cfg.assignment_path);
    echo(out, "index", cfg.index_dir);
    echo(out, "pq_m", std::uint64_t(cfg.pq_m));
    echo(out, "pq_bits", std::uint64_t(cfg.pq_bits));
    echo(out, "pq_iterations", std::uint64_t(cfg.pq_iterations));
    echo(out, "pq_train_cap", cfg.pq_train_cap);
    echo(out, "graph_m", std::uint64_t(cfg.graph_m));
    echo(out, "graph_ef_construction", std::uint64_t(cfg.graph_ef_construction));
    echo(out, "seed", cfg.seed);
    echo_flag(out, "renormalize", cfg.renormalize);

    const TokenVectorCorpus corpus = load_corpus(cfg.corpus_path, cfg.renormalize);
    const TokenPartitionedCodebook codebook = load_codebook(cfg.codebook_path);
    const Assignment assignment = load_assignment(cfg.assignment_path);

    IndexBuildParams p;
    p.pq_m = cfg.pq_m;
    p.pq_bits = cfg.pq_bits;
    p.pq_iterations = cfg.pq_iterations;
    p.pq_train_cap = cfg.pq_train_cap;
    p.graph_m = cfg.graph_m;
    p.graph_ef_construction = cfg.graph_ef_construction;
    p.seed = cfg.seed;

    const auto t0 = Clock::now();
    build_index_dir(cfg.index_dir, corpus, codebook, assignment, p);
    const auto t1 = Clock::now();
    out << "built index in " << fmt_g(seconds_between(t0, t1)) << " s\n";

    out << "size report:\n";
    std::uint64_t total = 0;
    for (const char* name : {"codebook.bin", "codec.bin", "compressed.bin", "graph.bin",
                             "invlists.bin", "manifest.txt"}) {
        const std::uint64_t bytes = std::filesystem::file_size(cfg.index_dir / name);
        total += bytes;
        out << "  " << name << ": " << bytes << " bytes\n";
    }
    out << "  total: " << total << " bytes\n";
    const std::uint64_t per_token = 4 + cfg.pq_m + 4;
    out << "  compressed payload: " << corpus.num_vectors() << " token vectors x ("
        << "4 id + " << cfg.pq_m << " codes + 4 norm) = "
        << corpus.num_vectors() * per_token << " bytes before offsets\n";
}

void cmd_search(const RunConfig& cfg, std::ostream& out) {
    require_path(cfg.index_dir, "--index", "search");
    require_path(cfg.queries_path, "--queries", "search");
    require_path(cfg.output_path, "--output", "search");
    if (cfg.oracle) require_path(cfg.corpus_path, "--corpus", "search --oracle");

    echo(out, "subcommand", std::string("search"));
    echo(out, "index", cfg.index_dir);
    echo(out, "queries", cfg.queries_path);
    echo(out, "output", cfg.output_path);
    echo(out, "k", std::uint64_t(cfg.k));
    echo_flag(out, "oracle", cfg.oracle);
    echo_flag(out, "grid", cfg.grid);
    if (!cfg.oracle && !cfg.grid) {
        echo(out, "kappa_c", std::uint64_t(cfg.kappa_c));
        echo(out, "kappa_d", std::uint64_t(cfg.kappa_d));
        echo(out, "alpha", double(cfg.alpha));
        echo(out, "ef_search",
             std::uint64_t(cfg.ef_search ? cfg.ef_search : cfg.kappa_c * 3 / 2));
        echo_flag(out, "exhaustive", cfg.exhaustive);
    }
    if (cfg.grid) {
        echo(out, "grid_kappa_c", cfg.grid_kappa_c);
        echo(out, "grid_kappa_d", cfg.grid_kappa_d);
        echo(out, "grid_alpha", cfg.grid_alpha);
    }
    echo(out, "max_query_len", std::uint64_t(cfg.max_query_len));
    echo_flag(out, "renormalize", cfg.renormalize);

    const QuerySet queries =
        load_queries(cfg.queries_path, cfg.renormalize, cfg.max_query_len);

    if (cfg.oracle) {
        const TokenVectorCorpus corpus = load_corpus(cfg.corpus_path, cfg.renormalize);
        Run run;
        std::vector<PhaseTimings> timings;
        timings.reserve(queries.num_queries());
        for (std::size_t q = 0; q < queries.num_queries(); ++q) {
            const auto t0 = Clock::now();
            const std::vector<ScoredDoc> ranking =
                exhaustive_maxsim(queries.query_tokens(q), queries.query_len(q), corpus,
                                  cfg.k);
            const auto t1 = Clock::now();
            std::vector<RunEntry>& entries = run.entries_for(queries.ids[q]);
            for (std::size_t r = 0; r < ranking.size(); ++r) {
                entries.push_back({std::to_string(ranking[r].doc),
                                   static_cast<std::uint32_t>(r + 1), ranking[r].score});
            }
            PhaseTimings t;
            t.total_us = static_cast<std::uint64_t>(
                std::chrono::duration_cast<std::chrono::microseconds>(t1 - t0).count());
            timings.push_back(t);
        }
        write_run(run, cfg.output_path);
        write_timings_csv(timings_path_for(cfg.output_path), queries, timings);
        out << "wrote oracle run " << cfg.output_path.string() << " ("
            << queries.num_queries() << " queries)\n";
        return;
    }

    const SearchIndex index = load_index_dir(cfg.index_dir);

    if (!cfg.grid) {
        const SearchParams params =
            make_search_params(cfg, cfg.kappa_c, cfg.kappa_d, cfg.alpha);
        const SearchRunResult sr = run_all_queries(queries, index, params);
        write_run(sr.run, cfg.output_path);
        write_timings_csv(timings_path_for(cfg.output_path), queries, sr.timings);
        double mean_us = 0.0;
        for (const PhaseTimings& t : sr.timings) mean_us += static_cast<double>(t.total_us);
        if (!sr.timings.empty()) mean_us /= static_cast<double>(sr.timings.size());
        out << "wrote run " << cfg.output_path.string() << " (" << queries.num_queries()
            << " queries, mean " << fmt_g(mean_us) << " us)\n";
        return;
    }

    std::filesystem::create_directories(cfg.output_path);
    std::vector<std::string> kcs = split_list(cfg.grid_kappa_c, "grid kappa_c");
    std::vector<std::string> kds = split_list(cfg.grid_kappa_d, "grid kappa_d");
    std::vector<std::string> alphas = split_list(cfg.grid_alpha, "grid alpha");
    for (const std::string& kc_s : kcs) {
        const std::uint32_t kc = parse_u32(kc_s, "grid kappa_c");
        for (const std::string& kd_s : kds) {
            const std::uint32_t kd = parse_u32(kd_s, "grid kappa_d");
            for (const std::string& a_s : alphas) {
                const float a = parse_f32(a_s, "grid alpha");
                const SearchParams params = make_search_params(cfg, kc, kd, a);
                const SearchRunResult sr = run_all_queries(queries, index, params);
                const std::string cell = "kc" + kc_s + "_kd" + kd_s + "_a" + a_s;
                const std::filesystem::path run_path =
                    cfg.output_path / ("run_" + cell + ".tsv");
                write_run(sr.run, run_path);
                write_timings_csv(cfg.output_path / ("timings_" + cell + ".csv"), queries,
                                  sr.timings);
                double mean_us = 0.0;
                for (const PhaseTimings& t : sr.timings) {
                    mean_us += static_cast<double>(t.total_us);
                }
                if (!sr.timings.empty()) mean_us /= static_cast<double>(sr.timings.size());
                out << "cell " << cell << ": mean " << fmt_g(mean_us) << " us\n";
            }
        }
    }
    out << "wrote " << kcs.size() * kds.size() * alphas.size() << " runs under "
        << cfg.output_path.string() << "\n";
}

double cmd_eval(const RunConfig& cfg, std::ostream& out) {
    require_path(cfg.run_path, "--run", "eval");
    const Metric metric = parse_metric(cfg.metric);

    echo(out, "subcommand", std::string("eval"));
    echo(out, "run", cfg.run_path);
    echo(out, "qrels", cfg.qrels_path);
    echo(out, "oracle_run", cfg.oracle_path);
    echo(out, "metric", cfg.metric);

    const Run run = read_run(cfg.run_path);
    double value = 0.0;
    if (metric.name == "recall") {
        require_path(cfg.oracle_path, "--oracle-run", "eval (recall)");
        const Run oracle = read_run(cfg.oracle_path);
        value = recall_vs_oracle(run, oracle, metric.k);
    } else {
        require_path(cfg.qrels_path, "--qrels", "eval");
        const Qrels qrels = load_qrels(cfg.qrels_path);
        value = metric.name == "mrr" ? mrr_at(run, qrels, metric.k)
                                     : success_at(run, qrels, metric.k);
    }
    out << metric.name << "@" << metric.k << " = " << fmt_g(value) << "\n";
    if (metric.name != "recall" && !cfg.oracle_path.empty()) {
        const Run oracle = read_run(cfg.oracle_path);
        out << "recall@" << metric.k << " vs oracle = "
            << fmt_g(recall_vs_oracle(run, oracle, metric.k)) << "\n";
    }
    return value;
}

BenchReport cmd_bench(const RunConfig& cfg, std::ostream& out) {
    require_path(cfg.index_dir, "--index", "bench");
    require_path(cfg.queries_path, "--queries", "bench");
    if (cfg.reps == 0) throw UsageError("bench: --reps must be >= 1");

    echo(out, "subcommand", std::string("bench"));
    echo(out, "index", cfg.index_dir);
    echo(out, "queries", cfg.queries_path);
    echo(out, "kappa_c", std::uint64_t(cfg.kappa_c));
    echo(out, "kappa_d", std::uint64_t(cfg.kappa_d));
    echo(out, "alpha", double(cfg.alpha));
    echo(out, "ef_search", std::uint64_t(cfg.ef_search ? cfg.ef_search : cfg.kappa_c * 3 / 2));
    echo(out, "k", std::uint64_t(cfg.k));
    echo_flag(out, "exhaustive", cfg.exhaustive);
    echo(out, "warmup", std::uint64_t(cfg.warmup));
    echo(out, "reps", std::uint64_t(cfg.reps));
    echo(out, "max_query_len", std::uint64_t(cfg.max_query_len));

    const SearchIndex index = load_index_dir(cfg.index_dir);
    const QuerySet queries =
        load_queries(cfg.queries_path, cfg.renormalize, cfg.max_query_len);
    if (queries.num_queries() == 0) throw DataError("bench: query set is empty");
    const SearchParams params = make_search_params(cfg, cfg.kappa_c, cfg.kappa_d, cfg.alpha);

    BenchReport report;
    report.warmup = cfg.warmup;
    report.reps = cfg.reps;
    report.queries = queries.num_queries();

    GraphSearchScratch scratch;
    for (std::uint32_t w = 0; w < cfg.warmup; ++w) {
        for (std::size_t q = 0; q < queries.num_queries(); ++q) {
            search(queries.query_tokens(q), queries.query_len(q), index, params, &scratch);
        }
    }
    out << "warmup passes excluded from statistics: " << cfg.warmup << "\n";

    const std::size_t samples = std::size_t(cfg.reps) * queries.num_queries();
    std::vector<std::uint64_t> gather_us, prune_us, refine_us, total_us;
    gather_us.reserve(samples);
    prune_us.reserve(samples);
    refine_us.reserve(samples);
    total_us.reserve(samples);
    double gather_ops = 0.0, refine_ops = 0.0, lookup_ops = 0.0, qlen = 0.0;
    for (std::uint32_t rep = 0; rep < cfg.reps; ++rep) {
        for (std::size_t q = 0; q < queries.num_queries(); ++q) {
            const SearchResult res = search(queries.query_tokens(q), queries.query_len(q),
                                            index, params, &scratch);
            gather_us.push_back(res.timings.gather_us);
            prune_us.push_back(res.timings.prune_us);
            refine_us.push_back(res.timings.refine_us);
            total_us.push_back(res.timings.total_us);
            if (rep == 0) {
                gather_ops += static_cast<double>(res.timings.gather_dot_ops);
                refine_ops += static_cast<double>(res.timings.refine_dot_ops);
                lookup_ops += static_cast<double>(res.timings.table_lookup_ops);
                qlen += static_cast<double>(queries.query_len(q));
            }
        }
    }
    const double nq = static_cast<double>(queries.num_queries());
    report.gather = phase_stats(std::move(gather_us));
    report.prune = phase_stats(std::move(prune_us));
    report.refine = phase_stats(std::move(refine_us));
    report.total = phase_stats(std::move(total_us));
    report.mean_gather_dot_ops = gather_ops / nq;
    report.mean_refine_dot_ops = refine_ops / nq;
    report.mean_table_lookup_ops = lookup_ops / nq;
    report.mean_query_len = qlen / nq;

    out << "latency over " << samples << " samples (" << cfg.reps << " reps x "
        << queries.num_queries() << " queries):\n";
    print_phase(out, "gather", report.gather);
    print_phase(out, "prune", report.prune);
    print_phase(out, "refine", report.refine);
    print_phase(out, "total", report.total);
    out << "mean ops per query: " << fmt_g(report.mean_gather_dot_ops)
        << " centroid dots (gather), " << fmt_g(report.mean_refine_dot_ops)
        << " token dots (refine), " << fmt_g(report.mean_table_lookup_ops)
        << " table lookups\n";

    // Residual-scoring layout comparison on the real candidate sets: the
    // three-level tables against the per-query-token reference layout, same
    // documents, same codes, table build included on both sides.
    std::vector<std::vector<DocId>> cands(queries.num_queries());
    std::uint32_t max_nd = 0;
    std::uint64_t scored_docs = 0;
    for (std::size_t q = 0; q < queries.num_queries(); ++q) {
        const CandidateSet set =
            gather(queries.query_tokens(q), queries.query_len(q), index, params, &scratch);
        for (const ScoredDoc& sd : truncate_and_prune(set, params.kappa_d, params.alpha)) {
            cands[q].push_back(sd.doc);
            max_nd = std::max(max_nd, index.compressed.doc_len(sd.doc));
        }
        scored_docs += cands[q].size();
    }
    if (scored_docs > 0) {
        const std::size_t buf = std::size_t(cfg.max_query_len) * max_nd;
        const std::vector<float> zero_scores(buf, 0.0f);
        std::vector<float> score_buf(buf);

        const auto a0 = Clock::now();
        for (std::uint32_t rep = 0; rep < cfg.reps; ++rep) {
            for (std::size_t q = 0; q < queries.num_queries(); ++q) {
                if (cands[q].empty()) continue;
                const DistanceTables tables =
                    build_distance_tables(queries.query_tokens(q), queries.query_len(q),
                                          index.codec);
                for (DocId d : cands[q]) {
                    score_tokens(index.compressed.codes_of(d), index.compressed.norms_of(d),
                                 index.compressed.doc_len(d), tables, zero_scores.data(),
                                 score_buf.data());
                }
            }
        }
        const auto a1 = Clock::now();
        for (std::uint32_t rep = 0; rep < cfg.reps; ++rep) {
            for (std::size_t q = 0; q < queries.num_queries(); ++q) {
                if (cands[q].empty()) continue;
                const NaiveDistanceTables tables = build_naive_tables(
                    queries.query_tokens(q), queries.query_len(q), index.codec);
                for (DocId d : cands[q]) {
                    score_tokens_naive(index.compressed.codes_of(d),
                                       index.compressed.norms_of(d),
                                       index.compressed.doc_len(d), tables,
                                       zero_scores.data(), score_buf.data());
                }
            }
        }
        const auto a2 = Clock::now();
        const double opt_s = seconds_between(a0, a1);
        const double naive_s = seconds_between(a1, a2);
        report.layout_ratio = opt_s > 0.0 ? naive_s / opt_s : 0.0;
        out << "residual scoring layouts over " << scored_docs << " docs x " << cfg.reps
            << " reps: three-level " << fmt_g(opt_s) << " s, per-query-token "
            << fmt_g(naive_s) << " s, ratio " << fmt_g(report.layout_ratio) << "\n";
    } else {
        out << "residual scoring layouts: no candidates to score\n";
    }
    return report;
}

void cmd_stats(const RunConfig& cfg, std::ostream& out) {
    require_path(cfg.corpus_path, "--corpus", "stats");

    std::ostringstream report;
    echo(report, "subcommand", std::string("stats"));
    echo(report, "corpus", cfg.corpus_path);
    echo_flag(report, "renormalize", cfg.renormalize);

    const TokenVectorCorpus corpus = load_corpus(cfg.corpus_path, cfg.renormalize);
    const std::vector<std::uint64_t> hist = token_histogram(corpus);

    std::vector<std::uint64_t> present;
    for (std::uint64_t c : hist) {
        if (c > 0) present.push_back(c);
    }
    std::sort(present.begin(), present.end());

    std::uint32_t len_min = corpus.doc_len(0), len_max = 0;
    for (DocId d = 0; d < corpus.num_docs(); ++d) {
        len_min = std::min(len_min, corpus.doc_len(d));
        len_max = std::max(len_max, corpus.doc_len(d));
    }

    report << "corpus: " << corpus.num_docs() << " docs, " << corpus.num_vectors()
           << " token vectors, dim " << corpus.dim << ", vocab " << corpus.vocab_size
           << "\n";
    report << "doc length: min " << len_min << ", mean "
           << fmt_g(static_cast<double>(corpus.num_vectors()) /
                    static_cast<double>(corpus.num_docs()))
           << ", max " << len_max << "\n";
    report << "distinct tokens: " << present.size() << "\n";
    const auto pct = [&](double p) {
        const std::size_t i = static_cast<std::size_t>(p * (present.size() - 1) + 0.5);
        return present[i];
    };
    report << "token frequency: min " << present.front() << ", p50 " << pct(0.5) << ", p90 "
           << pct(0.9) << ", p99 " << pct(0.99) << ", max " << present.back() << "\n";
    for (std::size_t top : {std::size_t(1), std::size_t(10), std::size_t(100)}) {
        if (top > present.size()) break;
        report << "top-" << top << " token share: " << fmt_g(top_share(hist, top)) << "\n";
    }
    report << "frequency histogram (tokens per power-of-two bucket):\n";
    std::uint64_t buckets[64] = {};
    for (std::uint64_t c : present) buckets[std::bit_width(c) - 1]++;
    for (int b = 0; b < 64; ++b) {
        if (!buckets[b]) continue;
        const std::uint64_t lo = 1ull << b;
        report << "  [" << lo << ", " << lo * 2 - 1 << "]: " << buckets[b] << "\n";
    }

    out << report.str();
    if (!cfg.output_path.empty()) {
        std::ofstream f(cfg.output_path);
        if (!f) throw DataError("cannot create " + cfg.output_path.string());
        f << report.str();
        if (!f.flush()) throw DataError("write failed for " + cfg.output_path.string());
    }
}

}  // namespace mvr
