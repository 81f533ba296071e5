#include <iostream>

#include <CLI11.hpp>

#include "mvr/commands.hpp"

namespace {

void add_shared(CLI::App* sub, mvr::RunConfig& cfg) {
    sub->add_option("--seed", cfg.seed, "RNG seed")->capture_default_str();
    sub->add_option("--threads", cfg.threads, "worker threads (0 = all cores)")
        ->capture_default_str();
    sub->fallthrough(true);
}

void add_search_params(CLI::App* sub, mvr::RunConfig& cfg) {
    sub->add_option("--kappa-c", cfg.kappa_c, "centroids retrieved per query token")
        ->capture_default_str();
    sub->add_option("--kappa-d", cfg.kappa_d, "candidate cap after gathering")
        ->capture_default_str();
    sub->add_option("--alpha", cfg.alpha, "relative pruning threshold in (0, 1]")
        ->capture_default_str();
    sub->add_option("--ef-search", cfg.ef_search, "graph beam width (0 = 3/2 kappa_c)")
        ->capture_default_str();
    sub->add_option("-k,--top-k", cfg.k, "results per query")->capture_default_str();
    sub->add_flag("--exhaustive", cfg.exhaustive,
                  "scan all centroids instead of the graph");
    sub->add_option("--max-query-len", cfg.max_query_len, "query token cap")
        ->capture_default_str();
    sub->add_flag("--renormalize", cfg.renormalize, "rescale input rows to unit norm");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"token-aware multivector retrieval: cluster, index, search, evaluate"};
    app.require_subcommand(1);
    app.set_config("--config", "",
                   "key=value config file (keys like search.kappa-c); flags override");
    mvr::RunConfig cfg;

    CLI::App* synth = app.add_subcommand("synth", "generate a seeded synthetic testbed");
    synth->add_option("--corpus", cfg.corpus_path, "output corpus meta file")->required();
    synth->add_option("--queries", cfg.queries_path, "output queries meta file");
    synth->add_option("--qrels", cfg.qrels_path, "output qrels TSV");
    synth->add_option("--dim", cfg.synth.dim, "embedding dimension")->capture_default_str();
    synth->add_option("--vocab", cfg.synth.vocab_size, "vocabulary size")
        ->capture_default_str();
    synth->add_option("--docs", cfg.synth.num_docs, "number of documents")
        ->capture_default_str();
    synth->add_option("--doc-len-min", cfg.synth.doc_len_min, "minimum tokens per doc")
        ->capture_default_str();
    synth->add_option("--doc-len-max", cfg.synth.doc_len_max, "maximum tokens per doc")
        ->capture_default_str();
    synth->add_option("--zipf", cfg.synth.zipf_exponent, "token frequency exponent")
        ->capture_default_str();
    synth->add_option("--components", cfg.synth.components_per_token,
                      "Gaussian mixture components per token")
        ->capture_default_str();
    synth->add_option("--noise", cfg.synth.noise, "component jitter")->capture_default_str();
    synth->add_option("--num-queries", cfg.synth.num_queries, "queries to generate")
        ->capture_default_str();
    synth->add_option("--query-len", cfg.synth.query_len, "tokens per query")
        ->capture_default_str();
    synth->add_option("--group-size", cfg.synth.group_size,
                      "planted relevant docs per query (0 = perturb random docs)")
        ->capture_default_str();
    synth->add_option("--query-noise", cfg.synth.query_noise, "query token jitter")
        ->capture_default_str();
    add_shared(synth, cfg);

    CLI::App* cluster =
        app.add_subcommand("cluster", "token-aware centroid training + assignment");
    cluster->add_option("--corpus", cfg.corpus_path, "corpus meta file")->required();
    cluster->add_option("--codebook", cfg.codebook_path, "output codebook")->required();
    cluster->add_option("--assignment", cfg.assignment_path, "output assignment")
        ->required();
    cluster->add_option("--kappa", cfg.kappa, "total centroid budget")
        ->capture_default_str();
    cluster->add_option("--mu", cfg.mu, "micro-token threshold")->capture_default_str();
    cluster->add_option("--tau", cfg.tau, "small-token threshold")->capture_default_str();
    cluster->add_option("--epsilon", cfg.epsilon, "active-token centroid floor")
        ->capture_default_str();
    cluster->add_option("--theta", cfg.theta, "minimum vectors per centroid")
        ->capture_default_str();
    cluster->add_option("--iterations", cfg.iterations, "Lloyd iterations")
        ->capture_default_str();
    cluster->add_option("--stats-sample-cap", cfg.stats_sample_cap,
                        "occurrences sampled per token for stats")
        ->capture_default_str();
    cluster->add_flag("--baseline", cfg.baseline,
                      "also run flat k-means with the same budget");
    cluster->add_option("--baseline-sample-cap", cfg.baseline_sample_cap,
                        "training sample cap for the flat baseline")
        ->capture_default_str();
    cluster->add_flag("--renormalize", cfg.renormalize, "rescale input rows to unit norm");
    add_shared(cluster, cfg);

    CLI::App* build = app.add_subcommand("build", "build the search index directory");
    build->add_option("--corpus", cfg.corpus_path, "corpus meta file")->required();
    build->add_option("--codebook", cfg.codebook_path, "trained codebook")->required();
    build->add_option("--assignment", cfg.assignment_path, "trained assignment")
        ->required();
    build->add_option("--index", cfg.index_dir, "output index directory")->required();
    build->add_option("--pq-m", cfg.pq_m, "residual quantizer subspaces")
        ->capture_default_str();
    build->add_option("--pq-bits", cfg.pq_bits, "bits per subspace code")
        ->capture_default_str();
    build->add_option("--pq-iterations", cfg.pq_iterations, "quantizer Lloyd iterations")
        ->capture_default_str();
    build->add_option("--pq-train-cap", cfg.pq_train_cap, "residual training sample cap")
        ->capture_default_str();
    build->add_option("--graph-m", cfg.graph_m, "graph degree parameter")
        ->capture_default_str();
    build->add_option("--graph-ef-construction", cfg.graph_ef_construction,
                      "graph construction beam width")
        ->capture_default_str();
    build->add_flag("--renormalize", cfg.renormalize, "rescale input rows to unit norm");
    add_shared(build, cfg);

    CLI::App* search = app.add_subcommand("search", "run queries against an index");
    search->add_option("--index", cfg.index_dir, "index directory")->required();
    search->add_option("--queries", cfg.queries_path, "queries meta file")->required();
    search->add_option("--output", cfg.output_path,
                       "run file (a directory in grid mode)")
        ->required();
    search->add_option("--corpus", cfg.corpus_path, "corpus meta file (oracle mode)");
    search->add_flag("--oracle", cfg.oracle,
                     "exact MaxSim over the uncompressed corpus instead of the index");
    search->add_flag("--grid", cfg.grid, "emit one run per parameter grid cell");
    search->add_option("--grid-kappa-c", cfg.grid_kappa_c, "comma-separated kappa_c grid")
        ->capture_default_str();
    search->add_option("--grid-kappa-d", cfg.grid_kappa_d, "comma-separated kappa_d grid")
        ->capture_default_str();
    search->add_option("--grid-alpha", cfg.grid_alpha, "comma-separated alpha grid")
        ->capture_default_str();
    add_search_params(search, cfg);
    add_shared(search, cfg);

    CLI::App* eval = app.add_subcommand("eval", "score a run file against judgments");
    eval->add_option("--run", cfg.run_path, "run file to evaluate")->required();
    eval->add_option("--qrels", cfg.qrels_path, "relevance judgments TSV");
    eval->add_option("--oracle-run", cfg.oracle_path, "oracle run for recall reporting");
    eval->add_option("--metric", cfg.metric, "mrr@K, success@K or recall@K")
        ->capture_default_str();
    add_shared(eval, cfg);

    CLI::App* bench = app.add_subcommand("bench", "latency and layout benchmark");
    bench->add_option("--index", cfg.index_dir, "index directory")->required();
    bench->add_option("--queries", cfg.queries_path, "queries meta file")->required();
    bench->add_option("--warmup", cfg.warmup, "warmup passes over the query set")
        ->capture_default_str();
    bench->add_option("--reps", cfg.reps, "measured passes over the query set")
        ->capture_default_str();
    add_search_params(bench, cfg);
    add_shared(bench, cfg);

    CLI::App* stats = app.add_subcommand("stats", "token histogram report for a corpus");
    stats->add_option("--corpus", cfg.corpus_path, "corpus meta file")->required();
    stats->add_option("--output", cfg.output_path, "also write the report to this file");
    stats->add_flag("--renormalize", cfg.renormalize, "rescale input rows to unit norm");
    add_shared(stats, cfg);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (synth->parsed()) {
            cfg.subcommand = "synth";
            mvr::cmd_synth(cfg, std::cout);
        } else if (cluster->parsed()) {
            cfg.subcommand = "cluster";
            mvr::cmd_cluster(cfg, std::cout);
        } else if (build->parsed()) {
            cfg.subcommand = "build";
            mvr::cmd_build(cfg, std::cout);
        } else if (search->parsed()) {
            cfg.subcommand = "search";
            mvr::cmd_search(cfg, std::cout);
        } else if (eval->parsed()) {
            cfg.subcommand = "eval";
            mvr::cmd_eval(cfg, std::cout);
        } else if (bench->parsed()) {
            cfg.subcommand = "bench";
            mvr::cmd_bench(cfg, std::cout);
        } else if (stats->parsed()) {
            cfg.subcommand = "stats";
            mvr::cmd_stats(cfg, std::cout);
        }
    } catch (const mvr::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const mvr::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const mvr::InternalError& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
