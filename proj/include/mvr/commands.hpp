#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "mvr/allocation.hpp"
#include "mvr/kmeans.hpp"
#include "mvr/synth.hpp"

namespace mvr {

// Flat bag of every knob across subcommands; each command validates and
// consumes only its own slice, echoes its effective slice as "# key = value"
// lines, and leaves failure reporting to the error hierarchy.
struct RunConfig {
    std::string subcommand;

    // paths
    std::filesystem::path corpus_path;
    std::filesystem::path queries_path;
    std::filesystem::path qrels_path;
    std::filesystem::path index_dir;
    std::filesystem::path codebook_path;
    std::filesystem::path assignment_path;
    std::filesystem::path output_path;   // run file; directory in grid mode
    std::filesystem::path run_path;      // eval input
    std::filesystem::path oracle_path;   // oracle run for recall reporting

    // shared
    std::uint64_t seed = 0;
    std::uint32_t threads = 1;  // 0 picks the hardware count
    bool renormalize = false;
    std::uint32_t max_query_len = 32;

    // clustering
    std::uint64_t kappa = 1024;  // total centroid budget
    std::uint64_t mu = 128;
    std::uint64_t tau = 256;
    std::uint32_t epsilon = 4;
    std::uint64_t theta = 39;
    std::uint32_t iterations = 10;
    std::uint64_t stats_sample_cap = 1ull << 18;
    bool baseline = false;  // also run flat k-means for comparison
    std::uint64_t baseline_sample_cap = 10'000'000;

    // index build
    std::uint32_t pq_m = 8;
    std::uint32_t pq_bits = 8;
    std::uint32_t pq_iterations = 10;
    std::uint64_t pq_train_cap = 1u << 20;
    std::uint32_t graph_m = 32;
    std::uint32_t graph_ef_construction = 200;

    // search
    std::uint32_t kappa_c = 40;
    std::uint32_t kappa_d = 1000;
    float alpha = 0.4f;
    std::uint32_t ef_search = 0;  // 0 derives 3/2 * kappa_c
    std::uint32_t k = 10;
    bool exhaustive = false;  // linear centroid scan instead of the graph
    bool oracle = false;      // exact MaxSim over the uncompressed corpus
    bool grid = false;
    std::string grid_kappa_c = "15,20,40,80,100,120";
    std::string grid_kappa_d = "250,500,1000,2000,4000";
    std::string grid_alpha = "0.35,0.4,0.45,0.5";

    // eval
    std::string metric = "mrr@10";

    // bench
    std::uint32_t warmup = 3;
    std::uint32_t reps = 10;

    // synth (seed comes from the shared seed)
    SynthParams synth;
};

struct ClusterOutcome {
    AllocationPlan plan;
    double bound = 0.0;  // speedup lower bound; NaN when undefined
    DistOpCounter train_ops = 0;
    DistOpCounter assign_ops = 0;
    double train_seconds = 0.0;
    double assign_seconds = 0.0;
    // Filled only when the baseline comparison runs.
    DistOpCounter baseline_train_ops = 0;
    DistOpCounter baseline_assign_ops = 0;
    double baseline_train_seconds = 0.0;
    double baseline_assign_seconds = 0.0;
    double measured_ratio = 0.0;  // baseline total ops / token-aware total ops
};

struct PhaseStats {
    double mean_us = 0.0;
    double median_us = 0.0;
    double p99_us = 0.0;
};

struct BenchReport {
    std::uint32_t warmup = 0;
    std::uint32_t reps = 0;
    std::uint64_t queries = 0;
    PhaseStats gather;
    PhaseStats prune;
    PhaseStats refine;
    PhaseStats total;
    double mean_gather_dot_ops = 0.0;
    double mean_refine_dot_ops = 0.0;
    double mean_table_lookup_ops = 0.0;
    double mean_query_len = 0.0;
    // Residual-scoring wall time of the per-query-token table layout over
    // the three-level layout; > 1 means the three-level layout is faster.
    double layout_ratio = 0.0;
};

void cmd_synth(const RunConfig& cfg, std::ostream& out);
ClusterOutcome cmd_cluster(const RunConfig& cfg, std::ostream& out);
void cmd_build(const RunConfig& cfg, std::ostream& out);
void cmd_search(const RunConfig& cfg, std::ostream& out);
double cmd_eval(const RunConfig& cfg, std::ostream& out);
BenchReport cmd_bench(const RunConfig& cfg, std::ostream& out);
void cmd_stats(const RunConfig& cfg, std::ostream& out);

}  // namespace mvr
