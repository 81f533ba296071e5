#include "mvr/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "mvr/io.hpp"

namespace mvr {

std::vector<RunEntry>& Run::entries_for(const std::string& query_id) {
    for (auto& [qid, entries] : queries) {
        if (qid == query_id) return entries;
    }
    queries.emplace_back(query_id, std::vector<RunEntry>{});
    return queries.back().second;
}

const std::vector<RunEntry>* Run::find(const std::string& query_id) const {
    for (const auto& [qid, entries] : queries) {
        if (qid == query_id) return &entries;
    }
    return nullptr;
}

void write_run(const Run& run, const std::filesystem::path& path) {
    io::FileWriter w(path);
    char line[256];
    for (const auto& [qid, entries] : run.queries) {
        for (const RunEntry& e : entries) {
            const int n = std::snprintf(line, sizeof(line), "%s\t%s\t%u\t%.9g\n",
                                        qid.c_str(), e.doc_id.c_str(), e.rank, e.score);
            if (n < 0 || n >= static_cast<int>(sizeof(line))) {
                throw InternalError("write_run: line too long");
            }
            w.write_bytes(line, static_cast<std::size_t>(n));
        }
    }
    w.close();
}

Run read_run(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open run file " + path.string());
    Run run;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string qid, doc, rank_s, score_s;
        if (!std::getline(ss, qid, '\t') || !std::getline(ss, doc, '\t') ||
            !std::getline(ss, rank_s, '\t') || !std::getline(ss, score_s)) {
            throw FormatError("run file " + path.string() + " line " +
                              std::to_string(line_no) + ": expected 4 tab-separated fields");
        }
        RunEntry e;
        e.doc_id = doc;
        try {
            e.rank = static_cast<std::uint32_t>(std::stoul(rank_s));
            e.score = std::stof(score_s);
        } catch (const std::exception&) {
            throw FormatError("run file " + path.string() + " line " +
                              std::to_string(line_no) + ": bad rank or score");
        }
        run.entries_for(qid).push_back(std::move(e));
    }
    for (auto& [qid, entries] : run.queries) {
        std::sort(entries.begin(), entries.end(),
                  [](const RunEntry& a, const RunEntry& b) { return a.rank < b.rank; });
    }
    return run;
}

namespace {

const std::map<std::string, int>& judgments_for(const Qrels& qrels,
                                                const std::string& qid) {
    const auto it = qrels.judgments.find(qid);
    if (it == qrels.judgments.end()) {
        throw DataError("no judgments for query " + qid);
    }
    return it->second;
}

bool is_relevant(const std::map<std::string, int>& judged, const std::string& doc_id) {
    const auto it = judged.find(doc_id);
    return it != judged.end() && it->second >= 1;
}

}  // namespace

double mrr_at(const Run& run, const Qrels& qrels, std::uint32_t k) {
    if (run.queries.empty()) throw DataError("mrr: empty run");
    double sum = 0.0;
    for (const auto& [qid, entries] : run.queries) {
        const auto& judged = judgments_for(qrels, qid);
        for (const RunEntry& e : entries) {
            if (e.rank > k) break;
            if (is_relevant(judged, e.doc_id)) {
                sum += 1.0 / e.rank;
                break;
            }
        }
    }
    return sum / double(run.queries.size());
}

double success_at(const Run& run, const Qrels& qrels, std::uint32_t k) {
    if (run.queries.empty()) throw DataError("success: empty run");
    std::uint64_t hits = 0;
    for (const auto& [qid, entries] : run.queries) {
        const auto& judged = judgments_for(qrels, qid);
        for (const RunEntry& e : entries) {
            if (e.rank > k) break;
            if (is_relevant(judged, e.doc_id)) {
                ++hits;
                break;
            }
        }
    }
    return double(hits) / double(run.queries.size());
}

double recall_vs_oracle(const Run& run, const Run& oracle, std::uint32_t k) {
    if (run.queries.size() != oracle.queries.size()) {
        throw DataError("recall: run and oracle rank different query sets");
    }
    if (run.queries.empty()) throw DataError("recall: empty run");
    double sum = 0.0;
    for (const auto& [qid, entries] : run.queries) {
        const auto* oracle_entries = oracle.find(qid);
        if (!oracle_entries) {
            throw DataError("recall: query " + qid + " missing from the oracle run");
        }
        std::unordered_set<std::string> oracle_top;
        for (const RunEntry& e : *oracle_entries) {
            if (e.rank <= k) oracle_top.insert(e.doc_id);
        }
        if (oracle_top.empty()) {
            throw DataError("recall: oracle run has no top-" + std::to_string(k) +
                            " for query " + qid);
        }
        std::uint64_t hit = 0;
        for (const RunEntry& e : entries) {
            if (e.rank <= k && oracle_top.count(e.doc_id)) ++hit;
        }
        sum += double(hit) / double(oracle_top.size());
    }
    return sum / double(run.queries.size());
}

}  // namespace mvr
