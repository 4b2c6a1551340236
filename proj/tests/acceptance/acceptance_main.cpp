// Acceptance suite: one line per criterion, exit status 0 iff every gated
// criterion passes. Tolerances and runtime budgets are fixed here.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "dense_eval/contrastive.hpp"
#include "dense_eval/embed_store.hpp"
#include "dense_eval/metrics.hpp"
#include "dense_eval/msmarco_io.hpp"
#include "dense_eval/parallel.hpp"
#include "dense_eval/scorer.hpp"
#include "dense_eval/tas_sampler.hpp"
#include "test_util.hpp"

#ifndef DENSE_EVAL_FIXTURE_DIR
#error "DENSE_EVAL_FIXTURE_DIR must point at tests/fixtures"
#endif

namespace de = dense_eval;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  enum class Status { pass, fail, skip } status = Status::fail;
  std::string detail;
};

Outcome pass(std::string detail = {}) { return {Outcome::Status::pass, std::move(detail)}; }
Outcome fail(std::string detail) { return {Outcome::Status::fail, std::move(detail)}; }
Outcome skip(std::string detail) { return {Outcome::Status::skip, std::move(detail)}; }

std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

// ---------------------------------------------------------------------------

Outcome mrr_oracle_equivalence() {
  constexpr std::size_t kQueries = 500;
  constexpr std::size_t kDepth = 1500;
  constexpr std::size_t kCutoff = 100;
  std::mt19937_64 rng(1001);

  de::RunFile run;
  de::Qrels qrels;
  std::map<std::string, double> oracle;
  run.records.reserve(kQueries * kDepth);
  for (std::size_t q = 0; q < kQueries; ++q) {
    const std::string qid = std::to_string(200000 + q);
    // Half the queries plant within the cutoff, half anywhere in 1..1500.
    const std::size_t planted = 1 + rng() % (q % 2 ? kCutoff : kDepth);
    // Position p gets a strictly decreasing score, so the planted order is
    // the true ranking; records are shuffled below.
    for (std::size_t p = 1; p <= kDepth; ++p) {
      run.records.push_back({qid, qid + "-" + std::to_string(p), p,
                             static_cast<double>(kDepth - p) + 0.5, "acc"});
    }
    qrels.judgments[qid][qid + "-" + std::to_string(planted)] = 1;
    // Linear scan over the planted order.
    double rr = 0.0;
    for (std::size_t p = 1; p <= std::min(kDepth, kCutoff); ++p) {
      if (p == planted) {
        rr = 1.0 / static_cast<double>(p);
        break;
      }
    }
    oracle[qid] = rr;
  }
  std::shuffle(run.records.begin(), run.records.end(), rng);

  const auto report = de::evaluate(run, qrels, kCutoff);
  if (report.num_queries_evaluated != kQueries) return fail("wrong number of evaluated queries");
  for (const auto& [qid, rr] : oracle) {
    const double got = report.per_query_rr.at(qid);
    if (std::memcmp(&got, &rr, sizeof got) != 0) {
      return fail("query " + qid + ": " + fmt(got, 17) + " vs oracle " + fmt(rr, 17));
    }
  }
  double sum = 0.0;
  for (const auto& [qid, rr] : oracle) sum += rr;
  const double mean = sum / kQueries;
  const double diff = std::abs(report.mrr() - mean);
  if (diff > 1e-12) return fail("mean differs by " + fmt(diff));
  return pass("mrr@100=" + fmt(mean) + ", per-query bitwise equal, |mean diff|=" + fmt(diff));
}

// ---------------------------------------------------------------------------

struct TrecExpected {
  std::size_t num_q = 0;
  double depth100 = 0;
  double full = 0;
  std::map<std::string, std::pair<double, double>> per_query;
};

TrecExpected read_expected(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing " + path.string());
  TrecExpected e;
  std::string key;
  while (in >> key) {
    if (key[0] == '#') {
      std::getline(in, key);
    } else if (key == "num_q") {
      in >> e.num_q;
    } else if (key == "recip_rank_depth100") {
      in >> e.depth100;
    } else if (key == "recip_rank_full") {
      in >> e.full;
    } else if (key == "query") {
      std::string qid;
      double cut = 0, full = 0;
      in >> qid >> cut >> full;
      e.per_query[qid] = {cut, full};
    } else {
      throw std::runtime_error("unexpected key " + key);
    }
  }
  return e;
}

// Parses "metric=NAME value=V" and "query=Q recip_rank=V ..." lines.
void parse_machine(const std::string& text, std::map<std::string, double>& metrics,
                   std::map<std::string, double>& per_query) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string first, second;
    fields >> first >> second;
    if (first.rfind("metric=", 0) == 0) {
      metrics[first.substr(7)] = std::stod(second.substr(6));
    } else if (first.rfind("query=", 0) == 0) {
      per_query[first.substr(6)] = std::stod(second.substr(11));
    }
  }
}

Outcome trec_eval_parity() {
  const fs::path dir = fs::path(DENSE_EVAL_FIXTURE_DIR) / "trec_parity";
  const auto expected = read_expected(dir / "expected.txt");
  const std::string run_path = (dir / "run.txt").string();
  const std::string qrels_path = (dir / "qrels.txt").string();

  std::ostringstream out, err;
  int code = de::cli::run({"eval", "--run", run_path, "--qrels", qrels_path, "--k", "100",
                           "--format", "machine"},
                          out, err);
  if (code != 0) return fail("eval exited " + std::to_string(code) + ": " + err.str());
  std::map<std::string, double> metrics, per_query;
  parse_machine(out.str(), metrics, per_query);

  const double got = metrics.at("mrr@100");
  const double diff = std::abs(got - expected.depth100);
  if (diff > 1e-4) {
    return fail("mrr@100 " + fmt(got) + " vs trec_eval " + fmt(expected.depth100));
  }
  if (per_query.size() != expected.num_q) {
    return fail("evaluated " + std::to_string(per_query.size()) + " queries, trec_eval " +
                std::to_string(expected.num_q));
  }
  for (const auto& [qid, values] : expected.per_query) {
    if (std::abs(per_query.at(qid) - values.first) > 1e-4) {
      return fail("query " + qid + ": " + fmt(per_query.at(qid)) + " vs " + fmt(values.first));
    }
  }

  // The 4-decimal text line must print what trec_eval prints.
  std::ostringstream text;
  code = de::cli::run({"eval", "--run", run_path, "--qrels", qrels_path, "--k", "100"}, text, err);
  char want[32];
  std::snprintf(want, sizeof want, "mrr@100\t%.4f\n", expected.depth100);
  if (code != 0 || text.str().find(want) == std::string::npos) {
    return fail("text report does not contain " + std::string(want));
  }

  // Without truncation the value must match plain recip_rank on the whole run.
  std::ostringstream full_out;
  de::cli::run({"eval", "--run", run_path, "--qrels", qrels_path, "--k", "1000000", "--format",
                "machine"},
               full_out, err);
  std::map<std::string, double> full_metrics, full_pq;
  parse_machine(full_out.str(), full_metrics, full_pq);
  const double full_diff = std::abs(full_metrics.at("mrr@1000000") - expected.full);
  if (full_diff > 1e-4) return fail("untruncated recip_rank differs by " + fmt(full_diff));

  return pass("mrr@100=" + fmt(got, 8) + " trec_eval=" + fmt(expected.depth100, 8) +
              ", |diff|=" + fmt(diff) + ", " + std::to_string(expected.num_q) + " queries");
}

// ---------------------------------------------------------------------------

Outcome scoring_soundness() {
  constexpr std::size_t kQueries = 100, kCands = 1000, kDim = 128, kDocs = 20000, kTopK = 100;
  de::testing::TempDir dir;
  std::mt19937_64 rng(3003);
  const auto qids = de::testing::make_ids("q", kQueries);
  const auto dids = de::testing::make_ids("d", kDocs);
  const auto qvecs = de::testing::random_vectors(rng, kQueries, kDim);
  const auto dvecs = de::testing::random_vectors(rng, kDocs, kDim);
  de::write_store(qids, qvecs, dir / "q.bin");
  de::write_store(dids, dvecs, dir / "d.bin");
  const auto queries = de::open_store(dir / "q.bin");
  const auto docs = de::open_store(dir / "d.bin");

  de::CandidateSet cs;
  std::vector<std::size_t> pool(kDocs);
  for (std::size_t i = 0; i < kDocs; ++i) pool[i] = i;
  for (const auto& q : qids) {
    std::shuffle(pool.begin(), pool.end(), rng);
    auto& list = cs.candidates[q];
    for (std::size_t i = 0; i < kCands; ++i) list.push_back(dids[pool[i]]);
  }

  de::RerankOptions opt;
  opt.k = kTopK;
  for (std::size_t qi = 0; qi < kQueries; ++qi) {
    const auto& cands = cs.candidates.at(qids[qi]);
    const auto list = de::rerank_query(qids[qi], qvecs[qi], cands, docs, opt);
    // Oracle: score everything from the in-memory vectors, sort fully, truncate.
    std::vector<de::ScoredDoc> all;
    for (const auto& d : cands) {
      const auto& v = dvecs[std::stoul(d.substr(1))];
      double s = 0.0;
      for (std::size_t j = 0; j < kDim; ++j) s += double{qvecs[qi][j]} * double{v[j]};
      all.push_back({d, s});
    }
    std::sort(all.begin(), all.end(), [](const de::ScoredDoc& a, const de::ScoredDoc& b) {
      return a.score != b.score ? a.score > b.score : a.doc_id > b.doc_id;
    });
    all.resize(kTopK);
    if (list.entries != all) return fail("query " + qids[qi] + " differs from full-sort oracle");
  }

  std::string reference;
  for (std::size_t threads : {1u, 2u, 8u}) {
    opt.threads = threads;
    const auto result = de::rerank_all(queries, cs, docs, opt);
    std::ostringstream bytes;
    de::write_run(result.lists, "acc", bytes);
    for (const auto& l : result.lists) {
      for (const auto& e : l.entries) bytes.write(reinterpret_cast<const char*>(&e.score), sizeof e.score);
    }
    if (threads == 1) {
      reference = bytes.str();
    } else if (bytes.str() != reference) {
      return fail("output with " + std::to_string(threads) + " threads differs from 1 thread");
    }
  }
  return pass("100 queries match oracle; threads {1,2,8} byte-identical");
}

// ---------------------------------------------------------------------------

Outcome store_round_trip() {
  constexpr std::size_t kRows = 10000, kDim = 256;
  de::testing::TempDir dir;
  std::mt19937_64 rng(4004);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < kRows; ++i) ids.push_back("passage-" + std::to_string(rng() % 100000000) + "-" + std::to_string(i));
  std::vector<float> matrix(kRows * kDim);
  std::uniform_real_distribution<float> dist(-10.0f, 10.0f);
  for (auto& x : matrix) x = dist(rng);
  de::write_store(ids, matrix, kDim, dir / "s.bin");
  const auto store = de::open_store(dir / "s.bin");
  if (store.ids() != ids) return fail("ids differ");
  if (store.dim() != kDim || store.count() != kRows) return fail("shape differs");
  std::vector<float> row(kDim);
  for (std::size_t r = 0; r < kRows; ++r) {
    store.copy_row(store.find(ids[r]), row);
    if (std::memcmp(row.data(), matrix.data() + r * kDim, kDim * sizeof(float)) != 0) {
      return fail("row " + std::to_string(r) + " not bit-exact");
    }
  }
  return pass("10000 x 256 bit-exact");
}

// ---------------------------------------------------------------------------

Outcome tas_properties() {
  constexpr std::size_t kTopics = 50, kPerBlob = 40, kDim = 16, kBatches = 10000;
  const de::BatchSpec spec{32, 4};
  std::mt19937_64 rng(5005);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<std::string> ids;
  std::vector<float> matrix;
  for (std::size_t t = 0; t < kTopics; ++t) {
    std::vector<double> centre(kDim);
    for (auto& c : centre) c = 20.0 * noise(rng);
    for (std::size_t i = 0; i < kPerBlob; ++i) {
      ids.push_back("t" + std::to_string(t) + "q" + std::to_string(i));
      for (std::size_t j = 0; j < kDim; ++j) matrix.push_back(static_cast<float>(centre[j] + noise(rng)));
    }
  }

  // Inertia must be non-increasing on every run.
  de::TopicClustering clustering;
  for (std::uint64_t seed : {11u, 12u, 13u, 14u, 15u}) {
    de::KMeansOptions opt;
    opt.k = kTopics;
    opt.seed = seed;
    opt.tol = 0.0;
    opt.max_iters = 300;
    auto result = de::kmeans(ids, matrix, kDim, opt);
    for (std::size_t i = 1; i < result.inertia_history.size(); ++i) {
      if (result.inertia_history[i] > result.inertia_history[i - 1]) {
        return fail("inertia increased at iteration " + std::to_string(i) + " (seed " +
                    std::to_string(seed) + ")");
      }
    }
    if (seed == 11) clustering = std::move(result);
  }

  std::map<std::string, std::uint32_t> topic_of;
  for (std::size_t i = 0; i < clustering.query_ids.size(); ++i) {
    topic_of[clustering.query_ids[i]] = clustering.topic_of[i];
  }
  std::size_t eligible = 0;
  for (const auto& m : clustering.members()) eligible += m.size() >= spec.per_topic() ? 1 : 0;
  if (eligible < spec.topics_per_batch) return fail("too few eligible topics");

  std::vector<double> picks(kTopics, 0.0);
  for (std::size_t b = 0; b < kBatches; ++b) {
    const auto batch = de::compose_batch(clustering, spec, de::batch_seed(777, b));
    const std::set<std::uint32_t> distinct(batch.topic_ids.begin(), batch.topic_ids.end());
    if (batch.topic_ids.size() != 4 || distinct.size() != 4) return fail("batch without 4 distinct topics");
    if (batch.query_ids.size() != 32) return fail("batch size != 32");
    std::set<std::string> seen;
    for (std::size_t s = 0; s < 4; ++s) {
      for (std::size_t j = 0; j < 8; ++j) {
        const auto& q = batch.query_ids[s * 8 + j];
        if (topic_of.at(q) != batch.topic_ids[s]) return fail("purity violated in batch " + std::to_string(b));
        if (!seen.insert(q).second) return fail("duplicate query in batch " + std::to_string(b));
      }
    }
    for (auto t : batch.topic_ids) picks[t] += 1;
  }

  const double p = static_cast<double>(spec.topics_per_batch) / static_cast<double>(eligible);
  const double mean = kBatches * p;
  const double sigma = std::sqrt(kBatches * p * (1 - p));
  double worst = 0.0;
  for (std::size_t t = 0; t < kTopics; ++t) {
    if (clustering.members()[t].size() < spec.per_topic()) {
      if (picks[t] != 0) return fail("ineligible topic selected");
      continue;
    }
    worst = std::max(worst, std::abs(picks[t] - mean) / sigma);
  }
  if (worst > 3.0) return fail("topic frequency " + fmt(worst, 3) + " sigma from uniform");
  return pass(std::to_string(eligible) + " eligible topics, max deviation " + fmt(worst, 3) +
              " sigma; inertia monotone on 5 runs");
}

// ---------------------------------------------------------------------------

Outcome contrastive_closed_forms() {
  double worst_uniform = 0.0;
  for (std::size_t n : {1u, 7u, 63u}) {
    for (double s : {-2.0, 0.0, 1.5}) {
      const std::vector<double> negs(n, s);
      worst_uniform = std::max(worst_uniform,
                               std::abs(de::info_nce_from_similarities(s, negs) - std::log(n + 1.0)));
    }
  }
  if (worst_uniform > 1e-12) return fail("uniform case off by " + fmt(worst_uniform));

  std::mt19937_64 rng(6006);
  std::uniform_real_distribution<double> sim(-5.0, 5.0);
  double worst_shift = 0.0;
  for (int t = 0; t < 200; ++t) {
    const double pos = sim(rng);
    std::vector<double> negs(1 + rng() % 63);
    for (auto& s : negs) s = sim(rng);
    const double base = de::info_nce_from_similarities(pos, negs);
    for (double c : {-1e3, -10.0, 0.1, 10.0, 1e3}) {
      auto shifted = negs;
      for (auto& s : shifted) s += c;
      worst_shift = std::max(worst_shift, std::abs(de::info_nce_from_similarities(pos + c, shifted) - base));
    }
  }
  if (worst_shift > 1e-9) return fail("shift invariance off by " + fmt(worst_shift));

  double worst_naive = 0.0;
  for (int t = 0; t < 1000; ++t) {
    de::ContrastiveInstance inst;
    inst.metric = t % 2 ? de::Metric::cosine : de::Metric::dot;
    inst.query = de::testing::random_vector(rng, 16);
    inst.positive = de::testing::random_vector(rng, 16);
    for (int i = 0; i < 7; ++i) inst.negatives.push_back(de::testing::random_vector(rng, 16));
    const double pos = std::exp(de::similarity(inst.metric, inst.query, inst.positive));
    double denom = pos;
    for (const auto& n : inst.negatives) denom += std::exp(de::similarity(inst.metric, inst.query, n));
    worst_naive = std::max(worst_naive, std::abs(de::info_nce_loss(inst) + std::log(pos / denom)));
  }
  if (worst_naive > 1e-9) return fail("stabilized vs naive off by " + fmt(worst_naive));
  return pass("uniform " + fmt(worst_uniform, 3) + ", shift " + fmt(worst_shift, 3) + ", naive " +
              fmt(worst_naive, 3));
}

// ---------------------------------------------------------------------------

// Full dev-set reproduction. Needs exported stores and the MSMARCO files in
// $DENSE_EVAL_MSMARCO_DIR:
//   top1000.dev.tsv, qrels.dev.tsv,
//   <model>/queries.bin, <model>/docs.bin
Outcome dev_set_reproduction() {
  const char* root = std::getenv("DENSE_EVAL_MSMARCO_DIR");
  if (root == nullptr || *root == '\0') {
    return skip("set DENSE_EVAL_MSMARCO_DIR to run the full dev-set reproduction");
  }
  const fs::path dir(root);
  const std::vector<std::pair<std::string, double>> targets{
      {"msmarco-bert-base-dot-v5", 37.56}, {"msmarco-distilbert-dot-v5", 36.86}};
  const auto candidates = de::parse_candidates(dir / "top1000.dev.tsv");
  const auto qrels = de::parse_qrels(dir / "qrels.dev.tsv");
  std::string detail;
  bool ok = true;
  for (const auto& [model, target] : targets) {
    const auto queries = de::open_store(dir / model / "queries.bin");
    const auto docs = de::open_store(dir / model / "docs.bin");
    de::RerankOptions opt;
    opt.k = 1000;
    opt.threads = de::default_thread_count();
    const auto result = de::rerank_all(queries, candidates, docs, opt);
    std::stringstream run_text;
    de::write_run(result.lists, "dense", run_text);
    const auto report = de::evaluate(de::parse_run(run_text), qrels, 100);
    const double pct = 100.0 * report.mrr();
    ok = ok && std::abs(pct - target) <= 0.5;
    detail += model + "=" + fmt(pct, 4) + " (target " + fmt(target, 4) + ") ";
  }
  return ok ? pass(detail) : fail(detail);
}

struct Criterion {
  const char* name;
  double budget_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"MRR oracle equivalence", 5.0, mrr_oracle_equivalence},
      {"trec_eval parity", 10.0, trec_eval_parity},
      {"Scoring soundness", 30.0, scoring_soundness},
      {"Store round-trip", 5.0, store_round_trip},
      {"TAS properties", 60.0, tas_properties},
      {"Contrastive closed forms", 5.0, contrastive_closed_forms},
      {"Dev-set MRR reproduction (optional, full scale)", 0.0, dev_set_reproduction},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome = fail(std::string("exception: ") + e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (outcome.status == Outcome::Status::pass && c.budget_seconds > 0 && secs > c.budget_seconds) {
      outcome = fail("took " + fmt(secs, 3) + " s, budget " + fmt(c.budget_seconds, 3) + " s");
    }
    const char* tag = outcome.status == Outcome::Status::pass   ? "PASS"
                      : outcome.status == Outcome::Status::skip ? "SKIP"
                                                                : "FAIL";
    failures += outcome.status == Outcome::Status::fail ? 1 : 0;
    std::cout << "[" << tag << "] " << c.name << " (" << fmt(secs, 3) << " s): " << outcome.detail
              << std::endl;
  }
  std::cout << (failures == 0 ? "acceptance: all gated criteria passed" : "acceptance: FAILED")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
