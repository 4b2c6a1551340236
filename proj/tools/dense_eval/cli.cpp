#include "cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>

#include "dense_eval/embed_store.hpp"
#include "dense_eval/error.hpp"
#include "dense_eval/metrics.hpp"
#include "dense_eval/msmarco_io.hpp"
#include "dense_eval/parallel.hpp"
#include "dense_eval/scorer.hpp"
#include "dense_eval/selftest.hpp"
#include "dense_eval/tas_sampler.hpp"

namespace dense_eval::cli {

namespace {

namespace fs = std::filesystem;

// Reads newline-terminated lines; a trailing '\r' is dropped.
std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

std::vector<float> parse_vector(const std::string& line, const std::string& source,
                                std::size_t lineno) {
  std::vector<float> values;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
    if (pos >= line.size()) break;
    std::size_t end = pos;
    while (end < line.size() && line[end] != ' ' && line[end] != '\t') ++end;
    float v = 0.0f;
    const char* first = line.data() + pos;
    const char* last = line.data() + end;
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) {
      throw ParseError(source, lineno, "'" + line.substr(pos, end - pos) + "' is not a float");
    }
    values.push_back(v);
    pos = end;
  }
  return values;
}

std::string shortest(float value) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

std::size_t resolve_threads(std::optional<std::size_t> flag) {
  if (flag) {
    if (*flag == 0) throw UsageError("--threads must be >= 1");
    return *flag;
  }
  if (const char* env = std::getenv("DENSE_EVAL_THREADS"); env != nullptr && *env != '\0') {
    std::size_t n = 0;
    const char* last = env + std::char_traits<char>::length(env);
    auto [ptr, ec] = std::from_chars(env, last, n);
    if (ec != std::errc() || ptr != last || n == 0) {
      throw UsageError(std::string("DENSE_EVAL_THREADS='") + env + "' is not a positive integer");
    }
    return n;
  }
  return default_thread_count();
}

struct ImportArgs {
  fs::path ids, vectors, out;
};

int cmd_import(const ImportArgs& a, std::ostream& out) {
  const auto ids = read_lines(a.ids);
  const auto lines = read_lines(a.vectors);
  if (ids.size() != lines.size()) {
    throw DataError(std::to_string(ids.size()) + " ids but " + std::to_string(lines.size()) +
                    " vector lines");
  }
  std::vector<std::vector<float>> vectors;
  vectors.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (ids[i].empty()) throw ParseError(a.ids.string(), i + 1, "empty id");
    vectors.push_back(parse_vector(lines[i], a.vectors.string(), i + 1));
  }
  write_store(ids, vectors, a.out);
  out << "rows\t" << ids.size() << "\ndim\t" << vectors.front().size() << '\n';
  return kOk;
}

struct DumpArgs {
  fs::path store, ids_out, vectors_out;
};

int cmd_dump(const DumpArgs& a, std::ostream& out) {
  const auto store = open_store(a.store);
  std::ofstream ids(a.ids_out, std::ios::binary | std::ios::trunc);
  std::ofstream vecs(a.vectors_out, std::ios::binary | std::ios::trunc);
  if (!ids || !vecs) throw IoError("cannot create dump outputs");
  std::vector<float> row(store.dim());
  for (std::size_t r = 0; r < store.count(); ++r) {
    ids << store.ids()[r] << '\n';
    store.copy_row(r, row);
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) vecs << ' ';
      vecs << shortest(row[j]);
    }
    vecs << '\n';
  }
  ids.flush();
  vecs.flush();
  if (!ids || !vecs) throw IoError("write failed for dump outputs");
  out << "rows\t" << store.count() << "\ndim\t" << store.dim() << '\n';
  return kOk;
}

struct RerankArgs {
  fs::path queries, docs, candidates, out;
  std::string metric = "dot";
  std::size_t k = 1000;
  std::string tag = "dense";
  std::string missing = "fail";
  std::optional<std::size_t> threads;
};

int cmd_rerank(const RerankArgs& a, std::ostream& out) {
  RerankOptions options;
  options.metric = parse_metric(a.metric);
  options.missing = parse_missing_policy(a.missing);
  options.k = a.k;
  options.threads = resolve_threads(a.threads);
  if (options.k == 0) throw UsageError("--k must be >= 1");

  const auto queries = open_store(a.queries);
  const auto docs = open_store(a.docs);
  const auto candidates = parse_candidates(a.candidates);
  const auto result = rerank_all(queries, candidates, docs, options);
  write_run(result.lists, a.tag, a.out);

  std::size_t written = 0;
  for (const auto& list : result.lists) written += list.entries.size();
  out << "queries\t" << result.lists.size() << '\n'
      << "run_lines\t" << written << '\n'
      << "skipped_candidates\t" << result.skipped_candidates << '\n'
      << "duplicate_candidate_lines\t" << candidates.duplicates_dropped << '\n';
  return kOk;
}

struct EvalArgs {
  fs::path run, qrels;
  std::size_t k = 100;
  std::string format = "text";
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  if (a.k == 0) throw UsageError("--k must be >= 1");
  const auto run = parse_run(a.run);
  const auto qrels = parse_qrels(a.qrels);
  const auto report = evaluate(run, qrels, a.k);
  if (a.format == "machine") {
    write_machine_report(report, out);
  } else {
    write_text_report(report, out);
  }
  return kOk;
}

struct SampleArgs {
  fs::path queries, out, clustering_out;
  std::size_t k = 0, b = 0, n = 0, batches = 1;
  std::uint64_t seed = 0;
  std::size_t max_iters = 100;
  double tol = 1e-6;
  bool normalize = false;
  std::string policy = "strict";
  std::optional<std::size_t> threads;
};

int cmd_sample(const SampleArgs& a, std::ostream& out) {
  const TopicPolicy policy = parse_topic_policy(a.policy);
  if (a.k == 0) throw UsageError("--k must be >= 1");
  if (a.n == 0 || a.b == 0) throw UsageError("--b and --n must be >= 1");
  if (a.n > a.k) {
    throw UsageError("--n (" + std::to_string(a.n) + ") must not exceed --k (" +
                     std::to_string(a.k) + ")");
  }
  if (a.b < a.n) throw UsageError("--b must be >= --n");

  const auto queries = open_store(a.queries);
  KMeansOptions options;
  options.k = a.k;
  options.seed = a.seed;
  options.max_iters = a.max_iters;
  options.tol = a.tol;
  options.normalize = a.normalize;
  options.threads = resolve_threads(a.threads);
  const auto clustering = kmeans(queries, options);

  const fs::path clustering_path =
      a.clustering_out.empty() ? fs::path(a.out.string() + ".clustering") : a.clustering_out;
  {
    std::ofstream cf(clustering_path, std::ios::binary | std::ios::trunc);
    if (!cf) throw IoError("cannot create '" + clustering_path.string() + "'");
    write_clustering(clustering, cf);
    if (!cf.flush()) throw IoError("write failed for '" + clustering_path.string() + "'");
  }

  std::ofstream bf(a.out, std::ios::binary | std::ios::trunc);
  if (!bf) throw IoError("cannot create '" + a.out.string() + "'");
  const BatchSpec spec{a.b, a.n};
  std::size_t relaxed = 0;
  std::size_t shortfall = 0;
  for (std::size_t i = 0; i < a.batches; ++i) {
    const Batch batch = compose_batch(clustering, spec, batch_seed(a.seed, i), policy);
    relaxed += batch.relaxed ? 1 : 0;
    shortfall = std::max(shortfall, batch.shortfall);
    write_batch(i, batch, bf);
  }
  if (!bf.flush()) throw IoError("write failed for '" + a.out.string() + "'");

  out << "topics\t" << clustering.k << '\n'
      << "iterations\t" << clustering.iterations_run << '\n'
      << "inertia\t" << clustering.inertia << '\n'
      << "batches\t" << a.batches << '\n'
      << "queries_per_topic\t" << spec.per_topic() << '\n'
      << "max_shortfall\t" << shortfall << '\n'
      << "relaxed_batches\t" << relaxed << '\n'
      << "clustering\t" << clustering_path.string() << '\n';
  return kOk;
}

int cmd_selftest(std::ostream& out) {
  bool ok = true;
  for (const auto& check : run_selftest()) {
    out << (check.passed ? "PASS " : "FAIL ") << check.name;
    if (!check.passed) out << ": " << check.detail;
    out << '\n';
    ok = ok && check.passed;
  }
  return ok ? kOk : kInternal;
}

}  // namespace

int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dense retrieval reranking and evaluation toolkit", "dense_eval"};
  app.require_subcommand(1);

  ImportArgs import_args;
  auto* import_cmd = app.add_subcommand("import", "Build an embedding store from text files");
  import_cmd->add_option("--ids", import_args.ids, "One id per line")->required();
  import_cmd->add_option("--vectors", import_args.vectors,
                         "One vector per line, whitespace-separated floats")->required();
  import_cmd->add_option("--out", import_args.out, "Output store")->required();

  DumpArgs dump_args;
  auto* dump_cmd = app.add_subcommand("dump", "Export a store back to id and vector text files");
  dump_cmd->add_option("--store", dump_args.store)->required();
  dump_cmd->add_option("--ids-out", dump_args.ids_out)->required();
  dump_cmd->add_option("--vectors-out", dump_args.vectors_out)->required();

  RerankArgs rerank_args;
  auto* rerank_cmd = app.add_subcommand("rerank", "Rerank first-stage candidates by embedding similarity");
  rerank_cmd->add_option("--queries", rerank_args.queries, "Query embedding store")->required();
  rerank_cmd->add_option("--docs", rerank_args.docs, "Document embedding store")->required();
  rerank_cmd->add_option("--candidates", rerank_args.candidates, "top-1000 candidate file")->required();
  rerank_cmd->add_option("--metric", rerank_args.metric, "dot|cosine")->capture_default_str();
  rerank_cmd->add_option("--k", rerank_args.k, "Documents kept per query")->capture_default_str();
  rerank_cmd->add_option("--tag", rerank_args.tag, "Run tag")->capture_default_str();
  rerank_cmd->add_option("--missing", rerank_args.missing,
                         "Missing document embedding policy: fail|skip")->capture_default_str();
  rerank_cmd->add_option("--threads", rerank_args.threads, "Worker threads");
  rerank_cmd->add_option("--out", rerank_args.out, "Output run file")->required();

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a run against qrels");
  eval_cmd->add_option("--run", eval_args.run)->required();
  eval_cmd->add_option("--qrels", eval_args.qrels)->required();
  eval_cmd->add_option("--k", eval_args.k, "Cutoff depth")->capture_default_str();
  eval_cmd->add_option("--format", eval_args.format, "text|machine")
      ->check(CLI::IsMember({"text", "machine"}))
      ->capture_default_str();

  SampleArgs sample_args;
  auto* sample_cmd = app.add_subcommand("sample", "Cluster queries into topics and compose TAS batches");
  sample_cmd->add_option("--queries", sample_args.queries, "Query embedding store")->required();
  sample_cmd->add_option("--k", sample_args.k, "Number of topics")->required();
  sample_cmd->add_option("--b", sample_args.b, "Batch size")->required();
  sample_cmd->add_option("--n", sample_args.n, "Topics per batch")->required();
  sample_cmd->add_option("--batches", sample_args.batches, "Batches to compose")->capture_default_str();
  sample_cmd->add_option("--seed", sample_args.seed, "Seed for k-means and batch draws")->capture_default_str();
  sample_cmd->add_option("--max-iters", sample_args.max_iters)->capture_default_str();
  sample_cmd->add_option("--tol", sample_args.tol)->capture_default_str();
  sample_cmd->add_flag("--normalize", sample_args.normalize, "L2-normalize queries before clustering");
  sample_cmd->add_option("--policy", sample_args.policy, "strict|relaxed")->capture_default_str();
  sample_cmd->add_option("--threads", sample_args.threads, "Worker threads");
  sample_cmd->add_option("--out", sample_args.out, "Batch output file")->required();
  sample_cmd->add_option("--clustering-out", sample_args.clustering_out,
                         "Clustering output (default: <out>.clustering)");

  auto* selftest_cmd = app.add_subcommand("selftest", "Run built-in invariant checks");

  try {
    std::reverse(args.begin(), args.end());
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*import_cmd) return cmd_import(import_args, out);
    if (*dump_cmd) return cmd_dump(dump_args, out);
    if (*rerank_cmd) return cmd_rerank(rerank_args, out);
    if (*eval_cmd) return cmd_eval(eval_args, out);
    if (*sample_cmd) return cmd_sample(sample_args, out);
    if (*selftest_cmd) return cmd_selftest(out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kUsage;
}

}  // namespace dense_eval::cli
