#include "dense_eval/msmarco_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "dense_eval/error.hpp"

namespace dense_eval {

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return in;
}

// Reads lines, strips a trailing '\r', skips blank lines.
template <typename Fn>
void for_each_line(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    fn(std::string_view(line), lineno);
  }
  if (in.bad()) throw IoError("read error");
}

std::vector<std::string_view> split_whitespace(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) fields.push_back(line.substr(start, i - start));
  }
  return fields;
}

template <typename T>
bool parse_number(std::string_view text, T& value) {
  if (text.empty()) return false;
  const char* first = text.data();
  if constexpr (std::is_integral_v<T>) {
    if (*first == '+') ++first;
  }
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  return ec == std::errc() && ptr == last;
}

}  // namespace

Qrels parse_qrels(std::istream& in, std::string_view source) {
  Qrels qrels;
  const std::string src(source);
  for_each_line(in, [&](std::string_view line, std::size_t lineno) {
    const auto fields = split_whitespace(line);
    if (fields.size() != 4) {
      throw ParseError(src, lineno,
                       "expected 4 fields (qid iter docid grade), got " +
                           std::to_string(fields.size()));
    }
    int grade = 0;
    if (!parse_number(fields[3], grade)) {
      throw ParseError(src, lineno, "grade '" + std::string(fields[3]) + "' is not an integer");
    }
    if (grade < 0) throw ParseError(src, lineno, "negative grade " + std::to_string(grade));
    auto& docs = qrels.judgments[std::string(fields[0])];
    auto [it, inserted] = docs.emplace(std::string(fields[2]), grade);
    if (!inserted && it->second != grade) {
      throw ParseError(src, lineno,
                       "conflicting grades for (" + std::string(fields[0]) + ", " +
                           std::string(fields[2]) + "): " + std::to_string(it->second) +
                           " vs " + std::to_string(grade));
    }
  });
  return qrels;
}

Qrels parse_qrels(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_qrels(in, path.string());
}

CandidateSet parse_candidates(std::istream& in, std::string_view source) {
  CandidateSet set;
  std::unordered_map<std::string, std::unordered_set<std::string>> seen;
  const std::string src(source);
  for_each_line(in, [&](std::string_view line, std::size_t lineno) {
    const std::size_t tab1 = line.find('\t');
    if (tab1 == std::string_view::npos) {
      throw ParseError(src, lineno, "expected tab-separated qid and docid");
    }
    const std::size_t tab2 = line.find('\t', tab1 + 1);
    const std::string_view qid = line.substr(0, tab1);
    const std::string_view docid =
        line.substr(tab1 + 1, tab2 == std::string_view::npos ? std::string_view::npos
                                                             : tab2 - tab1 - 1);
    if (qid.empty() || docid.empty()) {
      throw ParseError(src, lineno, "empty qid or docid");
    }
    std::string q(qid);
    std::string d(docid);
    if (!seen[q].insert(d).second) {
      ++set.duplicates_dropped;
      return;
    }
    set.candidates[std::move(q)].push_back(std::move(d));
  });
  return set;
}

CandidateSet parse_candidates(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_candidates(in, path.string());
}

RunFile parse_run(std::istream& in, std::string_view source) {
  RunFile run;
  const std::string src(source);
  std::unordered_map<std::string, std::unordered_set<std::string>> seen;
  std::unordered_map<std::string, std::size_t> first_line;

  for_each_line(in, [&](std::string_view line, std::size_t lineno) {
    const auto fields = split_whitespace(line);
    if (fields.size() != 6) {
      throw ParseError(src, lineno,
                       "expected 6 fields (qid Q0 docid rank score tag), got " +
                           std::to_string(fields.size()));
    }
    RunRecord rec;
    rec.query_id = fields[0];
    rec.doc_id = fields[2];
    if (!parse_number(fields[3], rec.rank) || rec.rank == 0) {
      throw ParseError(src, lineno, "rank '" + std::string(fields[3]) + "' is not a positive integer");
    }
    if (!parse_number(fields[4], rec.score) || !std::isfinite(rec.score)) {
      throw ParseError(src, lineno, "score '" + std::string(fields[4]) + "' is not a finite number");
    }
    rec.tag = fields[5];
    if (!seen[rec.query_id].insert(rec.doc_id).second) {
      throw ParseError(src, lineno,
                       "duplicate document '" + rec.doc_id + "' for query '" + rec.query_id + "'");
    }
    first_line.try_emplace(rec.query_id, lineno);
    run.records.push_back(std::move(rec));
  });

  std::map<std::string, std::vector<std::size_t>> ranks;
  for (const auto& rec : run.records) ranks[rec.query_id].push_back(rec.rank);
  for (auto& [qid, list] : ranks) {
    std::sort(list.begin(), list.end());
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (list[i] != i + 1) {
        throw ParseError(src, first_line[qid],
                         "ranks for query '" + qid + "' are not 1.." +
                             std::to_string(list.size()) + " (first problem at rank " +
                             std::to_string(i + 1) + ")");
      }
    }
  }
  return run;
}

RunFile parse_run(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_run(in, path.string());
}

std::string format_score(double score) {
  char buf[64];
  const int n = std::snprintf(buf, sizeof buf, "%#.6g", score);
  return std::string(buf, static_cast<std::size_t>(n));
}

void write_run(std::span<const RankedList> ranked, std::string_view tag, std::ostream& out) {
  if (tag.empty() || tag.find_first_of(" \t\n") != std::string_view::npos) {
    throw UsageError("run tag must be non-empty and contain no whitespace");
  }
  std::vector<const RankedList*> order;
  order.reserve(ranked.size());
  for (const auto& list : ranked) order.push_back(&list);
  std::stable_sort(order.begin(), order.end(),
                   [](const RankedList* a, const RankedList* b) { return a->query_id < b->query_id; });

  std::string line;
  for (const RankedList* list : order) {
    std::size_t rank = 1;
    for (const auto& entry : list->entries) {
      line.clear();
      line += list->query_id;
      line += " Q0 ";
      line += entry.doc_id;
      line += ' ';
      line += std::to_string(rank++);
      line += ' ';
      line += format_score(entry.score);
      line += ' ';
      line += tag;
      line += '\n';
      out << line;
    }
  }
}

void write_run(std::span<const RankedList> ranked, std::string_view tag,
               const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create '" + path.string() + "'");
  write_run(ranked, tag, out);
  out.flush();
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::map<std::string, std::vector<ScoredDoc>> group_by_query(const RunFile& run) {
  std::map<std::string, std::vector<ScoredDoc>> groups;
  for (const auto& rec : run.records) {
    groups[rec.query_id].push_back({rec.doc_id, rec.score});
  }
  return groups;
}

}  // namespace dense_eval
