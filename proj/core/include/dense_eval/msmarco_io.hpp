#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dense_eval/types.hpp"

namespace dense_eval {

// Text formats, UTF-8 with one record per line:
//   qrels       qid <ignored> docid grade        (whitespace separated)
//   candidates  qid \t docid [\t query \t passage]
//   run         qid Q0 docid rank score tag      (single spaces on output)
//
// Every parser failure is a ParseError carrying the line number. Blank
// lines are skipped and a trailing '\r' is tolerated.

Qrels parse_qrels(std::istream& in, std::string_view source = "<qrels>");
Qrels parse_qrels(const std::filesystem::path& path);

CandidateSet parse_candidates(std::istream& in, std::string_view source = "<candidates>");
CandidateSet parse_candidates(const std::filesystem::path& path);

/// Runs are checked after loading: no duplicate (qid, docid) and ranks
/// within each query form 1..n.
RunFile parse_run(std::istream& in, std::string_view source = "<run>");
RunFile parse_run(const std::filesystem::path& path);

/// Score rendered with 6 significant digits ("2.00000").
std::string format_score(double score);

/// Emits queries in ascending qid order, ranks 1..n per query in list order.
void write_run(std::span<const RankedList> ranked, std::string_view tag, std::ostream& out);
void write_run(std::span<const RankedList> ranked, std::string_view tag,
               const std::filesystem::path& path);

/// Groups run records by query id; each group is in file order.
std::map<std::string, std::vector<ScoredDoc>> group_by_query(const RunFile& run);

}  // namespace dense_eval
