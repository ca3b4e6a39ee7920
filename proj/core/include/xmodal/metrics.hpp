#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "xmodal/embedding.hpp"
#include "xmodal/retrieval.hpp"

namespace xmodal {

enum class ReportScale { Unit, Percent };

ReportScale report_scale_from_string(const std::string& s);

struct MetricConfig {
  std::vector<int> ks = {1, 5, 10};  // positive, strictly increasing
  ReportScale scale = ReportScale::Unit;
  bool exclude_pairs = false;  // also compute pair-excluded semantic map

  void validate() const;
};

// Percentage of queries whose top-k contains at least one item of the
// query's class. Lists shorter than k count their full length.
double recall_at_k(const std::vector<RankedList>& ranked,
                   const std::unordered_map<ItemId, ClassId>& classes, int k);

// Mean of the top-k similarities averaged over all queries:
// (1 / (N*k)) * sum over queries of sum of first k similarities.
double semantic_map_at_k(const std::vector<RankedList>& ranked, int k);

// Same, but entries of the query's own class are discarded first; the first
// k of the remainder are averaged.
double semantic_map_excluding_pairs(
    const std::vector<RankedList>& ranked_full,
    const std::unordered_map<ItemId, ClassId>& classes, int k);

struct MetricReport {
  Direction direction = Direction::ImageToText;
  std::size_t n_queries = 0;
  std::vector<int> ks;
  std::vector<double> recall;          // percent, parallel to ks
  std::vector<double> semantic;        // scaled per `scale`
  std::vector<double> semantic_xpair;  // empty unless exclude_pairs
  ReportScale scale = ReportScale::Unit;
};

// Runs both directions over one embedding set containing both modalities.
std::vector<MetricReport> evaluate(const EmbeddingSet& set,
                                   const MetricConfig& cfg);

enum class ReportStyle { Tsv, AlignedTable };

// Tsv: `direction\tmetric\tK\tvalue` rows. AlignedTable: direction x K table
// with published reference scores appended for context.
std::string render_report(const std::vector<MetricReport>& reports,
                          ReportStyle style);

// Published scores of prior systems on the MSCOCO/Flickr30K 1k-test
// protocol, kept for display next to local runs. All values are percent.
struct ReferenceScore {
  const char* system;
  const char* dataset;
  const char* direction;  // "i2t" | "t2i"
  const char* metric;     // "recall" | "semantic_map" | "semantic_map_xpair"
  int k;
  double value;
};

std::span<const ReferenceScore> published_reference_scores();

// id -> class lookup for a whole set.
std::unordered_map<ItemId, ClassId> class_map(const EmbeddingSet& set);

}  // namespace xmodal
