#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "xmodal/embedding.hpp"

namespace xmodal {

enum class Direction { ImageToText, TextToImage };

const char* to_string(Direction d);
Direction direction_from_string(const std::string& s);

struct RankedEntry {
  ItemId gallery_id = 0;
  double similarity = 0.0;
};

// A query's gallery items sorted by similarity descending, ties broken by
// ascending gallery id.
struct RankedList {
  ItemId query_id = 0;
  std::vector<RankedEntry> entries;
};

double cosine(std::span<const double> x, std::span<const double> y);

// Row-major queries x gallery cosine matrix.
struct SimilarityMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
};

// Blocked normalized inner products; entry (i,j) agrees with
// cosine(query_i, gallery_j) within 1e-10.
SimilarityMatrix similarity_matrix(const EmbeddingSet& queries,
                                   const EmbeddingSet& gallery);

// Top-k ranking of every query against the gallery. Each list has
// min(k_max, |gallery|) entries.
std::vector<RankedList> rank(const EmbeddingSet& queries,
                             const EmbeddingSet& gallery, std::size_t k_max);

// Splits by modality and ranks the source modality against the other side.
std::vector<RankedList> retrieve(Direction direction, const EmbeddingSet& set,
                                 std::size_t k_max);

// TSV export: `query_id\trank\tgallery_id\tsimilarity`, rank starting at 1.
void save_ranked_lists(const std::vector<RankedList>& lists,
                       const std::filesystem::path& path);

}  // namespace xmodal
