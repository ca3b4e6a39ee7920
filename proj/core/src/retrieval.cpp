#include "xmodal/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "xmodal/error.hpp"

namespace xmodal {

const char* to_string(Direction d) {
  return d == Direction::ImageToText ? "i2t" : "t2i";
}

Direction direction_from_string(const std::string& s) {
  if (s == "i2t" || s == "image-to-text") return Direction::ImageToText;
  if (s == "t2i" || s == "text-to-image") return Direction::TextToImage;
  throw InputError(format_msg("unknown direction '", s, "'"));
}

double cosine(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw Error(format_msg("cosine: dimension mismatch (", x.size(), " vs ",
                           y.size(), ")"));
  }
  double dot = 0.0, xx = 0.0, yy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    xx += x[i] * x[i];
    yy += y[i] * y[i];
  }
  if (xx == 0.0 || yy == 0.0) throw Error("cosine: zero-norm vector");
  return std::clamp(dot / (std::sqrt(xx) * std::sqrt(yy)), -1.0, 1.0);
}

namespace {

// Rows normalized to unit length, flattened row-major.
std::vector<double> normalized_rows(const EmbeddingSet& set,
                                    const char* side) {
  const std::size_t d = set.dim();
  std::vector<double> rows(set.size() * d);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& v = set[i].vector;
    double sq = 0.0;
    for (double x : v) sq += x * x;
    if (sq == 0.0) {
      throw Error(format_msg("zero-norm ", side, " vector at row ", i, " (id ",
                             set[i].id, ")"));
    }
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t k = 0; k < d; ++k) rows[i * d + k] = v[k] * inv;
  }
  return rows;
}

// C[i,j] = sum_k Q[i,k] * G[j,k] for i in [i0,i1), j in [0,ng). Tiles the
// gallery so its working block stays cache-resident while each query row
// streams through once per tile.
void dot_block(const std::vector<double>& q, const std::vector<double>& g,
               std::size_t d, std::size_t i0, std::size_t i1, std::size_t ng,
               double* out) {
  constexpr std::size_t kTile = 64;
  for (std::size_t jb = 0; jb < ng; jb += kTile) {
    const std::size_t jend = std::min(ng, jb + kTile);
    for (std::size_t i = i0; i < i1; ++i) {
      const double* qi = &q[i * d];
      double* row = out + (i - i0) * ng;
      for (std::size_t j = jb; j < jend; ++j) {
        const double* gj = &g[j * d];
        double acc = 0.0;
        for (std::size_t k = 0; k < d; ++k) acc += qi[k] * gj[k];
        row[j] = std::clamp(acc, -1.0, 1.0);
      }
    }
  }
}

void check_pair(const EmbeddingSet& queries, const EmbeddingSet& gallery) {
  if (queries.empty()) throw Error("empty query set");
  if (gallery.empty()) throw Error("empty gallery");
  if (queries.dim() != gallery.dim()) {
    throw Error(format_msg("dimension mismatch: queries ", queries.dim(),
                           ", gallery ", gallery.dim()));
  }
}

}  // namespace

SimilarityMatrix similarity_matrix(const EmbeddingSet& queries,
                                   const EmbeddingSet& gallery) {
  check_pair(queries, gallery);
  const auto q = normalized_rows(queries, "query");
  const auto g = normalized_rows(gallery, "gallery");
  SimilarityMatrix m;
  m.rows = queries.size();
  m.cols = gallery.size();
  m.values.resize(m.rows * m.cols);
  dot_block(q, g, queries.dim(), 0, m.rows, m.cols, m.values.data());
  return m;
}

std::vector<RankedList> rank(const EmbeddingSet& queries,
                             const EmbeddingSet& gallery, std::size_t k_max) {
  if (k_max < 1) throw InputError("k_max must be >= 1");
  check_pair(queries, gallery);
  const auto q = normalized_rows(queries, "query");
  const auto g = normalized_rows(gallery, "gallery");
  const std::size_t d = queries.dim();
  const std::size_t ng = gallery.size();
  const std::size_t k = std::min(k_max, ng);

  std::vector<RankedList> lists(queries.size());
  // Stream query rows through in blocks so the similarity buffer stays small.
  constexpr std::size_t kRowBlock = 256;
  std::vector<double> sims(std::min(kRowBlock, queries.size()) * ng);
  std::vector<std::size_t> order(ng);
  for (std::size_t i0 = 0; i0 < queries.size(); i0 += kRowBlock) {
    const std::size_t i1 = std::min(queries.size(), i0 + kRowBlock);
    dot_block(q, g, d, i0, i1, ng, sims.data());
    for (std::size_t i = i0; i < i1; ++i) {
      const double* row = &sims[(i - i0) * ng];
      std::iota(order.begin(), order.end(), std::size_t{0});
      auto better = [&](std::size_t a, std::size_t b) {
        if (row[a] != row[b]) return row[a] > row[b];
        return gallery[a].id < gallery[b].id;
      };
      std::partial_sort(order.begin(), order.begin() + k, order.end(), better);
      RankedList& list = lists[i];
      list.query_id = queries[i].id;
      list.entries.reserve(k);
      for (std::size_t r = 0; r < k; ++r) {
        list.entries.push_back({gallery[order[r]].id, row[order[r]]});
      }
    }
  }
  return lists;
}

std::vector<RankedList> retrieve(Direction direction, const EmbeddingSet& set,
                                 std::size_t k_max) {
  auto [images, texts] = split_by_modality(set);
  if (images.empty()) throw Error("set has no image records");
  if (texts.empty()) throw Error("set has no text records");
  if (direction == Direction::ImageToText) return rank(images, texts, k_max);
  return rank(texts, images, k_max);
}

void save_ranked_lists(const std::vector<RankedList>& lists,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(format_msg("cannot write ", path.string()));
  out << "query_id\trank\tgallery_id\tsimilarity\n";
  for (const auto& list : lists) {
    for (std::size_t r = 0; r < list.entries.size(); ++r) {
      out << list.query_id << '\t' << r + 1 << '\t'
          << list.entries[r].gallery_id << '\t'
          << format_component(list.entries[r].similarity) << '\n';
    }
  }
  out.flush();
  if (!out) throw Error(format_msg("write failed for ", path.string()));
}

}  // namespace xmodal
