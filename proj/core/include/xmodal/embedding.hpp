#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace xmodal {

using ItemId = std::uint64_t;
using ClassId = std::uint32_t;

enum class Modality { Image, Text };

const char* to_string(Modality m);
Modality modality_from_string(const std::string& s);

// One item's identity plus its latent feature vector.
struct EmbeddingRecord {
  ItemId id = 0;
  ClassId class_id = 0;
  Modality modality = Modality::Image;
  std::vector<double> vector;
};

// Immutable, validated collection of embedding records sharing one dimension.
// Record order is authoritative; no sorting happens on load or save.
class EmbeddingSet {
 public:
  explicit EmbeddingSet(std::size_t dim) : dim_(dim) {}
  EmbeddingSet(std::size_t dim, std::vector<EmbeddingRecord> records);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  std::size_t class_count() const;
  const std::vector<EmbeddingRecord>& records() const { return records_; }
  const EmbeddingRecord& operator[](std::size_t i) const { return records_[i]; }

 private:
  std::size_t dim_;
  std::vector<EmbeddingRecord> records_;
};

// TSV embedding format. Header line `XMODAL\t1\t<dim>`, then one record per
// line: `<id>\t<class_id>\t<image|text>\t<v_1>\t...\t<v_dim>`. UTF-8, \n line
// endings, no trailing blank line. Floats carry 9 significant digits.
EmbeddingSet load_embedding_set(const std::filesystem::path& path);
void save_embedding_set(const EmbeddingSet& set,
                        const std::filesystem::path& path);

// Serializes one double the way the TSV format stores it (9 significant
// digits, shortest form).
std::string format_component(double v);

std::vector<double> l2_normalize(std::span<const double> v);

// Partitions into (image records, text records), preserving order and ids.
std::pair<EmbeddingSet, EmbeddingSet> split_by_modality(
    const EmbeddingSet& set);

}  // namespace xmodal
