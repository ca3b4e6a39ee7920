#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xmodal/dataset.hpp"
#include "xmodal/encoder.hpp"
#include "xmodal/model.hpp"

namespace xmodal {

// Synthetic cross-modal dataset: every class has a concept vector; images
// render the concept as colored bands, texts draw tokens whose word vectors
// sit near the concept. overlap_rho controls the fraction of class pairs
// that share an identical concept, i.e. pairs that describe the same thing
// under different ground-truth labels.
struct SynthConfig {
  int classes = 8;
  int images_per_class = 1;
  int texts_per_class = 5;
  int concept_dim = 15;
  double noise_sigma = 0.05;
  double overlap_rho = 0.0;
  int vocab_size = 160;
  int words_per_text = 8;
  std::uint64_t seed = 0;
  int canvas_h = 256;
  int canvas_w = 256;

  void validate() const;
};

// Ground-truth class-pair similarity: 1 on the diagonal and for classes
// sharing a concept, 0 for the orthogonalized rest.
class SemanticOracle {
 public:
  SemanticOracle(std::size_t classes, std::vector<double> matrix,
                 std::vector<ClassId> overlapped);

  std::size_t classes() const { return n_; }
  double similarity(ClassId a, ClassId b) const;
  const std::vector<ClassId>& overlapped_classes() const { return overlapped_; }

 private:
  std::size_t n_;
  std::vector<double> sim_;
  std::vector<ClassId> overlapped_;
};

double oracle_similarity(const SemanticOracle& oracle, ClassId a, ClassId b);

struct SynthDataset {
  std::vector<ManifestItem> items;
  Vocabulary vocab;
  SemanticOracle oracle;
};

SynthDataset generate(const SynthConfig& cfg);

// Writes manifest + PPM canvases, vocab.txt in the word-vector format, and
// oracle.tsv under dir.
void save_synth_dataset(const SynthDataset& ds,
                        const std::filesystem::path& dir);

// --- the overlap experiment --------------------------------------------

struct OverlapGroupStats {
  std::size_t queries = 0;
  double recall1 = 0.0;          // percent
  double recall5 = -1.0;         // -1 when the gallery is too small
  double xpair_lambda1 = 0.0;    // pair-excluded semantic map, unit scale
  double xpair_lambda5 = -1.0;
  double semantic_hit1 = 0.0;    // percent of queries whose top-1 item's
                                 // class is oracle-similar to the query's
};

struct OverlapDirectionStats {
  OverlapGroupStats marked;  // queries from overlapped (or control) classes
  OverlapGroupStats rest;
  double divergence1 = 0.0;  // marked.xpair_lambda1 - rest.xpair_lambda1
};

struct OverlapReport {
  std::uint64_t seed = 0;
  bool control_grouping = false;  // rho == 0: marked classes are a control
                                  // designation, not actually overlapped
  std::vector<ClassId> marked_classes;
  OverlapDirectionStats i2t;
  OverlapDirectionStats t2i;

  std::string render() const;  // deterministic text
};

// Generates, trains, embeds, then contrasts retrieval metrics for queries
// from overlapped classes against the rest.
OverlapReport overlap_experiment(const SynthConfig& cfg,
                                 const TrainConfig& train_cfg);

}  // namespace xmodal
