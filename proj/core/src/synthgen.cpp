#include "xmodal/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "xmodal/error.hpp"
#include "xmodal/metrics.hpp"
#include "xmodal/retrieval.hpp"

namespace xmodal {

void SynthConfig::validate() const {
  if (classes < 2) throw InputError("synth: need at least 2 classes");
  if (images_per_class < 1 || texts_per_class < 1) {
    throw InputError("synth: per-class item counts must be positive");
  }
  if (concept_dim < 1) throw InputError("synth: concept_dim must be positive");
  if (noise_sigma < 0.0) throw InputError("synth: noise_sigma must be >= 0");
  if (overlap_rho < 0.0 || overlap_rho > 1.0) {
    throw InputError("synth: overlap_rho must be in [0, 1]");
  }
  if (vocab_size < 1 || words_per_text < 1) {
    throw InputError("synth: vocab_size and words_per_text must be positive");
  }
  if (canvas_h < 1 || canvas_w < 1) throw InputError("synth: bad canvas size");
}

SemanticOracle::SemanticOracle(std::size_t classes, std::vector<double> matrix,
                               std::vector<ClassId> overlapped)
    : n_(classes), sim_(std::move(matrix)), overlapped_(std::move(overlapped)) {
  if (sim_.size() != n_ * n_) throw Error("oracle matrix size mismatch");
}

double SemanticOracle::similarity(ClassId a, ClassId b) const {
  if (a >= n_ || b >= n_) {
    throw Error(format_msg("oracle: unknown class ", std::max(a, b)));
  }
  return sim_[a * n_ + b];
}

double oracle_similarity(const SemanticOracle& oracle, ClassId a, ClassId b) {
  return oracle.similarity(a, b);
}

namespace {

// Orthonormal rows via Gram-Schmidt over seeded Gaussian draws.
std::vector<std::vector<double>> orthonormal_concepts(int count, int dim,
                                                      Rng& rng) {
  std::vector<std::vector<double>> basis;
  basis.reserve(count);
  int attempts = 0;
  while (static_cast<int>(basis.size()) < count) {
    if (++attempts > 20 * count) {
      throw Error("failed to orthogonalize concept vectors");
    }
    std::vector<double> v(dim);
    for (double& x : v) x = rng.gaussian();
    for (const auto& b : basis) {
      double dot = 0.0;
      for (int i = 0; i < dim; ++i) dot += v[i] * b[i];
      for (int i = 0; i < dim; ++i) v[i] -= dot * b[i];
    }
    double sq = 0.0;
    for (double x : v) sq += x * x;
    if (sq < 1e-12) continue;  // degenerate draw, retry
    const double inv = 1.0 / std::sqrt(sq);
    for (double& x : v) x *= inv;
    basis.push_back(std::move(v));
  }
  return basis;
}

Canvas render_concept_canvas(const std::vector<double>& concept_vec, int h, int w) {
  const EncoderConfig quant_cfg;  // default [-1, 1] clamp range
  const int bands = static_cast<int>((concept_vec.size() + 2) / 3);
  Canvas canvas(h, w);
  for (int x = 0; x < w; ++x) {
    const int band = std::min(bands - 1, x * bands / w);
    std::uint8_t rgb[3] = {0, 0, 0};
    for (int c = 0; c < 3; ++c) {
      const std::size_t idx = static_cast<std::size_t>(band) * 3 + c;
      if (idx < concept_vec.size()) {
        rgb[c] = quantize_component(concept_vec[idx], quant_cfg);
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int c = 0; c < 3; ++c) canvas.at(y, x, c) = rgb[c];
    }
  }
  return canvas;
}

std::string token_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "w%04d", index);
  return buf;
}

}  // namespace

SynthDataset generate(const SynthConfig& cfg) {
  cfg.validate();

  const int pair_count = cfg.classes / 2;
  const int overlapped_pairs =
      static_cast<int>(std::llround(cfg.overlap_rho * pair_count));
  const int distinct = cfg.classes - overlapped_pairs;
  if (cfg.concept_dim < distinct) {
    throw InputError(format_msg("synth: concept_dim ", cfg.concept_dim,
                                " cannot hold ", distinct,
                                " mutually orthogonal concepts"));
  }
  const int region_size = cfg.vocab_size / distinct;
  if (region_size < cfg.words_per_text) {
    throw InputError(format_msg(
        "synth: vocab too small: ", cfg.vocab_size, " tokens over ", distinct,
        " concept regions leaves ", region_size, " per region, need ",
        cfg.words_per_text));
  }

  // Concept index per class; the first `overlapped_pairs` pairs share one.
  std::vector<int> concept_of(cfg.classes);
  std::vector<ClassId> overlapped;
  {
    int next = 0;
    for (int k = 0; k < overlapped_pairs; ++k) {
      concept_of[2 * k] = next;
      concept_of[2 * k + 1] = next;
      overlapped.push_back(static_cast<ClassId>(2 * k));
      overlapped.push_back(static_cast<ClassId>(2 * k + 1));
      ++next;
    }
    for (int c = 2 * overlapped_pairs; c < cfg.classes; ++c) {
      concept_of[c] = next++;
    }
  }

  Rng master(cfg.seed);
  Rng concept_rng = master.fork("concepts");
  auto concepts = orthonormal_concepts(distinct, cfg.concept_dim, concept_rng);
  // Rendering gain: orthonormal components shrink as 1/sqrt(dim); rescale
  // so quantized colors spread over a usable range.
  const double gain = std::sqrt(static_cast<double>(cfg.concept_dim)) / 2.0;
  for (auto& c : concepts) {
    for (double& v : c) v *= gain;
  }

  // Exact-by-construction class-pair similarity.
  std::vector<double> sim(static_cast<std::size_t>(cfg.classes) * cfg.classes,
                          0.0);
  for (int a = 0; a < cfg.classes; ++a) {
    for (int b = 0; b < cfg.classes; ++b) {
      if (concept_of[a] == concept_of[b]) {
        sim[static_cast<std::size_t>(a) * cfg.classes + b] = 1.0;
      }
    }
  }
  SemanticOracle oracle(static_cast<std::size_t>(cfg.classes), std::move(sim),
                        std::move(overlapped));

  // Vocabulary: contiguous token regions, one per distinct concept; every
  // token's vector sits near its region's concept.
  Rng vocab_rng = master.fork("vocab");
  Vocabulary vocab(static_cast<std::size_t>(cfg.concept_dim));
  for (int t = 0; t < cfg.vocab_size; ++t) {
    const int region = std::min(t / region_size, distinct - 1);
    WordVector wv;
    wv.word = token_name(t);
    wv.vector.resize(cfg.concept_dim);
    for (int d = 0; d < cfg.concept_dim; ++d) {
      wv.vector[d] =
          concepts[region][d] + vocab_rng.gaussian() * cfg.noise_sigma;
    }
    vocab.insert(std::move(wv));
  }

  std::vector<ManifestItem> items;
  items.reserve(static_cast<std::size_t>(cfg.classes) *
                (cfg.images_per_class + cfg.texts_per_class));
  ItemId next_id = 0;
  for (int c = 0; c < cfg.classes; ++c) {
    Rng class_rng = master.fork(format_msg("class-", c));
    const auto& base_concept = concepts[concept_of[c]];
    for (int i = 0; i < cfg.images_per_class; ++i) {
      std::vector<double> perturbed(base_concept);
      for (double& v : perturbed) v += class_rng.gaussian() * cfg.noise_sigma;
      ManifestItem item;
      item.id = next_id++;
      item.class_id = static_cast<ClassId>(c);
      item.modality = Modality::Image;
      item.canvas = render_concept_canvas(perturbed, cfg.canvas_h, cfg.canvas_w);
      items.push_back(std::move(item));
    }
    const int region = concept_of[c];
    for (int t = 0; t < cfg.texts_per_class; ++t) {
      // words_per_text distinct tokens from the class's region, uniform
      // without replacement; the draw distribution is the same for every
      // text of the class.
      std::vector<int> pool(region_size);
      for (int j = 0; j < region_size; ++j) pool[j] = region * region_size + j;
      ManifestItem item;
      item.id = next_id++;
      item.class_id = static_cast<ClassId>(c);
      item.modality = Modality::Text;
      for (int wpt = 0; wpt < cfg.words_per_text; ++wpt) {
        const std::size_t j =
            wpt + static_cast<std::size_t>(
                      class_rng.below(pool.size() - wpt));
        std::swap(pool[wpt], pool[j]);
        item.tokens.push_back(token_name(pool[wpt]));
      }
      items.push_back(std::move(item));
    }
  }
  return SynthDataset{std::move(items), std::move(vocab), std::move(oracle)};
}

void save_synth_dataset(const SynthDataset& ds,
                        const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_manifest(ds.items, dir);
  save_word_vectors(ds.vocab, dir / "vocab.txt");
  std::ofstream out(dir / "oracle.tsv", std::ios::binary);
  if (!out) throw Error(format_msg("cannot write ", (dir / "oracle.tsv").string()));
  out << "class_a\tclass_b\tsimilarity\n";
  for (std::size_t a = 0; a < ds.oracle.classes(); ++a) {
    for (std::size_t b = 0; b < ds.oracle.classes(); ++b) {
      out << a << '\t' << b << '\t'
          << format_component(ds.oracle.similarity(static_cast<ClassId>(a),
                                                   static_cast<ClassId>(b)))
          << '\n';
    }
  }
  out.flush();
  if (!out) throw Error(format_msg("write failed for ", (dir / "oracle.tsv").string()));
}

// --- overlap experiment ---------------------------------------------------

namespace {

OverlapGroupStats group_stats(const std::vector<RankedList>& lists,
                              const std::unordered_map<ItemId, ClassId>& classes,
                              const SemanticOracle& oracle) {
  OverlapGroupStats stats;
  stats.queries = lists.size();
  if (lists.empty()) return stats;
  stats.recall1 = recall_at_k(lists, classes, 1);
  stats.xpair_lambda1 = semantic_map_excluding_pairs(lists, classes, 1);
  try {
    stats.recall5 = recall_at_k(lists, classes, 5);
    stats.xpair_lambda5 = semantic_map_excluding_pairs(lists, classes, 5);
  } catch (const Error&) {
    stats.recall5 = -1.0;
    stats.xpair_lambda5 = -1.0;
  }
  std::size_t hits = 0;
  for (const auto& list : lists) {
    const ClassId qc = classes.at(list.query_id);
    const ClassId gc = classes.at(list.entries.front().gallery_id);
    if (oracle.similarity(qc, gc) >= 0.5) ++hits;
  }
  stats.semantic_hit1 =
      100.0 * static_cast<double>(hits) / static_cast<double>(lists.size());
  return stats;
}

OverlapDirectionStats direction_stats(
    const std::vector<RankedList>& lists,
    const std::unordered_map<ItemId, ClassId>& classes,
    const std::set<ClassId>& marked, const SemanticOracle& oracle) {
  std::vector<RankedList> in_marked, in_rest;
  for (const auto& list : lists) {
    (marked.contains(classes.at(list.query_id)) ? in_marked : in_rest)
        .push_back(list);
  }
  OverlapDirectionStats d;
  d.marked = group_stats(in_marked, classes, oracle);
  d.rest = group_stats(in_rest, classes, oracle);
  d.divergence1 = d.marked.xpair_lambda1 - d.rest.xpair_lambda1;
  return d;
}

std::string fmt2(double v) {
  char buf[32];
  if (v < 0.0) return "n/a";
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

void render_group(std::ostringstream& os, const char* name,
                  const OverlapGroupStats& g) {
  os << "  " << name << ": queries=" << g.queries;
  if (g.queries == 0) {
    os << '\n';
    return;
  }
  os << " R@1=" << fmt2(g.recall1) << " R@5=" << fmt2(g.recall5)
     << " xpair-lambda@1=" << fmt2(g.xpair_lambda1)
     << " xpair-lambda@5=" << fmt2(g.xpair_lambda5)
     << " semantic-hit@1=" << fmt2(g.semantic_hit1) << '\n';
}

}  // namespace

std::string OverlapReport::render() const {
  std::ostringstream os;
  os << "overlap experiment (seed=" << seed << ")\n";
  os << "marked classes (" << (control_grouping ? "control" : "overlapped")
     << "):";
  for (ClassId c : marked_classes) os << ' ' << c;
  os << '\n';
  auto render_direction = [&](const char* label,
                              const OverlapDirectionStats& d) {
    os << "direction " << label << ":\n";
    render_group(os, "marked", d.marked);
    render_group(os, "rest  ", d.rest);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", d.divergence1);
    os << "  divergence (xpair-lambda@1, marked - rest): " << buf << '\n';
  };
  render_direction("image-to-text", i2t);
  render_direction("text-to-image", t2i);
  return os.str();
}

OverlapReport overlap_experiment(const SynthConfig& cfg,
                                 const TrainConfig& train_cfg) {
  SynthDataset ds = generate(cfg);

  std::set<ClassId> marked(ds.oracle.overlapped_classes().begin(),
                           ds.oracle.overlapped_classes().end());
  bool control = false;
  if (marked.empty()) {
    // rho = 0 control: designate half the class pairs so the same statistic
    // can be measured where no actual overlap exists.
    const int pair_count = cfg.classes / 2;
    const int designated = std::max(1, pair_count / 2);
    if (2 * designated >= cfg.classes) {
      throw InputError(
          "overlap experiment: too few classes for a control grouping");
    }
    for (int k = 0; k < designated; ++k) {
      marked.insert(static_cast<ClassId>(2 * k));
      marked.insert(static_cast<ClassId>(2 * k + 1));
    }
    control = true;
  }

  EncoderConfig enc_cfg;
  enc_cfg.canvas_h = cfg.canvas_h;
  enc_cfg.canvas_w = cfg.canvas_w;
  const auto canvas_items = encode_items(ds.items, ds.vocab, enc_cfg);

  auto [params, log] = train(canvas_items, train_cfg);

  const auto eval_items = eval_view(canvas_items, train_cfg.augmentation);
  const auto set = embed_dataset(params, eval_items);
  const auto classes = class_map(set);
  auto [images, texts] = split_by_modality(set);
  if (images.empty() || texts.empty()) {
    throw Error("overlap experiment: one modality absent after embedding");
  }

  OverlapReport report;
  report.seed = cfg.seed;
  report.control_grouping = control;
  report.marked_classes.assign(marked.begin(), marked.end());
  report.i2t = direction_stats(rank(images, texts, texts.size()), classes,
                               marked, ds.oracle);
  report.t2i = direction_stats(rank(texts, images, images.size()), classes,
                               marked, ds.oracle);
  return report;
}

}  // namespace xmodal
