#include "xmodal/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "xmodal/error.hpp"

namespace xmodal {

ReportScale report_scale_from_string(const std::string& s) {
  if (s == "unit") return ReportScale::Unit;
  if (s == "percent") return ReportScale::Percent;
  throw InputError(format_msg("unknown scale '", s, "'"));
}

void MetricConfig::validate() const {
  if (ks.empty()) throw InputError("metric K list is empty");
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] < 1) throw InputError("metric K values must be positive");
    if (i > 0 && ks[i] <= ks[i - 1]) {
      throw InputError("metric K values must be strictly increasing");
    }
  }
}

namespace {

ClassId class_of(const std::unordered_map<ItemId, ClassId>& classes,
                 ItemId id) {
  auto it = classes.find(id);
  if (it == classes.end()) {
    throw Error(format_msg("no class known for item ", id));
  }
  return it->second;
}

}  // namespace

std::unordered_map<ItemId, ClassId> class_map(const EmbeddingSet& set) {
  std::unordered_map<ItemId, ClassId> classes;
  classes.reserve(set.size());
  for (const auto& r : set.records()) classes.emplace(r.id, r.class_id);
  return classes;
}

double recall_at_k(const std::vector<RankedList>& ranked,
                   const std::unordered_map<ItemId, ClassId>& classes, int k) {
  if (ranked.empty()) throw Error("recall over an empty ranked set");
  if (k < 1) throw Error("recall needs k >= 1");
  std::size_t hits = 0;
  for (const auto& list : ranked) {
    const ClassId want = class_of(classes, list.query_id);
    const std::size_t upto =
        std::min<std::size_t>(list.entries.size(), static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < upto; ++i) {
      if (class_of(classes, list.entries[i].gallery_id) == want) {
        ++hits;
        break;
      }
    }
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(ranked.size());
}

double semantic_map_at_k(const std::vector<RankedList>& ranked, int k) {
  if (ranked.empty()) throw Error("semantic map over an empty ranked set");
  if (k < 1) throw Error("semantic map needs k >= 1");
  double sum = 0.0;
  for (const auto& list : ranked) {
    if (list.entries.size() < static_cast<std::size_t>(k)) {
      throw Error(format_msg("query ", list.query_id, ": ranked list has ",
                             list.entries.size(), " entries, need ", k));
    }
    for (int i = 0; i < k; ++i) sum += list.entries[i].similarity;
  }
  return sum / (static_cast<double>(ranked.size()) * k);
}

double semantic_map_excluding_pairs(
    const std::vector<RankedList>& ranked_full,
    const std::unordered_map<ItemId, ClassId>& classes, int k) {
  if (ranked_full.empty()) throw Error("semantic map over an empty ranked set");
  if (k < 1) throw Error("semantic map needs k >= 1");
  double sum = 0.0;
  for (const auto& list : ranked_full) {
    const ClassId own = class_of(classes, list.query_id);
    int taken = 0;
    for (const auto& entry : list.entries) {
      if (class_of(classes, entry.gallery_id) == own) continue;
      sum += entry.similarity;
      if (++taken == k) break;
    }
    if (taken < k) {
      throw Error(format_msg("query ", list.query_id, ": only ", taken,
                             " cross-class entries, need ", k));
    }
  }
  return sum / (static_cast<double>(ranked_full.size()) * k);
}

std::vector<MetricReport> evaluate(const EmbeddingSet& set,
                                   const MetricConfig& cfg) {
  cfg.validate();
  auto [images, texts] = split_by_modality(set);
  if (images.empty()) throw Error("set has no image records");
  if (texts.empty()) throw Error("set has no text records");
  const auto classes = class_map(set);
  const double lambda_scale = cfg.scale == ReportScale::Percent ? 100.0 : 1.0;

  std::vector<MetricReport> reports;
  for (Direction dir : {Direction::ImageToText, Direction::TextToImage}) {
    const EmbeddingSet& queries = dir == Direction::ImageToText ? images : texts;
    const EmbeddingSet& gallery = dir == Direction::ImageToText ? texts : images;
    // Full lists: pair-excluded values need entries beyond the top K.
    const auto ranked = rank(queries, gallery, gallery.size());

    MetricReport report;
    report.direction = dir;
    report.n_queries = ranked.size();
    report.ks = cfg.ks;
    report.scale = cfg.scale;
    for (int k : cfg.ks) {
      report.recall.push_back(recall_at_k(ranked, classes, k));
      report.semantic.push_back(lambda_scale * semantic_map_at_k(ranked, k));
      if (cfg.exclude_pairs) {
        report.semantic_xpair.push_back(
            lambda_scale * semantic_map_excluding_pairs(ranked, classes, k));
      }
    }
    reports.push_back(std::move(report));
  }
  return reports;
}

namespace {

std::string fmt_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string fmt_cell(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%9.2f", v);
  return buf;
}

const char* direction_label(Direction d) {
  return d == Direction::ImageToText ? "image-to-text" : "text-to-image";
}

constexpr ReferenceScore kReferenceScores[] = {
    // recall, MSCOCO 1k
    {"Str. Pres.", "MSCOCO", "i2t", "recall", 1, 50.1},
    {"Str. Pres.", "MSCOCO", "i2t", "recall", 5, 79.7},
    {"Str. Pres.", "MSCOCO", "i2t", "recall", 10, 89.2},
    {"Str. Pres.", "MSCOCO", "t2i", "recall", 1, 39.6},
    {"Str. Pres.", "MSCOCO", "t2i", "recall", 5, 75.2},
    {"Str. Pres.", "MSCOCO", "t2i", "recall", 10, 86.9},
    {"single-stream cfg-3", "MSCOCO", "i2t", "recall", 1, 40.0},
    {"single-stream cfg-3", "MSCOCO", "i2t", "recall", 5, 64.4},
    {"single-stream cfg-3", "MSCOCO", "i2t", "recall", 10, 76.7},
    {"single-stream cfg-3", "MSCOCO", "t2i", "recall", 1, 30.9},
    {"single-stream cfg-3", "MSCOCO", "t2i", "recall", 5, 62.7},
    {"single-stream cfg-3", "MSCOCO", "t2i", "recall", 10, 73.7},
    // semantic map (percent), MSCOCO 1k
    {"Str. Pres.", "MSCOCO", "i2t", "semantic_map", 1, 67.24},
    {"Str. Pres.", "MSCOCO", "i2t", "semantic_map", 5, 64.63},
    {"Str. Pres.", "MSCOCO", "i2t", "semantic_map", 10, 62.74},
    {"Str. Pres.", "MSCOCO", "t2i", "semantic_map", 1, 64.07},
    {"Str. Pres.", "MSCOCO", "t2i", "semantic_map", 5, 59.29},
    {"Str. Pres.", "MSCOCO", "t2i", "semantic_map", 10, 56.30},
    {"single-stream cfg-3", "MSCOCO", "i2t", "semantic_map", 1, 68.67},
    {"single-stream cfg-3", "MSCOCO", "i2t", "semantic_map", 5, 65.25},
    {"single-stream cfg-3", "MSCOCO", "i2t", "semantic_map", 10, 62.86},
    {"single-stream cfg-3", "MSCOCO", "t2i", "semantic_map", 1, 66.70},
    {"single-stream cfg-3", "MSCOCO", "t2i", "semantic_map", 5, 59.42},
    {"single-stream cfg-3", "MSCOCO", "t2i", "semantic_map", 10, 54.46},
    // pair-excluded semantic map (percent), MSCOCO 1k
    {"Str. Pres.", "MSCOCO", "i2t", "semantic_map_xpair", 1, 64.94},
    {"Str. Pres.", "MSCOCO", "i2t", "semantic_map_xpair", 5, 62.61},
    {"Str. Pres.", "MSCOCO", "i2t", "semantic_map_xpair", 10, 61.02},
    {"Str. Pres.", "MSCOCO", "t2i", "semantic_map_xpair", 1, 61.88},
    {"Str. Pres.", "MSCOCO", "t2i", "semantic_map_xpair", 5, 58.01},
    {"Str. Pres.", "MSCOCO", "t2i", "semantic_map_xpair", 10, 55.34},
    {"single-stream cfg-3", "MSCOCO", "i2t", "semantic_map_xpair", 1, 67.57},
    {"single-stream cfg-3", "MSCOCO", "i2t", "semantic_map_xpair", 5, 64.17},
    {"single-stream cfg-3", "MSCOCO", "i2t", "semantic_map_xpair", 10, 61.81},
    {"single-stream cfg-3", "MSCOCO", "t2i", "semantic_map_xpair", 1, 65.42},
    {"single-stream cfg-3", "MSCOCO", "t2i", "semantic_map_xpair", 5, 58.36},
    {"single-stream cfg-3", "MSCOCO", "t2i", "semantic_map_xpair", 10, 53.55},
};

std::string render_tsv(const std::vector<MetricReport>& reports) {
  std::ostringstream os;
  os << "direction\tmetric\tK\tvalue\n";
  for (const auto& r : reports) {
    const char* dir = to_string(r.direction);
    for (std::size_t i = 0; i < r.ks.size(); ++i) {
      os << dir << "\trecall\t" << r.ks[i] << '\t' << fmt_value(r.recall[i])
         << '\n';
    }
    for (std::size_t i = 0; i < r.ks.size(); ++i) {
      os << dir << "\tsemantic_map\t" << r.ks[i] << '\t'
         << fmt_value(r.semantic[i]) << '\n';
    }
    for (std::size_t i = 0; i < r.semantic_xpair.size(); ++i) {
      os << dir << "\tsemantic_map_xpair\t" << r.ks[i] << '\t'
         << fmt_value(r.semantic_xpair[i]) << '\n';
    }
  }
  return os.str();
}

std::string render_aligned(const std::vector<MetricReport>& reports) {
  std::ostringstream os;
  if (reports.empty()) return os.str();

  os << "direction       metric              ";
  for (int k : reports.front().ks) {
    char head[16];
    std::snprintf(head, sizeof(head), "%9s", ("K=" + std::to_string(k)).c_str());
    os << head;
  }
  os << '\n';
  for (const auto& r : reports) {
    char dir[20];
    std::snprintf(dir, sizeof(dir), "%-16s", direction_label(r.direction));
    os << dir << "R@K                 ";
    for (double v : r.recall) os << fmt_cell(v);
    os << '\n';
    os << dir << "lambda@K            ";
    for (double v : r.semantic) os << fmt_cell(v);
    os << '\n';
    if (!r.semantic_xpair.empty()) {
      os << dir << "lambda@K (xpair)    ";
      for (double v : r.semantic_xpair) os << fmt_cell(v);
      os << '\n';
    }
  }
  os << "queries:";
  for (const auto& r : reports) {
    os << ' ' << direction_label(r.direction) << '=' << r.n_queries;
  }
  os << '\n';
  os << "lambda scale: "
     << (reports.front().scale == ReportScale::Percent ? "percent" : "unit")
     << '\n';
  os << '\n';
  os << "published references (MSCOCO 1k test, percent):\n";
  for (const char* metric : {"semantic_map", "semantic_map_xpair"}) {
    for (const char* system : {"Str. Pres.", "single-stream cfg-3"}) {
      for (const char* dir : {"i2t", "t2i"}) {
        os << "  " << system << "  "
           << (std::string(metric) == "semantic_map" ? "lambda" : "lambda-xpair")
           << " " << dir << " ";
        bool first = true;
        for (const auto& ref : kReferenceScores) {
          if (std::string(ref.system) != system ||
              std::string(ref.metric) != metric ||
              std::string(ref.direction) != dir) {
            continue;
          }
          if (!first) os << "  ";
          first = false;
          char buf[32];
          std::snprintf(buf, sizeof(buf), "@%d %.2f", ref.k, ref.value);
          os << buf;
        }
        os << '\n';
      }
    }
  }
  return os.str();
}

}  // namespace

std::span<const ReferenceScore> published_reference_scores() {
  return kReferenceScores;
}

std::string render_report(const std::vector<MetricReport>& reports,
                          ReportStyle style) {
  return style == ReportStyle::Tsv ? render_tsv(reports)
                                   : render_aligned(reports);
}

}  // namespace xmodal
