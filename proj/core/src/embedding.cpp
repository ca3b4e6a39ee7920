#include "xmodal/embedding.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <unordered_set>

#include "xmodal/error.hpp"

namespace xmodal {

namespace {

constexpr char kMagic[] = "XMODAL";
constexpr int kFormatVersion = 1;

void validate(std::size_t dim, const std::vector<EmbeddingRecord>& records) {
  std::unordered_set<ItemId> ids;
  ids.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.vector.size() != dim) {
      throw InputError(format_msg("record ", i, " (id ", r.id, "): expected ",
                                  dim, " components, got ", r.vector.size()));
    }
    for (double v : r.vector) {
      if (!std::isfinite(v)) {
        throw InputError(
            format_msg("record ", i, " (id ", r.id, "): non-finite component"));
      }
    }
    if (!ids.insert(r.id).second) {
      throw InputError(format_msg("duplicate id ", r.id, " at record ", i));
    }
  }
}

// Splits a line on single tabs. Empty fields are preserved.
std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::uint64_t parse_u64(const std::string& s, std::size_t line_no,
                        const char* what) {
  if (s.empty()) throw InputError(format_msg("line ", line_no, ": empty ", what));
  std::uint64_t value = 0;
  for (char c : s) {
    if (c < '0' || c > '9') {
      throw InputError(
          format_msg("line ", line_no, ": invalid ", what, " '", s, "'"));
    }
    value = value * 10 + static_cast<std::uint64_t>(c - '0');
  }
  return value;
}

double parse_component(const std::string& s, std::size_t line_no) {
  std::size_t consumed = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &consumed);
  } catch (const std::exception&) {
    throw InputError(
        format_msg("line ", line_no, ": invalid component '", s, "'"));
  }
  if (consumed != s.size()) {
    throw InputError(
        format_msg("line ", line_no, ": invalid component '", s, "'"));
  }
  if (!std::isfinite(v)) {
    throw InputError(
        format_msg("line ", line_no, ": non-finite component '", s, "'"));
  }
  return v;
}

}  // namespace

const char* to_string(Modality m) {
  return m == Modality::Image ? "image" : "text";
}

Modality modality_from_string(const std::string& s) {
  if (s == "image") return Modality::Image;
  if (s == "text") return Modality::Text;
  throw InputError(format_msg("unknown modality '", s, "'"));
}

EmbeddingSet::EmbeddingSet(std::size_t dim,
                           std::vector<EmbeddingRecord> records)
    : dim_(dim), records_(std::move(records)) {
  validate(dim_, records_);
}

std::size_t EmbeddingSet::class_count() const {
  std::set<ClassId> classes;
  for (const auto& r : records_) classes.insert(r.class_id);
  return classes.size();
}

std::string format_component(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

EmbeddingSet load_embedding_set(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(format_msg("cannot open ", path.string()));

  std::string line;
  if (!std::getline(in, line)) {
    throw InputError(format_msg(path.string(), ": empty file, missing header"));
  }
  auto header = split_tabs(line);
  if (header.size() != 3 || header[0] != kMagic) {
    throw InputError(format_msg("line 1: malformed header, expected '", kMagic,
                                "\\t", kFormatVersion, "\\t<dim>'"));
  }
  if (parse_u64(header[1], 1, "format version") != kFormatVersion) {
    throw InputError(
        format_msg("line 1: unsupported format version '", header[1], "'"));
  }
  const auto dim = static_cast<std::size_t>(parse_u64(header[2], 1, "dimension"));

  std::vector<EmbeddingRecord> records;
  std::unordered_set<ItemId> seen;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      throw InputError(format_msg("line ", line_no, ": blank line"));
    }
    auto fields = split_tabs(line);
    if (fields.size() != 3 + dim) {
      throw InputError(format_msg("line ", line_no, ": expected ", 3 + dim,
                                  " fields (", dim, " components), got ",
                                  fields.size()));
    }
    EmbeddingRecord rec;
    rec.id = parse_u64(fields[0], line_no, "id");
    rec.class_id =
        static_cast<ClassId>(parse_u64(fields[1], line_no, "class id"));
    try {
      rec.modality = modality_from_string(fields[2]);
    } catch (const InputError& e) {
      throw InputError(format_msg("line ", line_no, ": ", e.what()));
    }
    rec.vector.reserve(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      rec.vector.push_back(parse_component(fields[3 + i], line_no));
    }
    if (!seen.insert(rec.id).second) {
      throw InputError(format_msg("line ", line_no, ": duplicate id ", rec.id));
    }
    records.push_back(std::move(rec));
  }
  return EmbeddingSet(dim, std::move(records));
}

void save_embedding_set(const EmbeddingSet& set,
                        const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(format_msg("cannot write ", path.string()));
  out << kMagic << '\t' << kFormatVersion << '\t' << set.dim() << '\n';
  for (const auto& r : set.records()) {
    out << r.id << '\t' << r.class_id << '\t' << to_string(r.modality);
    for (double v : r.vector) out << '\t' << format_component(v);
    out << '\n';
  }
  out.flush();
  if (!out) throw Error(format_msg("write failed for ", path.string()));
}

std::vector<double> l2_normalize(std::span<const double> v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  if (sq == 0.0) throw Error("cannot normalize a zero vector");
  const double inv = 1.0 / std::sqrt(sq);
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x *= inv;
  return out;
}

std::pair<EmbeddingSet, EmbeddingSet> split_by_modality(
    const EmbeddingSet& set) {
  std::vector<EmbeddingRecord> images;
  std::vector<EmbeddingRecord> texts;
  for (const auto& r : set.records()) {
    (r.modality == Modality::Image ? images : texts).push_back(r);
  }
  return {EmbeddingSet(set.dim(), std::move(images)),
          EmbeddingSet(set.dim(), std::move(texts))};
}

}  // namespace xmodal
