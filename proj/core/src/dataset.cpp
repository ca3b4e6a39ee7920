#include "xmodal/dataset.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "xmodal/error.hpp"
#include "xmodal/parallel.hpp"

namespace xmodal {

namespace {

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
  if (s.empty() || !std::all_of(s.begin(), s.end(), [](unsigned char c) {
        return std::isdigit(c);
      })) {
    throw InputError(
        format_msg("line ", line_no, ": invalid ", what, " '", s, "'"));
  }
  return std::stoull(s);
}

}  // namespace

std::vector<ManifestItem> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(format_msg("cannot open ", path.string()));
  const auto base = path.parent_path();

  std::vector<ManifestItem> items;
  std::unordered_set<ItemId> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 4) {
      throw InputError(format_msg("line ", line_no,
                                  ": expected 4 tab-separated fields, got ",
                                  fields.size()));
    }
    ManifestItem item;
    item.id = parse_u64(fields[0], line_no, "id");
    item.class_id =
        static_cast<ClassId>(parse_u64(fields[1], line_no, "class id"));
    try {
      item.modality = modality_from_string(fields[2]);
    } catch (const InputError& e) {
      throw InputError(format_msg("line ", line_no, ": ", e.what()));
    }
    if (!seen.insert(item.id).second) {
      throw InputError(format_msg("line ", line_no, ": duplicate id ", item.id));
    }
    if (item.modality == Modality::Image) {
      item.canvas = read_ppm(base / fields[3]);
    } else {
      std::istringstream ts(fields[3]);
      std::string tok;
      while (ts >> tok) item.tokens.push_back(tok);
      if (item.tokens.empty()) {
        throw InputError(format_msg("line ", line_no, ": text row without tokens"));
      }
    }
    items.push_back(std::move(item));
  }
  return items;
}

void save_manifest(const std::vector<ManifestItem>& items,
                   const std::filesystem::path& dir,
                   const std::string& manifest_name) {
  std::filesystem::create_directories(dir / "ppm");
  std::ofstream out(dir / manifest_name, std::ios::binary);
  if (!out) {
    throw Error(format_msg("cannot write ", (dir / manifest_name).string()));
  }
  for (const auto& item : items) {
    out << item.id << '\t' << item.class_id << '\t' << to_string(item.modality)
        << '\t';
    if (item.modality == Modality::Image) {
      const std::string rel = format_msg("ppm/img_", item.id, ".ppm");
      write_ppm(item.canvas, dir / rel);
      out << rel;
    } else {
      for (std::size_t i = 0; i < item.tokens.size(); ++i) {
        if (i) out << ' ';
        out << item.tokens[i];
      }
    }
    out << '\n';
  }
  out.flush();
  if (!out) {
    throw Error(format_msg("write failed for ", (dir / manifest_name).string()));
  }
}

std::vector<CanvasItem> encode_items(const std::vector<ManifestItem>& items,
                                     const Vocabulary& vocab,
                                     const EncoderConfig& cfg,
                                     EncodeStats* stats, unsigned threads) {
  std::vector<CanvasItem> out(items.size());
  std::atomic<std::size_t> oov{0}, placed{0};
  parallel_for(items.size(), threads, [&](std::size_t i) {
    out[i].id = items[i].id;
    out[i].class_id = items[i].class_id;
    out[i].modality = items[i].modality;
    if (items[i].modality == Modality::Image) {
      out[i].canvas = items[i].canvas;
    } else {
      EncodeStats s;
      try {
        out[i].canvas = encode_description(items[i].tokens, vocab, cfg, &s);
      } catch (const InputError& e) {
        throw InputError(format_msg("item ", items[i].id, ": ", e.what()));
      } catch (const Error& e) {
        throw Error(format_msg("item ", items[i].id, ": ", e.what()));
      }
      oov += s.oov;
      placed += s.placed;
    }
  });
  if (stats) {
    stats->oov = oov.load();
    stats->placed = placed.load();
  }
  return out;
}

}  // namespace xmodal
