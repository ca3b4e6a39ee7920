#include "xmodal/encoder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "xmodal/embedding.hpp"
#include "xmodal/error.hpp"

namespace xmodal {

void Vocabulary::insert(WordVector wv) {
  if (wv.vector.size() != dim_) {
    throw InputError(format_msg("word '", wv.word, "': expected ", dim_,
                                " components, got ", wv.vector.size()));
  }
  for (double v : wv.vector) {
    if (!std::isfinite(v)) {
      throw InputError(format_msg("word '", wv.word, "': non-finite component"));
    }
  }
  if (index_.contains(wv.word)) {
    throw InputError(format_msg("duplicate word '", wv.word, "'"));
  }
  index_.emplace(wv.word, entries_.size());
  entries_.push_back(std::move(wv));
}

const WordVector* Vocabulary::find(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? nullptr : &entries_[it->second];
}

std::uint8_t quantize_component(double v, const EncoderConfig& cfg) {
  const double clamped = std::clamp(v, cfg.value_min, cfg.value_max);
  const double unit = (clamped - cfg.value_min) / (cfg.value_max - cfg.value_min);
  return static_cast<std::uint8_t>(std::lround(unit * 255.0));
}

std::vector<std::array<std::uint8_t, 3>> encode_word(const WordVector& wv,
                                                     const EncoderConfig& cfg) {
  const std::size_t d = wv.vector.size();
  std::vector<std::array<std::uint8_t, 3>> block((d + 2) / 3, {0, 0, 0});
  for (std::size_t i = 0; i < d; ++i) {
    block[i / 3][i % 3] = quantize_component(wv.vector[i], cfg);
  }
  return block;
}

EncodedTextImage encode_description(const std::vector<std::string>& tokens,
                                    const Vocabulary& vocab,
                                    const EncoderConfig& cfg,
                                    EncodeStats* stats) {
  if (cfg.superpixel < 1) throw InputError("superpixel scale must be >= 1");
  if (cfg.word_gap < 0) throw InputError("word gap must be >= 0");
  if (cfg.value_max <= cfg.value_min) {
    throw InputError("value_max must exceed value_min");
  }

  const int s = cfg.superpixel;
  const int logical_w = cfg.canvas_w / s;
  const int block_len = static_cast<int>((vocab.dim() + 2) / 3);
  if (block_len > logical_w) {
    throw InputError(format_msg("word block of ", block_len,
                                " logical pixels does not fit canvas width ",
                                cfg.canvas_w, " at superpixel ", s));
  }

  EncodeStats local;
  std::vector<const WordVector*> words;
  words.reserve(tokens.size());
  std::vector<std::size_t> token_index;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (const WordVector* wv = vocab.find(tokens[i])) {
      words.push_back(wv);
      token_index.push_back(i);
    } else {
      ++local.oov;
    }
  }
  if (words.empty()) {
    if (stats) *stats = local;
    throw InputError(tokens.empty()
                         ? std::string("empty description: no tokens")
                         : format_msg("empty description: all ", tokens.size(),
                                      " tokens out of vocabulary"));
  }

  EncodedTextImage canvas(cfg.canvas_h, cfg.canvas_w);
  int row = 0;  // logical row of the current line of words
  int col = 0;  // logical column where the next block starts
  for (std::size_t w = 0; w < words.size(); ++w) {
    if (col > 0 && col + block_len > logical_w) {
      row += 1 + cfg.word_gap;
      col = 0;
    }
    if ((row + 1) * s > cfg.canvas_h) {
      throw Error(format_msg("description overflows canvas at token '",
                             tokens[token_index[w]], "' (word ", w + 1, " of ",
                             words.size(), ")"));
    }
    const auto block = encode_word(*words[w], cfg);
    for (int p = 0; p < block_len; ++p) {
      for (int dy = 0; dy < s; ++dy) {
        for (int dx = 0; dx < s; ++dx) {
          const int y = row * s + dy;
          const int x = (col + p) * s + dx;
          for (int c = 0; c < 3; ++c) canvas.at(y, x, c) = block[p][c];
        }
      }
    }
    col += block_len + cfg.word_gap;
    ++local.placed;
  }
  if (stats) *stats = local;
  return canvas;
}

AugmentMode augment_mode_from_string(const std::string& s) {
  if (s == "crop227_enlarge") return AugmentMode::Crop227Enlarge;
  if (s == "hflip") return AugmentMode::HFlip;
  if (s == "downsample128") return AugmentMode::Downsample128;
  throw InputError(format_msg("unknown augmentation mode '", s, "'"));
}

namespace {

Canvas crop227_enlarge(const Canvas& img) {
  constexpr int kCrop = 227;
  if (img.height < kCrop || img.width < kCrop) {
    throw Error(format_msg("cannot crop ", kCrop, "x", kCrop, " from ",
                           img.height, "x", img.width, " canvas"));
  }
  const int off_y = (img.height - kCrop) / 2;
  const int off_x = (img.width - kCrop) / 2;
  constexpr int kOut = 256;
  Canvas out(kOut, kOut);
  for (int y = 0; y < kOut; ++y) {
    const int sy = off_y + y * kCrop / kOut;
    for (int x = 0; x < kOut; ++x) {
      const int sx = off_x + x * kCrop / kOut;
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  }
  return out;
}

Canvas hflip(const Canvas& img) {
  Canvas out(img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
      }
    }
  }
  return out;
}

Canvas downsample128(const Canvas& img) {
  if (img.height != 256 || img.width != 256) {
    throw Error(format_msg("downsample128 expects a 256x256 canvas, got ",
                           img.height, "x", img.width));
  }
  Canvas out(128, 128);
  for (int y = 0; y < 128; ++y) {
    for (int x = 0; x < 128; ++x) {
      for (int c = 0; c < 3; ++c) {
        const int sum = img.at(2 * y, 2 * x, c) + img.at(2 * y, 2 * x + 1, c) +
                        img.at(2 * y + 1, 2 * x, c) +
                        img.at(2 * y + 1, 2 * x + 1, c);
        out.at(y, x, c) = static_cast<std::uint8_t>(std::lround(sum / 4.0));
      }
    }
  }
  return out;
}

}  // namespace

Canvas augment_encoded(const Canvas& img, AugmentMode mode) {
  switch (mode) {
    case AugmentMode::Crop227Enlarge:
      return crop227_enlarge(img);
    case AugmentMode::HFlip:
      return hflip(img);
    case AugmentMode::Downsample128:
      return downsample128(img);
  }
  throw Error("unreachable augmentation mode");
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      tokens.push_back(current);
      current.clear();
    }
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (c < 128 && std::ispunct(c)) {
      // stripped
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return tokens;
}

namespace {

bool all_digits(const std::string& s) {
  return !s.empty() &&
         std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

std::vector<std::string> split_spaces(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

double parse_vec_component(const std::string& s, std::size_t line_no) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InputError(
        format_msg("line ", line_no, ": invalid vector component '", s, "'"));
  }
}

}  // namespace

Vocabulary load_word_vectors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(format_msg("cannot open ", path.string()));

  std::string line;
  std::size_t line_no = 0;
  std::size_t declared_count = 0;
  bool has_header = false;
  std::size_t dim = 0;
  std::vector<WordVector> pending;

  while (std::getline(in, line)) {
    ++line_no;
    auto fields = split_spaces(line);
    if (fields.empty()) continue;
    if (line_no == 1 && fields.size() == 2 && all_digits(fields[0]) &&
        all_digits(fields[1])) {
      has_header = true;
      declared_count = std::stoull(fields[0]);
      dim = std::stoull(fields[1]);
      if (dim == 0) throw InputError("line 1: vector dimension must be positive");
      continue;
    }
    if (fields.size() < 2) {
      throw InputError(format_msg("line ", line_no,
                                  ": expected 'word v_1 ... v_d'"));
    }
    WordVector wv;
    wv.word = fields[0];
    wv.vector.reserve(fields.size() - 1);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      wv.vector.push_back(parse_vec_component(fields[i], line_no));
    }
    if (dim == 0) {
      dim = wv.vector.size();
    } else if (wv.vector.size() != dim) {
      throw InputError(format_msg("line ", line_no, ": expected ", dim,
                                  " components, got ", wv.vector.size()));
    }
    pending.push_back(std::move(wv));
  }
  if (dim == 0) throw InputError(format_msg(path.string(), ": no entries"));
  if (has_header && declared_count != pending.size()) {
    throw InputError(format_msg(path.string(), ": header declares ",
                                declared_count, " entries, found ",
                                pending.size()));
  }
  Vocabulary vocab(dim);
  for (auto& wv : pending) vocab.insert(std::move(wv));
  return vocab;
}

void save_word_vectors(const Vocabulary& vocab,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(format_msg("cannot write ", path.string()));
  out << vocab.size() << ' ' << vocab.dim() << '\n';
  for (const auto& wv : vocab.entries()) {
    out << wv.word;
    for (double v : wv.vector) out << ' ' << format_component(v);
    out << '\n';
  }
  out.flush();
  if (!out) throw Error(format_msg("write failed for ", path.string()));
}

}  // namespace xmodal
