#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "xmodal/canvas.hpp"

namespace xmodal {

struct WordVector {
  std::string word;
  std::vector<double> vector;
};

// Token -> word vector map with a single shared dimension. Entries keep
// insertion order so saving is deterministic.
class Vocabulary {
 public:
  explicit Vocabulary(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  const std::vector<WordVector>& entries() const { return entries_; }

  void insert(WordVector wv);
  const WordVector* find(const std::string& token) const;

 private:
  std::size_t dim_;
  std::vector<WordVector> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct EncoderConfig {
  int canvas_h = 256;
  int canvas_w = 256;
  int superpixel = 4;   // each logical pixel is drawn as an s x s block
  int word_gap = 1;     // logical pixels between word blocks
  double value_min = -1.0;
  double value_max = 1.0;
};

// A rendered text description is an ordinary canvas; untouched background
// stays byte 0.
using EncodedTextImage = Canvas;

// Maps a component into [0,255]: round((clamp(v) - min) / (max - min) * 255).
std::uint8_t quantize_component(double v, const EncoderConfig& cfg);

// One word becomes ceil(d/3) logical pixels; consecutive component triples
// become the (R,G,B) of consecutive pixels, missing channels of the last
// pixel are 0.
std::vector<std::array<std::uint8_t, 3>> encode_word(const WordVector& wv,
                                                     const EncoderConfig& cfg);

struct EncodeStats {
  std::size_t placed = 0;  // words rendered
  std::size_t oov = 0;     // tokens skipped as out-of-vocabulary
};

// Lays word blocks out left to right in token order, scaled by the
// superpixel size, wrapping to the next row when a block would overflow the
// canvas width. Out-of-vocabulary tokens are skipped and counted.
EncodedTextImage encode_description(const std::vector<std::string>& tokens,
                                    const Vocabulary& vocab,
                                    const EncoderConfig& cfg,
                                    EncodeStats* stats = nullptr);

enum class AugmentMode { Crop227Enlarge, HFlip, Downsample128 };

AugmentMode augment_mode_from_string(const std::string& s);

// Crop227Enlarge: centered 227x227 crop, enlarged back to 256x256 by
// nearest neighbor. HFlip: columns mirrored. Downsample128: 256x256 to
// 128x128 by 2x2 block averaging with rounding.
Canvas augment_encoded(const Canvas& img, AugmentMode mode);

// Lowercases, splits on whitespace, strips ASCII punctuation.
std::vector<std::string> tokenize(const std::string& text);

// Word-vector text format: one `word v_1 ... v_d` entry per line,
// space-separated, with an optional `<count> <dim>` first line.
Vocabulary load_word_vectors(const std::filesystem::path& path);
void save_word_vectors(const Vocabulary& vocab,
                       const std::filesystem::path& path);

}  // namespace xmodal
