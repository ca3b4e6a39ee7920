#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "xmodal/encoder.hpp"
#include "xmodal/error.hpp"

using namespace xmodal;
using testutil::TempDir;

namespace {

WordVector wv(std::string word, std::vector<double> v) {
  return WordVector{std::move(word), std::move(v)};
}

Vocabulary small_vocab(std::size_t dim, int count, std::uint64_t seed) {
  Rng rng(seed);
  Vocabulary vocab(dim);
  for (int i = 0; i < count; ++i) {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.uniform(-0.9, 0.9);
    vocab.insert(wv("word" + std::to_string(i), std::move(v)));
  }
  return vocab;
}

// Count logical pixels with any nonzero channel.
int nonzero_logical_pixels(const Canvas& c, int s) {
  int count = 0;
  for (int y = 0; y < c.height / s; ++y) {
    for (int x = 0; x < c.width / s; ++x) {
      bool nonzero = false;
      for (int c3 = 0; c3 < 3; ++c3) {
        if (c.at(y * s, x * s, c3) != 0) nonzero = true;
      }
      if (nonzero) ++count;
    }
  }
  return count;
}

}  // namespace

TEST(Quantize, RangeEndpointsAndMid) {
  const EncoderConfig cfg;
  EXPECT_EQ(quantize_component(1.0, cfg), 255);
  EXPECT_EQ(quantize_component(-1.0, cfg), 0);
  EXPECT_EQ(quantize_component(0.5, cfg), 191);  // round(0.75 * 255)
  EXPECT_EQ(quantize_component(0.0, cfg), 128);  // round(127.5)
}

TEST(Quantize, ClampsOutOfRange) {
  const EncoderConfig cfg;
  EXPECT_EQ(quantize_component(3.5, cfg), 255);
  EXPECT_EQ(quantize_component(-17.0, cfg), 0);
}

TEST(EncodeWord, FifteenComponentsGiveFivePixels) {
  const EncoderConfig cfg;
  const auto block = encode_word(wv("w", std::vector<double>(15, 0.0)), cfg);
  EXPECT_EQ(block.size(), 5u);
}

TEST(EncodeWord, PadsLastPixelWithZeros) {
  const EncoderConfig cfg;
  const auto block = encode_word(wv("w", {1.0, 1.0, 1.0, 0.5}), cfg);
  ASSERT_EQ(block.size(), 2u);
  EXPECT_EQ(block[0], (std::array<std::uint8_t, 3>{255, 255, 255}));
  EXPECT_EQ(block[1], (std::array<std::uint8_t, 3>{191, 0, 0}));
}

TEST(EncodeWord, Deterministic) {
  const EncoderConfig cfg;
  const auto a = encode_word(wv("a", {0.1, -0.2, 0.3, 0.7, -0.9}), cfg);
  const auto b = encode_word(wv("b", {0.1, -0.2, 0.3, 0.7, -0.9}), cfg);
  EXPECT_EQ(a, b);
}

TEST(EncodeDescription, EmptyTokenListFails) {
  const auto vocab = small_vocab(15, 3, 1);
  EXPECT_THROW(encode_description({}, vocab, EncoderConfig{}), InputError);
}

TEST(EncodeDescription, AllOovFails) {
  const auto vocab = small_vocab(15, 3, 1);
  EXPECT_THROW(encode_description({"nope", "missing"}, vocab, EncoderConfig{}),
               InputError);
}

TEST(EncodeDescription, OneWordFiveLogicalPixelsOnRowZero) {
  const auto vocab = small_vocab(15, 1, 2);
  EncoderConfig cfg;
  cfg.superpixel = 1;
  const auto img = encode_description({"word0"}, vocab, cfg);
  EXPECT_EQ(nonzero_logical_pixels(img, 1), 5);
  for (int x = 0; x < 5; ++x) {
    bool nonzero = false;
    for (int c = 0; c < 3; ++c) {
      if (img.at(0, x, c) != 0) nonzero = true;
    }
    EXPECT_TRUE(nonzero) << "pixel " << x << " on row 0";
  }
}

TEST(EncodeDescription, DeterministicBytes) {
  const auto vocab = small_vocab(15, 6, 3);
  const std::vector<std::string> tokens{"word0", "word3", "word5", "word1"};
  const auto a = encode_description(tokens, vocab, EncoderConfig{});
  const auto b = encode_description(tokens, vocab, EncoderConfig{});
  EXPECT_EQ(a, b);
}

TEST(EncodeDescription, OovSkippedAndCounted) {
  const auto vocab = small_vocab(15, 3, 4);
  EncodeStats stats;
  const auto img = encode_description({"word0", "gone", "word1", "absent"},
                                      vocab, EncoderConfig{}, &stats);
  EXPECT_EQ(stats.placed, 2u);
  EXPECT_EQ(stats.oov, 2u);
  EXPECT_GT(nonzero_logical_pixels(img, EncoderConfig{}.superpixel), 0);
}

TEST(EncodeDescription, WordBlocksLaidOutLeftToRightWithGap) {
  // dim 6 -> 2 logical pixels per word; gap 1; superpixel 1
  Vocabulary vocab(6);
  vocab.insert(wv("a", std::vector<double>(6, 0.5)));
  vocab.insert(wv("b", std::vector<double>(6, -0.5)));
  EncoderConfig cfg;
  cfg.superpixel = 1;
  const auto img = encode_description({"a", "b"}, vocab, cfg);
  // word a occupies x in {0,1}, word b x in {3,4}; gap column 2 is empty
  EXPECT_EQ(img.at(0, 0, 0), 191);
  EXPECT_EQ(img.at(0, 1, 0), 191);
  EXPECT_EQ(img.at(0, 2, 0), 0);
  EXPECT_EQ(img.at(0, 3, 0), 64);  // round(0.25 * 255)
  EXPECT_EQ(img.at(0, 4, 0), 64);
}

TEST(EncodeDescription, WrapsRowsAndKeepsOrder) {
  Vocabulary vocab(6);
  vocab.insert(wv("a", std::vector<double>(6, 0.5)));
  EncoderConfig cfg;
  cfg.superpixel = 1;
  cfg.canvas_w = 7;  // fits two 2-pixel blocks + gap, third word wraps
  cfg.canvas_h = 8;
  const auto img = encode_description({"a", "a", "a"}, vocab, cfg);
  EXPECT_EQ(img.at(0, 0, 0), 191);
  EXPECT_EQ(img.at(0, 3, 0), 191);
  EXPECT_EQ(img.at(2, 0, 0), 191);  // row advance of 1 + word_gap
  EXPECT_EQ(img.at(1, 0, 0), 0);
}

TEST(EncodeDescription, VerticalOverflowNamesToken) {
  Vocabulary vocab(6);
  vocab.insert(wv("filler", std::vector<double>(6, 0.5)));
  vocab.insert(wv("victim", std::vector<double>(6, 0.5)));
  EncoderConfig cfg;
  cfg.superpixel = 4;
  cfg.canvas_w = 16;  // one 2-pixel block per row
  cfg.canvas_h = 4;   // a single row of superpixels
  try {
    encode_description({"filler", "victim"}, vocab, cfg);
    FAIL() << "expected overflow";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("victim"), std::string::npos)
        << e.what();
  }
}

TEST(EncodeDescription, ColorLocality) {
  Rng rng(5);
  const EncoderConfig cfg;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> u(9), w(9);
    for (double& x : u) x = rng.uniform(-1.0, 1.0);
    double delta = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      w[i] = std::clamp(u[i] + rng.uniform(-0.2, 0.2), -1.0, 1.0);
      delta = std::max(delta, std::abs(u[i] - w[i]));
    }
    const auto bu = encode_word(wv("u", u), cfg);
    const auto bw = encode_word(wv("w", w), cfg);
    const int limit =
        static_cast<int>(std::ceil(delta / 2.0 * 255.0)) + 1;
    for (std::size_t p = 0; p < bu.size(); ++p) {
      for (int c = 0; c < 3; ++c) {
        EXPECT_LE(std::abs(int(bu[p][c]) - int(bw[p][c])), limit);
      }
    }
  }
}

TEST(Augment, HflipIsInvolution) {
  Rng rng(6);
  const auto canvas = testutil::random_canvas(64, 48, rng);
  const auto twice =
      augment_encoded(augment_encoded(canvas, AugmentMode::HFlip),
                      AugmentMode::HFlip);
  EXPECT_EQ(twice, canvas);
}

TEST(Augment, HflipMirrorsColumns) {
  Canvas canvas(2, 3);
  canvas.at(0, 0, 0) = 10;
  canvas.at(0, 2, 0) = 30;
  const auto flipped = augment_encoded(canvas, AugmentMode::HFlip);
  EXPECT_EQ(flipped.at(0, 0, 0), 30);
  EXPECT_EQ(flipped.at(0, 2, 0), 10);
}

TEST(Augment, CropEnlargeKeepsUniformCanvas) {
  Canvas canvas(256, 256);
  for (auto& b : canvas.data) b = 137;
  const auto out = augment_encoded(canvas, AugmentMode::Crop227Enlarge);
  EXPECT_EQ(out.height, 256);
  EXPECT_EQ(out.width, 256);
  for (auto b : out.data) ASSERT_EQ(b, 137);
}

TEST(Augment, CropEnlargeSamplesFromCenteredCrop) {
  Canvas canvas(256, 256);
  canvas.at(14, 14, 1) = 200;  // crop origin
  const auto out = augment_encoded(canvas, AugmentMode::Crop227Enlarge);
  EXPECT_EQ(out.at(0, 0, 1), 200);
}

TEST(Augment, CropTooSmallFails) {
  Canvas canvas(100, 100);
  EXPECT_THROW(augment_encoded(canvas, AugmentMode::Crop227Enlarge), Error);
}

TEST(Augment, DownsampleUniform) {
  Canvas canvas(256, 256);
  for (auto& b : canvas.data) b = 200;
  const auto out = augment_encoded(canvas, AugmentMode::Downsample128);
  EXPECT_EQ(out.height, 128);
  EXPECT_EQ(out.width, 128);
  for (auto b : out.data) ASSERT_EQ(b, 200);
}

TEST(Augment, DownsampleAveragesBlocks) {
  Canvas canvas(256, 256);
  canvas.at(0, 0, 0) = 100;
  canvas.at(0, 1, 0) = 110;
  canvas.at(1, 0, 0) = 120;
  canvas.at(1, 1, 0) = 131;
  const auto out = augment_encoded(canvas, AugmentMode::Downsample128);
  EXPECT_EQ(out.at(0, 0, 0), 115);  // round(461 / 4.0)
}

TEST(Augment, DownsampleWrongSizeFails) {
  Canvas canvas(100, 100);
  EXPECT_THROW(augment_encoded(canvas, AugmentMode::Downsample128), Error);
}

TEST(Tokenize, LowercasesSplitsStripsPunctuation) {
  const auto tokens = tokenize("A man, PLAYING tennis!  <on> the court.");
  const std::vector<std::string> expected{"a",   "man", "playing", "tennis",
                                          "on",  "the", "court"};
  EXPECT_EQ(tokens, expected);
}

TEST(Tokenize, DropsPurePunctuationTokens) {
  const auto tokens = tokenize("-- hello ... ");
  EXPECT_EQ(tokens, std::vector<std::string>{"hello"});
}

TEST(VocabularyIo, LoadWithHeader) {
  TempDir dir("vocab");
  testutil::write_file(dir / "v.txt",
                       "2 3\n"
                       "cat 0.1 0.2 0.3\n"
                       "dog -0.1 0 1\n");
  const auto vocab = load_word_vectors(dir / "v.txt");
  EXPECT_EQ(vocab.dim(), 3u);
  EXPECT_EQ(vocab.size(), 2u);
  ASSERT_NE(vocab.find("dog"), nullptr);
  EXPECT_DOUBLE_EQ(vocab.find("dog")->vector[2], 1.0);
  EXPECT_EQ(vocab.find("bird"), nullptr);
}

TEST(VocabularyIo, LoadWithoutHeader) {
  TempDir dir("vocab");
  testutil::write_file(dir / "v.txt", "cat 0.1 0.2\ndog 0.3 0.4\n");
  const auto vocab = load_word_vectors(dir / "v.txt");
  EXPECT_EQ(vocab.dim(), 2u);
  EXPECT_EQ(vocab.size(), 2u);
}

TEST(VocabularyIo, HeaderCountMismatchFails) {
  TempDir dir("vocab");
  testutil::write_file(dir / "v.txt", "3 2\ncat 0.1 0.2\n");
  EXPECT_THROW(load_word_vectors(dir / "v.txt"), InputError);
}

TEST(VocabularyIo, InconsistentDimensionFails) {
  TempDir dir("vocab");
  testutil::write_file(dir / "v.txt", "cat 0.1 0.2\ndog 0.3\n");
  EXPECT_THROW(load_word_vectors(dir / "v.txt"), InputError);
}

TEST(VocabularyIo, DuplicateWordFails) {
  TempDir dir("vocab");
  testutil::write_file(dir / "v.txt", "cat 0.1 0.2\ncat 0.3 0.4\n");
  EXPECT_THROW(load_word_vectors(dir / "v.txt"), InputError);
}

TEST(VocabularyIo, SaveLoadRoundTripPreservesOrder) {
  TempDir dir("vocab");
  const auto vocab = small_vocab(4, 5, 9);
  save_word_vectors(vocab, dir / "v.txt");
  const auto loaded = load_word_vectors(dir / "v.txt");
  ASSERT_EQ(loaded.size(), vocab.size());
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    EXPECT_EQ(loaded.entries()[i].word, vocab.entries()[i].word);
  }
}

TEST(Ppm, WriteReadRoundTrip) {
  TempDir dir("ppm");
  Rng rng(8);
  const auto canvas = testutil::random_canvas(33, 17, rng);
  write_ppm(canvas, dir / "c.ppm");
  EXPECT_EQ(read_ppm(dir / "c.ppm"), canvas);
}

TEST(Ppm, ReaderAcceptsComments) {
  TempDir dir("ppm");
  std::string body(6, '\0');
  testutil::write_file(dir / "c.ppm", "P6\n# comment\n2 1\n255\n" + body);
  const auto canvas = read_ppm(dir / "c.ppm");
  EXPECT_EQ(canvas.width, 2);
  EXPECT_EQ(canvas.height, 1);
}

TEST(Ppm, RejectsBadMagicAndTruncation) {
  TempDir dir("ppm");
  testutil::write_file(dir / "bad.ppm", "P5\n2 1\n255\nxxxxxx");
  EXPECT_THROW(read_ppm(dir / "bad.ppm"), InputError);
  testutil::write_file(dir / "short.ppm", "P6\n2 1\n255\nxx");
  EXPECT_THROW(read_ppm(dir / "short.ppm"), InputError);
}
