#include <gtest/gtest.h>

#include <algorithm>

#include "test_util.hpp"
#include "xmodal/embedding.hpp"
#include "xmodal/error.hpp"

using namespace xmodal;
using testutil::TempDir;

namespace {

EmbeddingRecord rec(ItemId id, ClassId cls, Modality m,
                    std::vector<double> v) {
  return EmbeddingRecord{id, cls, m, std::move(v)};
}

EmbeddingSet random_set(std::size_t n, std::size_t dim, Rng& rng) {
  std::vector<EmbeddingRecord> records;
  for (std::size_t i = 0; i < n; ++i) {
    records.push_back(rec(i, static_cast<ClassId>(rng.below(3)),
                          rng.below(2) ? Modality::Text : Modality::Image,
                          testutil::random_grid_vector(dim, rng)));
  }
  return EmbeddingSet(dim, std::move(records));
}

}  // namespace

TEST(EmbeddingSet, CountsAndClassCount) {
  EmbeddingSet set(3, {rec(0, 0, Modality::Image, {1, 0, 0}),
                       rec(1, 0, Modality::Text, {0, 1, 0})});
  EXPECT_EQ(set.size(), 2u);
  EXPECT_EQ(set.class_count(), 1u);
  EXPECT_EQ(set.dim(), 3u);
}

TEST(EmbeddingSet, RejectsDuplicateIds) {
  EXPECT_THROW(EmbeddingSet(2, {rec(7, 0, Modality::Image, {1, 0}),
                                rec(7, 1, Modality::Text, {0, 1})}),
               InputError);
}

TEST(EmbeddingSet, RejectsDimensionMismatch) {
  EXPECT_THROW(EmbeddingSet(3, {rec(0, 0, Modality::Image, {1, 0})}),
               InputError);
}

TEST(EmbeddingSet, RejectsNonFinite) {
  EXPECT_THROW(
      EmbeddingSet(2, {rec(0, 0, Modality::Image, {1, std::nan("")})}),
      InputError);
}

TEST(EmbeddingIo, LoadTwoRowFile) {
  TempDir dir("emb");
  testutil::write_file(dir / "s.tsv",
                       "XMODAL\t1\t3\n"
                       "0\t0\timage\t1\t0\t0\n"
                       "1\t0\ttext\t0.5\t0.25\t-1\n");
  const auto set = load_embedding_set(dir / "s.tsv");
  EXPECT_EQ(set.size(), 2u);
  EXPECT_EQ(set.class_count(), 1u);
  EXPECT_EQ(set.dim(), 3u);
  EXPECT_EQ(set[0].id, 0u);
  EXPECT_EQ(set[1].modality, Modality::Text);
  EXPECT_DOUBLE_EQ(set[1].vector[1], 0.25);
}

TEST(EmbeddingIo, DimensionMismatchNamesLine) {
  TempDir dir("emb");
  testutil::write_file(dir / "bad.tsv",
                       "XMODAL\t1\t3\n"
                       "0\t0\timage\t1\t0\t0\n"
                       "1\t0\timage\t1\t0\t0\n"
                       "2\t0\timage\t1\t0\t0\n"
                       "3\t0\timage\t1\t2\t3\t4\n");
  try {
    load_embedding_set(dir / "bad.tsv");
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("line 5"), std::string::npos)
        << e.what();
  }
}

TEST(EmbeddingIo, MalformedHeader) {
  TempDir dir("emb");
  testutil::write_file(dir / "h.tsv", "XMODL\t1\t3\n");
  EXPECT_THROW(load_embedding_set(dir / "h.tsv"), InputError);
  testutil::write_file(dir / "v.tsv", "XMODAL\t9\t3\n");
  EXPECT_THROW(load_embedding_set(dir / "v.tsv"), InputError);
  testutil::write_file(dir / "e.tsv", "");
  EXPECT_THROW(load_embedding_set(dir / "e.tsv"), InputError);
}

TEST(EmbeddingIo, DuplicateIdNamesLine) {
  TempDir dir("emb");
  testutil::write_file(dir / "d.tsv",
                       "XMODAL\t1\t2\n"
                       "0\t0\timage\t1\t0\n"
                       "0\t1\ttext\t0\t1\n");
  try {
    load_embedding_set(dir / "d.tsv");
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(EmbeddingIo, NonFiniteComponentRejected) {
  TempDir dir("emb");
  testutil::write_file(dir / "n.tsv",
                       "XMODAL\t1\t2\n"
                       "0\t0\timage\tnan\t0\n");
  EXPECT_THROW(load_embedding_set(dir / "n.tsv"), InputError);
}

TEST(EmbeddingIo, SaveEmptyIsHeaderOnly) {
  TempDir dir("emb");
  save_embedding_set(EmbeddingSet(4), dir / "empty.tsv");
  EXPECT_EQ(testutil::read_file(dir / "empty.tsv"), "XMODAL\t1\t4\n");
}

TEST(EmbeddingIo, SaveOneRecordExactBytes) {
  TempDir dir("emb");
  EmbeddingSet set(2, {rec(0, 0, Modality::Image, {1, 0})});
  save_embedding_set(set, dir / "one.tsv");
  EXPECT_EQ(testutil::read_file(dir / "one.tsv"),
            "XMODAL\t1\t2\n0\t0\timage\t1\t0\n");
}

TEST(EmbeddingIo, RoundTripFieldByField) {
  TempDir dir("emb");
  Rng rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    const auto set = random_set(rng.below(20), 1 + rng.below(8), rng);
    save_embedding_set(set, dir / "rt.tsv");
    const auto loaded = load_embedding_set(dir / "rt.tsv");
    ASSERT_EQ(loaded.size(), set.size());
    ASSERT_EQ(loaded.dim(), set.dim());
    for (std::size_t i = 0; i < set.size(); ++i) {
      EXPECT_EQ(loaded[i].id, set[i].id);
      EXPECT_EQ(loaded[i].class_id, set[i].class_id);
      EXPECT_EQ(loaded[i].modality, set[i].modality);
      ASSERT_EQ(loaded[i].vector.size(), set[i].vector.size());
      for (std::size_t d = 0; d < set.dim(); ++d) {
        EXPECT_EQ(loaded[i].vector[d], set[i].vector[d]);
      }
    }
  }
}

TEST(EmbeddingIo, SaveLoadSaveByteIdentical) {
  TempDir dir("emb");
  Rng rng(7);
  // arbitrary doubles, not grid-aligned
  std::vector<EmbeddingRecord> records;
  for (std::size_t i = 0; i < 25; ++i) {
    std::vector<double> v(5);
    for (double& x : v) x = rng.gaussian();
    records.push_back(rec(i, static_cast<ClassId>(i % 4),
                          i % 2 ? Modality::Text : Modality::Image, v));
  }
  const EmbeddingSet set(5, std::move(records));
  save_embedding_set(set, dir / "a.tsv");
  const auto loaded = load_embedding_set(dir / "a.tsv");
  save_embedding_set(loaded, dir / "b.tsv");
  EXPECT_EQ(testutil::read_file(dir / "a.tsv"),
            testutil::read_file(dir / "b.tsv"));
}

TEST(Normalize, ThreeFourFive) {
  const auto n = l2_normalize(std::vector<double>{3, 4});
  EXPECT_NEAR(n[0], 0.6, 1e-15);
  EXPECT_NEAR(n[1], 0.8, 1e-15);
}

TEST(Normalize, UnitVectorFixedPoint) {
  const std::vector<double> v{0.0, 1.0, 0.0};
  const auto n = l2_normalize(v);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(n[i], v[i], 1e-15);
}

TEST(Normalize, ZeroVectorFails) {
  EXPECT_THROW(l2_normalize(std::vector<double>{0, 0}), Error);
}

TEST(Normalize, Idempotent) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v(1 + rng.below(16));
    for (double& x : v) x = rng.gaussian() * 10.0;
    double sq = 0.0;
    for (double x : v) sq += x * x;
    if (sq == 0.0) continue;
    const auto once = l2_normalize(v);
    const auto twice = l2_normalize(once);
    for (std::size_t i = 0; i < v.size(); ++i) {
      EXPECT_NEAR(once[i], twice[i], 1e-12);
    }
  }
}

TEST(Split, CountsPerModality) {
  std::vector<EmbeddingRecord> records;
  ItemId id = 0;
  for (ClassId c = 0; c < 2; ++c) {
    records.push_back(rec(id++, c, Modality::Image, {1, 0}));
    for (int t = 0; t < 5; ++t) {
      records.push_back(rec(id++, c, Modality::Text, {0, 1}));
    }
  }
  const EmbeddingSet set(2, std::move(records));
  const auto [images, texts] = split_by_modality(set);
  EXPECT_EQ(images.size(), 2u);
  EXPECT_EQ(texts.size(), 10u);
  EXPECT_EQ(images.size() + texts.size(), set.size());
}

TEST(Split, AllImagesGivesEmptyTextSide) {
  const EmbeddingSet set(2, {rec(0, 0, Modality::Image, {1, 0}),
                             rec(1, 1, Modality::Image, {0, 1})});
  const auto [images, texts] = split_by_modality(set);
  EXPECT_EQ(images.size(), 2u);
  EXPECT_TRUE(texts.empty());
}

TEST(Split, UnionEqualsInput) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto set = random_set(rng.below(30), 3, rng);
    const auto [images, texts] = split_by_modality(set);
    EXPECT_EQ(images.size() + texts.size(), set.size());

    std::vector<EmbeddingRecord> merged;
    for (const auto& r : images.records()) merged.push_back(r);
    for (const auto& r : texts.records()) merged.push_back(r);
    std::sort(merged.begin(), merged.end(),
              [](const auto& a, const auto& b) { return a.id < b.id; });
    std::vector<EmbeddingRecord> expected = set.records();
    std::sort(expected.begin(), expected.end(),
              [](const auto& a, const auto& b) { return a.id < b.id; });
    ASSERT_EQ(merged.size(), expected.size());
    for (std::size_t i = 0; i < merged.size(); ++i) {
      EXPECT_EQ(merged[i].id, expected[i].id);
      EXPECT_EQ(merged[i].class_id, expected[i].class_id);
      EXPECT_EQ(merged[i].modality, expected[i].modality);
      EXPECT_EQ(merged[i].vector, expected[i].vector);
    }
  }
}
