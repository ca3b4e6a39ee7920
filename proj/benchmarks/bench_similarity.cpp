#include <benchmark/benchmark.h>

#include "xmodal/embedding.hpp"
#include "xmodal/encoder.hpp"
#include "xmodal/model.hpp"
#include "xmodal/retrieval.hpp"
#include "xmodal/rng.hpp"

namespace {

using namespace xmodal;

EmbeddingSet random_set(std::size_t n, std::size_t dim, std::uint64_t seed,
                        ItemId id_base) {
  Rng rng(seed);
  std::vector<EmbeddingRecord> records(n);
  for (std::size_t i = 0; i < n; ++i) {
    records[i].id = id_base + i;
    records[i].class_id = static_cast<ClassId>(i % 16);
    records[i].modality = Modality::Image;
    records[i].vector.resize(dim);
    for (double& v : records[i].vector) v = rng.uniform(-1.0, 1.0);
  }
  return EmbeddingSet(dim, std::move(records));
}

// Unblocked reference: one cosine call per entry.
void naive_similarity(const EmbeddingSet& q, const EmbeddingSet& g,
                      std::vector<double>& out) {
  for (std::size_t i = 0; i < q.size(); ++i) {
    for (std::size_t j = 0; j < g.size(); ++j) {
      out[i * g.size() + j] = cosine(q[i].vector, g[j].vector);
    }
  }
}

void BM_SimilarityBlocked(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto d = static_cast<std::size_t>(state.range(1));
  const auto queries = random_set(n, d, 1, 0);
  const auto gallery = random_set(n, d, 2, n);
  for (auto _ : state) {
    auto m = similarity_matrix(queries, gallery);
    benchmark::DoNotOptimize(m.values.data());
  }
  state.SetItemsProcessed(state.iterations() * n * n);
}
BENCHMARK(BM_SimilarityBlocked)->Args({256, 128})->Args({1024, 128})->Args({2048, 128});

void BM_SimilarityNaive(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto d = static_cast<std::size_t>(state.range(1));
  const auto queries = random_set(n, d, 1, 0);
  const auto gallery = random_set(n, d, 2, n);
  std::vector<double> out(n * n);
  for (auto _ : state) {
    naive_similarity(queries, gallery, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * n * n);
}
BENCHMARK(BM_SimilarityNaive)->Args({256, 128})->Args({1024, 128});

void BM_RankTopK(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto queries = random_set(n, 128, 1, 0);
  const auto gallery = random_set(n, 128, 2, n);
  for (auto _ : state) {
    auto lists = rank(queries, gallery, 10);
    benchmark::DoNotOptimize(lists.data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_RankTopK)->Arg(1024)->Arg(2048);

void BM_EncodeDescription(benchmark::State& state) {
  Rng rng(7);
  Vocabulary vocab(15);
  std::vector<std::string> tokens;
  for (int i = 0; i < 12; ++i) {
    WordVector wv;
    wv.word = "word" + std::to_string(i);
    wv.vector.resize(15);
    for (double& v : wv.vector) v = rng.uniform(-1.0, 1.0);
    vocab.insert(wv);
    tokens.push_back(wv.word);
  }
  const EncoderConfig cfg;
  for (auto _ : state) {
    auto img = encode_description(tokens, vocab, cfg);
    benchmark::DoNotOptimize(img.data.data());
  }
}
BENCHMARK(BM_EncodeDescription);

void BM_ModelForward(benchmark::State& state) {
  Rng rng(11);
  const auto spec = parse_backbone_spec("pool4,conv8,pool2,conv16,pool2,conv32,pool2,fc128");
  const ModelParams params = init_params(spec, 256, 256, 16, rng);
  Canvas canvas(256, 256);
  for (auto& b : canvas.data) b = static_cast<std::uint8_t>(rng.below(256));
  for (auto _ : state) {
    auto f = forward(params, canvas);
    benchmark::DoNotOptimize(f.data());
  }
}
BENCHMARK(BM_ModelForward);

}  // namespace

int main(int argc, char** argv) {
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  return 0;
}
