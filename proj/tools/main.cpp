#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "run_config.hpp"
#include "xmodal/dataset.hpp"
#include "xmodal/embedding.hpp"
#include "xmodal/encoder.hpp"
#include "xmodal/error.hpp"
#include "xmodal/metrics.hpp"
#include "xmodal/model.hpp"
#include "xmodal/parallel.hpp"
#include "xmodal/retrieval.hpp"
#include "xmodal/rng.hpp"
#include "xmodal/synthgen.hpp"

namespace fs = std::filesystem;
using namespace xmodal;
using cli::RunConfig;

namespace {

std::uint64_t stage_seed(std::uint64_t master, std::string_view stage) {
  return mix_seed(master, hash_label(stage));
}

// write-temp-then-rename so partially written outputs never appear under
// their final name
template <class Writer>
void write_atomic(const fs::path& path, Writer&& writer) {
  fs::path tmp = path;
  tmp += ".tmp";
  writer(tmp);
  fs::rename(tmp, path);
}

void write_text_atomic(const fs::path& path, const std::string& content) {
  write_atomic(path, [&](const fs::path& tmp) {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(format_msg("cannot write ", tmp.string()));
    out << content;
    out.flush();
    if (!out) throw Error(format_msg("write failed for ", tmp.string()));
  });
}

struct CommonOpts {
  std::string config_path;
  std::uint64_t seed = 0;
  unsigned threads = default_threads();

  RunConfig load_config() const {
    return config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
  }
};

// Canvases must match the checkpoint's input size; 256x256 inputs are
// downsampled automatically for a 128x128 model (the cfg-3 evaluation view).
std::vector<CanvasItem> adapt_to_model(const ModelParams& params,
                                       std::vector<CanvasItem> items) {
  for (auto& item : items) {
    if (item.canvas.height == params.input_h &&
        item.canvas.width == params.input_w) {
      continue;
    }
    if (item.canvas.height == 256 && item.canvas.width == 256 &&
        params.input_h == 128 && params.input_w == 128) {
      item.canvas = augment_encoded(item.canvas, AugmentMode::Downsample128);
      continue;
    }
    throw Error(format_msg("item ", item.id, ": canvas ", item.canvas.height,
                           "x", item.canvas.width, " does not fit model input ",
                           params.input_h, "x", params.input_w));
  }
  return items;
}

// --- encode --------------------------------------------------------------

struct EncodeOpts {
  CommonOpts common;
  std::string vocab_path;
  std::string manifest_path;
  std::string out_dir;
};

void cmd_encode(const EncodeOpts& opt) {
  RunConfig cfg = opt.common.load_config();
  const EncoderConfig enc_cfg = cfg.encoder_config();
  const Vocabulary vocab = load_word_vectors(opt.vocab_path);
  const auto manifest = load_manifest(opt.manifest_path);

  std::vector<ManifestItem> captions;
  for (const auto& item : manifest) {
    if (item.modality == Modality::Text) captions.push_back(item);
  }
  fs::create_directories(opt.out_dir);

  EncodeStats stats;
  const auto encoded =
      encode_items(captions, vocab, enc_cfg, &stats, opt.common.threads);
  for (const auto& item : encoded) {
    const fs::path path =
        fs::path(opt.out_dir) / format_msg("enc_", item.id, ".ppm");
    write_atomic(path, [&](const fs::path& tmp) { write_ppm(item.canvas, tmp); });
  }
  std::cout << "encoded " << encoded.size() << " captions ("
            << stats.oov << " out-of-vocabulary tokens skipped)\n";
}

// --- synth ---------------------------------------------------------------

struct SynthOpts {
  CommonOpts common;
  std::string out_dir;
};

void cmd_synth(const SynthOpts& opt) {
  RunConfig cfg = opt.common.load_config();
  SynthConfig synth_cfg = cfg.synth_config();
  synth_cfg.seed = stage_seed(opt.common.seed, "synth");
  const SynthDataset ds = generate(synth_cfg);
  save_synth_dataset(ds, opt.out_dir);
  std::cout << "wrote " << ds.items.size() << " items, vocabulary of "
            << ds.vocab.size() << " words to " << opt.out_dir << "\n";
}

// --- train ---------------------------------------------------------------

struct TrainOpts {
  CommonOpts common;
  std::string manifest_path;
  std::string vocab_path;
  std::string out_dir;
  std::string aug;  // optional override
};

void cmd_train(const TrainOpts& opt) {
  RunConfig cfg = opt.common.load_config();
  if (!opt.aug.empty()) cfg.set("train.augmentation", opt.aug);
  TrainConfig train_cfg = cfg.train_config();
  train_cfg.seed = stage_seed(opt.common.seed, "train");

  const Vocabulary vocab = load_word_vectors(opt.vocab_path);
  const auto manifest = load_manifest(opt.manifest_path);
  const auto items = encode_items(manifest, vocab, cfg.encoder_config(),
                                  nullptr, opt.common.threads);

  auto [params, log] = train(items, train_cfg);
  fs::create_directories(opt.out_dir);
  write_atomic(fs::path(opt.out_dir) / "model.xmparam",
               [&](const fs::path& tmp) { save_checkpoint(params, tmp); });
  write_atomic(fs::path(opt.out_dir) / "train_log.tsv",
               [&](const fs::path& tmp) { save_train_log(log, tmp); });
  if (!log.epochs.empty()) {
    std::cout << "trained " << log.epochs.size() << " epochs, final loss "
              << format_component(log.epochs.back().loss.total) << "\n";
  } else {
    std::cout << "trained 0 epochs (initialization only)\n";
  }
}

// --- embed ---------------------------------------------------------------

struct EmbedOpts {
  CommonOpts common;
  std::string model_path;
  std::string manifest_path;
  std::string vocab_path;
  std::string out_file;
};

void cmd_embed(const EmbedOpts& opt) {
  RunConfig cfg = opt.common.load_config();
  const ModelParams params = load_checkpoint(opt.model_path);
  const Vocabulary vocab = load_word_vectors(opt.vocab_path);
  const auto manifest = load_manifest(opt.manifest_path);
  auto items = encode_items(manifest, vocab, cfg.encoder_config(), nullptr,
                            opt.common.threads);
  items = adapt_to_model(params, std::move(items));
  const EmbeddingSet set = embed_dataset(params, items, opt.common.threads);
  write_atomic(opt.out_file,
               [&](const fs::path& tmp) { save_embedding_set(set, tmp); });
  std::cout << "embedded " << set.size() << " items (dim " << set.dim()
            << ") to " << opt.out_file << "\n";
}

// --- retrieve --------------------------------------------------------------

struct RetrieveOpts {
  CommonOpts common;
  std::string embeddings_path;
  std::string direction = "both";
  std::size_t k_max = 10;
  std::string out_dir;
};

void cmd_retrieve(const RetrieveOpts& opt) {
  const EmbeddingSet set = load_embedding_set(opt.embeddings_path);
  fs::create_directories(opt.out_dir);
  std::vector<Direction> dirs;
  if (opt.direction == "both") {
    dirs = {Direction::ImageToText, Direction::TextToImage};
  } else {
    dirs = {direction_from_string(opt.direction)};
  }
  for (Direction dir : dirs) {
    const auto lists = retrieve(dir, set, opt.k_max);
    const fs::path path =
        fs::path(opt.out_dir) / format_msg("ranked_", to_string(dir), ".tsv");
    write_atomic(path,
                 [&](const fs::path& tmp) { save_ranked_lists(lists, tmp); });
    std::cout << to_string(dir) << ": " << lists.size() << " queries -> "
              << path.string() << "\n";
  }
}

// --- evaluate --------------------------------------------------------------

struct EvaluateOpts {
  CommonOpts common;
  std::string embeddings_path;
  std::string k_list;
  std::string scale;
  bool exclude_pairs = false;
  std::string report_out;
};

void cmd_evaluate(const EvaluateOpts& opt) {
  RunConfig cfg = opt.common.load_config();
  if (!opt.k_list.empty()) cfg.set("metric.ks", opt.k_list);
  if (!opt.scale.empty()) cfg.set("metric.scale", opt.scale);
  if (opt.exclude_pairs) cfg.set("metric.exclude_pairs", "1");
  const MetricConfig metric_cfg = cfg.metric_config();

  const EmbeddingSet set = load_embedding_set(opt.embeddings_path);
  const auto reports = evaluate(set, metric_cfg);
  std::cout << render_report(reports, ReportStyle::AlignedTable);
  if (!opt.report_out.empty()) {
    write_text_atomic(opt.report_out, render_report(reports, ReportStyle::Tsv));
  }
}

// --- pipeline --------------------------------------------------------------

struct PipelineOpts {
  CommonOpts common;
  bool synth_source = false;
  std::string manifest_path;
  std::string vocab_path;
  std::string out_dir;
  std::string aug;
  std::string k_list;
  std::string scale;
  bool exclude_pairs = false;
};

void cmd_pipeline(const PipelineOpts& opt) {
  if (opt.common.config_path.empty()) {
    throw InputError("pipeline requires --config");
  }
  RunConfig cfg = opt.common.load_config();
  if (!opt.aug.empty()) cfg.set("train.augmentation", opt.aug);
  if (!opt.k_list.empty()) cfg.set("metric.ks", opt.k_list);
  if (!opt.scale.empty()) cfg.set("metric.scale", opt.scale);
  if (opt.exclude_pairs) cfg.set("metric.exclude_pairs", "1");

  cfg.require_keys({"train.lr", "train.epochs", "train.batch"});
  if (opt.synth_source) {
    cfg.require_keys({"synth.classes"});
  } else if (opt.manifest_path.empty() || opt.vocab_path.empty()) {
    throw InputError("pipeline needs --synth or both --manifest and --vocab");
  }

  const fs::path out(opt.out_dir);
  fs::create_directories(out);

  std::string stage = "setup";
  try {
    std::vector<ManifestItem> manifest;
    Vocabulary vocab(1);
    if (opt.synth_source) {
      stage = "synth";
      std::cerr << "[synth] generating dataset\n";
      SynthConfig synth_cfg = cfg.synth_config();
      synth_cfg.seed = stage_seed(opt.common.seed, "synth");
      SynthDataset ds = generate(synth_cfg);
      save_synth_dataset(ds, out / "dataset");
      manifest = std::move(ds.items);
      vocab = std::move(ds.vocab);
    } else {
      stage = "load";
      std::cerr << "[load] reading manifest and vocabulary\n";
      manifest = load_manifest(opt.manifest_path);
      vocab = load_word_vectors(opt.vocab_path);
    }

    stage = "encode";
    std::cerr << "[encode] rendering text descriptions\n";
    EncodeStats stats;
    auto items = encode_items(manifest, vocab, cfg.encoder_config(), &stats,
                              opt.common.threads);
    std::cerr << "[encode] " << stats.placed << " words placed, " << stats.oov
              << " OOV tokens skipped\n";

    stage = "train";
    std::cerr << "[train] fitting model\n";
    TrainConfig train_cfg = cfg.train_config();
    train_cfg.seed = stage_seed(opt.common.seed, "train");
    auto [params, log] = train(items, train_cfg);
    write_atomic(out / "model.xmparam",
                 [&](const fs::path& tmp) { save_checkpoint(params, tmp); });
    write_atomic(out / "train_log.tsv",
                 [&](const fs::path& tmp) { save_train_log(log, tmp); });

    stage = "embed";
    std::cerr << "[embed] extracting features\n";
    const auto eval_items = eval_view(items, train_cfg.augmentation);
    const EmbeddingSet set =
        embed_dataset(params, eval_items, opt.common.threads);
    write_atomic(out / "embeddings.tsv",
                 [&](const fs::path& tmp) { save_embedding_set(set, tmp); });

    stage = "retrieve";
    std::cerr << "[retrieve] ranking\n";
    const MetricConfig metric_cfg = cfg.metric_config();
    const std::size_t k_max = static_cast<std::size_t>(metric_cfg.ks.back());
    for (Direction dir : {Direction::ImageToText, Direction::TextToImage}) {
      const auto lists = retrieve(dir, set, k_max);
      write_atomic(out / format_msg("ranked_", to_string(dir), ".tsv"),
                   [&](const fs::path& tmp) { save_ranked_lists(lists, tmp); });
    }

    stage = "evaluate";
    std::cerr << "[evaluate] computing metrics\n";
    const auto reports = evaluate(set, metric_cfg);
    const std::string table = render_report(reports, ReportStyle::AlignedTable);
    write_text_atomic(out / "report.txt", table);
    write_text_atomic(out / "report.tsv",
                      render_report(reports, ReportStyle::Tsv));
    std::cout << table;
  } catch (const std::exception& e) {
    throw Error(format_msg("pipeline stage '", stage, "' failed: ", e.what()));
  }
}

// --- wiring ----------------------------------------------------------------

void add_common(CLI::App* cmd, CommonOpts& common) {
  cmd->add_option("--config", common.config_path, "key=value config file");
  cmd->add_option("--seed", common.seed, "master seed");
  cmd->add_option("--threads", common.threads, "worker threads");
}

int run_guarded(const std::function<void()>& fn) {
  try {
    fn();
    return 0;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cross-modal retrieval experiments"};
  app.require_subcommand(1);

  EncodeOpts encode_opts;
  auto* encode = app.add_subcommand("encode", "render captions as images");
  add_common(encode, encode_opts.common);
  encode->add_option("--vocab", encode_opts.vocab_path)->required();
  encode->add_option("--manifest", encode_opts.manifest_path)->required();
  encode->add_option("--out", encode_opts.out_dir)->required();

  SynthOpts synth_opts;
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth, synth_opts.common);
  synth->add_option("--out", synth_opts.out_dir)->required();

  TrainOpts train_opts;
  auto* train_cmd = app.add_subcommand("train", "train the embedding model");
  add_common(train_cmd, train_opts.common);
  train_cmd->add_option("--manifest", train_opts.manifest_path)->required();
  train_cmd->add_option("--vocab", train_opts.vocab_path)->required();
  train_cmd->add_option("--out", train_opts.out_dir)->required();
  train_cmd->add_option("--aug", train_opts.aug,
                        "augmentation: cfg-std|cfg-2|cfg-3");

  EmbedOpts embed_opts;
  auto* embed = app.add_subcommand("embed", "extract features to TSV");
  add_common(embed, embed_opts.common);
  embed->add_option("--model", embed_opts.model_path)->required();
  embed->add_option("--manifest", embed_opts.manifest_path)->required();
  embed->add_option("--vocab", embed_opts.vocab_path)->required();
  embed->add_option("--out", embed_opts.out_file)->required();

  RetrieveOpts retrieve_opts;
  auto* retrieve_cmd =
      app.add_subcommand("retrieve", "rank gallery items per query");
  add_common(retrieve_cmd, retrieve_opts.common);
  retrieve_cmd->add_option("--embeddings", retrieve_opts.embeddings_path)
      ->required();
  retrieve_cmd->add_option("--direction", retrieve_opts.direction,
                           "i2t|t2i|both");
  retrieve_cmd->add_option("--k-max", retrieve_opts.k_max);
  retrieve_cmd->add_option("--out", retrieve_opts.out_dir)->required();

  EvaluateOpts evaluate_opts;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "compute R@K and lambda@K");
  add_common(evaluate_cmd, evaluate_opts.common);
  evaluate_cmd->add_option("--embeddings", evaluate_opts.embeddings_path)
      ->required();
  evaluate_cmd->add_option("--k", evaluate_opts.k_list, "comma-separated Ks");
  evaluate_cmd->add_option("--scale", evaluate_opts.scale, "unit|percent");
  evaluate_cmd->add_flag("--exclude-pairs", evaluate_opts.exclude_pairs,
                         "also report pair-excluded lambda@K");
  evaluate_cmd->add_option("--report-out", evaluate_opts.report_out,
                           "write TSV report here");

  PipelineOpts pipeline_opts;
  auto* pipeline = app.add_subcommand(
      "pipeline", "encode -> train -> embed -> retrieve -> evaluate");
  add_common(pipeline, pipeline_opts.common);
  pipeline->add_flag("--synth", pipeline_opts.synth_source,
                     "generate the dataset instead of loading one");
  pipeline->add_option("--manifest", pipeline_opts.manifest_path);
  pipeline->add_option("--vocab", pipeline_opts.vocab_path);
  pipeline->add_option("--out", pipeline_opts.out_dir)->required();
  pipeline->add_option("--aug", pipeline_opts.aug,
                       "augmentation: cfg-std|cfg-2|cfg-3");
  pipeline->add_option("--k", pipeline_opts.k_list, "comma-separated Ks");
  pipeline->add_option("--scale", pipeline_opts.scale, "unit|percent");
  pipeline->add_flag("--exclude-pairs", pipeline_opts.exclude_pairs);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (encode->parsed()) return run_guarded([&] { cmd_encode(encode_opts); });
  if (synth->parsed()) return run_guarded([&] { cmd_synth(synth_opts); });
  if (train_cmd->parsed()) return run_guarded([&] { cmd_train(train_opts); });
  if (embed->parsed()) return run_guarded([&] { cmd_embed(embed_opts); });
  if (retrieve_cmd->parsed()) {
    return run_guarded([&] { cmd_retrieve(retrieve_opts); });
  }
  if (evaluate_cmd->parsed()) {
    return run_guarded([&] { cmd_evaluate(evaluate_opts); });
  }
  if (pipeline->parsed()) return run_guarded([&] { cmd_pipeline(pipeline_opts); });
  return 2;
}
