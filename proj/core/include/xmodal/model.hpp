#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xmodal/canvas.hpp"
#include "xmodal/embedding.hpp"
#include "xmodal/rng.hpp"

namespace xmodal {

// Dense row-major tensor of doubles.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  static Tensor zeros(std::vector<int> shape);
  std::size_t numel() const { return data.size(); }
};

// Backbone description, e.g. "pool4,conv8,pool2,conv16,pool2,fc128":
//   poolN  - N x N average pooling, stride N
//   convC  - 3x3 convolution to C channels, zero padding, ReLU
//   fcD    - trailing fully connected layer to the D-dimensional feature
enum class LayerKind { Pool, Conv };

struct LayerDesc {
  LayerKind kind;
  int arg;  // pool size or conv output channels
};

struct BackboneSpec {
  std::vector<LayerDesc> layers;
  int feature_dim = 128;
  std::string text;
};

BackboneSpec parse_backbone_spec(const std::string& text);

struct ConvParams {
  Tensor weight;  // [out_ch, in_ch, 3, 3]
  Tensor bias;    // [out_ch]
};

struct FcParams {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]
};

// Trainable state: backbone producing the latent feature plus the linear
// classifier used only as a training signal. Features are taken before the
// classifier.
struct ModelParams {
  BackboneSpec spec;
  int input_h = 0;
  int input_w = 0;
  int num_classes = 0;
  std::vector<ConvParams> convs;  // parallel to conv entries of spec.layers
  FcParams feature;
  FcParams classifier;

  int feature_dim() const { return spec.feature_dim; }
  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  std::vector<std::string> tensor_names() const;
};

ModelParams init_params(const BackboneSpec& spec, int input_h, int input_w,
                        int num_classes, Rng& rng);

// Maps a canvas to the latent feature vector. Deterministic.
std::vector<double> forward(const ModelParams& params, const Canvas& canvas);

// --- losses -----------------------------------------------------------

// Sum of squared distances of the features from their mean.
double center_distance(const std::vector<std::vector<double>>& features);

// Half the sum of center_distance over the per-class groups of a batch.
double center_loss(
    const std::vector<std::vector<std::vector<double>>>& class_groups);

// -log softmax(logits)[label], computed with max subtraction.
double softmax_cross_entropy(std::span<const double> logits, int label);

struct LossBreakdown {
  double softmax_loss = 0.0;
  double center_loss = 0.0;
  double total = 0.0;  // softmax_loss + lambda_center * center_loss
};

struct MiniBatch {
  std::vector<const Canvas*> inputs;
  std::vector<int> labels;  // contiguous class indices < num_classes
  std::vector<Modality> modalities;

  std::size_t size() const { return inputs.size(); }
  // (n_images, n_texts) contributed by one label
  std::pair<int, int> modality_counts(int label) const;
};

enum class AugmentationScheme { CfgStd, Cfg2, Cfg3 };
enum class DecayMode { LrSchedule, L2Penalty };

AugmentationScheme augmentation_from_string(const std::string& s);
const char* to_string(AugmentationScheme a);

struct TrainConfig {
  double lr = 0.05;
  double weight_decay = 5e-5;
  DecayMode decay = DecayMode::LrSchedule;
  int epochs = 100;
  int batch = 45;
  double lambda_center = 0.1;
  AugmentationScheme augmentation = AugmentationScheme::CfgStd;
  std::uint64_t seed = 0;
  std::string backbone = "pool4,conv8,pool2,conv16,pool2,conv32,pool2,fc128";
  // Off by default: per-class centers tracked as an exponential moving
  // average across batches instead of the in-batch mean.
  bool ema_centers = false;
  double ema_alpha = 0.5;

  void validate() const;
};

// Running per-class centers for the EMA mode.
struct ClassCenters {
  std::vector<std::vector<double>> centers;  // [num_classes][feature_dim]
  std::vector<bool> seen;
};

// Loss plus d(loss)/d(tensor) for every parameter tensor, ordered as
// ModelParams::tensors(). Centers are treated as constants: the center-loss
// feature gradient is lambda_center * (f_i - center_of_class(i)).
std::pair<LossBreakdown, std::vector<Tensor>> joint_loss_and_grads(
    const ModelParams& params, const MiniBatch& batch, const TrainConfig& cfg,
    ClassCenters* ema_state = nullptr);

// --- training ---------------------------------------------------------

// One dataset item as fed to the network.
struct CanvasItem {
  ItemId id = 0;
  ClassId class_id = 0;
  Modality modality = Modality::Image;
  Canvas canvas;
};

// Expands a dataset per the augmentation scheme: CfgStd keeps items as-is;
// Cfg2 adds a horizontally flipped copy of every image and a crop-enlarged
// copy of every text; Cfg3 applies Cfg2 and downsamples everything to
// 128x128. Augmented copies get fresh ids above the existing maximum.
std::vector<CanvasItem> apply_augmentation(const std::vector<CanvasItem>& items,
                                           AugmentationScheme scheme);

// The evaluation-time view of the same items (downsampled under Cfg3).
std::vector<CanvasItem> eval_view(const std::vector<CanvasItem>& items,
                                  AugmentationScheme scheme);

struct EpochStats {
  int epoch = 0;
  LossBreakdown loss;  // mean over the epoch's batches
};

struct TrainLog {
  std::vector<EpochStats> epochs;
};

// TSV `epoch\tsoftmax\tcenter\ttotal`.
void save_train_log(const TrainLog& log, const std::filesystem::path& path);

// Single-threaded, bit-reproducible given cfg.seed. Adam optimizer; the
// learning rate follows lr / (1 + weight_decay * epoch) in LrSchedule mode,
// or stays fixed with an L2 gradient penalty in L2Penalty mode.
std::pair<ModelParams, TrainLog> train(const std::vector<CanvasItem>& items,
                                       const TrainConfig& cfg);

// One record per item, order preserved. Parallel across items.
EmbeddingSet embed_dataset(const ModelParams& params,
                           const std::vector<CanvasItem>& items,
                           unsigned threads = 1);

// Mean distance between an item's L2-normalized feature and its class's
// normalized-feature mean; the collapse measure used to compare a trained
// model against its initialization.
double mean_intra_class_distance(const EmbeddingSet& set);

// --- checkpoints ------------------------------------------------------

// Binary: magic XMPARAM, version, backbone spec string, geometry, then the
// named tensors with shape headers as little-endian float32.
void save_checkpoint(const ModelParams& params,
                     const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace xmodal
