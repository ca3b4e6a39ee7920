#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "xmodal/canvas.hpp"
#include "xmodal/embedding.hpp"
#include "xmodal/encoder.hpp"
#include "xmodal/model.hpp"

namespace xmodal {

// One manifest row: an image item carries a canvas, a text item carries its
// tokens.
struct ManifestItem {
  ItemId id = 0;
  ClassId class_id = 0;
  Modality modality = Modality::Image;
  Canvas canvas;                    // images
  std::vector<std::string> tokens;  // texts
};

// Manifest TSV: `id\tclass\tmodality\tpath-or-tokens`. Image rows reference
// PPM files relative to the manifest; text rows list space-separated tokens.
std::vector<ManifestItem> load_manifest(const std::filesystem::path& path);

// Writes the manifest plus one PPM per image item under `dir` (canvases go
// to dir/ppm/img_<id>.ppm).
void save_manifest(const std::vector<ManifestItem>& items,
                   const std::filesystem::path& dir,
                   const std::string& manifest_name = "manifest.tsv");

// Turns manifest items into network inputs: image canvases pass through,
// text tokens are rendered with the vocabulary. Parallel across items.
std::vector<CanvasItem> encode_items(const std::vector<ManifestItem>& items,
                                     const Vocabulary& vocab,
                                     const EncoderConfig& cfg,
                                     EncodeStats* stats = nullptr,
                                     unsigned threads = 1);

}  // namespace xmodal
