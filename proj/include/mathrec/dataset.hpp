#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mathrec/glyphs.hpp"
#include "mathrec/image.hpp"
#include "mathrec/segmentation.hpp"
#include "mathrec/tokens.hpp"

namespace mathrec {

enum class Split { Train, Valid, Test };

std::string split_name(Split s);
Split parse_split(const std::string& s);

struct ManifestRecord {
  Split split = Split::Train;
  std::filesystem::path image;  // as written in the manifest
  std::string latex;
  int line = 0;                 // 1-based source line, 0 when built in memory
};

struct DatasetManifest {
  std::filesystem::path root;  // relative image paths resolve against this
  std::vector<ManifestRecord> records;

  std::filesystem::path resolve(const ManifestRecord& r) const;
  std::vector<ManifestRecord> split(Split s) const;
};

/// Reads `split<TAB>image_path<TAB>latex` lines. Blank lines are skipped.
/// Rejects malformed lines, missing images (when `check_images`), duplicate
/// (image, latex) pairs and images listed under two splits.
DatasetManifest ingest(const std::filesystem::path& path, bool check_images = true);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// An image with its target transcription. `id` is the image file stem.
struct LabeledImage {
  std::string id;
  GrayImage image;
  std::vector<Token> target;
};

std::vector<LabeledImage> load_images(const DatasetManifest& manifest, Split split);

// ---------------------------------------------------------------------------
// Synthetic corpus

struct SyntheticOptions {
  std::size_t count = 100;
  int max_depth = 2;
  std::uint64_t seed = 1;
  std::size_t valid_count = 0;  // records after the training block
  std::size_t test_count = 0;   // final records
  std::size_t max_tokens = 24;
};

/// Distinct expressions over atoms, + - = \times, parentheses, scripts and
/// simple fractions. Depth 0 yields single atoms. Deterministic per seed.
std::vector<std::string> generate_expressions(const SyntheticOptions& opt, const GlyphAtlas& atlas = GlyphAtlas::standard());

struct SyntheticItem {
  LabeledImage labeled;
  std::string latex;
  Split split = Split::Train;
  std::vector<BoundingBox> boxes;  // ground-truth stroke boxes in image coordinates
};

std::vector<SyntheticItem> generate_synthetic(const SyntheticOptions& opt, const GlyphAtlas& atlas = GlyphAtlas::standard(),
                                              const RenderStyle& style = {});

/// Writes images/<id>.png, manifest.tsv and boxes.jsonl under `dir`.
DatasetManifest write_synthetic(const std::vector<SyntheticItem>& items, const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Threshold augmentation

struct AugmentationPlan {
  std::vector<int> thresholds{160, 180, 200};
  int eval_threshold = 160;

  void validate() const;
};

struct Sample {
  std::string image_id;
  int threshold = 160;
  Segmentation segmentation;
  std::vector<Token> target;
};

struct AugmentResult {
  std::vector<Sample> samples;
  std::vector<std::string> warnings;  // one per dropped (image, threshold)
};

/// One sample per image and threshold, in image-major order. Samples with
/// identical segmentations are kept.
AugmentResult augment(const std::vector<LabeledImage>& images, const std::vector<int>& thresholds,
                      SegmentationConfig base = {});
AugmentResult augment_training(const std::vector<LabeledImage>& images, const AugmentationPlan& plan);
AugmentResult prepare_evaluation(const std::vector<LabeledImage>& images, const AugmentationPlan& plan);

}  // namespace mathrec
