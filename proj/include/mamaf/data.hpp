#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mamaf/model.hpp"
#include "mamaf/tensor.hpp"

namespace mamaf {

inline constexpr int kNegative = 0;
inline constexpr int kPositive = 1;

/// One subject: the four examination recordings plus its binary label.
struct VideoSample {
  std::string subject_id;
  int label = kNegative;
  std::array<std::string, kNumViews> views;  ///< frame-file paths, relative to the manifest directory
  std::array<Index, kNumViews> frame_counts{};
  std::optional<std::string> subtype;       ///< e.g. "stroke" / "tia"; never used by the model
  std::optional<std::string> deficit_side;  ///< synthetic cohorts only: "left" / "right"
};

struct Manifest {
  std::string name = "dataset";
  Index resolution = 0;
  std::uint64_t seed = 0;
  std::vector<VideoSample> samples;
  std::filesystem::path root;  ///< directory holding manifest.jsonl; not serialized

  std::size_t count(int label) const;
  const VideoSample& find(const std::string& subject_id) const;
  /// Unique ids, binary labels, both classes present, four views each.
  void validate() const;
};

/// manifest.jsonl (one sample per line) plus dataset.json (name, resolution, seed).
void write_manifest(const Manifest& manifest, const std::filesystem::path& dir);
Manifest read_manifest(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Frame files
// ---------------------------------------------------------------------------

/// 8-bit frames, [frames, height, width, channels] row-major.
struct RawVideo {
  Index frames = 0, height = 0, width = 0, channels = 3;
  std::vector<std::uint8_t> pixels;
};

inline constexpr std::uint32_t kVideoFormatVersion = 1;

/// "MVID", then version, N, H, W, C as little-endian u32, then raw bytes.
void write_video(const RawVideo& video, const std::filesystem::path& path);
RawVideo read_video(const std::filesystem::path& path);

/// Pixel values scaled to [0,1].
Tensorf to_tensor(const RawVideo& video);

// ---------------------------------------------------------------------------
// Frame sampling and resizing
// ---------------------------------------------------------------------------

/// idx(i) = floor(i*T/N); repeats frames when T < N.
std::vector<Index> sample_indices(Index total_frames, Index n);
Tensorf sample_frames(const Tensorf& video, Index n);

/// Half-pixel (align_corners=false) bilinear resize of one [H,W,C] frame.
Tensorf resize_bilinear(const Tensorf& frame, Index out_h, Index out_w);
/// Resizes every frame of [N,H,W,C].
Tensorf resize_video(const Tensorf& video, Index out_h, Index out_w);

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

enum class Flip { none, horizontal, vertical };

/// Rotation by quarter_turns * 90 degrees followed by an optional flip. One
/// quarter turn maps [[a,b],[c,d]] to [[c,a],[d,b]]: counter-clockwise with row
/// 0 taken as the bottom row (clockwise as displayed top-down).
struct SpatialTransform {
  int quarter_turns = 0;
  Flip flip = Flip::none;

  bool is_identity() const { return quarter_turns % 4 == 0 && flip == Flip::none; }
  std::string str() const;
  friend bool operator==(const SpatialTransform&, const SpatialTransform&) = default;
};

/// The 11 non-identity transforms: {90,180,270} x {none,flip_h,flip_v} and the two pure flips.
const std::array<SpatialTransform, 11>& augmentation_transforms();

/// Applies the same transform to every frame of [N,H,W,C]. Odd quarter turns
/// need square frames.
Tensorf augment(const Tensorf& sequence, const SpatialTransform& transform);

/// Draws one of augmentation_transforms() uniformly.
SpatialTransform random_transform(std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// In-memory samples
// ---------------------------------------------------------------------------

struct Sample {
  std::string subject_id;
  int label = kNegative;
  std::array<Tensorf, kNumViews> views;
  bool augmented = false;
  std::string source_id;  ///< subject the sample derives from (== subject_id for originals)
};

/// Reads the four views of `sample`, samples `seq_len` frames and resizes to `hw`.
Sample load_sample(const Manifest& manifest, const VideoSample& sample, Index seq_len, Index hw);

/// One augmented copy to add: which original it derives from and how.
struct AugmentationDraw {
  std::size_t source = 0;  ///< index into the labels passed to plan_balance
  SpatialTransform transform;
  std::size_t copy = 0;  ///< running copy number within the class
};

/// Decides the augmented copies that bring each class up to `target_per_class`:
/// originals are cycled in a seeded shuffled order, transforms drawn uniformly.
std::vector<AugmentationDraw> plan_balance(const std::vector<int>& labels, std::size_t target_per_class,
                                           std::uint64_t seed);

/// Appends augmented copies until each class holds `target_per_class` samples.
/// Classes already at or above target are left untouched.
std::vector<Sample> balance_augment(std::vector<Sample> train, std::size_t target_per_class, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Patient-wise stratified folds
// ---------------------------------------------------------------------------

struct Fold {
  std::vector<std::string> train, validation, test;
};

struct FoldPlan {
  int k = 5;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;
  std::vector<Fold> folds;

  /// Throws DataError if any partition/disjointness/stratification invariant fails.
  void validate(const Manifest& manifest) const;

  std::string to_json() const;
  static FoldPlan from_json(const std::string& text);
};

/// Seeded shuffle within each class, round-robin assignment of test folds
/// (continuing across classes), then a stratified train/validation split of
/// the remainder per fold.
FoldPlan plan_folds(const Manifest& manifest, int k = 5, double val_fraction = 0.2, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Synthetic cohort
// ---------------------------------------------------------------------------

struct SynthOptions {
  std::size_t positives = 20;
  std::size_t negatives = 20;
  Index frames = 40;
  Index hw = 32;
  std::uint64_t seed = 7;
};

/// Two-blob motion videos. Controls move both blobs with equal amplitude in
/// mirror phase; positives have one side (the recorded deficit_side) nearly
/// static. Writes frame files under `dir`/views and the manifest into `dir`.
Manifest generate_synthetic_cohort(const std::filesystem::path& dir, const SynthOptions& options);

/// Mean squared frame-to-frame difference over the left or right half of a video.
double side_motion_energy(const Tensorf& video, bool left);

}  // namespace mamaf
