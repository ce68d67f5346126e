#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stereodistill/losses.hpp"
#include "stereodistill/tensor.hpp"

namespace stereodistill {

/// Rectified stereo pair with ground truth. Images are [3, H, W] in [0, 1];
/// disparity is [H, W] in pixels (NaN where unknown); `valid` has H*W
/// entries.
struct StereoSample {
  Tensor left, right, disparity;
  Mask valid;
  std::string id;

  int64_t height() const { return disparity.dim(0); }
  int64_t width() const { return disparity.dim(1); }
};

/// Synthetic pair: smooth texture plus `n_objects` fronto-parallel
/// rectangles with integer disparities. The right view is the forward warp
/// of the left one with z-ordering; occluded and out-of-frame left pixels are
/// invalid, right-view holes get their own texture. Pixel values are
/// multiples of 1/255 so 8-bit PNG storage is lossless.
/// `background_disparity` fixes the background plane (random otherwise).
StereoSample synth_sample(uint64_t seed, int height, int width, int max_disparity, int n_objects,
                          std::optional<int> background_disparity = std::nullopt);

struct PfmImage {
  int width = 0, height = 0, channels = 1;
  float scale = 1.0f;  // magnitude from the header
  bool little_endian = true;
  Tensor data;         // [H, W] or [3, H, W], top row first
};

PfmImage read_pfm(const std::string& path);
/// Single-channel disparity; rejects colour ("PF") files.
Tensor read_pfm_disparity(const std::string& path);
/// Writes [H, W] as "Pf" or [3, H, W] as "PF", little-endian (negative scale).
void write_pfm(const std::string& path, const Tensor& image, float scale = 1.0f);

/// 8-bit RGB (or grey, replicated) PNG -> [3, H, W] in [0, 1].
Tensor read_png_rgb(const std::string& path);
/// [3, H, W] in [0, 1] -> 8-bit RGB PNG, rounding to the nearest level.
void write_png_rgb(const std::string& path, const Tensor& image);
/// 8-bit grey PNG holding a 0/1 mask (stored as 0/255).
Mask read_png_mask(const std::string& path, int64_t* height = nullptr, int64_t* width = nullptr);
void write_png_mask(const std::string& path, const Mask& mask, int64_t height, int64_t width);

struct KittiDisparity {
  Tensor disparity;  // [H, W], NaN where invalid
  Mask valid;
};
/// 16-bit grey PNG, disparity = raw / 256, raw 0 = invalid.
KittiDisparity read_kitti_disparity(const std::string& path);
void write_kitti_disparity(const std::string& path, const Tensor& disparity, const Mask& valid);

/// Per-channel standardization constants.
struct Normalization {
  std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
  std::array<float, 3> std{0.229f, 0.224f, 0.225f};
};

/// Network-ready sample: standardized images, cropped ground truth, and the
/// crop window in source coordinates.
struct PreparedSample {
  Tensor left, right;  // [3, h, w]
  Tensor disparity;    // [h, w]
  Mask valid;
  std::string id;
  int64_t crop_y = 0, crop_x = 0;
  int64_t content_h = 0, content_w = 0;  // unpadded extent
};

/// Training crops are random (offsets on a 4-pixel lattice so quarter
/// resolution taps stay aligned); evaluation crops are top-left. Pixels with
/// disparity outside (0, max_disparity) are masked out.
PreparedSample preprocess(const StereoSample& sample, int crop_height, int crop_width, bool train,
                          uint64_t seed, int max_disparity, const Normalization& norm = {});

/// Evaluation preparation of a whole frame: standardize, then pad bottom and
/// right with zeros to a multiple of `multiple`. Padding is masked out.
PreparedSample prepare_full(const StereoSample& sample, int max_disparity, int multiple = 4,
                            const Normalization& norm = {});

/// Stacked mini-batch.
struct Batch {
  Tensor left, right;  // [B, 3, h, w]
  Tensor disparity;    // [B, h, w]
  Mask valid;          // B*h*w
  std::vector<std::string> ids;
  std::vector<std::array<int64_t, 2>> crops;  // (y, x) per item
  int64_t size() const { return left.dim(0); }
};
Batch make_batch(const std::vector<PreparedSample>& items);

/// On-disk dataset: a directory with manifest.json listing samples.
struct DatasetEntry {
  std::string id;
  std::string split;
  std::string left, right, disparity, mask;  // paths relative to the root; mask optional
  uint64_t seed = 0;
  int n_objects = 0;
};

struct DatasetManifest {
  std::string root;
  int height = 0, width = 0, max_disparity = 0;
  uint64_t seed = 0;
  std::vector<DatasetEntry> samples;

  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j, std::string root);
};

struct GenerateOptions {
  int count = 0;
  int test_count = 0;  // last `test_count` samples form the test split
  int height = 64, width = 128, max_disparity = 32;
  int max_objects = 4;
  uint64_t seed = 0;
};

/// Writes PNG images, PFM disparities, PNG masks and manifest.json.
DatasetManifest generate_dataset(const std::string& dir, const GenerateOptions& opt);
DatasetManifest load_manifest(const std::string& dir);
StereoSample load_sample(const DatasetManifest& m, const DatasetEntry& e);
/// Every sample of one split, in manifest order.
std::vector<StereoSample> load_split(const std::string& dir, const std::string& split);

}  // namespace stereodistill
