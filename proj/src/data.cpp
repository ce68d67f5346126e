#include "stereodistill/data.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <random>
#include <sstream>

#include "stereodistill/errors.hpp"
#include "stereodistill/rng.hpp"

namespace stereodistill {

namespace fs = std::filesystem;

namespace {

constexpr float kNaN = std::numeric_limits<float>::quiet_NaN();

float quantize(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<float>(std::lround(c * 255.0)) / 255.0f;
}

// Smooth random texture: a few oriented sinusoids per channel plus fine noise.
Tensor make_texture(std::mt19937_64& rng, int h, int w) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t({3, h, w});
  for (int c = 0; c < 3; ++c) {
    struct Wave {
      double fx, fy, phase, amp;
    };
    std::vector<Wave> waves;
    for (int k = 0; k < 3; ++k) {
      waves.push_back({0.02 + 0.25 * u(rng), 0.02 + 0.2 * u(rng), 6.283185307179586 * u(rng),
                       0.08 + 0.12 * u(rng)});
    }
    const double base = 0.25 + 0.5 * u(rng);
    float* dst = t.data() + static_cast<int64_t>(c) * h * w;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double v = base;
        for (const auto& wv : waves) v += wv.amp * std::sin(wv.fx * x + wv.fy * y + wv.phase);
        v += 0.08 * (u(rng) - 0.5);
        dst[y * w + x] = quantize(v);
      }
    }
  }
  return t;
}

struct Rect {
  int y0, x0, y1, x1, disparity;
  Tensor texture;
};

}  // namespace

StereoSample synth_sample(uint64_t seed, int height, int width, int max_disparity, int n_objects,
                          std::optional<int> background_disparity) {
  if (height < 4 || width < 4 || n_objects < 0) {
    throw DomainError("synth_sample: degenerate dimensions " + std::to_string(height) + "x" +
                      std::to_string(width));
  }
  if (max_disparity < 2 || 2 * max_disparity >= width) {
    throw DomainError("synth_sample: need 2 <= max_disparity < width / 2");
  }
  std::mt19937_64 rng(seed);
  auto uniform_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  const int bg = background_disparity ? *background_disparity : uniform_int(1, std::max(1, max_disparity / 4));
  if (bg <= 0 || bg >= max_disparity) throw DomainError("synth_sample: background disparity out of range");

  Tensor left = make_texture(rng, height, width);
  std::vector<int> disp(static_cast<size_t>(height) * width, bg);

  std::vector<Rect> rects;
  for (int i = 0; i < n_objects; ++i) {
    Rect r;
    const int rh = uniform_int(std::max(2, height / 6), std::max(2, height / 2));
    const int rw = uniform_int(std::max(2, width / 8), std::max(2, width / 3));
    r.y0 = uniform_int(0, height - rh);
    r.x0 = uniform_int(0, width - rw);
    r.y1 = r.y0 + rh;
    r.x1 = r.x0 + rw;
    r.disparity = bg + 1 <= max_disparity - 1 ? uniform_int(bg + 1, max_disparity - 1) : bg;
    r.texture = make_texture(rng, rh, rw);
    rects.push_back(std::move(r));
  }
  // Nearer objects are painted last.
  std::stable_sort(rects.begin(), rects.end(), [](const Rect& a, const Rect& b) { return a.disparity < b.disparity; });
  const int64_t plane = static_cast<int64_t>(height) * width;
  for (const auto& r : rects) {
    const int rw = r.x1 - r.x0, rh = r.y1 - r.y0;
    for (int y = r.y0; y < r.y1; ++y) {
      for (int x = r.x0; x < r.x1; ++x) {
        disp[static_cast<size_t>(y) * width + x] = r.disparity;
        for (int c = 0; c < 3; ++c) {
          left[c * plane + y * width + x] = r.texture[(static_cast<int64_t>(c) * rh + (y - r.y0)) * rw + (x - r.x0)];
        }
      }
    }
  }

  // Forward warp with a z-buffer: the largest disparity landing on a right
  // pixel wins; every other left pixel mapping there is occluded.
  Tensor right = make_texture(rng, height, width);
  std::vector<int> zbuf(static_cast<size_t>(plane), -1);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const int d = disp[static_cast<size_t>(y) * width + x];
      if (x - d >= 0) {
        int& z = zbuf[static_cast<size_t>(y) * width + (x - d)];
        z = std::max(z, d);
      }
    }
  }
  StereoSample s;
  s.valid.assign(static_cast<size_t>(plane), 0);
  s.disparity = Tensor({height, width});
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const int64_t i = static_cast<int64_t>(y) * width + x;
      const int d = disp[static_cast<size_t>(i)];
      s.disparity[i] = static_cast<float>(d);
      if (x - d < 0 || zbuf[static_cast<size_t>(i - d)] != d) continue;
      s.valid[static_cast<size_t>(i)] = 1;
      for (int c = 0; c < 3; ++c) right[c * plane + i - d] = left[c * plane + i];
    }
  }
  s.left = std::move(left);
  s.right = std::move(right);
  return s;
}

// ---------------------------------------------------------------- PFM

PfmImage read_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string magic;
  in >> magic;
  PfmImage img;
  if (magic == "Pf") {
    img.channels = 1;
  } else if (magic == "PF") {
    img.channels = 3;
  } else {
    throw IoError(path + ": bad PFM magic '" + magic + "'");
  }
  double scale = 0;
  if (!(in >> img.width >> img.height >> scale) || img.width <= 0 || img.height <= 0 || scale == 0) {
    throw IoError(path + ": malformed PFM header");
  }
  in.get();  // single whitespace before the raster
  img.little_endian = scale < 0;
  img.scale = static_cast<float>(std::abs(scale));
  const size_t n = static_cast<size_t>(img.width) * img.height * img.channels;
  std::vector<uint32_t> raw(n);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * 4));
  if (static_cast<size_t>(in.gcount()) != n * 4) throw IoError(path + ": truncated PFM payload");
  const bool swap = img.little_endian != (std::endian::native == std::endian::little);
  const int64_t h = img.height, w = img.width, c = img.channels;
  img.data = c == 1 ? Tensor({h, w}) : Tensor({c, h, w});
  for (int64_t row = 0; row < h; ++row) {
    const int64_t y = h - 1 - row;  // stored bottom-to-top
    for (int64_t x = 0; x < w; ++x) {
      for (int64_t k = 0; k < c; ++k) {
        uint32_t bits = raw[static_cast<size_t>((row * w + x) * c + k)];
        if (swap) bits = __builtin_bswap32(bits);
        img.data[(k * h + y) * w + x] = std::bit_cast<float>(bits);
      }
    }
  }
  return img;
}

Tensor read_pfm_disparity(const std::string& path) {
  PfmImage img = read_pfm(path);
  if (img.channels != 1) throw IoError(path + ": disparity PFM must be single-channel (Pf)");
  return std::move(img.data);
}

void write_pfm(const std::string& path, const Tensor& image, float scale) {
  int64_t c, h, w;
  if (image.rank() == 2) {
    c = 1, h = image.dim(0), w = image.dim(1);
  } else if (image.rank() == 3 && image.dim(0) == 3) {
    c = 3, h = image.dim(1), w = image.dim(2);
  } else {
    throw ShapeError("write_pfm expects [H,W] or [3,H,W], got " + to_string(image.shape()));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  std::ostringstream head;
  head << (c == 1 ? "Pf" : "PF") << '\n' << w << ' ' << h << '\n' << -std::abs(scale) << '\n';
  out << head.str();
  std::vector<float> row(static_cast<size_t>(w * c));
  for (int64_t y = h - 1; y >= 0; --y) {
    for (int64_t x = 0; x < w; ++x) {
      for (int64_t k = 0; k < c; ++k) row[static_cast<size_t>(x * c + k)] = image[(k * h + y) * w + x];
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * 4));
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

// ---------------------------------------------------------------- PNG

namespace {

struct PngRaster {
  int64_t width = 0, height = 0, channels = 0, bit_depth = 0;
  std::vector<uint8_t> bytes;  // rows packed; 16-bit samples in host order
};

struct FileCloser {
  void operator()(FILE* f) const { std::fclose(f); }
};

[[noreturn]] void png_fail(png_structp, png_const_charp msg) { throw IoError(std::string("png: ") + msg); }
void png_warn(png_structp, png_const_charp) {}

PngRaster read_png(const std::string& path) {
  std::unique_ptr<FILE, FileCloser> f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IoError("cannot open '" + path + "'");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) throw IoError(path + ": not a PNG file");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  PngRaster r;
  try {
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    r.bit_depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && r.bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (r.bit_depth == 16 && std::endian::native == std::endian::little) png_set_swap(png);
    png_read_update_info(png, info);
    r.width = png_get_image_width(png, info);
    r.height = png_get_image_height(png, info);
    r.channels = png_get_channels(png, info);
    r.bit_depth = png_get_bit_depth(png, info);
    const size_t stride = png_get_rowbytes(png, info);
    r.bytes.resize(stride * static_cast<size_t>(r.height));
    std::vector<png_bytep> rows(static_cast<size_t>(r.height));
    for (int64_t y = 0; y < r.height; ++y) rows[static_cast<size_t>(y)] = r.bytes.data() + stride * static_cast<size_t>(y);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return r;
}

void write_png(const std::string& path, const std::vector<uint8_t>& bytes, int64_t width, int64_t height,
               int color_type, int bit_depth) {
  std::unique_ptr<FILE, FileCloser> f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  try {
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
                 color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (bit_depth == 16 && std::endian::native == std::endian::little) png_set_swap(png);
    const size_t stride = bytes.size() / static_cast<size_t>(height);
    for (int64_t y = 0; y < height; ++y) {
      png_write_row(png, const_cast<png_bytep>(bytes.data() + stride * static_cast<size_t>(y)));
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Tensor read_png_rgb(const std::string& path) {
  PngRaster r = read_png(path);
  if (r.bit_depth != 8) throw IoError(path + ": expected an 8-bit image");
  Tensor t({3, r.height, r.width});
  const int64_t plane = r.height * r.width;
  for (int64_t i = 0; i < plane; ++i) {
    for (int64_t c = 0; c < 3; ++c) {
      const uint8_t v = r.bytes[static_cast<size_t>(i * r.channels + (r.channels == 1 ? 0 : c))];
      t[c * plane + i] = static_cast<float>(v) / 255.0f;
    }
  }
  return t;
}

void write_png_rgb(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) throw ShapeError("write_png_rgb expects [3,H,W]");
  const int64_t h = image.dim(1), w = image.dim(2), plane = h * w;
  std::vector<uint8_t> bytes(static_cast<size_t>(plane * 3));
  for (int64_t i = 0; i < plane; ++i) {
    for (int64_t c = 0; c < 3; ++c) {
      const float v = std::clamp(image[c * plane + i], 0.0f, 1.0f);
      bytes[static_cast<size_t>(i * 3 + c)] = static_cast<uint8_t>(std::lround(v * 255.0f));
    }
  }
  write_png(path, bytes, w, h, PNG_COLOR_TYPE_RGB, 8);
}

Mask read_png_mask(const std::string& path, int64_t* height, int64_t* width) {
  PngRaster r = read_png(path);
  if (r.bit_depth != 8 || r.channels != 1) throw IoError(path + ": expected an 8-bit grey mask");
  if (height) *height = r.height;
  if (width) *width = r.width;
  Mask m(r.bytes.size());
  for (size_t i = 0; i < m.size(); ++i) m[i] = r.bytes[i] ? 1 : 0;
  return m;
}

void write_png_mask(const std::string& path, const Mask& mask, int64_t height, int64_t width) {
  if (static_cast<int64_t>(mask.size()) != height * width) throw ShapeError("write_png_mask: size mismatch");
  std::vector<uint8_t> bytes(mask.size());
  for (size_t i = 0; i < mask.size(); ++i) bytes[i] = mask[i] ? 255 : 0;
  write_png(path, bytes, width, height, PNG_COLOR_TYPE_GRAY, 8);
}

KittiDisparity read_kitti_disparity(const std::string& path) {
  PngRaster r = read_png(path);
  if (r.bit_depth != 16 || r.channels != 1) {
    throw IoError(path + ": KITTI disparity must be a 16-bit single-channel PNG");
  }
  KittiDisparity k;
  k.disparity = Tensor({r.height, r.width});
  k.valid.assign(static_cast<size_t>(r.height * r.width), 0);
  const auto* raw = reinterpret_cast<const uint16_t*>(r.bytes.data());
  for (int64_t i = 0; i < r.height * r.width; ++i) {
    const uint16_t v = raw[i];
    if (v == 0) {
      k.disparity[i] = kNaN;
    } else {
      k.disparity[i] = static_cast<float>(v) / 256.0f;
      k.valid[static_cast<size_t>(i)] = 1;
    }
  }
  return k;
}

void write_kitti_disparity(const std::string& path, const Tensor& disparity, const Mask& valid) {
  if (disparity.rank() != 2) throw ShapeError("write_kitti_disparity expects [H,W]");
  const int64_t h = disparity.dim(0), w = disparity.dim(1);
  std::vector<uint8_t> bytes(static_cast<size_t>(h * w * 2));
  auto* raw = reinterpret_cast<uint16_t*>(bytes.data());
  for (int64_t i = 0; i < h * w; ++i) {
    const bool ok = (valid.empty() || valid[static_cast<size_t>(i)]) && std::isfinite(disparity[i]);
    const double v = ok ? std::clamp(std::round(disparity[i] * 256.0), 1.0, 65535.0) : 0.0;
    raw[i] = static_cast<uint16_t>(v);
  }
  write_png(path, bytes, w, h, PNG_COLOR_TYPE_GRAY, 16);
}

// ---------------------------------------------------------------- preprocessing

namespace {

PreparedSample crop_and_standardize(const StereoSample& s, int64_t y0, int64_t x0, int64_t ch, int64_t cw,
                                    int64_t out_h, int64_t out_w, int max_disparity, const Normalization& norm) {
  const int64_t h = s.height(), w = s.width();
  PreparedSample p;
  p.id = s.id;
  p.crop_y = y0;
  p.crop_x = x0;
  p.content_h = ch;
  p.content_w = cw;
  p.left = Tensor({3, out_h, out_w});
  p.right = Tensor({3, out_h, out_w});
  p.disparity = Tensor({out_h, out_w}, kNaN);
  p.valid.assign(static_cast<size_t>(out_h * out_w), 0);
  for (int64_t c = 0; c < 3; ++c) {
    const float mean = norm.mean[static_cast<size_t>(c)], sd = norm.std[static_cast<size_t>(c)];
    for (int64_t y = 0; y < ch; ++y) {
      for (int64_t x = 0; x < cw; ++x) {
        const int64_t src = (c * h + y0 + y) * w + x0 + x;
        const int64_t dst = (c * out_h + y) * out_w + x;
        p.left[dst] = (s.left[src] - mean) / sd;
        p.right[dst] = (s.right[src] - mean) / sd;
      }
    }
  }
  for (int64_t y = 0; y < ch; ++y) {
    for (int64_t x = 0; x < cw; ++x) {
      const int64_t src = (y0 + y) * w + x0 + x;
      const float d = s.disparity[src];
      const int64_t dst = y * out_w + x;
      p.disparity[dst] = d;
      const bool ok = (s.valid.empty() || s.valid[static_cast<size_t>(src)]) && std::isfinite(d) && d > 0 &&
                      d < static_cast<float>(max_disparity);
      p.valid[static_cast<size_t>(dst)] = ok ? 1 : 0;
    }
  }
  return p;
}

}  // namespace

PreparedSample preprocess(const StereoSample& sample, int crop_height, int crop_width, bool train, uint64_t seed,
                          int max_disparity, const Normalization& norm) {
  const int64_t h = sample.height(), w = sample.width();
  if (crop_height <= 0 || crop_width <= 0) throw ConfigError("crop size must be positive");
  if (h < crop_height || w < crop_width) {
    throw ShapeError("image " + std::to_string(h) + "x" + std::to_string(w) + " is smaller than crop " +
                     std::to_string(crop_height) + "x" + std::to_string(crop_width));
  }
  int64_t y0 = 0, x0 = 0;
  if (train) {
    std::mt19937_64 rng(seed);
    y0 = 4 * std::uniform_int_distribution<int64_t>(0, (h - crop_height) / 4)(rng);
    x0 = 4 * std::uniform_int_distribution<int64_t>(0, (w - crop_width) / 4)(rng);
  }
  return crop_and_standardize(sample, y0, x0, crop_height, crop_width, crop_height, crop_width, max_disparity, norm);
}

PreparedSample prepare_full(const StereoSample& sample, int max_disparity, int multiple, const Normalization& norm) {
  if (multiple < 1) throw ConfigError("padding multiple must be positive");
  const int64_t h = sample.height(), w = sample.width();
  const int64_t ph = (h + multiple - 1) / multiple * multiple;
  const int64_t pw = (w + multiple - 1) / multiple * multiple;
  return crop_and_standardize(sample, 0, 0, h, w, ph, pw, max_disparity, norm);
}

Batch make_batch(const std::vector<PreparedSample>& items) {
  if (items.empty()) throw ShapeError("make_batch: no samples");
  const Shape img = items[0].left.shape();
  const int64_t b = static_cast<int64_t>(items.size());
  Batch batch;
  batch.left = Tensor({b, img[0], img[1], img[2]});
  batch.right = Tensor({b, img[0], img[1], img[2]});
  batch.disparity = Tensor({b, img[1], img[2]});
  const int64_t isz = numel(img), dsz = img[1] * img[2];
  for (int64_t i = 0; i < b; ++i) {
    const auto& it = items[static_cast<size_t>(i)];
    if (it.left.shape() != img || it.right.shape() != img) throw ShapeError("make_batch: samples differ in size");
    std::copy(it.left.data(), it.left.data() + isz, batch.left.data() + i * isz);
    std::copy(it.right.data(), it.right.data() + isz, batch.right.data() + i * isz);
    std::copy(it.disparity.data(), it.disparity.data() + dsz, batch.disparity.data() + i * dsz);
    batch.valid.insert(batch.valid.end(), it.valid.begin(), it.valid.end());
    batch.ids.push_back(it.id);
    batch.crops.push_back({it.crop_y, it.crop_x});
  }
  return batch;
}

// ---------------------------------------------------------------- datasets

nlohmann::json DatasetManifest::to_json() const {
  nlohmann::json j;
  j["format"] = "stereodistill-dataset";
  j["version"] = 1;
  j["height"] = height;
  j["width"] = width;
  j["max_disparity"] = max_disparity;
  j["seed"] = seed;
  auto& arr = j["samples"] = nlohmann::json::array();
  for (const auto& e : samples) {
    nlohmann::json s{{"id", e.id},       {"split", e.split}, {"left", e.left},
                     {"right", e.right}, {"disparity", e.disparity}, {"seed", e.seed},
                     {"n_objects", e.n_objects}};
    if (!e.mask.empty()) s["mask"] = e.mask;
    arr.push_back(std::move(s));
  }
  return j;
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j, std::string root) {
  DatasetManifest m;
  m.root = std::move(root);
  try {
    m.height = j.value("height", 0);
    m.width = j.value("width", 0);
    m.max_disparity = j.value("max_disparity", 0);
    m.seed = j.value("seed", uint64_t{0});
    for (const auto& s : j.at("samples")) {
      DatasetEntry e;
      e.id = s.at("id").get<std::string>();
      e.split = s.value("split", "train");
      e.left = s.at("left").get<std::string>();
      e.right = s.at("right").get<std::string>();
      e.disparity = s.at("disparity").get<std::string>();
      e.mask = s.value("mask", "");
      e.seed = s.value("seed", uint64_t{0});
      e.n_objects = s.value("n_objects", 0);
      m.samples.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed dataset manifest: ") + e.what());
  }
  return m;
}

DatasetManifest generate_dataset(const std::string& dir, const GenerateOptions& opt) {
  if (opt.count < 1) throw ConfigError("dataset count must be at least 1");
  if (opt.test_count < 0 || opt.test_count > opt.count) throw ConfigError("test count must be within [0, count]");
  if (opt.height <= 0 || opt.width <= 0 || opt.height % 4 != 0 || opt.width % 4 != 0) {
    throw ConfigError("dataset height and width must be positive multiples of 4");
  }
  if (opt.max_disparity < 2 || 2 * opt.max_disparity >= opt.width) {
    throw ConfigError("max disparity must satisfy 2 <= D < width / 2");
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create dataset directory '" + dir + "'");

  DatasetManifest m;
  m.root = dir;
  m.height = opt.height;
  m.width = opt.width;
  m.max_disparity = opt.max_disparity;
  m.seed = opt.seed;
  for (int i = 0; i < opt.count; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "%04d", i);
    DatasetEntry e;
    e.id = id;
    e.split = i >= opt.count - opt.test_count ? "test" : "train";
    e.seed = stream_seed(opt.seed, static_cast<uint64_t>(i));
    e.n_objects = static_cast<int>(e.seed % static_cast<uint64_t>(opt.max_objects + 1));
    StereoSample s = synth_sample(e.seed, opt.height, opt.width, opt.max_disparity, e.n_objects);
    e.left = e.id + "_left.png";
    e.right = e.id + "_right.png";
    e.disparity = e.id + "_disp.pfm";
    e.mask = e.id + "_mask.png";
    const fs::path root(dir);
    write_png_rgb((root / e.left).string(), s.left);
    write_png_rgb((root / e.right).string(), s.right);
    write_pfm((root / e.disparity).string(), s.disparity);
    write_png_mask((root / e.mask).string(), s.valid, opt.height, opt.width);
    m.samples.push_back(std::move(e));
  }
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw IoError("cannot write manifest in '" + dir + "'");
  out << m.to_json().dump(2) << '\n';
  if (!out) throw IoError("failed writing manifest in '" + dir + "'");
  return m;
}

DatasetManifest load_manifest(const std::string& dir) {
  const fs::path p = fs::path(dir) / "manifest.json";
  std::ifstream in(p);
  if (!in) throw IoError("no manifest.json in '" + dir + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(p.string() + ": " + e.what());
  }
  return DatasetManifest::from_json(j, dir);
}

StereoSample load_sample(const DatasetManifest& m, const DatasetEntry& e) {
  const fs::path root(m.root);
  StereoSample s;
  s.id = e.id;
  s.left = read_png_rgb((root / e.left).string());
  s.right = read_png_rgb((root / e.right).string());
  const std::string disp = (root / e.disparity).string();
  if (fs::path(disp).extension() == ".png") {
    KittiDisparity k = read_kitti_disparity(disp);
    s.disparity = std::move(k.disparity);
    s.valid = std::move(k.valid);
  } else {
    s.disparity = read_pfm_disparity(disp);
    s.valid.assign(static_cast<size_t>(s.disparity.numel()), 1);
  }
  if (!e.mask.empty()) {
    Mask extra = read_png_mask((root / e.mask).string());
    if (extra.size() != s.valid.size()) throw ShapeError(e.id + ": mask size does not match disparity");
    for (size_t i = 0; i < extra.size(); ++i) s.valid[i] = s.valid[i] && extra[i];
  }
  for (int64_t i = 0; i < s.disparity.numel(); ++i) {
    if (!std::isfinite(s.disparity[i])) s.valid[static_cast<size_t>(i)] = 0;
  }
  if (s.left.shape() != s.right.shape() || s.left.dim(1) != s.height() || s.left.dim(2) != s.width()) {
    throw ShapeError(e.id + ": image and disparity sizes disagree");
  }
  return s;
}

std::vector<StereoSample> load_split(const std::string& dir, const std::string& split) {
  const DatasetManifest m = load_manifest(dir);
  std::vector<StereoSample> out;
  for (const auto& e : m.samples) {
    if (e.split == split) out.push_back(load_sample(m, e));
  }
  return out;
}

}  // namespace stereodistill
