#ifndef MAPGAN_DATA_HPP_
#define MAPGAN_DATA_HPP_

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mapgan/image.hpp"
#include "mapgan/rng.hpp"
#include "mapgan/tensor.hpp"

namespace mapgan {

// byte image -> channel-first float tensor in [-1,1], v/127.5 - 1
inline Tensor normalize(const ImageU8& img) {
  detail::check(img.width > 0 && img.height > 0, "normalize: empty image");
  Tensor t = Tensor::zeros({3, img.height, img.width});
  float* p = t.data();
  const int64_t plane = static_cast<int64_t>(img.height) * img.width;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        p[c * plane + static_cast<int64_t>(y) * img.width + x] =
            img.at(x, y, c) / 127.5f - 1.0f;
  return t;
}

// [-1,1] tensor -> byte image, round((v+1)*127.5) half away from zero;
// values outside [-1,1] are clamped first, never wrapped
inline ImageU8 denormalize(const Tensor& t) {
  detail::check(t.ndim() == 3 && t.dim(0) == 3,
                "denormalize: expected [3,H,W], got " +
                    detail::shape_str(t.shape()));
  ImageU8 img;
  img.height = t.dim(1);
  img.width = t.dim(2);
  img.pixels.resize(static_cast<size_t>(img.width) * img.height * 3);
  const float* p = t.data();
  const int64_t plane = static_cast<int64_t>(img.height) * img.width;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        float v = p[c * plane + static_cast<int64_t>(y) * img.width + x];
        v = std::clamp(v, -1.0f, 1.0f);
        const long b = std::lround((v + 1.0f) * 127.5f);
        img.pixels[(static_cast<size_t>(y) * img.width + x) * 3 + c] =
            static_cast<unsigned char>(std::clamp(b, 0L, 255L));
      }
  return img;
}

// One decoded (satellite, map) pair; both halves [3,S,S] in [-1,1].
// The satellite half is the conditioning input, the map half the real
// target.
struct PairedSample {
  Tensor satellite;
  Tensor map_img;
  std::string source_path;
};

// Splits a horizontally concatenated satellite|map image, resizes each half
// to resize_to x resize_to, and normalizes. Left half is the satellite
// unless swap_halves.
inline PairedSample load_paired_image(const std::string& path, int resize_to,
                                      bool swap_halves = false) {
  detail::check(resize_to >= 1, "load_paired_image: resize_to must be >= 1");
  ImageU8 img = load_image(path);
  if (img.width % 2 != 0)
    throw std::runtime_error("unsplittable pair: '" + path + "' has odd width " +
                             std::to_string(img.width));
  const int half = img.width / 2;
  ImageU8 left, right;
  left.width = right.width = half;
  left.height = right.height = img.height;
  left.pixels.resize(static_cast<size_t>(half) * img.height * 3);
  right.pixels.resize(left.pixels.size());
  for (int y = 0; y < img.height; ++y) {
    const unsigned char* row =
        img.pixels.data() + static_cast<size_t>(y) * img.width * 3;
    std::copy(row, row + static_cast<size_t>(half) * 3,
              left.pixels.data() + static_cast<size_t>(y) * half * 3);
    std::copy(row + static_cast<size_t>(half) * 3,
              row + static_cast<size_t>(img.width) * 3,
              right.pixels.data() + static_cast<size_t>(y) * half * 3);
  }
  if (swap_halves) std::swap(left, right);
  PairedSample s;
  s.satellite = normalize(resize_bilinear(left, resize_to, resize_to));
  s.map_img = normalize(resize_bilinear(right, resize_to, resize_to));
  s.source_path = path;
  return s;
}

// Ordered list of pair files, decoded lazily per sample. Canonical order is
// the lexicographically sorted directory listing.
class Dataset {
 public:
  static Dataset open(const std::string& root, const std::string& split,
                      int resize_to, bool swap_halves = false) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::path(root) / split;
    if (!fs::is_directory(dir))
      throw std::runtime_error("dataset split directory not found: '" +
                               dir.string() + "'");
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      std::string ext = entry.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(),
                     [](unsigned char c) { return std::tolower(c); });
      if (ext == ".png" || ext == ".jpg" || ext == ".jpeg")
        paths.push_back(entry.path().string());
    }
    std::sort(paths.begin(), paths.end());
    return Dataset(std::move(paths), resize_to, swap_halves);
  }

  static Dataset from_paths(std::vector<std::string> paths, int resize_to,
                            bool swap_halves = false) {
    return Dataset(std::move(paths), resize_to, swap_halves);
  }

  size_t size() const { return paths_.size(); }
  const std::vector<std::string>& paths() const { return paths_; }
  int resize_to() const { return resize_to_; }
  bool swap_halves() const { return swap_halves_; }

  PairedSample sample(size_t i) const {
    detail::check(i < paths_.size(), "Dataset::sample: index out of range");
    return load_paired_image(paths_[i], resize_to_, swap_halves_);
  }

 private:
  Dataset(std::vector<std::string> paths, int resize_to, bool swap_halves)
      : paths_(std::move(paths)),
        resize_to_(resize_to),
        swap_halves_(swap_halves) {
    detail::check(resize_to_ >= 1, "Dataset: resize_to must be >= 1");
  }

  std::vector<std::string> paths_;
  int resize_to_;
  bool swap_halves_;
};

// Seeded Fisher-Yates permutation of [0, n)
inline std::vector<size_t> shuffled_order(size_t n, uint64_t seed) {
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  Rng rng(seed);
  for (size_t i = n; i > 1; --i)
    std::swap(idx[i - 1], idx[static_cast<size_t>(rng.below(i))]);
  return idx;
}

struct Batch {
  Tensor satellite;  // [B,3,S,S]
  Tensor map_img;    // [B,3,S,S]
  std::vector<std::string> paths;
};

// Decodes and stacks order[begin..end) into one batch.
inline Batch assemble_batch(const Dataset& ds, const std::vector<size_t>& order,
                            size_t begin, size_t end) {
  detail::check(begin < end && end <= order.size(),
                "assemble_batch: bad slice");
  const int b = static_cast<int>(end - begin);
  const int s = ds.resize_to();
  Batch batch;
  batch.satellite = Tensor::zeros({b, 3, s, s});
  batch.map_img = Tensor::zeros({b, 3, s, s});
  const int64_t stride = static_cast<int64_t>(3) * s * s;
  for (size_t i = begin; i < end; ++i) {
    PairedSample sample = ds.sample(order[i]);
    const int64_t off = static_cast<int64_t>(i - begin) * stride;
    std::copy(sample.satellite.data(), sample.satellite.data() + stride,
              batch.satellite.data() + off);
    std::copy(sample.map_img.data(), sample.map_img.data() + stride,
              batch.map_img.data() + off);
    batch.paths.push_back(std::move(sample.source_path));
  }
  return batch;
}

// One epoch of batches: full batches of batch_size plus a kept short final
// batch, covering every sample exactly once.
inline std::vector<Batch> make_batches(const Dataset& ds, int batch_size,
                                       bool shuffle, uint64_t seed) {
  detail::check(batch_size >= 1, "make_batches: batch_size must be >= 1");
  if (ds.size() == 0)
    throw std::runtime_error("make_batches: empty dataset");
  std::vector<size_t> order;
  if (shuffle) {
    order = shuffled_order(ds.size(), seed);
  } else {
    order.resize(ds.size());
    std::iota(order.begin(), order.end(), size_t{0});
  }
  std::vector<Batch> batches;
  for (size_t begin = 0; begin < order.size();
       begin += static_cast<size_t>(batch_size))
    batches.push_back(assemble_batch(
        ds, order, begin,
        std::min(order.size(), begin + static_cast<size_t>(batch_size))));
  return batches;
}

}  // namespace mapgan

#endif  // MAPGAN_DATA_HPP_
