#pragma once

#include <cstdint>
#include <filesystem>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "typecase/model.hpp"

namespace typecase {

// Row-major 8-bit luminance, 0 = black ink.
struct GrayRaster {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  static GrayRaster filled(int width, int height, std::uint8_t value);

  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const GrayRaster&) const = default;
};

// Intersection of bbox with the page; EmptyIntersection if there is none.
GrayRaster crop_segment(const GrayRaster& page, const BBox& bbox);

// Otsu's threshold over the 256-bin histogram with classes {p <= t} and
// {p > t}; the smallest maximizer wins. ConstantImage if only one value.
int otsu_threshold(const GrayRaster& img);

// p <= t becomes ink (0), everything else background (255).
GrayRaster binarize(const GrayRaster& img, int threshold);

GrayRaster resize_nearest(const GrayRaster& img, int width, int height);

// Mean absolute pixel difference of two equally sized rasters.
double mean_abs_difference(const GrayRaster& a, const GrayRaster& b);

// BT.601 luma of an 8-bit RGB triple, rounded to nearest.
std::uint8_t luma_bt601(std::uint8_t r, std::uint8_t g, std::uint8_t b);

class ImageCodec {
 public:
  virtual ~ImageCodec() = default;
  virtual GrayRaster decode(std::span<const std::uint8_t> bytes) const = 0;
  virtual std::string encode(const GrayRaster& img) const = 0;
};

class PngCodec final : public ImageCodec {
 public:
  GrayRaster decode(std::span<const std::uint8_t> bytes) const override;
  std::string encode(const GrayRaster& img) const override;
};

// Source of page scans; returns nullptr when a spread has no usable image.
class PageSource {
 public:
  virtual ~PageSource() = default;
  virtual std::shared_ptr<const GrayRaster> page(const Spread& spread) const = 0;
};

class InMemoryPages final : public PageSource {
 public:
  void put(SpreadId id, GrayRaster raster);
  std::shared_ptr<const GrayRaster> page(const Spread& spread) const override;

 private:
  std::unordered_map<SpreadId, std::shared_ptr<const GrayRaster>> pages_;
};

// Lazily decodes page files relative to a directory and keeps at most
// `capacity` of them, evicting the least recently used.
class ImageStore final : public PageSource {
 public:
  ImageStore(std::filesystem::path root, std::shared_ptr<const ImageCodec> codec, std::size_t capacity = 32);

  std::shared_ptr<const GrayRaster> page(const Spread& spread) const override;
  std::size_t cached() const;

 private:
  using Entry = std::pair<std::string, std::shared_ptr<const GrayRaster>>;

  std::filesystem::path root_;
  std::shared_ptr<const ImageCodec> codec_;
  std::size_t capacity_;
  mutable std::mutex mutex_;
  mutable std::mutex load_mutex_;
  mutable std::list<Entry> lru_;  // front = most recent
  mutable std::unordered_map<std::string, std::list<Entry>::iterator> index_;
};

// Medoid of the block's member crops (nearest-neighbour resized to the
// block's modal bbox size, summed mean absolute difference, ties to the
// smaller id). Members without a page image are skipped; with no images at
// all the first member in reading order is returned.
SegmentId representative_segment(const IndexedDataset& ds, BlockId block, const PageSource* images = nullptr);

// Representative crop, Otsu-binarized (or at `threshold` when given).
// MissingImage if the representative's page is unavailable.
GrayRaster block_thumbnail(const IndexedDataset& ds, BlockId block, const PageSource& images,
                           std::optional<int> threshold = std::nullopt);

}  // namespace typecase
