#include "typecase/raster.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>

#include <png.h>

namespace typecase {

GrayRaster GrayRaster::filled(int width, int height, std::uint8_t value) {
  return {width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height, value)};
}

GrayRaster crop_segment(const GrayRaster& page, const BBox& bbox) {
  const int x0 = std::max(bbox.x, 0);
  const int y0 = std::max(bbox.y, 0);
  const int x1 = static_cast<int>(std::min<std::int64_t>(std::int64_t{bbox.x} + bbox.w, page.width));
  const int y1 = static_cast<int>(std::min<std::int64_t>(std::int64_t{bbox.y} + bbox.h, page.height));
  if (x1 <= x0 || y1 <= y0) {
    throw Error(ErrorCode::EmptyIntersection, "bbox does not intersect the page");
  }
  GrayRaster out = GrayRaster::filled(x1 - x0, y1 - y0, 0);
  for (int y = y0; y < y1; ++y) {
    std::copy_n(page.pixels.begin() + static_cast<std::ptrdiff_t>(y) * page.width + x0, x1 - x0,
                out.pixels.begin() + static_cast<std::ptrdiff_t>(y - y0) * out.width);
  }
  return out;
}

int otsu_threshold(const GrayRaster& img) {
  std::array<std::int64_t, 256> hist{};
  for (std::uint8_t p : img.pixels) ++hist[p];
  if (std::count_if(hist.begin(), hist.end(), [](std::int64_t c) { return c > 0; }) < 2) {
    throw Error(ErrorCode::ConstantImage, "threshold needs at least two distinct pixel values");
  }

  const std::int64_t n = static_cast<std::int64_t>(img.pixels.size());
  std::int64_t total = 0;
  for (int v = 0; v < 256; ++v) total += v * hist[v];

  // Between-class variance is proportional to d^2 / (n0 * n1) with
  // d = n * s0 - n0 * total. Small images compare it exactly.
  const bool exact = n <= 400'000;
  int best_t = 0;
  std::int64_t best_d = 0, best_den = 0;
  long double best_value = -1;
  std::int64_t n0 = 0, s0 = 0;
  for (int t = 0; t < 256; ++t) {
    n0 += hist[t];
    s0 += t * hist[t];
    const std::int64_t n1 = n - n0;
    if (n0 == 0 || n1 == 0) continue;
    const std::int64_t d = n * s0 - n0 * total;
    const std::int64_t den = n0 * n1;
    bool better;
    if (exact) {
      using u128 = unsigned __int128;
      const u128 lhs = u128(d < 0 ? -d : d) * u128(d < 0 ? -d : d) * u128(best_den);
      const u128 rhs = u128(best_d < 0 ? -best_d : best_d) * u128(best_d < 0 ? -best_d : best_d) * u128(den);
      better = best_den == 0 || lhs > rhs;
    } else {
      const long double value = static_cast<long double>(d) * d / static_cast<long double>(den);
      better = value > best_value;
      if (better) best_value = value;
    }
    if (better) {
      best_t = t;
      best_d = d;
      best_den = den;
    }
  }
  return best_t;
}

GrayRaster binarize(const GrayRaster& img, int threshold) {
  GrayRaster out = img;
  for (auto& p : out.pixels) p = p <= threshold ? 0 : 255;
  return out;
}

GrayRaster resize_nearest(const GrayRaster& img, int width, int height) {
  GrayRaster out = GrayRaster::filled(width, height, 0);
  for (int y = 0; y < height; ++y) {
    const int sy = static_cast<int>(static_cast<std::int64_t>(y) * img.height / height);
    for (int x = 0; x < width; ++x) {
      const int sx = static_cast<int>(static_cast<std::int64_t>(x) * img.width / width);
      out.at(x, y) = img.at(sx, sy);
    }
  }
  return out;
}

double mean_abs_difference(const GrayRaster& a, const GrayRaster& b) {
  if (a.width != b.width || a.height != b.height) {
    throw Error(ErrorCode::BadRequest, "rasters differ in size");
  }
  std::int64_t sum = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) sum += std::abs(int{a.pixels[i]} - int{b.pixels[i]});
  return a.pixels.empty() ? 0.0 : static_cast<double>(sum) / static_cast<double>(a.pixels.size());
}

std::uint8_t luma_bt601(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  // 0.299 R + 0.587 G + 0.114 B in thousandths, rounded half up.
  return static_cast<std::uint8_t>((299 * r + 587 * g + 114 * b + 500) / 1000);
}

GrayRaster PngCodec::decode(std::span<const std::uint8_t> bytes) const {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw Error(ErrorCode::BadRequest, std::string("png decode failed: ") + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, rgb.data(), 0, nullptr)) {
    png_image_free(&image);
    throw Error(ErrorCode::BadRequest, std::string("png decode failed: ") + image.message);
  }
  GrayRaster out = GrayRaster::filled(static_cast<int>(image.width), static_cast<int>(image.height), 0);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] = luma_bt601(rgb[3 * i], rgb[3 * i + 1], rgb[3 * i + 2]);
  return out;
}

std::string PngCodec::encode(const GrayRaster& img) const {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, img.pixels.data(), 0, nullptr)) {
    throw Error(ErrorCode::BadRequest, std::string("png encode failed: ") + image.message);
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, img.pixels.data(), 0, nullptr)) {
    throw Error(ErrorCode::BadRequest, std::string("png encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

void InMemoryPages::put(SpreadId id, GrayRaster raster) {
  pages_[id] = std::make_shared<const GrayRaster>(std::move(raster));
}

std::shared_ptr<const GrayRaster> InMemoryPages::page(const Spread& spread) const {
  auto it = pages_.find(spread.id);
  return it == pages_.end() ? nullptr : it->second;
}

ImageStore::ImageStore(std::filesystem::path root, std::shared_ptr<const ImageCodec> codec, std::size_t capacity)
    : root_(std::move(root)), codec_(std::move(codec)), capacity_(std::max<std::size_t>(capacity, 1)) {}

std::shared_ptr<const GrayRaster> ImageStore::page(const Spread& spread) const {
  if (!spread.image) return nullptr;
  const std::string key = *spread.image;
  auto lookup = [&]() -> std::shared_ptr<const GrayRaster> {
    std::lock_guard lock(mutex_);
    auto it = index_.find(key);
    if (it == index_.end()) return nullptr;
    lru_.splice(lru_.begin(), lru_, it->second);
    return it->second->second;
  };
  if (auto hit = lookup()) return hit;

  std::lock_guard loading(load_mutex_);
  if (auto hit = lookup()) return hit;  // another thread loaded it meanwhile

  const std::filesystem::path path = root_ / key;
  std::ifstream in(path, std::ios::binary);
  if (!in) return nullptr;
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto raster = std::make_shared<const GrayRaster>(codec_->decode(bytes));

  std::lock_guard lock(mutex_);
  lru_.emplace_front(key, raster);
  index_[key] = lru_.begin();
  while (lru_.size() > capacity_) {
    index_.erase(lru_.back().first);
    lru_.pop_back();
  }
  return raster;
}

std::size_t ImageStore::cached() const {
  std::lock_guard lock(mutex_);
  return lru_.size();
}

SegmentId representative_segment(const IndexedDataset& ds, BlockId block_id, const PageSource* images) {
  const Block& block = ds.block(block_id);
  if (images == nullptr || block.member_ids.size() == 1) return block.member_ids.front();

  struct Candidate {
    SegmentId id;
    GrayRaster crop;
  };
  std::vector<Candidate> candidates;
  std::map<std::pair<int, int>, std::size_t> sizes;
  for (SegmentId sid : block.member_ids) {
    const Segment& seg = ds.segment(sid);
    auto page = images->page(ds.spread(seg.spread_id));
    if (!page) continue;
    try {
      candidates.push_back({sid, crop_segment(*page, seg.bbox)});
    } catch (const Error&) {
      continue;  // bbox entirely off the scan
    }
    ++sizes[{seg.bbox.w, seg.bbox.h}];
  }
  if (candidates.empty()) return block.member_ids.front();

  std::pair<int, int> modal{};
  std::size_t best_count = 0;
  for (const auto& [size, count] : sizes) {
    if (count > best_count) {
      best_count = count;
      modal = size;
    }
  }
  for (auto& c : candidates) c.crop = resize_nearest(c.crop, modal.first, modal.second);

  SegmentId best = candidates.front().id;
  double best_cost = -1;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    double cost = 0;
    for (std::size_t j = 0; j < candidates.size(); ++j) {
      if (i != j) cost += mean_abs_difference(candidates[i].crop, candidates[j].crop);
    }
    if (best_cost < 0 || cost < best_cost || (cost == best_cost && candidates[i].id < best)) {
      best_cost = cost;
      best = candidates[i].id;
    }
  }
  return best;
}

GrayRaster block_thumbnail(const IndexedDataset& ds, BlockId block_id, const PageSource& images,
                           std::optional<int> threshold) {
  const SegmentId rep = representative_segment(ds, block_id, &images);
  const Segment& seg = ds.segment(rep);
  auto page = images.page(ds.spread(seg.spread_id));
  if (!page) {
    throw Error(ErrorCode::MissingImage, "no page image for " + entity_ref(seg.spread_id), entity_ref(seg.spread_id));
  }
  GrayRaster crop = crop_segment(*page, seg.bbox);
  if (threshold) return binarize(crop, *threshold);
  try {
    return binarize(crop, otsu_threshold(crop));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ConstantImage) throw;
    // A uniform crop is all ink if dark, otherwise all background.
    return binarize(crop, crop.pixels.front() < 128 ? 255 : -1);
  }
}

}  // namespace typecase
