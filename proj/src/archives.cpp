#include <hdf5.h>
#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <regex>

#include "archive_readers.hpp"
#include "wdis/error.hpp"
#include "wdis/image_io.hpp"

namespace wdis::archives {

namespace {

std::uint64_t read_le(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::vector<unsigned char> read_range(std::ifstream& in, std::uint64_t offset, std::size_t size) {
  std::vector<unsigned char> buf(size);
  in.seekg(static_cast<std::streamoff>(offset));
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(size));
  if (static_cast<std::size_t>(in.gcount()) != size) throw DataError("zip archive truncated");
  return buf;
}

// Incremental .npy parser: buffers the header, then hands row-aligned data on.
class NpyStream {
 public:
  NpyStream(NpyArray& out, const RowFilter& keep) : out_(out), keep_(keep) {}

  void feed(const unsigned char* data, std::size_t size) {
    while (size > 0) {
      if (!header_done_) {
        header_.push_back(*data++);
        --size;
        try_parse_header();
        continue;
      }
      const std::size_t take = std::min(size, row_bytes_ - row_fill_);
      std::memcpy(row_.data() + row_fill_, data, take);
      row_fill_ += take, data += take, size -= take;
      if (row_fill_ == row_bytes_) {
        if (row_index_ < rows_ && (!keep_ || keep_(row_index_, rows_))) {
          out_.kept_rows.push_back(row_index_);
          out_.data.insert(out_.data.end(), row_.begin(), row_.end());
        }
        ++row_index_;
        row_fill_ = 0;
      }
    }
  }

  void finish() const {
    if (!header_done_) throw DataError("malformed npy header");
    if (row_index_ != rows_) throw DataError("npy array truncated");
  }

 private:
  void try_parse_header() {
    if (header_.size() < 10) return;
    if (header_[0] != 0x93 || std::memcmp(&header_[1], "NUMPY", 5) != 0) throw DataError("malformed npy header (magic)");
    const int major = header_[6];
    const std::size_t prefix = major == 1 ? 10 : 12;
    if (header_.size() < prefix) return;
    const std::size_t len = major == 1 ? read_le(&header_[8], 2) : read_le(&header_[8], 4);
    if (header_.size() < prefix + len) return;
    const std::string dict(header_.begin() + static_cast<long>(prefix), header_.end());
    std::smatch m;
    if (!std::regex_search(dict, m, std::regex(R"('descr'\s*:\s*'([^']+)')"))) throw DataError("npy header lacks descr");
    out_.descr = m[1];
    if (std::regex_search(dict, m, std::regex(R"('fortran_order'\s*:\s*True)")))
      throw DataError("fortran-ordered npy arrays are not supported");
    if (!std::regex_search(dict, m, std::regex(R"('shape'\s*:\s*\(([^)]*)\))"))) throw DataError("npy header lacks shape");
    const std::string dims = m[1];
    const std::regex digits(R"(\d+)");
    for (std::sregex_iterator it(dims.begin(), dims.end(), digits), end; it != end; ++it)
      out_.shape.push_back(std::stoull(it->str()));
    if (out_.shape.empty()) throw DataError("scalar npy arrays are not supported");
    out_.item_size = std::stoull(std::regex_replace(out_.descr, std::regex(R"([^0-9])"), ""));
    rows_ = out_.shape[0];
    row_bytes_ = out_.row_items() * out_.item_size;
    row_.resize(row_bytes_);
    header_done_ = true;
    if (row_bytes_ == 0) row_index_ = rows_;
  }

  NpyArray& out_;
  const RowFilter& keep_;
  std::vector<unsigned char> header_;
  bool header_done_ = false;
  std::vector<unsigned char> row_;
  std::size_t row_bytes_ = 0, row_fill_ = 0, row_index_ = 0, rows_ = 0;
};

RowFilter stride_filter(std::size_t max_samples) {
  if (max_samples == 0) return {};
  return [max_samples](std::size_t row, std::size_t total) {
    const std::size_t stride = std::max<std::size_t>(1, (total + max_samples - 1) / max_samples);
    return row % stride == 0;
  };
}

std::size_t third_bin(std::size_t cls, std::size_t classes) { return std::min<std::size_t>(2, cls * 3 / classes); }

}  // namespace

std::size_t NpyArray::row_items() const {
  std::size_t n = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) n *= shape[i];
  return n;
}

double NpyArray::value(std::size_t kept_row, std::size_t column) const {
  const unsigned char* p = data.data() + (kept_row * row_items() + column) * item_size;
  const char kind = descr.size() >= 2 ? descr[1] : '?';
  if (descr[0] == '>') throw DataError("big-endian npy arrays are not supported");
  if (kind == 'u') return static_cast<double>(read_le(p, static_cast<int>(item_size)));
  if (kind == 'i' || kind == 'b') {
    const std::uint64_t raw = read_le(p, static_cast<int>(item_size));
    const int shift = 64 - 8 * static_cast<int>(item_size);
    return static_cast<double>(static_cast<std::int64_t>(raw << shift) >> shift);
  }
  if (kind == 'f' && item_size == 8) {
    double d;
    std::memcpy(&d, p, 8);
    return d;
  }
  if (kind == 'f' && item_size == 4) {
    float f;
    std::memcpy(&f, p, 4);
    return f;
  }
  throw DataError("unsupported npy dtype '" + descr + "'");
}

ZipArchive::ZipArchive(std::string path) : path_(std::move(path)) {
  std::ifstream in(path_, std::ios::binary | std::ios::ate);
  if (!in) throw DataError("cannot open archive '" + path_ + "'");
  const std::uint64_t size = static_cast<std::uint64_t>(in.tellg());
  const std::size_t tail = static_cast<std::size_t>(std::min<std::uint64_t>(size, 65557));
  const auto end = read_range(in, size - tail, tail);
  std::size_t eocd = std::string::npos;
  for (std::size_t i = tail >= 22 ? tail - 22 : 0; i + 4 <= tail; --i) {
    if (read_le(&end[i], 4) == 0x06054b50) {
      eocd = i;
      break;
    }
    if (i == 0) break;
  }
  if (eocd == std::string::npos) throw DataError("malformed header: '" + path_ + "' is not a zip/npz archive");
  std::uint64_t entries = read_le(&end[eocd + 10], 2);
  std::uint64_t cd_size = read_le(&end[eocd + 12], 4);
  std::uint64_t cd_offset = read_le(&end[eocd + 16], 4);
  if (entries == 0xffff || cd_offset == 0xffffffff) {
    if (eocd < 20 || read_le(&end[eocd - 20], 4) != 0x07064b50) throw DataError("zip64 locator missing");
    const auto z64 = read_range(in, read_le(&end[eocd - 12], 8), 56);
    if (read_le(z64.data(), 4) != 0x06064b50) throw DataError("zip64 record malformed");
    entries = read_le(&z64[32], 8);
    cd_size = read_le(&z64[40], 8);
    cd_offset = read_le(&z64[48], 8);
  }
  const auto cd = read_range(in, cd_offset, static_cast<std::size_t>(cd_size));
  std::size_t pos = 0;
  for (std::uint64_t e = 0; e < entries; ++e) {
    if (pos + 46 > cd.size() || read_le(&cd[pos], 4) != 0x02014b50) throw DataError("zip central directory malformed");
    Entry entry;
    entry.method = static_cast<std::uint16_t>(read_le(&cd[pos + 10], 2));
    entry.compressed = read_le(&cd[pos + 20], 4);
    entry.uncompressed = read_le(&cd[pos + 24], 4);
    const std::size_t name_len = read_le(&cd[pos + 28], 2), extra_len = read_le(&cd[pos + 30], 2),
                      comment_len = read_le(&cd[pos + 32], 2);
    entry.header_offset = read_le(&cd[pos + 42], 4);
    const std::string name(reinterpret_cast<const char*>(&cd[pos + 46]), name_len);
    std::size_t x = pos + 46 + name_len;
    const std::size_t x_end = x + extra_len;
    while (x + 4 <= x_end) {
      const auto id = read_le(&cd[x], 2), len = read_le(&cd[x + 2], 2);
      if (id == 0x0001) {
        std::size_t f = x + 4;
        if (entry.uncompressed == 0xffffffff) entry.uncompressed = read_le(&cd[f], 8), f += 8;
        if (entry.compressed == 0xffffffff) entry.compressed = read_le(&cd[f], 8), f += 8;
        if (entry.header_offset == 0xffffffff) entry.header_offset = read_le(&cd[f], 8);
      }
      x += 4 + len;
    }
    entries_[name] = entry;
    pos = x_end + comment_len;
  }
}

void ZipArchive::stream(const Entry& entry, const std::function<void(const unsigned char*, std::size_t)>& sink) const {
  std::ifstream in(path_, std::ios::binary);
  const auto local = read_range(in, entry.header_offset, 30);
  if (read_le(local.data(), 4) != 0x04034b50) throw DataError("zip local header malformed");
  std::uint64_t offset = entry.header_offset + 30 + read_le(&local[26], 2) + read_le(&local[28], 2);
  in.seekg(static_cast<std::streamoff>(offset));
  constexpr std::size_t kChunk = 1 << 20;
  std::vector<unsigned char> input(kChunk), output(kChunk);
  std::uint64_t remaining = entry.compressed;
  if (entry.method == 0) {
    while (remaining > 0) {
      const std::size_t take = static_cast<std::size_t>(std::min<std::uint64_t>(remaining, kChunk));
      in.read(reinterpret_cast<char*>(input.data()), static_cast<std::streamsize>(take));
      if (static_cast<std::size_t>(in.gcount()) != take) throw DataError("zip entry truncated");
      sink(input.data(), take);
      remaining -= take;
    }
    return;
  }
  if (entry.method != 8) throw DataError("unsupported zip compression method " + std::to_string(entry.method));
  z_stream zs{};
  if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) throw DataError("zlib initialisation failed");
  int status = Z_OK;
  while (status != Z_STREAM_END) {
    if (zs.avail_in == 0) {
      if (remaining == 0) {
        inflateEnd(&zs);
        throw DataError("zip entry truncated");
      }
      const std::size_t take = static_cast<std::size_t>(std::min<std::uint64_t>(remaining, kChunk));
      in.read(reinterpret_cast<char*>(input.data()), static_cast<std::streamsize>(take));
      remaining -= take;
      zs.next_in = input.data();
      zs.avail_in = static_cast<uInt>(take);
    }
    zs.next_out = output.data();
    zs.avail_out = static_cast<uInt>(kChunk);
    status = inflate(&zs, Z_NO_FLUSH);
    if (status != Z_OK && status != Z_STREAM_END) {
      inflateEnd(&zs);
      throw DataError("zip entry corrupt (inflate error)");
    }
    sink(output.data(), kChunk - zs.avail_out);
  }
  inflateEnd(&zs);
}

NpyArray ZipArchive::read_npy(const std::string& name, const RowFilter& keep) const {
  const auto it = entries_.find(name);
  if (it == entries_.end()) throw DataError("archive '" + path_ + "' has no entry '" + name + "'");
  NpyArray array;
  NpyStream parser(array, keep);
  stream(it->second, [&](const unsigned char* p, std::size_t n) { parser.feed(p, n); });
  parser.finish();
  return array;
}

ImageSample resample(const ImageSample& image, std::size_t size) {
  if (size == 0 || (image.height == size && image.width == size)) return image;
  if (image.height % size == 0 && image.width % size == 0) {
    const std::size_t fy = image.height / size, fx = image.width / size;
    ImageSample out = image;
    out.height = out.width = size;
    out.pixels.assign(size * size * image.channels, 0.0f);
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x)
        for (std::size_t c = 0; c < image.channels; ++c) {
          double acc = 0;
          for (std::size_t dy = 0; dy < fy; ++dy)
            for (std::size_t dx = 0; dx < fx; ++dx) acc += image.at(y * fy + dy, x * fx + dx, c);
          out.pixels[(y * size + x) * image.channels + c] = static_cast<float>(acc / static_cast<double>(fy * fx));
        }
    return out;
  }
  return resize_bilinear(image, size, size);
}

Dataset load_dsprites_npz(const std::string& path, const ArchiveOptions& options) {
  ZipArchive zip(path);
  const auto keep = stride_filter(options.max_samples);
  const auto classes = zip.read_npy("latents_classes.npy", keep);
  if (classes.shape.size() != 2 || classes.shape[1] != 6)
    throw DataError("latents_classes must have shape (n, 6): color, shape, scale, orientation, posX, posY");
  NpyArray values;
  if (zip.contains("latents_values.npy")) values = zip.read_npy("latents_values.npy", keep);
  const auto imgs = zip.read_npy("imgs.npy", keep);
  if (imgs.shape.size() != 3 || imgs.shape[0] != classes.shape[0])
    throw DataError("imgs must have shape (n, H, W) matching latents_classes");

  // Archive shape classes: 0 square, 1 ellipse, 2 heart. Positions are
  // binned into thirds of their 32-class range, posY class 0 being the top.
  Dataset ds{build_factor_space(Preset::Dsprites), {}, {}, {}, {}};
  const std::array<std::string, 3> shape_names = {"square", "ellipse", "heart"};
  const std::size_t h = imgs.shape[1], w = imgs.shape[2];
  double max_pixel = 0;
  for (auto b : imgs.data) max_pixel = std::max<double>(max_pixel, b);
  const double pixel_scale = max_pixel <= 1.0 ? 1.0 : 1.0 / 255.0;
  std::size_t pos_classes_x = 32, pos_classes_y = 32;
  for (std::size_t r = 0; r < classes.kept_rows.size(); ++r) {
    pos_classes_x = std::max<std::size_t>(pos_classes_x, static_cast<std::size_t>(classes.value(r, 4)) + 1);
    pos_classes_y = std::max<std::size_t>(pos_classes_y, static_cast<std::size_t>(classes.value(r, 5)) + 1);
  }
  for (std::size_t r = 0; r < classes.kept_rows.size(); ++r) {
    const auto shape = static_cast<std::size_t>(classes.value(r, 1));
    if (shape >= 3) throw DataError("unknown factor value: dSprites shape class " + std::to_string(shape));
    const auto x = third_bin(static_cast<std::size_t>(classes.value(r, 4)), pos_classes_x);
    const auto y = third_bin(static_cast<std::size_t>(classes.value(r, 5)), pos_classes_y);
    const auto combo = make_combination(ds.space, {ds.space.factor(0).values[x], ds.space.factor(1).values[y], shape_names[shape]});
    ImageSample img;
    img.height = h, img.width = w, img.channels = 1;
    img.pixels.resize(h * w);
    for (std::size_t p = 0; p < h * w; ++p)
      img.pixels[p] = quantize_pixel(static_cast<float>(imgs.data[r * h * w + p] * pixel_scale));
    img.combination_index = combo.index;
    if (!values.data.empty()) img.nuisance = {values.value(r, 2), values.value(r, 3)};
    else img.nuisance = {classes.value(r, 2), classes.value(r, 3)};
    img = resample(img, options.image_size);
    for (auto& p : img.pixels) p = quantize_pixel(p);
    ds.samples.push_back(std::move(img));
  }
  assign_splits(ds, options.seed);
  return ds;
}

Dataset load_shapes3d_h5(const std::string& path, const ArchiveOptions& options) {
  H5Eset_auto2(H5E_DEFAULT, nullptr, nullptr);
  const hid_t file = H5Fopen(path.c_str(), H5F_ACC_RDONLY, H5P_DEFAULT);
  if (file < 0) throw DataError("cannot open HDF5 archive '" + path + "'");
  struct Closer {
    std::vector<std::pair<hid_t, herr_t (*)(hid_t)>> handles;
    ~Closer() {
      for (auto it = handles.rbegin(); it != handles.rend(); ++it) it->second(it->first);
    }
  } closer;
  closer.handles.push_back({file, H5Fclose});

  const hid_t labels = H5Dopen2(file, "labels", H5P_DEFAULT);
  const hid_t images = H5Dopen2(file, "images", H5P_DEFAULT);
  if (labels < 0 || images < 0) throw DataError("malformed header: shapes3d archive needs 'images' and 'labels'");
  closer.handles.push_back({labels, H5Dclose});
  closer.handles.push_back({images, H5Dclose});

  const hid_t label_space = H5Dget_space(labels);
  const hid_t image_space = H5Dget_space(images);
  closer.handles.push_back({label_space, H5Sclose});
  closer.handles.push_back({image_space, H5Sclose});
  std::array<hsize_t, 2> ldims{};
  std::array<hsize_t, 4> idims{};
  if (H5Sget_simple_extent_ndims(label_space) != 2 || H5Sget_simple_extent_ndims(image_space) != 4)
    throw DataError("malformed header: labels must be (n, 6), images (n, H, W, 3)");
  H5Sget_simple_extent_dims(label_space, ldims.data(), nullptr);
  H5Sget_simple_extent_dims(image_space, idims.data(), nullptr);
  if (ldims[1] != 6 || idims[0] != ldims[0] || idims[3] != 3)
    throw DataError("malformed header: labels must be (n, 6), images (n, H, W, 3)");

  const std::size_t total = ldims[0];
  std::vector<double> label_values(total * 6);
  if (H5Dread(labels, H5T_NATIVE_DOUBLE, H5S_ALL, H5S_ALL, H5P_DEFAULT, label_values.data()) < 0)
    throw DataError("failed reading shapes3d labels");

  const std::size_t stride =
      options.max_samples == 0 ? 1 : std::max<std::size_t>(1, (total + options.max_samples - 1) / options.max_samples);
  const std::size_t kept = (total + stride - 1) / stride;
  const std::size_t h = idims[1], w = idims[2];
  std::vector<unsigned char> pixels(kept * h * w * 3);
  const std::array<hsize_t, 4> start{0, 0, 0, 0}, step{stride, 1, 1, 1}, count{kept, h, w, 3};
  H5Sselect_hyperslab(image_space, H5S_SELECT_SET, start.data(), step.data(), count.data(), nullptr);
  const hid_t mem_space = H5Screate_simple(4, count.data(), nullptr);
  closer.handles.push_back({mem_space, H5Sclose});
  if (H5Dread(images, H5T_NATIVE_UCHAR, mem_space, image_space, H5P_DEFAULT, pixels.data()) < 0)
    throw DataError("failed reading shapes3d images");

  // Label columns: floor_hue, wall_hue, object_hue, scale, shape, orientation.
  // Eight scale steps on [0.75, 1.25] fold into small/medium/big by index.
  Dataset ds{build_factor_space(Preset::Shapes3d), {}, {}, {}, {}};
  for (std::size_t r = 0; r < kept; ++r) {
    const double* lab = &label_values[r * stride * 6];
    const long hue = std::lround(lab[2] * 10.0);
    const long scale_step = std::lround((lab[3] - 0.75) / 0.5 * 7.0);
    const long shape = std::lround(lab[4]);
    if (hue < 0 || hue > 9 || scale_step < 0 || scale_step > 7 || shape < 0 || shape > 3)
      throw DataError("unknown factor value in shapes3d labels row " + std::to_string(r * stride));
    const std::size_t scale_bin = static_cast<std::size_t>(scale_step) * 3 / 8;
    const auto combo = make_combination(
        ds.space, {ds.space.factor(0).values[static_cast<std::size_t>(hue)], ds.space.factor(1).values[static_cast<std::size_t>(shape)],
                   ds.space.factor(2).values[scale_bin]});
    ImageSample img;
    img.height = h, img.width = w, img.channels = 3;
    img.pixels.resize(h * w * 3);
    for (std::size_t p = 0; p < h * w * 3; ++p) img.pixels[p] = static_cast<float>(pixels[r * h * w * 3 + p]) / 255.0f;
    img.combination_index = combo.index;
    img.nuisance = {lab[0], lab[1], lab[5]};
    img = resample(img, options.image_size);
    for (auto& p : img.pixels) p = quantize_pixel(p);
    ds.samples.push_back(std::move(img));
  }
  assign_splits(ds, options.seed);
  return ds;
}

Dataset load_hwf_json(const std::string& path, const ArchiveOptions& options) {
  namespace fs = std::filesystem;
  std::ifstream in(path);
  if (!in) throw DataError("cannot open HWF expression file '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed header: HWF json: ") + e.what());
  }
  if (!doc.is_array()) throw DataError("malformed header: HWF json must be a list of expressions");
  const fs::path base = fs::path(path).parent_path();
  const fs::path symbols_dir = fs::exists(base / "Handwritten_Math_Symbols") ? base / "Handwritten_Math_Symbols" : base;

  // Each expression contributes one sample per symbol image; division is
  // outside the 13-symbol alphabet and is skipped. Ink is normalised to 1.
  Dataset ds{build_factor_space(Preset::HwfLike), {}, {}, {}, {}};
  const auto& symbol = ds.space.factor(0);
  for (const auto& expr : doc) {
    if (options.max_samples != 0 && ds.samples.size() >= options.max_samples) break;
    if (!expr.contains("img_paths") || !expr.contains("expr")) throw DataError("HWF entry lacks img_paths/expr");
    const auto text = expr["expr"].get<std::string>();
    const auto& paths = expr["img_paths"];
    if (paths.size() != text.size()) throw DataError("HWF entry '" + text + "' has mismatched image count");
    for (std::size_t i = 0; i < text.size(); ++i) {
      const std::string sym(1, text[i]);
      if (sym == "/") continue;
      const auto v = symbol.value_index(sym);
      if (!v) throw DataError("unknown factor value '" + sym + "' in HWF expression");
      if (options.max_samples != 0 && ds.samples.size() >= options.max_samples) break;
      ImageSample img = to_grayscale(read_image((symbols_dir / paths[i].get<std::string>()).string()));
      double mean = 0;
      for (auto p : img.pixels) mean += p;
      if (mean / static_cast<double>(img.pixels.size()) > 0.5)
        for (auto& p : img.pixels) p = 1.0f - p;
      if (options.image_size != 0) img = resize_bilinear(img, options.image_size, options.image_size);
      for (auto& p : img.pixels) p = quantize_pixel(p);
      img.combination_index = *v;
      img.nuisance = {0.0, 0.0};
      ds.samples.push_back(std::move(img));
    }
  }
  if (ds.samples.empty()) throw DataError("HWF archive '" + path + "' yielded no samples");
  for (const auto& s : ds.samples)
    if (s.height != ds.samples.front().height || s.width != ds.samples.front().width)
      throw DataError("HWF images differ in size; pass an image size to resample");
  assign_splits(ds, options.seed);
  return ds;
}

}  // namespace wdis::archives
