#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "wdis/datasets.hpp"

namespace wdis::archives {

// Minimal reader for .npz containers (zip, stored or deflated entries,
// zip64 aware) holding .npy arrays.
struct NpyArray {
  std::string descr;  // numpy dtype string, e.g. "|u1", "<i8", "<f8"
  std::vector<std::size_t> shape;
  std::size_t item_size = 0;
  std::vector<std::size_t> kept_rows;  // rows retained by the filter, ascending
  std::vector<unsigned char> data;     // kept rows, C order

  std::size_t row_items() const;
  double value(std::size_t kept_row, std::size_t column) const;
};

// Receives (row, total_rows) and returns whether to keep it.
using RowFilter = std::function<bool(std::size_t, std::size_t)>;

class ZipArchive {
 public:
  explicit ZipArchive(std::string path);
  bool contains(const std::string& name) const { return entries_.contains(name); }
  NpyArray read_npy(const std::string& name, const RowFilter& keep = {}) const;

 private:
  struct Entry {
    std::uint16_t method = 0;
    std::uint64_t compressed = 0;
    std::uint64_t uncompressed = 0;
    std::uint64_t header_offset = 0;
  };
  void stream(const Entry& entry, const std::function<void(const unsigned char*, std::size_t)>& sink) const;

  std::string path_;
  std::map<std::string, Entry> entries_;
};

Dataset load_dsprites_npz(const std::string& path, const ArchiveOptions& options);
Dataset load_shapes3d_h5(const std::string& path, const ArchiveOptions& options);
Dataset load_hwf_json(const std::string& path, const ArchiveOptions& options);

// Box-average when the size divides evenly, bilinear otherwise.
ImageSample resample(const ImageSample& image, std::size_t size);

}  // namespace wdis::archives
