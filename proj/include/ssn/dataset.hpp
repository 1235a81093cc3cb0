#pragma once

// MNIST-family ingestion: IDX parsing, nearest-neighbor reduction to 12x12,
// per-image median binarization (ink = 1), class selection with label
// re-indexing, and a packed binary dataset record.

#include <cstdint>
#include <string>
#include <vector>

#include "ssn/common.hpp"

namespace ssn {

struct RawImages {
  int count = 0;
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // count * height * width, row-major
};

struct LabeledData {
  int width = 0;
  int height = 0;
  StateMatrix images;           // samples x (width*height), entries 0/1
  std::vector<int> labels;      // re-indexed 0..k-1
  std::vector<int> class_map;   // class_map[new_label] = original label

  int n_pixels() const { return width * height; }
  int n_classes() const { return static_cast<int>(class_map.size()); }
  void validate() const;
};

// IDX (big-endian): magic 0x00000803 for images, 0x00000801 for labels.
// Errors name the byte offset and expected vs actual lengths.
RawImages parse_idx_images(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> parse_idx_labels(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_file_bytes(const std::string& path);

// Nearest-neighbor resample of a square image; source index per target
// index t is floor(t * src / dst).
std::vector<std::uint8_t> reduce_image(const std::vector<std::uint8_t>& img, int src,
                                       int dst = 12);

// 1 where the pixel exceeds the per-image median (lower median of the
// sorted values); ties are 0, so constant images binarize to all zeros.
std::vector<std::uint8_t> binarize(const std::vector<std::uint8_t>& img);

// Keeps the requested original classes (each must be present), re-indexes
// labels to 0..k-1 in the order given, and records the mapping.
LabeledData select_classes(const LabeledData& data, const std::vector<int>& classes);

// Full ingest pipeline: parse, reduce to dst x dst, binarize, select
// classes; max_per_class > 0 keeps only the first K images of each class.
LabeledData load_reduced_binary(const std::string& images_path, const std::string& labels_path,
                                const std::vector<int>& classes, int dst = 12,
                                int max_per_class = 0);

// Mean on-fraction over all images (polarity sanity metric).
double mean_on_fraction(const LabeledData& data);

// Packed record: magic "RBIN", u32 version/width/height/count/n_classes,
// u32 class map, then per image ceil(w*h/8) LSB-first bitmap bytes + u8
// label.  Little-endian throughout.
void save_rbin(const std::string& path, const LabeledData& data);
LabeledData load_rbin(const std::string& path);

}  // namespace ssn
