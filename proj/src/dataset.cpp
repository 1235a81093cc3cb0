#include "ssn/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <unordered_map>

namespace ssn {

namespace {

void io_check(bool cond, const std::string& msg) {
  if (!cond) throw IoError(msg);
}

std::uint32_t read_u32_be(const std::vector<std::uint8_t>& b, std::size_t off) {
  io_check(off + 4 <= b.size(), "idx: truncated header, expected 4 bytes at offset " +
                                    std::to_string(off) + ", file has " +
                                    std::to_string(b.size()));
  return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
         (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

void write_u32_le(std::ofstream& os, std::uint32_t v) {
  static_assert(std::endian::native == std::endian::little);
  os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32_le(const std::vector<std::uint8_t>& b, std::size_t off) {
  io_check(off + 4 <= b.size(), "rbin: truncated at offset " + std::to_string(off));
  std::uint32_t v;
  std::memcpy(&v, b.data() + off, 4);
  return v;
}

}  // namespace

void LabeledData::validate() const {
  check(width > 0 && height > 0, "dataset: non-positive image dimensions");
  check(images.cols() == n_pixels(), "dataset: image column count mismatch");
  check(static_cast<Eigen::Index>(labels.size()) == images.rows(),
        "dataset: label count " + std::to_string(labels.size()) + " != image count " +
            std::to_string(images.rows()));
  check(!class_map.empty(), "dataset: empty class map");
  if (images.size() > 0) check(images.maxCoeff() <= 1, "dataset: non-binary pixel value");
  for (int l : labels)
    check(l >= 0 && l < n_classes(), "dataset: label " + std::to_string(l) + " out of range");
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  io_check(is.good(), "cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

RawImages parse_idx_images(const std::vector<std::uint8_t>& bytes) {
  const std::uint32_t magic = read_u32_be(bytes, 0);
  io_check(magic == 0x00000803u, "idx: bad image magic " + hex32(magic) + " at offset 0");
  RawImages out;
  out.count = static_cast<int>(read_u32_be(bytes, 4));
  out.height = static_cast<int>(read_u32_be(bytes, 8));
  out.width = static_cast<int>(read_u32_be(bytes, 12));
  io_check(out.height > 0 && out.width > 0, "idx: non-positive image dimensions at offset 8");
  const std::size_t expect = 16 + std::size_t(out.count) * out.height * out.width;
  io_check(bytes.size() == expect, "idx: expected " + std::to_string(expect) + " bytes, got " +
                                       std::to_string(bytes.size()) + " (payload at offset 16)");
  out.pixels.assign(bytes.begin() + 16, bytes.end());
  return out;
}

std::vector<std::uint8_t> parse_idx_labels(const std::vector<std::uint8_t>& bytes) {
  const std::uint32_t magic = read_u32_be(bytes, 0);
  io_check(magic == 0x00000801u, "idx: bad label magic " + hex32(magic) + " at offset 0");
  const std::uint32_t count = read_u32_be(bytes, 4);
  const std::size_t expect = 8 + std::size_t(count);
  io_check(bytes.size() == expect, "idx: expected " + std::to_string(expect) + " bytes, got " +
                                       std::to_string(bytes.size()) + " (payload at offset 8)");
  return std::vector<std::uint8_t>(bytes.begin() + 8, bytes.end());
}

std::vector<std::uint8_t> reduce_image(const std::vector<std::uint8_t>& img, int src, int dst) {
  check(src > 0 && dst > 0 && dst <= src, "reduce: invalid sizes");
  check(static_cast<std::size_t>(src) * src == img.size(), "reduce: image is not square");
  std::vector<std::uint8_t> out(std::size_t(dst) * dst);
  for (int r = 0; r < dst; ++r) {
    const int sr = r * src / dst;
    for (int c = 0; c < dst; ++c)
      out[std::size_t(r) * dst + c] = img[std::size_t(sr) * src + c * src / dst];
  }
  return out;
}

std::vector<std::uint8_t> binarize(const std::vector<std::uint8_t>& img) {
  check(!img.empty(), "binarize: empty image");
  std::vector<std::uint8_t> sorted(img);
  auto mid = sorted.begin() + static_cast<std::ptrdiff_t>((sorted.size() - 1) / 2);
  std::nth_element(sorted.begin(), mid, sorted.end());
  const std::uint8_t median = *mid;
  std::vector<std::uint8_t> out(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = img[i] > median ? 1 : 0;
  return out;
}

LabeledData select_classes(const LabeledData& data, const std::vector<int>& classes) {
  check(!classes.empty(), "select_classes: empty class list");
  std::unordered_map<int, int> to_new;  // original label -> new label
  for (std::size_t k = 0; k < classes.size(); ++k) {
    check(!to_new.count(classes[k]),
          "select_classes: duplicate class " + std::to_string(classes[k]));
    to_new[classes[k]] = static_cast<int>(k);
  }
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(data.labels.size()); ++i) {
    const int orig = data.class_map.at(static_cast<std::size_t>(data.labels[i]));
    if (to_new.count(orig)) keep.push_back(i);
  }
  LabeledData out;
  out.width = data.width;
  out.height = data.height;
  out.class_map = classes;
  out.images.resize(static_cast<Eigen::Index>(keep.size()), data.images.cols());
  out.labels.resize(keep.size());
  std::vector<int> counts(classes.size(), 0);
  for (std::size_t r = 0; r < keep.size(); ++r) {
    out.images.row(static_cast<Eigen::Index>(r)) = data.images.row(keep[r]);
    out.labels[r] = to_new.at(data.class_map.at(static_cast<std::size_t>(data.labels[keep[r]])));
    ++counts[static_cast<std::size_t>(out.labels[r])];
  }
  for (std::size_t k = 0; k < classes.size(); ++k)
    check(counts[k] > 0, "select_classes: class " + std::to_string(classes[k]) + " has no samples");
  return out;
}

LabeledData load_reduced_binary(const std::string& images_path, const std::string& labels_path,
                                const std::vector<int>& classes, int dst, int max_per_class) {
  const RawImages raw = parse_idx_images(read_file_bytes(images_path));
  const std::vector<std::uint8_t> labels = parse_idx_labels(read_file_bytes(labels_path));
  io_check(static_cast<int>(labels.size()) == raw.count,
           "dataset: " + std::to_string(raw.count) + " images but " +
               std::to_string(labels.size()) + " labels");
  io_check(raw.width == raw.height, "dataset: images are not square");

  LabeledData all;
  all.width = dst;
  all.height = dst;
  all.class_map.resize(256);
  for (int i = 0; i < 256; ++i) all.class_map[static_cast<std::size_t>(i)] = i;  // identity until selection
  all.images.resize(raw.count, dst * dst);
  all.labels.resize(static_cast<std::size_t>(raw.count));
  std::vector<std::uint8_t> img(std::size_t(raw.width) * raw.height);
  for (int i = 0; i < raw.count; ++i) {
    std::memcpy(img.data(), raw.pixels.data() + std::size_t(i) * img.size(), img.size());
    const auto bits = binarize(reduce_image(img, raw.width, dst));
    for (int p = 0; p < dst * dst; ++p) all.images(i, p) = bits[static_cast<std::size_t>(p)];
    all.labels[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(i)];
  }

  LabeledData out = select_classes(all, classes);
  if (max_per_class > 0) {
    std::vector<Eigen::Index> keep;
    std::vector<int> seen(static_cast<std::size_t>(out.n_classes()), 0);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(out.labels.size()); ++i)
      if (seen[static_cast<std::size_t>(out.labels[static_cast<std::size_t>(i)])]++ < max_per_class)
        keep.push_back(i);
    LabeledData capped;
    capped.width = out.width;
    capped.height = out.height;
    capped.class_map = out.class_map;
    capped.images.resize(static_cast<Eigen::Index>(keep.size()), out.images.cols());
    capped.labels.resize(keep.size());
    for (std::size_t r = 0; r < keep.size(); ++r) {
      capped.images.row(static_cast<Eigen::Index>(r)) = out.images.row(keep[r]);
      capped.labels[r] = out.labels[static_cast<std::size_t>(keep[r])];
    }
    out = std::move(capped);
  }
  out.validate();
  return out;
}

double mean_on_fraction(const LabeledData& data) {
  check(data.images.size() > 0, "dataset: empty");
  return data.images.cast<double>().sum() / static_cast<double>(data.images.size());
}

void save_rbin(const std::string& path, const LabeledData& data) {
  data.validate();
  std::ofstream os(path, std::ios::binary);
  io_check(os.good(), "cannot open " + path + " for writing");
  os.write("RBIN", 4);
  write_u32_le(os, 1u);
  write_u32_le(os, static_cast<std::uint32_t>(data.width));
  write_u32_le(os, static_cast<std::uint32_t>(data.height));
  write_u32_le(os, static_cast<std::uint32_t>(data.images.rows()));
  write_u32_le(os, static_cast<std::uint32_t>(data.class_map.size()));
  for (int c : data.class_map) write_u32_le(os, static_cast<std::uint32_t>(c));
  const int n_bytes = (data.n_pixels() + 7) / 8;
  std::vector<std::uint8_t> packed(static_cast<std::size_t>(n_bytes));
  for (Eigen::Index i = 0; i < data.images.rows(); ++i) {
    std::fill(packed.begin(), packed.end(), 0);
    for (int p = 0; p < data.n_pixels(); ++p)
      if (data.images(i, p)) packed[static_cast<std::size_t>(p / 8)] |= std::uint8_t(1u << (p % 8));
    os.write(reinterpret_cast<const char*>(packed.data()), n_bytes);
    const std::uint8_t label = static_cast<std::uint8_t>(data.labels[static_cast<std::size_t>(i)]);
    os.write(reinterpret_cast<const char*>(&label), 1);
  }
  io_check(os.good(), "write failed for " + path);
}

LabeledData load_rbin(const std::string& path) {
  const std::vector<std::uint8_t> b = read_file_bytes(path);
  io_check(b.size() >= 24, "rbin: file too short (" + std::to_string(b.size()) + " bytes)");
  io_check(std::memcmp(b.data(), "RBIN", 4) == 0, "rbin: bad magic at offset 0");
  const std::uint32_t version = read_u32_le(b, 4);
  io_check(version == 1u, "rbin: unsupported version " + std::to_string(version));
  LabeledData out;
  out.width = static_cast<int>(read_u32_le(b, 8));
  out.height = static_cast<int>(read_u32_le(b, 12));
  const std::uint32_t count = read_u32_le(b, 16);
  const std::uint32_t n_classes = read_u32_le(b, 20);
  io_check(out.width > 0 && out.height > 0 && n_classes > 0, "rbin: bad header fields");
  std::size_t off = 24;
  out.class_map.resize(n_classes);
  for (std::uint32_t k = 0; k < n_classes; ++k, off += 4)
    out.class_map[k] = static_cast<int>(read_u32_le(b, off));
  const int n_pix = out.n_pixels();
  const std::size_t n_bytes = std::size_t(n_pix + 7) / 8;
  const std::size_t expect = off + count * (n_bytes + 1);
  io_check(b.size() == expect,
           "rbin: expected " + std::to_string(expect) + " bytes, got " + std::to_string(b.size()));
  out.images.resize(count, n_pix);
  out.labels.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    for (int p = 0; p < n_pix; ++p)
      out.images(i, p) = (b[off + std::size_t(p / 8)] >> (p % 8)) & 1u;
    off += n_bytes;
    out.labels[i] = b[off++];
  }
  out.validate();
  return out;
}

}  // namespace ssn
