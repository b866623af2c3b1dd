#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedsim/dataset.hpp"

namespace fedsim {

namespace detail {

inline std::uint32_t read_be_u32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error("idx: truncated file while reading " + what);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

}  // namespace detail

// Classic big-endian IDX image/label pair (e.g. the MNIST distribution files).
// Pixels are min-max scaled to [0,1] (0 -> 0.0, 255 -> 1.0).
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw std::runtime_error("idx: cannot open images file " + images_path);
  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw std::runtime_error("idx: cannot open labels file " + labels_path);

  const std::uint32_t img_magic = detail::read_be_u32(img, "images magic");
  if (img_magic != 0x00000803)
    throw std::runtime_error("idx: bad images magic (expected 0x00000803)");
  const std::uint32_t n_img = detail::read_be_u32(img, "image count");
  const std::uint32_t rows = detail::read_be_u32(img, "image rows");
  const std::uint32_t cols = detail::read_be_u32(img, "image cols");

  const std::uint32_t lab_magic = detail::read_be_u32(lab, "labels magic");
  if (lab_magic != 0x00000801)
    throw std::runtime_error("idx: bad labels magic (expected 0x00000801)");
  const std::uint32_t n_lab = detail::read_be_u32(lab, "label count");
  if (n_img != n_lab)
    throw std::runtime_error("idx: image/label count mismatch (" + std::to_string(n_img) +
                             " images vs " + std::to_string(n_lab) + " labels)");

  const std::size_t dim = static_cast<std::size_t>(rows) * cols;
  if (dim == 0 || n_img == 0) throw std::runtime_error("idx: empty dataset");

  Dataset d;
  d.dim = dim;
  d.features.resize(static_cast<std::size_t>(n_img) * dim);
  d.labels.resize(n_img);

  std::vector<unsigned char> buf(dim);
  for (std::uint32_t i = 0; i < n_img; ++i) {
    if (!img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(dim)))
      throw std::runtime_error("idx: truncated file while reading image " + std::to_string(i));
    for (std::size_t j = 0; j < dim; ++j)
      d.features[static_cast<std::size_t>(i) * dim + j] = static_cast<double>(buf[j]) / 255.0;
  }
  int max_label = 0;
  for (std::uint32_t i = 0; i < n_lab; ++i) {
    unsigned char l;
    if (!lab.read(reinterpret_cast<char*>(&l), 1))
      throw std::runtime_error("idx: truncated file while reading label " + std::to_string(i));
    d.labels[i] = static_cast<int>(l);
    max_label = std::max(max_label, d.labels[i]);
  }
  d.num_classes = static_cast<std::size_t>(max_label) + 1;
  d.validate();
  return d;
}

}  // namespace fedsim
