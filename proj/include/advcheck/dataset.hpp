#pragma once

// Labelled datasets: CSV, raw MNIST IDX pairs and synthetic generators.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "advcheck/errors.hpp"
#include "advcheck/models.hpp"
#include "advcheck/numerics.hpp"

namespace advcheck {

struct Dataset {
  std::string name;
  std::vector<Vec> inputs;
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;
  std::optional<std::pair<std::size_t, std::size_t>> grid;  // height, width
  double box_lo = 0.0;
  double box_hi = 1.0;

  std::size_t size() const { return inputs.size(); }
  std::size_t dim() const { return inputs.empty() ? 0 : inputs.front().size(); }

  void validate() const {
    if (inputs.size() != labels.size()) throw ValidationError("dataset '" + name + "': inputs and labels differ in length");
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (labels[i] >= num_classes)
        throw ValidationError("dataset '" + name + "': example " + std::to_string(i) + " has label " +
                              std::to_string(labels[i]) + " but the class count is " + std::to_string(num_classes));
      if (inputs[i].size() != dim())
        throw ValidationError("dataset '" + name + "': example " + std::to_string(i) + " has the wrong dimension");
      for (double v : inputs[i])
        if (!(v >= box_lo && v <= box_hi))
          throw ValidationError("dataset '" + name + "': example " + std::to_string(i) + " leaves the box");
    }
    if (grid && grid->first * grid->second != dim())
      throw ValidationError("dataset '" + name + "': grid shape does not match the dimension");
  }

  Dataset head(std::size_t n) const {
    Dataset d = *this;
    n = std::min(n, size());
    d.inputs.resize(n);
    d.labels.resize(n);
    return d;
  }
};

// Two classes in 2-D: class c centred at (0.5 -/+ margin/2, 0.5) with isotropic
// spread sigma, clipped to [0,1]. Labels alternate 0, 1, 0, ...
inline Dataset make_gauss2(std::size_t n, double sigma, double margin, Rng& rng) {
  Dataset d;
  d.name = "gauss2";
  d.num_classes = 2;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % 2;
    const double cx = c == 0 ? 0.5 - margin / 2.0 : 0.5 + margin / 2.0;
    Vec x{cx + sigma * rng.normal(), 0.5 + sigma * rng.normal()};
    for (double& v : x) v = std::clamp(v, 0.0, 1.0);
    d.inputs.push_back(std::move(x));
    d.labels.push_back(c);
  }
  return d;
}

// Two concentric circles around (0.5, 0.5): class 0 at radius r1, class 1 at r2.
inline Dataset make_circles(std::size_t n, double r1, double r2, Rng& rng) {
  Dataset d;
  d.name = "circles";
  d.num_classes = 2;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % 2;
    const double r = c == 0 ? r1 : r2;
    const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
    Vec x{0.5 + r * std::cos(a), 0.5 + r * std::sin(a)};
    for (double& v : x) v = std::clamp(v, 0.0, 1.0);
    d.inputs.push_back(std::move(x));
    d.labels.push_back(c);
  }
  return d;
}

namespace detail {
inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("dataset file '" + path + "' not found");
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline std::uint32_t be_u32(const std::string& bytes, std::size_t at) {
  if (bytes.size() < at + 4) throw FormatError("truncated IDX header", bytes.size());
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(bytes[at + i]);
  return v;
}
}  // namespace detail

// Raw MNIST: images magic 0x00000803 with n, rows, cols; labels magic
// 0x00000801 with n. Big-endian; pixels scaled to [0,1].
inline Dataset parse_idx(const std::string& image_bytes, const std::string& label_bytes,
                         std::optional<std::size_t> limit = std::nullopt) {
  if (detail::be_u32(image_bytes, 0) != 0x00000803u) throw FormatError("bad IDX image magic", 0);
  if (detail::be_u32(label_bytes, 0) != 0x00000801u) throw FormatError("bad IDX label magic", 0);
  const std::size_t n = detail::be_u32(image_bytes, 4);
  const std::size_t rows = detail::be_u32(image_bytes, 8);
  const std::size_t cols = detail::be_u32(image_bytes, 12);
  const std::size_t nl = detail::be_u32(label_bytes, 4);
  if (nl != n) throw FormatError("IDX image and label counts differ", 4);
  const std::size_t pixels = rows * cols;
  if (image_bytes.size() < 16 + n * pixels) throw FormatError("truncated IDX image data", image_bytes.size());
  if (label_bytes.size() < 8 + n) throw FormatError("truncated IDX label data", label_bytes.size());
  const std::size_t take = limit ? std::min(*limit, n) : n;
  Dataset d;
  d.name = "mnist";
  d.num_classes = 10;
  d.grid = std::make_pair(rows, cols);
  d.inputs.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    Vec x(pixels);
    for (std::size_t p = 0; p < pixels; ++p)
      x[p] = static_cast<unsigned char>(image_bytes[16 + i * pixels + p]) / 255.0;
    d.inputs.push_back(std::move(x));
    const auto label = static_cast<unsigned char>(label_bytes[8 + i]);
    if (label > 9) throw FormatError("IDX label out of range", 8 + i);
    d.labels.push_back(label);
  }
  return d;
}

// Header `label,f0,f1,...`, one example per line.
inline Dataset parse_csv(const std::string& text, std::optional<std::size_t> num_classes) {
  std::istringstream in(text);
  std::string line;
  std::size_t offset = 0;
  if (!std::getline(in, line)) throw FormatError("empty CSV", 0);
  const auto header = split(line, ',');
  if (header.empty() || header[0] != "label") throw FormatError("CSV header must start with 'label'", 0);
  for (std::size_t i = 1; i < header.size(); ++i)
    if (header[i] != "f" + std::to_string(i - 1)) throw FormatError("CSV header column " + std::to_string(i) + " must be f" + std::to_string(i - 1), 0);
  const std::size_t dim = header.size() - 1;
  offset += line.size() + 1;
  Dataset d;
  d.name = "csv";
  std::size_t max_label = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      offset += 1;
      continue;
    }
    const auto cells = split(line, ',');
    if (cells.size() != dim + 1) throw FormatError("CSV row has " + std::to_string(cells.size()) + " cells, expected " + std::to_string(dim + 1), offset);
    Vec x(dim);
    double label = 0;
    try {
      label = parse_number(cells[0], "label");
      for (std::size_t i = 0; i < dim; ++i) x[i] = parse_number(cells[i + 1], "feature");
    } catch (const ArgumentError& e) {
      throw FormatError(e.what(), offset);
    }
    if (label < 0 || label != std::floor(label)) throw FormatError("CSV label must be a non-negative integer", offset);
    d.labels.push_back(static_cast<std::size_t>(label));
    max_label = std::max(max_label, d.labels.back());
    d.inputs.push_back(std::move(x));
    offset += line.size() + 1;
  }
  d.num_classes = num_classes ? *num_classes : max_label + 1;
  return d;
}

struct DatasetOptions {
  std::optional<std::size_t> num_classes;
  std::optional<std::size_t> limit;
};

// Sources: "gauss2:n:sigma:margin", "circles:n:r1:r2", "mnist:IMAGES:LABELS",
// or a path to a CSV file.
inline Dataset load_dataset(const std::string& source, Rng& rng, const DatasetOptions& opt = {}) {
  const auto parts = split(source, ':');
  auto count = [&](const std::string& s) {
    const double v = parse_number(s, "example count");
    if (v < 1 || v != std::floor(v)) throw ArgumentError("example count must be a positive integer");
    return static_cast<std::size_t>(v);
  };
  Dataset d;
  if (parts[0] == "gauss2") {
    if (parts.size() != 4) throw ArgumentError("expected gauss2:n:sigma:margin");
    d = make_gauss2(count(parts[1]), parse_number(parts[2], "sigma"), parse_number(parts[3], "margin"), rng);
  } else if (parts[0] == "circles") {
    if (parts.size() != 4) throw ArgumentError("expected circles:n:r1:r2");
    d = make_circles(count(parts[1]), parse_number(parts[2], "r1"), parse_number(parts[3], "r2"), rng);
  } else if (parts[0] == "mnist") {
    if (parts.size() != 3) throw ArgumentError("expected mnist:IMAGES:LABELS");
    d = parse_idx(detail::read_file(parts[1]), detail::read_file(parts[2]), opt.limit);
  } else {
    d = parse_csv(detail::read_file(source), opt.num_classes);
  }
  if (opt.limit) d = d.head(*opt.limit);
  d.validate();
  return d;
}

}  // namespace advcheck
