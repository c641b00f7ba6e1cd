// Copyright 2026 The clog-bench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "clog/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <set>

#include "clog/errors.hpp"
#include "clog/rng.hpp"

namespace clog {

std::vector<int> LabeledDataset::class_set() const {
  std::set<int> classes(labels.begin(), labels.end());
  return std::vector<int>(classes.begin(), classes.end());
}

TaskData::TaskData(TaskSpec task, ImageShape shape, Eigen::MatrixXf images,
                   std::vector<int> conditions)
    : task_(std::move(task)),
      shape_(shape),
      images_(std::move(images)),
      conditions_(std::move(conditions)) {
  check_invariant(images_.cols() == static_cast<Eigen::Index>(conditions_.size()),
                  "TaskData image/condition count mismatch");
  for (int c : conditions_) {
    check_invariant(std::find(task_.class_labels.begin(),
                              task_.class_labels.end(),
                              c) != task_.class_labels.end(),
                    "TaskData condition outside task class set");
  }
}

const Eigen::MatrixXf& TaskData::images() const {
  check_invariant(!sealed_, "raw sample access on sealed task data");
  return images_;
}

const std::vector<int>& TaskData::conditions() const {
  check_invariant(!sealed_, "raw sample access on sealed task data");
  return conditions_;
}

namespace {

// ---------------------------------------------------------------------------
// shapes8: synthetic 8x8 set, 4 classes x 500 images, no files needed.
// Foreground shapes on a -1 background with amplitude jitter and light pixel
// noise so feature covariances are well conditioned.
// ---------------------------------------------------------------------------

constexpr int kShapesSide = 8;
constexpr int kShapesPerClass = 500;
constexpr std::uint64_t kShapesSeed = 0x73686170657338ULL;  // fixed: data identity

void draw_square(Eigen::Ref<Eigen::MatrixXf> img, int r0, int c0, float a) {
  for (int r = r0; r < r0 + 4; ++r)
    for (int c = c0; c < c0 + 4; ++c) img(r, c) = a;
}

void draw_circle(Eigen::Ref<Eigen::MatrixXf> img, int r0, int c0, float a) {
  // 4x4 ring (hollow square) reads as a circle at this resolution.
  for (int r = r0; r < r0 + 4; ++r)
    for (int c = c0; c < c0 + 4; ++c)
      if (r == r0 || r == r0 + 3 || c == c0 || c == c0 + 3) img(r, c) = a;
}

void draw_cross(Eigen::Ref<Eigen::MatrixXf> img, int r0, int c0, float a) {
  for (int k = 0; k < 5; ++k) {
    img(r0 + 2, c0 + k) = a;
    img(r0 + k, c0 + 2) = a;
  }
}

void draw_stripe(Eigen::Ref<Eigen::MatrixXf> img, int c0, float a) {
  for (int r = 0; r < kShapesSide; ++r) {
    img(r, c0) = a;
    img(r, c0 + 1) = a;
  }
}

LabeledDataset make_shapes8() {
  LabeledDataset data;
  data.dataset_id = "shapes8";
  data.shape = {1, kShapesSide, kShapesSide};
  const int n = 4 * kShapesPerClass;
  data.images.resize(data.shape.pixel_count(), n);
  data.labels.resize(static_cast<std::size_t>(n));
  Rng rng(kShapesSeed);
  Eigen::MatrixXf img(kShapesSide, kShapesSide);
  for (int i = 0; i < n; ++i) {
    const int label = i % 4;
    img.setConstant(-1.0f);
    const float amp = static_cast<float>(rng.uniform(0.7, 1.0));
    switch (label) {
      case 0:
        draw_square(img, rng.uniform_int(0, 4), rng.uniform_int(0, 4), amp);
        break;
      case 1:
        draw_circle(img, rng.uniform_int(0, 4), rng.uniform_int(0, 4), amp);
        break;
      case 2:
        draw_cross(img, rng.uniform_int(0, 3), rng.uniform_int(0, 3), amp);
        break;
      default:
        draw_stripe(img, rng.uniform_int(0, kShapesSide - 2), amp);
        break;
    }
    for (int c = 0; c < kShapesSide; ++c)
      for (int r = 0; r < kShapesSide; ++r)
        img(r, c) += static_cast<float>(rng.uniform(-0.05, 0.05));
    // Column i holds the image row-major: index r * W + c.
    for (int r = 0; r < kShapesSide; ++r)
      for (int c = 0; c < kShapesSide; ++c)
        data.images(r * kShapesSide + c, i) = img(r, c);
    data.labels[static_cast<std::size_t>(i)] = label;
  }
  return data;
}

// ---------------------------------------------------------------------------
// File readers
// ---------------------------------------------------------------------------

std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset file: " + path);
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                    std::istreambuf_iterator<char>());
}

bool is_gzip(const std::vector<unsigned char>& bytes) {
  return bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b;
}

std::vector<unsigned char> gunzip(const std::vector<unsigned char>& compressed,
                                  const std::string& path) {
  z_stream strm{};
  // 15 + 32: zlib or gzip container auto-detect.
  if (inflateInit2(&strm, 15 + 32) != Z_OK) {
    throw DataError("zlib init failed for: " + path);
  }
  std::vector<unsigned char> out;
  std::vector<unsigned char> chunk(1 << 16);
  strm.next_in = const_cast<unsigned char*>(compressed.data());
  strm.avail_in = static_cast<uInt>(compressed.size());
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    strm.next_out = chunk.data();
    strm.avail_out = static_cast<uInt>(chunk.size());
    rc = inflate(&strm, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&strm);
      throw DataError("corrupt gzip stream: " + path);
    }
    out.insert(out.end(), chunk.data(),
               chunk.data() + (chunk.size() - strm.avail_out));
  }
  inflateEnd(&strm);
  return out;
}

/// Reads a dataset file, transparently decompressing; tries `path` then
/// `path + ".gz"`.
std::vector<unsigned char> read_maybe_gz(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  std::string actual = path;
  if (!probe) {
    actual = path + ".gz";
    std::ifstream probe_gz(actual, std::ios::binary);
    if (!probe_gz) throw DataError("cannot open dataset file: " + path);
  }
  auto bytes = read_file_bytes(actual);
  if (is_gzip(bytes)) return gunzip(bytes, actual);
  return bytes;
}

std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t off) {
  return (static_cast<std::uint32_t>(b[off]) << 24) |
         (static_cast<std::uint32_t>(b[off + 1]) << 16) |
         (static_cast<std::uint32_t>(b[off + 2]) << 8) |
         static_cast<std::uint32_t>(b[off + 3]);
}

struct IdxImages {
  int count = 0;
  int rows = 0;
  int cols = 0;
  std::vector<unsigned char> pixels;  // count * rows * cols
};

IdxImages read_idx_images(const std::string& path) {
  auto bytes = read_maybe_gz(path);
  if (bytes.size() < 16 || read_be32(bytes, 0) != 0x00000803u) {
    throw DataError("not an IDX image file: " + path);
  }
  IdxImages out;
  out.count = static_cast<int>(read_be32(bytes, 4));
  out.rows = static_cast<int>(read_be32(bytes, 8));
  out.cols = static_cast<int>(read_be32(bytes, 12));
  const std::size_t expect =
      16 + static_cast<std::size_t>(out.count) * out.rows * out.cols;
  if (bytes.size() < expect) throw DataError("truncated IDX image file: " + path);
  out.pixels.assign(bytes.begin() + 16, bytes.begin() + static_cast<long>(expect));
  return out;
}

std::vector<int> read_idx_labels(const std::string& path) {
  auto bytes = read_maybe_gz(path);
  if (bytes.size() < 8 || read_be32(bytes, 0) != 0x00000801u) {
    throw DataError("not an IDX label file: " + path);
  }
  const int count = static_cast<int>(read_be32(bytes, 4));
  if (bytes.size() < 8 + static_cast<std::size_t>(count)) {
    throw DataError("truncated IDX label file: " + path);
  }
  std::vector<int> labels(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) labels[static_cast<std::size_t>(i)] = bytes[8 + i];
  return labels;
}

/// Bilinear resize of a single-channel row-major uint8 image to float [-1,1].
void resize_bilinear(const unsigned char* src, int sh, int sw,
                     Eigen::Ref<Eigen::VectorXf> dst, int dh, int dw) {
  const float ry = static_cast<float>(sh) / static_cast<float>(dh);
  const float rx = static_cast<float>(sw) / static_cast<float>(dw);
  for (int y = 0; y < dh; ++y) {
    float sy = (static_cast<float>(y) + 0.5f) * ry - 0.5f;
    sy = std::min(std::max(sy, 0.0f), static_cast<float>(sh - 1));
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, sh - 1);
    const float fy = sy - static_cast<float>(y0);
    for (int x = 0; x < dw; ++x) {
      float sx = (static_cast<float>(x) + 0.5f) * rx - 0.5f;
      sx = std::min(std::max(sx, 0.0f), static_cast<float>(sw - 1));
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, sw - 1);
      const float fx = sx - static_cast<float>(x0);
      const float top = static_cast<float>(src[y0 * sw + x0]) * (1 - fx) +
                        static_cast<float>(src[y0 * sw + x1]) * fx;
      const float bot = static_cast<float>(src[y1 * sw + x0]) * (1 - fx) +
                        static_cast<float>(src[y1 * sw + x1]) * fx;
      const float v = top * (1 - fy) + bot * fy;
      dst(y * dw + x) = v / 127.5f - 1.0f;
    }
  }
}

LabeledDataset load_idx_dataset(const std::string& dataset_id,
                                const std::string& dir) {
  const IdxImages raw = read_idx_images(dir + "/train-images-idx3-ubyte");
  std::vector<int> labels = read_idx_labels(dir + "/train-labels-idx1-ubyte");
  require(static_cast<int>(labels.size()) == raw.count,
          "image/label count mismatch under " + dir);
  LabeledDataset data;
  data.dataset_id = dataset_id;
  data.shape = {1, 32, 32};
  data.images.resize(data.shape.pixel_count(), raw.count);
  data.labels = std::move(labels);
  for (int i = 0; i < raw.count; ++i) {
    resize_bilinear(raw.pixels.data() +
                        static_cast<std::size_t>(i) * raw.rows * raw.cols,
                    raw.rows, raw.cols, data.images.col(i), 32, 32);
  }
  return data;
}

LabeledDataset load_cifar10(const std::string& dir) {
  const std::vector<std::string> files = {
      "data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin",
      "data_batch_4.bin", "data_batch_5.bin", "test_batch.bin"};
  constexpr int kRecord = 1 + 3 * 32 * 32;
  LabeledDataset data;
  data.dataset_id = "cifar10";
  data.shape = {3, 32, 32};
  std::vector<std::vector<unsigned char>> blobs;
  std::size_t total = 0;
  for (const auto& f : files) {
    blobs.push_back(read_maybe_gz(dir + "/" + f));
    if (blobs.back().size() % kRecord != 0) {
      throw DataError("corrupt cifar10 batch: " + dir + "/" + f);
    }
    total += blobs.back().size() / kRecord;
  }
  data.images.resize(data.shape.pixel_count(), static_cast<Eigen::Index>(total));
  data.labels.resize(total);
  Eigen::Index col = 0;
  for (const auto& blob : blobs) {
    for (std::size_t off = 0; off < blob.size(); off += kRecord, ++col) {
      data.labels[static_cast<std::size_t>(col)] = blob[off];
      for (int p = 0; p < 3 * 32 * 32; ++p) {
        data.images(p, col) =
            static_cast<float>(blob[off + 1 + static_cast<std::size_t>(p)]) /
                127.5f -
            1.0f;
      }
    }
  }
  return data;
}

}  // namespace

std::string resolve_data_root(const std::string& explicit_root) {
  if (!explicit_root.empty()) return explicit_root;
  if (const char* env = std::getenv("CLOG_DATA_ROOT"); env && *env) return env;
  return "./data";
}

LabeledDataset load_dataset(const std::string& dataset_id,
                            const std::string& root_path) {
  if (dataset_id == "shapes8") return make_shapes8();
  const std::string dir = resolve_data_root(root_path) + "/" + dataset_id;
  if (dataset_id == "mnist" || dataset_id == "fashion_mnist") {
    return load_idx_dataset(dataset_id, dir);
  }
  if (dataset_id == "cifar10") return load_cifar10(dir);
  throw ConfigError("unknown dataset_id: " + dataset_id);
}

std::vector<TaskData> partition_by_task(const LabeledDataset& dataset,
                                        const TaskSequence& sequence) {
  require(sequence.dataset_id == dataset.dataset_id,
          "task sequence built for dataset " + sequence.dataset_id +
              ", got " + dataset.dataset_id);
  std::map<int, int> label_to_task;
  for (const auto& task : sequence.tasks) {
    for (int label : task.class_labels) {
      check_invariant(label_to_task.emplace(label, task.task_index).second,
                      "duplicate class label across tasks");
    }
  }
  std::vector<std::vector<Eigen::Index>> members(sequence.tasks.size());
  for (Eigen::Index j = 0; j < dataset.sample_count(); ++j) {
    const int label = dataset.labels[static_cast<std::size_t>(j)];
    auto it = label_to_task.find(label);
    if (it == label_to_task.end()) {
      throw DataError("sample label " + std::to_string(label) +
                      " belongs to no task");
    }
    members[static_cast<std::size_t>(it->second)].push_back(j);
  }
  std::vector<TaskData> out;
  out.reserve(sequence.tasks.size());
  for (const auto& task : sequence.tasks) {
    const auto& idx = members[static_cast<std::size_t>(task.task_index)];
    Eigen::MatrixXf images(dataset.shape.pixel_count(),
                           static_cast<Eigen::Index>(idx.size()));
    std::vector<int> conditions(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      images.col(static_cast<Eigen::Index>(k)) = dataset.images.col(idx[k]);
      conditions[k] = dataset.labels[static_cast<std::size_t>(idx[k])];
    }
    out.emplace_back(task, dataset.shape, std::move(images),
                     std::move(conditions));
  }
  return out;
}

TaskData pool_task_data(const std::vector<TaskData>& tasks) {
  require(!tasks.empty(), "cannot pool zero tasks");
  Eigen::Index total = 0;
  for (const auto& t : tasks) total += t.sample_count();
  TaskSpec pooled_spec;
  pooled_spec.task_index = 0;
  pooled_spec.description = "pooled";
  Eigen::MatrixXf images(tasks.front().shape().pixel_count(), total);
  std::vector<int> conditions;
  conditions.reserve(static_cast<std::size_t>(total));
  Eigen::Index col = 0;
  for (const auto& t : tasks) {
    check_invariant(t.shape() == tasks.front().shape(),
                    "pooled tasks must share image shape");
    for (int label : t.task().class_labels) {
      pooled_spec.class_labels.push_back(label);
    }
    images.middleCols(col, t.sample_count()) = t.images();
    conditions.insert(conditions.end(), t.conditions().begin(),
                      t.conditions().end());
    col += t.sample_count();
  }
  return TaskData(std::move(pooled_spec), tasks.front().shape(),
                  std::move(images), std::move(conditions));
}

}  // namespace clog
