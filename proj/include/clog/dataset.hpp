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

#ifndef CLOG_DATASET_HPP
#define CLOG_DATASET_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "clog/domain.hpp"

namespace clog {

/// Channels-height-width geometry of one image; flattened images are stored
/// column-major as (channels*height*width) vectors, channel-major.
struct ImageShape {
  int channels = 1;
  int height = 0;
  int width = 0;

  int pixel_count() const { return channels * height * width; }
  bool operator==(const ImageShape&) const = default;
};

/// A labeled image dataset with pixels normalized to [-1, 1]. Column j of
/// `images` is sample j. Pixels are kept in single precision to bound memory;
/// training batches are assembled in double precision.
struct LabeledDataset {
  std::string dataset_id;
  ImageShape shape;
  Eigen::MatrixXf images;  // pixel_count x sample_count
  std::vector<int> labels;

  Eigen::Index sample_count() const { return images.cols(); }
  /// Sorted distinct labels.
  std::vector<int> class_set() const;
};

/// One task's training split: (condition, image) pairs. After a task
/// completes, the runner seals its TaskData; any later raw-sample access is an
/// invariant violation (past data must flow through replay buffers or frozen
/// models only).
class TaskData {
 public:
  TaskData() = default;
  TaskData(TaskSpec task, ImageShape shape, Eigen::MatrixXf images,
           std::vector<int> conditions);

  const TaskSpec& task() const { return task_; }
  const ImageShape& shape() const { return shape_; }
  Eigen::Index sample_count() const { return conditions_.size(); }
  bool sealed() const { return sealed_; }

  /// Raw sample access; throws InvariantError once sealed.
  const Eigen::MatrixXf& images() const;
  const std::vector<int>& conditions() const;

  void seal() { sealed_ = true; }

 private:
  TaskSpec task_;
  ImageShape shape_;
  Eigen::MatrixXf images_;
  std::vector<int> conditions_;
  bool sealed_ = false;
};

/// Loads a dataset by id. `root_path` follows the layout <root>/<dataset_id>/;
/// synthetic sets need no files. Deterministic: repeated calls are
/// byte-identical.
///
/// Known ids: shapes8 (synthetic, 8x8, 4 classes, 2000 images),
/// mnist / fashion_mnist (IDX files, optionally gzipped, resized 28 -> 32),
/// cifar10 (binary batches, 3x32x32).
LabeledDataset load_dataset(const std::string& dataset_id,
                            const std::string& root_path);

/// Resolves the dataset root: explicit argument, else $CLOG_DATA_ROOT, else
/// "./data".
std::string resolve_data_root(const std::string& explicit_root);

/// Splits dataset samples by task class membership. Every sample lands in
/// exactly one task; a label outside all tasks is a data error.
std::vector<TaskData> partition_by_task(const LabeledDataset& dataset,
                                        const TaskSequence& sequence);

/// Merges several tasks' data into one pooled TaskData covering the union of
/// their classes. Used by the joint-training baseline.
TaskData pool_task_data(const std::vector<TaskData>& tasks);

}  // namespace clog

#endif  // CLOG_DATASET_HPP
