#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fp/tensor.hpp"

namespace fp {

struct Dataset {
  Shape sample_shape;  // per-sample dims, e.g. {16} or {1, 8, 8}
  int classes = 0;
  std::vector<double> x;  // row-major, n * sample elems
  std::vector<int> y;
  std::vector<int> origin;  // row index in the source set; empty for roots

  int n() const { return (int)y.size(); }
  int64_t sample_elems() const { return numel(sample_shape); }
  Tensor batch_x(const std::vector<int>& rows) const;
  std::vector<int> batch_y(const std::vector<int>& rows) const;
  Tensor full_x() const;
  void append_row(const Dataset& src, int row);
};

struct Shard {
  int client = 0;
  Dataset train;
  Dataset val;
  std::vector<int> histogram;  // class counts over the whole shard
  double q = 0;                // train-size weight across the fleet
};

// Gaussian class clusters: class c sits at +/-1 along coordinate c/2, other
// coordinates zero. Unbounded features; sigma controls the cluster radius.
Dataset make_blobs(int classes, int dim, int n_per_class, uint64_t seed, double sigma = 0.1);

// Procedural 1x8x8 images in [0,1]: stripes, checkerboard, radial classes.
Dataset make_pattern_images(int classes, int n_per_class, uint64_t seed);

Dataset load_idx(const std::string& images_path, const std::string& labels_path);
void save_idx(const Dataset& d, const std::string& images_path, const std::string& labels_path);

// Non-IID split: each client gets ceil(0.2*C) rotating major classes holding
// 80% of its examples; every source example lands in exactly one shard.
std::vector<Shard> partition_20_80(const Dataset& data, int n_clients, uint64_t seed);

// Moves a stratified held-out slice of shard.train into shard.val.
void split_validation(Shard& shard, double fraction, uint64_t seed);

void recompute_weights(std::vector<Shard>& shards);

}  // namespace fp
