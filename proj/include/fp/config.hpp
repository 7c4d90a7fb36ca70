#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fp {

// Flat run description: one key per line in the config file, all fields
// resolvable up front. Strings stay strings here; call sites convert.
struct RunConfig {
  std::string preset = "mlp-4x64";

  std::string dataset = "blobs";  // blobs | pattern | idx
  int blob_dim = 32;
  double blob_sigma = 0.1;
  int classes = 10;
  int train_per_class = 100;
  int test_per_class = 50;
  std::string idx_train_images, idx_train_labels;
  std::string idx_test_images, idx_test_labels;

  int clients = 20;
  std::string regime = "unbalanced";  // balanced | unbalanced
  double val_fraction = 0.2;

  uint64_t seed = 1;
  double mu = 1e-3;
  double delta = 0.05;
  double alpha_init = 0.3;
  double epsilon0 = 0.1;
  int pgd_train_steps = 10;
  int pgd_eval_steps = 20;

  double lr = 0.05;
  double momentum = 0.9;
  int local_iterations = 1;
  int batch_size = 32;

  int rounds_total = 30;
  std::vector<int> rounds_per_module;  // overrides the flops-share split
  int patience = 5;
  double min_delta = 0.002;

  double r_min_fraction = 0.0;  // of whole-model training memory
  int64_t r_min_bytes = 0;      // absolute; exactly one of the two for fedprophet
  std::string mode = "fedprophet";  // fedprophet | joint-fat
  bool apa_off = false;
  bool dma_off = false;
  bool mu_zero = false;

  std::string run_dir = "run";

  void validate() const;
};

// `key = value` lines, '#' comments, unknown or repeated keys rejected.
RunConfig parse_config_text(const std::string& text);

// parse_config_text on the file, then FEDPROPHET_SEED (when set) replaces seed.
RunConfig load_config(const std::string& path);

// Canonical text form; parses back to an identical config.
std::string render_config(const RunConfig& c);

}  // namespace fp
