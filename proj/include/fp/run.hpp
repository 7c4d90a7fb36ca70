#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "fp/ckpt.hpp"
#include "fp/client.hpp"
#include "fp/config.hpp"
#include "fp/data.hpp"
#include "fp/fleet.hpp"
#include "fp/part.hpp"
#include "fp/server.hpp"

namespace fp {

struct RoundRecord {
  int round = 0;
  int stage = 0;
  double epsilon = 0, alpha = 0;
  double clean = 0, adv = 0;
  std::vector<std::pair<int, int>> assigned;  // (last module, client count), ascending
};

struct StageRecord {
  int stage = 0;
  int rounds_used = 0;
  double ref_clean = 0, ref_adv = 0;  // accuracies frozen with the module
  double mean_dstar = 0, epsilon_next = 0;
};

// Everything a run derives deterministically from its config: data, shards,
// fleet, the module partition and the per-module round budgets.
struct RunSetup {
  Dataset train, test;
  std::vector<Shard> shards;
  std::vector<ClientRecord> fleet;
  PartitionPlan part;
  CostModel cm;
  int64_t r_min = 0;
  std::vector<int> budget;
};

RunSetup prepare_run(const RunConfig& cfg);
Backbone fresh_backbone(const RunConfig& cfg, const RunSetup& setup);

// Budget exhausted, or no min_delta improvement over the trailing `patience`
// rounds against the best before them.
bool module_converged(const std::vector<double>& adv_history, int budget, int patience,
                      double min_delta);

// Early-exit validation of module `depth` on every client, pooled by data
// weight. Per-client results land in `per_client` when given.
std::pair<double, double> validate_round(const Backbone& bb, int depth,
                                         const std::vector<Shard>& shards, const RunConfig& cfg,
                                         int round, std::vector<EvalResult>* per_client = nullptr);

// Data-weighted mean displacement of module `stage` under the input budget it
// trained with.
double measure_mean_dstar(const Backbone& bb, int stage, const std::vector<Shard>& shards,
                          const RunConfig& cfg, double epsilon_in);

struct RunResult {
  Backbone bb;
  std::vector<RoundRecord> rounds;
  std::vector<StageRecord> stages;
};

// Full cascade run. Per module: rounds of adjust -> assign -> train ->
// aggregate -> validate until convergence, then freeze, measure displacement
// and re-seed the perturbation schedule. Writes config.txt, partition.csv,
// clients.csv, rounds.csv, resources.csv, modules.csv, events.log and a
// checkpoint into cfg.run_dir; resumes from the checkpoint when one exists.
RunResult run(const RunConfig& cfg, const std::function<void(const RoundRecord&)>& on_round = {});

std::vector<RoundRecord> read_rounds_csv(const std::string& path);
std::vector<StageRecord> read_modules_csv(const std::string& path);

// Human-readable digest of a run directory; missing files are reported
// individually, an empty directory yields an explicit no-rounds notice.
std::string render_report(const std::string& run_dir);

}  // namespace fp
