#pragma once

#include <string>

#include "fp/net.hpp"
#include "fp/server.hpp"

namespace fp {

// Persistent run state: backbone parameters plus the scalars needed to
// continue at the next round. Lives in the run directory as manifest.txt
// and one raw little-endian f64 blob per tensor.
struct Checkpoint {
  Backbone bb;
  int round = 0;        // next round to execute
  int stage = 1;        // current module
  int stage_start = 0;  // round its stage opened at
  bool finished = false;
  PerturbationSchedule schedule;
};

void save_checkpoint(const std::string& dir, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& dir);
bool checkpoint_exists(const std::string& dir);

}  // namespace fp
