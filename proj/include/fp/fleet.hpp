#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fp/rng.hpp"

namespace fp {

struct DeviceProfile {
  std::string name;
  int64_t base_memory = 0;      // bytes
  double base_performance = 0;  // abstract flops/sec units
};

enum class FleetRegime { Balanced, Unbalanced };

struct ClientRecord {
  int id = 0;
  double q = 0;  // data weight; the fleet's weights sum to 1
  DeviceProfile profile;
  int64_t mem_avail = 0;
  double perf_avail = 0;
};

// Four synthetic tiers anchored to the device floor: the weakest tier owns
// exactly r_min so the tightest devices stay trainable by construction.
std::vector<DeviceProfile> default_profiles(int64_t r_min);

// Balanced: uniform over profiles. Unbalanced: weight 2^rank, weakest rank
// highest, so small devices dominate the draw.
std::vector<ClientRecord> sample_fleet(const std::vector<DeviceProfile>& profiles, int n,
                                       FleetRegime regime, uint64_t seed);

// Per-round availability: memory and performance each scaled by an
// independent Uniform[0.5, 1.0] factor per client, memory clamped to r_min.
// degrade=false models an idle fleet (factors pinned to 1).
void tick_resources(std::vector<ClientRecord>& records, int round, uint64_t seed, int64_t r_min,
                    bool degrade = true);

double min_performance(const std::vector<ClientRecord>& records);

}  // namespace fp
