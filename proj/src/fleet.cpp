#include "fp/fleet.hpp"

#include <algorithm>
#include <numeric>

#include "fp/util.hpp"

namespace fp {

std::vector<DeviceProfile> default_profiles(int64_t r_min) {
  check(r_min > 0, "device floor must be positive");
  const double mem_scale[4] = {1.0, 1.5, 2.5, 5.0};
  const double perf[4] = {1, 2, 4, 8};
  const char* names[4] = {"tier-a", "tier-b", "tier-c", "tier-d"};
  std::vector<DeviceProfile> out(4);
  for (int i = 0; i < 4; ++i)
    out[i] = {names[i], (int64_t)(r_min * mem_scale[i]), perf[i]};
  return out;
}

std::vector<ClientRecord> sample_fleet(const std::vector<DeviceProfile>& profiles, int n,
                                       FleetRegime regime, uint64_t seed) {
  check(!profiles.empty(), "fleet needs at least one device profile");
  check(n > 0, cat("fleet size must be positive, got ", n));

  size_t p = profiles.size();
  std::vector<size_t> order(p);  // ascending base memory: weakest first
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return profiles[a].base_memory < profiles[b].base_memory;
  });
  std::vector<double> weight(p, 1.0);
  if (regime == FleetRegime::Unbalanced)
    for (size_t r = 0; r < p; ++r) weight[order[r]] = std::pow(2.0, (double)(p - 1 - r));
  double total = std::accumulate(weight.begin(), weight.end(), 0.0);

  Rng rng(derive_seed(seed, Stream::FleetSample));
  std::vector<ClientRecord> fleet(n);
  for (int k = 0; k < n; ++k) {
    double u = rng.uniform() * total;
    size_t pick = p - 1;
    double acc = 0;
    for (size_t i = 0; i < p; ++i) {
      acc += weight[i];
      if (u < acc) {
        pick = i;
        break;
      }
    }
    fleet[k].id = k;
    fleet[k].q = 1.0 / n;
    fleet[k].profile = profiles[pick];
    fleet[k].mem_avail = profiles[pick].base_memory;
    fleet[k].perf_avail = profiles[pick].base_performance;
  }
  return fleet;
}

void tick_resources(std::vector<ClientRecord>& records, int round, uint64_t seed, int64_t r_min,
                    bool degrade) {
  check(round >= 0, "round index must be nonnegative");
  for (ClientRecord& c : records) {
    check(c.profile.base_memory >= r_min,
          cat("client ", c.id, " device '", c.profile.name, "' holds ", c.profile.base_memory,
              " bytes, under the floor ", r_min));
    double u = 1.0, v = 1.0;
    if (degrade) {
      Rng rng(derive_seed(seed, Stream::FleetTick, (uint64_t)round, (uint64_t)c.id));
      u = rng.uniform(0.5, 1.0);
      v = rng.uniform(0.5, 1.0);
    }
    c.mem_avail = std::max(r_min, (int64_t)(c.profile.base_memory * u));
    c.perf_avail = c.profile.base_performance * v;
  }
}

double min_performance(const std::vector<ClientRecord>& records) {
  check(!records.empty(), "performance floor of an empty client set is undefined");
  double p = records.front().perf_avail;
  for (const ClientRecord& c : records) p = std::min(p, c.perf_avail);
  return p;
}

}  // namespace fp
