// On-disk trajectory logs: one JSON record per transition plus a sidecar
// blob of stacked states in the checkpoint blob format.
#pragma once

#include <string>

#include "synpo/world.hpp"

namespace synpo {

// Writes <base>.jsonl, <base>.bin and <base>.manifest. The blob holds one
// f32 tensor "stacked_states" of shape (length, 3072).
void write_trajectory_log(const Trajectory& traj, const std::string& base);

// Reads the JSON-lines part back. Observations are not reconstructed; the
// stacked states live in the blob.
struct TrajectoryRecord {
  int env = -1;
  int task = -1;
  int t = -1;
  int action = -1;
  float reward = 0.0f;
  bool done = false;
};
std::vector<TrajectoryRecord> read_trajectory_records(const std::string& base);

}  // namespace synpo
