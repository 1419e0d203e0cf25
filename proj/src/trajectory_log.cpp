#include "synpo/trajectory_log.hpp"

#include <fstream>

#include <json.hpp>

#include "synpo/params.hpp"

namespace synpo {

void write_trajectory_log(const Trajectory& traj, const std::string& base) {
  std::ofstream jl(base + ".jsonl", std::ios::trunc);
  if (!jl) throw std::runtime_error("cannot write trajectory log: " + base + ".jsonl");
  for (int t = 0; t < traj.length(); ++t) {
    nlohmann::json rec;
    rec["env"] = traj.env_id;
    rec["task"] = traj.task_id;
    rec["t"] = t;
    rec["action"] = static_cast<int>(traj.actions[t]);
    rec["reward"] = traj.rewards[t];
    rec["done"] = traj.done_flag(t);
    jl << rec.dump() << "\n";
  }

  Tensor<float> states({traj.length(), kStackedSize});
  for (int t = 0; t < traj.length(); ++t)
    traj.fill_stacked(t, std::span<float>(states.data() + static_cast<int64_t>(t) * kStackedSize,
                                          kStackedSize));
  ParameterStore<float> blob;
  blob.add("stacked_states", std::move(states), /*trainable=*/false);
  save_checkpoint(blob, base, nlohmann::json{{"env", traj.env_id}, {"task", traj.task_id}});
}

std::vector<TrajectoryRecord> read_trajectory_records(const std::string& base) {
  std::ifstream jl(base + ".jsonl");
  if (!jl) throw std::runtime_error("cannot open trajectory log: " + base + ".jsonl");
  std::vector<TrajectoryRecord> out;
  std::string line;
  while (std::getline(jl, line)) {
    if (line.empty()) continue;
    nlohmann::json rec = nlohmann::json::parse(line);
    out.push_back({rec.at("env"), rec.at("task"), rec.at("t"), rec.at("action"),
                   rec.at("reward"), rec.at("done")});
  }
  return out;
}

}  // namespace synpo
