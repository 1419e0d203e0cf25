#include "synpo/split.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace synpo {

std::vector<Pair> PairSplit::unseen_list() const {
  std::vector<Pair> out;
  for (int e = 0; e < n_envs; ++e)
    for (int t = 0; t < n_tasks; ++t)
      if (!is_seen(e, t)) out.push_back({e, t});
  return out;
}

std::string PairSplit::to_json() const {
  nlohmann::json j;
  j["n_envs"] = n_envs;
  j["n_tasks"] = n_tasks;
  j["seed"] = seed;
  auto arr = nlohmann::json::array();
  for (const auto& [e, t] : seen) arr.push_back({e, t});
  j["seen"] = std::move(arr);
  return j.dump(2);
}

PairSplit PairSplit::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  PairSplit s;
  s.n_envs = j.at("n_envs");
  s.n_tasks = j.at("n_tasks");
  s.seed = j.value("seed", 0ULL);
  for (const auto& p : j.at("seen")) s.seen.insert({p.at(0), p.at(1)});
  for (const auto& [e, t] : s.seen)
    if (e < 0 || e >= s.n_envs || t < 0 || t >= s.n_tasks)
      throw std::runtime_error("PairSplit: seen pair outside the grid");
  return s;
}

PairSplit PairSplit::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open split file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return from_json(os.str());
}

void PairSplit::save_file(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write split file: " + path);
  out << to_json() << "\n";
}

PairSplit make_split(int n_envs, int n_tasks, int n_seen, Rng& rng) {
  if (n_envs <= 0 || n_tasks <= 0) throw std::invalid_argument("make_split: empty grid");
  if (n_seen < std::max(n_envs, n_tasks))
    throw std::invalid_argument(
        "make_split: n_seen too small to cover every environment and task");
  if (n_seen > n_envs * n_tasks)
    throw std::invalid_argument("make_split: n_seen exceeds the grid size");

  // Rejection-sample uniform seen sets until row/column coverage holds. The
  // acceptance probability is high for the sizes used here, and the guard
  // keeps pathological configurations from spinning.
  for (int attempt = 0; attempt < 100000; ++attempt) {
    auto idx = rng.sample_distinct(n_envs * n_tasks, n_seen);
    std::vector<int> env_cover(n_envs, 0), task_cover(n_tasks, 0);
    PairSplit s;
    s.n_envs = n_envs;
    s.n_tasks = n_tasks;
    for (int i : idx) {
      const int e = i / n_tasks, t = i % n_tasks;
      env_cover[e] = 1;
      task_cover[t] = 1;
      s.seen.insert({e, t});
    }
    bool covered = true;
    for (int v : env_cover) covered = covered && v;
    for (int v : task_cover) covered = covered && v;
    if (covered) return s;
  }
  throw std::runtime_error("make_split: could not satisfy coverage; n_seen too tight");
}

PairSplit full_split(int n_envs, int n_tasks) {
  PairSplit s;
  s.n_envs = n_envs;
  s.n_tasks = n_tasks;
  for (int e = 0; e < n_envs; ++e)
    for (int t = 0; t < n_tasks; ++t) s.seen.insert({e, t});
  return s;
}

std::vector<Pair> transfer_target_pairs(TransferSetting setting, int p_envs, int p_tasks,
                                        int q_envs, int q_tasks) {
  std::vector<Pair> out;
  const int ne = p_envs + q_envs, nt = p_tasks + q_tasks;
  switch (setting) {
    case TransferSetting::CrossQuadrant:
      for (int e = p_envs; e < ne; ++e)
        for (int t = 0; t < p_tasks; ++t) out.push_back({e, t});
      for (int e = 0; e < p_envs; ++e)
        for (int t = p_tasks; t < nt; ++t) out.push_back({e, t});
      return out;
    case TransferSetting::NewBlock:
      for (int e = p_envs; e < ne; ++e)
        for (int t = p_tasks; t < nt; ++t) out.push_back({e, t});
      return out;
    case TransferSetting::SparsePairs:
      throw std::invalid_argument(
          "transfer_target_pairs: setting 1 needs no fine-tuning demonstrations");
  }
  throw std::invalid_argument("transfer_target_pairs: unknown setting");
}

}  // namespace synpo
