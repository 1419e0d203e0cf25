// Bounded FIFO store of expert trajectories with uniform (with-replacement)
// sampling.
#pragma once

#include <deque>

#include "synpo/rng.hpp"
#include "synpo/world.hpp"

namespace synpo {

class ReplayBuffer {
 public:
  explicit ReplayBuffer(int capacity = 20000);

  void push(Trajectory traj);
  int size() const { return static_cast<int>(buffer_.size()); }
  int capacity() const { return capacity_; }

  const Trajectory& at(int i) const { return buffer_.at(i); }

  // n draws uniformly with replacement; n >= size returns every trajectory
  // once instead. Errors on an empty buffer.
  std::vector<const Trajectory*> sample(int n, Rng& rng) const;

 private:
  std::deque<Trajectory> buffer_;
  int capacity_;
};

}  // namespace synpo
