#include "synpo/replay.hpp"

#include <stdexcept>

namespace synpo {

ReplayBuffer::ReplayBuffer(int capacity) : capacity_(capacity) {
  if (capacity <= 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
}

void ReplayBuffer::push(Trajectory traj) {
  buffer_.push_back(std::move(traj));
  while (static_cast<int>(buffer_.size()) > capacity_) buffer_.pop_front();
}

std::vector<const Trajectory*> ReplayBuffer::sample(int n, Rng& rng) const {
  if (buffer_.empty()) throw std::runtime_error("ReplayBuffer::sample: buffer is empty");
  if (n <= 0) throw std::invalid_argument("ReplayBuffer::sample: n must be positive");
  std::vector<const Trajectory*> out;
  if (n >= static_cast<int>(buffer_.size())) {
    out.reserve(buffer_.size());
    for (const auto& t : buffer_) out.push_back(&t);
    return out;
  }
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(&buffer_[rng.below(size())]);
  return out;
}

}  // namespace synpo
