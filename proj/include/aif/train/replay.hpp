#pragma once

// Experience replay of one-event transitions (o_t, a_t, o_{t+1}), grouped in
// contiguous segments that multi-step windows never cross.

#include "aif/model/generative_model.hpp"
#include "aif/rng.hpp"

#include <deque>
#include <stdexcept>
#include <vector>

namespace aif::train {

using nn::Index;
using nn::Matrix;
using nn::Vector;

struct Record {
  Vector obs;
  int action = 0;
  Vector obs_next;
  int segment = 0;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 200) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("replay capacity must be >= 1");
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const Record& at(std::size_t i) const { return records_.at(i); }
  const Record& latest() const { return records_.back(); }

  // Records pushed after this call belong to a new segment.
  void begin_segment() { ++segment_; }
  int segment() const { return segment_; }

  void push(Vector obs, int action, Vector obs_next) {
    if (records_.size() == capacity_) records_.pop_front();
    records_.push_back({std::move(obs), action, std::move(obs_next), segment_});
  }

  bool window_valid(std::size_t start, int depth) const {
    const std::size_t end = start + static_cast<std::size_t>(depth) - 1;
    return depth >= 1 && end < records_.size() && records_[start].segment == records_[end].segment;
  }

  // Starts of every window of `depth` consecutive records inside one segment.
  std::vector<std::size_t> window_starts(int depth) const {
    std::vector<std::size_t> out;
    if (depth < 1 || records_.size() < static_cast<std::size_t>(depth)) return out;
    for (std::size_t i = 0; i + static_cast<std::size_t>(depth) <= records_.size(); ++i)
      if (window_valid(i, depth)) out.push_back(i);
    return out;
  }

  bool latest_window_valid(int depth) const {
    return records_.size() >= static_cast<std::size_t>(depth) && window_valid(records_.size() - static_cast<std::size_t>(depth), depth);
  }

  // Batch of windows; the last row is the window ending at the latest record.
  // Empty when that window does not exist yet.
  model::WindowBatch sample_windows(int depth, int batch_size, int n_machines, Rng& rng) const {
    model::WindowBatch b;
    if (batch_size < 1 || !latest_window_valid(depth)) return b;
    const auto starts = window_starts(depth);
    std::vector<std::size_t> chosen;
    for (int i = 0; i + 1 < batch_size; ++i) chosen.push_back(starts[rng() % starts.size()]);
    chosen.push_back(records_.size() - static_cast<std::size_t>(depth));
    const Index width = records_.front().obs.size();
    b.obs_now.resize(batch_size, width);
    b.obs_next.resize(batch_size, width);
    b.actions.resize(batch_size, depth);
    for (Index r = 0; r < batch_size; ++r) {
      const std::size_t s = chosen[static_cast<std::size_t>(r)];
      b.obs_now.row(r) = records_[s].obs.transpose();
      b.obs_next.row(r) = records_[s + static_cast<std::size_t>(depth) - 1].obs_next.transpose();
      for (int k = 0; k < depth; ++k)
        b.actions(r, k) = records_[s + static_cast<std::size_t>(k)].action / static_cast<double>(n_machines);
    }
    return b;
  }

  // Batch of single transitions read directly from the records, latest last.
  model::WindowBatch sample_transitions(int batch_size, int n_machines, Rng& rng) const {
    model::WindowBatch b;
    if (batch_size < 1 || records_.empty()) return b;
    const Index width = records_.front().obs.size();
    b.obs_now.resize(batch_size, width);
    b.obs_next.resize(batch_size, width);
    b.actions.resize(batch_size, 1);
    for (Index r = 0; r < batch_size; ++r) {
      const std::size_t i = r + 1 < batch_size ? rng() % records_.size() : records_.size() - 1;
      b.obs_now.row(r) = records_[i].obs.transpose();
      b.obs_next.row(r) = records_[i].obs_next.transpose();
      b.actions(r, 0) = records_[i].action / static_cast<double>(n_machines);
    }
    return b;
  }

  // Q-learning batch; the reward is the combined term of o_{t+1}.
  model::QBatch sample_q(int batch_size, Index reward_index, Rng& rng) const {
    model::QBatch b;
    if (batch_size < 1 || records_.empty()) return b;
    const Index width = records_.front().obs.size();
    b.obs.resize(batch_size, width);
    b.obs_next.resize(batch_size, width);
    b.rewards.resize(batch_size);
    for (Index r = 0; r < batch_size; ++r) {
      const std::size_t i = r + 1 < batch_size ? rng() % records_.size() : records_.size() - 1;
      b.obs.row(r) = records_[i].obs.transpose();
      b.obs_next.row(r) = records_[i].obs_next.transpose();
      b.actions.push_back(records_[i].action);
      b.rewards(r) = records_[i].obs_next(reward_index);
    }
    return b;
  }

 private:
  std::size_t capacity_;
  std::deque<Record> records_;
  int segment_ = 0;
};

}  // namespace aif::train
