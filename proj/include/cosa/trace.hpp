#pragma once

#include <cstdint>

namespace cosa {

// Records the discrete choices a forward pass makes (activation sides, pooling
// argmaxes, nearest-neighbour picks). Two evaluations with equal hashes ran through
// the same piecewise-smooth branch, so finite differences between them are valid.
// Active only inside a scope; recording is a no-op otherwise.
class DecisionTrace {
 public:
  DecisionTrace() : prev_(active_) { active_ = this; }
  ~DecisionTrace() { active_ = prev_; }
  DecisionTrace(const DecisionTrace&) = delete;
  DecisionTrace& operator=(const DecisionTrace&) = delete;

  static DecisionTrace* current() { return active_; }

  void record(std::uint64_t v) {
    hash_ ^= v + 0x9e3779b97f4a7c15ULL + (hash_ << 6) + (hash_ >> 2);
  }
  std::uint64_t hash() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
  DecisionTrace* prev_;
  static inline thread_local DecisionTrace* active_ = nullptr;
};

}  // namespace cosa
