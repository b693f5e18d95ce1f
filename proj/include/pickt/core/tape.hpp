#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "pickt/core/tensor.hpp"

namespace pickt {

/// Ordered record of differentiable operations for reverse-mode autodiff.
///
/// Entries are appended in execution order, so inputs always precede the ops
/// that consume them. `backward` walks the entries once in reverse.
class Tape {
 public:
  struct Entry {
    const char* op = "";
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::vector<std::uint64_t> input_versions;
    std::shared_ptr<TensorImpl> output;
    std::function<void()> backward;
  };

  void record(const char* op, std::vector<std::shared_ptr<TensorImpl>> inputs,
              std::shared_ptr<TensorImpl> output, std::function<void()> backward);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<Entry>& entries() const { return entries_; }
  void clear() { entries_.clear(); }

  /// Seeds d(loss)/d(loss) = 1 and replays every entry in reverse. Throws
  /// ContractError when `loss` is not a scalar. Clears the tape afterwards.
  void backward(const Tensor& loss);

  /// Number of backward rules run by the last `backward` call.
  std::size_t last_replay_count() const { return last_replay_; }

 private:
  std::vector<Entry> entries_;
  std::size_t last_replay_ = 0;
};

/// The calling thread's tape. Each thread records onto its own tape.
Tape& current_tape();

bool grad_enabled();

/// Disables recording for the enclosing scope (inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Backpropagates `loss` through the current thread's tape.
void backward(const Tensor& loss);

}  // namespace pickt
