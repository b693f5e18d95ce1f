#include "pickt/core/tape.hpp"

#include "pickt/core/error.hpp"

namespace pickt {

namespace {
thread_local Tape t_tape;
thread_local bool t_grad_enabled = true;
}  // namespace

Tape& current_tape() { return t_tape; }

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

void Tape::record(const char* op, std::vector<std::shared_ptr<TensorImpl>> inputs, std::shared_ptr<TensorImpl> output,
                  std::function<void()> backward) {
  Entry e;
  e.op = op;
  e.input_versions.reserve(inputs.size());
  for (const auto& in : inputs) e.input_versions.push_back(in->version);
  e.inputs = std::move(inputs);
  e.output = std::move(output);
  e.backward = std::move(backward);
  entries_.push_back(std::move(e));
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() requires a scalar loss, got " + (loss.defined() ? shape_str(loss.shape()) : "<undefined>"));
  }
  loss.impl()->ensure_grad()[0] += Real{1};
  last_replay_ = 0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    for (std::size_t i = 0; i < it->inputs.size(); ++i) {
      if (it->inputs[i]->version != it->input_versions[i]) {
        throw ContractError(std::string("tensor consumed by '") + it->op + "' was modified after recording");
      }
    }
    // Ops whose output never received a gradient contribute nothing.
    if (!it->output->grad.empty()) it->backward();
    ++last_replay_;
  }
  entries_.clear();
}

void backward(const Tensor& loss) { current_tape().backward(loss); }

}  // namespace pickt
