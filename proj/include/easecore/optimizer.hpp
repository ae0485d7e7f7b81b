#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "easecore/common.hpp"
#include "easecore/io.hpp"
#include "easecore/nn.hpp"

namespace easecore {

struct TrainConfig {
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double initial_lr = 0.1;
  // Epochs (1-based) at which the learning rate is divided by 10.
  std::vector<int> lr_milestones{11, 16};
  int batch_size = 128;
  int max_epochs = 20;
  // Update counts at which parameter snapshots are taken; may include 0.
  std::vector<std::int64_t> checkpoint_updates;

  void validate(std::int64_t total_updates) const {
    if (momentum < 0.0 || momentum >= 1.0)
      throw ValidationError("train.momentum: must lie in [0, 1)");
    if (weight_decay < 0.0) throw ValidationError("train.weight_decay: must be >= 0");
    if (initial_lr <= 0.0) throw ValidationError("train.initial_lr: must be > 0");
    if (batch_size < 1) throw ValidationError("train.batch_size: must be >= 1");
    if (max_epochs < 1) throw ValidationError("train.max_epochs: must be >= 1");
    for (std::size_t i = 0; i < lr_milestones.size(); ++i) {
      if (lr_milestones[i] < 1) throw ValidationError("train.lr_milestones: epochs are 1-based");
      if (i > 0 && lr_milestones[i] <= lr_milestones[i - 1])
        throw ValidationError("train.lr_milestones: must be strictly ascending");
    }
    for (std::size_t i = 0; i < checkpoint_updates.size(); ++i) {
      if (checkpoint_updates[i] < 0)
        throw ValidationError("train.checkpoint_updates: must be >= 0");
      if (i > 0 && checkpoint_updates[i] <= checkpoint_updates[i - 1])
        throw ValidationError("train.checkpoint_updates: must be strictly ascending");
      if (checkpoint_updates[i] > total_updates) {
        std::ostringstream os;
        os << "train.checkpoint_updates: T=" << checkpoint_updates[i] << " exceeds the "
           << total_updates << " updates implied by max_epochs";
        throw ValidationError(os.str());
      }
    }
  }

  // lr for a 1-based epoch: initial / 10^k after the k-th milestone.
  double lr_for_epoch(int epoch) const {
    int k = 0;
    for (int m : lr_milestones)
      if (m <= epoch) ++k;
    return initial_lr / std::pow(10.0, k);
  }

  std::string canonical() const {
    std::ostringstream os;
    os << "momentum=" << format_double(momentum) << ";wd=" << format_double(weight_decay)
       << ";lr=" << format_double(initial_lr) << ";milestones=";
    for (std::size_t i = 0; i < lr_milestones.size(); ++i)
      os << (i ? "," : "") << lr_milestones[i];
    os << ";batch=" << batch_size << ";epochs=" << max_epochs << ";checkpoints=";
    for (std::size_t i = 0; i < checkpoint_updates.size(); ++i)
      os << (i ? "," : "") << checkpoint_updates[i];
    return os.str();
  }
};

// v <- momentum * v + grad + weight_decay * w;  w <- w - lr * v.
// Weight decay is skipped for params flagged decay=false (norm scale/offset).
template <typename S>
class MomentumSgd {
 public:
  MomentumSgd(double momentum, double weight_decay)
      : momentum_(static_cast<S>(momentum)), weight_decay_(static_cast<S>(weight_decay)) {}

  void step(const std::vector<Param<S>*>& params, double lr) {
    if (velocity_.size() != params.size()) {
      velocity_.resize(params.size());
      for (std::size_t i = 0; i < params.size(); ++i)
        velocity_[i].assign(params[i]->size(), S(0));
    }
    const S lr_s = static_cast<S>(lr);
    for (std::size_t i = 0; i < params.size(); ++i) {
      Param<S>& p = *params[i];
      using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
      Eigen::Map<Vec> v(velocity_[i].data(), static_cast<Eigen::Index>(p.size()));
      Eigen::Map<Vec> w(p.v.data(), static_cast<Eigen::Index>(p.size()));
      Eigen::Map<const Vec> g(p.g.data(), static_cast<Eigen::Index>(p.size()));
      if (p.decay && weight_decay_ != S(0))
        v = momentum_ * v + g + weight_decay_ * w;
      else
        v = momentum_ * v + g;
      w -= lr_s * v;
    }
  }

 private:
  S momentum_, weight_decay_;
  std::vector<std::vector<S>> velocity_;
};

}  // namespace easecore
