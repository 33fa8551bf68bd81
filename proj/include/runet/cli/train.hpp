#pragma once

#include <cstdio>
#include <functional>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "runet/cli/config.hpp"
#include "runet/data/preprocess.hpp"
#include "runet/data/split.hpp"
#include "runet/data/synthetic.hpp"
#include "runet/io/checkpoint.hpp"
#include "runet/model/network.hpp"
#include "runet/optim/adam.hpp"
#include "runet/optim/dice.hpp"
#include "runet/optim/schedule.hpp"

namespace runet {

/// Network inputs (1,H,W) with the mean image already subtracted, and masks.
struct SliceSet {
  std::vector<Tensor> images;
  std::vector<Tensor> masks;
  std::size_t size() const { return images.size(); }
};

struct EpochStats {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_dice = 0.0;
  double val_dice = 0.0;
};

inline constexpr const char* kTrainLogHeader = "epoch,lr,train_loss,train_dice,val_dice";

inline std::string format_log_line(const EpochStats& s) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g", s.epoch, s.lr, s.train_loss, s.train_dice, s.val_dice);
  return buf;
}

inline Tensor make_batch(const std::vector<Tensor>& items, const std::vector<std::size_t>& order, std::size_t begin,
                         std::size_t end) {
  std::vector<const Tensor*> ptrs;
  for (std::size_t i = begin; i < end; ++i) ptrs.push_back(&items[order[i]]);
  return stack(ptrs);
}

/// Mean soft dice of infer-mode predictions.
inline double evaluate_dice(Network<float>& net, const SliceSet& set, std::size_t batch_size, double smooth) {
  if (set.size() == 0) return 0.0;
  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), 0);
  double total = 0.0;
  for (std::size_t b = 0; b < set.size(); b += batch_size) {
    const std::size_t e = std::min(set.size(), b + batch_size);
    const Tensor prob = net.forward(make_batch(set.images, order, b, e), Mode::infer);
    for (double d : soft_dice_per_sample(prob, make_batch(set.masks, order, b, e), smooth)) total += d;
  }
  return total / static_cast<double>(set.size());
}

/// Infer-mode probabilities (1,H,W) for each image, in order.
inline std::vector<Tensor> predict_all(Network<float>& net, const std::vector<Tensor>& images, std::size_t batch_size) {
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Tensor> out;
  for (std::size_t b = 0; b < images.size(); b += batch_size) {
    const std::size_t e = std::min(images.size(), b + batch_size);
    const Tensor prob = net.forward(make_batch(images, order, b, e), Mode::infer);
    for (std::size_t i = 0; i < e - b; ++i) out.push_back(sample(prob, i).reshaped({1, prob.dim(2), prob.dim(3)}));
  }
  return out;
}

/// Adam on dice loss. Epoch e shuffles with stream (seed, e, 1) and draws
/// dropout masks from stream (seed, e, 2), so a run resumed from a
/// checkpoint continues bit-identically.
class Trainer {
public:
  Trainer(const RunConfig& cfg, Network<float> net, AdamState<float> adam = {})
      : cfg_(cfg), schedule_(cfg.schedule()), net_(std::move(net)), adam_(std::move(adam)) {}

  EpochStats run_epoch(std::size_t epoch, const SliceSet& train, const SliceSet* val,
                       bool evaluate = true) {
    if (train.size() == 0) throw std::invalid_argument("train: empty training set");
    EpochStats st;
    st.epoch = epoch;
    st.lr = lr_at(schedule_, epoch);
    const AdamHyper hyper = cfg_.adam_hyper(st.lr);
    const std::size_t bs = cfg_.effective_batch_size();

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle(Rng::derive(cfg_.seed, {epoch, 1}));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    Rng drop(Rng::derive(cfg_.seed, {epoch, 2}));

    double loss_sum = 0.0, dice_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += bs) {
      const std::size_t e = std::min(order.size(), b + bs);
      const Tensor x = make_batch(train.images, order, b, e);
      const Tensor y = make_batch(train.masks, order, b, e);
      const Tensor prob = net_.forward(x, Mode::train, &drop);
      const auto loss = dice_loss(prob, y, cfg_.dice_smooth);
      const auto grads = net_.backward(loss.grad);
      adam_step(net_.params(), grads, adam_, hyper);
      const double n = static_cast<double>(e - b);
      loss_sum += loss.loss * n;
      dice_sum += loss.dice * n;
    }
    st.train_loss = loss_sum / static_cast<double>(train.size());
    st.train_dice = dice_sum / static_cast<double>(train.size());
    if (evaluate) st.val_dice = evaluate_dice(net_, val ? *val : train, bs, cfg_.dice_smooth);
    return st;
  }

  Network<float>& network() { return net_; }
  const AdamState<float>& adam() const { return adam_; }

  Checkpoint checkpoint(std::size_t epochs_done, const Tensor& mean) {
    Checkpoint c = capture(net_);
    if (adam_.t > 0) c.adam = adam_;
    c.mean_image = mean;
    c.epoch = epochs_done;
    c.seed = cfg_.seed;
    return c;
  }

private:
  RunConfig cfg_;
  LrSchedule schedule_;
  Network<float> net_;
  AdamState<float> adam_;
};

/// Splits slices into train / validation by series: fold < 0 keeps all for
/// training; otherwise series in split_subsets(...)[fold] are held out.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    const std::vector<SlicePair>& pairs, const RunConfig& cfg) {
  std::vector<std::size_t> train, val;
  if (cfg.fold < 0) {
    for (std::size_t i = 0; i < pairs.size(); ++i) train.push_back(i);
    return {train, val};
  }
  std::set<std::string> ids;
  for (const auto& p : pairs) ids.insert(p.series_id);
  const auto folds = split_subsets({ids.begin(), ids.end()}, cfg.n_folds, cfg.seed);
  const std::set<std::string> held(folds[static_cast<std::size_t>(cfg.fold)].begin(),
                                   folds[static_cast<std::size_t>(cfg.fold)].end());
  for (std::size_t i = 0; i < pairs.size(); ++i) (held.count(pairs[i].series_id) ? val : train).push_back(i);
  return {train, val};
}

inline SliceSet gather(const std::vector<SlicePair>& pairs, const std::vector<std::size_t>& idx, const Tensor& mean) {
  SliceSet s;
  for (std::size_t i : idx) {
    s.images.push_back(subtract_mean(pairs[i].image, mean));
    s.masks.push_back(pairs[i].mask);
  }
  return s;
}

}  // namespace runet
