#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "runet/layers.hpp"
#include "runet/model/arch.hpp"
#include "runet/model/blocks.hpp"

namespace runet {

template <typename T>
struct NamedTensor {
  std::string name;
  BasicTensor<T> tensor;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

/// Ordered name -> tensor table. Order is the network's registry order.
template <typename T>
using Registry = std::vector<NamedTensor<T>>;

template <typename T>
const BasicTensor<T>& lookup(const Registry<T>& reg, std::string_view name) {
  auto it = std::find_if(reg.begin(), reg.end(), [&](const NamedTensor<T>& e) { return e.name == name; });
  if (it == reg.end()) throw std::out_of_range("registry has no tensor named '" + std::string(name) + "'");
  return it->tensor;
}

template <typename T>
struct DecoderStage {
  ConvParams<T> up;
  Block<T> body;
};

/// All tensors of one network, or gradients shaped like them.
///
/// decoder[j] merges with encoder stage j; the forward pass runs the decoder
/// from j = depth-2 down to 0. The registry lists enc0..enc{depth-1}, then
/// dec{depth-2}..dec0, then head_bn (residual decoders only), then head.
template <typename T>
struct NetworkParams {
  std::vector<Block<T>> encoder;
  std::vector<DecoderStage<T>> decoder;
  std::optional<BnParams<T>> head_bn;
  ConvParams<T> head;

  template <typename F>
  void visit_params(F&& f) {
    for (std::size_t i = 0; i < encoder.size(); ++i) runet::visit_params(encoder[i], "enc" + std::to_string(i), f);
    for (std::size_t j = decoder.size(); j-- > 0;) {
      const std::string p = "dec" + std::to_string(j);
      runet::visit_params(decoder[j].up, join_name(p, "upconv"), f);
      runet::visit_params(decoder[j].body, p, f);
    }
    if (head_bn) runet::visit_params(*head_bn, "head_bn", f);
    runet::visit_params(head, "head", f);
  }

  template <typename F>
  void visit_buffers(F&& f) {
    for (std::size_t i = 0; i < encoder.size(); ++i) runet::visit_buffers(encoder[i], "enc" + std::to_string(i), f);
    for (std::size_t j = decoder.size(); j-- > 0;) runet::visit_buffers(decoder[j].body, "dec" + std::to_string(j), f);
    if (head_bn) runet::visit_buffers(*head_bn, "head_bn", f);
  }
};

template <typename T>
class Network {
public:
  /// Builds one of the three architectures with seeded initialization.
  ///
  /// Encoder stage i holds one body of width base*2^i: a residual unit
  /// (projection shortcut from the previous width) or a plain conv pair.
  /// Decoder stage j up-convolves to width base*2^j, concatenates
  /// [upconv, encoder skip] and runs a body of that width. Plain decoder
  /// bodies use conv -> BN -> ReLU. A residual decoder ends in a
  /// pre-activation sum, so BN -> ReLU is applied before the head. A 1x1 conv
  /// and a sigmoid give the one-channel probability map. Dropout follows each
  /// encoder body.
  Network(const ArchSpec& spec, Rng& rng) : spec_(spec) {
    spec_.validate();
    auto& P = params_;
    std::size_t cin = spec_.in_channels;
    for (std::size_t i = 0; i < spec_.depth; ++i) {
      const std::size_t w = spec_.width(i);
      if (spec_.encoder_residual()) {
        P.encoder.emplace_back(make_residual_unit<T>(cin, w, rng, spec_.bn_momentum, spec_.bn_eps));
      } else {
        P.encoder.emplace_back(make_conv_block<T>(cin, w, false, rng, spec_.bn_momentum, spec_.bn_eps));
      }
      cin = w;
    }
    P.decoder.resize(spec_.depth - 1);
    for (std::size_t j = spec_.depth - 1; j-- > 0;) {
      const std::size_t w = spec_.width(j);
      auto& stage = P.decoder[j];
      stage.up = make_upconv<T>(cin, w, spec_.upconv_kernel, rng);
      if (spec_.decoder_residual()) {
        stage.body = make_residual_unit<T>(2 * w, w, rng, spec_.bn_momentum, spec_.bn_eps);
      } else {
        stage.body = make_conv_block<T>(2 * w, w, true, rng, spec_.bn_momentum, spec_.bn_eps);
      }
      cin = w;
    }
    if (spec_.decoder_residual()) P.head_bn = make_bn<T>(cin, spec_.bn_momentum, spec_.bn_eps);
    P.head = make_conv<T>(cin, 1, 1, rng);
  }

  // Copies and moves carry parameters only; forward contexts point into the
  // source object and are dropped.
  Network(const Network& o) : spec_(o.spec_), params_(o.params_) {}
  Network(Network&& o) noexcept : spec_(o.spec_), params_(std::move(o.params_)) { o.state_.reset(); }
  Network& operator=(const Network& o) {
    if (this != &o) {
      spec_ = o.spec_;
      params_ = o.params_;
      state_.reset();
    }
    return *this;
  }
  Network& operator=(Network&& o) noexcept {
    spec_ = o.spec_;
    params_ = std::move(o.params_);
    state_.reset();
    o.state_.reset();
    return *this;
  }

  const ArchSpec& spec() const { return spec_; }
  NetworkParams<T>& parts() { return params_; }
  const NetworkParams<T>& parts() const { return params_; }

  /// (name, tensor*) for every learnable tensor, registry order.
  std::vector<std::pair<std::string, BasicTensor<T>*>> params() {
    std::vector<std::pair<std::string, BasicTensor<T>*>> out;
    params_.visit_params([&](const std::string& n, BasicTensor<T>& t) { out.emplace_back(n, &t); });
    return out;
  }

  std::vector<std::pair<std::string, BasicTensor<T>*>> buffers() {
    std::vector<std::pair<std::string, BasicTensor<T>*>> out;
    params_.visit_buffers([&](const std::string& n, BasicTensor<T>& t) { out.emplace_back(n, &t); });
    return out;
  }

  /// Snapshot of all learnable tensors.
  Registry<T> param_registry() const {
    Registry<T> out;
    const_cast<NetworkParams<T>&>(params_).visit_params(
        [&](const std::string& n, const BasicTensor<T>& t) { out.push_back({n, t}); });
    return out;
  }

  std::size_t param_count() const {
    std::size_t total = 0;
    const_cast<NetworkParams<T>&>(params_).visit_params(
        [&](const std::string&, const BasicTensor<T>& t) { total += t.numel(); });
    return total;
  }

  /// Input (N, in_channels, H, W) -> probabilities (N, 1, H, W).
  /// Train mode with dropout > 0 draws dropout masks from `rng`.
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode, Rng* rng = nullptr) {
    require_rank4(x, "network forward");
    if (x.dim(1) != spec_.in_channels || x.dim(2) != spec_.input_h || x.dim(3) != spec_.input_w) {
      throw ShapeError("network forward: input " + to_string(x.shape()) + " does not match spec (N," +
                       std::to_string(spec_.in_channels) + "," + std::to_string(spec_.input_h) + "," +
                       std::to_string(spec_.input_w) + ")");
    }
    const bool drop = mode == Mode::train && spec_.dropout > 0.0;
    if (drop && rng == nullptr) throw std::invalid_argument("network forward: train-mode dropout needs an Rng");
    Rng unused(0);
    Rng& r = rng ? *rng : unused;

    State s;
    s.enc.resize(spec_.depth);
    s.dec.resize(spec_.depth - 1);
    BasicTensor<T> h = x;
    for (std::size_t i = 0; i < spec_.depth; ++i) {
      auto& st = s.enc[i];
      auto [y, bctx] = block_fwd(h, params_.encoder[i], mode);
      st.body = std::move(bctx);
      auto [yd, dctx] = dropout_fwd(y, spec_.dropout, mode, r);
      st.drop = std::move(dctx);
      st.skip = std::move(yd);
      if (i + 1 < spec_.depth) {
        auto [p, pctx] = maxpool2x2_fwd(st.skip);
        st.pool = std::move(pctx);
        h = std::move(p);
      } else {
        h = st.skip;
      }
    }
    for (std::size_t j = spec_.depth - 1; j-- > 0;) {
      auto& st = s.dec[j];
      auto& stage = params_.decoder[j];
      auto [u, uctx] = upconv_fwd(h, stage.up);
      st.up = std::move(uctx);
      st.up_channels = u.dim(1);
      auto merged = concat_channels(u, s.enc[j].skip);
      auto [y, bctx] = block_fwd(merged, stage.body, mode);
      st.body = std::move(bctx);
      h = std::move(y);
    }
    // Skips are no longer needed once merged.
    for (auto& e : s.enc) e.skip = BasicTensor<T>();
    if (params_.head_bn) {
      auto [a, bctx] = batchnorm_fwd(h, *params_.head_bn, mode);
      auto [r, rctx] = relu_fwd(a);
      s.head_bn = std::move(bctx);
      s.head_relu = std::move(rctx);
      h = std::move(r);
    }
    auto [logits, hctx] = conv2d_fwd(h, params_.head);
    s.head = std::move(hctx);
    auto [prob, sctx] = sigmoid_fwd(logits);
    s.out = std::move(sctx);
    state_ = std::move(s);
    return prob;
  }

  /// Gradients of every learnable tensor, keys identical to param_registry().
  Registry<T> backward(const BasicTensor<T>& dprob) {
    if (!state_) throw std::logic_error("network backward called without a matching forward");
    State s = std::move(*state_);
    state_.reset();
    NetworkParams<T> g;
    g.encoder.resize(spec_.depth);
    g.decoder.resize(spec_.depth - 1);

    auto dlogits = sigmoid_bwd(s.out, dprob);
    auto gh = conv2d_bwd(s.head, dlogits);
    g.head = {std::move(gh.dw), std::move(gh.db), 1, Padding::same};
    BasicTensor<T> dh = std::move(gh.dx);
    if (s.head_bn) {
      auto gb = batchnorm_bwd(*s.head_bn, relu_bwd(*s.head_relu, dh));
      g.head_bn = BnParams<T>{std::move(gb.dgamma), std::move(gb.dbeta), {}, {}};
      dh = std::move(gb.dx);
    }

    std::vector<BasicTensor<T>> dskip(spec_.depth);
    for (std::size_t j = 0; j + 1 < spec_.depth; ++j) {
      auto& st = s.dec[j];
      auto [dm, gbody] = block_bwd(st.body, dh);
      g.decoder[j].body = std::move(gbody);
      auto [du, ds] = split_channels(dm, st.up_channels);
      dskip[j] = std::move(ds);
      auto gu = upconv_bwd(st.up, du);
      g.decoder[j].up = {std::move(gu.dw), std::move(gu.db), 2, Padding::same};
      dh = std::move(gu.dx);
    }
    for (std::size_t i = spec_.depth; i-- > 0;) {
      auto& st = s.enc[i];
      BasicTensor<T> dout;
      if (i + 1 < spec_.depth) {
        dout = add(maxpool2x2_bwd(*st.pool, dh), dskip[i]);
      } else {
        dout = std::move(dh);
      }
      auto dy = dropout_bwd(st.drop, dout);
      auto [dx, gbody] = block_bwd(st.body, dy);
      g.encoder[i] = std::move(gbody);
      dh = std::move(dx);
    }
    input_grad_ = std::move(dh);

    Registry<T> out;
    g.visit_params([&](const std::string& n, BasicTensor<T>& t) { out.push_back({n, std::move(t)}); });
    return out;
  }

  /// Gradient with respect to the network input from the last backward().
  const BasicTensor<T>& input_grad() const { return input_grad_; }

private:
  struct EncState {
    BlockCtx<T> body;
    DropoutCtx<T> drop;
    std::optional<MaxPoolCtx<T>> pool;
    BasicTensor<T> skip;
  };
  struct DecState {
    ConvCtx<T> up;
    std::size_t up_channels = 0;
    BlockCtx<T> body;
  };
  struct State {
    std::vector<EncState> enc;
    std::vector<DecState> dec;
    std::optional<BnCtx<T>> head_bn;
    std::optional<ReluCtx<T>> head_relu;
    ConvCtx<T> head;
    SigmoidCtx<T> out;
  };

  ArchSpec spec_;
  NetworkParams<T> params_;
  std::optional<State> state_;
  BasicTensor<T> input_grad_;
};

}  // namespace runet
