#pragma once

#include <stdexcept>
#include <string>

namespace runet {

enum class Mode { train, infer };

/// Contexts returned by *_fwd may feed exactly one *_bwd call.
class SingleUse {
public:
  void consume(const char* op) {
    if (consumed_) throw std::logic_error(std::string(op) + ": context already consumed");
    consumed_ = true;
  }
  bool consumed() const { return consumed_; }

private:
  bool consumed_ = false;
};

}  // namespace runet
