#pragma once

#include <cstdint>
#include <vector>

#include "falsecl/numerics.hpp"

namespace falsecl {

/// MLP encoder. Layer l maps rows of width dims[l] to dims[l+1] via
/// x * W_l + b_l; tanh on hidden layers, identity on the output layer.
struct EncoderParams {
  std::vector<int> layer_dims;
  std::vector<Matrix> weights;  // weights[l] is dims[l] x dims[l+1]
  std::vector<Vector> biases;   // biases[l] has dims[l+1] entries

  std::size_t n_layers() const { return weights.size(); }
  int d_in() const { return layer_dims.front(); }
  int d_out() const { return layer_dims.back(); }
  std::size_t n_parameters() const;

  /// Throws BadConfig when shapes disagree with layer_dims or values are non-finite.
  void validate() const;

  bool operator==(const EncoderParams&) const = default;
};

/// Same layout as EncoderParams, holding dL/dparam.
using ParamGrads = EncoderParams;

struct ForwardCache {
  std::vector<Matrix> inputs;       // input to each layer (inputs[0] = views)
  std::vector<Matrix> activations;  // output of each layer after its nonlinearity
};

EncoderParams init_params(const std::vector<int>& layer_dims, std::uint64_t seed);

/// All-zero tensors shaped like `p`.
EncoderParams zeros_like(const EncoderParams& p);

struct ForwardResult {
  Matrix embeddings;
  ForwardCache cache;
};

ForwardResult forward(const EncoderParams& p, const Matrix& views);
Matrix embed(const EncoderParams& p, const Matrix& views);

ParamGrads backward(const EncoderParams& p, const ForwardCache& cache,
                    const Matrix& grad_embeddings);

struct SgdState {
  EncoderParams velocity;
};

SgdState make_sgd_state(const EncoderParams& p);

/// Classic momentum: v <- momentum * v + g; p <- p - lr * v.
void sgd_step(EncoderParams& p, const ParamGrads& grads, double lr, double momentum,
              SgdState& state);

/// Flattened parameter view for finite-difference checks and serialization.
/// Order: all weights (layer order, row-major), then all biases.
std::vector<double> flatten(const EncoderParams& p);
void unflatten(EncoderParams& p, const std::vector<double>& values);

}  // namespace falsecl
