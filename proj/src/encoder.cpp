#include "falsecl/encoder.hpp"

#include <cmath>
#include <random>
#include <string>

#include "falsecl/data.hpp"

namespace falsecl {

namespace {

constexpr std::uint64_t kInitStream = 0x696e697400000000ULL;

bool is_hidden(const EncoderParams& p, std::size_t layer) { return layer + 1 < p.n_layers(); }

void require_same_shapes(const EncoderParams& a, const EncoderParams& b, const char* what) {
  if (a.layer_dims != b.layer_dims) throw ShapeMismatch(std::string(what) + ": layer dims differ");
}

}  // namespace

std::size_t EncoderParams::n_parameters() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
  }
  return n;
}

void EncoderParams::validate() const {
  if (layer_dims.size() < 2) throw BadConfig("encoder needs at least one layer");
  for (int d : layer_dims) {
    if (d < 1) throw BadConfig("encoder dims must be >= 1");
  }
  if (weights.size() + 1 != layer_dims.size() || biases.size() != weights.size()) {
    throw BadConfig("encoder layer count does not match dims");
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != layer_dims[l] || weights[l].cols() != layer_dims[l + 1] ||
        biases[l].size() != layer_dims[l + 1]) {
      throw BadConfig("encoder layer " + std::to_string(l) + " has inconsistent shape");
    }
    if (!weights[l].allFinite() || !biases[l].allFinite()) {
      throw BadConfig("encoder layer " + std::to_string(l) + " has non-finite values");
    }
  }
}

EncoderParams init_params(const std::vector<int>& layer_dims, std::uint64_t seed) {
  if (layer_dims.size() < 2) throw BadConfig("init_params: need at least one layer");
  for (int d : layer_dims) {
    if (d < 1) throw BadConfig("init_params: dims must be >= 1");
  }
  Rng rng(splitmix64(seed ^ kInitStream));
  EncoderParams p;
  p.layer_dims = layer_dims;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const int fan_in = layer_dims[l];
    const int fan_out = layer_dims[l + 1];
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(fan_in)));
    Matrix w(fan_in, fan_out);
    // Row-major fill so the draw order matches the checkpoint layout.
    for (int r = 0; r < fan_in; ++r) {
      for (int c = 0; c < fan_out; ++c) w(r, c) = dist(rng);
    }
    p.weights.push_back(std::move(w));
    p.biases.push_back(Vector::Zero(fan_out));
  }
  return p;
}

EncoderParams zeros_like(const EncoderParams& p) {
  EncoderParams z;
  z.layer_dims = p.layer_dims;
  for (std::size_t l = 0; l < p.n_layers(); ++l) {
    z.weights.push_back(Matrix::Zero(p.weights[l].rows(), p.weights[l].cols()));
    z.biases.push_back(Vector::Zero(p.biases[l].size()));
  }
  return z;
}

ForwardResult forward(const EncoderParams& p, const Matrix& views) {
  if (views.cols() != p.d_in()) {
    throw ShapeMismatch("forward: views have " + std::to_string(views.cols()) +
                        " columns, encoder expects " + std::to_string(p.d_in()));
  }
  ForwardResult out;
  Matrix x = views;
  for (std::size_t l = 0; l < p.n_layers(); ++l) {
    Matrix h = numerics::matmul(x, p.weights[l]);
    h.rowwise() += p.biases[l].transpose();
    if (is_hidden(p, l)) h = h.array().tanh().matrix();
    out.cache.inputs.push_back(std::move(x));
    out.cache.activations.push_back(h);
    x = std::move(h);
  }
  out.embeddings = std::move(x);
  return out;
}

Matrix embed(const EncoderParams& p, const Matrix& views) { return forward(p, views).embeddings; }

ParamGrads backward(const EncoderParams& p, const ForwardCache& cache,
                    const Matrix& grad_embeddings) {
  if (cache.activations.size() != p.n_layers() || cache.inputs.size() != p.n_layers()) {
    throw ShapeMismatch("backward: cache does not match encoder depth");
  }
  const Matrix& out = cache.activations.back();
  if (grad_embeddings.rows() != out.rows() || grad_embeddings.cols() != out.cols()) {
    throw ShapeMismatch("backward: gradient shape does not match embeddings");
  }
  ParamGrads grads = zeros_like(p);
  Matrix g = grad_embeddings;
  for (std::size_t l = p.n_layers(); l-- > 0;) {
    if (is_hidden(p, l)) {
      const Matrix& a = cache.activations[l];
      g = (g.array() * (1.0 - a.array().square())).matrix();
    }
    grads.weights[l] = numerics::matmul(cache.inputs[l].transpose(), g);
    Vector db = Vector::Zero(g.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      for (Eigen::Index c = 0; c < g.cols(); ++c) db(c) += g(r, c);
    }
    grads.biases[l] = std::move(db);
    if (l > 0) g = numerics::matmul(g, p.weights[l].transpose());
  }
  return grads;
}

SgdState make_sgd_state(const EncoderParams& p) { return SgdState{zeros_like(p)}; }

void sgd_step(EncoderParams& p, const ParamGrads& grads, double lr, double momentum,
              SgdState& state) {
  if (!(lr > 0.0)) throw BadConfig("sgd_step: lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw BadConfig("sgd_step: momentum must be in [0, 1)");
  require_same_shapes(p, grads, "sgd_step");
  require_same_shapes(p, state.velocity, "sgd_step");
  for (std::size_t l = 0; l < p.n_layers(); ++l) {
    Matrix& vw = state.velocity.weights[l];
    vw = momentum * vw + grads.weights[l];
    p.weights[l] -= lr * vw;
    Vector& vb = state.velocity.biases[l];
    vb = momentum * vb + grads.biases[l];
    p.biases[l] -= lr * vb;
  }
}

std::vector<double> flatten(const EncoderParams& p) {
  std::vector<double> values;
  values.reserve(p.n_parameters());
  for (const Matrix& w : p.weights) {
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) values.push_back(w(r, c));
    }
  }
  for (const Vector& b : p.biases) {
    for (Eigen::Index i = 0; i < b.size(); ++i) values.push_back(b(i));
  }
  return values;
}

void unflatten(EncoderParams& p, const std::vector<double>& values) {
  if (values.size() != p.n_parameters()) throw ShapeMismatch("unflatten: wrong value count");
  std::size_t at = 0;
  for (Matrix& w : p.weights) {
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = values[at++];
    }
  }
  for (Vector& b : p.biases) {
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = values[at++];
  }
}

}  // namespace falsecl
