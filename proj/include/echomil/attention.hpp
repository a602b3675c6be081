#pragma once

// Attention-based multiple-instance pooling.
//
// Each instance feature h_j (row j of a J x D matrix) receives a score
//   s_j = w . tanh(V h_j)
// with V: M x D and w: M. The weights are alpha = softmax(s) and the bag
// feature is z = sum_j alpha_j h_j. Templated on the scalar so the same code
// runs in float inside the network and in double for gradient checks.

#include <Eigen/Dense>

#include <cmath>

#include "echomil/errors.hpp"

namespace echomil {

template <class Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <class Scalar>
struct AttentionOutput {
  Vector<Scalar> pooled;      // D
  Vector<Scalar> weights;     // J
  Vector<Scalar> scores;      // J, pre-softmax
  RowMatrix<Scalar> hidden;   // J x M, tanh(V h_j)
};

template <class Scalar>
struct AttentionGradients {
  RowMatrix<Scalar> features;  // J x D
  RowMatrix<Scalar> V;         // M x D
  Vector<Scalar> w;            // M
};

/// Numerically stable softmax.
template <class Scalar>
Vector<Scalar> softmax(const Vector<Scalar>& scores) {
  const Scalar top = scores.maxCoeff();
  Vector<Scalar> e = (scores.array() - top).exp().matrix();
  return e / e.sum();
}

template <class Scalar>
AttentionOutput<Scalar> attention_aggregate(const RowMatrix<Scalar>& features,
                                            const RowMatrix<Scalar>& V,
                                            const Vector<Scalar>& w) {
  if (features.rows() < 1) throw ArgumentError("attention needs at least one instance");
  if (V.cols() != features.cols() || V.rows() != w.size()) {
    throw ConfigError("attention parameter shapes do not match feature width");
  }
  AttentionOutput<Scalar> out;
  out.hidden = (features * V.transpose()).array().tanh().matrix();
  out.scores = out.hidden * w;
  out.weights = softmax<Scalar>(out.scores);
  out.pooled = features.transpose() * out.weights;
  return out;
}

/// Uniform weights 1/J; the aggregation used when attention is switched off.
template <class Scalar>
AttentionOutput<Scalar> mean_aggregate(const RowMatrix<Scalar>& features) {
  if (features.rows() < 1) throw ArgumentError("pooling needs at least one instance");
  AttentionOutput<Scalar> out;
  const auto J = features.rows();
  out.weights = Vector<Scalar>::Constant(J, Scalar(1) / static_cast<Scalar>(J));
  out.scores = Vector<Scalar>::Zero(J);
  out.pooled = features.transpose() * out.weights;
  return out;
}

/// Backpropagates d loss / d pooled through attention_aggregate.
template <class Scalar>
AttentionGradients<Scalar> attention_backward(const RowMatrix<Scalar>& features,
                                              const RowMatrix<Scalar>& V,
                                              const Vector<Scalar>& w,
                                              const AttentionOutput<Scalar>& fwd,
                                              const Vector<Scalar>& d_pooled) {
  AttentionGradients<Scalar> g;
  const Vector<Scalar>& alpha = fwd.weights;
  // z = H^T alpha
  const Vector<Scalar> d_alpha = features * d_pooled;
  const Scalar mean_term = alpha.dot(d_alpha);
  const Vector<Scalar> d_scores = (alpha.array() * (d_alpha.array() - mean_term)).matrix();
  g.w = fwd.hidden.transpose() * d_scores;
  // d hidden_jm = d_scores_j * w_m, through tanh
  RowMatrix<Scalar> d_pre = d_scores * w.transpose();
  d_pre.array() *= (Scalar(1) - fwd.hidden.array().square());
  g.V = d_pre.transpose() * features;
  g.features = alpha * d_pooled.transpose() + d_pre * V;
  return g;
}

/// Gradient through mean_aggregate: each instance receives d_pooled / J.
template <class Scalar>
RowMatrix<Scalar> mean_backward(Eigen::Index instances, const Vector<Scalar>& d_pooled) {
  RowMatrix<Scalar> g(instances, d_pooled.size());
  for (Eigen::Index j = 0; j < instances; ++j) {
    g.row(j) = d_pooled.transpose() / static_cast<Scalar>(instances);
  }
  return g;
}

}  // namespace echomil
