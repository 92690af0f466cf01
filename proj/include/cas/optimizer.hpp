#pragma once

#include "cas/network.hpp"

namespace cas {

/// Minibatch gradient descent with heavy-ball momentum:
///   v <- momentum * v + g;  theta <- theta - lr * v
template <typename Scalar>
class SgdMomentum {
 public:
  SgdMomentum(double learning_rate, double momentum) : lr_(learning_rate), momentum_(momentum) {}

  void step(NetworkParams<Scalar>& params, const NetworkParams<Scalar>& grads) {
    if (velocity_.tensors.empty()) velocity_ = params.zeros_like();
    for (auto& [name, theta] : params.tensors) {
      auto& v = velocity_.at(name);
      v = static_cast<Scalar>(momentum_) * v + grads.at(name);
      theta -= static_cast<Scalar>(lr_) * v;
    }
  }

  void step(Matrix<double>& theta, const Matrix<double>& grad) {
    if (extra_velocity_.size() == 0) extra_velocity_ = Matrix<double>::Zero(theta.rows(), theta.cols());
    extra_velocity_ = momentum_ * extra_velocity_ + grad;
    theta -= lr_ * extra_velocity_;
  }

 private:
  double lr_;
  double momentum_;
  NetworkParams<Scalar> velocity_;
  Matrix<double> extra_velocity_;
};

}  // namespace cas
