#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "r2p/error.hpp"

namespace r2p {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

namespace detail {
struct TensorNode;
}

// Dense f64 tensor with define-by-run reverse-mode autodiff. Ops never mutate
// their inputs; the graph a tensor belongs to is rebuilt on every forward
// pass and freed when the last tensor referencing it goes away.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  // Fan-in style uniform init on [lo, hi).
  static Tensor uniform(Shape shape, double lo, double hi,
                        std::mt19937_64& rng, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t i) const { return shape().at(i); }
  std::size_t size() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();  // optimizer updates on leaves

  bool requires_grad() const;
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  double value() const;  // scalar tensors only

  // Convenience element access (row-major), for tests and glue code.
  double at(std::size_t i) const;
  double at(std::size_t i, std::size_t j) const;
  double at(std::size_t i, std::size_t j, std::size_t k) const;

  // Reverse-mode sweep from a scalar. Interior gradients are reset per call;
  // leaf gradients accumulate across calls until zero_grad().
  void backward() const;

  // Graph node constructor used by every op, public so that modules with
  // custom gradients (the point-set losses) can join the same graph.
  // `backward` receives the upstream gradient of the output and is expected
  // to push into the inputs via accumulate_grad.
  using BackwardFn = std::function<void(std::span<const double> grad_out)>;
  static Tensor from_op(const char* op_name, std::vector<Tensor> inputs,
                        Shape shape, std::vector<double> data,
                        const std::function<BackwardFn()>& make_backward);

  // Adds `g` into this tensor's gradient buffer; no-op unless requires_grad.
  void accumulate_grad(std::span<const double> g) const;

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> node)
      : node_(std::move(node)) {}
  std::shared_ptr<detail::TensorNode> node_;
};

// ---- ops ----------------------------------------------------------------

// y[...,:] = x[...,:] * W + b for x of rank 2 [B,Din] or rank 3 [B,N,Din].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor relu(const Tensor& x);

struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  bool initialized = false;
};

// Per-feature normalization of x[B,N,D] over the B*N sample axis. Batch
// statistics use a sorted (order-canonical) summation so the forward pass is
// bit-exact under any permutation of the points.
Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 BatchNormState& state, bool training, double eps = 1e-5,
                 double momentum = 0.9);

struct MaxPoolResult {
  Tensor values;                    // [B,D]
  std::vector<std::size_t> argmax;  // B*D entries, point index per slot
};

// Feature-wise max over the point axis of x[B,N,D]; ties go to the lowest
// point index and backward routes each slot's gradient to that single point.
MaxPoolResult max_pool_points(const Tensor& x);

// output[b,n] = x[b,n] ++ g[b] for x[B,N,D1], g[B,D2].
Tensor concat_global(const Tensor& x, const Tensor& g);

Tensor reshape(const Tensor& x, Shape new_shape);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor sum(const Tensor& x);   // scalar
Tensor mean(const Tensor& x);  // scalar

// ---- serialization (magic "R2PT") ---------------------------------------

void save_tensor(std::ostream& os, const Tensor& t);
Tensor load_tensor(std::istream& is);
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

}  // namespace r2p
