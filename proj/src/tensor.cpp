#include "r2p/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "r2p/kernels.hpp"

namespace r2p {

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated on demand
  bool requires_grad = false;
  bool leaf = true;
  std::vector<std::shared_ptr<TensorNode>> parents;
  Tensor::BackwardFn backward_fn;

  std::size_t size() const { return data.size(); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

using detail::TensorNode;

namespace {

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(s));
    n *= d;
  }
  return n;
}

void check_finite(const char* op, std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x))
      throw NumericError(std::string(op) + ": non-finite value in forward output");
}

std::shared_ptr<TensorNode> make_leaf(Shape shape, std::vector<double> data,
                                      bool requires_grad) {
  if (shape_numel(shape) != data.size())
    throw ShapeError("data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  check_finite("tensor", data);
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->requires_grad = requires_grad;
  n->leaf = true;
  return n;
}

// Order-canonical sum: sorting the addends makes the result invariant to any
// permutation of the original order.
double sorted_sum(std::vector<double>& scratch) {
  std::sort(scratch.begin(), scratch.end());
  double s = 0.0;
  for (double v : scratch) s += v;
  return s;
}

}  // namespace

// ---- Tensor basics --------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::size_t n = shape_numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, 0.0),
                          requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::size_t n = shape_numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, value),
                          requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  return Tensor(make_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, std::mt19937_64& rng,
                       bool requires_grad) {
  std::size_t n = shape_numel(shape);
  std::vector<double> data(n);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : data) v = dist(rng);
  return Tensor(make_leaf(std::move(shape), std::move(data), requires_grad));
}

const Shape& Tensor::shape() const {
  if (!node_) throw UsageError("operation on an empty Tensor");
  return node_->shape;
}

std::size_t Tensor::size() const { return node_ ? node_->size() : 0; }

std::span<const double> Tensor::data() const {
  if (!node_) throw UsageError("operation on an empty Tensor");
  return node_->data;
}

std::span<double> Tensor::mutable_data() {
  if (!node_) throw UsageError("operation on an empty Tensor");
  return node_->data;
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
bool Tensor::is_leaf() const { return !node_ || node_->leaf; }
bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!node_ || node_->grad.empty())
    throw UsageError("grad() called before backward populated it");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.assign(node_->data.size(), 0.0);
}

double Tensor::value() const {
  if (size() != 1)
    throw UsageError("value() requires a scalar tensor, got shape " +
                     shape_str(shape()));
  return node_->data[0];
}

double Tensor::at(std::size_t i) const { return data()[i]; }
double Tensor::at(std::size_t i, std::size_t j) const {
  const Shape& s = shape();
  return data()[i * s[1] + j];
}
double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
  const Shape& s = shape();
  return data()[(i * s[1] + j) * s[2] + k];
}

void Tensor::accumulate_grad(std::span<const double> g) const {
  if (!node_ || !node_->requires_grad) return;
  node_->ensure_grad();
  if (g.size() != node_->grad.size())
    throw ShapeError("gradient size mismatch: " + std::to_string(g.size()) +
                     " vs " + std::to_string(node_->grad.size()));
  for (std::size_t i = 0; i < g.size(); ++i) node_->grad[i] += g[i];
}

Tensor Tensor::from_op(const char* op_name, std::vector<Tensor> inputs,
                       Shape shape, std::vector<double> data,
                       const std::function<BackwardFn()>& make_backward) {
  if (shape_numel(shape) != data.size())
    throw ShapeError(std::string(op_name) + ": output data length " +
                     std::to_string(data.size()) + " does not match shape " +
                     shape_str(shape));
  check_finite(op_name, data);

  bool needs_grad = false;
  for (const Tensor& t : inputs)
    if (t.requires_grad()) needs_grad = true;

  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  if (needs_grad) {
    n->requires_grad = true;
    n->leaf = false;
    n->parents.reserve(inputs.size());
    for (const Tensor& t : inputs)
      if (t.node_) n->parents.push_back(t.node_);
    n->backward_fn = make_backward();
  }
  return Tensor(std::move(n));
}

void Tensor::backward() const {
  if (!node_) throw UsageError("backward() on an empty Tensor");
  if (size() != 1)
    throw UsageError("backward() requires a scalar loss, got shape " +
                     shape_str(shape()));

  // Topological order via iterative DFS over parents.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  struct Frame {
    TensorNode* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  if (node_->requires_grad) stack.push_back({node_.get(), 0});
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent == 0) {
      if (seen.count(f.node)) {
        stack.pop_back();
        continue;
      }
      seen.insert(f.node);
    }
    if (f.next_parent < f.node->parents.size()) {
      TensorNode* p = f.node->parents[f.next_parent++].get();
      if (!seen.count(p) && p->requires_grad) stack.push_back({p, 0});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  // Interior gradients are scratch state of this sweep; leaves accumulate.
  for (TensorNode* n : order) {
    if (!n->leaf)
      n->grad.assign(n->data.size(), 0.0);
    else
      n->ensure_grad();
  }
  node_->ensure_grad();
  node_->grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward_fn) n->backward_fn(n->grad);
  }
}

// ---- ops -------------------------------------------------------------------

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 && x.rank() != 3)
    throw ShapeError("linear: input must be rank 2 or 3, got " +
                     shape_str(x.shape()));
  if (w.rank() != 2)
    throw ShapeError("linear: weight must be rank 2, got " +
                     shape_str(w.shape()));
  const std::size_t din = x.shape().back();
  const std::size_t dout = w.dim(1);
  if (w.dim(0) != din)
    throw ShapeError("linear: input " + shape_str(x.shape()) +
                     " incompatible with weight " + shape_str(w.shape()));
  if (b.rank() != 1 || b.dim(0) != dout)
    throw ShapeError("linear: bias " + shape_str(b.shape()) +
                     " incompatible with weight " + shape_str(w.shape()));

  const std::size_t rows = x.size() / din;  // B or B*N
  std::vector<double> out(rows * dout);
  matmul_nn(x.data(), w.data(), out, rows, din, dout);
  std::span<const double> bias = b.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < dout; ++j) out[r * dout + j] += bias[j];

  Shape out_shape = x.shape();
  out_shape.back() = dout;

  return Tensor::from_op(
      "linear", {x, w, b}, std::move(out_shape), std::move(out),
      [&]() -> Tensor::BackwardFn {
        Tensor xc = x, wc = w, bc = b;
        return [xc, wc, bc, rows, din, dout](std::span<const double> g) {
          if (xc.requires_grad()) {
            std::vector<double> dx(rows * din);
            matmul_nt(g, wc.data(), dx, rows, dout, din);
            xc.accumulate_grad(dx);
          }
          if (wc.requires_grad()) {
            std::vector<double> dw(din * dout);
            matmul_tn(xc.data(), g, dw, din, rows, dout);
            wc.accumulate_grad(dw);
          }
          if (bc.requires_grad()) {
            std::vector<double> db(dout, 0.0);
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t j = 0; j < dout; ++j) db[j] += g[r * dout + j];
            bc.accumulate_grad(db);
          }
        };
      });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.size());
  std::span<const double> in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = in[i] > 0.0 ? in[i] : 0.0;

  return Tensor::from_op(
      "relu", {x}, x.shape(), std::move(out), [&]() -> Tensor::BackwardFn {
        Tensor xc = x;
        return [xc](std::span<const double> g) {
          std::span<const double> in = xc.data();
          std::vector<double> dx(g.size());
          for (std::size_t i = 0; i < g.size(); ++i)
            dx[i] = in[i] > 0.0 ? g[i] : 0.0;
          xc.accumulate_grad(dx);
        };
      });
}

Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 BatchNormState& state, bool training, double eps,
                 double momentum) {
  if (x.rank() != 3)
    throw ShapeError("batchnorm: input must be rank 3, got " +
                     shape_str(x.shape()));
  const std::size_t batch = x.dim(0), npts = x.dim(1), feat = x.dim(2);
  if (gamma.rank() != 1 || gamma.dim(0) != feat || beta.rank() != 1 ||
      beta.dim(0) != feat)
    throw ShapeError("batchnorm: gamma " + shape_str(gamma.shape()) +
                     " / beta " + shape_str(beta.shape()) +
                     " do not match feature width " + std::to_string(feat));
  if (!training && !state.initialized)
    throw UsageError("batchnorm: eval mode requires populated running statistics");

  const std::size_t m = batch * npts;
  std::span<const double> in = x.data();
  std::vector<double> mu(feat), var(feat);

  if (training) {
    std::vector<double> scratch(m);
    for (std::size_t d = 0; d < feat; ++d) {
      for (std::size_t i = 0; i < m; ++i) scratch[i] = in[i * feat + d];
      mu[d] = sorted_sum(scratch) / static_cast<double>(m);
      for (std::size_t i = 0; i < m; ++i) {
        double c = in[i * feat + d] - mu[d];
        scratch[i] = c * c;
      }
      var[d] = sorted_sum(scratch) / static_cast<double>(m);
      if (!std::isfinite(mu[d]) || !std::isfinite(var[d]))
        throw NumericError("batchnorm: non-finite batch statistics");
    }
    if (!state.initialized) {
      state.running_mean = mu;
      state.running_var = var;
      state.initialized = true;
    } else {
      for (std::size_t d = 0; d < feat; ++d) {
        state.running_mean[d] = momentum * state.running_mean[d] + (1.0 - momentum) * mu[d];
        state.running_var[d] = momentum * state.running_var[d] + (1.0 - momentum) * var[d];
      }
    }
  } else {
    mu = state.running_mean;
    var = state.running_var;
  }

  std::vector<double> inv_std(feat);
  for (std::size_t d = 0; d < feat; ++d) inv_std[d] = 1.0 / std::sqrt(var[d] + eps);

  auto xhat = std::make_shared<std::vector<double>>(m * feat);
  std::span<const double> gm = gamma.data(), bt = beta.data();
  std::vector<double> out(m * feat);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t d = 0; d < feat; ++d) {
      double h = (in[i * feat + d] - mu[d]) * inv_std[d];
      (*xhat)[i * feat + d] = h;
      out[i * feat + d] = gm[d] * h + bt[d];
    }

  return Tensor::from_op(
      "batchnorm", {x, gamma, beta}, x.shape(), std::move(out),
      [&]() -> Tensor::BackwardFn {
        Tensor xc = x, gc = gamma, bc = beta;
        auto istd = std::make_shared<std::vector<double>>(inv_std);
        return [xc, gc, bc, xhat, istd, m, feat,
                training](std::span<const double> g) {
          std::span<const double> gmv = gc.data();
          std::vector<double> dgamma(feat, 0.0), dbeta(feat, 0.0);
          std::vector<double> sum_g(feat, 0.0), sum_gh(feat, 0.0);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t d = 0; d < feat; ++d) {
              double gv = g[i * feat + d];
              double h = (*xhat)[i * feat + d];
              dbeta[d] += gv;
              dgamma[d] += gv * h;
              sum_g[d] += gv;
              sum_gh[d] += gv * h;
            }
          if (xc.requires_grad()) {
            std::vector<double> dx(m * feat);
            if (training) {
              double dm = static_cast<double>(m);
              for (std::size_t i = 0; i < m; ++i)
                for (std::size_t d = 0; d < feat; ++d) {
                  double gv = g[i * feat + d];
                  double h = (*xhat)[i * feat + d];
                  dx[i * feat + d] = gmv[d] * (*istd)[d] / dm *
                                     (dm * gv - sum_g[d] - h * sum_gh[d]);
                }
            } else {
              for (std::size_t i = 0; i < m; ++i)
                for (std::size_t d = 0; d < feat; ++d)
                  dx[i * feat + d] = g[i * feat + d] * gmv[d] * (*istd)[d];
            }
            xc.accumulate_grad(dx);
          }
          gc.accumulate_grad(dgamma);
          bc.accumulate_grad(dbeta);
        };
      });
}

MaxPoolResult max_pool_points(const Tensor& x) {
  if (x.rank() != 3)
    throw ShapeError("max_pool_points: input must be rank 3, got " +
                     shape_str(x.shape()));
  const std::size_t batch = x.dim(0), npts = x.dim(1), feat = x.dim(2);
  if (npts == 0) throw UsageError("max_pool_points: empty point axis");

  std::span<const double> in = x.data();
  std::vector<double> vals(batch * feat, -std::numeric_limits<double>::infinity());
  auto argmax = std::make_shared<std::vector<std::size_t>>(batch * feat, 0);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t n = 0; n < npts; ++n)
      for (std::size_t d = 0; d < feat; ++d) {
        double v = in[(b * npts + n) * feat + d];
        std::size_t slot = b * feat + d;
        if (v > vals[slot]) {
          vals[slot] = v;
          (*argmax)[slot] = n;
        }
      }

  Tensor values = Tensor::from_op(
      "max_pool_points", {x}, {batch, feat}, std::move(vals),
      [&]() -> Tensor::BackwardFn {
        Tensor xc = x;
        return [xc, argmax, batch, npts, feat](std::span<const double> g) {
          std::vector<double> dx(batch * npts * feat, 0.0);
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t d = 0; d < feat; ++d) {
              std::size_t n = (*argmax)[b * feat + d];
              dx[(b * npts + n) * feat + d] = g[b * feat + d];
            }
          xc.accumulate_grad(dx);
        };
      });
  return {std::move(values), *argmax};
}

Tensor concat_global(const Tensor& x, const Tensor& g) {
  if (x.rank() != 3 || g.rank() != 2)
    throw ShapeError("concat_global: expected rank-3 x and rank-2 g, got " +
                     shape_str(x.shape()) + " and " + shape_str(g.shape()));
  if (x.dim(0) != g.dim(0))
    throw ShapeError("concat_global: batch mismatch between " +
                     shape_str(x.shape()) + " and " + shape_str(g.shape()));
  const std::size_t batch = x.dim(0), npts = x.dim(1), d1 = x.dim(2),
                    d2 = g.dim(1);
  std::span<const double> xin = x.data(), gin = g.data();
  std::vector<double> out(batch * npts * (d1 + d2));
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t n = 0; n < npts; ++n) {
      double* row = out.data() + (b * npts + n) * (d1 + d2);
      const double* xrow = xin.data() + (b * npts + n) * d1;
      const double* grow = gin.data() + b * d2;
      std::copy(xrow, xrow + d1, row);
      std::copy(grow, grow + d2, row + d1);
    }

  return Tensor::from_op(
      "concat_global", {x, g}, {batch, npts, d1 + d2}, std::move(out),
      [&]() -> Tensor::BackwardFn {
        Tensor xc = x, gc = g;
        return [xc, gc, batch, npts, d1, d2](std::span<const double> gr) {
          if (xc.requires_grad()) {
            std::vector<double> dx(batch * npts * d1);
            for (std::size_t b = 0; b < batch; ++b)
              for (std::size_t n = 0; n < npts; ++n)
                for (std::size_t d = 0; d < d1; ++d)
                  dx[(b * npts + n) * d1 + d] =
                      gr[(b * npts + n) * (d1 + d2) + d];
            xc.accumulate_grad(dx);
          }
          if (gc.requires_grad()) {
            std::vector<double> dg(batch * d2, 0.0);
            for (std::size_t b = 0; b < batch; ++b)
              for (std::size_t n = 0; n < npts; ++n)
                for (std::size_t d = 0; d < d2; ++d)
                  dg[b * d2 + d] += gr[(b * npts + n) * (d1 + d2) + d1 + d];
            gc.accumulate_grad(dg);
          }
        };
      });
}

Tensor reshape(const Tensor& x, Shape new_shape) {
  if (shape_numel(new_shape) != x.size())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(new_shape));
  std::vector<double> out(x.data().begin(), x.data().end());
  return Tensor::from_op("reshape", {x}, std::move(new_shape), std::move(out),
                         [&]() -> Tensor::BackwardFn {
                           Tensor xc = x;
                           return [xc](std::span<const double> g) {
                             xc.accumulate_grad(g);
                           };
                         });
}

namespace {

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return Tensor::from_op("add", {a, b}, a.shape(), std::move(out),
                         [&]() -> Tensor::BackwardFn {
                           Tensor ac = a, bc = b;
                           return [ac, bc](std::span<const double> g) {
                             ac.accumulate_grad(g);
                             bc.accumulate_grad(g);
                           };
                         });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return Tensor::from_op("sub", {a, b}, a.shape(), std::move(out),
                         [&]() -> Tensor::BackwardFn {
                           Tensor ac = a, bc = b;
                           return [ac, bc](std::span<const double> g) {
                             ac.accumulate_grad(g);
                             std::vector<double> neg(g.size());
                             for (std::size_t i = 0; i < g.size(); ++i)
                               neg[i] = -g[i];
                             bc.accumulate_grad(neg);
                           };
                         });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return Tensor::from_op(
      "mul", {a, b}, a.shape(), std::move(out), [&]() -> Tensor::BackwardFn {
        Tensor ac = a, bc = b;
        return [ac, bc](std::span<const double> g) {
          std::vector<double> da(g.size()), db(g.size());
          for (std::size_t i = 0; i < g.size(); ++i) {
            da[i] = g[i] * bc.data()[i];
            db[i] = g[i] * ac.data()[i];
          }
          ac.accumulate_grad(da);
          bc.accumulate_grad(db);
        };
      });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * s;
  return Tensor::from_op("scale", {a}, a.shape(), std::move(out),
                         [&]() -> Tensor::BackwardFn {
                           Tensor ac = a;
                           return [ac, s](std::span<const double> g) {
                             std::vector<double> da(g.size());
                             for (std::size_t i = 0; i < g.size(); ++i)
                               da[i] = g[i] * s;
                             ac.accumulate_grad(da);
                           };
                         });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  std::size_t n = x.size();
  return Tensor::from_op("sum", {x}, {1}, {s}, [&]() -> Tensor::BackwardFn {
    Tensor xc = x;
    return [xc, n](std::span<const double> g) {
      std::vector<double> dx(n, g[0]);
      xc.accumulate_grad(dx);
    };
  });
}

Tensor mean(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  std::size_t n = x.size();
  double inv = 1.0 / static_cast<double>(n);
  return Tensor::from_op("mean", {x}, {1}, {s * inv},
                         [&]() -> Tensor::BackwardFn {
                           Tensor xc = x;
                           return [xc, n, inv](std::span<const double> g) {
                             std::vector<double> dx(n, g[0] * inv);
                             xc.accumulate_grad(dx);
                           };
                         });
}

// ---- serialization ---------------------------------------------------------

namespace {
constexpr char kTensorMagic[4] = {'R', '2', 'P', 'T'};

template <typename T>
void write_raw(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("truncated tensor stream");
  return v;
}
}  // namespace

void save_tensor(std::ostream& os, const Tensor& t) {
  os.write(kTensorMagic, 4);
  std::uint8_t rank = static_cast<std::uint8_t>(t.rank());
  write_raw(os, rank);
  for (std::size_t d : t.shape()) write_raw<std::uint64_t>(os, d);
  os.write(reinterpret_cast<const char*>(t.data().data()),
           static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!os) throw IoError("failed writing tensor stream");
}

Tensor load_tensor(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kTensorMagic, 4) != 0)
    throw IoError("bad tensor magic (expected R2PT)");
  std::uint8_t rank = read_raw<std::uint8_t>(is);
  Shape shape(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    shape[i] = static_cast<std::size_t>(read_raw<std::uint64_t>(is));
    if (shape[i] == 0) throw IoError("zero dimension in tensor stream");
  }
  std::size_t n = shape_numel(shape);
  std::vector<double> data(n);
  is.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw IoError("truncated tensor payload");
  return Tensor::from_data(std::move(shape), std::move(data));
}

void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path);
  save_tensor(os, t);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for read: " + path);
  return load_tensor(is);
}

}  // namespace r2p
