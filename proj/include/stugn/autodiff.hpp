#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices of doubles. A Tape records every operation of one forward pass;
// Tape::backward walks it once in reverse and accumulates parameter
// gradients.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace stugn::ad {

class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(1, 1, v); }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  std::array<std::size_t, 2> shape() const { return {rows_, cols_}; }
  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }
  double* row(std::size_t r) { return data_.data() + r * cols_; }
  const double* row(std::size_t r) const { return data_.data() + r * cols_; }

  void fill(double v);
  bool all_finite() const;
  bool operator==(const Tensor&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

std::string shape_string(const Tensor& t);

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;
};

/// Owns parameters at stable addresses, in registration order.
class ParameterStore {
 public:
  Parameter& add(std::string name, Tensor init, bool trainable = true);

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }
  Parameter* find(const std::string& name);
  std::size_t scalar_count() const;

  void zero_grad();
  std::vector<Tensor> snapshot() const;
  void restore(const std::vector<Tensor>& values);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

/// Text checkpoint, format version 1:
///
///     STUGN-CHECKPOINT 1
///     <header line count>
///     <header lines verbatim>
///     <parameter count>
///     <name> <rows> <cols>
///     <rows*cols hexadecimal floats (%a), one per line>
///     ...
///
/// Hexadecimal floats make the file exact and independent of byte order.
void save_checkpoint(std::ostream& out, const ParameterStore& store, const std::string& header);
/// Loads values into an already-built store (names and shapes must match);
/// returns the header text.
std::string load_checkpoint(std::istream& in, ParameterStore& store);

/// Shared immutable index vector (gather rows, segment ids).
using Index = std::shared_ptr<const std::vector<std::uint32_t>>;
Index make_index(std::vector<std::uint32_t> ids);

class Tape;

/// Handle to a recorded value.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Differentiable input whose gradient can be read with grad().
  Var leaf(Tensor value);
  /// Parameter leaf; backward() adds its gradient into `p.grad`.
  /// Repeated calls for one parameter return the same Var.
  Var param(Parameter& p);

  const Tensor& value(Var v) const;
  /// Gradient after backward(); zeros if the node received none.
  Tensor grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a 1x1 loss; throws ValidationError otherwise.
  void backward(Var loss);

  // Used by operation implementations.
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn fn, const char* op);
  Tensor& grad_ref(std::size_t id);

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Parameter* param = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::unordered_map<const Parameter*, std::size_t> param_ids_;
};

// Forward operations. Shapes are (rows, cols); vectors are 1xN rows.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add_row(Var a, Var row);     // broadcast a 1xN row over every row of a
Var mul_row(Var a, Var row);
Var scale(Var a, double factor);
Var mul_scalar(Var a, Var s);    // s is 1x1
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var gather_rows(Var a, const Index& rows);
Var reshape(Var a, std::size_t rows, std::size_t cols);
Var segment_sum(Var a, const Index& segment, std::size_t segments);
Var segment_mean(Var a, const Index& segment, std::size_t segments);
/// Column-wise softmax over rows sharing a segment id.
Var segment_softmax(Var a, const Index& segment, std::size_t segments);
Var gelu(Var a);  // tanh approximation
Var sigmoid(Var a);
Var tanh(Var a);
Var leaky_relu(Var a, double slope = 0.2);
/// Inverted dropout; identity when `train` is false.
Var dropout(Var a, double rate, std::uint64_t seed, bool train);
/// Row-wise normalisation to zero mean and unit variance (no affine part).
Var layer_norm(Var a, double eps = 1e-5);
Var sum(Var a);
Var mean(Var a);

/// max_i |analytic_i - numeric_i| / max(1e-6, |analytic_i| + |numeric_i|)
/// with central differences of step h. The floor sits above the round-off
/// of differencing O(1) losses at h = 1e-5.
double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double h = 1e-5);

/// Same check over every trainable parameter entry in `store`.
double grad_check_parameters(ParameterStore& store, const std::function<Var(Tape&)>& f,
                             double h = 1e-5);

}  // namespace stugn::ad
