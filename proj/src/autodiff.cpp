#include "stugn/autodiff.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>

#include "stugn/error.hpp"

namespace stugn::ad {

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) throw ValidationError("tensor data does not match its shape");
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  // An all-ones exponent marks Inf and NaN.
  constexpr std::uint64_t kExp = 0x7ff0000000000000ULL;
  std::uint64_t bad = 0;
  for (double x : data_) bad |= static_cast<std::uint64_t>((std::bit_cast<std::uint64_t>(x) & kExp) == kExp);
  return bad == 0;
}

std::string shape_string(const Tensor& t) {
  return "(" + std::to_string(t.rows()) + ", " + std::to_string(t.cols()) + ")";
}

Parameter& ParameterStore::add(std::string name, Tensor init, bool trainable) {
  for (const auto& p : params_)
    if (p->name == name) throw ValidationError("duplicate parameter name " + name);
  auto p = std::make_unique<Parameter>();
  p->name = std::move(name);
  p->grad = Tensor(init.rows(), init.cols());
  p->value = std::move(init);
  p->trainable = trainable;
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter* ParameterStore::find(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) {
    if (!p->grad.same_shape(p->value)) p->grad = Tensor(p->value.rows(), p->value.cols());
    p->grad.fill(0.0);
  }
}

std::vector<Tensor> ParameterStore::snapshot() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p->value);
  return out;
}

void ParameterStore::restore(const std::vector<Tensor>& values) {
  if (values.size() != params_.size()) throw ValidationError("snapshot size mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!values[i].same_shape(params_[i]->value)) throw ValidationError("snapshot shape mismatch");
    params_[i]->value = values[i];
  }
}

void save_checkpoint(std::ostream& out, const ParameterStore& store, const std::string& header) {
  std::size_t header_lines = 0;
  for (char c : header) header_lines += (c == '\n');
  if (!header.empty() && header.back() != '\n') ++header_lines;
  out << "STUGN-CHECKPOINT 1\n" << header_lines << '\n' << header;
  if (!header.empty() && header.back() != '\n') out << '\n';
  out << store.size() << '\n';
  char buf[64];
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Parameter& p = store[i];
    out << p.name << ' ' << p.value.rows() << ' ' << p.value.cols() << '\n';
    for (double v : p.value.data()) {
      std::snprintf(buf, sizeof buf, "%a\n", v);
      out << buf;
    }
  }
}

std::string load_checkpoint(std::istream& in, ParameterStore& store) {
  std::string line;
  if (!std::getline(in, line) || line != "STUGN-CHECKPOINT 1")
    throw ValidationError("not a version-1 checkpoint");
  std::size_t header_lines = 0;
  if (!(in >> header_lines)) throw ValidationError("checkpoint: bad header length");
  std::getline(in, line);
  std::string header;
  for (std::size_t i = 0; i < header_lines; ++i) {
    if (!std::getline(in, line)) throw ValidationError("checkpoint: truncated header");
    header += line + '\n';
  }
  std::size_t count = 0;
  if (!(in >> count) || count != store.size())
    throw ValidationError("checkpoint: parameter count does not match the model");
  for (std::size_t i = 0; i < count; ++i) {
    std::string name;
    std::size_t rows = 0, cols = 0;
    if (!(in >> name >> rows >> cols)) throw ValidationError("checkpoint: truncated parameter list");
    Parameter& p = store[i];
    if (name != p.name || rows != p.value.rows() || cols != p.value.cols())
      throw ValidationError("checkpoint: parameter " + name + " does not match the model");
    for (std::size_t k = 0; k < rows * cols; ++k) {
      std::string tok;
      if (!(in >> tok)) throw ValidationError("checkpoint: truncated values for " + name);
      p.value[k] = std::strtod(tok.c_str(), nullptr);
    }
  }
  return header;
}

Index make_index(std::vector<std::uint32_t> ids) {
  return std::make_shared<const std::vector<std::uint32_t>>(std::move(ids));
}

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::leaf(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::param(Parameter& p) {
  if (auto it = param_ids_.find(&p); it != param_ids_.end()) return Var{this, it->second};
  Node n;
  n.external = &p.value;
  n.param = &p;
  n.requires_grad = p.trainable;
  nodes_.push_back(std::move(n));
  param_ids_.emplace(&p, nodes_.size() - 1);
  return Var{this, nodes_.size() - 1};
}

const Tensor& Tape::value(Var v) const {
  const Node& n = nodes_[v.id];
  return n.external ? *n.external : n.value;
}

Tensor Tape::grad(Var v) const {
  if (v.id < grads_.size() && grads_[v.id].size() != 0) return grads_[v.id];
  const Tensor& x = value(v);
  return Tensor(x.rows(), x.cols());
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn fn, const char* op) {
  if (!value.all_finite()) throw NumericError(std::string(op) + " produced a non-finite value");
  Node n;
  n.value = std::move(value);
  for (const Var& in : inputs)
    if (nodes_[in.id].requires_grad) n.requires_grad = true;
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Tensor& Tape::grad_ref(std::size_t id) {
  Tensor& g = grads_[id];
  if (g.size() == 0) {
    const Tensor& v = value(Var{this, id});
    g = Tensor(v.rows(), v.cols());
  }
  return g;
}

void Tape::backward(Var loss) {
  const Tensor& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) throw ValidationError("backward needs a scalar loss");
  grads_.assign(nodes_.size(), Tensor());
  grads_[loss.id] = Tensor::scalar(1.0);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || grads_[i].size() == 0) continue;
    if (n.backward) n.backward(*this, grads_[i]);
    if (n.param) {
      Parameter& p = *n.param;
      if (!p.grad.same_shape(p.value)) p.grad = Tensor(p.value.rows(), p.value.cols());
      for (std::size_t k = 0; k < p.grad.size(); ++k) p.grad[k] += grads_[i][k];
    }
  }
}

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

bool needs(Tape& t, std::size_t id) { return t.requires_grad(Var{&t, id}); }
const Tensor& val(Tape& t, std::size_t id) { return t.value(Var{&t, id}); }

template <class Deriv>
Var unary(Var a, Tensor out, Deriv dydx, const char* op) {
  Tape& t = *a.tape;
  const std::size_t ia = a.id;
  const Var in[] = {a};
  // dydx receives the input and the output value at each position.
  return t.record(std::move(out), in,
                  [ia, dydx, self = t.size()](Tape& tp, const Tensor& g) {
                    const Tensor& x = val(tp, ia);
                    const Tensor& y = val(tp, self);
                    Tensor& ga = tp.grad_ref(ia);
                    for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * dydx(x[k], y[k]);
                  },
                  op);
}

}  // namespace

namespace {

// C(m x n) += A(m x k) * B(k x n), all row-major. Column blocks of fixed
// width keep the accumulators in registers.
template <std::size_t W>
void product_block(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n,
                   std::size_t j0) {
  for (std::size_t i = 0; i < m; ++i) {
    double acc[W];
    double* c = C + i * n + j0;
    for (std::size_t w = 0; w < W; ++w) acc[w] = c[w];
    const double* a = A + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[p];
      const double* b = B + p * n + j0;
      for (std::size_t w = 0; w < W; ++w) acc[w] += av * b[w];
    }
    for (std::size_t w = 0; w < W; ++w) c[w] = acc[w];
  }
}

void accumulate_product(const double* A, const double* B, double* C, std::size_t m, std::size_t k,
                        std::size_t n) {
  std::size_t j = 0;
  for (; j + 32 <= n; j += 32) product_block<32>(A, B, C, m, k, n, j);
  if (j + 16 <= n) product_block<16>(A, B, C, m, k, n, j), j += 16;
  if (j + 8 <= n) product_block<8>(A, B, C, m, k, n, j), j += 8;
  if (j + 4 <= n) product_block<4>(A, B, C, m, k, n, j), j += 4;
  for (; j < n; ++j) product_block<1>(A, B, C, m, k, n, j);
}

std::vector<double> transposed(const double* X, std::size_t rows, std::size_t cols) {
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = X[r * cols + c];
  return out;
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.cols() == B.rows(), "matmul shape mismatch " + shape_string(A) + " x " + shape_string(B));
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor C(m, n);
  accumulate_product(A.row(0), B.row(0), C.row(0), m, k, n);
  const std::size_t ia = a.id, ib = b.id;
  const Var in[] = {a, b};
  return a.tape->record(std::move(C), in,
                        [ia, ib, m, k, n](Tape& t, const Tensor& g) {
                          const Tensor& A = val(t, ia);
                          const Tensor& B = val(t, ib);
                          if (needs(t, ia)) {
                            const auto bt = transposed(B.row(0), k, n);
                            accumulate_product(g.row(0), bt.data(), t.grad_ref(ia).row(0), m, n, k);
                          }
                          if (needs(t, ib)) {
                            const auto at = transposed(A.row(0), m, k);
                            accumulate_product(at.data(), g.row(0), t.grad_ref(ib).row(0), k, m, n);
                          }
                        },
                        "matmul");
}

namespace {

Var binary_same_shape(Var a, Var b, double sb, const char* op) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.same_shape(B), std::string(op) + " shape mismatch " + shape_string(A) + " vs " +
                               shape_string(B));
  Tensor C(A.rows(), A.cols());
  for (std::size_t k = 0; k < C.size(); ++k) C[k] = A[k] + sb * B[k];
  const std::size_t ia = a.id, ib = b.id;
  const Var in[] = {a, b};
  return a.tape->record(std::move(C), in,
                        [ia, ib, sb](Tape& t, const Tensor& g) {
                          if (needs(t, ia)) {
                            Tensor& ga = t.grad_ref(ia);
                            for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
                          }
                          if (needs(t, ib)) {
                            Tensor& gb = t.grad_ref(ib);
                            for (std::size_t k = 0; k < g.size(); ++k) gb[k] += sb * g[k];
                          }
                        },
                        op);
}

}  // namespace

Var add(Var a, Var b) { return binary_same_shape(a, b, 1.0, "add"); }
Var sub(Var a, Var b) { return binary_same_shape(a, b, -1.0, "sub"); }

Var mul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.same_shape(B), "mul shape mismatch " + shape_string(A) + " vs " + shape_string(B));
  Tensor C(A.rows(), A.cols());
  for (std::size_t k = 0; k < C.size(); ++k) C[k] = A[k] * B[k];
  const std::size_t ia = a.id, ib = b.id;
  const Var in[] = {a, b};
  return a.tape->record(std::move(C), in,
                        [ia, ib](Tape& t, const Tensor& g) {
                          const Tensor& A = val(t, ia);
                          const Tensor& B = val(t, ib);
                          if (needs(t, ia)) {
                            Tensor& ga = t.grad_ref(ia);
                            for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * B[k];
                          }
                          if (needs(t, ib)) {
                            Tensor& gb = t.grad_ref(ib);
                            for (std::size_t k = 0; k < g.size(); ++k) gb[k] += g[k] * A[k];
                          }
                        },
                        "mul");
}

Var add_row(Var a, Var row) {
  const Tensor& A = a.value();
  const Tensor& R = row.value();
  require(R.rows() == 1 && R.cols() == A.cols(), "add_row shape mismatch " + shape_string(A) +
                                                      " + " + shape_string(R));
  Tensor C = A;
  for (std::size_t i = 0; i < C.rows(); ++i)
    for (std::size_t j = 0; j < C.cols(); ++j) C(i, j) += R[j];
  const std::size_t ia = a.id, ir = row.id;
  const Var in[] = {a, row};
  return a.tape->record(std::move(C), in,
                        [ia, ir](Tape& t, const Tensor& g) {
                          if (needs(t, ia)) {
                            Tensor& ga = t.grad_ref(ia);
                            for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
                          }
                          if (needs(t, ir)) {
                            Tensor& gr = t.grad_ref(ir);
                            for (std::size_t i = 0; i < g.rows(); ++i)
                              for (std::size_t j = 0; j < g.cols(); ++j) gr[j] += g(i, j);
                          }
                        },
                        "add_row");
}

Var mul_row(Var a, Var row) {
  const Tensor& A = a.value();
  const Tensor& R = row.value();
  require(R.rows() == 1 && R.cols() == A.cols(), "mul_row shape mismatch " + shape_string(A) +
                                                      " * " + shape_string(R));
  Tensor C = A;
  for (std::size_t i = 0; i < C.rows(); ++i)
    for (std::size_t j = 0; j < C.cols(); ++j) C(i, j) *= R[j];
  const std::size_t ia = a.id, ir = row.id;
  const Var in[] = {a, row};
  return a.tape->record(std::move(C), in,
                        [ia, ir](Tape& t, const Tensor& g) {
                          const Tensor& A = val(t, ia);
                          const Tensor& R = val(t, ir);
                          if (needs(t, ia)) {
                            Tensor& ga = t.grad_ref(ia);
                            for (std::size_t i = 0; i < g.rows(); ++i)
                              for (std::size_t j = 0; j < g.cols(); ++j) ga(i, j) += g(i, j) * R[j];
                          }
                          if (needs(t, ir)) {
                            Tensor& gr = t.grad_ref(ir);
                            for (std::size_t i = 0; i < g.rows(); ++i)
                              for (std::size_t j = 0; j < g.cols(); ++j) gr[j] += g(i, j) * A(i, j);
                          }
                        },
                        "mul_row");
}

Var scale(Var a, double factor) {
  Tensor C = a.value();
  for (std::size_t k = 0; k < C.size(); ++k) C[k] *= factor;
  const std::size_t ia = a.id;
  const Var in[] = {a};
  return a.tape->record(std::move(C), in,
                        [ia, factor](Tape& t, const Tensor& g) {
                          Tensor& ga = t.grad_ref(ia);
                          for (std::size_t k = 0; k < g.size(); ++k) ga[k] += factor * g[k];
                        },
                        "scale");
}

Var mul_scalar(Var a, Var s) {
  const Tensor& S = s.value();
  require(S.rows() == 1 && S.cols() == 1, "mul_scalar expects a 1x1 factor");
  Tensor C = a.value();
  const double f = S[0];
  for (std::size_t k = 0; k < C.size(); ++k) C[k] *= f;
  const std::size_t ia = a.id, is = s.id;
  const Var in[] = {a, s};
  return a.tape->record(std::move(C), in,
                        [ia, is](Tape& t, const Tensor& g) {
                          const Tensor& A = val(t, ia);
                          const double f = val(t, is)[0];
                          if (needs(t, ia)) {
                            Tensor& ga = t.grad_ref(ia);
                            for (std::size_t k = 0; k < g.size(); ++k) ga[k] += f * g[k];
                          }
                          if (needs(t, is)) {
                            double acc = 0.0;
                            for (std::size_t k = 0; k < g.size(); ++k) acc += g[k] * A[k];
                            t.grad_ref(is)[0] += acc;
                          }
                        },
                        "mul_scalar");
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols needs at least one input");
  const std::size_t rows = parts[0].rows();
  std::vector<std::size_t> ids, widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    require(p.rows() == rows, "concat_cols row mismatch");
    ids.push_back(p.id);
    widths.push_back(p.cols());
    total += p.cols();
  }
  Tensor C(rows, total);
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& P = p.value();
    for (std::size_t i = 0; i < rows; ++i)
      std::copy(P.row(i), P.row(i) + P.cols(), C.row(i) + off);
    off += P.cols();
  }
  return parts[0].tape->record(std::move(C), parts,
                               [ids, widths](Tape& t, const Tensor& g) {
                                 std::size_t off = 0;
                                 for (std::size_t q = 0; q < ids.size(); ++q) {
                                   if (needs(t, ids[q])) {
                                     Tensor& gp = t.grad_ref(ids[q]);
                                     for (std::size_t i = 0; i < g.rows(); ++i)
                                       for (std::size_t j = 0; j < widths[q]; ++j)
                                         gp(i, j) += g(i, off + j);
                                   }
                                   off += widths[q];
                                 }
                               },
                               "concat_cols");
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows needs at least one input");
  const std::size_t cols = parts[0].cols();
  std::vector<std::size_t> ids, heights;
  std::size_t total = 0;
  for (const Var& p : parts) {
    require(p.cols() == cols, "concat_rows column mismatch");
    ids.push_back(p.id);
    heights.push_back(p.rows());
    total += p.rows();
  }
  Tensor C(total, cols);
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& P = p.value();
    std::copy(P.data().begin(), P.data().end(), C.row(off));
    off += P.rows();
  }
  return parts[0].tape->record(std::move(C), parts,
                               [ids, heights, cols](Tape& t, const Tensor& g) {
                                 std::size_t off = 0;
                                 for (std::size_t q = 0; q < ids.size(); ++q) {
                                   if (needs(t, ids[q])) {
                                     Tensor& gp = t.grad_ref(ids[q]);
                                     const double* src = g.row(off);
                                     for (std::size_t k = 0; k < heights[q] * cols; ++k) gp[k] += src[k];
                                   }
                                   off += heights[q];
                                 }
                               },
                               "concat_rows");
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Tensor& A = a.value();
  require(begin + count <= A.cols(), "slice_cols out of range");
  Tensor C(A.rows(), count);
  for (std::size_t i = 0; i < A.rows(); ++i)
    std::copy(A.row(i) + begin, A.row(i) + begin + count, C.row(i));
  const std::size_t ia = a.id;
  const Var in[] = {a};
  return a.tape->record(std::move(C), in,
                        [ia, begin, count](Tape& t, const Tensor& g) {
                          Tensor& ga = t.grad_ref(ia);
                          for (std::size_t i = 0; i < g.rows(); ++i)
                            for (std::size_t j = 0; j < count; ++j) ga(i, begin + j) += g(i, j);
                        },
                        "slice_cols");
}

Var gather_rows(Var a, const Index& rows) {
  const Tensor& A = a.value();
  const std::size_t n = A.cols();
  Tensor C(rows->size(), n);
  for (std::size_t r = 0; r < rows->size(); ++r) {
    const std::uint32_t src = (*rows)[r];
    require(src < A.rows(), "gather_rows index out of range");
    std::copy(A.row(src), A.row(src) + n, C.row(r));
  }
  const std::size_t ia = a.id;
  const Var in[] = {a};
  return a.tape->record(std::move(C), in,
                        [ia, rows, n](Tape& t, const Tensor& g) {
                          Tensor& ga = t.grad_ref(ia);
                          for (std::size_t r = 0; r < rows->size(); ++r) {
                            double* dst = ga.row((*rows)[r]);
                            const double* src = g.row(r);
                            for (std::size_t j = 0; j < n; ++j) dst[j] += src[j];
                          }
                        },
                        "gather_rows");
}

Var reshape(Var a, std::size_t rows, std::size_t cols) {
  const Tensor& A = a.value();
  require(rows * cols == A.size(), "reshape size mismatch");
  Tensor C(rows, cols, A.values());
  const std::size_t ia = a.id;
  const Var in[] = {a};
  return a.tape->record(std::move(C), in,
                        [ia](Tape& t, const Tensor& g) {
                          Tensor& ga = t.grad_ref(ia);
                          for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
                        },
                        "reshape");
}

namespace {

Var segment_reduce(Var a, const Index& segment, std::size_t segments, bool average) {
  const Tensor& A = a.value();
  require(segment->size() == A.rows(), "segment ids must match the row count");
  const std::size_t n = A.cols();
  std::vector<double> inv(segments, 1.0);
  if (average) {
    std::vector<std::size_t> count(segments, 0);
    for (std::uint32_t s : *segment) {
      require(s < segments, "segment id out of range");
      ++count[s];
    }
    for (std::size_t s = 0; s < segments; ++s) inv[s] = count[s] ? 1.0 / count[s] : 0.0;
  }
  Tensor C(segments, n);
  for (std::size_t r = 0; r < A.rows(); ++r) {
    const std::uint32_t s = (*segment)[r];
    require(s < segments, "segment id out of range");
    double* dst = C.row(s);
    const double* src = A.row(r);
    for (std::size_t j = 0; j < n; ++j) dst[j] += src[j];
  }
  if (average)
    for (std::size_t s = 0; s < segments; ++s)
      for (std::size_t j = 0; j < n; ++j) C(s, j) *= inv[s];
  const std::size_t ia = a.id;
  const Var in[] = {a};
  return a.tape->record(std::move(C), in,
                        [ia, segment, n, inv = std::move(inv)](Tape& t, const Tensor& g) {
                          Tensor& ga = t.grad_ref(ia);
                          for (std::size_t r = 0; r < segment->size(); ++r) {
                            const std::uint32_t s = (*segment)[r];
                            const double* src = g.row(s);
                            double* dst = ga.row(r);
                            for (std::size_t j = 0; j < n; ++j) dst[j] += src[j] * inv[s];
                          }
                        },
                        average ? "segment_mean" : "segment_sum");
}

}  // namespace

Var segment_sum(Var a, const Index& segment, std::size_t segments) {
  return segment_reduce(a, segment, segments, false);
}

Var segment_mean(Var a, const Index& segment, std::size_t segments) {
  return segment_reduce(a, segment, segments, true);
}

Var segment_softmax(Var a, const Index& segment, std::size_t segments) {
  const Tensor& A = a.value();
  require(segment->size() == A.rows(), "segment ids must match the row count");
  const std::size_t n = A.cols();
  Tensor mx(segments, n, -std::numeric_limits<double>::infinity());
  for (std::size_t r = 0; r < A.rows(); ++r) {
    const std::uint32_t s = (*segment)[r];
    require(s < segments, "segment id out of range");
    for (std::size_t j = 0; j < n; ++j) mx(s, j) = std::max(mx(s, j), A(r, j));
  }
  Tensor C(A.rows(), n);
  Tensor denom(segments, n);
  for (std::size_t r = 0; r < A.rows(); ++r) {
    const std::uint32_t s = (*segment)[r];
    for (std::size_t j = 0; j < n; ++j) {
      C(r, j) = std::exp(A(r, j) - mx(s, j));
      denom(s, j) += C(r, j);
    }
  }
  for (std::size_t r = 0; r < A.rows(); ++r) {
    const std::uint32_t s = (*segment)[r];
    for (std::size_t j = 0; j < n; ++j) C(r, j) /= denom(s, j);
  }
  const std::size_t ia = a.id;
  const Var in[] = {a};
  return a.tape->record(std::move(C), in,
                        [ia, segment, segments, n, self = a.tape->size()](Tape& t, const Tensor& g) {
                          const Tensor& Y = val(t, self);
                          Tensor dot(segments, n);
                          for (std::size_t r = 0; r < segment->size(); ++r) {
                            const std::uint32_t s = (*segment)[r];
                            for (std::size_t j = 0; j < n; ++j) dot(s, j) += Y(r, j) * g(r, j);
                          }
                          Tensor& ga = t.grad_ref(ia);
                          for (std::size_t r = 0; r < segment->size(); ++r) {
                            const std::uint32_t s = (*segment)[r];
                            for (std::size_t j = 0; j < n; ++j)
                              ga(r, j) += Y(r, j) * (g(r, j) - dot(s, j));
                          }
                        },
                        "segment_softmax");
}

namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

// About twice as fast as std::tanh, absolute error below 1e-16.
double fast_tanh(double u) {
  const double e = std::exp(-2.0 * std::fabs(u));
  return std::copysign((1.0 - e) / (1.0 + e), u);
}

}  // namespace

Var gelu(Var a) {
  Tape& t = *a.tape;
  const Tensor& X = a.value();
  Tensor C(X.rows(), X.cols());
  const bool grad = t.requires_grad(a);
  Tensor D = grad ? Tensor(X.rows(), X.cols()) : Tensor();
  for (std::size_t k = 0; k < X.size(); ++k) {
    const double x = X[k];
    const double th = fast_tanh(kGeluC * (x + 0.044715 * x * x * x));
    C[k] = 0.5 * x * (1.0 + th);
    if (grad) D[k] = 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
  }
  const std::size_t ia = a.id;
  const Var in[] = {a};
  return t.record(std::move(C), in,
                  [ia, D = std::move(D)](Tape& tp, const Tensor& g) {
                    Tensor& ga = tp.grad_ref(ia);
                    for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * D[k];
                  },
                  "gelu");
}

Var sigmoid(Var a) {
  Tensor C = a.value();
  for (std::size_t k = 0; k < C.size(); ++k) C[k] = 1.0 / (1.0 + std::exp(-C[k]));
  return unary(a, std::move(C), [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

Var tanh(Var a) {
  Tensor C = a.value();
  for (std::size_t k = 0; k < C.size(); ++k) C[k] = fast_tanh(C[k]);
  return unary(a, std::move(C), [](double, double y) { return 1.0 - y * y; }, "tanh");
}

Var leaky_relu(Var a, double slope) {
  Tensor C = a.value();
  for (std::size_t k = 0; k < C.size(); ++k)
    if (C[k] < 0.0) C[k] *= slope;
  return unary(a, std::move(C), [slope](double x, double) { return x < 0.0 ? slope : 1.0; },
               "leaky_relu");
}

Var dropout(Var a, double rate, std::uint64_t seed, bool train) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ValidationError("dropout rate must lie in [0, 1)");
  if (!train || rate == 0.0) return a;
  const Tensor& A = a.value();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double keep = 1.0 / (1.0 - rate);
  std::vector<double> factor(A.size());
  for (double& f : factor) f = unit(rng) < rate ? 0.0 : keep;
  Tensor C = A;
  for (std::size_t k = 0; k < C.size(); ++k) C[k] *= factor[k];
  const std::size_t ia = a.id;
  const Var in[] = {a};
  return a.tape->record(std::move(C), in,
                        [ia, factor = std::move(factor)](Tape& t, const Tensor& g) {
                          Tensor& ga = t.grad_ref(ia);
                          for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * factor[k];
                        },
                        "dropout");
}

Var layer_norm(Var a, double eps) {
  const Tensor& A = a.value();
  const std::size_t m = A.rows(), n = A.cols();
  Tensor C(m, n);
  std::vector<double> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = A.row(i);
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += x[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) C(i, j) = (x[j] - mu) * inv_std[i];
  }
  const std::size_t ia = a.id;
  const Var in[] = {a};
  return a.tape->record(std::move(C), in,
                        [ia, m, n, inv_std = std::move(inv_std), self = a.tape->size()](
                            Tape& t, const Tensor& g) {
                          const Tensor& Y = val(t, self);
                          Tensor& ga = t.grad_ref(ia);
                          for (std::size_t i = 0; i < m; ++i) {
                            double gm = 0.0, gy = 0.0;
                            for (std::size_t j = 0; j < n; ++j) {
                              gm += g(i, j);
                              gy += g(i, j) * Y(i, j);
                            }
                            gm /= static_cast<double>(n);
                            gy /= static_cast<double>(n);
                            for (std::size_t j = 0; j < n; ++j)
                              ga(i, j) += inv_std[i] * (g(i, j) - gm - Y(i, j) * gy);
                          }
                        },
                        "layer_norm");
}

Var sum(Var a) {
  const Tensor& A = a.value();
  double s = 0.0;
  for (double x : A.data()) s += x;
  const std::size_t ia = a.id;
  const Var in[] = {a};
  return a.tape->record(Tensor::scalar(s), in,
                        [ia](Tape& t, const Tensor& g) {
                          Tensor& ga = t.grad_ref(ia);
                          for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += g[0];
                        },
                        "sum");
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  require(n > 0, "mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

namespace {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-6, std::abs(analytic) + std::abs(numeric));
}

}  // namespace

double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double h) {
  Tensor analytic;
  {
    Tape tape;
    Var in = tape.leaf(x);
    Var out = f(tape, in);
    tape.backward(out);
    analytic = tape.grad(in);
  }
  auto eval = [&](const Tensor& point) {
    Tape tape;
    Var in = tape.constant(point);
    return f(tape, in).value()[0];
  };
  double worst = 0.0;
  Tensor probe = x;
  for (std::size_t k = 0; k < x.size(); ++k) {
    probe[k] = x[k] + h;
    const double up = eval(probe);
    probe[k] = x[k] - h;
    const double down = eval(probe);
    probe[k] = x[k];
    worst = std::max(worst, relative_error(analytic[k], (up - down) / (2.0 * h)));
  }
  return worst;
}

double grad_check_parameters(ParameterStore& store, const std::function<Var(Tape&)>& f, double h) {
  store.zero_grad();
  {
    Tape tape;
    Var out = f(tape);
    tape.backward(out);
  }
  auto eval = [&] {
    Tape tape;
    return f(tape).value()[0];
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < store.size(); ++i) {
    Parameter& p = store[i];
    if (!p.trainable) continue;
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double orig = p.value[k];
      p.value[k] = orig + h;
      const double up = eval();
      p.value[k] = orig - h;
      const double down = eval();
      p.value[k] = orig;
      worst = std::max(worst, relative_error(p.grad[k], (up - down) / (2.0 * h)));
    }
  }
  return worst;
}

}  // namespace stugn::ad
