#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pathcast/csr.hpp"
#include "pathcast/tensor.hpp"

namespace pathcast {

using ValueId = int;
using ParamMap = std::map<std::string, Tensor>;
using GradientMap = std::map<std::string, Tensor>;

constexpr double kLogClamp = 1e-12;

// Reverse-mode tape over dense tensors. Nodes are appended in topological
// order and evaluated eagerly at creation; forward_eval() re-runs the whole
// tape, which is what the finite-difference oracle and the optimizer need
// after parameter values change in place.
class ComputeGraph {
public:
  enum class Op {
    kParam,
    kInput,
    kMatMul,
    kSpMM,
    kAdd,
    kAddRowwise,
    kMul,
    kScale,
    kSigmoid,
    kTanh,
    kRelu,
    kRowSoftmax,
    kLogClamped,
    kConcatRows,
    kGatherRows,
    kTranspose,
    kReshape,
    kReduceSum,
  };

  ValueId parameter(const std::string& name, Tensor init) {
    if (!init.all_finite()) {
      throw std::invalid_argument("parameter '" + name + "': non-finite values");
    }
    if (params_.count(name)) {
      throw std::invalid_argument("parameter '" + name + "' already registered");
    }
    ValueId id = push(Op::kParam, {}, std::move(init));
    nodes_[id].name = name;
    params_.emplace(name, id);
    return id;
  }

  ValueId input(Tensor v) {
    if (!v.all_finite()) {
      throw std::invalid_argument("input: non-finite values");
    }
    return push(Op::kInput, {}, std::move(v));
  }

  ValueId matmul(ValueId a, ValueId b) { return make(Op::kMatMul, {a, b}); }

  ValueId spmm(std::shared_ptr<const CsrMatrix> m, ValueId x) {
    ValueId id = make_deferred(Op::kSpMM, {x});
    nodes_[id].sparse = std::move(m);
    eval_node(id);
    return id;
  }

  ValueId add(ValueId a, ValueId b) { return make(Op::kAdd, {a, b}); }
  ValueId add_rowwise(ValueId x, ValueId row) { return make(Op::kAddRowwise, {x, row}); }
  ValueId mul(ValueId a, ValueId b) { return make(Op::kMul, {a, b}); }

  ValueId scale(ValueId a, double k) {
    ValueId id = make_deferred(Op::kScale, {a});
    nodes_[id].scale_k = k;
    eval_node(id);
    return id;
  }

  ValueId sigmoid(ValueId a) { return make(Op::kSigmoid, {a}); }
  ValueId tanh_op(ValueId a) { return make(Op::kTanh, {a}); }
  ValueId relu(ValueId a) { return make(Op::kRelu, {a}); }
  ValueId row_softmax(ValueId a) { return make(Op::kRowSoftmax, {a}); }
  ValueId log_clamped(ValueId a) { return make(Op::kLogClamped, {a}); }

  ValueId concat_rows(std::vector<ValueId> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
    return make(Op::kConcatRows, std::move(parts));
  }

  ValueId gather_rows(ValueId a, std::vector<std::size_t> rows) {
    if (rows.empty()) throw std::invalid_argument("gather_rows: no indices");
    ValueId id = make_deferred(Op::kGatherRows, {a});
    nodes_[id].gather = std::move(rows);
    eval_node(id);
    return id;
  }

  ValueId transpose(ValueId a) { return make(Op::kTranspose, {a}); }

  ValueId reshape(ValueId a, std::vector<std::size_t> shape) {
    ValueId id = make_deferred(Op::kReshape, {a});
    nodes_[id].reshape_to = std::move(shape);
    eval_node(id);
    return id;
  }

  ValueId reduce_sum(ValueId a) { return make(Op::kReduceSum, {a}); }

  const Tensor& value(ValueId id) const { return node(id).value; }

  std::size_t size() const { return nodes_.size(); }

  void set_root(ValueId id) {
    node(id);
    root_ = id;
  }

  ValueId root() const {
    if (root_ >= 0) return root_;
    if (nodes_.empty()) throw std::runtime_error("forward_eval: empty graph");
    return static_cast<ValueId>(nodes_.size()) - 1;
  }

  // Mutable access to a parameter leaf; invalidates cached node values until
  // the next forward_eval.
  Tensor& param_tensor(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) {
      throw std::invalid_argument("unknown parameter '" + name + "'");
    }
    forward_valid_ = false;
    return nodes_[it->second].value;
  }

  const std::map<std::string, ValueId>& parameters() const { return params_; }

  ParamMap parameter_values() const {
    ParamMap out;
    for (const auto& [name, id] : params_) out.emplace(name, nodes_[id].value);
    return out;
  }

  void set_parameter_values(const ParamMap& values) {
    for (const auto& [name, v] : values) {
      Tensor& t = param_tensor(name);
      if (!t.same_shape(v)) {
        throw std::invalid_argument("set_parameter_values: shape mismatch for '" + name + "'");
      }
      t = v;
    }
  }

  const Tensor& forward_eval() {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      Node& n = nodes_[i];
      if (n.op == Op::kParam || n.op == Op::kInput) {
        if (!n.value.all_finite()) {
          throw std::runtime_error("forward_eval: non-finite leaf value" +
                                   (n.name.empty() ? std::string() : " in '" + n.name + "'"));
        }
        continue;
      }
      eval_node(static_cast<ValueId>(i));
    }
    forward_valid_ = true;
    return nodes_[root()].value;
  }

  // Backward pass from a scalar root; returns one gradient per parameter
  // leaf, zero-filled for leaves the root does not depend on.
  GradientMap gradient(ValueId scalar_root) {
    const Node& r = node(scalar_root);
    if (r.value.numel() != 1) {
      throw std::invalid_argument("gradient: root is not a scalar, shape " + r.value.shape_str());
    }
    if (!forward_valid_) {
      throw std::runtime_error("gradient: forward pass is stale, call forward_eval first");
    }
    std::vector<Tensor> grads(nodes_.size());
    grads[scalar_root] = Tensor(r.value.shape());
    grads[scalar_root].fill(1.0);
    for (int i = scalar_root; i >= 0; --i) {
      if (grads[i].numel() == 0) continue;
      backward_node(i, grads);
    }
    GradientMap out;
    for (const auto& [name, id] : params_) {
      if (grads[id].numel() == 0) {
        out.emplace(name, Tensor(nodes_[id].value.shape()));
      } else {
        out.emplace(name, std::move(grads[id]));
      }
    }
    return out;
  }

private:
  struct Node {
    Op op;
    std::vector<ValueId> ins;
    Tensor value;
    std::string name;
    std::shared_ptr<const CsrMatrix> sparse;
    std::vector<std::size_t> gather;
    std::vector<std::size_t> reshape_to;
    double scale_k = 1.0;
  };

  const Node& node(ValueId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
      throw std::invalid_argument("invalid node id " + std::to_string(id));
    }
    return nodes_[id];
  }

  ValueId push(Op op, std::vector<ValueId> ins, Tensor value) {
    Node n;
    n.op = op;
    n.ins = std::move(ins);
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return static_cast<ValueId>(nodes_.size()) - 1;
  }

  ValueId make_deferred(Op op, std::vector<ValueId> ins) {
    for (ValueId i : ins) node(i);
    return push(op, std::move(ins), Tensor());
  }

  ValueId make(Op op, std::vector<ValueId> ins) {
    ValueId id = make_deferred(op, std::move(ins));
    eval_node(id);
    return id;
  }

  static const char* op_name(Op op) {
    switch (op) {
      case Op::kParam: return "param";
      case Op::kInput: return "input";
      case Op::kMatMul: return "matmul";
      case Op::kSpMM: return "spmm";
      case Op::kAdd: return "add";
      case Op::kAddRowwise: return "add_rowwise";
      case Op::kMul: return "mul";
      case Op::kScale: return "scale";
      case Op::kSigmoid: return "sigmoid";
      case Op::kTanh: return "tanh";
      case Op::kRelu: return "relu";
      case Op::kRowSoftmax: return "row_softmax";
      case Op::kLogClamped: return "log";
      case Op::kConcatRows: return "concat_rows";
      case Op::kGatherRows: return "gather_rows";
      case Op::kTranspose: return "transpose";
      case Op::kReshape: return "reshape";
      case Op::kReduceSum: return "reduce_sum";
    }
    return "?";
  }

  [[noreturn]] void shape_error(Op op, const std::string& detail) const {
    throw std::invalid_argument(std::string(op_name(op)) + ": " + detail);
  }

  void eval_node(ValueId id) {
    Node& n = nodes_[id];
    switch (n.op) {
      case Op::kParam:
      case Op::kInput:
        break;
      case Op::kMatMul: {
        const Tensor& a = nodes_[n.ins[0]].value;
        const Tensor& b = nodes_[n.ins[1]].value;
        if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
          shape_error(n.op, "incompatible shapes " + a.shape_str() + " and " + b.shape_str());
        }
        const std::size_t m = a.rows(), k = a.cols(), p = b.cols();
        Tensor out({m, p});
        for (std::size_t i = 0; i < m; ++i) {
          double* oi = out.data() + i * p;
          const double* ai = a.data() + i * k;
          for (std::size_t t = 0; t < k; ++t) {
            const double av = ai[t];
            if (av == 0.0) continue;
            const double* bt = b.data() + t * p;
            for (std::size_t j = 0; j < p; ++j) oi[j] += av * bt[j];
          }
        }
        n.value = std::move(out);
        break;
      }
      case Op::kSpMM: {
        const Tensor& x = nodes_[n.ins[0]].value;
        if (x.rank() != 2 || x.rows() != n.sparse->size()) {
          shape_error(n.op, "operand shape " + x.shape_str() + " does not match matrix size " +
                                std::to_string(n.sparse->size()));
        }
        n.value = n.sparse->multiply(x);
        break;
      }
      case Op::kAdd: {
        const Tensor& a = nodes_[n.ins[0]].value;
        const Tensor& b = nodes_[n.ins[1]].value;
        if (!a.same_shape(b)) {
          shape_error(n.op, "shape mismatch " + a.shape_str() + " vs " + b.shape_str());
        }
        Tensor out = a;
        const double* bp = b.data();
        double* op_ = out.data();
        for (std::size_t i = 0; i < out.numel(); ++i) op_[i] += bp[i];
        n.value = std::move(out);
        break;
      }
      case Op::kAddRowwise: {
        const Tensor& x = nodes_[n.ins[0]].value;
        const Tensor& row = nodes_[n.ins[1]].value;
        if (x.rank() != 2 || row.rank() != 2 || row.rows() != 1 || row.cols() != x.cols()) {
          shape_error(n.op, "expected [m x n] and [1 x n], got " + x.shape_str() + " and " +
                                row.shape_str());
        }
        Tensor out = x;
        for (std::size_t i = 0; i < x.rows(); ++i) {
          double* oi = out.data() + i * x.cols();
          for (std::size_t j = 0; j < x.cols(); ++j) oi[j] += row.data()[j];
        }
        n.value = std::move(out);
        break;
      }
      case Op::kMul: {
        const Tensor& a = nodes_[n.ins[0]].value;
        const Tensor& b = nodes_[n.ins[1]].value;
        if (!a.same_shape(b)) {
          shape_error(n.op, "shape mismatch " + a.shape_str() + " vs " + b.shape_str());
        }
        Tensor out = a;
        for (std::size_t i = 0; i < out.numel(); ++i) out.data()[i] *= b.data()[i];
        n.value = std::move(out);
        break;
      }
      case Op::kScale: {
        Tensor out = nodes_[n.ins[0]].value;
        for (std::size_t i = 0; i < out.numel(); ++i) out.data()[i] *= n.scale_k;
        n.value = std::move(out);
        break;
      }
      case Op::kSigmoid: {
        Tensor out = nodes_[n.ins[0]].value;
        for (std::size_t i = 0; i < out.numel(); ++i) {
          const double x = out.data()[i];
          out.data()[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                   : std::exp(x) / (1.0 + std::exp(x));
        }
        n.value = std::move(out);
        break;
      }
      case Op::kTanh: {
        Tensor out = nodes_[n.ins[0]].value;
        for (std::size_t i = 0; i < out.numel(); ++i) out.data()[i] = std::tanh(out.data()[i]);
        n.value = std::move(out);
        break;
      }
      case Op::kRelu: {
        Tensor out = nodes_[n.ins[0]].value;
        for (std::size_t i = 0; i < out.numel(); ++i) {
          if (out.data()[i] < 0.0) out.data()[i] = 0.0;
        }
        n.value = std::move(out);
        break;
      }
      case Op::kRowSoftmax: {
        const Tensor& x = nodes_[n.ins[0]].value;
        if (x.rank() != 2) shape_error(n.op, "expected a matrix, got " + x.shape_str());
        Tensor out = x;
        const std::size_t c = x.cols();
        for (std::size_t i = 0; i < x.rows(); ++i) {
          double* row = out.data() + i * c;
          double mx = row[0];
          for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
          double sum = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
          }
          for (std::size_t j = 0; j < c; ++j) row[j] /= sum;
        }
        n.value = std::move(out);
        break;
      }
      case Op::kLogClamped: {
        Tensor out = nodes_[n.ins[0]].value;
        for (std::size_t i = 0; i < out.numel(); ++i) {
          out.data()[i] = std::log(std::max(out.data()[i], kLogClamp));
        }
        n.value = std::move(out);
        break;
      }
      case Op::kConcatRows: {
        std::size_t rows = 0;
        const std::size_t cols = nodes_[n.ins[0]].value.cols();
        for (ValueId in : n.ins) {
          const Tensor& t = nodes_[in].value;
          if (t.rank() != 2 || t.cols() != cols) {
            shape_error(n.op, "column mismatch, " + t.shape_str());
          }
          rows += t.rows();
        }
        Tensor out({rows, cols});
        std::size_t r0 = 0;
        for (ValueId in : n.ins) {
          const Tensor& t = nodes_[in].value;
          std::copy(t.data(), t.data() + t.numel(), out.data() + r0 * cols);
          r0 += t.rows();
        }
        n.value = std::move(out);
        break;
      }
      case Op::kGatherRows: {
        const Tensor& a = nodes_[n.ins[0]].value;
        if (a.rank() != 2) shape_error(n.op, "expected a matrix, got " + a.shape_str());
        Tensor out({n.gather.size(), a.cols()});
        for (std::size_t i = 0; i < n.gather.size(); ++i) {
          if (n.gather[i] >= a.rows()) {
            shape_error(n.op, "row index " + std::to_string(n.gather[i]) + " out of range");
          }
          std::copy(a.data() + n.gather[i] * a.cols(), a.data() + (n.gather[i] + 1) * a.cols(),
                    out.data() + i * a.cols());
        }
        n.value = std::move(out);
        break;
      }
      case Op::kTranspose: {
        const Tensor& a = nodes_[n.ins[0]].value;
        if (a.rank() != 2) shape_error(n.op, "expected a matrix, got " + a.shape_str());
        Tensor out({a.cols(), a.rows()});
        for (std::size_t i = 0; i < a.rows(); ++i) {
          for (std::size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
        }
        n.value = std::move(out);
        break;
      }
      case Op::kReshape: {
        const Tensor& a = nodes_[n.ins[0]].value;
        Tensor out(n.reshape_to, a.values());
        n.value = std::move(out);
        break;
      }
      case Op::kReduceSum: {
        const Tensor& a = nodes_[n.ins[0]].value;
        double s = 0.0;
        for (std::size_t i = 0; i < a.numel(); ++i) s += a.data()[i];
        n.value = Tensor({1, 1}, {s});
        break;
      }
    }
  }

  Tensor& grad_of(ValueId id, std::vector<Tensor>& grads) {
    if (grads[id].numel() == 0) grads[id] = Tensor(nodes_[id].value.shape());
    return grads[id];
  }

  void backward_node(ValueId id, std::vector<Tensor>& grads) {
    const Node& n = nodes_[id];
    const Tensor& g = grads[id];
    switch (n.op) {
      case Op::kParam:
      case Op::kInput:
        break;
      case Op::kMatMul: {
        const Tensor& a = nodes_[n.ins[0]].value;
        const Tensor& b = nodes_[n.ins[1]].value;
        Tensor& ga = grad_of(n.ins[0], grads);
        Tensor& gb = grad_of(n.ins[1], grads);
        const std::size_t m = a.rows(), k = a.cols(), p = b.cols();
        // dA += G * B^T
        for (std::size_t i = 0; i < m; ++i) {
          const double* gi = g.data() + i * p;
          double* gai = ga.data() + i * k;
          for (std::size_t t = 0; t < k; ++t) {
            const double* bt = b.data() + t * p;
            double s = 0.0;
            for (std::size_t j = 0; j < p; ++j) s += gi[j] * bt[j];
            gai[t] += s;
          }
        }
        // dB += A^T * G
        for (std::size_t i = 0; i < m; ++i) {
          const double* ai = a.data() + i * k;
          const double* gi = g.data() + i * p;
          for (std::size_t t = 0; t < k; ++t) {
            const double av = ai[t];
            if (av == 0.0) continue;
            double* gbt = gb.data() + t * p;
            for (std::size_t j = 0; j < p; ++j) gbt[j] += av * gi[j];
          }
        }
        break;
      }
      case Op::kSpMM: {
        Tensor gx = n.sparse->multiply_transpose(g);
        Tensor& ga = grad_of(n.ins[0], grads);
        for (std::size_t i = 0; i < gx.numel(); ++i) ga.data()[i] += gx.data()[i];
        break;
      }
      case Op::kAdd: {
        for (int s = 0; s < 2; ++s) {
          Tensor& gi = grad_of(n.ins[s], grads);
          for (std::size_t i = 0; i < g.numel(); ++i) gi.data()[i] += g.data()[i];
        }
        break;
      }
      case Op::kAddRowwise: {
        Tensor& gx = grad_of(n.ins[0], grads);
        for (std::size_t i = 0; i < g.numel(); ++i) gx.data()[i] += g.data()[i];
        Tensor& gr = grad_of(n.ins[1], grads);
        const std::size_t c = n.value.cols();
        for (std::size_t i = 0; i < n.value.rows(); ++i) {
          const double* gi = g.data() + i * c;
          for (std::size_t j = 0; j < c; ++j) gr.data()[j] += gi[j];
        }
        break;
      }
      case Op::kMul: {
        const Tensor& a = nodes_[n.ins[0]].value;
        const Tensor& b = nodes_[n.ins[1]].value;
        Tensor& ga = grad_of(n.ins[0], grads);
        Tensor& gb = grad_of(n.ins[1], grads);
        for (std::size_t i = 0; i < g.numel(); ++i) {
          ga.data()[i] += g.data()[i] * b.data()[i];
          gb.data()[i] += g.data()[i] * a.data()[i];
        }
        break;
      }
      case Op::kScale: {
        Tensor& ga = grad_of(n.ins[0], grads);
        for (std::size_t i = 0; i < g.numel(); ++i) ga.data()[i] += n.scale_k * g.data()[i];
        break;
      }
      case Op::kSigmoid: {
        Tensor& ga = grad_of(n.ins[0], grads);
        for (std::size_t i = 0; i < g.numel(); ++i) {
          const double y = n.value.data()[i];
          ga.data()[i] += g.data()[i] * y * (1.0 - y);
        }
        break;
      }
      case Op::kTanh: {
        Tensor& ga = grad_of(n.ins[0], grads);
        for (std::size_t i = 0; i < g.numel(); ++i) {
          const double y = n.value.data()[i];
          ga.data()[i] += g.data()[i] * (1.0 - y * y);
        }
        break;
      }
      case Op::kRelu: {
        const Tensor& a = nodes_[n.ins[0]].value;
        Tensor& ga = grad_of(n.ins[0], grads);
        for (std::size_t i = 0; i < g.numel(); ++i) {
          if (a.data()[i] > 0.0) ga.data()[i] += g.data()[i];
        }
        break;
      }
      case Op::kRowSoftmax: {
        Tensor& ga = grad_of(n.ins[0], grads);
        const std::size_t c = n.value.cols();
        for (std::size_t i = 0; i < n.value.rows(); ++i) {
          const double* y = n.value.data() + i * c;
          const double* gi = g.data() + i * c;
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j) dot += gi[j] * y[j];
          double* gr = ga.data() + i * c;
          for (std::size_t j = 0; j < c; ++j) gr[j] += y[j] * (gi[j] - dot);
        }
        break;
      }
      case Op::kLogClamped: {
        const Tensor& a = nodes_[n.ins[0]].value;
        Tensor& ga = grad_of(n.ins[0], grads);
        for (std::size_t i = 0; i < g.numel(); ++i) {
          if (a.data()[i] > kLogClamp) ga.data()[i] += g.data()[i] / a.data()[i];
        }
        break;
      }
      case Op::kConcatRows: {
        const std::size_t c = n.value.cols();
        std::size_t r0 = 0;
        for (ValueId in : n.ins) {
          const std::size_t r = nodes_[in].value.rows();
          Tensor& gi = grad_of(in, grads);
          for (std::size_t k = 0; k < r * c; ++k) gi.data()[k] += g.data()[r0 * c + k];
          r0 += r;
        }
        break;
      }
      case Op::kGatherRows: {
        Tensor& ga = grad_of(n.ins[0], grads);
        const std::size_t c = n.value.cols();
        for (std::size_t i = 0; i < n.gather.size(); ++i) {
          double* dst = ga.data() + n.gather[i] * c;
          const double* src = g.data() + i * c;
          for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
        }
        break;
      }
      case Op::kTranspose: {
        Tensor& ga = grad_of(n.ins[0], grads);
        const std::size_t r = n.value.rows(), c = n.value.cols();
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < c; ++j) ga.at(j, i) += g.at(i, j);
        }
        break;
      }
      case Op::kReshape: {
        Tensor& ga = grad_of(n.ins[0], grads);
        for (std::size_t i = 0; i < g.numel(); ++i) ga.data()[i] += g.data()[i];
        break;
      }
      case Op::kReduceSum: {
        Tensor& ga = grad_of(n.ins[0], grads);
        const double gv = g.data()[0];
        for (std::size_t i = 0; i < ga.numel(); ++i) ga.data()[i] += gv;
        break;
      }
    }
  }

  std::vector<Node> nodes_;
  std::map<std::string, ValueId> params_;
  ValueId root_ = -1;
  bool forward_valid_ = true;
};

// Central-difference gradient oracle: (f(p+eps) - f(p-eps)) / (2 eps) per
// coordinate. Independent of the tape above by construction.
inline GradientMap finite_difference_gradient(
    const std::function<double(const ParamMap&)>& loss_fn, ParamMap params,
    double epsilon = 1e-5) {
  if (epsilon <= 0.0) throw std::invalid_argument("finite_difference_gradient: epsilon <= 0");
  GradientMap out;
  for (auto& [name, tensor] : params) {
    Tensor grad(tensor.shape());
    for (std::size_t i = 0; i < tensor.numel(); ++i) {
      const double saved = tensor.data()[i];
      tensor.data()[i] = saved + epsilon;
      const double hi = loss_fn(params);
      tensor.data()[i] = saved - epsilon;
      const double lo = loss_fn(params);
      tensor.data()[i] = saved;
      grad.data()[i] = (hi - lo) / (2.0 * epsilon);
    }
    out.emplace(name, std::move(grad));
  }
  return out;
}

// Worst-case |a - r| / max(rel * max(|a|, |r|), abs) over all coordinates of
// two gradient maps. A value <= 1 means every coordinate is inside the
// tolerance envelope; the gradient checks print this ratio directly.
inline double gradient_check_ratio(const GradientMap& analytic, const GradientMap& reference,
                                   double rel = 1e-4, double abs_tol = 1e-6,
                                   std::string* worst_name = nullptr) {
  double worst = 0.0;
  for (const auto& [name, a] : analytic) {
    auto it = reference.find(name);
    if (it == reference.end() || !it->second.same_shape(a)) {
      throw std::invalid_argument("gradient_check_ratio: maps disagree on '" + name + "'");
    }
    for (std::size_t i = 0; i < a.numel(); ++i) {
      const double x = a.data()[i], y = it->second.data()[i];
      const double tol = std::max(rel * std::max(std::abs(x), std::abs(y)), abs_tol);
      const double ratio = std::abs(x - y) / tol;
      if (ratio > worst) {
        worst = ratio;
        if (worst_name) *worst_name = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return worst;
}

}  // namespace pathcast
