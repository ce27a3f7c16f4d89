// Minimal reverse-mode automatic differentiation over dense Eigen matrices.
//
// A Graph records every operation applied to its Vars; backward() walks the
// record in reverse and accumulates gradients. Learned weights live in a
// ParameterStore and enter a graph as leaves; their gradients are added to
// Parameter::grad so several graphs (one per training example) can
// contribute to one optimizer step.
//
// Conventions: vectors are column vectors (d x 1); a sequence of n vectors
// is a d x n matrix with one element per column.
#ifndef QACOOP_AUTODIFF_H_
#define QACOOP_AUTODIFF_H_

#include <Eigen/Dense>

#include <deque>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace qacoop {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

class ParameterStore {
 public:
  // Zero-initialised parameter. Names must be unique.
  Parameter& add(const std::string& name, int rows, int cols);
  // Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  Parameter& add_uniform(const std::string& name, int rows, int cols, int fan_in, std::mt19937_64& rng);

  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  // Insertion order; stable across identical constructions.
  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;

  void zero_grad();
  std::size_t scalar_count() const;

 private:
  std::deque<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* g, int id) : graph_(g), id_(id) {}

  const Matrix& value() const;
  Graph* graph() const { return graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }
  int rows() const { return static_cast<int>(value().rows()); }
  int cols() const { return static_cast<int>(value().cols()); }
  double scalar() const { return value()(0, 0); }

 private:
  Graph* graph_ = nullptr;
  int id_ = -1;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Matrix value);
  // Inserts a parameter leaf. Repeated calls for the same parameter return
  // the same node.
  Var param(Parameter& p);

  const Matrix& value(Var v) const { return nodes_[v.id()].value; }
  // Gradient of the last backward() target w.r.t. v (empty if unreached).
  const Matrix& grad(Var v) const { return nodes_[v.id()].grad; }
  bool needs_grad(Var v) const { return nodes_[v.id()].needs_grad; }

  // Seeds d(target)/d(target) = 1 and propagates. target must be 1x1.
  // Parameter leaves add their gradient into Parameter::grad.
  void backward(Var target);

  std::size_t size() const { return nodes_.size(); }

  // Used by op implementations.
  using BackwardFn = std::function<void(Graph&, const Matrix& out_grad)>;
  Var push(Matrix value, std::initializer_list<Var> parents, BackwardFn fn);
  Var push(Matrix value, std::span<const Var> parents, BackwardFn fn);
  void accumulate(Var v, const Matrix& g);
  template <typename Expr>
  void accumulate_expr(Var v, const Expr& g) {
    Node& n = nodes_[v.id()];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
};

namespace ops {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var cwise_mul(Var a, Var b);
Var scale(Var a, double s);
// a (d x n) plus column b (d x 1) broadcast over columns.
Var add_bias(Var a, Var b);
Var matmul(Var a, Var b);
// a^T b
Var matmul_tn(Var a, Var b);
Var transpose(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(Var a, int start, int count);
Var slice_cols(Var a, int start, int count);
Var gather_cols(Var table, std::span<const int> columns);
Var mean_cols(Var a);
Var sum_all(Var a);
// <a, b> for equally shaped a and b, as a 1x1.
Var dot(Var a, Var b);
// Softmax of a column vector.
Var softmax(Var a);
Var log_softmax(Var a);
// Sum over columns t of -log softmax(logits[:, t])[targets[t]].
// Targets < 0 are masked out.
Var cross_entropy(Var logits, std::span<const int> targets);
// Column-wise mask blend: mask[j] ? fresh[:, j] : stale[:, j].
Var blend_cols(Var fresh, Var stale, std::span<const unsigned char> mask);

// Fused LSTM cell. Gate rows are ordered input, forget, cell, output.
// x: in x B, h/c: d x B, w_in: 4d x in, w_rec: 4d x d, bias: 4d x 1.
// Returns [h'; c'] stacked (2d x B).
Var lstm_cell(Var x, Var h, Var c, Var w_in, Var w_rec, Var bias);

}  // namespace ops

// Activations of one LSTM step, shared by the graph op and plain decoding.
struct LstmStep {
  Matrix in_gate, forget_gate, cell_gate, out_gate;
  Matrix c, h;
};
LstmStep lstm_forward(const Matrix& w_in, const Matrix& w_rec, const Matrix& bias, const Matrix& x,
                      const Matrix& h, const Matrix& c);

}  // namespace qacoop

#endif  // QACOOP_AUTODIFF_H_
