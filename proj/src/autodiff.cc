#include "qacoop/autodiff.h"

#include <cmath>
#include <stdexcept>

namespace qacoop {

Parameter& ParameterStore::add(const std::string& name, int rows, int cols) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
  index_[name] = params_.size();
  params_.push_back(Parameter{name, Matrix::Zero(rows, cols), Matrix::Zero(rows, cols)});
  return params_.back();
}

Parameter& ParameterStore::add_uniform(const std::string& name, int rows, int cols, int fan_in,
                                       std::mt19937_64& rng) {
  Parameter& p = add(name, rows, cols);
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = dist(rng);
  return p;
}

Parameter& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return params_[it->second];
}

const Parameter& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return params_[it->second];
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

const Matrix& Var::value() const { return graph_->value(*this); }

Var Graph::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), nullptr, nullptr, false});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::param(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var(this, it->second);
  nodes_.push_back(Node{p.value, Matrix(), nullptr, &p, true});
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_[&p] = id;
  return Var(this, id);
}

Var Graph::push(Matrix value, std::initializer_list<Var> parents, BackwardFn fn) {
  return push(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(fn));
}

Var Graph::push(Matrix value, std::span<const Var> parents, BackwardFn fn) {
  bool needs = false;
  for (const Var& p : parents) {
    if (p.graph() != this) throw std::invalid_argument("Var belongs to a different graph");
    needs = needs || nodes_[p.id()].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), Matrix(), needs ? std::move(fn) : nullptr, nullptr, needs});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Graph::accumulate(Var v, const Matrix& g) { accumulate_expr(v, g); }

void Graph::backward(Var target) {
  if (target.graph() != this) throw std::invalid_argument("backward target from another graph");
  Node& t = nodes_[target.id()];
  if (t.value.rows() != 1 || t.value.cols() != 1) throw std::invalid_argument("backward target must be 1x1");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  if (!t.needs_grad) return;
  t.grad = Matrix::Ones(1, 1);
  for (int id = target.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) continue;
    if (n.backward) {
      // Copy: the closure may accumulate into this node's parents only.
      const Matrix g = n.grad;
      n.backward(*this, g);
    } else if (n.param != nullptr) {
      n.param->grad += n.grad;
    }
  }
}

namespace ops {
namespace {

void check_same_shape(Var a, Var b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()));
  }
}

Matrix sigmoid_of(const Matrix& m) { return (1.0 + (-m.array()).exp()).inverse().matrix(); }

}  // namespace

Var add(Var a, Var b) {
  check_same_shape(a, b, "add");
  return a.graph()->push(a.value() + b.value(), {a, b}, [a, b](Graph& g, const Matrix& d) {
    g.accumulate(a, d);
    g.accumulate(b, d);
  });
}

Var sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  return a.graph()->push(a.value() - b.value(), {a, b}, [a, b](Graph& g, const Matrix& d) {
    g.accumulate(a, d);
    g.accumulate_expr(b, -d);
  });
}

Var cwise_mul(Var a, Var b) {
  check_same_shape(a, b, "cwise_mul");
  return a.graph()->push(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Graph& g, const Matrix& d) {
    g.accumulate_expr(a, d.cwiseProduct(g.value(b)));
    g.accumulate_expr(b, d.cwiseProduct(g.value(a)));
  });
}

Var scale(Var a, double s) {
  return a.graph()->push(a.value() * s, {a}, [a, s](Graph& g, const Matrix& d) { g.accumulate_expr(a, d * s); });
}

Var add_bias(Var a, Var b) {
  if (b.cols() != 1 || b.rows() != a.rows()) throw std::invalid_argument("add_bias: bias must be rows(a) x 1");
  Matrix out = a.value().colwise() + b.value().col(0);
  return a.graph()->push(std::move(out), {a, b}, [a, b](Graph& g, const Matrix& d) {
    g.accumulate(a, d);
    g.accumulate_expr(b, d.rowwise().sum());
  });
}

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " * " +
                                std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  return a.graph()->push(a.value() * b.value(), {a, b}, [a, b](Graph& g, const Matrix& d) {
    if (g.needs_grad(a)) g.accumulate_expr(a, d * g.value(b).transpose());
    if (g.needs_grad(b)) g.accumulate_expr(b, g.value(a).transpose() * d);
  });
}

Var matmul_tn(Var a, Var b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("matmul_tn: row mismatch");
  return a.graph()->push(a.value().transpose() * b.value(), {a, b}, [a, b](Graph& g, const Matrix& d) {
    if (g.needs_grad(a)) g.accumulate_expr(a, g.value(b) * d.transpose());
    if (g.needs_grad(b)) g.accumulate_expr(b, g.value(a) * d);
  });
}

Var transpose(Var a) {
  return a.graph()->push(a.value().transpose(), {a},
                         [a](Graph& g, const Matrix& d) { g.accumulate_expr(a, d.transpose()); });
}

Var tanh(Var a) {
  Matrix out = a.value().array().tanh().matrix();
  const int self = static_cast<int>(a.graph()->size());
  return a.graph()->push(std::move(out), {a}, [a, self](Graph& g, const Matrix& d) {
    const Matrix& y = g.value(Var(&g, self));
    g.accumulate_expr(a, (d.array() * (1.0 - y.array().square())).matrix());
  });
}

Var sigmoid(Var a) {
  Matrix out = sigmoid_of(a.value());
  const int self = static_cast<int>(a.graph()->size());
  return a.graph()->push(std::move(out), {a}, [a, self](Graph& g, const Matrix& d) {
    const Matrix& y = g.value(Var(&g, self));
    g.accumulate_expr(a, (d.array() * y.array() * (1.0 - y.array())).matrix());
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  const int cols = parts[0].cols();
  int rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  int at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  std::vector<Var> keep(parts.begin(), parts.end());
  return parts[0].graph()->push(std::move(out), parts, [keep](Graph& g, const Matrix& d) {
    int off = 0;
    for (const Var& p : keep) {
      const int r = static_cast<int>(g.value(p).rows());
      if (g.needs_grad(p)) g.accumulate_expr(p, d.middleRows(off, r));
      off += r;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const int rows = parts[0].rows();
  int cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  int at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  std::vector<Var> keep(parts.begin(), parts.end());
  return parts[0].graph()->push(std::move(out), parts, [keep](Graph& g, const Matrix& d) {
    int off = 0;
    for (const Var& p : keep) {
      const int c = static_cast<int>(g.value(p).cols());
      if (g.needs_grad(p)) g.accumulate_expr(p, d.middleCols(off, c));
      off += c;
    }
  });
}

Var slice_rows(Var a, int start, int count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw std::out_of_range("slice_rows");
  return a.graph()->push(a.value().middleRows(start, count), {a}, [a, start, count](Graph& g, const Matrix& d) {
    Matrix full = Matrix::Zero(g.value(a).rows(), g.value(a).cols());
    full.middleRows(start, count) = d;
    g.accumulate(a, full);
  });
}

Var slice_cols(Var a, int start, int count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw std::out_of_range("slice_cols");
  return a.graph()->push(a.value().middleCols(start, count), {a}, [a, start, count](Graph& g, const Matrix& d) {
    Matrix full = Matrix::Zero(g.value(a).rows(), g.value(a).cols());
    full.middleCols(start, count) = d;
    g.accumulate(a, full);
  });
}

Var gather_cols(Var table, std::span<const int> columns) {
  const Matrix& t = table.value();
  Matrix out(t.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (columns[j] < 0 || columns[j] >= t.cols()) throw std::out_of_range("gather_cols: index");
    out.col(static_cast<Eigen::Index>(j)) = t.col(columns[j]);
  }
  std::vector<int> idx(columns.begin(), columns.end());
  return table.graph()->push(std::move(out), {table}, [table, idx](Graph& g, const Matrix& d) {
    Matrix full = Matrix::Zero(g.value(table).rows(), g.value(table).cols());
    for (std::size_t j = 0; j < idx.size(); ++j) full.col(idx[j]) += d.col(static_cast<Eigen::Index>(j));
    g.accumulate(table, full);
  });
}

Var mean_cols(Var a) {
  const double n = static_cast<double>(a.cols());
  if (a.cols() == 0) throw std::invalid_argument("mean_cols: empty");
  return a.graph()->push(a.value().rowwise().mean(), {a}, [a, n](Graph& g, const Matrix& d) {
    g.accumulate_expr(a, d.replicate(1, static_cast<Eigen::Index>(n)) / n);
  });
}

Var sum_all(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.graph()->push(std::move(out), {a}, [a](Graph& g, const Matrix& d) {
    g.accumulate_expr(a, Matrix::Constant(g.value(a).rows(), g.value(a).cols(), d(0, 0)));
  });
}

Var dot(Var a, Var b) {
  check_same_shape(a, b, "dot");
  Matrix out(1, 1);
  out(0, 0) = a.value().cwiseProduct(b.value()).sum();
  return a.graph()->push(std::move(out), {a, b}, [a, b](Graph& g, const Matrix& d) {
    g.accumulate_expr(a, g.value(b) * d(0, 0));
    g.accumulate_expr(b, g.value(a) * d(0, 0));
  });
}

Var softmax(Var a) {
  if (a.cols() != 1) throw std::invalid_argument("softmax: expects a column vector");
  const Matrix& x = a.value();
  Matrix e = (x.array() - x.maxCoeff()).exp().matrix();
  e /= e.sum();
  const int self = static_cast<int>(a.graph()->size());
  return a.graph()->push(std::move(e), {a}, [a, self](Graph& g, const Matrix& d) {
    const Matrix& p = g.value(Var(&g, self));
    const double inner = p.cwiseProduct(d).sum();
    g.accumulate_expr(a, (p.array() * (d.array() - inner)).matrix());
  });
}

Var log_softmax(Var a) {
  if (a.cols() != 1) throw std::invalid_argument("log_softmax: expects a column vector");
  const Matrix& x = a.value();
  const double m = x.maxCoeff();
  const double lse = m + std::log((x.array() - m).exp().sum());
  Matrix out = (x.array() - lse).matrix();
  const int self = static_cast<int>(a.graph()->size());
  return a.graph()->push(std::move(out), {a}, [a, self](Graph& g, const Matrix& d) {
    const Matrix p = g.value(Var(&g, self)).array().exp().matrix();
    g.accumulate_expr(a, d - p * d.sum());
  });
}

Var cross_entropy(Var logits, std::span<const int> targets) {
  const Matrix& x = logits.value();
  if (static_cast<std::size_t>(x.cols()) != targets.size()) {
    throw std::invalid_argument("cross_entropy: " + std::to_string(x.cols()) + " steps vs " +
                                std::to_string(targets.size()) + " targets");
  }
  Matrix probs(x.rows(), x.cols());
  double total = 0.0;
  for (Eigen::Index t = 0; t < x.cols(); ++t) {
    const double m = x.col(t).maxCoeff();
    probs.col(t) = (x.col(t).array() - m).exp().matrix();
    const double z = probs.col(t).sum();
    probs.col(t) /= z;
    const int target = targets[static_cast<std::size_t>(t)];
    if (target < 0) continue;
    if (target >= x.rows()) throw std::out_of_range("cross_entropy: target index");
    total -= x(target, t) - m - std::log(z);
  }
  Matrix out(1, 1);
  out(0, 0) = total;
  std::vector<int> tg(targets.begin(), targets.end());
  return logits.graph()->push(std::move(out), {logits},
                              [logits, tg, probs = std::move(probs)](Graph& g, const Matrix& d) {
                                Matrix grad = probs;
                                for (std::size_t t = 0; t < tg.size(); ++t) {
                                  const auto c = static_cast<Eigen::Index>(t);
                                  if (tg[t] < 0) {
                                    grad.col(c).setZero();
                                  } else {
                                    grad(tg[t], c) -= 1.0;
                                  }
                                }
                                g.accumulate_expr(logits, grad * d(0, 0));
                              });
}

Var blend_cols(Var fresh, Var stale, std::span<const unsigned char> mask) {
  check_same_shape(fresh, stale, "blend_cols");
  if (mask.size() != static_cast<std::size_t>(fresh.cols())) throw std::invalid_argument("blend_cols: mask size");
  Matrix out = stale.value();
  std::vector<unsigned char> m(mask.begin(), mask.end());
  for (std::size_t j = 0; j < m.size(); ++j) {
    if (m[j]) out.col(static_cast<Eigen::Index>(j)) = fresh.value().col(static_cast<Eigen::Index>(j));
  }
  return fresh.graph()->push(std::move(out), {fresh, stale}, [fresh, stale, m](Graph& g, const Matrix& d) {
    Matrix df = Matrix::Zero(d.rows(), d.cols());
    Matrix ds = d;
    for (std::size_t j = 0; j < m.size(); ++j) {
      if (!m[j]) continue;
      const auto c = static_cast<Eigen::Index>(j);
      df.col(c) = d.col(c);
      ds.col(c).setZero();
    }
    g.accumulate(fresh, df);
    g.accumulate(stale, ds);
  });
}

Var lstm_cell(Var x, Var h, Var c, Var w_in, Var w_rec, Var bias) {
  const int d = h.rows();
  if (c.rows() != d || w_rec.rows() != 4 * d || w_rec.cols() != d || w_in.rows() != 4 * d ||
      w_in.cols() != x.rows() || bias.rows() != 4 * d || x.cols() != h.cols() || c.cols() != h.cols()) {
    throw std::invalid_argument("lstm_cell: inconsistent shapes");
  }
  LstmStep s = lstm_forward(w_in.value(), w_rec.value(), bias.value(), x.value(), h.value(), c.value());
  Matrix out(2 * d, h.cols());
  out.topRows(d) = s.h;
  out.bottomRows(d) = s.c;
  return x.graph()->push(std::move(out), {x, h, c, w_in, w_rec, bias},
                         [x, h, c, w_in, w_rec, bias, d, s = std::move(s)](Graph& g, const Matrix& grad) {
                           const auto dh = grad.topRows(d).array();
                           const auto dc_out = grad.bottomRows(d).array();
                           const Eigen::ArrayXXd tc = s.c.array().tanh();
                           const Eigen::ArrayXXd dc = dc_out + dh * s.out_gate.array() * (1.0 - tc.square());
                           Matrix dz(4 * d, grad.cols());
                           dz.middleRows(0, d) = (dc * s.cell_gate.array() * s.in_gate.array() *
                                                  (1.0 - s.in_gate.array()))
                                                     .matrix();
                           dz.middleRows(d, d) = (dc * g.value(c).array() * s.forget_gate.array() *
                                                  (1.0 - s.forget_gate.array()))
                                                     .matrix();
                           dz.middleRows(2 * d, d) =
                               (dc * s.in_gate.array() * (1.0 - s.cell_gate.array().square())).matrix();
                           dz.middleRows(3 * d, d) =
                               (dh * tc * s.out_gate.array() * (1.0 - s.out_gate.array())).matrix();
                           if (g.needs_grad(w_in)) g.accumulate_expr(w_in, dz * g.value(x).transpose());
                           if (g.needs_grad(w_rec)) g.accumulate_expr(w_rec, dz * g.value(h).transpose());
                           g.accumulate_expr(bias, dz.rowwise().sum());
                           if (g.needs_grad(x)) g.accumulate_expr(x, g.value(w_in).transpose() * dz);
                           if (g.needs_grad(h)) g.accumulate_expr(h, g.value(w_rec).transpose() * dz);
                           g.accumulate_expr(c, (dc * s.forget_gate.array()).matrix());
                         });
}

}  // namespace ops

LstmStep lstm_forward(const Matrix& w_in, const Matrix& w_rec, const Matrix& bias, const Matrix& x, const Matrix& h,
                      const Matrix& c) {
  const auto d = h.rows();
  Matrix z = w_in * x + w_rec * h;
  z.colwise() += bias.col(0);
  LstmStep s;
  auto sig = [](const Matrix& m) -> Matrix { return (1.0 + (-m.array()).exp()).inverse().matrix(); };
  s.in_gate = sig(z.middleRows(0, d));
  s.forget_gate = sig(z.middleRows(d, d));
  s.cell_gate = z.middleRows(2 * d, d).array().tanh().matrix();
  s.out_gate = sig(z.middleRows(3 * d, d));
  s.c = (s.forget_gate.array() * c.array() + s.in_gate.array() * s.cell_gate.array()).matrix();
  s.h = (s.out_gate.array() * s.c.array().tanh()).matrix();
  return s;
}

}  // namespace qacoop
