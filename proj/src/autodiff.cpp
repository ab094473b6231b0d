#include "brgcn/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "brgcn/errors.hpp"

namespace brgcn {

// ---------------------------------------------------------------- parameters

Parameter& ParameterSet::add(std::string name, Tensor init) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = std::move(init);
  p->grad = Tensor(p->value.shape());
  index_.emplace(std::move(name), params_.size());
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter* ParameterSet::find(std::string_view name) {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : params_[it->second].get();
}

const Parameter* ParameterSet::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : params_[it->second].get();
}

Parameter& ParameterSet::at(std::string_view name) {
  Parameter* p = find(name);
  if (!p) throw ConfigError("unknown parameter '" + std::string(name) + "'");
  return *p;
}

const Parameter& ParameterSet::at(std::string_view name) const {
  const Parameter* p = find(name);
  if (!p) throw ConfigError("unknown parameter '" + std::string(name) + "'");
  return *p;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

std::size_t ParameterSet::num_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

std::vector<Parameter*> ParameterSet::pointers() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

// ---------------------------------------------------------------------- tape

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value) { return record("constant", std::move(value), {}, nullptr); }

Var Tape::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  if (!p.value.all_finite()) throw NumericError("parameter '" + p.name + "' holds a non-finite value");
  Node n;
  n.op = "param:" + p.name;
  n.value = p.value;
  n.needs_grad = p.requires_grad;
  n.param = &p;
  nodes_.push_back(std::move(n));
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string_view op, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
}

Var Tape::record(std::string_view op, Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  if (!value.all_finite()) throw NumericError(std::string(op) + " produced a non-finite value");
  Node n;
  n.op = std::string(op);
  n.value = std::move(value);
  for (const Var& v : inputs) {
    if (&v.tape() != this) throw PreconditionError(std::string(op) + ": inputs recorded on another tape");
    n.needs_grad = n.needs_grad || nodes_[v.id()].needs_grad;
  }
  if (n.needs_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.grad_ready) {
    n.grad = Tensor(n.value.shape());
    n.grad_ready = true;
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw PreconditionError("backward: loss recorded on another tape");
  if (loss.value().size() != 1) throw DimensionError("backward: loss must be a single value, got " + shape_str(loss.shape()));
  grad(loss.id())[0] += 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad_ready && n.backward) n.backward(*this, id);
  }
  for (Node& n : nodes_) {
    if (!n.param || !n.grad_ready || !n.needs_grad) continue;
    Parameter& p = *n.param;
    if (p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape());
    for (std::size_t k = 0; k < p.grad.size(); ++k) p.grad[k] += n.grad[k];
  }
}

// ----------------------------------------------------------------------- ops

namespace ad {
namespace {

enum class Bcast { Same, Scalar, Row };

Shape broadcast_shape(const Tensor& a, const Tensor& b, std::string_view op) {
  if (a.shape() == b.shape()) return a.shape();
  if (b.size() == 1) return a.shape();
  if (a.size() == 1) return b.shape();
  if (a.rank() == 2 && b.rank() == 1 && b.size() == a.cols()) return a.shape();
  if (b.rank() == 2 && a.rank() == 1 && a.size() == b.cols()) return b.shape();
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                       shape_str(b.shape()));
}

Bcast classify(const Tensor& t, const Shape& out) {
  if (t.shape() == out) return Bcast::Same;
  if (t.size() == 1) return Bcast::Scalar;
  return Bcast::Row;
}

inline std::size_t bidx(Bcast m, std::size_t k, std::size_t cols) {
  switch (m) {
    case Bcast::Same: return k;
    case Bcast::Scalar: return 0;
    case Bcast::Row: return k % cols;
  }
  return k;
}

}  // namespace

Var add(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  Shape out = broadcast_shape(A, B, "add");
  const Bcast ma = classify(A, out), mb = classify(B, out);
  Tensor y(out);
  const std::size_t c = y.cols();
  for (std::size_t k = 0; k < y.size(); ++k) y[k] = A[bidx(ma, k, c)] + B[bidx(mb, k, c)];
  return a.tape().record("add", std::move(y), {a, b}, [ia = a.id(), ib = b.id(), ma, mb, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(ia)) {
      Tensor& ga = t.grad(ia);
      for (std::size_t k = 0; k < g.size(); ++k) ga[bidx(ma, k, c)] += g[k];
    }
    if (t.needs_grad(ib)) {
      Tensor& gb = t.grad(ib);
      for (std::size_t k = 0; k < g.size(); ++k) gb[bidx(mb, k, c)] += g[k];
    }
  });
}

Var sub(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  Shape out = broadcast_shape(A, B, "sub");
  const Bcast ma = classify(A, out), mb = classify(B, out);
  Tensor y(out);
  const std::size_t c = y.cols();
  for (std::size_t k = 0; k < y.size(); ++k) y[k] = A[bidx(ma, k, c)] - B[bidx(mb, k, c)];
  return a.tape().record("sub", std::move(y), {a, b}, [ia = a.id(), ib = b.id(), ma, mb, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(ia)) {
      Tensor& ga = t.grad(ia);
      for (std::size_t k = 0; k < g.size(); ++k) ga[bidx(ma, k, c)] += g[k];
    }
    if (t.needs_grad(ib)) {
      Tensor& gb = t.grad(ib);
      for (std::size_t k = 0; k < g.size(); ++k) gb[bidx(mb, k, c)] -= g[k];
    }
  });
}

Var mul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  Shape out = broadcast_shape(A, B, "mul");
  const Bcast ma = classify(A, out), mb = classify(B, out);
  Tensor y(out);
  const std::size_t c = y.cols();
  for (std::size_t k = 0; k < y.size(); ++k) y[k] = A[bidx(ma, k, c)] * B[bidx(mb, k, c)];
  return a.tape().record("mul", std::move(y), {a, b}, [ia = a.id(), ib = b.id(), ma, mb, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& A = t.value(ia);
    const Tensor& B = t.value(ib);
    if (t.needs_grad(ia)) {
      Tensor& ga = t.grad(ia);
      for (std::size_t k = 0; k < g.size(); ++k) ga[bidx(ma, k, c)] += g[k] * B[bidx(mb, k, c)];
    }
    if (t.needs_grad(ib)) {
      Tensor& gb = t.grad(ib);
      for (std::size_t k = 0; k < g.size(); ++k) gb[bidx(mb, k, c)] += g[k] * A[bidx(ma, k, c)];
    }
  });
}

Var scale(Var a, double c) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t k = 0; k < x.size(); ++k) y[k] = c * x[k];
  return a.tape().record("scale", std::move(y), {a}, [ia = a.id(), c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t k = 0; k < g.size(); ++k) ga[k] += c * g[k];
  });
}

Var neg(Var a) { return scale(a, -1.0); }

Var matmul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() == 0 || B.rank() == 0 || (A.rank() == 1 && B.rank() == 1)) {
    throw DimensionError("matmul: unsupported ranks " + shape_str(A.shape()) + " x " + shape_str(B.shape()));
  }
  const std::size_t m = A.rows(), k = A.cols();
  const std::size_t kb = B.rank() == 2 ? B.rows() : B.size();
  const std::size_t n = B.rank() == 2 ? B.cols() : 1;
  if (k != kb) {
    throw DimensionError("matmul: inner dimensions differ " + shape_str(A.shape()) + " x " + shape_str(B.shape()));
  }
  Shape out;
  if (A.rank() == 2 && B.rank() == 2) out = {m, n};
  else if (A.rank() == 2) out = {m};
  else out = {n};
  Tensor y(out);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) y[i * n + j] += av * B[p * n + j];
    }
  }
  return a.tape().record("matmul", std::move(y), {a, b}, [ia = a.id(), ib = b.id(), m, k, n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& A = t.value(ia);
    const Tensor& B = t.value(ib);
    if (t.needs_grad(ia)) {
      Tensor& ga = t.grad(ia);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * B[p * n + j];
          ga[i * k + p] += s;
        }
    }
    if (t.needs_grad(ib)) {
      Tensor& gb = t.grad(ib);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          if (av == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * g[i * n + j];
        }
    }
  });
}

Var transpose(Var a) {
  const Tensor& x = a.value();
  if (x.rank() != 2) throw DimensionError("transpose: expected a matrix, got " + shape_str(x.shape()));
  const std::size_t r = x.rows(), c = x.cols();
  Tensor y(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[j * r + i] = x[i * c + j];
  return a.tape().record("transpose", std::move(y), {a}, [ia = a.id(), r, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
  });
}

Var dot(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() != 1 || B.rank() != 1 || A.size() != B.size()) {
    throw DimensionError("dot: expected equal-length vectors, got " + shape_str(A.shape()) + " and " +
                         shape_str(B.shape()));
  }
  double s = 0.0;
  for (std::size_t k = 0; k < A.size(); ++k) s += A[k] * B[k];
  return a.tape().record("dot", Tensor::scalar(s), {a, b}, [ia = a.id(), ib = b.id()](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    const Tensor& A = t.value(ia);
    const Tensor& B = t.value(ib);
    if (t.needs_grad(ia)) {
      Tensor& ga = t.grad(ia);
      for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += g * B[k];
    }
    if (t.needs_grad(ib)) {
      Tensor& gb = t.grad(ib);
      for (std::size_t k = 0; k < gb.size(); ++k) gb[k] += g * A[k];
    }
  });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const std::size_t rank = parts[0].value().rank();
  std::vector<std::size_t> ids;
  ids.reserve(parts.size());
  for (const Var& v : parts) {
    if (v.value().rank() != rank) throw DimensionError("concat: mixed ranks");
    ids.push_back(v.id());
  }
  if (rank == 1) {
    std::vector<double> out;
    for (const Var& v : parts) out.insert(out.end(), v.value().values().begin(), v.value().values().end());
    return parts[0].tape().record("concat", Tensor::vector(std::move(out)), parts, [ids](Tape& t, std::size_t self) {
      const Tensor& g = t.grad(self);
      std::size_t off = 0;
      for (std::size_t id : ids) {
        const std::size_t n = t.value(id).size();
        if (t.needs_grad(id)) {
          Tensor& gi = t.grad(id);
          for (std::size_t k = 0; k < n; ++k) gi[k] += g[off + k];
        }
        off += n;
      }
    });
  }
  if (rank != 2 || axis > 1) throw DimensionError("concat: unsupported rank/axis");
  const std::size_t fixed = axis == 0 ? parts[0].value().cols() : parts[0].value().rows();
  std::size_t total = 0;
  for (const Var& v : parts) {
    const Tensor& x = v.value();
    if ((axis == 0 ? x.cols() : x.rows()) != fixed) throw DimensionError("concat: mismatched extents");
    total += axis == 0 ? x.rows() : x.cols();
  }
  Shape out = axis == 0 ? Shape{total, fixed} : Shape{fixed, total};
  Tensor y(out);
  std::size_t off = 0;
  for (const Var& v : parts) {
    const Tensor& x = v.value();
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) {
        if (axis == 0) y.at(off + i, j) = x.at(i, j);
        else y.at(i, off + j) = x.at(i, j);
      }
    off += axis == 0 ? x.rows() : x.cols();
  }
  return parts[0].tape().record("concat", std::move(y), parts, [ids, axis](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    std::size_t off = 0;
    for (std::size_t id : ids) {
      const Tensor& x = t.value(id);
      if (t.needs_grad(id)) {
        Tensor& gi = t.grad(id);
        for (std::size_t i = 0; i < x.rows(); ++i)
          for (std::size_t j = 0; j < x.cols(); ++j)
            gi.at(i, j) += axis == 0 ? g.at(off + i, j) : g.at(i, off + j);
      }
      off += axis == 0 ? x.rows() : x.cols();
    }
  });
}

Var stack(std::span<const Var> rows) {
  if (rows.empty()) throw DimensionError("stack: no inputs");
  const std::size_t d = rows[0].value().size();
  std::vector<std::size_t> ids;
  ids.reserve(rows.size());
  Tensor y(Shape{rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Tensor& x = rows[i].value();
    if (x.rank() != 1 || x.size() != d) throw DimensionError("stack: expected vectors of length " + std::to_string(d));
    std::copy(x.values().begin(), x.values().end(), y.row(i).begin());
    ids.push_back(rows[i].id());
  }
  return rows[0].tape().record("stack", std::move(y), rows, [ids, d](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!t.needs_grad(ids[i])) continue;
      Tensor& gi = t.grad(ids[i]);
      for (std::size_t k = 0; k < d; ++k) gi[k] += g[i * d + k];
    }
  });
}

Var index_select(Var a, std::size_t axis, std::vector<std::size_t> indices) {
  const Tensor& x = a.value();
  if (x.rank() == 1 && axis == 0) {
    Tensor y(Shape{indices.size()});
    for (std::size_t k = 0; k < indices.size(); ++k) {
      if (indices[k] >= x.size()) throw BoundsError("index_select: index " + std::to_string(indices[k]) + " out of range");
      y[k] = x[indices[k]];
    }
    return a.tape().record("index_select", std::move(y), {a}, [ia = a.id(), idx = std::move(indices)](Tape& t, std::size_t self) {
      const Tensor& g = t.grad(self);
      Tensor& ga = t.grad(ia);
      for (std::size_t k = 0; k < idx.size(); ++k) ga[idx[k]] += g[k];
    });
  }
  if (x.rank() != 2 || axis > 1) throw DimensionError("index_select: unsupported rank/axis");
  const std::size_t r = x.rows(), c = x.cols();
  const std::size_t limit = axis == 0 ? r : c;
  for (std::size_t i : indices)
    if (i >= limit) throw BoundsError("index_select: index " + std::to_string(i) + " out of range");
  Tensor y(axis == 0 ? Shape{indices.size(), c} : Shape{r, indices.size()});
  if (axis == 0) {
    for (std::size_t k = 0; k < indices.size(); ++k) std::copy_n(x.row(indices[k]).begin(), c, y.row(k).begin());
  } else {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t k = 0; k < indices.size(); ++k) y.at(i, k) = x.at(i, indices[k]);
  }
  return a.tape().record("index_select", std::move(y), {a},
                         [ia = a.id(), axis, r, c, idx = std::move(indices)](Tape& t, std::size_t self) {
                           const Tensor& g = t.grad(self);
                           Tensor& ga = t.grad(ia);
                           if (axis == 0) {
                             for (std::size_t k = 0; k < idx.size(); ++k)
                               for (std::size_t j = 0; j < c; ++j) ga[idx[k] * c + j] += g[k * c + j];
                           } else {
                             const std::size_t n = idx.size();
                             for (std::size_t i = 0; i < r; ++i)
                               for (std::size_t k = 0; k < n; ++k) ga[i * c + idx[k]] += g[i * n + k];
                           }
                         });
}

Var take_row(Var a, std::size_t row) {
  const Tensor& x = a.value();
  if (x.rank() != 2) throw DimensionError("take_row: expected a matrix");
  if (row >= x.rows()) throw BoundsError("take_row: row " + std::to_string(row) + " out of range");
  const std::size_t c = x.cols();
  Tensor y(Shape{c});
  std::copy_n(x.row(row).begin(), c, y.data().begin());
  return a.tape().record("take_row", std::move(y), {a}, [ia = a.id(), row, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t j = 0; j < c; ++j) ga[row * c + j] += g[j];
  });
}

Var reshape(Var a, Shape shape) {
  const Tensor& x = a.value();
  if (shape_size(shape) != x.size()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  Tensor y(std::move(shape), x.values());
  return a.tape().record("reshape", std::move(y), {a}, [ia = a.id()](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
  });
}

Var sum(Var a) {
  const Tensor& x = a.value();
  double s = 0.0;
  for (double v : x.values()) s += v;
  return a.tape().record("sum", Tensor::scalar(s), {a}, [ia = a.id()](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    Tensor& ga = t.grad(ia);
    for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += g;
  });
}

Var sum(Var a, std::size_t axis) {
  const Tensor& x = a.value();
  if (x.rank() == 1 && axis == 0) return sum(a);
  if (x.rank() != 2 || axis > 1) throw DimensionError("sum: unsupported rank/axis");
  const std::size_t r = x.rows(), c = x.cols();
  Tensor y(Shape{axis == 0 ? c : r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[axis == 0 ? j : i] += x[i * c + j];
  return a.tape().record("sum", std::move(y), {a}, [ia = a.id(), axis, r, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[axis == 0 ? j : i];
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var exp(Var a) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t k = 0; k < x.size(); ++k) y[k] = std::exp(x[k]);
  return a.tape().record("exp", std::move(y), {a}, [ia = a.id()](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * y[k];
  });
}

Var log(Var a) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t k = 0; k < x.size(); ++k) y[k] = std::log(x[k]);
  return a.tape().record("log", std::move(y), {a}, [ia = a.id()](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(ia);
    Tensor& ga = t.grad(ia);
    for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] / x[k];
  });
}

Var log_clamped(Var a, double floor, std::size_t* clamped) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (x[k] < floor) {
      y[k] = std::log(floor);
      if (clamped) ++*clamped;
    } else {
      y[k] = std::log(x[k]);
    }
  }
  return a.tape().record("log", std::move(y), {a}, [ia = a.id(), floor](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(ia);
    Tensor& ga = t.grad(ia);
    for (std::size_t k = 0; k < g.size(); ++k)
      if (x[k] >= floor) ga[k] += g[k] / x[k];
  });
}

Var leaky_relu(Var a, double slope) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t k = 0; k < x.size(); ++k) y[k] = x[k] > 0.0 ? x[k] : slope * x[k];
  return a.tape().record("leaky_relu", std::move(y), {a}, [ia = a.id(), slope](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(ia);
    Tensor& ga = t.grad(ia);
    for (std::size_t k = 0; k < g.size(); ++k) ga[k] += x[k] > 0.0 ? g[k] : slope * g[k];
  });
}

Var relu(Var a) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t k = 0; k < x.size(); ++k) y[k] = x[k] > 0.0 ? x[k] : 0.0;
  return a.tape().record("relu", std::move(y), {a}, [ia = a.id()](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(ia);
    Tensor& ga = t.grad(ia);
    for (std::size_t k = 0; k < g.size(); ++k)
      if (x[k] > 0.0) ga[k] += g[k];
  });
}

Var sigmoid(Var a) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (x[k] >= 0.0) {
      y[k] = 1.0 / (1.0 + std::exp(-x[k]));
    } else {
      const double e = std::exp(x[k]);
      y[k] = e / (1.0 + e);
    }
  }
  return a.tape().record("sigmoid", std::move(y), {a}, [ia = a.id()](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * y[k] * (1.0 - y[k]);
  });
}

Var softmax(Var a) {
  const Tensor& x = a.value();
  if (x.rank() == 0) throw DimensionError("softmax: expected a vector or matrix");
  const std::size_t r = x.rows(), c = x.cols();
  if (c == 0) throw DimensionError("softmax: empty axis");
  Tensor y(x.shape());
  for (std::size_t i = 0; i < r; ++i) {
    const auto xr = x.row(i);
    const double mx = *std::max_element(xr.begin(), xr.end());
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      y[i * c + j] = std::exp(xr[j] - mx);
      z += y[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) y[i * c + j] /= z;
  }
  return a.tape().record("softmax", std::move(y), {a}, [ia = a.id(), r, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < r; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) s += g[i * c + j] * y[i * c + j];
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += y[i * c + j] * (g[i * c + j] - s);
    }
  });
}

Var l2_norm(Var a) {
  const Tensor& x = a.value();
  double s = 0.0;
  for (double v : x.values()) s += v * v;
  return a.tape().record("l2_norm", Tensor::scalar(std::sqrt(s)), {a}, [ia = a.id()](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    const double n = t.value(self)[0];
    if (n == 0.0) return;  // subgradient 0 at the origin
    const Tensor& x = t.value(ia);
    Tensor& ga = t.grad(ia);
    for (std::size_t k = 0; k < x.size(); ++k) ga[k] += g * x[k] / n;
  });
}

Var l2_norm(Var a, std::size_t axis) {
  const Tensor& x = a.value();
  if (x.rank() == 1 && axis == 0) return l2_norm(a);
  if (x.rank() != 2 || axis != 1) throw DimensionError("l2_norm: only row norms (axis 1) are supported");
  const std::size_t r = x.rows(), c = x.cols();
  Tensor y(Shape{r});
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (double v : x.row(i)) s += v * v;
    y[i] = std::sqrt(s);
  }
  return a.tape().record("l2_norm", std::move(y), {a}, [ia = a.id(), r, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& n = t.value(self);
    const Tensor& x = t.value(ia);
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < r; ++i) {
      if (n[i] == 0.0) continue;
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[i] * x[i * c + j] / n[i];
    }
  });
}

}  // namespace ad
}  // namespace brgcn
