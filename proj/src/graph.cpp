#include "aegis/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "aegis/params.hpp"

namespace aegis {

namespace {

void require_2d(const char* op, const Tensor& t) {
  if (t.rank() != 2) fail(ErrorKind::dimension, std::string(op) + ": expected rank-2 tensor, got " + shape_str(t.shape));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    fail(ErrorKind::dimension,
         std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
}

constexpr int64_t kMatmulGrainFlops = 1 << 16;

}  // namespace

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

Tensor tensor2d(std::initializer_list<std::initializer_list<double>> rows) {
  int r = static_cast<int>(rows.size());
  int c = r > 0 ? static_cast<int>(rows.begin()->size()) : 0;
  Tensor t({r, c});
  int i = 0;
  for (const auto& row : rows) {
    if (static_cast<int>(row.size()) != c) fail(ErrorKind::dimension, "ragged tensor literal");
    int j = 0;
    for (double x : row) t.at(i, j++) = x;
    ++i;
  }
  return t;
}

// ---- graph ----------------------------------------------------------------

Node* Graph::input(Tensor t, bool requires_grad) {
  auto n = std::make_unique<Node>();
  n->val = std::move(t);
  n->requires_grad = record_ && requires_grad;
  nodes_.push_back(std::move(n));
  return nodes_.back().get();
}

Node* Graph::param(Parameter& p) {
  auto n = std::make_unique<Node>();
  n->val = p.value;
  n->requires_grad = record_ && p.trainable;
  n->param = &p;
  nodes_.push_back(std::move(n));
  Node* raw = nodes_.back().get();
  if (raw->requires_grad) param_leaves_.push_back(raw);
  return raw;
}

Node* Graph::make(const char* op, Tensor val, std::vector<Node*> inputs, std::function<void(Node&)> bw) {
  if (!val.all_finite()) fail(ErrorKind::numeric, std::string(op) + " produced non-finite values");
  auto n = std::make_unique<Node>();
  n->val = std::move(val);
  if (record_) {
    bool req = false;
    for (Node* i : inputs) req = req || i->requires_grad;
    n->requires_grad = req;
    if (req) {
      n->inputs = std::move(inputs);
      n->backward = std::move(bw);
    }
  }
  nodes_.push_back(std::move(n));
  return nodes_.back().get();
}

void Graph::backward(Node* out) {
  if (!out->val.is_scalar())
    fail(ErrorKind::usage, "backward without seed requires a scalar output, got " + shape_str(out->val.shape));
  backward(out, Tensor::scalar(1.0));
}

void Graph::backward(Node* out, const Tensor& seed) {
  if (!record_) fail(ErrorKind::usage, "backward called on a non-recording graph");
  require_same_shape("backward seed", out->val, seed);
  Tensor& g = out->grad_buf();
  for (int64_t i = 0; i < seed.numel(); ++i) g[i] += seed[i];
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node* n = it->get();
    if (!n->backward || !n->requires_grad || !n->has_grad()) continue;
    n->backward(*n);
  }
}

void Graph::accumulate_param_grads() {
  for (Node* n : param_leaves_) {
    if (!n->has_grad()) continue;
    Parameter* p = n->param;
    for (int64_t i = 0; i < n->grad.numel(); ++i) p->grad[i] += n->grad[i];
  }
}

// ---- raw matmul kernels ----------------------------------------------------

void mm_nn(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate) {
  int m = a.shape[0], k = a.shape[1], n = b.shape[1];
  if (!accumulate) std::fill(out.v.begin(), out.v.end(), 0.0);
  int64_t grain = std::max<int64_t>(1, kMatmulGrainFlops / std::max(1, k * n));
  parallel_for(m, grain, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      const double* arow = a.data() + i * k;
      double* orow = out.data() + i * n;
      for (int p = 0; p < k; ++p) {
        double av = arow[p];
        if (av == 0.0) continue;
        const double* brow = b.data() + static_cast<int64_t>(p) * n;
        for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    }
  });
}

void mm_nt(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate) {
  int m = a.shape[0], k = a.shape[1], n = b.shape[0];
  int64_t grain = std::max<int64_t>(1, kMatmulGrainFlops / std::max(1, k * n));
  parallel_for(m, grain, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      const double* arow = a.data() + i * k;
      double* orow = out.data() + i * n;
      for (int j = 0; j < n; ++j) {
        const double* brow = b.data() + static_cast<int64_t>(j) * k;
        double acc = 0.0;
        for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
        if (accumulate)
          orow[j] += acc;
        else
          orow[j] = acc;
      }
    }
  });
}

void mm_tn(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate) {
  // out[k,n] = sum_i a[i,k] * b[i,n]
  int m = a.shape[0], k = a.shape[1], n = b.shape[1];
  if (!accumulate) std::fill(out.v.begin(), out.v.end(), 0.0);
  int64_t grain = std::max<int64_t>(1, kMatmulGrainFlops / std::max(1, m * n));
  parallel_for(k, grain, [&](int64_t lo, int64_t hi) {
    for (int64_t p = lo; p < hi; ++p) {
      double* orow = out.data() + p * n;
      for (int i = 0; i < m; ++i) {
        double av = a.data()[static_cast<int64_t>(i) * k + p];
        if (av == 0.0) continue;
        const double* brow = b.data() + static_cast<int64_t>(i) * n;
        for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    }
  });
}

// ---- ops -------------------------------------------------------------------

Node* matmul(Graph& g, Node* a, Node* b) {
  require_2d("matmul", a->val);
  require_2d("matmul", b->val);
  if (a->val.shape[1] != b->val.shape[0])
    fail(ErrorKind::dimension, "matmul: inner dimensions disagree, " + shape_str(a->val.shape) + " x " +
                                   shape_str(b->val.shape));
  Tensor out({a->val.shape[0], b->val.shape[1]});
  mm_nn(a->val, b->val, out, false);
  return g.make("matmul", std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) mm_nt(n.grad, b->val, a->grad_buf(), true);  // dA = G·Bᵀ
    if (b->requires_grad) mm_tn(a->val, n.grad, b->grad_buf(), true);  // dB = Aᵀ·G
  });
}

Node* matmul_nt(Graph& g, Node* a, Node* b) {
  require_2d("matmul_nt", a->val);
  require_2d("matmul_nt", b->val);
  if (a->val.shape[1] != b->val.shape[1])
    fail(ErrorKind::dimension, "matmul_nt: inner dimensions disagree, " + shape_str(a->val.shape) + " x " +
                                   shape_str(b->val.shape) + "ᵀ");
  Tensor out({a->val.shape[0], b->val.shape[0]});
  mm_nt(a->val, b->val, out, false);
  return g.make("matmul_nt", std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) mm_nn(n.grad, b->val, a->grad_buf(), true);  // dA = G·B
    if (b->requires_grad) mm_tn(n.grad, a->val, b->grad_buf(), true);  // dB = Gᵀ·A
  });
}

Node* add(Graph& g, Node* a, Node* b) {
  require_same_shape("add", a->val, b->val);
  Tensor out(a->val.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->val[i] + b->val[i];
  return g.make("add", std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) {
      Tensor& ga = a->grad_buf();
      for (int64_t i = 0; i < n.grad.numel(); ++i) ga[i] += n.grad[i];
    }
    if (b->requires_grad) {
      Tensor& gb = b->grad_buf();
      for (int64_t i = 0; i < n.grad.numel(); ++i) gb[i] += n.grad[i];
    }
  });
}

Node* sub(Graph& g, Node* a, Node* b) {
  require_same_shape("sub", a->val, b->val);
  Tensor out(a->val.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->val[i] - b->val[i];
  return g.make("sub", std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) {
      Tensor& ga = a->grad_buf();
      for (int64_t i = 0; i < n.grad.numel(); ++i) ga[i] += n.grad[i];
    }
    if (b->requires_grad) {
      Tensor& gb = b->grad_buf();
      for (int64_t i = 0; i < n.grad.numel(); ++i) gb[i] -= n.grad[i];
    }
  });
}

Node* mul(Graph& g, Node* a, Node* b) {
  require_same_shape("mul", a->val, b->val);
  Tensor out(a->val.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->val[i] * b->val[i];
  return g.make("mul", std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) {
      Tensor& ga = a->grad_buf();
      for (int64_t i = 0; i < n.grad.numel(); ++i) ga[i] += n.grad[i] * b->val[i];
    }
    if (b->requires_grad) {
      Tensor& gb = b->grad_buf();
      for (int64_t i = 0; i < n.grad.numel(); ++i) gb[i] += n.grad[i] * a->val[i];
    }
  });
}

Node* affine(Graph& g, Node* x, double scale, double shift) {
  Tensor out(x->val.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = scale * x->val[i] + shift;
  return g.make("affine", std::move(out), {x}, [x, scale](Node& n) {
    if (!x->requires_grad) return;
    Tensor& gx = x->grad_buf();
    for (int64_t i = 0; i < n.grad.numel(); ++i) gx[i] += scale * n.grad[i];
  });
}

Node* add_rowvec(Graph& g, Node* m, Node* r) {
  require_2d("add_rowvec", m->val);
  require_2d("add_rowvec", r->val);
  if (r->val.shape[0] != 1 || r->val.shape[1] != m->val.shape[1])
    fail(ErrorKind::dimension, "add_rowvec: row vector shape " + shape_str(r->val.shape) +
                                   " incompatible with " + shape_str(m->val.shape));
  int rows = m->val.shape[0], cols = m->val.shape[1];
  Tensor out(m->val.shape);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out.at(i, j) = m->val.at(i, j) + r->val[j];
  return g.make("add_rowvec", std::move(out), {m, r}, [m, r, rows, cols](Node& n) {
    if (m->requires_grad) {
      Tensor& gm = m->grad_buf();
      for (int64_t i = 0; i < n.grad.numel(); ++i) gm[i] += n.grad[i];
    }
    if (r->requires_grad) {
      Tensor& gr = r->grad_buf();
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) gr[j] += n.grad.at(i, j);
    }
  });
}

Node* leaky_relu(Graph& g, Node* x, double slope) {
  Tensor out(x->val.shape);
  for (int64_t i = 0; i < out.numel(); ++i) {
    double v = x->val[i];
    out[i] = v >= 0.0 ? v : slope * v;
  }
  return g.make("leaky_relu", std::move(out), {x}, [x, slope](Node& n) {
    if (!x->requires_grad) return;
    Tensor& gx = x->grad_buf();
    for (int64_t i = 0; i < n.grad.numel(); ++i) gx[i] += n.grad[i] * (x->val[i] >= 0.0 ? 1.0 : slope);
  });
}

namespace {

// Max-subtracted softmax over a strided slice.
void softmax_slice(const double* in, double* out, int n, int64_t stride) {
  double mx = in[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, in[i * stride]);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    double e = std::exp(in[i * stride] - mx);
    out[i * stride] = e;
    sum += e;
  }
  for (int i = 0; i < n; ++i) out[i * stride] /= sum;
}

void softmax_backward_slice(const double* y, const double* gy, double* gx, int n, int64_t stride) {
  double dot = 0.0;
  for (int i = 0; i < n; ++i) dot += y[i * stride] * gy[i * stride];
  for (int i = 0; i < n; ++i) gx[i * stride] += y[i * stride] * (gy[i * stride] - dot);
}

}  // namespace

Node* softmax(Graph& g, Node* x, int axis) {
  const Tensor& v = x->val;
  Tensor out(v.shape);
  int slices, len;
  int64_t stride, pitch;
  if (v.rank() == 1) {
    if (axis != 0) fail(ErrorKind::dimension, "softmax: axis out of range for rank-1 tensor");
    slices = 1, len = v.shape[0], stride = 1, pitch = 0;
  } else if (v.rank() == 2 && axis == 1) {
    slices = v.shape[0], len = v.shape[1], stride = 1, pitch = v.shape[1];
  } else if (v.rank() == 2 && axis == 0) {
    slices = v.shape[1], len = v.shape[0], stride = v.shape[1], pitch = 1;
  } else {
    fail(ErrorKind::dimension, "softmax: unsupported axis " + std::to_string(axis) + " for shape " +
                                   shape_str(v.shape));
  }
  for (int s = 0; s < slices; ++s) softmax_slice(v.data() + s * pitch, out.data() + s * pitch, len, stride);
  return g.make("softmax", std::move(out), {x}, [x, slices, len, stride, pitch](Node& n) {
    if (!x->requires_grad) return;
    Tensor& gx = x->grad_buf();
    for (int s = 0; s < slices; ++s)
      softmax_backward_slice(n.val.data() + s * pitch, n.grad.data() + s * pitch, gx.data() + s * pitch, len,
                             stride);
  });
}

Node* concat(Graph& g, const std::vector<Node*>& xs, int axis) {
  if (xs.empty()) fail(ErrorKind::usage, "concat: no inputs");
  if (axis != 0 && axis != 1) fail(ErrorKind::dimension, "concat: axis must be 0 or 1");
  for (Node* x : xs) require_2d("concat", x->val);
  int rows = xs[0]->val.shape[0], cols = xs[0]->val.shape[1];
  int total = 0;
  for (Node* x : xs) {
    if (axis == 0 && x->val.shape[1] != cols)
      fail(ErrorKind::dimension, "concat axis 0: column counts differ");
    if (axis == 1 && x->val.shape[0] != rows)
      fail(ErrorKind::dimension, "concat axis 1: row counts differ");
    total += x->val.shape[axis];
  }
  Tensor out(axis == 0 ? Shape{total, cols} : Shape{rows, total});
  int offset = 0;
  for (Node* x : xs) {
    int xr = x->val.shape[0], xc = x->val.shape[1];
    if (axis == 0) {
      std::memcpy(out.data() + static_cast<int64_t>(offset) * cols, x->val.data(),
                  sizeof(double) * static_cast<size_t>(x->val.numel()));
      offset += xr;
    } else {
      for (int i = 0; i < rows; ++i)
        std::memcpy(out.data() + static_cast<int64_t>(i) * total + offset,
                    x->val.data() + static_cast<int64_t>(i) * xc, sizeof(double) * static_cast<size_t>(xc));
      offset += xc;
    }
  }
  std::vector<Node*> inputs = xs;
  return g.make("concat", std::move(out), std::move(inputs), [xs, axis, rows](Node& n) {
    int total = n.val.shape[1];
    int offset = 0;
    for (Node* x : xs) {
      int xr = x->val.shape[0], xc = x->val.shape[1];
      if (x->requires_grad) {
        Tensor& gx = x->grad_buf();
        if (axis == 0) {
          int cols = x->val.shape[1];
          for (int64_t i = 0; i < x->val.numel(); ++i)
            gx[i] += n.grad[static_cast<int64_t>(offset) * cols + i];
        } else {
          for (int i = 0; i < rows; ++i)
            for (int j = 0; j < xc; ++j)
              gx.at(i, j) += n.grad[static_cast<int64_t>(i) * total + offset + j];
        }
      }
      offset += (axis == 0 ? xr : xc);
    }
  });
}

Node* gather_rows(Graph& g, Node* x, std::vector<int> idx) {
  require_2d("gather_rows", x->val);
  int rows = x->val.shape[0], cols = x->val.shape[1];
  for (int i : idx)
    if (i < 0 || i >= rows)
      fail(ErrorKind::index, "gather_rows: index " + std::to_string(i) + " out of range [0," +
                                 std::to_string(rows) + ")");
  Tensor out({static_cast<int>(idx.size()), cols});
  for (size_t r = 0; r < idx.size(); ++r)
    std::memcpy(out.data() + static_cast<int64_t>(r) * cols,
                x->val.data() + static_cast<int64_t>(idx[r]) * cols, sizeof(double) * static_cast<size_t>(cols));
  return g.make("gather_rows", std::move(out), {x}, [x, idx = std::move(idx), cols](Node& n) {
    if (!x->requires_grad) return;
    Tensor& gx = x->grad_buf();
    for (size_t r = 0; r < idx.size(); ++r)
      for (int j = 0; j < cols; ++j)
        gx[static_cast<int64_t>(idx[r]) * cols + j] += n.grad[static_cast<int64_t>(r) * cols + j];
  });
}

Node* scatter_sum_rows(Graph& g, Node* x, std::vector<int> idx, int out_rows) {
  require_2d("scatter_sum_rows", x->val);
  int rows = x->val.shape[0], cols = x->val.shape[1];
  if (static_cast<int>(idx.size()) != rows)
    fail(ErrorKind::dimension, "scatter_sum_rows: index count must match row count");
  for (int i : idx)
    if (i < 0 || i >= out_rows)
      fail(ErrorKind::index, "scatter_sum_rows: index " + std::to_string(i) + " out of range [0," +
                                 std::to_string(out_rows) + ")");
  Tensor out({out_rows, cols});
  for (int r = 0; r < rows; ++r)
    for (int j = 0; j < cols; ++j) out.at(idx[r], j) += x->val.at(r, j);
  return g.make("scatter_sum_rows", std::move(out), {x}, [x, idx = std::move(idx), cols](Node& n) {
    if (!x->requires_grad) return;
    Tensor& gx = x->grad_buf();
    for (size_t r = 0; r < idx.size(); ++r)
      for (int j = 0; j < cols; ++j)
        gx[static_cast<int64_t>(r) * cols + j] += n.grad[static_cast<int64_t>(idx[r]) * cols + j];
  });
}

namespace {

void l2n_slice(const double* in, double* out, int n, double eps) {
  double sq = 0.0;
  for (int i = 0; i < n; ++i) sq += in[i] * in[i];
  double norm = std::max(std::sqrt(sq), eps);
  for (int i = 0; i < n; ++i) out[i] = in[i] / norm;
}

void l2n_backward_slice(const double* in, const double* y, const double* gy, double* gx, int n, double eps) {
  double sq = 0.0;
  for (int i = 0; i < n; ++i) sq += in[i] * in[i];
  double norm = std::sqrt(sq);
  if (norm <= eps) {
    for (int i = 0; i < n; ++i) gx[i] += gy[i] / eps;
    return;
  }
  double dot = 0.0;
  for (int i = 0; i < n; ++i) dot += gy[i] * y[i];
  for (int i = 0; i < n; ++i) gx[i] += (gy[i] - y[i] * dot) / norm;
}

}  // namespace

Node* l2_normalize(Graph& g, Node* x, int axis, double eps) {
  const Tensor& v = x->val;
  int slices, len;
  if (v.rank() == 1) {
    if (axis != 0) fail(ErrorKind::dimension, "l2_normalize: axis out of range for rank-1 tensor");
    slices = 1, len = v.shape[0];
  } else if (v.rank() == 2 && axis == 1) {
    slices = v.shape[0], len = v.shape[1];
  } else {
    fail(ErrorKind::dimension, "l2_normalize: unsupported axis " + std::to_string(axis) + " for shape " +
                                   shape_str(v.shape));
  }
  Tensor out(v.shape);
  for (int s = 0; s < slices; ++s)
    l2n_slice(v.data() + static_cast<int64_t>(s) * len, out.data() + static_cast<int64_t>(s) * len, len, eps);
  return g.make("l2_normalize", std::move(out), {x}, [x, slices, len, eps](Node& n) {
    if (!x->requires_grad) return;
    Tensor& gx = x->grad_buf();
    for (int s = 0; s < slices; ++s) {
      int64_t off = static_cast<int64_t>(s) * len;
      l2n_backward_slice(x->val.data() + off, n.val.data() + off, n.grad.data() + off, gx.data() + off, len,
                         eps);
    }
  });
}

Node* cross_entropy(Graph& g, Node* logits, const std::vector<int>& labels, int ignore_index) {
  require_2d("cross_entropy", logits->val);
  int n = logits->val.shape[0], c = logits->val.shape[1];
  if (static_cast<int>(labels.size()) != n)
    fail(ErrorKind::dimension, "cross_entropy: label count must equal row count");
  for (int l : labels)
    if (l != ignore_index && (l < 0 || l >= c))
      fail(ErrorKind::index, "cross_entropy: label " + std::to_string(l) + " out of range [0," +
                                 std::to_string(c) + ")");
  Tensor probs({n, c});
  double total = 0.0;
  int counted = 0;
  for (int i = 0; i < n; ++i) {
    softmax_slice(logits->val.data() + static_cast<int64_t>(i) * c, probs.data() + static_cast<int64_t>(i) * c,
                  c, 1);
    if (labels[i] == ignore_index) continue;
    const double* row = logits->val.data() + static_cast<int64_t>(i) * c;
    double mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double lse = 0.0;
    for (int j = 0; j < c; ++j) lse += std::exp(row[j] - mx);
    total += std::log(lse) + mx - row[labels[i]];
    ++counted;
  }
  double mean = counted > 0 ? total / counted : 0.0;
  return g.make("cross_entropy", Tensor::scalar(mean), {logits},
                [logits, labels, ignore_index, probs = std::move(probs), counted, c](Node& nd) {
                  if (!logits->requires_grad || counted == 0) return;
                  double gy = nd.grad[0] / counted;
                  Tensor& gx = logits->grad_buf();
                  int n = logits->val.shape[0];
                  for (int i = 0; i < n; ++i) {
                    if (labels[i] == ignore_index) continue;
                    for (int j = 0; j < c; ++j) {
                      double p = probs[static_cast<int64_t>(i) * c + j];
                      gx[static_cast<int64_t>(i) * c + j] += gy * (p - (j == labels[i] ? 1.0 : 0.0));
                    }
                  }
                });
}

Node* sum_all(Graph& g, Node* x) {
  double total = 0.0;
  for (int64_t i = 0; i < x->val.numel(); ++i) total += x->val[i];
  return g.make("sum_all", Tensor::scalar(total), {x}, [x](Node& n) {
    if (!x->requires_grad) return;
    Tensor& gx = x->grad_buf();
    for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += n.grad[0];
  });
}

Node* sqrt_elem(Graph& g, Node* x) {
  Tensor out(x->val.shape);
  for (int64_t i = 0; i < out.numel(); ++i) {
    double v = x->val[i];
    if (v < 0.0) fail(ErrorKind::numeric, "sqrt_elem: negative input");
    out[i] = std::sqrt(v);
  }
  return g.make("sqrt_elem", std::move(out), {x}, [x](Node& n) {
    if (!x->requires_grad) return;
    Tensor& gx = x->grad_buf();
    for (int64_t i = 0; i < n.grad.numel(); ++i)
      gx[i] += n.grad[i] * 0.5 / std::max(n.val[i], 1e-12);
  });
}

Node* max_of(Graph& g, const std::vector<Node*>& xs) {
  if (xs.empty()) fail(ErrorKind::usage, "max_of: no inputs");
  for (Node* x : xs)
    if (!x->val.is_scalar()) fail(ErrorKind::dimension, "max_of: inputs must be scalars");
  size_t best = 0;
  for (size_t i = 1; i < xs.size(); ++i)
    if (xs[i]->val[0] > xs[best]->val[0]) best = i;  // ties keep the first maximal term
  std::vector<Node*> inputs = xs;
  Node* winner = xs[best];
  return g.make("max_of", Tensor::scalar(xs[best]->val[0]), std::move(inputs), [winner](Node& n) {
    if (!winner->requires_grad) return;
    winner->grad_buf()[0] += n.grad[0];
  });
}

Node* reshape(Graph& g, Node* x, Shape s) {
  if (shape_numel(s) != x->val.numel())
    fail(ErrorKind::dimension, "reshape: cannot view " + shape_str(x->val.shape) + " as " + shape_str(s));
  Tensor out(std::move(s), x->val.v);
  return g.make("reshape", std::move(out), {x}, [x](Node& n) {
    if (!x->requires_grad) return;
    Tensor& gx = x->grad_buf();
    for (int64_t i = 0; i < n.grad.numel(); ++i) gx[i] += n.grad[i];
  });
}

Node* row_scale(Graph& g, Node* x, std::vector<double> s) {
  require_2d("row_scale", x->val);
  int rows = x->val.shape[0], cols = x->val.shape[1];
  if (static_cast<int>(s.size()) != rows)
    fail(ErrorKind::dimension, "row_scale: scale count must match row count");
  Tensor out(x->val.shape);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out.at(i, j) = s[i] * x->val.at(i, j);
  return g.make("row_scale", std::move(out), {x}, [x, s = std::move(s), cols](Node& n) {
    if (!x->requires_grad) return;
    Tensor& gx = x->grad_buf();
    for (size_t i = 0; i < s.size(); ++i)
      for (int j = 0; j < cols; ++j)
        gx[static_cast<int64_t>(i) * cols + j] += s[i] * n.grad[static_cast<int64_t>(i) * cols + j];
  });
}

Node* batch_norm(Graph& g, Node* x, Node* gamma, Node* beta, Tensor& run_mean, Tensor& run_var,
                 double momentum, double eps, bool training) {
  require_2d("batch_norm", x->val);
  int n = x->val.shape[0], c = x->val.shape[1];
  if (gamma->val.numel() != c || beta->val.numel() != c || run_mean.numel() != c || run_var.numel() != c)
    fail(ErrorKind::dimension, "batch_norm: channel statistics must have " + std::to_string(c) + " entries");

  Tensor mean({c}), var({c});
  if (training) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c; ++j) mean[j] += x->val.at(i, j);
    for (int j = 0; j < c; ++j) mean[j] /= n;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c; ++j) {
        double d = x->val.at(i, j) - mean[j];
        var[j] += d * d;
      }
    for (int j = 0; j < c; ++j) var[j] /= n;
    for (int j = 0; j < c; ++j) {
      run_mean[j] = momentum * run_mean[j] + (1.0 - momentum) * mean[j];
      run_var[j] = momentum * run_var[j] + (1.0 - momentum) * var[j];
    }
  } else {
    mean = run_mean;
    var = run_var;
  }

  Tensor inv_std({c});
  for (int j = 0; j < c; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + eps);
  Tensor xhat({n, c});
  Tensor out({n, c});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      double h = (x->val.at(i, j) - mean[j]) * inv_std[j];
      xhat.at(i, j) = h;
      out.at(i, j) = gamma->val[j] * h + beta->val[j];
    }

  return g.make("batch_norm", std::move(out), {x, gamma, beta},
                [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), n, c,
                 training](Node& nd) {
                  if (beta->requires_grad) {
                    Tensor& gb = beta->grad_buf();
                    for (int i = 0; i < n; ++i)
                      for (int j = 0; j < c; ++j) gb[j] += nd.grad.at(i, j);
                  }
                  if (gamma->requires_grad) {
                    Tensor& gg = gamma->grad_buf();
                    for (int i = 0; i < n; ++i)
                      for (int j = 0; j < c; ++j) gg[j] += nd.grad.at(i, j) * xhat.at(i, j);
                  }
                  if (!x->requires_grad) return;
                  Tensor& gx = x->grad_buf();
                  if (!training) {
                    for (int i = 0; i < n; ++i)
                      for (int j = 0; j < c; ++j)
                        gx.at(i, j) += nd.grad.at(i, j) * gamma->val[j] * inv_std[j];
                    return;
                  }
                  // Batch statistics take part in the gradient.
                  Tensor gmean({c}), gdot({c});
                  for (int i = 0; i < n; ++i)
                    for (int j = 0; j < c; ++j) {
                      gmean[j] += nd.grad.at(i, j);
                      gdot[j] += nd.grad.at(i, j) * xhat.at(i, j);
                    }
                  for (int j = 0; j < c; ++j) {
                    gmean[j] /= n;
                    gdot[j] /= n;
                  }
                  for (int i = 0; i < n; ++i)
                    for (int j = 0; j < c; ++j)
                      gx.at(i, j) += gamma->val[j] * inv_std[j] *
                                     (nd.grad.at(i, j) - gmean[j] - xhat.at(i, j) * gdot[j]);
                });
}

Node* vlad_aggregate(Graph& g, Node* assign, Node* x, Node* centers) {
  require_2d("vlad_aggregate", assign->val);
  require_2d("vlad_aggregate", x->val);
  require_2d("vlad_aggregate", centers->val);
  int n = x->val.shape[0], d = x->val.shape[1], k = centers->val.shape[0];
  if (assign->val.shape[0] != n || assign->val.shape[1] != k || centers->val.shape[1] != d)
    fail(ErrorKind::dimension, "vlad_aggregate: inconsistent shapes");

  Tensor out({k, d});
  mm_tn(assign->val, x->val, out, false);  // Σ_i a_ik x_i
  Tensor colsum({k});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) colsum[j] += assign->val.at(i, j);
  for (int j = 0; j < k; ++j)
    for (int e = 0; e < d; ++e) out.at(j, e) -= colsum[j] * centers->val.at(j, e);

  return g.make("vlad_aggregate", std::move(out), {assign, x, centers},
                [assign, x, centers, colsum = std::move(colsum), n, d, k](Node& nd) {
                  if (assign->requires_grad) {
                    Tensor& ga = assign->grad_buf();
                    // dA[i,j] = (x_i - c_j)·G_j
                    Tensor s({k});
                    for (int j = 0; j < k; ++j) {
                      double acc = 0.0;
                      for (int e = 0; e < d; ++e) acc += centers->val.at(j, e) * nd.grad.at(j, e);
                      s[j] = acc;
                    }
                    mm_nt(x->val, nd.grad, ga, true);  // + X·Gᵀ
                    for (int i = 0; i < n; ++i)
                      for (int j = 0; j < k; ++j) ga.at(i, j) -= s[j];
                  }
                  if (x->requires_grad) mm_nn(assign->val, nd.grad, x->grad_buf(), true);  // dX = A·G
                  if (centers->requires_grad) {
                    Tensor& gc = centers->grad_buf();
                    for (int j = 0; j < k; ++j)
                      for (int e = 0; e < d; ++e) gc.at(j, e) -= colsum[j] * nd.grad.at(j, e);
                  }
                });
}

}  // namespace aegis
