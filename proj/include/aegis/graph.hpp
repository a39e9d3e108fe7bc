#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "aegis/tensor.hpp"

namespace aegis {

struct Parameter;
class Graph;

struct Node {
  Tensor val;
  Tensor grad;  // empty until first touched during backward
  bool requires_grad = false;
  Parameter* param = nullptr;  // set on parameter leaves
  std::vector<Node*> inputs;
  std::function<void(Node&)> backward;

  bool has_grad() const { return !grad.v.empty(); }
  Tensor& grad_buf() {
    if (grad.v.empty()) grad = Tensor::zeros(val.shape);
    return grad;
  }
};

// Tape of operations. Construction order is topological order; backward walks
// the tape in reverse. A non-recording graph evaluates values only and cannot
// be differentiated; it is the cheap path for inference.
class Graph {
 public:
  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return record_; }

  Node* input(Tensor t, bool requires_grad = false);
  Node* param(Parameter& p);

  // Internal factory used by the op implementations. Checks the result for
  // NaN/Inf, which is an error state for every forward pass.
  Node* make(const char* op, Tensor val, std::vector<Node*> inputs, std::function<void(Node&)> bw);

  void backward(Node* out);  // scalar output, seed gradient 1
  void backward(Node* out, const Tensor& seed);

  // Adds the gradients collected on parameter leaves into Parameter::grad.
  void accumulate_param_grads();

  size_t size() const { return nodes_.size(); }

 private:
  std::vector<std::unique_ptr<Node>> nodes_;
  std::vector<Node*> param_leaves_;
  bool record_;
};

// ---- operator set ---------------------------------------------------------

Node* matmul(Graph& g, Node* a, Node* b);     // [m,k]·[k,n]
Node* matmul_nt(Graph& g, Node* a, Node* b);  // a · bᵀ, [m,k]·[n,k] -> [m,n]
Node* add(Graph& g, Node* a, Node* b);
Node* sub(Graph& g, Node* a, Node* b);
Node* mul(Graph& g, Node* a, Node* b);
Node* affine(Graph& g, Node* x, double scale, double shift);  // scale·x + shift
Node* add_rowvec(Graph& g, Node* m, Node* r);                 // [n,c] + [1,c] per row
Node* leaky_relu(Graph& g, Node* x, double slope);
Node* softmax(Graph& g, Node* x, int axis);
Node* concat(Graph& g, const std::vector<Node*>& xs, int axis);
Node* gather_rows(Graph& g, Node* x, std::vector<int> idx);
Node* scatter_sum_rows(Graph& g, Node* x, std::vector<int> idx, int out_rows);
Node* l2_normalize(Graph& g, Node* x, int axis, double eps = 1e-12);
Node* cross_entropy(Graph& g, Node* logits, const std::vector<int>& labels, int ignore_index);
Node* sum_all(Graph& g, Node* x);
Node* sqrt_elem(Graph& g, Node* x);
Node* max_of(Graph& g, const std::vector<Node*>& xs);  // scalars; subgradient to first max
Node* reshape(Graph& g, Node* x, Shape s);
Node* row_scale(Graph& g, Node* x, std::vector<double> s);  // y[i,:] = s[i] * x[i,:]
Node* batch_norm(Graph& g, Node* x, Node* gamma, Node* beta, Tensor& run_mean, Tensor& run_var,
                 double momentum, double eps, bool training);
Node* vlad_aggregate(Graph& g, Node* assign, Node* x, Node* centers);

// Raw matmul kernels shared by ops and backward passes.
void mm_nn(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate);
void mm_nt(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate);
void mm_tn(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate);

}  // namespace aegis
