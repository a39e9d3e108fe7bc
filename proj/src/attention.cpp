#include "aegis/attention.hpp"

#include <cmath>

namespace aegis {

namespace {

void check_cfg(const SAConfig& cfg) {
  if (cfg.heads < 1) fail(ErrorKind::config, "attention heads must be positive");
  if (cfg.d_model % cfg.heads != 0)
    fail(ErrorKind::config, "d_model " + std::to_string(cfg.d_model) + " not divisible by " +
                                std::to_string(cfg.heads) + " heads");
}

}  // namespace

void register_sa_params(ParamStore& store, const std::string& prefix, const SAConfig& cfg, Rng& rng) {
  check_cfg(cfg);
  int dk = cfg.d_model / cfg.heads;
  for (int h = 0; h < cfg.heads; ++h) {
    std::string hp = prefix + ".h" + std::to_string(h);
    store.create(hp + ".wq", he_uniform({cfg.d_model, dk}, cfg.d_model, rng));
    store.create(hp + ".wk", he_uniform({cfg.d_model, dk}, cfg.d_model, rng));
    store.create(hp + ".wv", he_uniform({cfg.d_model, dk}, cfg.d_model, rng));
  }
  store.create(prefix + ".fuse.weight", he_uniform({cfg.d_model, cfg.d_model}, cfg.d_model, rng));
  store.create(prefix + ".fuse.bias", Tensor({1, cfg.d_model}));
  store.create(prefix + ".ff.w1", he_uniform({cfg.d_model, cfg.ff_hidden}, cfg.d_model, rng));
  store.create(prefix + ".ff.b1", Tensor({1, cfg.ff_hidden}));
  store.create(prefix + ".ff.w2", he_uniform({cfg.ff_hidden, cfg.d_out}, cfg.ff_hidden, rng));
  store.create(prefix + ".ff.b2", Tensor({1, cfg.d_out}));
}

Node* scaled_dot_attention(Graph& g, Node* q, Node* k, Node* v, Node** attn_out) {
  if (q->val.rank() != 2 || k->val.rank() != 2 || v->val.rank() != 2)
    fail(ErrorKind::dimension, "attention inputs must be rank 2");
  if (q->val.shape[1] != k->val.shape[1])
    fail(ErrorKind::dimension, "attention: query and key widths differ");
  if (k->val.shape[0] != v->val.shape[0])
    fail(ErrorKind::dimension, "attention: key and value row counts differ");
  double scale = 1.0 / std::sqrt(static_cast<double>(q->val.shape[1]));
  Node* scores = affine(g, matmul_nt(g, q, k), scale, 0.0);
  Node* attn = softmax(g, scores, 1);
  if (attn_out) *attn_out = attn;
  return matmul(g, attn, v);
}

Node* sa_layer(Graph& g, ParamStore& store, const std::string& prefix, Node* x, const SAConfig& cfg) {
  check_cfg(cfg);
  if (x->val.shape[1] != cfg.d_model)
    fail(ErrorKind::dimension, "sa_layer: input width " + std::to_string(x->val.shape[1]) +
                                   " does not match d_model " + std::to_string(cfg.d_model));
  Node* mixed = x;
  if (cfg.enabled) {
    std::vector<Node*> heads;
    heads.reserve(cfg.heads);
    for (int h = 0; h < cfg.heads; ++h) {
      std::string hp = prefix + ".h" + std::to_string(h);
      Node* q = matmul(g, x, g.param(store.get(hp + ".wq")));
      Node* k = matmul(g, x, g.param(store.get(hp + ".wk")));
      Node* v = matmul(g, x, g.param(store.get(hp + ".wv")));
      heads.push_back(scaled_dot_attention(g, q, k, v));
    }
    Node* cat = cfg.heads == 1 ? heads[0] : concat(g, heads, 1);
    mixed = add_rowvec(g, matmul(g, cat, g.param(store.get(prefix + ".fuse.weight"))),
                       g.param(store.get(prefix + ".fuse.bias")));
  }
  Node* h1 = add_rowvec(g, matmul(g, mixed, g.param(store.get(prefix + ".ff.w1"))),
                        g.param(store.get(prefix + ".ff.b1")));
  Node* a1 = leaky_relu(g, h1, cfg.lrelu_slope);
  return add_rowvec(g, matmul(g, a1, g.param(store.get(prefix + ".ff.w2"))),
                    g.param(store.get(prefix + ".ff.b2")));
}

}  // namespace aegis
