#include "aegis/netvlad.hpp"

namespace aegis {

void register_netvlad_params(ParamStore& store, const std::string& prefix, const NetVladConfig& cfg,
                             Rng& rng) {
  store.create(prefix + ".assign.weight", he_uniform({cfg.in_dim, cfg.clusters}, cfg.in_dim, rng));
  store.create(prefix + ".assign.bias", Tensor({1, cfg.clusters}));
  // Centers start as gaussian points near the feature origin.
  Tensor centers({cfg.clusters, cfg.in_dim});
  for (int64_t i = 0; i < centers.numel(); ++i) centers[i] = rng.normal(0.0, 0.1);
  store.create(prefix + ".centers", std::move(centers));
  store.create(prefix + ".out.weight",
               he_uniform({cfg.clusters * cfg.in_dim, cfg.out_dim}, cfg.clusters * cfg.in_dim, rng));
  store.create(prefix + ".out.bias", Tensor({1, cfg.out_dim}));
}

Node* netvlad(Graph& g, ParamStore& store, const std::string& prefix, Node* x, const NetVladConfig& cfg) {
  if (x->val.rank() != 2 || x->val.shape[1] != cfg.in_dim)
    fail(ErrorKind::dimension, "netvlad: expected [n," + std::to_string(cfg.in_dim) + "] input, got " +
                                   shape_str(x->val.shape));
  Node* scores = add_rowvec(g, matmul(g, x, g.param(store.get(prefix + ".assign.weight"))),
                            g.param(store.get(prefix + ".assign.bias")));
  Node* assign = softmax(g, scores, 1);
  Node* vlad = vlad_aggregate(g, assign, x, g.param(store.get(prefix + ".centers")));
  Node* intra = l2_normalize(g, vlad, 1);
  Node* flat = reshape(g, intra, {1, cfg.clusters * cfg.in_dim});
  Node* normed = l2_normalize(g, flat, 1);
  Node* out = add_rowvec(g, matmul(g, normed, g.param(store.get(prefix + ".out.weight"))),
                         g.param(store.get(prefix + ".out.bias")));
  return l2_normalize(g, out, 1);
}

}  // namespace aegis
