#include "aegis/embedding.hpp"

namespace aegis {

namespace {

SAConfig level_sa(const EmbedConfig& cfg, int width) {
  SAConfig sa;
  sa.d_model = width;
  sa.heads = cfg.heads;
  sa.d_out = cfg.fused_dim;
  sa.ff_hidden = cfg.ff_ratio * width;
  sa.lrelu_slope = cfg.lrelu_slope;
  sa.enabled = cfg.attention;
  return sa;
}

SAConfig fusion_sa(const EmbedConfig& cfg) {
  SAConfig sa;
  sa.d_model = cfg.fused_dim;
  sa.heads = cfg.heads;
  sa.d_out = cfg.fused_dim;
  sa.ff_hidden = cfg.ff_ratio * cfg.fused_dim;
  sa.lrelu_slope = cfg.lrelu_slope;
  sa.enabled = cfg.attention;
  return sa;
}

}  // namespace

void register_embed_params(ParamStore& store, const EmbedConfig& cfg, Rng& rng) {
  if (cfg.tap_widths.empty()) fail(ErrorKind::config, "embedding needs at least one encoder tap");
  for (size_t i = 0; i < cfg.tap_widths.size(); ++i)
    register_sa_params(store, "emb.sa" + std::to_string(i), level_sa(cfg, cfg.tap_widths[i]), rng);
  register_sa_params(store, "emb.fuse", fusion_sa(cfg), rng);
  NetVladConfig vc{cfg.fused_dim, cfg.clusters, cfg.out_dim};
  register_netvlad_params(store, "emb.vlad", vc, rng);
}

Node* embed_run(Graph& g, ParamStore& store, const std::vector<Node*>& taps, const EmbedConfig& cfg) {
  if (taps.size() != cfg.tap_widths.size())
    fail(ErrorKind::dimension, "embed_run: expected " + std::to_string(cfg.tap_widths.size()) +
                                   " taps, got " + std::to_string(taps.size()));
  std::vector<Node*> leveled;
  leveled.reserve(taps.size());
  for (size_t i = 0; i < taps.size(); ++i) {
    if (taps[i]->val.shape[1] != cfg.tap_widths[i])
      fail(ErrorKind::dimension, "embed_run: tap " + std::to_string(i) + " width mismatch");
    leveled.push_back(sa_layer(g, store, "emb.sa" + std::to_string(i), taps[i], level_sa(cfg, cfg.tap_widths[i])));
  }
  Node* stacked = leveled.size() == 1 ? leveled[0] : concat(g, leveled, 0);
  Node* fused = sa_layer(g, store, "emb.fuse", stacked, fusion_sa(cfg));
  NetVladConfig vc{cfg.fused_dim, cfg.clusters, cfg.out_dim};
  return netvlad(g, store, "emb.vlad", fused, vc);
}

std::vector<Tensor> tap_features(const EncoderNet& net, ParamStore& enc_store, const Pyramid& pyr) {
  Graph g(false);
  auto feats = net.encode(g, enc_store, pyr, false);
  auto tap_nodes = net.taps(feats);
  std::vector<Tensor> out;
  out.reserve(tap_nodes.size());
  for (Node* n : tap_nodes) out.push_back(n->val);
  return out;
}

Tensor describe(const EncoderNet& net, ParamStore& enc_store, ParamStore& emb_store,
                const EmbedConfig& cfg, const RgbPointCloud& cloud) {
  Pyramid pyr = net.build_pyramid(cloud);
  std::vector<Tensor> taps = tap_features(net, enc_store, pyr);
  Graph g(false);
  std::vector<Node*> tap_nodes;
  tap_nodes.reserve(taps.size());
  for (Tensor& t : taps) tap_nodes.push_back(g.input(std::move(t)));
  Node* d = embed_run(g, emb_store, tap_nodes, cfg);
  return d->val;
}

}  // namespace aegis
