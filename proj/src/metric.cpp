#include "aegis/metric.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <set>

#include "aegis/optim.hpp"

namespace aegis {

namespace {

double centroid_dist(const PlaceRecord& a, const PlaceRecord& b) {
  double dx = a.centroid[0] - b.centroid[0];
  double dy = a.centroid[1] - b.centroid[1];
  double dz = a.centroid[2] - b.centroid[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// Uniform choice of n distinct entries, in draw order.
std::vector<int> sample_without_replacement(std::vector<int> pool, int n, Rng& rng) {
  std::vector<int> out;
  out.reserve(n);
  for (int k = 0; k < n; ++k) {
    int pick = rng.uniform_int(static_cast<int>(pool.size()));
    out.push_back(pool[pick]);
    pool[pick] = pool.back();
    pool.pop_back();
  }
  return out;
}

}  // namespace

bool is_positive(const PlaceRecord& a, const PlaceRecord& b, const MarginConfig& m) {
  return a.room == b.room && centroid_dist(a, b) < m.pos_radius;
}

bool is_negative(const PlaceRecord& a, const PlaceRecord& b, const MarginConfig& m) {
  return a.room != b.room || centroid_dist(a, b) >= m.neg_radius;
}

TrainingTuple mine_tuple(const std::vector<PlaceRecord>& records, int anchor, int n_pos, int n_neg,
                         const MarginConfig& m, uint64_t seed) {
  if (anchor < 0 || anchor >= static_cast<int>(records.size()))
    fail(ErrorKind::index, "mine_tuple: anchor index out of range");
  if (n_pos < 1 || n_neg < 1) fail(ErrorKind::usage, "mine_tuple: need at least one positive and negative");
  const PlaceRecord& a = records[anchor];

  std::vector<int> pos_pool, neg_pool;
  for (int i = 0; i < static_cast<int>(records.size()); ++i) {
    if (i == anchor) continue;
    if (is_positive(a, records[i], m)) pos_pool.push_back(i);
    if (is_negative(a, records[i], m)) neg_pool.push_back(i);
  }
  if (static_cast<int>(pos_pool.size()) < n_pos)
    fail(ErrorKind::mining, "anchor " + std::to_string(a.id) + ": only " +
                                std::to_string(pos_pool.size()) + " positives available, need " +
                                std::to_string(n_pos));
  if (static_cast<int>(neg_pool.size()) < n_neg)
    fail(ErrorKind::mining, "anchor " + std::to_string(a.id) + ": only " +
                                std::to_string(neg_pool.size()) + " negatives available, need " +
                                std::to_string(n_neg));

  // A draw is only valid when some room stays clear of the whole tuple for
  // the distractor. Check that such a configuration exists at all, then
  // reject negative sets that block every room.
  bool feasible = false;
  std::set<std::string> foreign_rooms;
  for (int i : neg_pool) foreign_rooms.insert(records[i].room);
  for (const std::string& room : foreign_rooms) {
    bool room_has_member = false;
    int negs_elsewhere = 0;
    for (int i = 0; i < static_cast<int>(records.size()); ++i) {
      if (i == anchor) continue;
      if (records[i].room == room && records[i].room != a.room) room_has_member = true;
    }
    for (int i : neg_pool)
      if (records[i].room != room) ++negs_elsewhere;
    if (room_has_member && negs_elsewhere >= n_neg) {
      feasible = true;
      break;
    }
  }
  if (!feasible)
    fail(ErrorKind::mining,
         "anchor " + std::to_string(a.id) + ": no room left to draw a distractor from");

  Rng rng(seed);
  TrainingTuple t;
  t.anchor = anchor;
  t.positives = sample_without_replacement(pos_pool, n_pos, rng);
  for (int attempt = 0; attempt < 1024; ++attempt) {
    t.negatives = sample_without_replacement(neg_pool, n_neg, rng);
    std::set<std::string> used_rooms{a.room};
    for (int i : t.negatives) used_rooms.insert(records[i].room);
    std::vector<int> far_pool;
    for (int i = 0; i < static_cast<int>(records.size()); ++i)
      if (i != anchor && !used_rooms.count(records[i].room)) far_pool.push_back(i);
    if (far_pool.empty()) continue;
    t.distractor = far_pool[rng.uniform_int(static_cast<int>(far_pool.size()))];
    return t;
  }
  fail(ErrorKind::mining,
       "anchor " + std::to_string(a.id) + ": could not draw a tuple with a free distractor room");
}

Node* descriptor_distance(Graph& g, Node* a, Node* b) {
  if (!a->val.same_shape(b->val))
    fail(ErrorKind::dimension, "descriptor_distance: shape mismatch");
  Node* d = sub(g, a, b);
  return sqrt_elem(g, sum_all(g, mul(g, d, d)));
}

Node* lazy_quadruplet_loss(Graph& g, Node* anchor, const std::vector<Node*>& positives,
                           const std::vector<Node*>& negatives, Node* distractor, double alpha,
                           double beta) {
  if (positives.empty() || negatives.empty())
    fail(ErrorKind::usage, "lazy_quadruplet_loss: needs positives and negatives");

  std::vector<Node*> dp, dn, dstar;
  dp.reserve(positives.size());
  for (Node* p : positives) dp.push_back(descriptor_distance(g, anchor, p));
  dn.reserve(negatives.size());
  dstar.reserve(negatives.size());
  for (Node* n : negatives) {
    dn.push_back(descriptor_distance(g, anchor, n));
    dstar.push_back(descriptor_distance(g, n, distractor));
  }

  // The margin is added after the distance difference so that two equal
  // distances cancel exactly and the hinge sits at the margin itself.
  std::vector<Node*> h1, h2;
  for (Node* p : dp)
    for (Node* n : dn) h1.push_back(leaky_relu(g, affine(g, sub(g, p, n), 1.0, alpha), 0.0));
  for (Node* p : dp)
    for (Node* s : dstar) h2.push_back(leaky_relu(g, affine(g, sub(g, p, s), 1.0, beta), 0.0));
  return add(g, max_of(g, h1), max_of(g, h2));
}

double lazy_quadruplet_loss_value(const Tensor& anchor, const std::vector<Tensor>& positives,
                                  const std::vector<Tensor>& negatives, const Tensor& distractor,
                                  double alpha, double beta) {
  Graph g(false);
  Node* a = g.input(anchor);
  std::vector<Node*> ps, ns;
  for (const Tensor& t : positives) ps.push_back(g.input(t));
  for (const Tensor& t : negatives) ns.push_back(g.input(t));
  Node* d = g.input(distractor);
  return lazy_quadruplet_loss(g, a, ps, ns, d, alpha, beta)->val[0];
}

Stage2Result train_stage2(const EncoderNet& net, ParamStore& enc_store, ParamStore& emb_store,
                          const EmbedConfig& cfg, const std::vector<RgbPointCloud>& clouds,
                          const std::vector<PlaceRecord>& records, const Stage2Options& opt,
                          std::ostream& log) {
  if (clouds.size() != records.size())
    fail(ErrorKind::usage, "stage 2: clouds and records must align");
  if (clouds.empty()) fail(ErrorKind::usage, "stage 2: no training clouds");

  for (Parameter* p : enc_store.all()) p->trainable = false;

  // The encoder is frozen, so tap features are constants per cloud.
  std::vector<std::vector<Tensor>> taps(clouds.size());
  for (size_t i = 0; i < clouds.size(); ++i) {
    Pyramid pyr = net.build_pyramid(clouds[i]);
    taps[i] = tap_features(net, enc_store, pyr);
  }

  auto forward_descriptor = [&](Graph& g, int ci) {
    std::vector<Node*> tap_nodes;
    tap_nodes.reserve(taps[ci].size());
    for (const Tensor& t : taps[ci]) tap_nodes.push_back(g.input(t));
    return embed_run(g, emb_store, tap_nodes, cfg);
  };

  AdamOptimizer adam(emb_store.all(), opt.lr, opt.beta1, opt.beta2, opt.adam_eps, opt.weight_decay,
                     opt.lr_decay);
  std::vector<int> visit(clouds.size());
  std::iota(visit.begin(), visit.end(), 0);

  Stage2Result res;
  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(opt.seed, static_cast<uint64_t>(epoch)));
    for (size_t i = visit.size(); i > 1; --i)
      std::swap(visit[i - 1], visit[shuffle_rng.uniform_int(static_cast<int>(i))]);

    double loss_sum = 0.0;
    int active_terms = 0, total_terms = 0;
    for (int anchor : visit) {
      uint64_t tuple_seed = mix_seed(mix_seed(opt.seed, static_cast<uint64_t>(epoch)),
                                     static_cast<uint64_t>(anchor) + 1);
      TrainingTuple tup = mine_tuple(records, anchor, opt.positives, opt.negatives, opt.margins,
                                     tuple_seed);
      std::vector<int> members{tup.anchor};
      members.insert(members.end(), tup.positives.begin(), tup.positives.end());
      members.insert(members.end(), tup.negatives.begin(), tup.negatives.end());
      members.push_back(tup.distractor);

      // Descriptors without tape, then a small taped graph over descriptor
      // leaves to get per-descriptor gradients, then taped re-runs for just
      // the members the loss actually touches. Keeps one network graph alive
      // at a time.
      std::vector<Tensor> descs(members.size());
      for (size_t mi = 0; mi < members.size(); ++mi) {
        Graph g(false);
        descs[mi] = forward_descriptor(g, members[mi])->val;
      }

      Graph lg;
      std::vector<Node*> leaves(members.size());
      for (size_t mi = 0; mi < members.size(); ++mi) leaves[mi] = lg.input(descs[mi], true);
      std::vector<Node*> pos_nodes(leaves.begin() + 1, leaves.begin() + 1 + tup.positives.size());
      std::vector<Node*> neg_nodes(leaves.begin() + 1 + tup.positives.size(), leaves.end() - 1);
      Node* loss = lazy_quadruplet_loss(lg, leaves[0], pos_nodes, neg_nodes, leaves.back(),
                                        opt.margins.alpha, opt.margins.beta);
      lg.backward(loss);
      loss_sum += loss->val[0];
      // Two hinge maxima per tuple; count how many bite.
      for (Node* term : loss->inputs) {
        if (term->val[0] > 0.0) ++active_terms;
        ++total_terms;
      }

      emb_store.zero_grads();
      bool any = false;
      for (size_t mi = 0; mi < members.size(); ++mi) {
        if (!leaves[mi]->has_grad()) continue;
        bool nonzero = false;
        for (int64_t e = 0; e < leaves[mi]->grad.numel(); ++e)
          if (leaves[mi]->grad[e] != 0.0) {
            nonzero = true;
            break;
          }
        if (!nonzero) continue;
        any = true;
        Graph g;
        Node* d = forward_descriptor(g, members[mi]);
        g.backward(d, leaves[mi]->grad);
        g.accumulate_param_grads();
      }
      if (any) adam.step();
    }
    adam.end_epoch();
    res.final_mean_loss = loss_sum / static_cast<double>(visit.size());
    res.final_active_rate = total_terms > 0 ? static_cast<double>(active_terms) / total_terms : 0.0;
    log << epoch << "," << res.final_mean_loss << "," << res.final_active_rate << "\n";
  }
  return res;
}

}  // namespace aegis
