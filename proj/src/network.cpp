#include "aegis/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "aegis/optim.hpp"

namespace aegis {

double EncoderConfig::cell_at(int block) const { return cell0 * std::pow(cell_growth, block - 1); }

int EncoderConfig::width_at(int block) const { return width << (block - 1); }

EncoderNet::EncoderNet(EncoderConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.blocks < 1) fail(ErrorKind::config, "encoder needs at least one block");
  for (int t : cfg_.tap_blocks)
    if (t < 1 || t > cfg_.blocks) fail(ErrorKind::config, "tap block out of range");
  auto unit = kernel_points(cfg_.kernel_points, 1.0, cfg_.kernel_seed);
  offsets_.resize(cfg_.blocks);
  for (int b = 1; b <= cfg_.blocks; ++b) {
    double r = cfg_.kp_extent * cfg_.cell_at(b);
    offsets_[b - 1] = unit;
    for (auto& p : offsets_[b - 1]) {
      p[0] *= r;
      p[1] *= r;
      p[2] *= r;
    }
  }
}

namespace {

void register_bn(ParamStore& store, const std::string& prefix, int c) {
  store.create(prefix + ".gamma", Tensor::full({c}, 1.0));
  store.create(prefix + ".beta", Tensor({c}));
  store.create(prefix + ".run_mean", Tensor({c}), false);
  store.create(prefix + ".run_var", Tensor::full({c}, 1.0), false);
}

Node* apply_bn(Graph& g, ParamStore& store, Node* x, const std::string& prefix, double momentum, double eps,
               bool training) {
  Node* gamma = g.param(store.get(prefix + ".gamma"));
  Node* beta = g.param(store.get(prefix + ".beta"));
  Tensor& rm = store.get(prefix + ".run_mean").value;
  Tensor& rv = store.get(prefix + ".run_var").value;
  return batch_norm(g, x, gamma, beta, rm, rv, momentum, eps, training);
}

}  // namespace

void EncoderNet::register_encoder_params(ParamStore& store, Rng& rng) const {
  for (int b = 1; b <= cfg_.blocks; ++b) {
    int cin = b == 1 ? 4 : cfg_.width_at(b - 1);
    int cout = cfg_.width_at(b);
    std::string prefix = "enc.b" + std::to_string(b);
    store.create(prefix + ".kernel",
                 he_uniform({cfg_.kernel_points, cin, cout}, cfg_.kernel_points * cin, rng));
    register_bn(store, prefix + ".bn", cout);
  }
}

void EncoderNet::register_decoder_params(ParamStore& store, Rng& rng) const {
  for (int l = cfg_.blocks - 1; l >= 1; --l) {
    int cin = cfg_.width_at(l + 1) + cfg_.width_at(l);
    int cout = cfg_.width_at(l);
    std::string prefix = "dec.u" + std::to_string(l);
    store.create(prefix + ".weight", he_uniform({cin, cout}, cin, rng));
    register_bn(store, prefix + ".bn", cout);
  }
  int d = cfg_.width_at(1);
  store.create("dec.u0.weight", he_uniform({d, d}, d, rng));
  register_bn(store, "dec.u0.bn", d);
  store.create("dec.head.weight", he_uniform({d, cfg_.classes}, d, rng));
  store.create("dec.head.bias", Tensor({1, cfg_.classes}));
}

Pyramid EncoderNet::build_pyramid(const RgbPointCloud& cloud) const {
  if (cloud.size() < 2) fail(ErrorKind::degenerate, "cloud has fewer than two points");
  if (cloud.color.size() != cloud.pos.size())
    fail(ErrorKind::dimension, "cloud is missing per-point colors");

  Pyramid pyr;
  std::vector<int> order = canonical_order(cloud);
  pyr.sorted = apply_order(cloud, order);
  pyr.unsort.resize(order.size());
  for (size_t i = 0; i < order.size(); ++i) pyr.unsort[order[i]] = static_cast<int>(i);

  pyr.levels.resize(cfg_.blocks);
  const std::vector<Vec3f>* below = &pyr.sorted.pos;
  for (int b = 1; b <= cfg_.blocks; ++b) {
    PyramidLevel& lvl = pyr.levels[b - 1];
    lvl.sub = grid_subsample(*below, cfg_.cell_at(b));
    lvl.points = lvl.sub.centers;
    if (static_cast<int>(lvl.points.size()) < 2)
      fail(ErrorKind::degenerate,
           "pyramid level " + std::to_string(b) + " collapsed to fewer than two points");
    lvl.nbrs = radius_neighbors(lvl.points, lvl.points, cfg_.radius_scale * cfg_.cell_at(b),
                                cfg_.neighbor_cap);
    lvl.up_nearest = nearest_indices(*below, lvl.points);
    below = &lvl.points;
  }
  return pyr;
}

std::vector<Node*> EncoderNet::encode(Graph& g, ParamStore& store, const Pyramid& pyr, bool training) const {
  const RgbPointCloud& cloud = pyr.sorted;
  Tensor feat0({cloud.size(), 4});
  for (int i = 0; i < cloud.size(); ++i) {
    feat0.at(i, 0) = cloud.color[i][0] / 255.0;
    feat0.at(i, 1) = cloud.color[i][1] / 255.0;
    feat0.at(i, 2) = cloud.color[i][2] / 255.0;
    feat0.at(i, 3) = 1.0;
  }
  Node* x = g.input(std::move(feat0));

  std::vector<Node*> outs;
  outs.reserve(cfg_.blocks);
  for (int b = 1; b <= cfg_.blocks; ++b) {
    const PyramidLevel& lvl = pyr.levels[b - 1];
    // Pool features into the coarser voxels (mean over members).
    Node* pooled = scatter_sum_rows(g, x, lvl.sub.voxel_of, static_cast<int>(lvl.points.size()));
    std::vector<double> inv(lvl.sub.counts.size());
    for (size_t i = 0; i < inv.size(); ++i) inv[i] = 1.0 / lvl.sub.counts[i];
    pooled = row_scale(g, pooled, std::move(inv));

    KpGeometry geo{&lvl.points, &lvl.points, &lvl.nbrs, &offsets_[b - 1], cfg_.cell_at(b)};
    std::string prefix = "enc.b" + std::to_string(b);
    Node* conv = kp_conv(g, pooled, g.param(store.get(prefix + ".kernel")), geo);
    Node* bn = apply_bn(g, store, conv, prefix + ".bn", cfg_.bn_momentum, cfg_.bn_eps, training);
    x = leaky_relu(g, bn, cfg_.lrelu_slope);
    outs.push_back(x);
  }
  return outs;
}

std::vector<Node*> EncoderNet::taps(const std::vector<Node*>& block_feats) const {
  std::vector<Node*> out;
  out.reserve(cfg_.tap_blocks.size());
  for (int b : cfg_.tap_blocks) out.push_back(block_feats[b - 1]);
  return out;
}

Node* EncoderNet::unary(Graph& g, ParamStore& store, Node* x, const std::string& name, bool training) const {
  Node* w = g.param(store.get(name + ".weight"));
  Node* lin = matmul(g, x, w);
  Node* bn = apply_bn(g, store, lin, name + ".bn", cfg_.bn_momentum, cfg_.bn_eps, training);
  return leaky_relu(g, bn, cfg_.lrelu_slope);
}

Node* EncoderNet::decode(Graph& g, ParamStore& store, const Pyramid& pyr,
                         const std::vector<Node*>& block_feats, bool training) const {
  Node* x = block_feats[cfg_.blocks - 1];
  for (int l = cfg_.blocks - 1; l >= 1; --l) {
    // Bring the coarser features down to level l, then mix with the skip.
    Node* up = gather_rows(g, x, pyr.levels[l].up_nearest);
    Node* cat = concat(g, {up, block_feats[l - 1]}, 1);
    x = unary(g, store, cat, "dec.u" + std::to_string(l), training);
  }
  Node* up0 = gather_rows(g, x, pyr.levels[0].up_nearest);
  Node* x0 = unary(g, store, up0, "dec.u0", training);
  Node* logits = add_rowvec(g, matmul(g, x0, g.param(store.get("dec.head.weight"))),
                            g.param(store.get("dec.head.bias")));
  return gather_rows(g, logits, pyr.unsort);
}

double segmentation_accuracy(const Tensor& logits, const std::vector<uint8_t>& labels) {
  if (logits.rank() != 2 || logits.shape[0] != static_cast<int>(labels.size()))
    fail(ErrorKind::dimension, "segmentation_accuracy: logits and labels disagree");
  int c = logits.shape[1];
  int64_t hit = 0, total = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 255) continue;
    const double* row = logits.data() + static_cast<int64_t>(i) * c;
    int arg = 0;
    for (int j = 1; j < c; ++j)
      if (row[j] > row[arg]) arg = j;
    ++total;
    if (arg == labels[i]) ++hit;
  }
  if (total == 0) fail(ErrorKind::degenerate, "segmentation_accuracy: no labeled points");
  return static_cast<double>(hit) / static_cast<double>(total);
}

namespace {

std::vector<int> sorted_labels(const Pyramid& pyr) {
  std::vector<int> out(pyr.sorted.label.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = pyr.sorted.label[i];
  return out;
}

}  // namespace

Stage1Result train_stage1(EncoderNet& net, ParamStore& store, const std::vector<RgbPointCloud>& clouds,
                          const Stage1Options& opt, std::ostream& log) {
  if (clouds.empty()) fail(ErrorKind::usage, "stage 1: no training clouds");
  for (const auto& c : clouds)
    if (!c.has_labels()) fail(ErrorKind::usage, "stage 1: cloud without labels in room " + c.room);

  std::vector<Pyramid> pyramids;
  pyramids.reserve(clouds.size());
  for (const auto& c : clouds) pyramids.push_back(net.build_pyramid(c));

  SgdOptimizer sgd(store.all(), opt.lr, opt.momentum, opt.weight_decay, opt.lr_decay);
  std::vector<int> visit(clouds.size());
  std::iota(visit.begin(), visit.end(), 0);

  Stage1Result res;
  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(opt.seed, static_cast<uint64_t>(epoch)));
    for (size_t i = visit.size(); i > 1; --i)
      std::swap(visit[i - 1], visit[shuffle_rng.uniform_int(static_cast<int>(i))]);

    double loss_sum = 0.0;
    for (int ci : visit) {
      const Pyramid& pyr = pyramids[ci];
      // Labels follow the pyramid's sorted order; the decoder maps back to
      // caller order, so feed it labels in caller order.
      std::vector<int> labels(clouds[ci].label.begin(), clouds[ci].label.end());
      store.zero_grads();
      Graph g;
      auto feats = net.encode(g, store, pyr, true);
      Node* logits = net.decode(g, store, pyr, feats, true);
      Node* loss = cross_entropy(g, logits, labels, 255);
      g.backward(loss);
      g.accumulate_param_grads();
      sgd.step();
      loss_sum += loss->val[0];
    }
    sgd.end_epoch();
    res.final_loss = loss_sum / static_cast<double>(clouds.size());

    // Accuracy over the training split with frozen statistics.
    double acc_hit = 0.0, acc_total = 0.0;
    for (size_t ci = 0; ci < clouds.size(); ++ci) {
      Graph g(false);
      auto feats = net.encode(g, store, pyramids[ci], false);
      Node* logits = net.decode(g, store, pyramids[ci], feats, false);
      double a = segmentation_accuracy(logits->val, clouds[ci].label);
      int labeled = 0;
      for (uint8_t l : clouds[ci].label)
        if (l != 255) ++labeled;
      acc_hit += a * labeled;
      acc_total += labeled;
    }
    res.final_accuracy = acc_hit / acc_total;
    log << epoch << "," << res.final_loss << "," << res.final_accuracy << "\n";
  }
  return res;
}

}  // namespace aegis
