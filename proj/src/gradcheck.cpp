#include "aegis/gradcheck.hpp"

#include <cmath>

#include "aegis/attention.hpp"
#include "aegis/dataset.hpp"
#include "aegis/embedding.hpp"
#include "aegis/kpconv.hpp"
#include "aegis/metric.hpp"
#include "aegis/netvlad.hpp"
#include "aegis/network.hpp"

namespace aegis {

double grad_check(const std::function<Node*(Graph&)>& build, const std::vector<Parameter*>& params,
                  double h) {
  for (Parameter* p : params) p->zero_grad();
  {
    Graph g;
    Node* out = build(g);
    if (!out->val.is_scalar()) fail(ErrorKind::usage, "grad_check: build must produce a scalar");
    g.backward(out);
    g.accumulate_param_grads();
  }
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);

  auto value_at = [&]() {
    Graph g(false);
    return build(g)->val[0];
  };

  double worst = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Parameter* p = params[pi];
    for (int64_t e = 0; e < p->value.numel(); ++e) {
      double orig = p->value[e];
      p->value[e] = orig + h;
      double f_plus = value_at();
      p->value[e] = orig - h;
      double f_minus = value_at();
      p->value[e] = orig;
      double fd = (f_plus - f_minus) / (2.0 * h);
      double an = analytic[pi][e];
      double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1.0});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

namespace {

Tensor random_tensor(const Shape& s, Rng& rng, double scale = 1.0) {
  Tensor t(s);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, scale);
  return t;
}

// Reduces any tensor node to a scalar with uneven weights so every element
// of the output contributes a distinct gradient.
Node* pin(Graph& g, Node* x, uint64_t salt) {
  Rng rng(mix_seed(0xC0FFEE, salt));
  Tensor w(x->val.shape);
  for (int64_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-1.0, 1.0);
  return sum_all(g, mul(g, x, g.input(std::move(w))));
}

struct Suite {
  double tol;
  std::vector<GradCheckCase> results;

  void run(const std::string& name, const std::vector<Parameter*>& params,
           const std::function<Node*(Graph&)>& build) {
    GradCheckCase c;
    c.name = name;
    c.max_rel_err = grad_check(build, params);
    c.ok = c.max_rel_err < tol;
    results.push_back(c);
  }
};

}  // namespace

std::vector<GradCheckCase> gradient_suite(uint64_t seed, double tol) {
  Suite s{tol, {}};
  Rng rng(mix_seed(seed, 0xD1CE));

  {  // elementwise family
    ParamStore ps;
    Parameter& a = ps.create("a", random_tensor({3, 4}, rng));
    Parameter& b = ps.create("b", random_tensor({3, 4}, rng));
    s.run("add_sub_mul_affine", ps.all(), [&](Graph& g) {
      Node* na = g.param(a);
      Node* nb = g.param(b);
      Node* y = add(g, mul(g, na, nb), sub(g, na, affine(g, nb, 0.7, -0.2)));
      return pin(g, y, 1);
    });
  }
  {
    ParamStore ps;
    Parameter& w = ps.create("w", random_tensor({4, 5}, rng));
    Parameter& x = ps.create("x", random_tensor({3, 4}, rng));
    Parameter& bias = ps.create("bias", random_tensor({1, 5}, rng, 0.3));
    s.run("matmul_bias_lrelu", ps.all(), [&](Graph& g) {
      Node* y = leaky_relu(g, add_rowvec(g, matmul(g, g.param(x), g.param(w)), g.param(bias)), 0.1);
      return pin(g, y, 2);
    });
  }
  {
    ParamStore ps;
    Parameter& a = ps.create("a", random_tensor({3, 6}, rng));
    Parameter& b = ps.create("b", random_tensor({4, 6}, rng));
    s.run("matmul_nt", ps.all(), [&](Graph& g) { return pin(g, matmul_nt(g, g.param(a), g.param(b)), 3); });
  }
  {
    ParamStore ps;
    Parameter& x = ps.create("x", random_tensor({4, 5}, rng));
    s.run("softmax_rows", ps.all(), [&](Graph& g) { return pin(g, softmax(g, g.param(x), 1), 4); });
    s.run("softmax_cols", ps.all(), [&](Graph& g) { return pin(g, softmax(g, g.param(x), 0), 5); });
    s.run("l2_normalize_rows", ps.all(),
          [&](Graph& g) { return pin(g, l2_normalize(g, g.param(x), 1), 6); });
  }
  {
    ParamStore ps;
    Parameter& x = ps.create("x", random_tensor({5}, rng));
    s.run("l2_normalize_vector", ps.all(),
          [&](Graph& g) { return pin(g, l2_normalize(g, g.param(x), 0), 7); });
  }
  {
    ParamStore ps;
    Parameter& x = ps.create("logits", random_tensor({5, 4}, rng));
    std::vector<int> labels{2, 0, 255, 3, 1};
    s.run("cross_entropy", ps.all(),
          [&](Graph& g) { return cross_entropy(g, g.param(x), labels, 255); });
  }
  {
    ParamStore ps;
    Parameter& a = ps.create("a", random_tensor({2, 3}, rng));
    Parameter& b = ps.create("b", random_tensor({4, 3}, rng));
    Parameter& c = ps.create("c", random_tensor({2, 5}, rng));
    s.run("concat_rows", ps.all(),
          [&](Graph& g) { return pin(g, concat(g, {g.param(a), g.param(b)}, 0), 8); });
    s.run("concat_cols", ps.all(),
          [&](Graph& g) { return pin(g, concat(g, {g.param(a), g.param(c)}, 1), 9); });
  }
  {
    ParamStore ps;
    Parameter& x = ps.create("x", random_tensor({5, 3}, rng));
    std::vector<int> take{4, 0, 2, 2, 1};
    std::vector<int> put{1, 0, 2, 1, 0};
    s.run("gather_scatter_rowscale", ps.all(), [&](Graph& g) {
      Node* picked = gather_rows(g, g.param(x), take);
      Node* pooled = scatter_sum_rows(g, picked, put, 3);
      return pin(g, row_scale(g, pooled, {0.5, 2.0, -1.25}), 10);
    });
  }
  {
    ParamStore ps;
    Parameter& x = ps.create("x", random_tensor({2, 6}, rng));
    s.run("reshape", ps.all(), [&](Graph& g) { return pin(g, reshape(g, g.param(x), {3, 4}), 11); });
  }
  {
    ParamStore ps;
    Parameter& a = ps.create("a", random_tensor({1, 6}, rng));
    Parameter& b = ps.create("b", random_tensor({1, 6}, rng));
    s.run("distance_sqrt", ps.all(), [&](Graph& g) {
      Node* d = sub(g, g.param(a), g.param(b));
      return sqrt_elem(g, sum_all(g, mul(g, d, d)));
    });
  }
  {
    ParamStore ps;
    Parameter& a = ps.create("a", Tensor::scalar(0.8));
    Parameter& b = ps.create("b", Tensor::scalar(0.2));
    Parameter& c = ps.create("c", Tensor::scalar(-0.4));
    s.run("max_of_hinges", ps.all(), [&](Graph& g) {
      std::vector<Node*> hs;
      for (Parameter* p : {&a, &b, &c})
        hs.push_back(leaky_relu(g, affine(g, g.param(*p), 1.0, 0.1), 0.0));
      return max_of(g, hs);
    });
  }
  {
    ParamStore ps;
    Parameter& x = ps.create("x", random_tensor({6, 3}, rng));
    Parameter& gamma = ps.create("gamma", random_tensor({3}, rng, 0.2));
    Parameter& beta = ps.create("beta", random_tensor({3}, rng, 0.2));
    for (int64_t i = 0; i < gamma.value.numel(); ++i) gamma.value[i] += 1.0;
    Tensor rm({3}), rv = Tensor::full({3}, 1.0);
    s.run("batch_norm_train", ps.all(), [&](Graph& g) {
      Node* y = batch_norm(g, g.param(x), g.param(gamma), g.param(beta), rm, rv, 0.9, 1e-5, true);
      return pin(g, y, 12);
    });
    s.run("batch_norm_eval", ps.all(), [&](Graph& g) {
      Node* y = batch_norm(g, g.param(x), g.param(gamma), g.param(beta), rm, rv, 0.9, 1e-5, false);
      return pin(g, y, 13);
    });
  }
  {
    ParamStore ps;
    Parameter& assign = ps.create("assign", random_tensor({6, 4}, rng));
    Parameter& x = ps.create("x", random_tensor({6, 3}, rng));
    Parameter& centers = ps.create("centers", random_tensor({4, 3}, rng));
    s.run("vlad_aggregate", ps.all(), [&](Graph& g) {
      return pin(g, vlad_aggregate(g, g.param(assign), g.param(x), g.param(centers)), 14);
    });
  }

  // composed blocks ---------------------------------------------------------

  std::vector<Vec3f> cloud_pts;
  {
    Rng crng(mix_seed(seed, 0xB0A7));
    for (int i = 0; i < 40; ++i)
      cloud_pts.push_back({static_cast<float>(crng.uniform(0.0, 1.2)),
                           static_cast<float>(crng.uniform(0.0, 1.2)),
                           static_cast<float>(crng.uniform(0.0, 0.6))});
  }
  GridSubsample sub = grid_subsample(cloud_pts, 0.3);
  NeighborIndex nbrs = radius_neighbors(sub.centers, sub.centers, 0.75, 26);
  std::vector<Vec3d> offs = kernel_points(5, 0.45, 1337);
  KpGeometry geo{&sub.centers, &sub.centers, &nbrs, &offs, 0.3};
  {
    ParamStore ps;
    Parameter& feat = ps.create("feat", random_tensor({static_cast<int>(sub.centers.size()), 3}, rng));
    Parameter& kernel = ps.create("kernel", random_tensor({5, 3, 4}, rng, 0.5));
    Parameter& gamma = ps.create("gamma", Tensor::full({4}, 1.0));
    Parameter& beta = ps.create("beta", random_tensor({4}, rng, 0.1));
    Tensor rm({4}), rv = Tensor::full({4}, 1.0);
    s.run("kpconv_block", ps.all(), [&](Graph& g) {
      Node* conv = kp_conv(g, g.param(feat), g.param(kernel), geo);
      Node* bn = batch_norm(g, conv, g.param(gamma), g.param(beta), rm, rv, 0.9, 1e-5, true);
      return pin(g, leaky_relu(g, bn, 0.1), 15);
    });
  }
  {
    ParamStore ps;
    Rng prng(mix_seed(seed, 0x5A));
    SAConfig sa;
    sa.d_model = 8;
    sa.heads = 2;
    sa.d_out = 6;
    sa.ff_hidden = 16;
    register_sa_params(ps, "sa", sa, prng);
    Parameter& x = ps.create("x", random_tensor({7, 8}, rng, 0.7));
    s.run("sa_layer", ps.all(), [&](Graph& g) { return pin(g, sa_layer(g, ps, "sa", g.param(x), sa), 16); });
  }
  {
    ParamStore ps;
    Rng prng(mix_seed(seed, 0x5B));
    NetVladConfig vc{6, 4, 12};
    register_netvlad_params(ps, "vlad", vc, prng);
    Parameter& x = ps.create("x", random_tensor({9, 6}, rng, 0.7));
    s.run("netvlad", ps.all(), [&](Graph& g) { return pin(g, netvlad(g, ps, "vlad", g.param(x), vc), 17); });
  }
  {
    ParamStore ps;
    Rng prng(mix_seed(seed, 0x5C));
    EmbedConfig ec;
    ec.tap_widths = {4, 8};
    ec.heads = 2;
    ec.fused_dim = 6;
    ec.ff_ratio = 2;
    ec.clusters = 3;
    ec.out_dim = 10;
    register_embed_params(ps, ec, prng);
    Parameter& t0 = ps.create("tap0", random_tensor({6, 4}, rng, 0.7));
    Parameter& t1 = ps.create("tap1", random_tensor({4, 8}, rng, 0.7));
    s.run("embedding_head", ps.all(), [&](Graph& g) {
      return pin(g, embed_run(g, ps, {g.param(t0), g.param(t1)}, ec), 18);
    });
  }
  {
    ParamStore ps;
    auto mk = [&](const std::string& n) -> Parameter& {
      Tensor t = random_tensor({1, 8}, rng);
      return ps.create(n, std::move(t));
    };
    Parameter& anchor = mk("anchor");
    Parameter& p0 = mk("p0");
    Parameter& p1 = mk("p1");
    Parameter& n0 = mk("n0");
    Parameter& n1 = mk("n1");
    Parameter& star = mk("star");
    s.run("lazy_quadruplet", ps.all(), [&](Graph& g) {
      return lazy_quadruplet_loss(g, g.param(anchor), {g.param(p0), g.param(p1)},
                                  {g.param(n0), g.param(n1)}, g.param(star), 0.5, 0.2);
    });
  }
  {
    // Whole segmentation path on a pocket-sized cloud.
    RgbPointCloud cloud;
    Rng crng(mix_seed(seed, 0xE2E));
    cloud.room = "t";
    for (int i = 0; i < 50; ++i) {
      cloud.pos.push_back({static_cast<float>(crng.uniform(0.0, 1.5)),
                           static_cast<float>(crng.uniform(0.0, 1.5)),
                           static_cast<float>(crng.uniform(0.0, 0.8))});
      cloud.color.push_back({static_cast<uint8_t>(crng.uniform_int(256)),
                             static_cast<uint8_t>(crng.uniform_int(256)),
                             static_cast<uint8_t>(crng.uniform_int(256))});
      cloud.label.push_back(static_cast<uint8_t>(i % 7 == 3 ? 255 : crng.uniform_int(3)));
    }
    EncoderConfig ec;
    ec.blocks = 2;
    ec.width = 4;
    ec.classes = 3;
    ec.cell0 = 0.35;
    ec.kernel_points = 5;
    ec.tap_blocks = {2};
    EncoderNet net(ec);
    ParamStore ps;
    Rng prng(mix_seed(seed, 0x5D));
    net.register_encoder_params(ps, prng);
    net.register_decoder_params(ps, prng);
    Pyramid pyr = net.build_pyramid(cloud);
    std::vector<int> labels(cloud.label.begin(), cloud.label.end());
    s.run("encoder_decoder", ps.all(), [&](Graph& g) {
      auto feats = net.encode(g, ps, pyr, true);
      Node* logits = net.decode(g, ps, pyr, feats, true);
      return cross_entropy(g, logits, labels, 255);
    });
  }

  return s.results;
}

}  // namespace aegis
