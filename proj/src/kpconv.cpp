#include "aegis/kpconv.hpp"

#include <cmath>

namespace aegis {

namespace {

// Correlation of query q's neighbor y against every kernel point; returns the
// number of kernel points with nonzero weight written into (w, which_k).
int kernel_weights(const KpGeometry& geo, int q, int y, double* w, int* which_k) {
  const Vec3f& pq = (*geo.queries)[q];
  const Vec3f& py = (*geo.supports)[y];
  double dx = static_cast<double>(py[0]) - pq[0];
  double dy = static_cast<double>(py[1]) - pq[1];
  double dz = static_cast<double>(py[2]) - pq[2];
  int hits = 0;
  int K = static_cast<int>(geo.offsets->size());
  for (int k = 0; k < K; ++k) {
    const Vec3d& o = (*geo.offsets)[k];
    double rx = dx - o[0], ry = dy - o[1], rz = dz - o[2];
    double d = std::sqrt(rx * rx + ry * ry + rz * rz);
    double wk = 1.0 - d / geo.sigma;
    if (wk > 0.0) {
      w[hits] = wk;
      which_k[hits] = k;
      ++hits;
    }
  }
  return hits;
}

}  // namespace

Node* kp_gather(Graph& g, Node* features, const KpGeometry& geo) {
  if (features->val.rank() != 2)
    fail(ErrorKind::dimension, "kp_gather: features must be rank 2, got " + shape_str(features->val.shape));
  int ns = static_cast<int>(geo.supports->size());
  int nq = static_cast<int>(geo.queries->size());
  if (features->val.shape[0] != ns)
    fail(ErrorKind::dimension, "kp_gather: feature rows must match support count");
  if (static_cast<int>(geo.nbrs->offsets.size()) != nq + 1)
    fail(ErrorKind::dimension, "kp_gather: neighbor index does not match query count");
  if (geo.sigma <= 0.0) fail(ErrorKind::usage, "kp_gather: sigma must be positive");
  int cin = features->val.shape[1];
  int K = static_cast<int>(geo.offsets->size());

  Tensor out({nq, K * cin});
  const KpGeometry geom = geo;  // copy the pointer bundle by value
  parallel_for(nq, 8, [&](int64_t lo, int64_t hi) {
    std::vector<double> w(K);
    std::vector<int> wk(K);
    for (int64_t q = lo; q < hi; ++q) {
      double* orow = out.data() + q * (K * cin);
      for (int t = geom.nbrs->offsets[q]; t < geom.nbrs->offsets[q + 1]; ++t) {
        int y = geom.nbrs->items[t];
        int hits = kernel_weights(geom, static_cast<int>(q), y, w.data(), wk.data());
        const double* frow = features->val.data() + static_cast<int64_t>(y) * cin;
        for (int h = 0; h < hits; ++h) {
          double* dst = orow + wk[h] * cin;
          double ww = w[h];
          for (int c = 0; c < cin; ++c) dst[c] += ww * frow[c];
        }
      }
    }
  });

  return g.make("kp_gather", std::move(out), {features}, [features, geom, cin, K](Node& n) {
    if (!features->requires_grad) return;
    Tensor& gf = features->grad_buf();
    int nq = static_cast<int>(geom.queries->size());
    std::vector<double> w(K);
    std::vector<int> wk(K);
    for (int q = 0; q < nq; ++q) {
      const double* grow = n.grad.data() + static_cast<int64_t>(q) * (K * cin);
      for (int t = geom.nbrs->offsets[q]; t < geom.nbrs->offsets[q + 1]; ++t) {
        int y = geom.nbrs->items[t];
        int hits = kernel_weights(geom, q, y, w.data(), wk.data());
        double* dst = gf.data() + static_cast<int64_t>(y) * cin;
        for (int h = 0; h < hits; ++h) {
          const double* src = grow + wk[h] * cin;
          double ww = w[h];
          for (int c = 0; c < cin; ++c) dst[c] += ww * src[c];
        }
      }
    }
  });
}

Node* kp_conv(Graph& g, Node* features, Node* weights, const KpGeometry& geo) {
  if (weights->val.rank() != 3)
    fail(ErrorKind::dimension, "kp_conv: weights must be rank 3 [K, Cin, Cout]");
  int K = weights->val.shape[0], cin = weights->val.shape[1], cout = weights->val.shape[2];
  if (K != static_cast<int>(geo.offsets->size()))
    fail(ErrorKind::dimension, "kp_conv: weight K does not match kernel point count");
  if (features->val.shape[1] != cin)
    fail(ErrorKind::dimension, "kp_conv: feature width " + std::to_string(features->val.shape[1]) +
                                   " does not match weight Cin " + std::to_string(cin));
  Node* h = kp_gather(g, features, geo);
  Node* w2 = reshape(g, weights, {K * cin, cout});
  return matmul(g, h, w2);
}

}  // namespace aegis
