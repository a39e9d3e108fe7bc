// Python surface of the pipeline: the CLI flows as plain functions plus the
// geometry and loss primitives, all speaking lists and dicts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <iomanip>
#include <sstream>

#include "aegis/config.hpp"
#include "aegis/dataset.hpp"
#include "aegis/embedding.hpp"
#include "aegis/gradcheck.hpp"
#include "aegis/metric.hpp"
#include "aegis/network.hpp"
#include "aegis/retrieval.hpp"

namespace py = pybind11;
using namespace aegis;

namespace {

RunConfig parse_config(const std::string& text) {
  RunConfig cfg = text.empty() ? RunConfig{} : RunConfig::from_text(text, "<config>");
  cfg.validate();
  set_thread_count(cfg.threads);
  return cfg;
}

void init_seg_store(const RunConfig& cfg, const EncoderNet& net, ParamStore& store) {
  Rng rng(mix_seed(cfg.seed, 0x1717));
  net.register_encoder_params(store, rng);
  net.register_decoder_params(store, rng);
}

void init_embed_store(const RunConfig& cfg, ParamStore& store) {
  Rng rng(mix_seed(cfg.seed, 0x1718));
  register_embed_params(store, cfg.embed(), rng);
}

py::list manifest_out(const std::vector<ManifestItem>& items) {
  py::list out;
  for (const auto& it : items) {
    py::dict d;
    d["id"] = it.id;
    d["room"] = it.room;
    d["split"] = it.split;
    d["centroid"] = it.centroid;
    d["path"] = it.path;
    out.append(d);
  }
  return out;
}

Tensor row_tensor(const std::vector<double>& v) {
  return Tensor({1, static_cast<int>(v.size())}, std::vector<double>(v));
}

Tensor rows_tensor(const std::vector<std::vector<double>>& rows) {
  int r = static_cast<int>(rows.size());
  int c = r ? static_cast<int>(rows[0].size()) : 0;
  Tensor t({std::max(r, 1), std::max(c, 1)});
  if (!r || !c) fail(ErrorKind::usage, "expected a non-empty list of equal-length rows");
  for (int i = 0; i < r; ++i) {
    if (static_cast<int>(rows[i].size()) != c)
      fail(ErrorKind::usage, "expected a non-empty list of equal-length rows");
    for (int j = 0; j < c; ++j) t.at(i, j) = rows[i][j];
  }
  return t;
}

std::vector<std::vector<double>> rows_out(const Tensor& t) {
  std::vector<std::vector<double>> out(static_cast<size_t>(t.rows()));
  for (int i = 0; i < t.rows(); ++i) {
    out[i].resize(static_cast<size_t>(t.cols()));
    for (int j = 0; j < t.cols(); ++j) out[i][j] = t.at(i, j);
  }
  return out;
}

std::vector<float> file_descriptor(const RunConfig& cfg, const std::string& encoder_ckpt,
                                   const std::string& embed_ckpt, const std::string& cloud_path) {
  EncoderNet net(cfg.encoder());
  ParamStore enc_store;
  init_seg_store(cfg, net, enc_store);
  enc_store.load(encoder_ckpt);
  ParamStore emb_store;
  init_embed_store(cfg, emb_store);
  emb_store.load(embed_ckpt);

  RgbPointCloud cloud = cloud_path.ends_with(".ply") ? import_ply(cloud_path)
                                                     : read_keyframe(cloud_path);
  Tensor d = describe(net, enc_store, emb_store, cfg.embed(), cloud);
  std::vector<float> desc(kDescriptorDim);
  for (int j = 0; j < kDescriptorDim; ++j) desc[j] = static_cast<float>(d[j]);
  return desc;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "indoor place recognition pipeline";

  py::register_exception<Error>(m, "AegisError");

  m.def("set_threads", &set_thread_count, py::arg("n"));

  m.def(
      "config_hash",
      [](const std::string& config) {
        std::ostringstream s;
        s << std::hex << std::setw(16) << std::setfill('0') << parse_config(config).hash();
        return s.str();
      },
      py::arg("config") = "");

  // ---- dataset -------------------------------------------------------------

  m.def(
      "generate",
      [](const std::string& config, const std::string& out) {
        RunConfig cfg = parse_config(config);
        return manifest_out(generate_dataset(cfg.scene(), out));
      },
      py::arg("config"), py::arg("out"));

  m.def(
      "load_manifest", [](const std::string& root) { return manifest_out(load_manifest(root)); },
      py::arg("root"));

  // ---- training and retrieval ----------------------------------------------

  m.def(
      "train_seg",
      [](const std::string& config, const std::string& data, const std::string& out) {
        RunConfig cfg = parse_config(config);
        std::vector<RgbPointCloud> clouds;
        for (const auto& it : load_manifest(data))
          if (it.split == "train") clouds.push_back(read_keyframe(it.path));
        EncoderNet net(cfg.encoder());
        ParamStore store;
        init_seg_store(cfg, net, store);
        std::ostringstream log;
        Stage1Result res = train_stage1(net, store, clouds, cfg.stage1(), log);
        store.save(out);
        py::dict d;
        d["final_loss"] = res.final_loss;
        d["final_accuracy"] = res.final_accuracy;
        d["log"] = log.str();
        return d;
      },
      py::arg("config"), py::arg("data"), py::arg("out"));

  m.def(
      "train_embed",
      [](const std::string& config, const std::string& data, const std::string& encoder,
         const std::string& out) {
        RunConfig cfg = parse_config(config);
        std::vector<RgbPointCloud> clouds;
        std::vector<PlaceRecord> records;
        for (const auto& it : load_manifest(data)) {
          if (it.split != "train") continue;
          clouds.push_back(read_keyframe(it.path));
          records.push_back({it.id, it.room, it.centroid});
        }
        EncoderNet net(cfg.encoder());
        ParamStore enc_store;
        init_seg_store(cfg, net, enc_store);
        enc_store.load(encoder);
        ParamStore emb_store;
        init_embed_store(cfg, emb_store);
        std::ostringstream log;
        Stage2Result res =
            train_stage2(net, enc_store, emb_store, cfg.embed(), clouds, records, cfg.stage2(), log);
        emb_store.save(out);
        py::dict d;
        d["final_mean_loss"] = res.final_mean_loss;
        d["final_active_rate"] = res.final_active_rate;
        d["log"] = log.str();
        return d;
      },
      py::arg("config"), py::arg("data"), py::arg("encoder"), py::arg("out"));

  m.def(
      "build_db",
      [](const std::string& config, const std::string& data, const std::string& split,
         const std::string& encoder, const std::string& embed, const std::string& out) {
        RunConfig cfg = parse_config(config);
        EncoderNet net(cfg.encoder());
        ParamStore enc_store;
        init_seg_store(cfg, net, enc_store);
        enc_store.load(encoder);
        ParamStore emb_store;
        init_embed_store(cfg, emb_store);
        emb_store.load(embed);

        DescriptorDatabase db;
        for (const auto& it : load_manifest(data)) {
          if (split != "all" && it.split != split) continue;
          Tensor d = describe(net, enc_store, emb_store, cfg.embed(), read_keyframe(it.path));
          DescriptorEntry e;
          e.id = it.id;
          e.room = it.room;
          e.centroid = {static_cast<float>(it.centroid[0]), static_cast<float>(it.centroid[1]),
                        static_cast<float>(it.centroid[2])};
          e.desc.resize(kDescriptorDim);
          for (int j = 0; j < kDescriptorDim; ++j) e.desc[j] = static_cast<float>(d[j]);
          db.add(std::move(e));
        }
        if (db.size() == 0) fail(ErrorKind::usage, "no manifest entries in split '" + split + "'");
        db.save(out);
        return db.size();
      },
      py::arg("config"), py::arg("data"), py::arg("split"), py::arg("encoder"), py::arg("embed"),
      py::arg("out"));

  m.def(
      "describe_file",
      [](const std::string& config, const std::string& encoder, const std::string& embed,
         const std::string& input) {
        return file_descriptor(parse_config(config), encoder, embed, input);
      },
      py::arg("config"), py::arg("encoder"), py::arg("embed"), py::arg("input"));

  m.def(
      "query",
      [](const std::string& config, const std::string& db_path, const std::string& input,
         const std::string& encoder, const std::string& embed, int k) {
        RunConfig cfg = parse_config(config);
        DescriptorDatabase db = DescriptorDatabase::load(db_path);
        auto desc = file_descriptor(cfg, encoder, embed, input);
        py::list out;
        for (const Match& match : query_knn(db, desc, k)) {
          const DescriptorEntry& e = db.entry(match.index);
          py::dict d;
          d["id"] = e.id;
          d["room"] = e.room;
          d["distance"] = std::sqrt(match.sq_dist);
          out.append(d);
        }
        return out;
      },
      py::arg("config"), py::arg("db"), py::arg("input"), py::arg("encoder"), py::arg("embed"),
      py::arg("k") = 3);

  m.def(
      "evaluate",
      [](const std::string& db_path, const std::string& queries_path, const std::vector<int>& ks) {
        RecallReport rep =
            evaluate(DescriptorDatabase::load(db_path), DescriptorDatabase::load(queries_path), ks);
        py::dict d;
        d["ks"] = rep.ks;
        d["recall"] = rep.recall;
        d["n_queries"] = rep.n_queries;
        d["machine_line"] = rep.machine_line();
        return d;
      },
      py::arg("db"), py::arg("queries"), py::arg("ks") = std::vector<int>{1, 2, 3});

  // ---- geometry primitives ---------------------------------------------------

  m.def(
      "grid_subsample",
      [](const std::vector<Vec3f>& pos, double cell) {
        GridSubsample s = grid_subsample(pos, cell);
        py::dict d;
        d["centers"] = s.centers;
        d["voxel_of"] = s.voxel_of;
        d["counts"] = s.counts;
        return d;
      },
      py::arg("points"), py::arg("cell"));

  m.def(
      "radius_neighbors",
      [](const std::vector<Vec3f>& queries, const std::vector<Vec3f>& supports, double radius,
         int cap) {
        NeighborIndex n = radius_neighbors(queries, supports, radius, cap);
        return py::make_tuple(n.offsets, n.items);
      },
      py::arg("queries"), py::arg("supports"), py::arg("radius"), py::arg("cap"));

  m.def("kernel_points", &kernel_points, py::arg("count"), py::arg("radius"), py::arg("seed"));

  // ---- math primitives -------------------------------------------------------

  m.def(
      "softmax",
      [](const std::vector<std::vector<double>>& rows, int axis) {
        Graph g(false);
        return rows_out(softmax(g, g.input(rows_tensor(rows)), axis)->val);
      },
      py::arg("rows"), py::arg("axis") = 1);

  m.def(
      "l2_normalize",
      [](const std::vector<std::vector<double>>& rows, int axis) {
        Graph g(false);
        return rows_out(l2_normalize(g, g.input(rows_tensor(rows)), axis)->val);
      },
      py::arg("rows"), py::arg("axis") = 1);

  m.def(
      "lazy_quadruplet_loss",
      [](const std::vector<double>& anchor, const std::vector<std::vector<double>>& positives,
         const std::vector<std::vector<double>>& negatives, const std::vector<double>& distractor,
         double alpha, double beta) {
        std::vector<Tensor> pos, neg;
        for (const auto& p : positives) pos.push_back(row_tensor(p));
        for (const auto& n : negatives) neg.push_back(row_tensor(n));
        return lazy_quadruplet_loss_value(row_tensor(anchor), pos, neg, row_tensor(distractor), alpha,
                                          beta);
      },
      py::arg("anchor"), py::arg("positives"), py::arg("negatives"), py::arg("distractor"),
      py::arg("alpha") = 0.5, py::arg("beta") = 0.2);

  // ---- mining ----------------------------------------------------------------

  m.def(
      "is_positive",
      [](const std::string& room_a, const Vec3d& centroid_a, const std::string& room_b,
         const Vec3d& centroid_b, double pos_radius, double neg_radius) {
        MarginConfig m;
        m.pos_radius = pos_radius;
        m.neg_radius = neg_radius;
        return is_positive({0, room_a, centroid_a}, {1, room_b, centroid_b}, m);
      },
      py::arg("room_a"), py::arg("centroid_a"), py::arg("room_b"), py::arg("centroid_b"),
      py::arg("pos_radius") = 2.0, py::arg("neg_radius") = 4.0);

  m.def(
      "is_negative",
      [](const std::string& room_a, const Vec3d& centroid_a, const std::string& room_b,
         const Vec3d& centroid_b, double pos_radius, double neg_radius) {
        MarginConfig m;
        m.pos_radius = pos_radius;
        m.neg_radius = neg_radius;
        return is_negative({0, room_a, centroid_a}, {1, room_b, centroid_b}, m);
      },
      py::arg("room_a"), py::arg("centroid_a"), py::arg("room_b"), py::arg("centroid_b"),
      py::arg("pos_radius") = 2.0, py::arg("neg_radius") = 4.0);

  m.def(
      "mine_tuple",
      [](const std::vector<std::tuple<uint32_t, std::string, Vec3d>>& records, int anchor, int n_pos,
         int n_neg, double pos_radius, double neg_radius, uint64_t seed) {
        std::vector<PlaceRecord> recs;
        for (const auto& [id, room, centroid] : records) recs.push_back({id, room, centroid});
        MarginConfig m;
        m.pos_radius = pos_radius;
        m.neg_radius = neg_radius;
        TrainingTuple t = mine_tuple(recs, anchor, n_pos, n_neg, m, seed);
        py::dict d;
        d["anchor"] = t.anchor;
        d["positives"] = t.positives;
        d["negatives"] = t.negatives;
        d["distractor"] = t.distractor;
        return d;
      },
      py::arg("records"), py::arg("anchor"), py::arg("n_pos") = 2, py::arg("n_neg") = 6,
      py::arg("pos_radius") = 2.0, py::arg("neg_radius") = 4.0, py::arg("seed") = 0);

  // ---- verification ------------------------------------------------------------

  m.def(
      "gradient_suite",
      [](uint64_t seed, double tol) {
        py::list out;
        for (const auto& c : gradient_suite(seed, tol)) {
          py::dict d;
          d["name"] = c.name;
          d["max_rel_err"] = c.max_rel_err;
          d["ok"] = c.ok;
          out.append(d);
        }
        return out;
      },
      py::arg("seed") = 7, py::arg("tol") = 1e-4);
}
