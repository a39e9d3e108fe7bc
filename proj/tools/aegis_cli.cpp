#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "aegis/config.hpp"
#include "aegis/dataset.hpp"
#include "aegis/embedding.hpp"
#include "aegis/gradcheck.hpp"
#include "aegis/metric.hpp"
#include "aegis/network.hpp"
#include "aegis/retrieval.hpp"

namespace {

using namespace aegis;

struct Common {
  std::string config_path;
  int64_t seed_override = -1;
  int threads_override = -1;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "config file (key = value lines)");
  cmd->add_option("--seed", c.seed_override, "override the config seed");
  cmd->add_option("--threads", c.threads_override, "override worker thread count (0 = auto)");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : RunConfig::from_file(c.config_path);
  if (c.seed_override >= 0) cfg.seed = static_cast<uint64_t>(c.seed_override);
  if (c.threads_override >= 0) cfg.threads = c.threads_override;
  cfg.validate();
  set_thread_count(cfg.threads);
  std::printf("config %016" PRIx64 "\n", cfg.hash());
  return cfg;
}

std::vector<ManifestItem> split_items(const std::vector<ManifestItem>& all, const std::string& split) {
  if (split == "all") return all;
  std::vector<ManifestItem> out;
  for (const auto& it : all)
    if (it.split == split) out.push_back(it);
  if (out.empty()) fail(ErrorKind::usage, "no manifest entries in split '" + split + "'");
  return out;
}

PlaceRecord record_of(const ManifestItem& it) {
  PlaceRecord r;
  r.id = it.id;
  r.room = it.room;
  r.centroid = it.centroid;
  return r;
}

// Registers encoder + decoder parameters the way train-seg creates them, so
// a stage-1 checkpoint can be loaded into the store.
void init_seg_store(const RunConfig& cfg, const EncoderNet& net, ParamStore& store) {
  Rng rng(mix_seed(cfg.seed, 0x1717));
  net.register_encoder_params(store, rng);
  net.register_decoder_params(store, rng);
}

void init_embed_store(const RunConfig& cfg, const EmbedConfig& ec, ParamStore& store) {
  Rng rng(mix_seed(cfg.seed, 0x1718));
  register_embed_params(store, ec, rng);
}

RgbPointCloud load_cloud_file(const std::string& path) {
  std::string ext = std::filesystem::path(path).extension().string();
  if (ext == ".ply") return import_ply(path);
  return read_keyframe(path);
}

int run(int argc, char** argv) {
  CLI::App app{"aegis-net place recognition pipeline"};
  app.require_subcommand(1);

  Common c_gen, c_seg, c_emb, c_db, c_query, c_eval, c_grad;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic indoor dataset");
  std::string gen_out;
  gen->add_option("--out", gen_out, "dataset root directory")->required();
  add_common(gen, c_gen);

  auto* seg = app.add_subcommand("train-seg", "stage 1: train the segmentation network");
  std::string seg_data, seg_out;
  seg->add_option("--data", seg_data, "dataset root")->required();
  seg->add_option("--out", seg_out, "checkpoint file to write")->required();
  add_common(seg, c_seg);

  auto* emb = app.add_subcommand("train-embed", "stage 2: train the descriptor head");
  std::string emb_data, emb_encoder, emb_out;
  emb->add_option("--data", emb_data, "dataset root")->required();
  emb->add_option("--encoder", emb_encoder, "stage-1 checkpoint")->required();
  emb->add_option("--out", emb_out, "embedding checkpoint to write")->required();
  add_common(emb, c_emb);

  auto* db = app.add_subcommand("build-db", "compute descriptors for a split");
  std::string db_data, db_split = "all", db_encoder, db_embed, db_out;
  db->add_option("--data", db_data, "dataset root")->required();
  db->add_option("--split", db_split, "train, val, test or all");
  db->add_option("--encoder", db_encoder, "stage-1 checkpoint")->required();
  db->add_option("--embed", db_embed, "stage-2 checkpoint")->required();
  db->add_option("--out", db_out, "descriptor database to write")->required();
  add_common(db, c_db);

  auto* query = app.add_subcommand("query", "look up one keyframe in a database");
  std::string q_db, q_input, q_encoder, q_embed;
  int q_k = 3;
  query->add_option("--db", q_db, "descriptor database")->required();
  query->add_option("--input", q_input, "keyframe (.aegi) or ascii ply")->required();
  query->add_option("--encoder", q_encoder, "stage-1 checkpoint")->required();
  query->add_option("--embed", q_embed, "stage-2 checkpoint")->required();
  query->add_option("-k,--top", q_k, "matches to print");
  add_common(query, c_query);

  auto* ev = app.add_subcommand("eval", "recall@k of queries against a database");
  std::string ev_db, ev_queries, ev_ks = "1,2,3";
  ev->add_option("--db", ev_db, "descriptor database")->required();
  ev->add_option("--queries", ev_queries, "query descriptor database")->required();
  ev->add_option("--k", ev_ks, "comma separated k values");
  add_common(ev, c_eval);

  auto* grad = app.add_subcommand("gradcheck", "finite-difference audit of the autodiff engine");
  add_common(grad, c_grad);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 1;
  }

  if (gen->parsed()) {
    RunConfig cfg = resolve(c_gen);
    auto items = generate_dataset(cfg.scene(), gen_out);
    int train = 0, val = 0, test = 0;
    for (const auto& it : items) {
      if (it.split == "train") ++train;
      if (it.split == "val") ++val;
      if (it.split == "test") ++test;
    }
    std::printf("wrote %zu keyframes (%d train, %d val, %d test) under %s\n", items.size(), train, val,
                test, gen_out.c_str());
    return 0;
  }

  if (seg->parsed()) {
    RunConfig cfg = resolve(c_seg);
    auto items = split_items(load_manifest(seg_data), "train");
    std::vector<RgbPointCloud> clouds;
    clouds.reserve(items.size());
    for (const auto& it : items) clouds.push_back(read_keyframe(it.path));
    EncoderNet net(cfg.encoder());
    ParamStore store;
    init_seg_store(cfg, net, store);
    Stage1Result res = train_stage1(net, store, clouds, cfg.stage1(), std::cout);
    store.save(seg_out);
    std::printf("checkpoint %s (final loss %.4f, accuracy %.4f)\n", seg_out.c_str(), res.final_loss,
                res.final_accuracy);
    return 0;
  }

  if (emb->parsed()) {
    RunConfig cfg = resolve(c_emb);
    auto items = split_items(load_manifest(emb_data), "train");
    std::vector<RgbPointCloud> clouds;
    std::vector<PlaceRecord> records;
    for (const auto& it : items) {
      clouds.push_back(read_keyframe(it.path));
      records.push_back(record_of(it));
    }
    EncoderNet net(cfg.encoder());
    ParamStore enc_store;
    init_seg_store(cfg, net, enc_store);
    enc_store.load(emb_encoder);
    ParamStore emb_store;
    init_embed_store(cfg, cfg.embed(), emb_store);
    Stage2Result res =
        train_stage2(net, enc_store, emb_store, cfg.embed(), clouds, records, cfg.stage2(), std::cout);
    emb_store.save(emb_out);
    std::printf("checkpoint %s (final loss %.4f, active rate %.4f)\n", emb_out.c_str(),
                res.final_mean_loss, res.final_active_rate);
    return 0;
  }

  if (db->parsed()) {
    RunConfig cfg = resolve(c_db);
    auto items = split_items(load_manifest(db_data), db_split);
    EncoderNet net(cfg.encoder());
    ParamStore enc_store;
    init_seg_store(cfg, net, enc_store);
    enc_store.load(db_encoder);
    ParamStore emb_store;
    init_embed_store(cfg, cfg.embed(), emb_store);
    emb_store.load(db_embed);

    DescriptorDatabase out;
    for (const auto& it : items) {
      RgbPointCloud cloud = read_keyframe(it.path);
      Tensor d = describe(net, enc_store, emb_store, cfg.embed(), cloud);
      DescriptorEntry e;
      e.id = it.id;
      e.room = it.room;
      e.centroid = {static_cast<float>(it.centroid[0]), static_cast<float>(it.centroid[1]),
                    static_cast<float>(it.centroid[2])};
      e.desc.resize(kDescriptorDim);
      for (int j = 0; j < kDescriptorDim; ++j) e.desc[j] = static_cast<float>(d[j]);
      out.add(std::move(e));
    }
    out.save(db_out);
    std::printf("wrote %d descriptors to %s\n", out.size(), db_out.c_str());
    return 0;
  }

  if (query->parsed()) {
    RunConfig cfg = resolve(c_query);
    DescriptorDatabase base = DescriptorDatabase::load(q_db);
    EncoderNet net(cfg.encoder());
    ParamStore enc_store;
    init_seg_store(cfg, net, enc_store);
    enc_store.load(q_encoder);
    ParamStore emb_store;
    init_embed_store(cfg, cfg.embed(), emb_store);
    emb_store.load(q_embed);

    RgbPointCloud cloud = load_cloud_file(q_input);
    Tensor d = describe(net, enc_store, emb_store, cfg.embed(), cloud);
    std::vector<float> desc(kDescriptorDim);
    for (int j = 0; j < kDescriptorDim; ++j) desc[j] = static_cast<float>(d[j]);
    auto matches = query_knn(base, desc, q_k);
    std::printf("rank  id    room        distance\n");
    for (size_t r = 0; r < matches.size(); ++r) {
      const DescriptorEntry& e = base.entry(matches[r].index);
      std::printf("%-5zu %-5u %-11s %.6f\n", r + 1, e.id, e.room.c_str(),
                  std::sqrt(matches[r].sq_dist));
    }
    return 0;
  }

  if (ev->parsed()) {
    RunConfig cfg = resolve(c_eval);
    (void)cfg;
    DescriptorDatabase base = DescriptorDatabase::load(ev_db);
    DescriptorDatabase queries = DescriptorDatabase::load(ev_queries);
    std::vector<int> ks;
    std::istringstream ls(ev_ks);
    std::string item;
    while (std::getline(ls, item, ',')) {
      try {
        ks.push_back(std::stoi(item));
      } catch (const std::exception&) {
        fail(ErrorKind::usage, "bad k value '" + item + "'");
      }
    }
    RecallReport rep = evaluate(base, queries, ks);
    std::printf("%s\n", rep.machine_line().c_str());
    std::printf("%s", rep.table().c_str());
    return 0;
  }

  if (grad->parsed()) {
    RunConfig cfg = resolve(c_grad);
    auto cases = gradient_suite(cfg.seed);
    bool all_ok = true;
    for (const auto& c : cases) {
      std::printf("%-24s %.3e %s\n", c.name.c_str(), c.max_rel_err, c.ok ? "ok" : "FAIL");
      all_ok = all_ok && c.ok;
    }
    if (!all_ok) fail(ErrorKind::numeric, "gradient audit failed");
    std::printf("%zu cases ok\n", cases.size());
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
