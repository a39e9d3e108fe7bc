#include "aegis/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <variant>

namespace aegis {

namespace {

using Slot = std::variant<int RunConfig::*, double RunConfig::*, bool RunConfig::*,
                          uint64_t RunConfig::*, std::vector<int> RunConfig::*>;

struct Key {
  const char* name;
  Slot slot;
};

// Single source of truth for key names: parsing, dumping and hashing all walk
// this table in order.
const std::vector<Key>& key_table() {
  static const std::vector<Key> keys = {
      {"seed", &RunConfig::seed},
      {"threads", &RunConfig::threads},
      {"data.rooms", &RunConfig::data_rooms},
      {"data.keyframes_per_room", &RunConfig::data_keyframes},
      {"data.min_extent", &RunConfig::data_min_extent},
      {"data.max_extent", &RunConfig::data_max_extent},
      {"data.min_height", &RunConfig::data_min_height},
      {"data.max_height", &RunConfig::data_max_height},
      {"data.min_objects", &RunConfig::data_min_objects},
      {"data.max_objects", &RunConfig::data_max_objects},
      {"data.density", &RunConfig::data_density},
      {"data.view_radius", &RunConfig::data_view_radius},
      {"data.dropout", &RunConfig::data_dropout},
      {"data.jitter", &RunConfig::data_jitter},
      {"data.circle_frac", &RunConfig::data_circle_frac},
      {"data.unlabeled_frac", &RunConfig::data_unlabeled_frac},
      {"net.width", &RunConfig::net_width},
      {"net.blocks", &RunConfig::net_blocks},
      {"net.classes", &RunConfig::net_classes},
      {"net.cell0", &RunConfig::net_cell0},
      {"net.cell_growth", &RunConfig::net_cell_growth},
      {"net.radius_scale", &RunConfig::net_radius_scale},
      {"net.kp_extent", &RunConfig::net_kp_extent},
      {"net.kernel_points", &RunConfig::net_kernel_points},
      {"net.neighbor_cap", &RunConfig::net_neighbor_cap},
      {"net.kernel_seed", &RunConfig::net_kernel_seed},
      {"net.bn_momentum", &RunConfig::net_bn_momentum},
      {"net.bn_eps", &RunConfig::net_bn_eps},
      {"net.lrelu_slope", &RunConfig::net_lrelu_slope},
      {"net.taps", &RunConfig::net_taps},
      {"embed.heads", &RunConfig::embed_heads},
      {"embed.fused_dim", &RunConfig::embed_fused_dim},
      {"embed.ff_ratio", &RunConfig::embed_ff_ratio},
      {"embed.clusters", &RunConfig::embed_clusters},
      {"embed.out_dim", &RunConfig::embed_out_dim},
      {"embed.attention", &RunConfig::embed_attention},
      {"stage1.epochs", &RunConfig::stage1_epochs},
      {"stage1.lr", &RunConfig::stage1_lr},
      {"stage1.momentum", &RunConfig::stage1_momentum},
      {"stage1.weight_decay", &RunConfig::stage1_weight_decay},
      {"stage1.lr_decay", &RunConfig::stage1_lr_decay},
      {"stage2.epochs", &RunConfig::stage2_epochs},
      {"stage2.lr", &RunConfig::stage2_lr},
      {"stage2.beta1", &RunConfig::stage2_beta1},
      {"stage2.beta2", &RunConfig::stage2_beta2},
      {"stage2.adam_eps", &RunConfig::stage2_adam_eps},
      {"stage2.weight_decay", &RunConfig::stage2_weight_decay},
      {"stage2.lr_decay", &RunConfig::stage2_lr_decay},
      {"stage2.positives", &RunConfig::stage2_positives},
      {"stage2.negatives", &RunConfig::stage2_negatives},
      {"loss.alpha", &RunConfig::loss_alpha},
      {"loss.beta", &RunConfig::loss_beta},
      {"loss.pos_radius", &RunConfig::loss_pos_radius},
      {"loss.neg_radius", &RunConfig::loss_neg_radius},
  };
  return keys;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void bad(const std::string& origin, int line, const std::string& what) {
  fail(ErrorKind::config, origin + ":" + std::to_string(line) + ": " + what);
}

void assign(RunConfig& cfg, const Key& key, const std::string& raw, const std::string& origin, int line) {
  try {
    if (auto* p = std::get_if<int RunConfig::*>(&key.slot)) {
      size_t used;
      int v = std::stoi(raw, &used);
      if (used != raw.size()) throw std::invalid_argument("trailing characters");
      cfg.**p = v;
    } else if (auto* p = std::get_if<double RunConfig::*>(&key.slot)) {
      size_t used;
      double v = std::stod(raw, &used);
      if (used != raw.size()) throw std::invalid_argument("trailing characters");
      cfg.**p = v;
    } else if (auto* p = std::get_if<uint64_t RunConfig::*>(&key.slot)) {
      size_t used;
      unsigned long long v = std::stoull(raw, &used);
      if (used != raw.size()) throw std::invalid_argument("trailing characters");
      cfg.**p = v;
    } else if (auto* p = std::get_if<bool RunConfig::*>(&key.slot)) {
      if (raw == "on" || raw == "true" || raw == "1")
        cfg.**p = true;
      else if (raw == "off" || raw == "false" || raw == "0")
        cfg.**p = false;
      else
        throw std::invalid_argument("expected on/off");
    } else {
      auto* pv = std::get_if<std::vector<int> RunConfig::*>(&key.slot);
      std::vector<int> vals;
      std::istringstream ls(raw);
      std::string item;
      while (std::getline(ls, item, ',')) {
        item = trim(item);
        if (item.empty()) throw std::invalid_argument("empty list item");
        size_t used;
        vals.push_back(std::stoi(item, &used));
        if (used != item.size()) throw std::invalid_argument("trailing characters");
      }
      if (vals.empty()) throw std::invalid_argument("empty list");
      cfg.**pv = std::move(vals);
    }
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    bad(origin, line, std::string("bad value for ") + key.name + ": " + e.what());
  }
}

std::string format_value(const RunConfig& cfg, const Key& key) {
  std::ostringstream os;
  os.precision(17);
  if (auto* p = std::get_if<int RunConfig::*>(&key.slot))
    os << cfg.**p;
  else if (auto* p = std::get_if<double RunConfig::*>(&key.slot))
    os << cfg.**p;
  else if (auto* p = std::get_if<uint64_t RunConfig::*>(&key.slot))
    os << cfg.**p;
  else if (auto* p = std::get_if<bool RunConfig::*>(&key.slot))
    os << (cfg.**p ? "on" : "off");
  else {
    auto* pv = std::get_if<std::vector<int> RunConfig::*>(&key.slot);
    const auto& v = cfg.**pv;
    for (size_t i = 0; i < v.size(); ++i) {
      if (i) os << ",";
      os << v[i];
    }
  }
  return os.str();
}

}  // namespace

RunConfig RunConfig::from_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash_at = line.find('#');
    if (hash_at != std::string::npos) line = line.substr(0, hash_at);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) bad(origin, lineno, "expected `key = value`");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) bad(origin, lineno, "missing key");
    if (value.empty()) bad(origin, lineno, "missing value for " + key);
    const Key* found = nullptr;
    for (const Key& k : key_table())
      if (key == k.name) {
        found = &k;
        break;
      }
    if (!found) bad(origin, lineno, "unknown key '" + key + "'");
    assign(cfg, *found, value, origin, lineno);
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str(), path);
}

void RunConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorKind::config, what);
  };
  need(threads >= 0 && threads <= 64, "threads must be in [0,64]");
  need(data_rooms >= 1 && data_rooms <= 1000, "data.rooms must be in [1,1000]");
  need(data_keyframes >= 1 && data_keyframes <= 1000, "data.keyframes_per_room must be in [1,1000]");
  need(data_min_extent >= 2.5, "data.min_extent must be at least 2.5");
  need(data_max_extent >= data_min_extent, "data.max_extent must be at least data.min_extent");
  need(data_min_height > 0 && data_max_height >= data_min_height, "room heights out of order");
  need(data_min_objects >= 0 && data_max_objects >= data_min_objects, "object counts out of order");
  need(data_density > 0, "data.density must be positive");
  need(data_view_radius > 0, "data.view_radius must be positive");
  need(data_dropout >= 0 && data_dropout < 1, "data.dropout must be in [0,1)");
  need(data_jitter >= 0, "data.jitter must be nonnegative");
  need(data_circle_frac > 0 && data_circle_frac < 1, "data.circle_frac must be in (0,1)");
  need(data_unlabeled_frac >= 0 && data_unlabeled_frac < 1, "data.unlabeled_frac must be in [0,1)");
  need(net_width >= 1 && net_width <= 1024, "net.width must be in [1,1024]");
  need(net_blocks >= 1 && net_blocks <= 8, "net.blocks must be in [1,8]");
  need(net_classes >= 2 && net_classes <= 254, "net.classes must be in [2,254]");
  need(net_cell0 > 0, "net.cell0 must be positive");
  need(net_cell_growth > 1.0, "net.cell_growth must exceed 1");
  need(net_radius_scale > 0, "net.radius_scale must be positive");
  need(net_kp_extent > 0, "net.kp_extent must be positive");
  need(net_kernel_points >= 2 && net_kernel_points <= 128, "net.kernel_points must be in [2,128]");
  need(net_neighbor_cap >= 1, "net.neighbor_cap must be positive");
  need(net_bn_momentum > 0 && net_bn_momentum < 1, "net.bn_momentum must be in (0,1)");
  need(net_bn_eps > 0, "net.bn_eps must be positive");
  need(net_lrelu_slope >= 0 && net_lrelu_slope < 1, "net.lrelu_slope must be in [0,1)");
  need(!net_taps.empty(), "net.taps must list at least one block");
  for (int t : net_taps) need(t >= 1 && t <= net_blocks, "net.taps entries must name valid blocks");
  for (size_t i = 1; i < net_taps.size(); ++i)
    need(net_taps[i] > net_taps[i - 1], "net.taps must be strictly increasing");
  need(embed_heads >= 1 && embed_heads <= 32, "embed.heads must be in [1,32]");
  need(embed_fused_dim >= embed_heads, "embed.fused_dim must be at least embed.heads");
  need(embed_fused_dim % embed_heads == 0, "embed.fused_dim must be divisible by embed.heads");
  for (int t : net_taps)
    need((net_width << (t - 1)) % embed_heads == 0, "tap widths must be divisible by embed.heads");
  need(embed_ff_ratio >= 1 && embed_ff_ratio <= 16, "embed.ff_ratio must be in [1,16]");
  need(embed_clusters >= 1 && embed_clusters <= 4096, "embed.clusters must be in [1,4096]");
  need(embed_out_dim == 256, "embed.out_dim must be 256, the descriptor file width");
  need(stage1_epochs >= 1, "stage1.epochs must be positive");
  need(stage1_lr > 0, "stage1.lr must be positive");
  need(stage1_momentum >= 0 && stage1_momentum < 1, "stage1.momentum must be in [0,1)");
  need(stage1_weight_decay >= 0, "stage1.weight_decay must be nonnegative");
  need(stage1_lr_decay > 0 && stage1_lr_decay <= 1, "stage1.lr_decay must be in (0,1]");
  need(stage2_epochs >= 1, "stage2.epochs must be positive");
  need(stage2_lr > 0, "stage2.lr must be positive");
  need(stage2_beta1 >= 0 && stage2_beta1 < 1, "stage2.beta1 must be in [0,1)");
  need(stage2_beta2 >= 0 && stage2_beta2 < 1, "stage2.beta2 must be in [0,1)");
  need(stage2_adam_eps > 0, "stage2.adam_eps must be positive");
  need(stage2_weight_decay >= 0, "stage2.weight_decay must be nonnegative");
  need(stage2_lr_decay > 0 && stage2_lr_decay <= 1, "stage2.lr_decay must be in (0,1]");
  need(stage2_positives >= 1, "stage2.positives must be positive");
  need(stage2_negatives >= 1, "stage2.negatives must be positive");
  need(loss_alpha > 0, "loss.alpha must be positive");
  need(loss_beta > 0, "loss.beta must be positive");
  need(loss_pos_radius > 0, "loss.pos_radius must be positive");
  need(loss_neg_radius >= loss_pos_radius, "loss.neg_radius must be at least loss.pos_radius");
}

std::string RunConfig::resolved_text() const {
  std::ostringstream os;
  for (const Key& k : key_table()) os << k.name << " = " << format_value(*this, k) << "\n";
  return os.str();
}

SceneSpec RunConfig::scene() const {
  SceneSpec s;
  s.seed = seed;
  s.rooms = data_rooms;
  s.keyframes_per_room = data_keyframes;
  s.min_extent = data_min_extent;
  s.max_extent = data_max_extent;
  s.min_height = data_min_height;
  s.max_height = data_max_height;
  s.min_objects = data_min_objects;
  s.max_objects = data_max_objects;
  s.density = data_density;
  s.view_radius = data_view_radius;
  s.dropout = data_dropout;
  s.jitter = data_jitter;
  s.circle_frac = data_circle_frac;
  s.unlabeled_frac = data_unlabeled_frac;
  return s;
}

EncoderConfig RunConfig::encoder() const {
  EncoderConfig e;
  e.blocks = net_blocks;
  e.width = net_width;
  e.classes = net_classes;
  e.cell0 = net_cell0;
  e.cell_growth = net_cell_growth;
  e.radius_scale = net_radius_scale;
  e.kp_extent = net_kp_extent;
  e.kernel_points = net_kernel_points;
  e.neighbor_cap = net_neighbor_cap;
  e.kernel_seed = net_kernel_seed;
  e.bn_momentum = net_bn_momentum;
  e.bn_eps = net_bn_eps;
  e.lrelu_slope = net_lrelu_slope;
  e.tap_blocks = net_taps;
  return e;
}

EmbedConfig RunConfig::embed() const {
  EmbedConfig m;
  EncoderConfig e = encoder();
  m.tap_widths.clear();
  for (int t : net_taps) m.tap_widths.push_back(e.width_at(t));
  m.heads = embed_heads;
  m.fused_dim = embed_fused_dim;
  m.ff_ratio = embed_ff_ratio;
  m.clusters = embed_clusters;
  m.out_dim = embed_out_dim;
  m.lrelu_slope = net_lrelu_slope;
  m.attention = embed_attention;
  return m;
}

Stage1Options RunConfig::stage1() const {
  Stage1Options o;
  o.epochs = stage1_epochs;
  o.lr = stage1_lr;
  o.momentum = stage1_momentum;
  o.weight_decay = stage1_weight_decay;
  o.lr_decay = stage1_lr_decay;
  o.seed = seed;
  return o;
}

Stage2Options RunConfig::stage2() const {
  Stage2Options o;
  o.epochs = stage2_epochs;
  o.positives = stage2_positives;
  o.negatives = stage2_negatives;
  o.lr = stage2_lr;
  o.beta1 = stage2_beta1;
  o.beta2 = stage2_beta2;
  o.adam_eps = stage2_adam_eps;
  o.weight_decay = stage2_weight_decay;
  o.lr_decay = stage2_lr_decay;
  o.margins.alpha = loss_alpha;
  o.margins.beta = loss_beta;
  o.margins.pos_radius = loss_pos_radius;
  o.margins.neg_radius = loss_neg_radius;
  o.seed = seed;
  return o;
}

}  // namespace aegis
