#include "aegis/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace fs = std::filesystem;

namespace aegis {

const char* const kClassNames[kNumClasses] = {"floor", "wall", "table", "chair",
                                              "cabinet", "lamp", "sofa", "clutter"};

namespace {

constexpr char kMagic[4] = {'A', 'E', 'G', 'I'};
constexpr uint32_t kVersion = 1;

[[noreturn]] void corrupt(const std::string& path, int64_t offset, const std::string& what) {
  fail(ErrorKind::format, path + ": " + what + " at byte " + std::to_string(offset));
}

uint8_t clamp_u8(double v) { return static_cast<uint8_t>(std::clamp(v, 0.0, 255.0)); }

struct BankPoint {
  Vec3d pos;
  std::array<uint8_t, 3> color;
  uint8_t label;
};

struct ColorSpec {
  double r, g, b;
};

// Base colors per class; rooms and objects shift them a little.
constexpr ColorSpec kBaseColor[kNumClasses] = {
    {120, 100, 80},   // floor
    {205, 202, 192},  // wall
    {140, 90, 50},    // table
    {180, 40, 40},    // chair
    {50, 70, 160},    // cabinet
    {230, 210, 60},   // lamp
    {60, 140, 70},    // sofa
    {128, 128, 128},  // clutter
};

void emit(std::vector<BankPoint>& bank, const Vec3d& p, const ColorSpec& c, uint8_t label, Rng& rng) {
  BankPoint bp;
  bp.pos = p;
  bp.color = {clamp_u8(c.r + rng.uniform(-12.0, 12.0)), clamp_u8(c.g + rng.uniform(-12.0, 12.0)),
              clamp_u8(c.b + rng.uniform(-12.0, 12.0))};
  bp.label = label;
  bank.push_back(bp);
}

int count_for(double area, double density) { return std::max(1, static_cast<int>(std::lround(area * density))); }

// Horizontal rectangle z = const.
void sample_h_plane(std::vector<BankPoint>& bank, double x0, double y0, double x1, double y1, double z,
                    const ColorSpec& c, uint8_t label, double density, Rng& rng) {
  int n = count_for((x1 - x0) * (y1 - y0), density);
  for (int i = 0; i < n; ++i)
    emit(bank, {rng.uniform(x0, x1), rng.uniform(y0, y1), z}, c, label, rng);
}

// Vertical rectangle along x or y.
void sample_v_plane(std::vector<BankPoint>& bank, const Vec3d& a, const Vec3d& b, double height,
                    const ColorSpec& c, uint8_t label, double density, Rng& rng) {
  double len = std::hypot(b[0] - a[0], b[1] - a[1]);
  int n = count_for(len * height, density);
  for (int i = 0; i < n; ++i) {
    double t = rng.uniform();
    emit(bank, {a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), rng.uniform(0.0, height)}, c, label,
         rng);
  }
}

void sample_box(std::vector<BankPoint>& bank, const Vec3d& center, const Vec3d& half, const ColorSpec& c,
                uint8_t label, double density, Rng& rng) {
  // Five faces, no bottom.
  double x0 = center[0] - half[0], x1 = center[0] + half[0];
  double y0 = center[1] - half[1], y1 = center[1] + half[1];
  double z0 = center[2] - half[2], z1 = center[2] + half[2];
  int n = count_for((x1 - x0) * (y1 - y0), density);
  for (int i = 0; i < n; ++i) emit(bank, {rng.uniform(x0, x1), rng.uniform(y0, y1), z1}, c, label, rng);
  n = count_for((x1 - x0) * (z1 - z0), density);
  for (int i = 0; i < n; ++i) emit(bank, {rng.uniform(x0, x1), y0, rng.uniform(z0, z1)}, c, label, rng);
  for (int i = 0; i < n; ++i) emit(bank, {rng.uniform(x0, x1), y1, rng.uniform(z0, z1)}, c, label, rng);
  n = count_for((y1 - y0) * (z1 - z0), density);
  for (int i = 0; i < n; ++i) emit(bank, {x0, rng.uniform(y0, y1), rng.uniform(z0, z1)}, c, label, rng);
  for (int i = 0; i < n; ++i) emit(bank, {x1, rng.uniform(y0, y1), rng.uniform(z0, z1)}, c, label, rng);
}

void sample_sphere(std::vector<BankPoint>& bank, const Vec3d& center, double radius, const ColorSpec& c,
                   uint8_t label, double density, Rng& rng) {
  int n = count_for(4.0 * 3.14159265358979 * radius * radius, density);
  for (int i = 0; i < n; ++i) {
    double z = rng.uniform(-1.0, 1.0);
    double a = rng.uniform(0.0, 6.283185307179586);
    double s = std::sqrt(std::max(0.0, 1.0 - z * z));
    emit(bank,
         {center[0] + radius * s * std::cos(a), center[1] + radius * s * std::sin(a),
          center[2] + radius * z},
         c, label, rng);
  }
}

void sample_cylinder(std::vector<BankPoint>& bank, const Vec3d& base, double radius, double height,
                     const ColorSpec& c, uint8_t label, double density, Rng& rng) {
  int n = count_for(6.283185307179586 * radius * height, density);
  for (int i = 0; i < n; ++i) {
    double a = rng.uniform(0.0, 6.283185307179586);
    emit(bank,
         {base[0] + radius * std::cos(a), base[1] + radius * std::sin(a), base[2] + rng.uniform(0.0, height)},
         c, label, rng);
  }
  n = count_for(3.14159265358979 * radius * radius, density);
  for (int i = 0; i < n; ++i) {
    double a = rng.uniform(0.0, 6.283185307179586);
    double r = radius * std::sqrt(rng.uniform());
    emit(bank, {base[0] + r * std::cos(a), base[1] + r * std::sin(a), base[2] + height}, c, label, rng);
  }
}

ColorSpec tinted(const ColorSpec& base, Rng& rng, double span) {
  return {base.r + rng.uniform(-span, span), base.g + rng.uniform(-span, span),
          base.b + rng.uniform(-span, span)};
}

// All surfaces of one room, in room-local coordinates shifted to the world
// origin of the room.
std::vector<BankPoint> build_room(const SceneSpec& spec, int room_idx, double ox, double oy, double& ex_out,
                                  double& ey_out) {
  Rng rng(mix_seed(spec.seed, 0x1000 + static_cast<uint64_t>(room_idx)));
  double ex = rng.uniform(spec.min_extent, spec.max_extent);
  double ey = rng.uniform(spec.min_extent, spec.max_extent);
  double h = rng.uniform(spec.min_height, spec.max_height);
  ex_out = ex;
  ey_out = ey;

  std::vector<BankPoint> bank;
  // The wide tint spans double as room identity: floors and walls dominate
  // every view, so a per-room shade shift is the color cue retrieval can use.
  // Stronger per-room coloring backfires in training, letting the metric
  // stage separate the training rooms by color alone and transfer nothing.
  ColorSpec floor_c = tinted(kBaseColor[0], rng, 25.0);
  ColorSpec wall_c = tinted(kBaseColor[1], rng, 40.0);
  sample_h_plane(bank, ox, oy, ox + ex, oy + ey, 0.0, floor_c, 0, spec.density, rng);
  sample_v_plane(bank, {ox, oy, 0}, {ox + ex, oy, 0}, h, wall_c, 1, spec.density, rng);
  sample_v_plane(bank, {ox, oy + ey, 0}, {ox + ex, oy + ey, 0}, h, wall_c, 1, spec.density, rng);
  sample_v_plane(bank, {ox, oy, 0}, {ox, oy + ey, 0}, h, wall_c, 1, spec.density, rng);
  sample_v_plane(bank, {ox + ex, oy, 0}, {ox + ex, oy + ey, 0}, h, wall_c, 1, spec.density, rng);

  int objects = spec.min_objects + rng.uniform_int(spec.max_objects - spec.min_objects + 1);
  for (int o = 0; o < objects; ++o) {
    int cls = 2 + rng.uniform_int(kNumClasses - 2);
    double px = ox + rng.uniform(1.0, ex - 1.0);
    double py = oy + rng.uniform(1.0, ey - 1.0);
    ColorSpec c = tinted(kBaseColor[cls], rng, 18.0);
    double s = rng.uniform(0.8, 1.2);  // size wobble
    switch (cls) {
      case 2:
        sample_box(bank, {px, py, 0.375 * s}, {0.6 * s, 0.4 * s, 0.375 * s}, c, 2, spec.density, rng);
        break;
      case 3:
        sample_cylinder(bank, {px, py, 0.0}, 0.25 * s, 0.9 * s, c, 3, spec.density, rng);
        break;
      case 4:
        sample_box(bank, {px, py, 0.9 * s}, {0.4 * s, 0.25 * s, 0.9 * s}, c, 4, spec.density, rng);
        break;
      case 5:
        sample_sphere(bank, {px, py, 1.8}, 0.2 * s, c, 5, spec.density, rng);
        break;
      case 6:
        sample_box(bank, {px, py, 0.4 * s}, {0.9 * s, 0.45 * s, 0.4 * s}, c, 6, spec.density, rng);
        break;
      default:
        sample_sphere(bank, {px, py, rng.uniform(0.2, 1.5)}, 0.15 * s, c, 7, spec.density, rng);
        break;
    }
  }
  return bank;
}

std::string room_name(int idx) {
  std::ostringstream os;
  os << "room";
  if (idx < 10) os << "0";
  os << idx;
  return os.str();
}

std::string kf_name(uint32_t id) {
  std::ostringstream os;
  os << "kf";
  if (id < 100) os << "0";
  if (id < 10) os << "0";
  os << id << ".aegi";
  return os.str();
}

}  // namespace

std::vector<ManifestItem> generate_dataset(const SceneSpec& spec, const std::string& root) {
  if (spec.rooms < 1 || spec.keyframes_per_room < 1)
    fail(ErrorKind::config, "scene needs at least one room and one keyframe");
  if (spec.min_extent < 2.5 || spec.max_extent < spec.min_extent)
    fail(ErrorKind::config, "room extents out of range");
  if (spec.dropout < 0.0 || spec.dropout >= 1.0) fail(ErrorKind::config, "dropout must be in [0,1)");

  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) fail(ErrorKind::io, "cannot create " + root + ": " + ec.message());

  // Room split: shuffle room indices, then 60/20/20.
  std::vector<int> room_order(spec.rooms);
  std::iota(room_order.begin(), room_order.end(), 0);
  Rng split_rng(mix_seed(spec.seed, 0xA11));
  for (size_t i = room_order.size(); i > 1; --i)
    std::swap(room_order[i - 1], room_order[split_rng.uniform_int(static_cast<int>(i))]);
  int n_train = std::max(1, static_cast<int>(std::lround(spec.rooms * 0.6)));
  int n_val = std::max(spec.rooms >= 3 ? 1 : 0, static_cast<int>(std::lround(spec.rooms * 0.2)));
  if (n_train + n_val > spec.rooms) n_val = spec.rooms - n_train;
  std::vector<std::string> split_of(spec.rooms);
  for (int i = 0; i < spec.rooms; ++i) {
    if (i < n_train)
      split_of[room_order[i]] = "train";
    else if (i < n_train + n_val)
      split_of[room_order[i]] = "val";
    else
      split_of[room_order[i]] = "test";
  }

  std::vector<ManifestItem> items;
  uint32_t next_id = 0;
  for (int r = 0; r < spec.rooms; ++r) {
    double ox = (r % 5) * 10.0, oy = (r / 5) * 10.0;
    double ex, ey;
    std::vector<BankPoint> bank = build_room(spec, r, ox, oy, ex, ey);
    std::string room = room_name(r);
    std::string split = split_of[r];
    fs::create_directories(fs::path(root) / split / room, ec);
    if (ec) fail(ErrorKind::io, "cannot create keyframe directory: " + ec.message());

    double cx = ox + ex / 2.0, cy = oy + ey / 2.0;
    double ring = spec.circle_frac * std::min(ex, ey) / 2.0;
    for (int k = 0; k < spec.keyframes_per_room; ++k) {
      Rng rng(mix_seed(spec.seed, 0x2000 + static_cast<uint64_t>(r) * 64 + k));
      double angle = 6.283185307179586 * (static_cast<double>(k) / spec.keyframes_per_room) +
                     rng.uniform(-0.15, 0.15);
      Vec3d view{cx + ring * std::cos(angle), cy + ring * std::sin(angle), rng.uniform(1.3, 1.6)};

      RgbPointCloud cloud;
      cloud.room = room;
      double r2 = spec.view_radius * spec.view_radius;
      for (const BankPoint& bp : bank) {
        double dx = bp.pos[0] - view[0], dy = bp.pos[1] - view[1], dz = bp.pos[2] - view[2];
        if (dx * dx + dy * dy + dz * dz > r2) continue;
        if (rng.uniform() < spec.dropout) continue;
        Vec3f p{static_cast<float>(bp.pos[0] + rng.uniform(-spec.jitter, spec.jitter)),
                static_cast<float>(bp.pos[1] + rng.uniform(-spec.jitter, spec.jitter)),
                static_cast<float>(bp.pos[2] + rng.uniform(-spec.jitter, spec.jitter))};
        cloud.pos.push_back(p);
        cloud.color.push_back(bp.color);
        cloud.label.push_back(rng.uniform() < spec.unlabeled_frac ? 255 : bp.label);
      }
      if (cloud.size() < 100)
        fail(ErrorKind::degenerate, "keyframe in " + room + " came out nearly empty; check the spec");

      ManifestItem item;
      item.id = next_id++;
      item.room = room;
      item.split = split;
      item.centroid = view;
      item.path = (fs::path(root) / split / room / kf_name(item.id)).string();
      write_keyframe(item.path, cloud);
      items.push_back(std::move(item));
    }
  }

  std::ofstream mf(fs::path(root) / "manifest.txt");
  if (!mf) fail(ErrorKind::io, "cannot write manifest under " + root);
  mf << "id,room,split,cx,cy,cz\n";
  mf.precision(17);
  for (const auto& it : items)
    mf << it.id << "," << it.room << "," << it.split << "," << it.centroid[0] << "," << it.centroid[1]
       << "," << it.centroid[2] << "\n";
  mf.flush();
  if (!mf) fail(ErrorKind::io, "manifest write failed under " + root);
  return items;
}

std::vector<ManifestItem> load_manifest(const std::string& root) {
  std::string mpath = (fs::path(root) / "manifest.txt").string();
  std::ifstream in(mpath);
  if (!in) fail(ErrorKind::io, "cannot open " + mpath);
  std::string line;
  if (!std::getline(in, line) || line != "id,room,split,cx,cy,cz")
    fail(ErrorKind::format, mpath + ": missing or wrong header line");

  std::vector<ManifestItem> items;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (fields.size() != 6)
      fail(ErrorKind::format, mpath + ": line " + std::to_string(lineno) + " has " +
                                  std::to_string(fields.size()) + " fields, want 6");
    ManifestItem it;
    try {
      it.id = static_cast<uint32_t>(std::stoul(fields[0]));
      it.centroid = {std::stod(fields[3]), std::stod(fields[4]), std::stod(fields[5])};
    } catch (const std::exception&) {
      fail(ErrorKind::format, mpath + ": line " + std::to_string(lineno) + " has a malformed number");
    }
    it.room = fields[1];
    it.split = fields[2];
    if (it.split != "train" && it.split != "val" && it.split != "test")
      fail(ErrorKind::format, mpath + ": line " + std::to_string(lineno) + " has unknown split '" +
                                  it.split + "'");
    it.path = (fs::path(root) / it.split / it.room / kf_name(it.id)).string();
    items.push_back(std::move(it));
  }
  if (items.empty()) fail(ErrorKind::format, mpath + ": no entries");
  return items;
}

void write_keyframe(const std::string& path, const RgbPointCloud& cloud) {
  if (cloud.color.size() != cloud.pos.size())
    fail(ErrorKind::dimension, "keyframe needs a color per point");
  if (!cloud.label.empty() && cloud.label.size() != cloud.pos.size())
    fail(ErrorKind::dimension, "keyframe labels must cover every point");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot open " + path + " for writing");
  out.write(kMagic, 4);
  uint32_t v = kVersion, n = static_cast<uint32_t>(cloud.pos.size());
  out.write(reinterpret_cast<const char*>(&v), 4);
  out.write(reinterpret_cast<const char*>(&n), 4);
  uint16_t len = static_cast<uint16_t>(cloud.room.size());
  out.write(reinterpret_cast<const char*>(&len), 2);
  out.write(cloud.room.data(), len);
  for (uint32_t i = 0; i < n; ++i) {
    out.write(reinterpret_cast<const char*>(cloud.pos[i].data()), 12);
    out.write(reinterpret_cast<const char*>(cloud.color[i].data()), 3);
    uint8_t label = cloud.label.empty() ? 255 : cloud.label[i];
    out.write(reinterpret_cast<const char*>(&label), 1);
  }
  out.flush();
  if (!out) fail(ErrorKind::io, "write failed for " + path);
}

RgbPointCloud read_keyframe(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path);
  int64_t offset = 0;
  auto read = [&](void* dst, size_t n, const char* what) {
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in.gcount()) != n) corrupt(path, offset, std::string("truncated ") + what);
    offset += static_cast<int64_t>(n);
  };

  char magic[4];
  read(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) corrupt(path, 0, "bad magic, not an AEGI file");
  uint32_t version, count;
  read(&version, 4, "version");
  if (version != kVersion) corrupt(path, 4, "unsupported version " + std::to_string(version));
  read(&count, 4, "point count");
  if (count == 0) corrupt(path, 8, "empty keyframe");
  if (count > (1u << 26)) corrupt(path, 8, "implausible point count");
  uint16_t len;
  read(&len, 2, "room length");
  RgbPointCloud cloud;
  cloud.room.resize(len);
  read(cloud.room.data(), len, "room");
  cloud.pos.resize(count);
  cloud.color.resize(count);
  cloud.label.resize(count);
  for (uint32_t i = 0; i < count; ++i) {
    read(cloud.pos[i].data(), 12, "position");
    if (!std::isfinite(cloud.pos[i][0]) || !std::isfinite(cloud.pos[i][1]) ||
        !std::isfinite(cloud.pos[i][2]))
      corrupt(path, offset - 12, "non-finite position");
    read(cloud.color[i].data(), 3, "color");
    read(&cloud.label[i], 1, "label");
  }
  char extra;
  in.read(&extra, 1);
  if (in.gcount() != 0) corrupt(path, offset, "trailing bytes after last point");
  return cloud;
}

RgbPointCloud import_ply(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "ply") fail(ErrorKind::format, path + ": not a ply file");

  int count = -1;
  std::vector<std::string> props;
  bool ascii = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "format") {
      std::string fmt;
      ls >> fmt;
      ascii = fmt == "ascii";
    } else if (tok == "element") {
      std::string what;
      ls >> what;
      if (what == "vertex") ls >> count;
    } else if (tok == "property") {
      std::string type, name;
      ls >> type >> name;
      props.push_back(name);
    } else if (tok == "end_header") {
      break;
    }
  }
  if (!ascii) fail(ErrorKind::format, path + ": only ascii ply is supported");
  if (count < 1) fail(ErrorKind::format, path + ": missing vertex element");
  auto idx_of = [&](const char* name) {
    for (size_t i = 0; i < props.size(); ++i)
      if (props[i] == name) return static_cast<int>(i);
    return -1;
  };
  int ix = idx_of("x"), iy = idx_of("y"), iz = idx_of("z");
  int ir = idx_of("red"), ig = idx_of("green"), ib = idx_of("blue");
  int il = idx_of("label");
  if (ix < 0 || iy < 0 || iz < 0 || ir < 0 || ig < 0 || ib < 0)
    fail(ErrorKind::format, path + ": need x,y,z,red,green,blue vertex properties");

  RgbPointCloud cloud;
  cloud.room = fs::path(path).stem().string();
  cloud.pos.reserve(count);
  cloud.color.reserve(count);
  cloud.label.reserve(count);
  for (int i = 0; i < count; ++i) {
    if (!std::getline(in, line))
      fail(ErrorKind::format, path + ": vertex list ends early at row " + std::to_string(i));
    std::istringstream ls(line);
    std::vector<double> vals;
    double v;
    while (ls >> v) vals.push_back(v);
    if (static_cast<int>(vals.size()) < static_cast<int>(props.size()))
      fail(ErrorKind::format, path + ": short vertex row " + std::to_string(i));
    cloud.pos.push_back({static_cast<float>(vals[ix]), static_cast<float>(vals[iy]),
                         static_cast<float>(vals[iz])});
    cloud.color.push_back({clamp_u8(vals[ir]), clamp_u8(vals[ig]), clamp_u8(vals[ib])});
    cloud.label.push_back(il >= 0 ? static_cast<uint8_t>(std::clamp(vals[il], 0.0, 255.0)) : 255);
  }
  return cloud;
}

}  // namespace aegis
