#include "fovstream/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fovstream/errors.hpp"
#include "fovstream/image_io.hpp"

namespace fovstream {

uint64_t Unit::cumulative_bytes(int level) const {
  uint64_t d = 0;
  for (int k = 0; k <= level; ++k) d += levels.at(k).bytes;
  return d;
}

void SceneAsset::validate() const {
  if (units.empty()) throw AssetError("scene has no units");
  if (level_count < 2) throw AssetError("scene needs at least 2 levels");
  for (const auto& u : units) {
    if (int(u.levels.size()) != level_count) throw AssetError("unit " + std::to_string(u.id) + " has a short ladder");
    for (const auto& lvl : u.levels) {
      if (lvl.bytes == 0) throw AssetError("unit " + std::to_string(u.id) + " has an empty payload");
      for (const auto& t : lvl.triangles)
        for (uint32_t i : t)
          if (i >= vertices.size()) throw AssetError("unit " + std::to_string(u.id) + " indexes a missing vertex");
    }
  }
  for (size_t i = 0; i < units.size(); ++i)
    if (units[i].id != i) throw AssetError("unit ids must be dense and ordered");
}

uint64_t SceneAsset::total_bytes() const {
  uint64_t s = 0;
  for (const auto& u : units) s += u.cumulative_bytes(u.max_level());
  return s;
}

LoDState base_state(const SceneAsset& asset) { return LoDState(asset.units.size(), 0); }

LoDState uniform_state(const SceneAsset& asset, int level) {
  if (level < 0 || level >= asset.level_count) throw DomainError("uniform_state: level out of range");
  return LoDState(asset.units.size(), level);
}

void validate_state(const SceneAsset& asset, const LoDState& state) {
  if (state.size() != asset.units.size()) throw DomainError("LoD state does not match the scene's unit count");
  for (size_t u = 0; u < state.size(); ++u)
    if (state[u] < 0 || state[u] > asset.units[u].max_level())
      throw DomainError("LoD state level out of range for unit " + std::to_string(u));
}

PixelRect PixelRect::united(const PixelRect& o) const {
  if (empty()) return o;
  if (o.empty()) return *this;
  return {std::min(x0, o.x0), std::min(y0, o.y0), std::max(x1, o.x1), std::max(y1, o.y1)};
}

// --- terrain sources -----------------------------------------------------------------

namespace {

uint64_t splitmix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double hash01(uint64_t seed, int i, int j) {
  const uint64_t h = splitmix(seed ^ splitmix(uint64_t(uint32_t(i)) << 32 | uint32_t(j)));
  return double(h >> 11) * 0x1.0p-53;
}

uint8_t to_u8(double v) { return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

}  // namespace

Heightfield generate_terrain(const TerrainParams& params) {
  if (params.coarse_cells <= 0 || params.levels < 2 || params.levels > 8)
    throw ConfigError("terrain: need coarse_cells > 0 and 2 <= levels <= 8");
  const int n = params.coarse_cells * (1 << (params.levels - 1)) + 1;
  Heightfield hf;
  hf.nx = hf.nz = n;
  hf.spacing = params.extent / (n - 1);
  hf.heights.resize(size_t(n) * n);
  hf.colors.resize(hf.heights.size());

  std::mt19937_64 rng(params.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  struct Wave {
    double kx, kz, phase, amp;
  };
  std::vector<Wave> waves;
  for (int w = 0; w < 6; ++w) {
    const double angle = 2.0 * std::numbers::pi * uni(rng);
    const double freq = (1.0 + w) * 2.0 * std::numbers::pi / params.extent;
    waves.push_back({freq * std::cos(angle), freq * std::sin(angle), 2.0 * std::numbers::pi * uni(rng),
                     params.relief / (1.0 + w)});
  }
  double hmin = std::numeric_limits<double>::max(), hmax = -hmin;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const double x = i * hf.spacing, z = j * hf.spacing;
      double h = 0.0;
      for (const auto& w : waves) h += w.amp * std::sin(w.kx * x + w.kz * z + w.phase);
      hf.heights[size_t(j) * n + i] = h;
      hmin = std::min(hmin, h);
      hmax = std::max(hmax, h);
    }
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const size_t k = size_t(j) * n + i;
      const double t = hmax > hmin ? (hf.heights[k] - hmin) / (hmax - hmin) : 0.5;
      // albedo texture at the finest vertex spacing
      const double grain = 1.0 + params.texture * (2.0 * hash01(params.seed, i, j) - 1.0);
      const double r = (0.25 + 0.40 * t) * grain;
      const double g = (0.35 + 0.30 * t) * grain;
      const double b = (0.15 + 0.25 * t) * grain;
      hf.colors[k] = {to_u8(r), to_u8(g), to_u8(b)};
    }
  return hf;
}

Heightfield heightfield_from_pgm(const std::filesystem::path& path, double spacing, double relief) {
  const LuminanceImage img = read_pgm(path);
  Heightfield hf;
  hf.nx = img.width;
  hf.nz = img.height;
  hf.spacing = spacing;
  hf.heights.resize(img.size());
  hf.colors.resize(img.size());
  for (size_t k = 0; k < img.size(); ++k) {
    const double t = img.samples[k];
    hf.heights[k] = t * relief;
    hf.colors[k] = {to_u8(0.25 + 0.6 * t), to_u8(0.35 + 0.5 * t), to_u8(0.2 + 0.4 * t)};
  }
  return hf;
}

// --- OBJ ---------------------------------------------------------------------------

TriangleMesh read_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  TriangleMesh mesh;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z)) throw AssetError(path.string() + ":" + std::to_string(lineno) + ": bad vertex");
      Vertex v;
      v.position = {float(x), float(y), float(z)};
      double r, g, b;
      if (ls >> r >> g >> b)
        v.color = {to_u8(r), to_u8(g), to_u8(b), 255};
      else
        v.color = {200, 200, 200, 255};
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<uint32_t> idx;
      std::string tok;
      while (ls >> tok) {
        const long i = std::stol(tok.substr(0, tok.find('/')));
        const long resolved = i < 0 ? long(mesh.vertices.size()) + i : i - 1;
        if (resolved < 0 || resolved >= long(mesh.vertices.size()))
          throw AssetError(path.string() + ":" + std::to_string(lineno) + ": face index out of range");
        idx.push_back(uint32_t(resolved));
      }
      if (idx.size() < 3) throw AssetError(path.string() + ":" + std::to_string(lineno) + ": face needs 3 vertices");
      for (size_t k = 1; k + 1 < idx.size(); ++k) mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  return mesh;
}

void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(9);
  for (const auto& v : mesh.vertices)
    out << "v " << v.position[0] << ' ' << v.position[1] << ' ' << v.position[2] << ' ' << v.color[0] / 255.0
        << ' ' << v.color[1] / 255.0 << ' ' << v.color[2] / 255.0 << '\n';
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
}

// --- ladders -----------------------------------------------------------------------

namespace {

void finish_levels(Unit& unit) {
  std::set<uint32_t> seen;
  for (auto& lvl : unit.levels) {
    uint32_t fresh = 0;
    for (const auto& t : lvl.triangles)
      for (uint32_t i : t)
        if (seen.insert(i).second) ++fresh;
    lvl.new_vertices = fresh;
    lvl.bytes = fresh * kVertexRecordBytes + lvl.triangles.size() * kTriangleRecordBytes + kLevelHeaderBytes;
  }
}

Aabb bounds_of(const std::vector<Vertex>& vs) {
  Aabb b;
  if (vs.empty()) return b;
  b.lo = b.hi = {vs[0].position[0], vs[0].position[1], vs[0].position[2]};
  for (const auto& v : vs) {
    b.lo = {std::min<double>(b.lo.x, v.position[0]), std::min<double>(b.lo.y, v.position[1]),
            std::min<double>(b.lo.z, v.position[2])};
    b.hi = {std::max<double>(b.hi.x, v.position[0]), std::max<double>(b.hi.y, v.position[1]),
            std::max<double>(b.hi.z, v.position[2])};
  }
  return b;
}

double triangle_area(const std::vector<Vertex>& vs, const Triangle& t) {
  auto p = [&](uint32_t i) { return Vec3{vs[i].position[0], vs[i].position[1], vs[i].position[2]}; };
  return 0.5 * length(cross(p(t[1]) - p(t[0]), p(t[2]) - p(t[0])));
}

}  // namespace

SceneAsset build_lod_ladder(const Heightfield& field, int level_count, UnitKind kind) {
  if (level_count < 2) throw AssetError("ladder needs at least 2 levels");
  if (field.nx < 2 || field.nz < 2 || field.heights.size() != size_t(field.nx) * field.nz ||
      field.colors.size() != field.heights.size())
    throw AssetError("heightfield is empty or inconsistent");
  const int S = 1 << (level_count - 1);
  if ((field.nx - 1) % S != 0 || (field.nz - 1) % S != 0)
    throw AssetError("heightfield size minus one must be a multiple of 2^(levels-1) = " + std::to_string(S));
  for (double h : field.heights)
    if (!std::isfinite(h)) throw AssetError("heightfield has non-finite heights");
  if (!(field.spacing > 0.0)) throw AssetError("heightfield spacing must be > 0");

  SceneAsset asset;
  asset.level_count = level_count;
  const double cx0 = 0.5 * (field.nx - 1) * field.spacing, cz0 = 0.5 * (field.nz - 1) * field.spacing;
  asset.vertices.resize(field.heights.size());
  for (int j = 0; j < field.nz; ++j)
    for (int i = 0; i < field.nx; ++i) {
      const size_t k = size_t(j) * field.nx + i;
      auto& v = asset.vertices[k];
      v.position = {float(i * field.spacing - cx0), float(field.heights[k]), float(j * field.spacing - cz0)};
      v.color = {field.colors[k][0], field.colors[k][1], field.colors[k][2], 255};
    }
  asset.bounds = bounds_of(asset.vertices);

  const int cells_x = (field.nx - 1) / S, cells_z = (field.nz - 1) / S;
  const int parts = kind == UnitKind::triangle ? 2 : 1;
  auto idx = [&](int i, int j) { return uint32_t(size_t(j) * field.nx + i); };
  for (int cz = 0; cz < cells_z; ++cz)
    for (int cx = 0; cx < cells_x; ++cx)
      for (int t = 0; t < parts; ++t) {
        Unit unit;
        unit.id = uint32_t(asset.units.size());
        unit.kind = kind;
        for (int k = 0; k < level_count; ++k) {
          const int s = S >> k, n = 1 << k;
          UnitLevel lvl;
          for (int b = 0; b < n; ++b)
            for (int a = 0; a < n; ++a) {
              const int i0 = cx * S + a * s, j0 = cz * S + b * s;
              const uint32_t v00 = idx(i0, j0), v10 = idx(i0 + s, j0), v01 = idx(i0, j0 + s),
                             v11 = idx(i0 + s, j0 + s);
              // t == 0 owns the x >= z half of the cell, t == 1 the z >= x half
              const bool lower = kind == UnitKind::heightfield_texel || (t == 0 ? a >= b : a < b);
              const bool upper = kind == UnitKind::heightfield_texel || (t == 0 ? a > b : a <= b);
              if (lower) lvl.triangles.push_back({v00, v10, v11});
              if (upper) lvl.triangles.push_back({v00, v11, v01});
            }
          unit.levels.push_back(std::move(lvl));
        }
        finish_levels(unit);
        asset.units.push_back(std::move(unit));
      }
  asset.validate();
  return asset;
}

SceneAsset build_lod_ladder(const TriangleMesh& mesh, int level_count) {
  if (level_count < 2) throw AssetError("ladder needs at least 2 levels");
  if (mesh.triangles.empty()) throw AssetError("mesh has no triangles");
  double area = 0.0;
  for (const auto& t : mesh.triangles) {
    for (uint32_t i : t)
      if (i >= mesh.vertices.size()) throw AssetError("mesh face references a missing vertex");
    area += triangle_area(mesh.vertices, t);
  }
  if (!(area > 0.0) || !std::isfinite(area)) throw AssetError("mesh is degenerate (zero total area)");

  SceneAsset asset;
  asset.level_count = level_count;
  asset.vertices = mesh.vertices;
  asset.bounds = bounds_of(mesh.vertices);
  const Vec3 lo = asset.bounds.lo;
  const double side =
      std::max({asset.bounds.hi.x - lo.x, asset.bounds.hi.y - lo.y, asset.bounds.hi.z - lo.z}) * (1.0 + 1e-9) + 1e-12;

  std::vector<char> used(mesh.vertices.size(), 0);
  for (const auto& t : mesh.triangles)
    for (uint32_t i : t) used[i] = 1;
  size_t used_count = std::count(used.begin(), used.end(), 1);

  // Representative (lowest original index) per occupied cell at resolution r.
  auto cluster = [&](int r) {
    std::map<std::array<int, 3>, uint32_t> cells;
    std::vector<uint32_t> rep(mesh.vertices.size(), 0);
    auto key = [&](uint32_t i) {
      std::array<int, 3> k;
      for (int a = 0; a < 3; ++a) {
        const double c = (mesh.vertices[i].position[a] - (a == 0 ? lo.x : a == 1 ? lo.y : lo.z)) / side;
        k[a] = std::clamp(int(std::floor(c * r)), 0, r - 1);
      }
      return k;
    };
    for (uint32_t i = 0; i < mesh.vertices.size(); ++i)
      if (used[i]) cells.try_emplace(key(i), i);
    for (uint32_t i = 0; i < mesh.vertices.size(); ++i)
      if (used[i]) rep[i] = cells.at(key(i));
    return std::make_pair(cells.size(), rep);
  };
  auto simplify = [&](const std::vector<uint32_t>& rep) {
    std::vector<Triangle> out;
    std::set<std::array<uint32_t, 3>> seen;
    for (const auto& t : mesh.triangles) {
      Triangle m{rep[t[0]], rep[t[1]], rep[t[2]]};
      if (m[0] == m[1] || m[1] == m[2] || m[0] == m[2]) continue;
      std::array<uint32_t, 3> k = m;
      std::sort(k.begin(), k.end());
      if (seen.insert(k).second) out.push_back(m);
    }
    return out;
  };

  // Finest clustered level keeps about a quarter of the vertices; coarser levels halve the
  // cell resolution each step.
  int r_top = 1;
  while (r_top < (1 << 20) && cluster(r_top * 2).first <= std::max<size_t>(1, used_count / 4)) r_top *= 2;
  std::vector<std::vector<Triangle>> per_level(level_count);
  per_level[level_count - 1] = mesh.triangles;
  for (int k = level_count - 2; k >= 0; --k) {
    const int r = std::max(1, r_top >> (level_count - 2 - k));
    per_level[k] = simplify(cluster(r).second);
  }
  if (per_level[0].empty()) throw AssetError("mesh collapses to nothing at the coarsest level");

  auto centroid = [&](const Triangle& t) {
    Vec3 c{};
    for (uint32_t i : t)
      c = c + Vec3{mesh.vertices[i].position[0], mesh.vertices[i].position[1], mesh.vertices[i].position[2]};
    return c * (1.0 / 3.0);
  };
  std::vector<Vec3> unit_centers;
  for (const auto& t : per_level[0]) unit_centers.push_back(centroid(t));
  asset.units.resize(per_level[0].size());
  for (size_t u = 0; u < asset.units.size(); ++u) {
    asset.units[u].id = uint32_t(u);
    asset.units[u].levels.resize(level_count);
    asset.units[u].levels[0].triangles.push_back(per_level[0][u]);
  }
  for (int k = 1; k < level_count; ++k)
    for (const auto& t : per_level[k]) {
      const Vec3 c = centroid(t);
      size_t best = 0;
      double best_d = std::numeric_limits<double>::max();
      for (size_t u = 0; u < unit_centers.size(); ++u) {
        const Vec3 d = c - unit_centers[u];
        const double dd = dot(d, d);
        if (dd < best_d) {
          best_d = dd;
          best = u;
        }
      }
      asset.units[best].levels[k].triangles.push_back(t);
    }
  for (auto& u : asset.units) finish_levels(u);
  asset.validate();
  return asset;
}

// --- scene file ---------------------------------------------------------------------

uint64_t fnv1a64(const uint8_t* data, size_t size, uint64_t seed) {
  uint64_t h = seed;
  for (size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

struct Writer {
  std::vector<uint8_t> out;
  template <typename T>
  void put(T v) {
    uint8_t b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));  // little-endian hosts only
    out.insert(out.end(), b, b + sizeof(T));
  }
};

struct Reader {
  const std::vector<uint8_t>& in;
  size_t pos = 0;
  template <typename T>
  T get() {
    if (pos + sizeof(T) > in.size()) throw AssetError("scene file is truncated");
    T v;
    std::memcpy(&v, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
};

std::vector<uint8_t> serialize_body(const SceneAsset& asset) {
  Writer w;
  w.out.insert(w.out.end(), {'F', 'V', 'S', 'C'});
  w.put<uint32_t>(kSceneFileVersion);
  w.put<uint32_t>(uint32_t(asset.level_count));
  w.put<uint32_t>(uint32_t(asset.vertices.size()));
  w.put<uint32_t>(uint32_t(asset.units.size()));
  for (const auto& v : asset.vertices) {
    for (float c : v.position) w.put<float>(c);
    for (uint8_t c : v.color) w.put<uint8_t>(c);
  }
  for (const auto& u : asset.units) {
    w.put<uint32_t>(u.id);
    w.put<uint8_t>(uint8_t(u.kind));
    w.put<uint8_t>(0);
    w.put<uint8_t>(0);
    w.put<uint8_t>(0);
    for (const auto& lvl : u.levels) {
      w.put<uint32_t>(lvl.new_vertices);
      w.put<uint32_t>(uint32_t(lvl.triangles.size()));
      w.put<uint64_t>(lvl.bytes);
      for (const auto& t : lvl.triangles)
        for (uint32_t i : t) w.put<uint32_t>(i);
    }
  }
  return std::move(w.out);
}

}  // namespace

std::vector<uint8_t> serialize_scene(const SceneAsset& asset) {
  auto body = serialize_body(asset);
  const uint64_t h = fnv1a64(body.data(), body.size());
  Writer w{std::move(body)};
  w.put<uint64_t>(h);
  return std::move(w.out);
}

uint64_t scene_hash(const SceneAsset& asset) {
  const auto body = serialize_body(asset);
  return fnv1a64(body.data(), body.size());
}

SceneAsset deserialize_scene(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 28 || std::memcmp(bytes.data(), "FVSC", 4) != 0) throw AssetError("not a scene file");
  Reader r{bytes, 4};
  const uint32_t version = r.get<uint32_t>();
  if (version != kSceneFileVersion) throw AssetError("unsupported scene file version " + std::to_string(version));
  SceneAsset asset;
  asset.level_count = int(r.get<uint32_t>());
  const uint32_t nv = r.get<uint32_t>(), nu = r.get<uint32_t>();
  if (uint64_t(nv) * 16 > bytes.size()) throw AssetError("scene file is truncated");
  asset.vertices.resize(nv);
  for (auto& v : asset.vertices) {
    for (float& c : v.position) c = r.get<float>();
    for (uint8_t& c : v.color) c = r.get<uint8_t>();
  }
  asset.units.resize(nu);
  for (auto& u : asset.units) {
    u.id = r.get<uint32_t>();
    u.kind = UnitKind(r.get<uint8_t>());
    r.pos += 3;
    u.levels.resize(asset.level_count);
    for (auto& lvl : u.levels) {
      lvl.new_vertices = r.get<uint32_t>();
      const uint32_t nt = r.get<uint32_t>();
      lvl.bytes = r.get<uint64_t>();
      if (uint64_t(nt) * 12 > bytes.size() - r.pos) throw AssetError("scene file is truncated");
      lvl.triangles.resize(nt);
      for (auto& t : lvl.triangles)
        for (uint32_t& i : t) i = r.get<uint32_t>();
    }
  }
  const size_t body_end = r.pos;
  const uint64_t stored = r.get<uint64_t>();
  if (stored != fnv1a64(bytes.data(), body_end)) throw AssetError("scene file checksum mismatch");
  if (r.pos != bytes.size()) throw AssetError("trailing bytes in scene file");
  asset.bounds = bounds_of(asset.vertices);
  asset.validate();
  return asset;
}

nlohmann::json scene_manifest(const SceneAsset& asset) {
  nlohmann::json j;
  j["format"] = "fovstream-scene";
  j["version"] = kSceneFileVersion;
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(scene_hash(asset)));
  j["hash"] = hex;
  j["level_count"] = asset.level_count;
  j["vertex_count"] = asset.vertices.size();
  j["unit_count"] = asset.units.size();
  j["slot_count"] = asset.slot_count();
  j["unit_kind"] = asset.units.front().kind == UnitKind::triangle ? "triangle" : "heightfield_texel";
  std::vector<uint64_t> per_level(asset.level_count, 0), tris(asset.level_count, 0);
  uint64_t max_step = 0;
  for (const auto& u : asset.units)
    for (int k = 0; k < asset.level_count; ++k) {
      per_level[k] += u.levels[k].bytes;
      tris[k] += u.levels[k].triangles.size();
      if (k > 0) max_step = std::max(max_step, u.levels[k].bytes);
    }
  j["bytes_per_level"] = per_level;
  j["triangles_per_level"] = tris;
  j["total_bytes"] = asset.total_bytes();
  j["max_step_bytes"] = max_step;
  j["bounds"] = {{"lo", {asset.bounds.lo.x, asset.bounds.lo.y, asset.bounds.lo.z}},
                 {"hi", {asset.bounds.hi.x, asset.bounds.hi.y, asset.bounds.hi.z}}};
  return j;
}

void save_scene(const std::filesystem::path& path, const SceneAsset& asset) {
  const auto bytes = serialize_scene(asset);
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
  }
  std::ofstream man(path.string() + ".json");
  if (!man) throw IoError("cannot write manifest for " + path.string());
  man << scene_manifest(asset).dump(2) << '\n';
}

SceneAsset load_scene(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open scene " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return deserialize_scene(bytes);
  } catch (const AssetError& e) {
    throw AssetError(path.string() + ": " + e.what());
  }
}

// --- rasterizer ---------------------------------------------------------------------

void to_json(nlohmann::json& j, const RenderOptions& o) {
  j = nlohmann::json{{"near_plane", o.near_plane}, {"far_plane", o.far_plane},
                     {"background_luminance", o.background_luminance}};
}

void from_json(const nlohmann::json& j, RenderOptions& o) {
  if (j.contains("near_plane")) j.at("near_plane").get_to(o.near_plane);
  if (j.contains("far_plane")) j.at("far_plane").get_to(o.far_plane);
  if (j.contains("background_luminance")) j.at("background_luminance").get_to(o.background_luminance);
}

namespace {

constexpr int kSubBits = 8;
constexpr int64_t kSub = 1 << kSubBits;
constexpr double kGuardBand = 4.0;

struct ClipVert {
  double x, y, z, w, luma;
};

ClipVert lerp(const ClipVert& a, const ClipVert& b, double t) {
  return {a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t, a.z + (b.z - a.z) * t, a.w + (b.w - a.w) * t,
          a.luma + (b.luma - a.luma) * t};
}

// Keeps the part of the polygon where dist(v) >= 0.
template <typename F>
void clip_plane(std::vector<ClipVert>& poly, F dist) {
  if (poly.empty()) return;
  std::vector<ClipVert> out;
  for (size_t i = 0; i < poly.size(); ++i) {
    const ClipVert& a = poly[i];
    const ClipVert& b = poly[(i + 1) % poly.size()];
    const double da = dist(a), db = dist(b);
    if (da >= 0.0) out.push_back(a);
    if ((da >= 0.0) != (db >= 0.0)) out.push_back(lerp(a, b, da / (da - db)));
  }
  poly.swap(out);
}

double luma_of(const Vertex& v) {
  return (0.2126 * v.color[0] + 0.7152 * v.color[1] + 0.0722 * v.color[2]) / 255.0;
}

}  // namespace

struct SceneRenderer::Setup {
  struct Tri {
    int64_t x[3], y[3];
    double z[3], inv_w[3], luma_w[3];
    int64_t area;
    int bx0, by0, bx1, by1;  // inclusive pixel bounds
  };
  std::vector<Tri> tris;
  PixelRect bounds;
};

SceneRenderer::SceneRenderer(const SceneAsset& asset, const DisplayParams& display, const Camera& camera,
                             const RenderOptions& options)
    : asset_(asset), display_(display), options_(options) {
  validate_camera(camera);
  display_.validate();
  if (!(options.near_plane > 0.0) || !(options.far_plane > options.near_plane))
    throw ConfigError("render: need 0 < near_plane < far_plane");
  view_proj_ = perspective(display.vertical_fov, double(display.width) / display.height, options.near_plane,
                           options.far_plane) *
               look_at(camera);
  cache_.resize(asset.units.size());
  for (size_t u = 0; u < asset.units.size(); ++u) cache_[u].resize(asset.units[u].levels.size());
}

SceneRenderer::~SceneRenderer() = default;

const SceneRenderer::Setup& SceneRenderer::setup(int unit, int level) const {
  auto& slot = cache_.at(unit).at(level);
  if (slot) return *slot;
  auto s = std::make_unique<Setup>();
  const int W = display_.width, H = display_.height;
  std::vector<ClipVert> poly;
  for (const auto& t : asset_.units[unit].levels[level].triangles) {
    poly.clear();
    for (uint32_t i : t) {
      const Vertex& v = asset_.vertices[i];
      const Vec4 c = view_proj_.apply({v.position[0], v.position[1], v.position[2]});
      poly.push_back({c.x, c.y, c.z, c.w, luma_of(v)});
    }
    clip_plane(poly, [](const ClipVert& v) { return v.z; });
    clip_plane(poly, [](const ClipVert& v) { return v.w - v.z; });
    clip_plane(poly, [](const ClipVert& v) { return kGuardBand * v.w + v.x; });
    clip_plane(poly, [](const ClipVert& v) { return kGuardBand * v.w - v.x; });
    clip_plane(poly, [](const ClipVert& v) { return kGuardBand * v.w + v.y; });
    clip_plane(poly, [](const ClipVert& v) { return kGuardBand * v.w - v.y; });
    if (poly.size() < 3) continue;

    struct Screen {
      int64_t x, y;
      double z, inv_w, luma_w;
    };
    std::vector<Screen> sv;
    for (const auto& v : poly) {
      const double iw = 1.0 / v.w;
      const double sx = (v.x * iw + 1.0) * 0.5 * W, sy = (1.0 - v.y * iw) * 0.5 * H;
      sv.push_back({std::llround(sx * kSub), std::llround(sy * kSub), v.z * iw, iw, v.luma * iw});
    }
    for (size_t k = 1; k + 1 < sv.size(); ++k) {
      Screen a = sv[0], b = sv[k], c = sv[k + 1];
      int64_t area = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
      if (area == 0) continue;
      if (area < 0) {
        std::swap(b, c);
        area = -area;
      }
      Setup::Tri tri;
      const Screen* vs[3] = {&a, &b, &c};
      int64_t minx = a.x, maxx = a.x, miny = a.y, maxy = a.y;
      for (int q = 0; q < 3; ++q) {
        tri.x[q] = vs[q]->x;
        tri.y[q] = vs[q]->y;
        tri.z[q] = vs[q]->z;
        tri.inv_w[q] = vs[q]->inv_w;
        tri.luma_w[q] = vs[q]->luma_w;
        minx = std::min(minx, vs[q]->x);
        maxx = std::max(maxx, vs[q]->x);
        miny = std::min(miny, vs[q]->y);
        maxy = std::max(maxy, vs[q]->y);
      }
      tri.area = area;
      auto lo_px = [](int64_t v) {  // first pixel whose center is >= v
        const int64_t n = v - kSub / 2;
        return int((n >= 0 ? n + kSub - 1 : n) / kSub);
      };
      auto hi_px = [](int64_t v) {  // last pixel whose center is <= v
        const int64_t n = v - kSub / 2;
        return int(n >= 0 ? n / kSub : (n - kSub + 1) / kSub);
      };
      tri.bx0 = std::max(0, lo_px(minx));
      tri.by0 = std::max(0, lo_px(miny));
      tri.bx1 = std::min(W - 1, hi_px(maxx));
      tri.by1 = std::min(H - 1, hi_px(maxy));
      if (tri.bx0 > tri.bx1 || tri.by0 > tri.by1) continue;
      s->bounds = s->bounds.united({tri.bx0, tri.by0, tri.bx1 + 1, tri.by1 + 1});
      s->tris.push_back(tri);
    }
  }
  slot = std::move(s);
  return *slot;
}

PixelRect SceneRenderer::unit_bounds(int unit, int level) const { return setup(unit, level).bounds; }

void SceneRenderer::draw(const Setup& s, int32_t id, PixelRect rect, Frame& frame, std::vector<float>& depth) const {
  const int W = display_.width;
  const int rw = rect.x1 - rect.x0;
  for (const auto& t : s.tris) {
    const int x0 = std::max(t.bx0, rect.x0), x1 = std::min(t.bx1, rect.x1 - 1);
    const int y0 = std::max(t.by0, rect.y0), y1 = std::min(t.by1, rect.y1 - 1);
    if (x0 > x1 || y0 > y1) continue;
    // Edge e is opposite vertex e: from v[e+1] to v[e+2].
    int64_t ea[3], eb[3];
    bool top_left[3];
    for (int e = 0; e < 3; ++e) {
      const int i = (e + 1) % 3, j = (e + 2) % 3;
      const int64_t dx = t.x[j] - t.x[i], dy = t.y[j] - t.y[i];
      ea[e] = -dy;  // d/dpx
      eb[e] = dx;   // d/dpy
      top_left[e] = (dy == 0 && dx > 0) || dy < 0;
    }
    const double inv_area = 1.0 / double(t.area);
    for (int y = y0; y <= y1; ++y) {
      const int64_t py = int64_t(y) * kSub + kSub / 2;
      const int64_t px0 = int64_t(x0) * kSub + kSub / 2;
      int64_t e[3];
      for (int k = 0; k < 3; ++k) {
        const int i = (k + 1) % 3;
        e[k] = ea[k] * (px0 - t.x[i]) + eb[k] * (py - t.y[i]);
      }
      for (int x = x0; x <= x1; ++x) {
        bool inside = true;
        for (int k = 0; k < 3; ++k)
          if (e[k] < 0 || (e[k] == 0 && !top_left[k])) inside = false;
        if (inside) {
          const double l0 = double(e[0]) * inv_area, l1 = double(e[1]) * inv_area, l2 = double(e[2]) * inv_area;
          const float z = float(l0 * t.z[0] + l1 * t.z[1] + l2 * t.z[2]);
          float& d = depth[size_t(y - rect.y0) * rw + (x - rect.x0)];
          if (z < d) {
            d = z;
            const double iw = l0 * t.inv_w[0] + l1 * t.inv_w[1] + l2 * t.inv_w[2];
            const double lum = (l0 * t.luma_w[0] + l1 * t.luma_w[1] + l2 * t.luma_w[2]) / iw;
            const size_t p = size_t(y) * W + x;
            frame.luminance.samples[p] = std::clamp(lum, 0.0, 1.0);
            frame.unit_ids[p] = id;
          }
        }
        for (int k = 0; k < 3; ++k) e[k] += ea[k] * kSub;
      }
    }
  }
}

void SceneRenderer::render_region(const LoDState& state, PixelRect rect, Frame& frame, int override_unit,
                                  int override_level) const {
  const int W = display_.width, H = display_.height;
  rect = {std::max(rect.x0, 0), std::max(rect.y0, 0), std::min(rect.x1, W), std::min(rect.y1, H)};
  if (rect.empty()) return;
  if (frame.width() != W || frame.height() != H) throw DomainError("render_region: frame size mismatch");
  for (int y = rect.y0; y < rect.y1; ++y)
    for (int x = rect.x0; x < rect.x1; ++x) {
      const size_t p = size_t(y) * W + x;
      frame.luminance.samples[p] = options_.background_luminance;
      frame.unit_ids[p] = Frame::kBackground;
    }
  std::vector<float> depth(size_t(rect.x1 - rect.x0) * (rect.y1 - rect.y0), std::numeric_limits<float>::infinity());
  for (size_t u = 0; u < asset_.units.size(); ++u) {
    const int level = int(u) == override_unit ? override_level : state[u];
    const Setup& s = setup(int(u), level);
    if (s.bounds.overlaps(rect)) draw(s, int32_t(u), rect, frame, depth);
  }
}

Frame SceneRenderer::render(const LoDState& state) const {
  validate_state(asset_, state);
  Frame f;
  f.luminance = LuminanceImage(display_.width, display_.height, options_.background_luminance);
  f.unit_ids.assign(f.luminance.size(), Frame::kBackground);
  render_region(state, {0, 0, display_.width, display_.height}, f);
  return f;
}

Frame SceneRenderer::hypothetical(const LoDState& state, int unit, int level) const {
  validate_state(asset_, state);
  if (unit < 0 || unit >= int(asset_.units.size()) || level < 0 || level > asset_.units[unit].max_level())
    throw DomainError("hypothetical: unit/level out of range");
  LoDState s = state;
  s[unit] = level;
  return render(s);
}

Frame rasterize(const SceneAsset& asset, const LoDState& state, const Camera& camera, const DisplayParams& display,
                const RenderOptions& options) {
  return SceneRenderer(asset, display, camera, options).render(state);
}

Frame hypothetical_frame(const SceneAsset& asset, const LoDState& state, int unit, int candidate_level,
                         const Camera& camera, const DisplayParams& display, const RenderOptions& options) {
  return SceneRenderer(asset, display, camera, options).hypothetical(state, unit, candidate_level);
}

std::vector<uint32_t> footprint_counts(const Frame& frame, size_t unit_count) {
  std::vector<uint32_t> counts(unit_count, 0);
  for (int32_t id : frame.unit_ids)
    if (id >= 0 && size_t(id) < unit_count) ++counts[id];
  return counts;
}

}  // namespace fovstream
