#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fovstream/contrast.hpp"
#include "fovstream/geometry.hpp"
#include "fovstream/vision.hpp"

namespace fovstream {

// Wire sizes of one payload record.
inline constexpr uint64_t kVertexRecordBytes = 16;   // 3 x f32 position + RGBA8
inline constexpr uint64_t kTriangleRecordBytes = 12; // 3 x u32 index
inline constexpr uint64_t kLevelHeaderBytes = 8;     // u32 vertex count + u32 triangle count

struct Vertex {
  std::array<float, 3> position{};
  std::array<uint8_t, 4> color{0, 0, 0, 255};

  friend bool operator==(const Vertex&, const Vertex&) = default;
};

using Triangle = std::array<uint32_t, 3>;

enum class UnitKind : uint8_t { triangle = 0, heightfield_texel = 1 };

/// Geometry of one unit at one level. Triangles index the scene-wide vertex table and
/// replace the previous level's list; new_vertices counts records first shipped here.
struct UnitLevel {
  std::vector<Triangle> triangles;
  uint32_t new_vertices = 0;
  uint64_t bytes = 0;

  friend bool operator==(const UnitLevel&, const UnitLevel&) = default;
};

struct Unit {
  uint32_t id = 0;
  UnitKind kind = UnitKind::triangle;
  std::vector<UnitLevel> levels;

  int max_level() const { return static_cast<int>(levels.size()) - 1; }
  /// D(u, k): bytes needed to hold the unit at level k.
  uint64_t cumulative_bytes(int level) const;
  /// Bytes of the single step level -> level + 1.
  uint64_t step_bytes(int level) const { return levels.at(level + 1).bytes; }

  friend bool operator==(const Unit&, const Unit&) = default;
};

struct SceneAsset {
  std::vector<Vertex> vertices;
  std::vector<Unit> units;
  int level_count = 0;
  Aabb bounds;

  size_t slot_count() const { return units.size() * size_t(level_count > 0 ? level_count - 1 : 0); }
  /// Throws AssetError on out-of-range indices or non-increasing payloads.
  void validate() const;
  uint64_t total_bytes() const;

  friend bool operator==(const SceneAsset& a, const SceneAsset& b) {
    return a.vertices == b.vertices && a.units == b.units && a.level_count == b.level_count;
  }
};

using LoDState = std::vector<int>;

LoDState base_state(const SceneAsset& asset);
LoDState uniform_state(const SceneAsset& asset, int level);
void validate_state(const SceneAsset& asset, const LoDState& state);

// --- sources -----------------------------------------------------------------------

/// Regular grid of heights with per-vertex colors; vertex (i, j) sits at
/// (i * spacing, height, j * spacing) relative to the grid center.
struct Heightfield {
  int nx = 0;
  int nz = 0;
  double spacing = 1.0;
  std::vector<double> heights;
  std::vector<std::array<uint8_t, 3>> colors;
};

struct TerrainParams {
  int coarse_cells = 19;  // per axis
  int levels = 4;
  double extent = 40.0;   // scene units across
  double relief = 3.0;    // height amplitude
  double texture = 0.05;  // relative albedo grain at the finest vertex spacing
  uint64_t seed = 7;
};

/// Smooth seeded terrain with high-frequency albedo texture so that finer levels add
/// visible detail.
Heightfield generate_terrain(const TerrainParams& params);

/// Heightfield from a grayscale PGM (0..1 mapped to 0..relief); colors follow height.
Heightfield heightfield_from_pgm(const std::filesystem::path& path, double spacing, double relief);

struct TriangleMesh {
  std::vector<Vertex> vertices;
  std::vector<Triangle> triangles;
};

/// Wavefront OBJ subset: "v x y z [r g b]" (colors in 0..1) and "f a b c ..." (fan-split).
TriangleMesh read_obj(const std::filesystem::path& path);
void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh);

// --- ladder construction ------------------------------------------------------------

/// Grid ladder: level k samples every 2^(levels-1-k)-th vertex. (nx - 1) and (nz - 1) must
/// be multiples of 2^(levels-1). Triangle units split every coarse cell along the same
/// diagonal; texel units take whole coarse cells.
SceneAsset build_lod_ladder(const Heightfield& field, int level_count, UnitKind kind = UnitKind::triangle);

/// General meshes: nested vertex clustering on an octree-aligned grid; each level keeps
/// one original vertex per occupied cell. Coarsest-level triangles are the units and finer
/// triangles go to the unit with the nearest centroid.
SceneAsset build_lod_ladder(const TriangleMesh& mesh, int level_count);

// --- scene file ---------------------------------------------------------------------

inline constexpr uint32_t kSceneFileVersion = 1;

std::vector<uint8_t> serialize_scene(const SceneAsset& asset);
SceneAsset deserialize_scene(const std::vector<uint8_t>& bytes);
uint64_t scene_hash(const SceneAsset& asset);
nlohmann::json scene_manifest(const SceneAsset& asset);

void save_scene(const std::filesystem::path& path, const SceneAsset& asset);  // also writes <path>.json
SceneAsset load_scene(const std::filesystem::path& path);

uint64_t fnv1a64(const uint8_t* data, size_t size, uint64_t seed = 0xcbf29ce484222325ULL);

// --- rasterization ------------------------------------------------------------------

struct RenderOptions {
  double near_plane = 0.1;
  double far_plane = 500.0;
  double background_luminance = 0.0;  // fraction of peak
};

void to_json(nlohmann::json& j, const RenderOptions& o);
void from_json(const nlohmann::json& j, RenderOptions& o);

struct Frame {
  static constexpr int32_t kBackground = -1;

  LuminanceImage luminance;
  std::vector<int32_t> unit_ids;

  int width() const { return luminance.width; }
  int height() const { return luminance.height; }

  friend bool operator==(const Frame&, const Frame&) = default;
};

/// Half-open pixel rectangle.
struct PixelRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  bool empty() const { return x1 <= x0 || y1 <= y0; }
  bool overlaps(const PixelRect& o) const {
    return !empty() && !o.empty() && x0 < o.x1 && o.x0 < x1 && y0 < o.y1 && o.y0 < y1;
  }
  PixelRect united(const PixelRect& o) const;
};

/// Rasterizer bound to one scene, display and camera. Screen-space setup of each
/// (unit, level) is computed on first use and cached.
class SceneRenderer {
 public:
  SceneRenderer(const SceneAsset& asset, const DisplayParams& display, const Camera& camera,
                const RenderOptions& options = {});
  ~SceneRenderer();
  SceneRenderer(const SceneRenderer&) = delete;
  SceneRenderer& operator=(const SceneRenderer&) = delete;

  const SceneAsset& asset() const { return asset_; }
  const DisplayParams& display() const { return display_; }

  Frame render(const LoDState& state) const;

  /// Same frame with `unit` drawn at `level`.
  Frame hypothetical(const LoDState& state, int unit, int level) const;

  /// Re-renders only `rect` of `frame` (which must hold a full render of some state) for
  /// `state` with the optional override. Pixels inside rect come out bitwise identical to
  /// a full render.
  void render_region(const LoDState& state, PixelRect rect, Frame& frame, int override_unit = -1,
                     int override_level = -1) const;

  /// Screen bounds of a unit's geometry at a level (empty when off-screen).
  PixelRect unit_bounds(int unit, int level) const;

 private:
  struct Setup;
  const Setup& setup(int unit, int level) const;
  void draw(const Setup& s, int32_t id, PixelRect rect, Frame& frame, std::vector<float>& depth) const;

  const SceneAsset& asset_;
  DisplayParams display_;
  RenderOptions options_;
  Mat4 view_proj_;
  mutable std::vector<std::vector<std::unique_ptr<Setup>>> cache_;
};

Frame rasterize(const SceneAsset& asset, const LoDState& state, const Camera& camera,
                const DisplayParams& display, const RenderOptions& options = {});

Frame hypothetical_frame(const SceneAsset& asset, const LoDState& state, int unit, int candidate_level,
                         const Camera& camera, const DisplayParams& display, const RenderOptions& options = {});

/// Pixels per unit id in a frame.
std::vector<uint32_t> footprint_counts(const Frame& frame, size_t unit_count);

}  // namespace fovstream
