#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gtp/error.hpp"
#include "gtp/geometry.hpp"

namespace gtp {

/// Per-pixel channel raster, float32 on disk (".smr"):
///   ASCII header "SMR1 <width> <height> <channels>\n"
///   followed by row-major little-endian float32 with channel innermost.
struct SemanticRaster {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;

  float at(int x, int y, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  float& at(int x, int y, int c) {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }

  static SemanticRaster create(int w, int h, int c) {
    SemanticRaster r;
    r.width = w;
    r.height = h;
    r.channels = c;
    r.data.assign(static_cast<size_t>(w) * h * c, 0.0f);
    return r;
  }

  static SemanticRaster load_smr(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open raster: " + path);
    std::string magic;
    SemanticRaster r;
    if (!(f >> magic >> r.width >> r.height >> r.channels) || magic != "SMR1") {
      throw DataError("bad SMR header in " + path);
    }
    if (r.width <= 0 || r.height <= 0 || r.channels <= 0) {
      throw DataError("bad SMR dimensions in " + path);
    }
    f.get();  // newline after header
    const size_t n = static_cast<size_t>(r.width) * r.height * r.channels;
    std::vector<unsigned char> raw(n * 4);
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<size_t>(f.gcount()) != raw.size()) {
      throw DataError("SMR payload truncated in " + path);
    }
    r.data.resize(n);
    for (size_t i = 0; i < n; ++i) {
      uint32_t bits = static_cast<uint32_t>(raw[4 * i]) |
                      (static_cast<uint32_t>(raw[4 * i + 1]) << 8) |
                      (static_cast<uint32_t>(raw[4 * i + 2]) << 16) |
                      (static_cast<uint32_t>(raw[4 * i + 3]) << 24);
      float v;
      std::memcpy(&v, &bits, 4);
      r.data[i] = v;
    }
    return r;
  }

  void save_smr(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write raster: " + path);
    f << "SMR1 " << width << " " << height << " " << channels << "\n";
    std::vector<unsigned char> raw(data.size() * 4);
    for (size_t i = 0; i < data.size(); ++i) {
      uint32_t bits;
      std::memcpy(&bits, &data[i], 4);
      raw[4 * i] = static_cast<unsigned char>(bits & 0xff);
      raw[4 * i + 1] = static_cast<unsigned char>((bits >> 8) & 0xff);
      raw[4 * i + 2] = static_cast<unsigned char>((bits >> 16) & 0xff);
      raw[4 * i + 3] = static_cast<unsigned char>((bits >> 24) & 0xff);
    }
    f.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  }
};

/// One grid cell. Pixel rectangle is [x0,x1) x [y0,y1).
struct Block {
  int row = 0, col = 0;
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  std::vector<double> feature;
  bool is_border = false;

  long pixel_count() const { return static_cast<long>(x1 - x0) * (y1 - y0); }
};

/// Clustered border region that survived walkable filtering.
struct DestinationRegion {
  int index = 0;  // 1-based
  std::vector<std::pair<int, int>> member_blocks;  // (row, col), sorted
  int px0 = 0, py0 = 0, px1 = 0, py1 = 0;          // pixel bounding box
  Quad world_quad;
  std::vector<double> feature;
  double walkable_score = 0.0;
};

struct SceneSpec {
  std::string scene_id;
  int width = 0;
  int height = 0;
  Homography homography;
  int grid_n = 16;
  std::vector<DestinationRegion> destinations;

  int n_dest() const { return static_cast<int>(destinations.size()); }
};

/// Splits the raster into an N x N grid; remainder pixels go to the last
/// row/column. Requires N >= 3 so the two border rings leave an interior.
inline std::vector<Block> grid_partition(int width, int height, int n) {
  if (n < 3) throw ContractError("grid_partition requires N >= 3");
  if (width < n || height < n) throw ContractError("raster smaller than grid");
  const int bw = width / n;
  const int bh = height / n;
  std::vector<Block> blocks;
  blocks.reserve(static_cast<size_t>(n) * n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      Block b;
      b.row = r;
      b.col = c;
      b.x0 = c * bw;
      b.x1 = (c == n - 1) ? width : (c + 1) * bw;
      b.y0 = r * bh;
      b.y1 = (r == n - 1) ? height : (r + 1) * bh;
      blocks.push_back(std::move(b));
    }
  }
  return blocks;
}

/// Border blocks are the outer ring plus the ring adjacent to it:
/// grid row or column in {0, 1, N-2, N-1}.
inline std::vector<Block> border_blocks(const std::vector<Block>& blocks, int n) {
  std::vector<Block> out;
  for (const Block& b : blocks) {
    const bool border = b.row <= 1 || b.row >= n - 2 || b.col <= 1 || b.col >= n - 2;
    if (border) {
      out.push_back(b);
      out.back().is_border = true;
    }
  }
  return out;
}

/// Arithmetic mean of F over the block's pixels.
inline std::vector<double> pool_block_features(const SemanticRaster& f, const Block& block) {
  if (block.x0 >= block.x1 || block.y0 >= block.y1) throw ContractError("empty block");
  if (block.x1 > f.width || block.y1 > f.height) throw ContractError("block outside raster");
  std::vector<double> acc(f.channels, 0.0);
  for (int y = block.y0; y < block.y1; ++y) {
    for (int x = block.x0; x < block.x1; ++x) {
      for (int c = 0; c < f.channels; ++c) acc[c] += f.at(x, y, c);
    }
  }
  const double inv = 1.0 / static_cast<double>(block.pixel_count());
  for (double& v : acc) v *= inv;
  return acc;
}

inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na < 1e-12 && nb < 1e-12) return 1.0;
  if (na < 1e-12 || nb < 1e-12) return 0.0;
  return dot / (na * nb);
}

/// Connected components of the graph joining 4-adjacent border blocks whose
/// pooled features have cosine similarity >= tau. Groups are indexed by scan
/// order of each group's top-left member, so the result is deterministic.
inline std::vector<std::vector<size_t>> cluster_border_blocks(const std::vector<Block>& border,
                                                              double tau) {
  if (border.empty()) throw ContractError("no border blocks to cluster");
  std::map<std::pair<int, int>, size_t> at;
  for (size_t i = 0; i < border.size(); ++i) at[{border[i].row, border[i].col}] = i;

  std::vector<int> group_of(border.size(), -1);
  std::vector<std::vector<size_t>> groups;
  for (size_t s = 0; s < border.size(); ++s) {
    if (group_of[s] >= 0) continue;
    std::vector<size_t> stack{s};
    std::vector<size_t> members;
    group_of[s] = static_cast<int>(groups.size());
    while (!stack.empty()) {
      const size_t i = stack.back();
      stack.pop_back();
      members.push_back(i);
      const int r = border[i].row, c = border[i].col;
      const std::pair<int, int> nbrs[4] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
      for (const auto& nb : nbrs) {
        auto it = at.find(nb);
        if (it == at.end() || group_of[it->second] >= 0) continue;
        if (cosine_similarity(border[i].feature, border[it->second].feature) >= tau) {
          group_of[it->second] = group_of[s];
          stack.push_back(it->second);
        }
      }
    }
    groups.push_back(std::move(members));
  }
  // Deterministic order and membership listing: sort members by (row,col),
  // then groups by their top-left member.
  for (auto& g : groups) {
    std::sort(g.begin(), g.end(), [&](size_t a, size_t b) {
      return std::make_pair(border[a].row, border[a].col) <
             std::make_pair(border[b].row, border[b].col);
    });
  }
  std::sort(groups.begin(), groups.end(), [&](const auto& a, const auto& b) {
    return std::make_pair(border[a[0]].row, border[a[0]].col) <
           std::make_pair(border[b[0]].row, border[b[0]].col);
  });
  return groups;
}

/// Default walkable category ids (ADE20K order): floor, road, grass,
/// sidewalk, earth/ground, path. Override via scene-prep options.
inline const std::vector<int>& default_walkable_ids() {
  static const std::vector<int> ids = {3, 6, 9, 11, 13, 52};
  return ids;
}

/// Mean softmax-normalized score of each walkable category over the group's
/// pixels, maximized over categories.
inline double walkable_score_of(const std::vector<size_t>& group, const std::vector<Block>& border,
                                const SemanticRaster& s, const std::vector<int>& walkable_ids) {
  std::vector<double> avg(walkable_ids.size(), 0.0);
  long npix = 0;
  std::vector<double> probs(walkable_ids.size());
  for (size_t bi : group) {
    const Block& b = border[bi];
    for (int y = b.y0; y < b.y1; ++y) {
      for (int x = b.x0; x < b.x1; ++x) {
        double mx = s.at(x, y, 0);
        for (int c = 1; c < s.channels; ++c) mx = std::max<double>(mx, s.at(x, y, c));
        double denom = 0.0;
        for (int c = 0; c < s.channels; ++c) denom += std::exp(s.at(x, y, c) - mx);
        for (size_t k = 0; k < walkable_ids.size(); ++k) {
          probs[k] = std::exp(s.at(x, y, walkable_ids[k]) - mx) / denom;
        }
        for (size_t k = 0; k < avg.size(); ++k) avg[k] += probs[k];
        ++npix;
      }
    }
  }
  double best = 0.0;
  for (double v : avg) best = std::max(best, v / static_cast<double>(npix));
  return best;
}

/// Keeps groups whose walkable score meets the threshold and materializes
/// them as 1-based destination regions (pixel bbox, pixel-weighted pooled
/// feature, world quad via the homography).
inline std::vector<DestinationRegion> filter_walkable(
    const std::vector<std::vector<size_t>>& groups, const std::vector<Block>& border,
    const SemanticRaster& s, const Homography& h,
    const std::vector<int>& walkable_ids = default_walkable_ids(), double threshold = 0.5) {
  for (int id : walkable_ids) {
    if (id < 0 || id >= s.channels) throw ContractError("walkable category id out of range");
  }
  std::vector<DestinationRegion> out;
  for (const auto& g : groups) {
    const double score = walkable_score_of(g, border, s, walkable_ids);
    if (score < threshold) continue;
    DestinationRegion r;
    r.walkable_score = score;
    r.px0 = border[g[0]].x0;
    r.py0 = border[g[0]].y0;
    r.px1 = border[g[0]].x1;
    r.py1 = border[g[0]].y1;
    long npix = 0;
    for (size_t bi : g) {
      const Block& b = border[bi];
      r.member_blocks.emplace_back(b.row, b.col);
      r.px0 = std::min(r.px0, b.x0);
      r.py0 = std::min(r.py0, b.y0);
      r.px1 = std::max(r.px1, b.x1);
      r.py1 = std::max(r.py1, b.y1);
      if (r.feature.empty()) r.feature.assign(b.feature.size(), 0.0);
      for (size_t k = 0; k < b.feature.size(); ++k) {
        r.feature[k] += b.feature[k] * static_cast<double>(b.pixel_count());
      }
      npix += b.pixel_count();
    }
    for (double& v : r.feature) v /= static_cast<double>(npix);
    const Vec2 c0 = h.apply({double(r.px0), double(r.py0)});
    const Vec2 c1 = h.apply({double(r.px1), double(r.py0)});
    const Vec2 c2 = h.apply({double(r.px1), double(r.py1)});
    const Vec2 c3 = h.apply({double(r.px0), double(r.py1)});
    r.world_quad = Quad{{c0, c1, c2, c3}};
    out.push_back(std::move(r));
  }
  if (out.empty()) throw SceneError("no walkable destination regions survived filtering");
  for (size_t i = 0; i < out.size(); ++i) out[i].index = static_cast<int>(i) + 1;
  return out;
}

/// Full pipeline over exported rasters (steps 2-5 of destination selection).
inline SceneSpec build_scene_spec(const std::string& scene_id, const SemanticRaster& s,
                                  const SemanticRaster& f, const Homography& h, int grid_n = 16,
                                  double tau = 0.9,
                                  const std::vector<int>& walkable_ids = default_walkable_ids(),
                                  double walk_threshold = 0.5) {
  if (s.channels != 150) throw DataError("score raster must have 150 channels");
  if (f.channels != 512) throw DataError("feature raster must have 512 channels");
  if (s.width != f.width || s.height != f.height) {
    throw DataError("score/feature raster dimensions differ");
  }
  std::vector<Block> blocks = grid_partition(s.width, s.height, grid_n);
  std::vector<Block> border = border_blocks(blocks, grid_n);
  for (Block& b : border) b.feature = pool_block_features(f, b);
  const auto groups = cluster_border_blocks(border, tau);
  SceneSpec spec;
  spec.scene_id = scene_id;
  spec.width = s.width;
  spec.height = s.height;
  spec.homography = h;
  spec.grid_n = grid_n;
  spec.destinations = filter_walkable(groups, border, s, h, walkable_ids, walk_threshold);
  return spec;
}

/// Ground-truth goal of a trajectory: the destination whose region contains
/// the last point, else the nearest region; ties go to the lowest index.
inline int assign_ground_truth_goal(std::span<const Vec2> world_traj, const SceneSpec& scene) {
  if (scene.n_dest() < 1) throw ContractError("scene has no destinations");
  if (world_traj.empty()) throw ContractError("empty trajectory");
  const Vec2 q = world_traj.back();
  for (const DestinationRegion& r : scene.destinations) {
    if (r.world_quad.contains(q)) return r.index;
  }
  int best = scene.destinations.front().index;
  double best_d = scene.destinations.front().world_quad.distance_to(q);
  for (const DestinationRegion& r : scene.destinations) {
    const double d = r.world_quad.distance_to(q);
    if (d < best_d) {
      best_d = d;
      best = r.index;
    }
  }
  return best;
}

// ---- JSON serialization ---------------------------------------------------

inline nlohmann::json scene_to_json(const SceneSpec& s) {
  nlohmann::json j;
  j["scene_id"] = s.scene_id;
  j["width"] = s.width;
  j["height"] = s.height;
  j["homography"] = {
      {s.homography.at(0, 0), s.homography.at(0, 1), s.homography.at(0, 2)},
      {s.homography.at(1, 0), s.homography.at(1, 1), s.homography.at(1, 2)},
      {s.homography.at(2, 0), s.homography.at(2, 1), s.homography.at(2, 2)}};
  j["grid_n"] = s.grid_n;
  j["destinations"] = nlohmann::json::array();
  for (const DestinationRegion& r : s.destinations) {
    nlohmann::json d;
    d["index"] = r.index;
    d["pixel_box"] = {r.px0, r.py0, r.px1, r.py1};
    d["world_corners"] = nlohmann::json::array();
    for (const Vec2& c : r.world_quad.corners) d["world_corners"].push_back({c.x, c.y});
    d["walkable_score"] = r.walkable_score;
    d["feature"] = r.feature;
    if (!r.member_blocks.empty()) {
      d["member_blocks"] = nlohmann::json::array();
      for (auto [row, col] : r.member_blocks) d["member_blocks"].push_back({row, col});
    }
    j["destinations"].push_back(std::move(d));
  }
  return j;
}

inline Homography homography_from_json(const nlohmann::json& j) {
  std::array<std::array<double, 3>, 3> m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m[r][c] = j.at(r).at(c).get<double>();
  return Homography(m);
}

/// Parses a scene spec or a manual-override destination file. Manual files
/// may give each destination as "pixel_box" [x0,y0,x1,y1] (mapped through
/// the homography), "world_box" [x0,y0,x1,y1], or "world_corners".
inline SceneSpec scene_from_json(const nlohmann::json& j,
                                 const std::filesystem::path& base_dir = ".") {
  SceneSpec s;
  s.scene_id = j.value("scene_id", "scene");
  s.width = j.value("width", 0);
  s.height = j.value("height", 0);
  if (j.contains("homography")) {
    s.homography = homography_from_json(j.at("homography"));
  } else if (j.contains("homography_path")) {
    s.homography = Homography::from_file((base_dir / j.at("homography_path").get<std::string>()).string());
  }
  if (!s.homography.invertible()) throw DataError("scene homography is singular");
  s.grid_n = j.value("grid_n", 16);
  if (!j.contains("destinations") || j.at("destinations").empty()) {
    throw SceneError("scene has no destinations: " + s.scene_id);
  }
  int next_index = 1;
  for (const auto& d : j.at("destinations")) {
    DestinationRegion r;
    r.index = d.value("index", next_index);
    if (d.contains("world_corners")) {
      const auto& wc = d.at("world_corners");
      if (wc.size() != 4) throw DataError("world_corners must have 4 points");
      for (int i = 0; i < 4; ++i) {
        r.world_quad.corners[i] = {wc.at(i).at(0).get<double>(), wc.at(i).at(1).get<double>()};
      }
    } else if (d.contains("world_box")) {
      const auto& b = d.at("world_box");
      r.world_quad = Quad::from_box(b.at(0), b.at(1), b.at(2), b.at(3));
    } else if (d.contains("pixel_box")) {
      const auto& b = d.at("pixel_box");
      r.px0 = b.at(0);
      r.py0 = b.at(1);
      r.px1 = b.at(2);
      r.py1 = b.at(3);
      const Vec2 c0 = s.homography.apply({double(r.px0), double(r.py0)});
      const Vec2 c1 = s.homography.apply({double(r.px1), double(r.py0)});
      const Vec2 c2 = s.homography.apply({double(r.px1), double(r.py1)});
      const Vec2 c3 = s.homography.apply({double(r.px0), double(r.py1)});
      r.world_quad = Quad{{c0, c1, c2, c3}};
    } else {
      throw DataError("destination needs world_corners, world_box or pixel_box");
    }
    r.walkable_score = d.value("walkable_score", 1.0);
    if (d.contains("feature")) r.feature = d.at("feature").get<std::vector<double>>();
    if (d.contains("member_blocks")) {
      for (const auto& mb : d.at("member_blocks")) {
        r.member_blocks.emplace_back(mb.at(0).get<int>(), mb.at(1).get<int>());
      }
    }
    s.destinations.push_back(std::move(r));
    ++next_index;
  }
  for (size_t i = 0; i < s.destinations.size(); ++i) {
    if (s.destinations[i].index != static_cast<int>(i) + 1) {
      throw DataError("destination indices must be 1..n_dest without gaps");
    }
  }
  return s;
}

inline void save_scene(const SceneSpec& s, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write scene spec: " + path);
  f << scene_to_json(s).dump(2) << "\n";
}

inline SceneSpec load_scene(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open scene spec: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad scene JSON in " + path + ": " + e.what());
  }
  return scene_from_json(j, std::filesystem::path(path).parent_path());
}

}  // namespace gtp
