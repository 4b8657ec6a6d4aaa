#pragma once

#include "ringform/common.hpp"

#include <algorithm>
#include <array>
#include <string>
#include <vector>

namespace ringform {

/// Ring interaction graph over robots 0..n_total-1; robot i senses i-1 and i+1 (mod n).
class RingTopology {
 public:
  explicit RingTopology(std::size_t n_total) : n_(n_total) {
    require(n_total >= 3, "ring needs at least 3 robots, got " + std::to_string(n_total));
  }

  std::size_t size() const noexcept { return n_; }
  std::size_t prev(std::size_t i) const noexcept { return (i + n_ - 1) % n_; }
  std::size_t next(std::size_t i) const noexcept { return (i + 1) % n_; }
  std::array<std::size_t, 2> neighbors(std::size_t i) const noexcept { return {prev(i), next(i)}; }

 private:
  std::size_t n_;
};

/// Vertex robot set S (sorted ascending) and desired inter-vertex displacements
/// r*_i = q_{s_i} - q_{s_{i+1}}.
struct PolygonSpec {
  std::vector<std::size_t> vertex_set;
  std::vector<Vec2> r_star;

  std::size_t m() const noexcept { return vertex_set.size(); }
};

struct ChainSegment {
  std::size_t segment_id = 0;
  std::size_t anchor = 0;
  std::size_t terminal = 0;
  std::vector<std::size_t> members;  // anchor excluded, terminal included
  std::size_t cardinality = 0;
};

inline constexpr double kClosureTolerance = 1e-9;

/// True iff the displacements sum to zero within 1e-9 per component.
inline bool validate_polygon_closure(const PolygonSpec& spec) {
  Vec2 sum = Vec2::Zero();
  for (const auto& r : spec.r_star) sum += r;
  return std::abs(sum.x()) <= kClosureTolerance && std::abs(sum.y()) <= kClosureTolerance;
}

/// Checks index range, strict ordering and m >= 3. Closure is checked separately.
inline void validate_vertex_set(const RingTopology& ring, const std::vector<std::size_t>& vertex_set) {
  require(vertex_set.size() >= 3, "polygon needs at least 3 vertex robots, got " +
                                      std::to_string(vertex_set.size()));
  require(vertex_set.size() <= ring.size(), "more vertex robots than robots in the ring");
  for (std::size_t i = 0; i < vertex_set.size(); ++i) {
    require(vertex_set[i] < ring.size(),
            "vertex index " + std::to_string(vertex_set[i]) + " out of range [0, " +
                std::to_string(ring.size()) + ")");
    if (i > 0) {
      require(vertex_set[i] != vertex_set[i - 1],
              "duplicate vertex index " + std::to_string(vertex_set[i]));
      require(vertex_set[i] > vertex_set[i - 1], "vertex set must be strictly increasing");
    }
  }
}

/// Removes the edges entering each vertex robot's successor chain, yielding m chains.
/// Segment i runs from s_i (exclusive) to s_{i+1} (inclusive); segment m-1 wraps to s_0.
inline std::vector<ChainSegment> cut_ring(const RingTopology& ring, const PolygonSpec& spec) {
  validate_vertex_set(ring, spec.vertex_set);
  const auto& s = spec.vertex_set;
  const std::size_t m = s.size();
  const std::size_t n = ring.size();

  std::vector<ChainSegment> segments;
  segments.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    ChainSegment seg;
    seg.segment_id = i;
    seg.anchor = s[i];
    seg.terminal = s[(i + 1) % m];
    seg.cardinality = (seg.terminal + n - seg.anchor) % n;
    seg.members.reserve(seg.cardinality);
    for (std::size_t j = 1; j <= seg.cardinality; ++j) seg.members.push_back((seg.anchor + j) % n);
    segments.push_back(std::move(seg));
  }
  return segments;
}

inline std::vector<std::size_t> cardinalities(const std::vector<ChainSegment>& segments) {
  std::vector<std::size_t> out;
  out.reserve(segments.size());
  for (const auto& seg : segments) out.push_back(seg.cardinality);
  return out;
}

}  // namespace ringform
