#pragma once

#include <compare>
#include <cstdint>
#include <set>
#include <vector>

#include "aligntk/tensor.hpp"

namespace aligntk {

struct Link {
  std::int64_t src = 0, tgt = 0;
  auto operator<=>(const Link&) const = default;
};

// Set of 0-indexed source-target links. src_len/tgt_len of 0 means the length
// is unknown (sets parsed from alignment files); known lengths are enforced.
struct AlignmentSet {
  std::int64_t src_len = 0, tgt_len = 0;
  std::set<Link> links;

  void add(std::int64_t s, std::int64_t t);
  bool contains(std::int64_t s, std::int64_t t) const {
    return links.count({s, t}) != 0;
  }
  std::int64_t size() const { return static_cast<std::int64_t>(links.size()); }
  bool operator==(const AlignmentSet& o) const { return links == o.links; }
};

// Swap the two coordinates of every link (reverse-direction frames).
AlignmentSet transpose_set(const AlignmentSet& a);
AlignmentSet intersect_sets(const AlignmentSet& a, const AlignmentSet& b);
AlignmentSet union_sets(const AlignmentSet& a, const AlignmentSet& b);

// Elementwise mean of encoder-attention activations (each t x s), transposed
// to s x t.
Tensor avg_attention(const std::vector<Tensor>& activations);

// One link per target column: the row with the maximal value, ties to the
// lowest source index.
AlignmentSet hard_align(const Tensor& a);

// subword position -> originating word index, monotone non-decreasing
using SubwordMap = std::vector<std::int64_t>;

AlignmentSet project_to_words(const AlignmentSet& sub, const SubwordMap& src_map,
                              const SubwordMap& tgt_map);

// Grow-diag symmetrization without the finalize pass. Starts from the
// intersection and repeatedly sweeps the current links in ascending (src,tgt)
// order, adding any of the 8 neighbors that is in the union and has an
// uncovered source or target index. Coverage updates immediately; links added
// during a sweep are expanded in the next one. Both inputs must be in the same
// coordinate frame (the caller transposes the reverse direction).
AlignmentSet grow_diag(const AlignmentSet& forward, const AlignmentSet& reverse);

}  // namespace aligntk
