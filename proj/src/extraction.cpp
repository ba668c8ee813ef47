#include "aligntk/extraction.hpp"

#include <algorithm>
#include <string>

namespace aligntk {

void AlignmentSet::add(std::int64_t s, std::int64_t t) {
  if (s < 0 || t < 0 || (src_len > 0 && s >= src_len) ||
      (tgt_len > 0 && t >= tgt_len)) {
    throw IndexError("alignment link (" + std::to_string(s) + "," +
                     std::to_string(t) + ") outside " + std::to_string(src_len) +
                     "x" + std::to_string(tgt_len));
  }
  links.insert({s, t});
}

AlignmentSet transpose_set(const AlignmentSet& a) {
  AlignmentSet out;
  out.src_len = a.tgt_len;
  out.tgt_len = a.src_len;
  for (const Link& l : a.links) out.links.insert({l.tgt, l.src});
  return out;
}

AlignmentSet intersect_sets(const AlignmentSet& a, const AlignmentSet& b) {
  AlignmentSet out;
  out.src_len = a.src_len;
  out.tgt_len = a.tgt_len;
  for (const Link& l : a.links) {
    if (b.links.count(l)) out.links.insert(l);
  }
  return out;
}

AlignmentSet union_sets(const AlignmentSet& a, const AlignmentSet& b) {
  AlignmentSet out;
  out.src_len = std::max(a.src_len, b.src_len);
  out.tgt_len = std::max(a.tgt_len, b.tgt_len);
  out.links = a.links;
  out.links.insert(b.links.begin(), b.links.end());
  return out;
}

Tensor avg_attention(const std::vector<Tensor>& activations) {
  if (activations.empty()) {
    throw ShapeError("avg_attention: no activation matrices");
  }
  Tensor sum = activations[0];
  for (std::size_t i = 1; i < activations.size(); ++i) {
    if (!activations[i].same_shape(sum)) {
      throw ShapeError("avg_attention: shape mismatch " + sum.shape_str() +
                       " vs " + activations[i].shape_str());
    }
    sum = add(sum, activations[i]);
  }
  return transpose(scale(sum, 1.0 / static_cast<double>(activations.size())));
}

AlignmentSet hard_align(const Tensor& a) {
  if (a.rank() != 2) {
    throw ShapeError("hard_align: expected rank-2, got " + a.shape_str());
  }
  AlignmentSet out;
  out.src_len = a.rows();
  out.tgt_len = a.cols();
  for (std::int64_t j = 0; j < a.cols(); ++j) {
    std::int64_t best = 0;
    for (std::int64_t i = 1; i < a.rows(); ++i) {
      if (a.at(i, j) > a.at(best, j)) best = i;
    }
    out.links.insert({best, j});
  }
  return out;
}

AlignmentSet project_to_words(const AlignmentSet& sub, const SubwordMap& src_map,
                              const SubwordMap& tgt_map) {
  AlignmentSet out;
  out.src_len = src_map.empty() ? 0 : src_map.back() + 1;
  out.tgt_len = tgt_map.empty() ? 0 : tgt_map.back() + 1;
  for (const Link& l : sub.links) {
    if (l.src >= static_cast<std::int64_t>(src_map.size()) ||
        l.tgt >= static_cast<std::int64_t>(tgt_map.size())) {
      throw IndexError("subword link (" + std::to_string(l.src) + "," +
                       std::to_string(l.tgt) + ") outside subword maps of size " +
                       std::to_string(src_map.size()) + "/" +
                       std::to_string(tgt_map.size()));
    }
    out.links.insert({src_map[static_cast<std::size_t>(l.src)],
                      tgt_map[static_cast<std::size_t>(l.tgt)]});
  }
  return out;
}

AlignmentSet grow_diag(const AlignmentSet& forward, const AlignmentSet& reverse) {
  if (forward.src_len != reverse.src_len || forward.tgt_len != reverse.tgt_len) {
    throw ShapeError("grow_diag: sentence dimensions disagree, " +
                     std::to_string(forward.src_len) + "x" +
                     std::to_string(forward.tgt_len) + " vs " +
                     std::to_string(reverse.src_len) + "x" +
                     std::to_string(reverse.tgt_len));
  }
  static const std::int64_t kOffsets[8][2] = {
      {-1, 0}, {0, -1}, {1, 0}, {0, 1}, {-1, -1}, {-1, 1}, {1, -1}, {1, 1}};

  AlignmentSet uni = union_sets(forward, reverse);
  for (const Link& l : uni.links) {
    // lengths of 0 mean "unknown" (file-parsed sets); infer from the links
    uni.src_len = std::max(uni.src_len, l.src + 1);
    uni.tgt_len = std::max(uni.tgt_len, l.tgt + 1);
  }
  AlignmentSet out = intersect_sets(forward, reverse);
  out.src_len = uni.src_len;
  out.tgt_len = uni.tgt_len;

  std::vector<char> src_cov(static_cast<std::size_t>(uni.src_len), 0);
  std::vector<char> tgt_cov(static_cast<std::size_t>(uni.tgt_len), 0);
  for (const Link& l : out.links) {
    src_cov[static_cast<std::size_t>(l.src)] = 1;
    tgt_cov[static_cast<std::size_t>(l.tgt)] = 1;
  }

  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<Link> sweep(out.links.begin(), out.links.end());
    for (const Link& l : sweep) {
      for (const auto& off : kOffsets) {
        Link n{l.src + off[0], l.tgt + off[1]};
        if (n.src < 0 || n.tgt < 0 || n.src >= uni.src_len ||
            n.tgt >= uni.tgt_len) {
          continue;
        }
        if (!uni.links.count(n) || out.links.count(n)) continue;
        if (src_cov[static_cast<std::size_t>(n.src)] &&
            tgt_cov[static_cast<std::size_t>(n.tgt)]) {
          continue;
        }
        out.links.insert(n);
        src_cov[static_cast<std::size_t>(n.src)] = 1;
        tgt_cov[static_cast<std::size_t>(n.tgt)] = 1;
        changed = true;
      }
    }
  }
  return out;
}

}  // namespace aligntk
