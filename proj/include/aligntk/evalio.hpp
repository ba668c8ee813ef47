#pragma once

#include <string>
#include <vector>

#include "aligntk/extraction.hpp"

namespace aligntk {

// Sure links the annotators were certain about, plus probable ones. S is
// always a subset of P; readers enforce this by unioning S into P.
struct GoldAlignment {
  AlignmentSet sure, probable;
};

// Running totals for corpus-level (micro-averaged) scoring.
struct AerCounts {
  std::int64_t a_and_s = 0, a_and_p = 0, a = 0, s = 0;

  void add(const AlignmentSet& hyp, const GoldAlignment& gold);
  // AER = 1 - (|A cap S| + |A cap P|) / (|A| + |S|)   (Och & Ney 2003)
  double aer() const;
  double precision() const;  // |A cap P| / |A|, 1 when A is empty
  double recall() const;     // |A cap S| / |S|, 1 when S is empty
};

double aer(const AlignmentSet& hyp, const GoldAlignment& gold);

AlignmentSet read_pharaoh_line(const std::string& line);
std::string write_pharaoh_line(const AlignmentSet& set);
std::vector<AlignmentSet> read_pharaoh_file(const std::string& path);
void write_pharaoh_file(const std::string& path,
                        const std::vector<AlignmentSet>& sets);

// Gold file lines are "sentence src tgt [S|P]", 1-indexed by default, marker
// defaulting to S. Sentence numbers may have gaps; missing ones come back as
// empty alignments. A position of 0 signals a 0-indexed file and is refused
// unless zero_indexed is set.
std::vector<GoldAlignment> read_gold(const std::string& path,
                                     bool zero_indexed = false);

}  // namespace aligntk
