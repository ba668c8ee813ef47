#include "aligntk/evalio.hpp"

#include <fstream>
#include <sstream>

namespace aligntk {

void AerCounts::add(const AlignmentSet& hyp, const GoldAlignment& gold) {
  for (const Link& l : hyp.links) {
    if (gold.sure.links.count(l)) ++a_and_s;
    if (gold.probable.links.count(l)) ++a_and_p;
  }
  a += hyp.size();
  s += gold.sure.size();
}

double AerCounts::aer() const {
  if (a + s == 0) {
    throw ScoreError("AER undefined: no hypothesis links and no sure links");
  }
  return 1.0 - static_cast<double>(a_and_s + a_and_p) /
                   static_cast<double>(a + s);
}

double AerCounts::precision() const {
  return a == 0 ? 1.0 : static_cast<double>(a_and_p) / static_cast<double>(a);
}

double AerCounts::recall() const {
  return s == 0 ? 1.0 : static_cast<double>(a_and_s) / static_cast<double>(s);
}

double aer(const AlignmentSet& hyp, const GoldAlignment& gold) {
  AerCounts c;
  c.add(hyp, gold);
  return c.aer();
}

AlignmentSet read_pharaoh_line(const std::string& line) {
  AlignmentSet out;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) {
    std::size_t dash = tok.find('-');
    if (dash == std::string::npos || dash == 0 || dash + 1 == tok.size()) {
      throw DataError("malformed alignment token \"" + tok + "\"");
    }
    std::int64_t s, t;
    try {
      std::size_t used_s = 0, used_t = 0;
      s = std::stoll(tok.substr(0, dash), &used_s);
      t = std::stoll(tok.substr(dash + 1), &used_t);
      if (used_s != dash || used_t != tok.size() - dash - 1) {
        throw std::invalid_argument(tok);
      }
    } catch (const std::exception&) {
      throw DataError("malformed alignment token \"" + tok + "\"");
    }
    if (s < 0 || t < 0) {
      throw DataError("negative index in alignment token \"" + tok + "\"");
    }
    out.links.insert({s, t});
  }
  return out;
}

std::string write_pharaoh_line(const AlignmentSet& set) {
  std::string out;
  for (const Link& l : set.links) {
    if (!out.empty()) out += ' ';
    out += std::to_string(l.src) + '-' + std::to_string(l.tgt);
  }
  return out;
}

std::vector<AlignmentSet> read_pharaoh_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open alignment file " + path);
  std::vector<AlignmentSet> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(read_pharaoh_line(line));
  return out;
}

void write_pharaoh_file(const std::string& path,
                        const std::vector<AlignmentSet>& sets) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write alignment file " + path);
  for (const AlignmentSet& s : sets) out << write_pharaoh_line(s) << '\n';
}

std::vector<GoldAlignment> read_gold(const std::string& path,
                                     bool zero_indexed) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open gold file " + path);
  std::vector<GoldAlignment> out;
  std::string line;
  std::int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::int64_t sent, src, tgt;
    if (!(ls >> sent)) continue;  // blank line
    std::string marker = "S";
    if (!(ls >> src >> tgt)) {
      throw DataError("gold file " + path + " line " + std::to_string(lineno) +
                      ": expected \"sentence src tgt [S|P]\"");
    }
    ls >> marker;
    const std::int64_t base = zero_indexed ? 0 : 1;
    if (sent < base || src < base || tgt < base) {
      throw DataError("gold file " + path + " line " + std::to_string(lineno) +
                      ": index below " + std::to_string(base) +
                      (zero_indexed ? "" : " (0-indexed file? use the zero-index flag)"));
    }
    std::size_t idx = static_cast<std::size_t>(sent - base);
    if (out.size() <= idx) out.resize(idx + 1);
    Link l{src - base, tgt - base};
    if (marker == "S") {
      out[idx].sure.links.insert(l);
      out[idx].probable.links.insert(l);
    } else if (marker == "P") {
      out[idx].probable.links.insert(l);
    } else {
      throw DataError("gold file " + path + " line " + std::to_string(lineno) +
                      ": unknown marker \"" + marker + "\"");
    }
  }
  return out;
}

}  // namespace aligntk
