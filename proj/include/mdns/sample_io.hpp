#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mdns/lattice.hpp"

namespace mdns {

/// Text dump: a "#mdns-samples v1 N=<N> D=<D>" header, then one line per
/// sample with token n written as base-N digit n - 1 (0-9, then a-z), and an
/// optional tab-separated log-weight.
struct SampleDump {
  int N = 2;
  int D = 0;
  std::vector<TokenSeq> samples;
  std::vector<double> log_weights;  // empty, or one per sample
};

void write_samples(std::ostream& os, const SampleDump& dump);
SampleDump read_samples(std::istream& is);

void write_samples_file(const std::string& path, const SampleDump& dump);
SampleDump read_samples_file(const std::string& path);

}  // namespace mdns
