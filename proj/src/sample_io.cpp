#include "mdns/sample_io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "mdns/error.hpp"

namespace mdns {
namespace {

constexpr int kMaxDumpVocab = 36;

char digit(Token t) {
  const int d = t - 1;
  return static_cast<char>(d < 10 ? '0' + d : 'a' + d - 10);
}

int parse_digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'z') return c - 'a' + 10;
  return -1;
}

}  // namespace

void write_samples(std::ostream& os, const SampleDump& dump) {
  if (dump.N < 2 || dump.N > kMaxDumpVocab) throw_config("sample dumps support 2 <= N <= 36");
  if (!dump.log_weights.empty() && dump.log_weights.size() != dump.samples.size())
    throw_config("sample dump needs one log-weight per sample");
  os << "#mdns-samples v1 N=" << dump.N << " D=" << dump.D << '\n';
  std::string line;
  for (std::size_t i = 0; i < dump.samples.size(); ++i) {
    const auto& x = dump.samples[i];
    if (static_cast<int>(x.size()) != dump.D) throw_config("sample length does not match D");
    line.clear();
    for (Token t : x) {
      if (t < 1 || t > dump.N) throw_config("sample dumps hold unmasked tokens only");
      line.push_back(digit(t));
    }
    os << line;
    if (!dump.log_weights.empty()) {
      char buf[32];
      const auto res = std::to_chars(buf, buf + sizeof buf, dump.log_weights[i]);
      os << '\t' << std::string_view(buf, res.ptr - buf);
    }
    os << '\n';
  }
}

SampleDump read_samples(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw_config("empty sample dump");
  SampleDump dump;
  {
    std::istringstream hs(line);
    std::string magic, version, n, d;
    hs >> magic >> version >> n >> d;
    if (magic != "#mdns-samples" || version != "v1" || n.rfind("N=", 0) != 0 || d.rfind("D=", 0) != 0)
      throw_config("bad sample dump header: " + line);
    try {
      dump.N = std::stoi(n.substr(2));
      dump.D = std::stoi(d.substr(2));
    } catch (const std::exception&) {
      throw_config("bad sample dump header: " + line);
    }
    if (dump.N < 2 || dump.N > kMaxDumpVocab || dump.D < 1) throw_config("bad sample dump header: " + line);
  }
  std::size_t lineno = 1;
  bool weighted = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    const std::string_view tokens = std::string_view(line).substr(0, tab);
    if (static_cast<int>(tokens.size()) != dump.D)
      throw_config("line " + std::to_string(lineno) + " has " + std::to_string(tokens.size()) + " tokens, expected " +
                   std::to_string(dump.D));
    TokenSeq x(dump.D);
    for (int i = 0; i < dump.D; ++i) {
      const int v = parse_digit(tokens[i]);
      if (v < 0 || v >= dump.N) throw_config("invalid token on line " + std::to_string(lineno));
      x[i] = static_cast<Token>(v + 1);
    }
    const bool has_w = tab != std::string::npos;
    if (dump.samples.empty())
      weighted = has_w;
    else if (has_w != weighted)
      throw_config("line " + std::to_string(lineno) + ": log-weights must be present on all lines or none");
    if (has_w) {
      const char* b = line.data() + tab + 1;
      const char* e = line.data() + line.size();
      double w = 0.0;
      const auto res = std::from_chars(b, e, w);
      if (res.ec != std::errc() || res.ptr != e) throw_config("invalid log-weight on line " + std::to_string(lineno));
      dump.log_weights.push_back(w);
    }
    dump.samples.push_back(std::move(x));
  }
  return dump;
}

void write_samples_file(const std::string& path, const SampleDump& dump) {
  std::ofstream os(path);
  if (!os) throw_config("cannot write " + path);
  write_samples(os, dump);
}

SampleDump read_samples_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw_config("cannot open " + path);
  return read_samples(is);
}

}  // namespace mdns
