#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "blockcw/model.hpp"
#include "blockcw/types.hpp"
#include "blockcw/version.hpp"

namespace blockcw {

using Json = nlohmann::ordered_json;

namespace detail {

inline Fraction parse_fraction(const std::string& text) {
  const auto slash = text.find('/');
  try {
    if (slash == std::string::npos) return {std::stoll(text), 1};
    return {std::stoll(text.substr(0, slash)), std::stoll(text.substr(slash + 1))};
  } catch (const std::exception&) {
    fail(Errc::bad_input, "cannot parse proportion '" + text + "'");
  }
}

}  // namespace detail

// Instance document: { "n": sites, "p": [proportions], "k": [[couplings]] }.
// Proportions may be numbers or exact fraction strings like "1/3".
inline BlockModel load_instance(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Errc::bad_input, "cannot open instance file '" + path + "'");
  Json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    fail(Errc::bad_input, "instance file '" + path + "' is not valid JSON: " + e.what());
  }
  require(doc.contains("n") && doc.contains("p") && doc.contains("k"), Errc::bad_input,
          "instance file needs fields n, p, k");
  const int n = doc["n"].get<int>();
  const auto& pj = doc["p"];
  require(pj.is_array() && !pj.empty(), Errc::bad_input, "field p must be a nonempty array");
  const int m = static_cast<int>(pj.size());
  const auto& kj = doc["k"];
  require(kj.is_array() && static_cast<int>(kj.size()) == m, Errc::bad_input,
          "field k must be an m x m array");
  Matrix k(m, m);
  for (int i = 0; i < m; ++i) {
    require(kj[i].is_array() && static_cast<int>(kj[i].size()) == m, Errc::bad_input,
            "field k must be an m x m array");
    for (int j = 0; j < m; ++j) k(i, j) = kj[i][j].get<double>();
  }
  if (pj[0].is_string()) {
    std::vector<Fraction> p;
    for (const auto& e : pj) p.push_back(detail::parse_fraction(e.get<std::string>()));
    return BlockModel::create(n, p, k);
  }
  Vector p(m);
  for (int i = 0; i < m; ++i) p[i] = pj[i].get<double>();
  return BlockModel::create(n, p, k);
}

inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// FNV-1a over the canonical instance text; identifies a (n, p, k) triple in
// output sidecars.
inline std::uint64_t model_hash(const BlockModel& model) {
  std::string canon = std::to_string(model.n());
  for (int i = 0; i < model.block_count(); ++i)
    canon += "|" + std::to_string(model.block_sizes()[i]);
  for (int i = 0; i < model.block_count(); ++i)
    for (int j = 0; j < model.block_count(); ++j) canon += "|" + format_double(model.k()(i, j));
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : canon) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline Json model_json(const BlockModel& model) {
  Json j;
  j["n"] = model.n();
  j["block_sizes"] = std::vector<int>(model.block_sizes().begin(), model.block_sizes().end());
  std::vector<std::vector<double>> k(model.block_count(),
                                     std::vector<double>(model.block_count()));
  for (int i = 0; i < model.block_count(); ++i)
    for (int jj = 0; jj < model.block_count(); ++jj) k[i][jj] = model.k()(i, jj);
  j["k"] = k;
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(model_hash(model)));
  j["hash"] = hash;
  return j;
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::string& header) : out_(path) {
    require(out_.good(), Errc::bad_input, "cannot open '" + path.string() + "' for writing");
    out_ << header << "\n";
  }

  template <class... Fields>
  void row(const Fields&... fields) {
    bool first = true;
    ((out_ << (first ? "" : ","), first = false, write_field(fields)), ...);
    out_ << "\n";
  }

 private:
  void write_field(double x) { out_ << format_double(x); }
  void write_field(const std::string& s) { out_ << s; }
  template <class T>
  void write_field(const T& x) {
    out_ << x;
  }

  std::ofstream out_;
};

inline void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  require(out.good(), Errc::bad_input, "cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << "\n";
}

}  // namespace blockcw
