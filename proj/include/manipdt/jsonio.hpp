#pragma once
#include <cstdint>
#include <string>
#include <vector>

namespace jsonio {

// Doubles in every artifact this project writes (datasets, eval reports,
// traces) are formatted with 17 significant digits so that write -> parse ->
// write is byte-identical.
std::string fmt_double(double v);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);
bool file_exists(const std::string& path);

uint64_t fnv1a64(const std::string& s);
std::string hex64(uint64_t v);

// Tiny append-style JSON writer with caller-controlled key order and
// fmt_double number formatting. Not a general serializer: strings passed to
// it must not need escaping beyond the basics handled in escape().
struct Writer {
  std::string out;

  void raw(const std::string& s) { out += s; }
  void str(const std::string& s);
  void num(double v) { out += fmt_double(v); }
  void num(int64_t v) { out += std::to_string(v); }
  void boolean(bool b) { out += b ? "true" : "false"; }

  // convenience for arrays of doubles / vectors of vectors
  void arr(const std::vector<double>& v);
  void arr2(const std::vector<std::vector<double>>& v);

  static std::string escape(const std::string& s);
};

}  // namespace jsonio
