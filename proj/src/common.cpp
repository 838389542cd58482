#include "isacxt/common.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace isacxt {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng Rng::derive(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream) {
  std::uint64_t s = splitmix64(seed);
  s = splitmix64(s ^ (0x9e3779b97f4a7c15ULL + stream));
  s = splitmix64(s ^ (0xd1b54a32d192ed03ULL + substream));
  return Rng(s);
}

double Rng::gaussian() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  // u1 in (0, 1] so the log is finite.
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 2.0 * kPi * u2;
  spare_ = r * std::sin(a);
  have_spare_ = true;
  return r * std::cos(a);
}

Cplx Rng::cgaussian() {
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  double r = std::sqrt(-std::log(u1));  // variance 1/2 per component
  double a = 2.0 * kPi * u2;
  return {r * std::cos(a), r * std::sin(a)};
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

CsvWriter::CsvWriter(const std::string& path) : path_(path) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  file_ = f;
}

CsvWriter::~CsvWriter() {
  if (file_) std::fclose(static_cast<FILE*>(file_));
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  FILE* f = static_cast<FILE*>(file_);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) std::fputc(',', f);
    std::fputs(cells[i].c_str(), f);
  }
  std::fputc('\n', f);
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace isacxt
