#include "difflm/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "difflm/rng.hpp"
#include "json.hpp"

namespace difflm {

namespace {
constexpr const char* kUnkToken = "<unk>";
}

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

std::vector<double> parse_double_row(const std::string& line) {
  std::vector<double> out;
  const char* p = line.c_str();
  char* end = nullptr;
  while (*p) {
    while (*p == ' ' || *p == '\t') ++p;
    if (!*p) break;
    double v = std::strtod(p, &end);
    if (end == p) throw std::runtime_error("vocab: bad numeric field in: " + line);
    out.push_back(v);
    p = end;
  }
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("vocab: cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("vocab: cannot write file: " + path);
  for (const auto& line : lines) out << line << '\n';
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (static_cast<int>(tokens_.size()) < 2) {
    throw std::runtime_error("vocab: vocabulary needs at least two tokens");
  }
  for (int i = 0; i < static_cast<int>(tokens_.size()); ++i) {
    auto [it, inserted] = index_.emplace(tokens_[i], i);
    if (!inserted) throw std::runtime_error("vocab: duplicate token: " + tokens_[i]);
  }
}

Vocabulary Vocabulary::build(const std::vector<std::string>& lines, int min_count) {
  std::map<std::string, long long> counts;
  bool any = false;
  for (const auto& line : lines) {
    for (auto& tok : split_whitespace(line)) {
      any = true;
      if (tok == kUnkToken) continue;
      ++counts[tok];
    }
  }
  if (!any) throw std::runtime_error("vocab: empty corpus");

  std::vector<std::pair<std::string, long long>> entries(counts.begin(), counts.end());
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  std::vector<std::string> tokens;
  for (auto& [tok, count] : entries) {
    if (count >= min_count) tokens.push_back(tok);
  }
  tokens.push_back(kUnkToken);
  return Vocabulary(std::move(tokens));
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) {
    throw std::runtime_error("vocab: token id out of range: " + std::to_string(id));
  }
  return tokens_[id];
}

int Vocabulary::id_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? unk_id() : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.count(std::string(token)) > 0;
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
  std::vector<int> ids;
  for (auto& tok : split_whitespace(text)) ids.push_back(id_of(tok));
  return ids;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

void Vocabulary::save(const std::string& path) const {
  write_lines(path, tokens_);
  nlohmann::json meta;
  meta["size"] = size();
  meta["unk_id"] = unk_id();
  meta["blank_id"] = blank_id();
  meta["mask_id"] = mask_id();
  std::ofstream out(path + ".json");
  if (!out) throw std::runtime_error("vocab: cannot write file: " + path + ".json");
  out << meta.dump(2) << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  auto tokens = read_lines(path);
  while (!tokens.empty() && tokens.back().empty()) tokens.pop_back();
  Vocabulary v(std::move(tokens));

  std::ifstream in(path + ".json");
  if (in) {
    nlohmann::json meta = nlohmann::json::parse(in);
    if (meta.value("size", v.size()) != v.size() ||
        meta.value("unk_id", v.unk_id()) != v.unk_id() ||
        meta.value("blank_id", v.blank_id()) != v.blank_id() ||
        meta.value("mask_id", v.mask_id()) != v.mask_id()) {
      throw std::runtime_error("vocab: sidecar metadata disagrees with token list: " + path);
    }
  }
  return v;
}

uint64_t Vocabulary::content_hash() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& tok : tokens_) {
    for (unsigned char c : tok) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0x1f;  // separator so {"ab","c"} != {"a","bc"}
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace difflm
