#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace difflm {

// Word-level vocabulary over a whitespace-tokenized corpus. Ordinary token
// ids occupy [0, size()); "<unk>" is always present as the last ordinary id.
// Two reserved ids live outside the vocabulary proper:
//   blank_id() == size()      (CTC blank)
//   mask_id()  == size() + 1  (diffusion mask)
// Neither ever appears in a clean TokenSeq.
class Vocabulary {
 public:
  // Builds from corpus lines: every whitespace token with frequency >=
  // min_count, ordered by (frequency desc, lexicographic asc), then "<unk>".
  static Vocabulary build(const std::vector<std::string>& lines, int min_count);

  int size() const { return static_cast<int>(tokens_.size()); }
  int unk_id() const { return size() - 1; }
  int blank_id() const { return size(); }
  int mask_id() const { return size() + 1; }

  const std::string& token(int id) const;
  // Returns the id for a token string, or unk_id() if absent.
  int id_of(std::string_view token) const;
  bool contains(std::string_view token) const;

  std::vector<int> encode(std::string_view text) const;
  std::string decode(const std::vector<int>& ids) const;

  // Token list file (one token per line) plus a JSON sidecar at
  // <path>.json recording the reserved indices.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  // FNV-1a over the ordered token strings; stable across save/load.
  uint64_t content_hash() const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  explicit Vocabulary(std::vector<std::string> tokens);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

std::vector<std::string> split_whitespace(std::string_view text);

// Whitespace-separated numeric fields; accepts "inf"/"-inf", which stream
// extraction does not.
std::vector<double> parse_double_row(const std::string& line);

// Reads all lines of a text file; throws on open failure. Trailing
// newline does not produce an empty final line.
std::vector<std::string> read_lines(const std::string& path);
void write_lines(const std::string& path, const std::vector<std::string>& lines);

}  // namespace difflm
