#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace prefroute {

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<std::string> tokenize(std::string_view text) const = 0;
};

// Splits on whitespace and punctuation, lowercases ASCII letters. Bytes >= 0x80
// count as token characters so multi-byte UTF-8 sequences stay intact.
class WordTokenizer : public Tokenizer {
 public:
  std::vector<std::string> tokenize(std::string_view text) const override;
};

std::shared_ptr<const Tokenizer> default_tokenizer();

// Heuristic entity extractor: contiguous runs of capitalized tokens, skipping
// sentence-initial capitals. Returned strings are lowercased.
std::vector<std::string> extract_entities(std::string_view text);

}  // namespace prefroute
