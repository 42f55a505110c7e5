#include "prefroute/tokenize.hpp"

#include <cctype>

namespace prefroute {

namespace {

bool is_token_char(unsigned char c) {
  return std::isalnum(c) || c >= 0x80;
}

char lower_ascii(char c) {
  if (c >= 'A' && c <= 'Z') return static_cast<char>(c - 'A' + 'a');
  return c;
}

}  // namespace

std::vector<std::string> WordTokenizer::tokenize(std::string_view text) const {
  std::vector<std::string> tokens;
  std::string cur;
  for (const char c : text) {
    if (is_token_char(static_cast<unsigned char>(c))) {
      cur += lower_ascii(c);
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

std::shared_ptr<const Tokenizer> default_tokenizer() {
  static const auto instance = std::make_shared<WordTokenizer>();
  return instance;
}

std::vector<std::string> extract_entities(std::string_view text) {
  // Raw word split preserving case, with a sentence-start marker per word.
  struct Word {
    std::string text;
    bool sentence_initial;
  };
  std::vector<Word> words;
  std::string cur;
  bool at_sentence_start = true;
  bool cur_initial = true;
  for (const char c : text) {
    const auto uc = static_cast<unsigned char>(c);
    if (is_token_char(uc)) {
      if (cur.empty()) cur_initial = at_sentence_start;
      cur += c;
    } else {
      if (!cur.empty()) {
        words.push_back({std::move(cur), cur_initial});
        cur.clear();
        at_sentence_start = false;
      }
      if (c == '.' || c == '!' || c == '?' || c == '\n') at_sentence_start = true;
    }
  }
  if (!cur.empty()) words.push_back({std::move(cur), cur_initial});

  std::vector<std::string> entities;
  std::string run;
  auto flush = [&]() {
    if (!run.empty()) {
      for (char& c : run) c = lower_ascii(c);
      entities.push_back(std::move(run));
      run.clear();
    }
  };
  for (const auto& w : words) {
    if (w.sentence_initial) flush();  // runs never cross a sentence boundary
    const bool capitalized = !w.text.empty() && w.text[0] >= 'A' && w.text[0] <= 'Z';
    if (capitalized && !w.sentence_initial) {
      if (!run.empty()) run += ' ';
      run += w.text;
    } else {
      flush();
    }
  }
  flush();
  return entities;
}

}  // namespace prefroute
