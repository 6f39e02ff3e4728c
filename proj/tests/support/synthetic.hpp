#ifndef THREDKIT_TESTS_SYNTHETIC_HPP
#define THREDKIT_TESTS_SYNTHETIC_HPP

#include <array>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "thredkit/corpus.hpp"
#include "thredkit/rng.hpp"

namespace thredkit::fixtures {

// Dialogs built from three topic templates. Function words come from the
// built-in stopword list; a reply occasionally borrows a word from another topic.
inline const std::array<std::vector<std::string>, 3>& topic_words() {
  static const std::array<std::vector<std::string>, 3> words{{
      {"pizza", "pasta", "cheese", "tomato", "bread", "soup", "salad", "dinner", "cook", "recipe", "oven",
       "garlic"},
      {"football", "goal", "team", "match", "coach", "score", "player", "league", "stadium", "referee", "season",
       "tackle"},
      {"laptop", "screen", "keyboard", "software", "battery", "charger", "install", "update", "driver", "monitor",
       "mouse", "printer"},
  }};
  return words;
}

inline const std::vector<std::string>& filler_words() {
  static const std::vector<std::string> words{"i", "you", "the", "a", "is", "it", "do", "to", "and", "my", "we", "?"};
  return words;
}

inline std::string synthetic_utterance(std::size_t topic, Rng& rng, double noise) {
  const auto& tw = topic_words();
  const auto& fw = filler_words();
  std::string out;
  const std::size_t len = 4 + rng.below(4);
  for (std::size_t i = 0; i < len; ++i) {
    std::string w;
    if (i % 2 == 0) {
      std::size_t t = topic;
      if (rng.uniform() < noise) t = (topic + 1 + rng.below(2)) % 3;
      w = tw[t][rng.below(tw[t].size())];
    } else {
      w = fw[rng.below(fw.size())];
    }
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

/// One dialog per line, `__eou__` separated, 2-4 utterances on a single topic.
inline std::vector<std::string> synthetic_corpus_lines(std::size_t n_dialogs, std::uint64_t seed,
                                                       double reply_noise = 0.15) {
  Rng rng(seed);
  std::vector<std::string> lines;
  for (std::size_t d = 0; d < n_dialogs; ++d) {
    const std::size_t topic = d % 3;
    const std::size_t turns = 2 + rng.below(3);
    std::string line;
    for (std::size_t u = 0; u < turns; ++u) {
      line += synthetic_utterance(topic, rng, u + 1 == turns ? reply_noise : 0.0);
      line += " __eou__";
      if (u + 1 < turns) line += ' ';
    }
    lines.push_back(line);
  }
  return lines;
}

// Sentence frames shared by all topics; each {} is filled with a word of the
// dialog's topic.
inline const std::vector<std::string>& templates() {
  static const std::vector<std::string> frames{
      "i like the {} and the {}", "do you have a {} ?", "my {} is new", "we need a {} to do it",
      "is it the {} or the {} ?",  "you and i do the {}"};
  return frames;
}

inline std::string fill_template(const std::string& frame, std::size_t topic, Rng& rng, double noise) {
  const auto& tw = topic_words();
  std::string out;
  std::size_t pos = 0;
  for (std::size_t hole; (hole = frame.find("{}", pos)) != std::string::npos; pos = hole + 2) {
    std::size_t t = topic;
    if (rng.uniform() < noise) t = (topic + 1 + rng.below(2)) % 3;
    out += frame.substr(pos, hole - pos) + tw[t][rng.below(tw[t].size())];
  }
  return out + frame.substr(pos);
}

/// Template dialogs: dialog d is about topic d % 3, every turn is a filled
/// frame, and only the reply may borrow a word from another topic.
inline std::vector<std::string> template_corpus_lines(std::size_t n_dialogs, std::uint64_t seed,
                                                      double reply_noise = 0.1) {
  Rng rng(seed);
  std::vector<std::string> lines;
  for (std::size_t d = 0; d < n_dialogs; ++d) {
    const std::size_t topic = d % 3;
    const std::size_t turns = 2 + rng.below(3);
    std::string line;
    for (std::size_t u = 0; u < turns; ++u) {
      const auto& frame = templates()[rng.below(templates().size())];
      line += fill_template(frame, topic, rng, u + 1 == turns ? reply_noise : 0.0);
      line += " __eou__";
      if (u + 1 < turns) line += ' ';
    }
    lines.push_back(line);
  }
  return lines;
}

inline std::vector<RawDialog> template_corpus(std::size_t n_dialogs, std::uint64_t seed, double reply_noise = 0.1) {
  std::vector<RawDialog> out;
  std::size_t i = 0;
  for (const auto& line : template_corpus_lines(n_dialogs, seed, reply_noise)) {
    out.push_back({parse_eou_line(line, true), "template:" + std::to_string(i++)});
  }
  return out;
}

inline void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  for (const auto& l : lines) out << l << '\n';
}

inline std::vector<RawDialog> synthetic_corpus(std::size_t n_dialogs, std::uint64_t seed, double reply_noise = 0.15) {
  std::vector<RawDialog> out;
  std::size_t i = 0;
  for (const auto& line : synthetic_corpus_lines(n_dialogs, seed, reply_noise)) {
    out.push_back({parse_eou_line(line, true), "synthetic:" + std::to_string(i++)});
  }
  return out;
}

}  // namespace thredkit::fixtures

#endif  // THREDKIT_TESTS_SYNTHETIC_HPP
