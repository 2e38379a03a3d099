#include "moestress/prompts.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "moestress/errors.hpp"
#include "rng.hpp"

namespace moestress {

namespace {

constexpr std::uint64_t kNonceStream = 0x77;
constexpr std::uint64_t kCorpusStream = 0x88;
constexpr std::uint64_t kWordStream = 0x99;

void append_units(std::vector<std::string>& out, const std::string& text) {
  std::istringstream in(text);
  std::string unit;
  while (in >> unit) out.push_back(unit);
}

std::string join_units(const std::vector<std::string>& units) {
  std::string out;
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (i > 0) out += ' ';
    out += units[i];
  }
  return out;
}

}  // namespace

std::vector<std::string> split_units(const std::string& text) {
  std::vector<std::string> units;
  append_units(units, text);
  return units;
}

std::string build_attack_prompt(const PromptSpec& spec) {
  const std::vector<std::string> unit_words = split_units(spec.repeated_unit);
  if (unit_words.empty()) {
    throw Error("attack prompt needs a non-empty repeated unit");
  }
  if (spec.target_length < 1) throw Error("target_length must be >= 1");

  std::vector<std::string> units;
  units.reserve(spec.target_length + 16);
  append_units(units, spec.system_prompt);
  append_units(units, spec.nonce);
  // Repeat whole units until the repeated body reaches target_length units.
  const std::size_t body_target =
      units.size() + static_cast<std::size_t>(spec.target_length);
  while (units.size() < body_target) {
    units.insert(units.end(), unit_words.begin(), unit_words.end());
  }
  return join_units(units);
}

std::string build_normal_prompt(const PromptSpec& spec, std::uint64_t seed) {
  if (spec.target_length < 1) throw Error("target_length must be >= 1");
  const std::vector<std::string> docs = load_corpus(spec.corpus_path);
  if (docs.empty()) {
    throw Error("corpus has no documents: " + spec.corpus_path.string());
  }
  const std::size_t first =
      detail::splitmix64(detail::mix_keys(seed, kCorpusStream)) % docs.size();

  std::vector<std::string> units;
  units.reserve(spec.target_length);
  std::size_t doc = first;
  // Wrap through the corpus until the target is reached, then truncate.
  while (units.size() < static_cast<std::size_t>(spec.target_length)) {
    append_units(units, docs[doc]);
    doc = (doc + 1) % docs.size();
    if (doc == first && units.empty()) {
      throw Error("corpus documents contain no units");
    }
  }
  units.resize(spec.target_length);
  return join_units(units);
}

std::vector<std::string> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus: " + path.string());
  std::vector<std::string> docs;
  std::string line, current;
  while (std::getline(in, line)) {
    const bool blank = line.find_first_not_of(" \t\r") == std::string::npos;
    if (blank) {
      if (!current.empty()) docs.push_back(std::move(current));
      current.clear();
    } else {
      if (!current.empty()) current += '\n';
      current += line;
    }
  }
  if (!current.empty()) docs.push_back(std::move(current));
  return docs;
}

double repeated_mass_fraction(const std::string& prompt,
                              const std::string& unit) {
  const std::vector<std::string> units = split_units(prompt);
  const std::vector<std::string> pattern = split_units(unit);
  if (units.empty() || pattern.empty()) return 0.0;
  // Greedy non-overlapping scan so multi-word units count correctly.
  std::size_t matched = 0, i = 0;
  while (i + pattern.size() <= units.size()) {
    bool hit = true;
    for (std::size_t j = 0; j < pattern.size(); ++j) {
      if (units[i + j] != pattern[j]) {
        hit = false;
        break;
      }
    }
    if (hit) {
      matched += pattern.size();
      i += pattern.size();
    } else {
      ++i;
    }
  }
  return static_cast<double>(matched) / units.size();
}

std::string make_nonce(std::uint64_t seed, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "nonce-%016llx",
                static_cast<unsigned long long>(detail::splitmix64(
                    detail::mix_keys(seed, kNonceStream, index))));
  return buf;
}

std::string random_word_prompt(int units, std::uint64_t seed, int vocab) {
  if (units < 1) throw Error("random prompt needs at least one unit");
  if (vocab < 1) throw Error("vocabulary size must be positive");
  std::string out;
  for (int i = 0; i < units; ++i) {
    const std::uint64_t id =
        detail::splitmix64(detail::mix_keys(seed, kWordStream, i)) %
        static_cast<std::uint64_t>(vocab);
    if (i > 0) out += ' ';
    out += 'w';
    out += std::to_string(id);
  }
  return out;
}

}  // namespace moestress
