#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace moestress {

// Units are whitespace-delimited words joined by single spaces; unit counts
// approximate model-token counts without requiring a tokenizer.
struct PromptSpec {
  enum class Kind { attack, normal };

  Kind kind = Kind::attack;
  std::string repeated_unit;  // attack only
  int target_length = 1;      // units
  std::string system_prompt;
  std::string nonce;  // unique prefix, distinct per attack prompt
  std::filesystem::path corpus_path;  // normal only
};

// system_prompt units, then the nonce, then repeated_unit repeated
// target_length times. Throws Error on an empty repeated_unit.
std::string build_attack_prompt(const PromptSpec& spec);

// Seeded document pick from the corpus, truncated to target_length units;
// shorter corpora are concatenated (wrapping) until the length is reached.
std::string build_normal_prompt(const PromptSpec& spec, std::uint64_t seed);

// Corpus file: UTF-8 text, documents separated by blank lines.
std::vector<std::string> load_corpus(const std::filesystem::path& path);

// Fraction of whitespace units that are the repeated unit.
double repeated_mass_fraction(const std::string& prompt,
                              const std::string& unit);

// Short deterministic cache-busting prefix, distinct per (seed, index).
std::string make_nonce(std::uint64_t seed, int index);

// Synthetic high-entropy baseline: `units` pseudo-words drawn from a
// `vocab`-sized pool, deterministic per seed. Used when no corpus is given.
std::string random_word_prompt(int units, std::uint64_t seed, int vocab = 32000);

std::vector<std::string> split_units(const std::string& text);

}  // namespace moestress
