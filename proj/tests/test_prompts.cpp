#include <doctest.h>

#include <fstream>
#include <set>

#include "moestress/errors.hpp"
#include "moestress/prompts.hpp"
#include "temp_dir.hpp"

using namespace moestress;

TEST_CASE("attack prompt is the unit repeated target_length times") {
  PromptSpec spec;
  spec.repeated_unit = "x";
  spec.target_length = 5;
  CHECK(build_attack_prompt(spec) == "x x x x x");
}

TEST_CASE("attack prompt places system prompt and nonce before the body") {
  PromptSpec spec;
  spec.repeated_unit = "go";
  spec.target_length = 3;
  spec.system_prompt = "be brief";
  spec.nonce = "nonce-1";
  const std::string p = build_attack_prompt(spec);
  CHECK(p == "be brief nonce-1 go go go");
}

TEST_CASE("multi-word units are repeated in whole blocks") {
  PromptSpec spec;
  spec.repeated_unit = "a b";
  spec.target_length = 3;  // rounds up to two blocks = 4 units
  const std::string p = build_attack_prompt(spec);
  CHECK(p == "a b a b");
}

TEST_CASE("attack prompt rejects empty units and non-positive lengths") {
  PromptSpec spec;
  spec.repeated_unit = "";
  spec.target_length = 5;
  CHECK_THROWS_AS(build_attack_prompt(spec), Error);
  spec.repeated_unit = "x";
  spec.target_length = 0;
  CHECK_THROWS_AS(build_attack_prompt(spec), Error);
}

TEST_CASE("prompts differing only in nonce share the repeated body") {
  PromptSpec a;
  a.repeated_unit = "the";
  a.target_length = 100;
  a.nonce = make_nonce(7, 0);
  PromptSpec b = a;
  b.nonce = make_nonce(7, 1);

  const std::string pa = build_attack_prompt(a);
  const std::string pb = build_attack_prompt(b);
  CHECK(pa != pb);
  CHECK(pa.substr(pa.find(' ')) == pb.substr(pb.find(' ')));
}

TEST_CASE("nonces are deterministic per seed and distinct per index") {
  CHECK(make_nonce(7, 1) == make_nonce(7, 1));
  std::set<std::string> seen;
  for (int i = 0; i < 100; ++i) seen.insert(make_nonce(7, i));
  CHECK(seen.size() == 100);
  CHECK(make_nonce(8, 0) != make_nonce(7, 0));
}

TEST_CASE("repeated mass fraction counts only the repeated unit") {
  CHECK(repeated_mass_fraction("nonce x x x", "x") == 0.75);
  CHECK(repeated_mass_fraction("x x x x", "x") == 1.0);
  CHECK(repeated_mass_fraction("a b c", "x") == 0.0);

  PromptSpec spec;
  spec.repeated_unit = "the";
  spec.target_length = 1000;
  spec.nonce = "nonce-abc";
  CHECK(repeated_mass_fraction(build_attack_prompt(spec), "the") >= 0.99);
}

TEST_CASE("repeated mass fraction scans multi-word units without overlap") {
  CHECK(repeated_mass_fraction("a b a b", "a b") == 1.0);
  CHECK(repeated_mass_fraction("a a b b", "a b") == 0.5);
}

TEST_CASE("normal prompts come from the corpus, truncated to length") {
  TempDir tmp;
  const auto p = tmp.file("corpus.txt");
  {
    std::ofstream out(p);
    out << "alpha beta gamma delta\n";
    out << "\n";
    out << "one two\nthree four five six\n";
  }
  const auto docs = load_corpus(p);
  REQUIRE(docs.size() == 2);
  CHECK(docs[0] == "alpha beta gamma delta");
  CHECK(docs[1] == "one two\nthree four five six");

  PromptSpec spec;
  spec.kind = PromptSpec::Kind::normal;
  spec.corpus_path = p;
  spec.target_length = 3;
  const std::string prompt = build_normal_prompt(spec, 1);
  CHECK(split_units(prompt).size() == 3);
  // Deterministic per seed.
  CHECK(build_normal_prompt(spec, 1) == prompt);

  // The prompt must be a prefix of one of the documents' unit streams.
  const bool from_doc0 = prompt == "alpha beta gamma";
  const bool from_doc1 = prompt == "one two three";
  CHECK((from_doc0 || from_doc1));
}

TEST_CASE("short corpora wrap until the target length is reached") {
  TempDir tmp;
  const auto p = tmp.file("tiny.txt");
  {
    std::ofstream out(p);
    out << "alpha beta\n";
  }
  PromptSpec spec;
  spec.kind = PromptSpec::Kind::normal;
  spec.corpus_path = p;
  spec.target_length = 5;
  CHECK(build_normal_prompt(spec, 0) == "alpha beta alpha beta alpha");
}

TEST_CASE("empty corpus is rejected") {
  TempDir tmp;
  const auto p = tmp.file("empty.txt");
  { std::ofstream out(p); }
  CHECK(load_corpus(p).empty());

  PromptSpec spec;
  spec.kind = PromptSpec::Kind::normal;
  spec.corpus_path = p;
  spec.target_length = 5;
  CHECK_THROWS_AS(build_normal_prompt(spec, 0), Error);
}

TEST_CASE("random word prompts are seeded and have the requested size") {
  const std::string a = random_word_prompt(50, 3);
  CHECK(split_units(a).size() == 50);
  CHECK(a == random_word_prompt(50, 3));
  CHECK(a != random_word_prompt(50, 4));
}

TEST_CASE("split_units handles tabs, newlines, and repeated spaces") {
  const auto units = split_units("  a\tb\n\nc   d ");
  CHECK(units == std::vector<std::string>{"a", "b", "c", "d"});
  CHECK(split_units("").empty());
  CHECK(split_units("   \n\t ").empty());
}
