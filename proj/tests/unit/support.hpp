#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "dpr/synthetic.hpp"

namespace dpr::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    std::mt19937_64 rng((static_cast<std::uint64_t>(rd()) << 32) ^ rd());
    path_ = std::filesystem::temp_directory_path() / ("dpr-test-" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// A corpus small enough for end-to-end runs inside a unit test.
inline SyntheticSpec tiny_spec(std::uint64_t seed = 3) {
  SyntheticSpec s;
  s.seed = seed;
  s.num_topics = 4;
  s.passages_per_topic = 20;
  s.questions_per_topic = 16;
  s.unlabeled_question_count = 32;
  s.test_questions_per_topic = 4;
  s.vocab_size = 512;
  s.tokens_per_passage = 12;
  s.tokens_per_question = 6;
  s.terms_per_block = 6;
  s.generic_terms = 10;
  return s;
}

}  // namespace dpr::test
