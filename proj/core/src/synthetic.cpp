#include "dpr/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "dpr/error.hpp"

namespace dpr {
namespace {

class TermSampler {
 public:
  TermSampler(const SyntheticSpec& spec, std::mt19937_64& rng) : spec_(spec), rng_(rng) {}

  /// Subject terms are shared by every facet of a topic; key terms belong to
  /// one facet.
  std::string text(std::size_t topic, std::size_t facet, std::size_t length) {
    std::string out;
    for (std::size_t i = 0; i < length; ++i) {
      if (i) out.push_back(' ');
      if (coin(spec_.noise_rate)) {
        out += "g" + std::to_string(pick(spec_.generic_terms));
      } else if (coin(spec_.key_rate)) {
        out += "t" + std::to_string(topic) + "f" + std::to_string(facet) + "k" +
               std::to_string(pick(spec_.terms_per_block));
      } else {
        out += "t" + std::to_string(topic) + "s" + std::to_string(pick(spec_.terms_per_block));
      }
    }
    return out;
  }

 private:
  std::size_t pick(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_);
  }
  bool coin(double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < p; }

  const SyntheticSpec& spec_;
  std::mt19937_64& rng_;
};

void check_rate(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) throw Error(std::string("synthetic: ") + name + " must be in [0,1]");
}

}  // namespace

void SyntheticSpec::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw Error(std::string("synthetic: ") + name + " must be at least 1");
  };
  positive(num_topics, "num_topics");
  positive(passages_per_topic, "passages_per_topic");
  positive(questions_per_topic, "questions_per_topic");
  positive(unlabeled_question_count, "unlabeled_question_count");
  positive(test_questions_per_topic, "test_questions_per_topic");
  positive(tokens_per_passage, "tokens_per_passage");
  positive(tokens_per_question, "tokens_per_question");
  positive(terms_per_block, "terms_per_block");
  positive(generic_terms, "generic_terms");
  if (vocab_size < 2) throw Error("synthetic: vocab_size must be at least 2");
  check_rate(unlabeled_positive_fraction, "unlabeled_positive_fraction");
  check_rate(noise_rate, "noise_rate");
  check_rate(key_rate, "key_rate");
}

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  TermSampler terms(spec, rng);

  SyntheticDataset data;
  data.tokenizer.vocab_size = spec.vocab_size;
  data.tokenizer.max_passage_len = std::max<std::size_t>(128, spec.tokens_per_passage);
  data.tokenizer.max_question_len = std::max<std::size_t>(32, spec.tokens_per_question);

  const std::size_t total = spec.num_topics * spec.passages_per_topic;
  std::vector<std::uint64_t> ids(total);
  for (std::size_t i = 0; i < total; ++i) ids[i] = i;
  std::shuffle(ids.begin(), ids.end(), rng);

  const std::size_t facet_size = spec.facet_size();
  const std::size_t facets = (spec.passages_per_topic + facet_size - 1) / facet_size;

  // members[topic][facet]: ascending passage ids.
  std::vector<std::vector<std::vector<PassageId>>> members(
      spec.num_topics, std::vector<std::vector<PassageId>>(facets));
  std::vector<Passage> passages;
  passages.reserve(total);
  for (std::size_t t = 0; t < spec.num_topics; ++t) {
    for (std::size_t j = 0; j < spec.passages_per_topic; ++j) {
      PassageId id{ids[t * spec.passages_per_topic + j]};
      const std::size_t f = j / facet_size;
      members[t][f].push_back(id);
      passages.push_back(make_passage(id, terms.text(t, f, spec.tokens_per_passage), data.tokenizer));
    }
  }
  data.collection = Collection(std::move(passages));
  for (auto& topic : members) {
    for (auto& facet : topic) std::sort(facet.begin(), facet.end());
  }

  // Question i goes to topic i % T and facet (i / T) % F.
  std::uint64_t next_question = 0;
  auto add_question = [&](std::vector<Question>& out, std::size_t i) {
    const std::size_t topic = i % spec.num_topics;
    const std::size_t facet = (i / spec.num_topics) % facets;
    QuestionId qid{next_question++};
    out.push_back(make_question(qid, terms.text(topic, facet, spec.tokens_per_question),
                                data.tokenizer));
    data.truth.push_back(QRel{qid, members[topic][facet]});
    return &members[topic][facet];
  };

  const std::size_t labeled = spec.num_topics * spec.questions_per_topic;
  for (std::size_t i = 0; i < labeled; ++i) {
    const auto* rel = add_question(data.labeled_questions, i);
    PassageId label = (*rel)[std::uniform_int_distribution<std::size_t>(0, rel->size() - 1)(rng)];
    data.labeled_qrels.push_back(QRel{data.labeled_questions.back().id, {label}});
  }
  for (std::size_t i = 0; i < spec.unlabeled_question_count; ++i) {
    add_question(data.unlabeled_questions, i);
  }
  const std::size_t test = spec.num_topics * spec.test_questions_per_topic;
  for (std::size_t i = 0; i < test; ++i) {
    add_question(data.test_questions, i);
  }
  return data;
}

std::size_t SyntheticSpec::facet_size() const {
  return std::clamp<std::size_t>(
      static_cast<std::size_t>(
          std::llround(unlabeled_positive_fraction * static_cast<double>(passages_per_topic))),
      1, passages_per_topic);
}

void write_synthetic(const std::string& dir, const SyntheticDataset& data) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto at = [&](const char* name) { return (fs::path(dir) / name).string(); };
  write_collection(at(SyntheticFiles::kCollection), data.collection);
  write_questions(at(SyntheticFiles::kQuestions), data.labeled_questions);
  write_qrels(at(SyntheticFiles::kQrels), data.labeled_qrels);
  write_questions(at(SyntheticFiles::kUnlabeled), data.unlabeled_questions);
  write_questions(at(SyntheticFiles::kTestQuestions), data.test_questions);
  write_qrels(at(SyntheticFiles::kTruth), data.truth);
}

}  // namespace dpr
