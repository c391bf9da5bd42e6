#include "dpr/mining.hpp"

#include <algorithm>
#include <cmath>

#include "dpr/error.hpp"
#include "parallel.hpp"
#include "seeds.hpp"
#include "text_io.hpp"

namespace dpr {
namespace {

struct Candidate {
  std::size_t rank;  // 1-based retrieval rank
  PassageId id;
  double cross = 0.0;
};

struct QuestionMining {
  std::vector<Candidate> candidates;  // non-labeled, rank order
  std::vector<PassageId> kept;
};

std::vector<Candidate> retrieve_candidates(const DualEncoderParams& retriever, const FlatIndex& index,
                                           const Question& q, const RelevanceMap& labels,
                                           std::size_t top_k) {
  if (q.tokens.empty()) throw Error("mining: question " + to_string(q.id) + " has no tokens");
  auto hits = index.search(encode_question(retriever, q.tokens), top_k);
  std::vector<Candidate> out;
  for (std::size_t r = 0; r < hits.size(); ++r) {
    if (is_labeled_positive(labels, q.id, hits[r].id)) continue;
    out.push_back({r + 1, hits[r].id, 0.0});
  }
  return out;
}

DenoiseReport make_report(const std::vector<QuestionMining>& per_question, const MiningConfig& config,
                          const CrossEncoderParams* cross) {
  DenoiseReport report;
  report.questions = per_question.size();
  const std::size_t width = config.bucket_width;
  const std::size_t n_buckets = (config.top_k + width - 1) / width;
  for (std::size_t b = 0; b < n_buckets; ++b) {
    report.buckets.push_back({b * width + 1, std::min(config.top_k, (b + 1) * width), 0, 0});
  }
  for (const auto& q : per_question) {
    if (q.kept.empty()) ++report.questions_without_negatives;
    for (const auto& c : q.candidates) {
      auto& bucket = report.buckets[(c.rank - 1) / width];
      ++bucket.candidates;
      if (cross && c.cross >= config.negative_threshold) ++bucket.filtered;
    }
  }
  return report;
}

MiningResult mine(const DualEncoderParams& retriever, const FlatIndex& index,
                  const CrossEncoderParams* cross, std::span<const Question> questions,
                  const RelevanceMap& labels, const Collection* collection,
                  const MiningConfig& config) {
  config.validate();
  std::vector<QuestionMining> per_question(questions.size());
  detail::parallel_for(questions.size(), [&](std::size_t i) {
    const auto& q = questions[i];
    auto& out = per_question[i];
    out.candidates = retrieve_candidates(retriever, index, q, labels, config.top_k);
    std::vector<PassageId> survivors;
    for (auto& c : out.candidates) {
      if (cross) {
        c.cross = cross_score(*cross, q.tokens, collection->at(c.id).tokens);
        if (!(c.cross < config.negative_threshold)) continue;
      }
      survivors.push_back(c.id);
    }
    out.kept = sample_capped(survivors, config.max_negatives, config.seed, q.id);
  });

  MiningResult result;
  for (std::size_t i = 0; i < questions.size(); ++i) {
    result.negatives[questions[i].id] = per_question[i].kept;
  }
  result.report = make_report(per_question, config, cross);
  return result;
}

}  // namespace

void MiningConfig::validate() const {
  if (top_k == 0) throw Error("mining config: top_k must be at least 1");
  if (!(negative_threshold > 0.0 && negative_threshold < positive_threshold &&
        positive_threshold < 1.0)) {
    throw Error("mining config: need 0 < negative_threshold < positive_threshold < 1");
  }
  if (bucket_width == 0) throw Error("mining config: bucket_width must be at least 1");
}

std::vector<PassageId> sample_capped(std::span<const PassageId> ranked, std::size_t cap,
                                     std::uint64_t seed, QuestionId question) {
  if (cap == 0 || ranked.size() <= cap) return {ranked.begin(), ranked.end()};
  const std::uint64_t qseed = detail::derive_seed(seed, value(question));
  std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
  keyed.reserve(ranked.size());
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    keyed.emplace_back(detail::splitmix64(qseed ^ value(ranked[i])), i);
  }
  std::partial_sort(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(cap), keyed.end());
  std::vector<std::size_t> chosen;
  for (std::size_t i = 0; i < cap; ++i) chosen.push_back(keyed[i].second);
  std::sort(chosen.begin(), chosen.end());
  std::vector<PassageId> out;
  for (auto i : chosen) out.push_back(ranked[i]);
  return out;
}

NegativeMap retrieve_negative_pool(const DualEncoderParams& retriever, const FlatIndex& index,
                                   std::span<const Question> questions, const RelevanceMap& labels,
                                   std::size_t top_k) {
  if (top_k == 0) throw Error("negative pool: top_k must be at least 1");
  std::vector<std::vector<PassageId>> pools(questions.size());
  detail::parallel_for(questions.size(), [&](std::size_t i) {
    for (const auto& c : retrieve_candidates(retriever, index, questions[i], labels, top_k)) {
      pools[i].push_back(c.id);
    }
  });
  NegativeMap out;
  for (std::size_t i = 0; i < questions.size(); ++i) out[questions[i].id] = std::move(pools[i]);
  return out;
}

MiningResult mine_hard_negatives(const DualEncoderParams& retriever, const FlatIndex& index,
                                 const CrossEncoderParams& cross, std::span<const Question> questions,
                                 const RelevanceMap& labels, const Collection& collection,
                                 const MiningConfig& config) {
  return mine(retriever, index, &cross, questions, labels, &collection, config);
}

MiningResult select_undenoised_negatives(const DualEncoderParams& retriever, const FlatIndex& index,
                                         std::span<const Question> questions,
                                         const RelevanceMap& labels, const MiningConfig& config) {
  return mine(retriever, index, nullptr, questions, labels, nullptr, config);
}

std::optional<AugmentedExample> select_pseudo_labels(QuestionId question,
                                                     std::span<const ScoredPassage> scored,
                                                     const MiningConfig& config) {
  config.validate();
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    if (scored[i].score > config.positive_threshold &&
        (!best || scored[i].score > scored[*best].score)) {
      best = i;
    }
  }
  if (!best) return std::nullopt;
  std::vector<PassageId> negatives;
  for (const auto& s : scored) {
    if (s.score < config.negative_threshold) negatives.push_back(s.id);
  }
  AugmentedExample ex;
  ex.question = question;
  ex.positive = scored[*best].id;
  ex.positive_score = scored[*best].score;
  ex.negatives = sample_capped(negatives, config.max_negatives, config.seed, question);
  ex.teacher_scores.assign(scored.begin(), scored.end());
  return ex;
}

std::vector<AugmentedExample> pseudo_label(const DualEncoderParams& retriever, const FlatIndex& index,
                                           const CrossEncoderParams& cross,
                                           std::span<const Question> unlabeled,
                                           const Collection& collection, const MiningConfig& config) {
  config.validate();
  if (unlabeled.empty()) throw Error("pseudo_label: no unlabeled questions");
  std::vector<std::optional<AugmentedExample>> slots(unlabeled.size());
  const RelevanceMap none;
  detail::parallel_for(unlabeled.size(), [&](std::size_t i) {
    const auto& q = unlabeled[i];
    auto candidates = retrieve_candidates(retriever, index, q, none, config.top_k);
    std::vector<ScoredPassage> scored;
    scored.reserve(candidates.size());
    for (const auto& c : candidates) {
      scored.push_back({c.id, cross_score(cross, q.tokens, collection.at(c.id).tokens)});
    }
    slots[i] = select_pseudo_labels(q.id, scored, config);
  });
  std::vector<AugmentedExample> out;
  for (auto& s : slots) {
    if (s) out.push_back(std::move(*s));
  }
  std::sort(out.begin(), out.end(),
            [](const AugmentedExample& a, const AugmentedExample& b) { return a.question < b.question; });
  return out;
}

void write_negatives(const std::string& path, const NegativeMap& negatives) {
  auto out = detail::open_output(path);
  for (const auto& [q, ids] : negatives) out << value(q) << '\t' << format_id_list(ids) << '\n';
  detail::finish_output(out, path);
}

NegativeMap load_negatives(const std::string& path) {
  NegativeMap out;
  detail::for_each_line(path, [&](std::size_t no, std::string_view line) {
    auto f = detail::split(line, '\t');
    if (f.size() != 2) throw ParseError(path, no, "expected question_id<TAB>negative_ids");
    auto q = detail::parse_u64(f[0]);
    if (!q) throw ParseError(path, no, "invalid question id");
    try {
      if (!out.emplace(QuestionId{*q}, parse_id_list(f[1])).second) {
        throw ParseError(path, no, "duplicate question id " + std::to_string(*q));
      }
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(path, no, e.what());
    }
  });
  return out;
}

void write_augmented(const std::string& path, const std::vector<AugmentedExample>& examples) {
  auto out = detail::open_output(path);
  for (const auto& ex : examples) {
    out << value(ex.question) << '\t' << value(ex.positive) << '\t' << format_id_list(ex.negatives)
        << '\t' << detail::format_double(ex.positive_score) << '\n';
  }
  detail::finish_output(out, path);
}

std::vector<AugmentedExample> load_augmented(const std::string& path) {
  std::vector<AugmentedExample> out;
  detail::for_each_line(path, [&](std::size_t no, std::string_view line) {
    auto f = detail::split(line, '\t');
    if (f.size() != 4) {
      throw ParseError(path, no, "expected question_id<TAB>positive_id<TAB>negative_ids<TAB>score");
    }
    auto q = detail::parse_u64(f[0]);
    auto p = detail::parse_u64(f[1]);
    auto s = detail::parse_double(f[3]);
    if (!q || !p || !s) throw ParseError(path, no, "malformed augmented-data line");
    AugmentedExample ex;
    ex.question = QuestionId{*q};
    ex.positive = PassageId{*p};
    ex.positive_score = *s;
    try {
      ex.negatives = parse_id_list(f[2]);
    } catch (const Error& e) {
      throw ParseError(path, no, e.what());
    }
    out.push_back(std::move(ex));
  });
  return out;
}

void write_denoise_report(const std::string& path, const DenoiseReport& report) {
  auto out = detail::open_output(path);
  for (const auto& b : report.buckets) {
    out << b.first_rank << '-' << b.last_rank << '\t' << b.candidates << '\t' << b.filtered << '\t'
        << detail::format_double(b.fraction()) << '\n';
  }
  detail::finish_output(out, path);
}

std::vector<ExampleSource> augmented_sources(const std::vector<AugmentedExample>& examples) {
  std::vector<ExampleSource> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back({ex.question, ex.positive, ex.negatives});
  return out;
}

std::vector<QRel> augmented_qrels(const std::vector<AugmentedExample>& examples) {
  std::vector<QRel> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back({ex.question, {ex.positive}});
  return out;
}

}  // namespace dpr
