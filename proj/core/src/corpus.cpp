#include "dpr/corpus.hpp"

#include <algorithm>
#include <set>

#include "dpr/error.hpp"
#include "dpr/hashing.hpp"
#include "text_io.hpp"

namespace dpr {
namespace {

bool is_term_byte(unsigned char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
         c >= 0x80;
}

void check_text(const std::string& text, const std::string& what) {
  if (text.find_first_of("\t\n\r") != std::string::npos) {
    throw Error(what + " text contains a tab or newline");
  }
}

template <class Record, class Make>
std::vector<Record> load_records(const std::string& path, Make&& make) {
  std::vector<Record> out;
  std::set<std::uint64_t> seen;
  detail::for_each_line(path, [&](std::size_t no, std::string_view line) {
    auto tab = line.find('\t');
    if (tab == std::string_view::npos) throw ParseError(path, no, "expected id<TAB>text");
    auto id = detail::parse_u64(line.substr(0, tab));
    if (!id) throw ParseError(path, no, "invalid id '" + std::string(line.substr(0, tab)) + "'");
    if (!seen.insert(*id).second) {
      throw ParseError(path, no, "duplicate id " + std::to_string(*id));
    }
    out.push_back(make(*id, std::string(line.substr(tab + 1))));
  });
  return out;
}

std::vector<QRel> load_qrels_impl(const std::string& path, const Collection* collection) {
  std::vector<QRel> out;
  std::set<std::uint64_t> seen;
  detail::for_each_line(path, [&](std::size_t no, std::string_view line) {
    auto fields = detail::split(line, '\t');
    if (fields.size() != 2) throw ParseError(path, no, "expected question_id<TAB>passage_ids");
    auto qid = detail::parse_u64(fields[0]);
    if (!qid) throw ParseError(path, no, "invalid question id");
    if (!seen.insert(*qid).second) {
      throw ParseError(path, no, "duplicate question id " + std::to_string(*qid));
    }
    std::vector<PassageId> ids;
    try {
      ids = parse_id_list(fields[1]);
    } catch (const Error& e) {
      throw ParseError(path, no, e.what());
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    if (ids.empty()) throw ParseError(path, no, "empty positive passage list");
    if (collection) {
      for (auto id : ids) {
        if (!collection->contains(id)) {
          throw ParseError(path, no, "unknown passage id " + to_string(id));
        }
      }
    }
    out.push_back(QRel{QuestionId{*qid}, std::move(ids)});
  });
  std::sort(out.begin(), out.end(),
            [](const QRel& a, const QRel& b) { return a.question < b.question; });
  return out;
}

}  // namespace

std::vector<TokenId> tokenize(std::string_view text, std::size_t max_len,
                              std::size_t vocab_size) {
  if (vocab_size < 2) throw Error("tokenize: vocab_size must be at least 2");
  std::vector<TokenId> out;
  std::string term;
  auto flush = [&] {
    if (!term.empty() && out.size() < max_len) {
      out.push_back(static_cast<TokenId>(fnv1a64(term) % vocab_size));
    }
    term.clear();
  };
  for (unsigned char c : text) {
    if (out.size() >= max_len) break;
    if (is_term_byte(c)) {
      term.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a')
                                          : static_cast<char>(c));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

Collection::Collection(std::vector<Passage> passages) : passages_(std::move(passages)) {
  if (passages_.empty()) throw Error("collection must contain at least one passage");
  std::sort(passages_.begin(), passages_.end(),
            [](const Passage& a, const Passage& b) { return a.id < b.id; });
  position_.reserve(passages_.size());
  for (std::size_t i = 0; i < passages_.size(); ++i) {
    if (!position_.emplace(passages_[i].id, i).second) {
      throw Error("duplicate passage id " + to_string(passages_[i].id));
    }
  }
}

const Passage& Collection::at(PassageId id) const { return passages_[position(id)]; }

std::size_t Collection::position(PassageId id) const {
  auto it = position_.find(id);
  if (it == position_.end()) throw Error("unknown passage id " + to_string(id));
  return it->second;
}

RelevanceMap to_relevance_map(const std::vector<QRel>& qrels) {
  RelevanceMap map;
  for (const auto& q : qrels) map[q.question] = q.positives;
  return map;
}

std::vector<QRel> from_relevance_map(const RelevanceMap& map) {
  std::vector<QRel> out;
  out.reserve(map.size());
  for (const auto& [q, ps] : map) out.push_back(QRel{q, ps});
  return out;
}

bool is_labeled_positive(const RelevanceMap& map, QuestionId q, PassageId p) {
  auto it = map.find(q);
  return it != map.end() && std::binary_search(it->second.begin(), it->second.end(), p);
}

Passage make_passage(PassageId id, std::string text, const TokenizerConfig& tok) {
  auto tokens = tokenize(text, tok.max_passage_len, tok.vocab_size);
  return Passage{id, std::move(text), std::move(tokens)};
}

Question make_question(QuestionId id, std::string text, const TokenizerConfig& tok) {
  auto tokens = tokenize(text, tok.max_question_len, tok.vocab_size);
  return Question{id, std::move(text), std::move(tokens)};
}

Collection load_collection(const std::string& path, const TokenizerConfig& tok) {
  auto passages = load_records<Passage>(path, [&](std::uint64_t id, std::string text) {
    return make_passage(PassageId{id}, std::move(text), tok);
  });
  if (passages.empty()) throw Error(path + ": collection is empty");
  return Collection(std::move(passages));
}

std::vector<Question> load_questions(const std::string& path, const TokenizerConfig& tok) {
  auto questions = load_records<Question>(path, [&](std::uint64_t id, std::string text) {
    return make_question(QuestionId{id}, std::move(text), tok);
  });
  std::sort(questions.begin(), questions.end(),
            [](const Question& a, const Question& b) { return a.id < b.id; });
  return questions;
}

std::vector<QRel> load_qrels(const std::string& path) { return load_qrels_impl(path, nullptr); }

std::vector<QRel> load_qrels(const std::string& path, const Collection& collection) {
  return load_qrels_impl(path, &collection);
}

void write_collection(const std::string& path, const Collection& collection) {
  auto out = detail::open_output(path);
  for (const auto& p : collection.passages()) {
    check_text(p.text, "passage " + to_string(p.id));
    out << value(p.id) << '\t' << p.text << '\n';
  }
  detail::finish_output(out, path);
}

void write_questions(const std::string& path, const std::vector<Question>& questions) {
  auto out = detail::open_output(path);
  for (const auto& q : questions) {
    check_text(q.text, "question " + to_string(q.id));
    out << value(q.id) << '\t' << q.text << '\n';
  }
  detail::finish_output(out, path);
}

void write_qrels(const std::string& path, const std::vector<QRel>& qrels) {
  auto out = detail::open_output(path);
  for (const auto& q : qrels) {
    out << value(q.question) << '\t' << format_id_list(q.positives) << '\n';
  }
  detail::finish_output(out, path);
}

std::vector<PassageId> parse_id_list(std::string_view list) {
  std::vector<PassageId> ids;
  if (detail::trim(list).empty()) return ids;
  for (auto part : detail::split(list, ',')) {
    auto v = detail::parse_u64(detail::trim(part));
    if (!v) throw Error("invalid passage id '" + std::string(part) + "'");
    ids.push_back(PassageId{*v});
  }
  return ids;
}

std::string format_id_list(const std::vector<PassageId>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out.push_back(',');
    out += to_string(ids[i]);
  }
  return out;
}

}  // namespace dpr
