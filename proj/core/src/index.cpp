#include "dpr/index.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "binary_io.hpp"
#include "dpr/checkpoint.hpp"
#include "dpr/error.hpp"
#include "dpr/hashing.hpp"
#include "parallel.hpp"
#include "text_io.hpp"

namespace dpr {
namespace {

constexpr std::string_view kMagic{"DPRINDEX", 8};
constexpr std::size_t kHeaderSize = 8 + 4 + 4 + 8 + 32 + 32;
const std::string kUnknownFingerprint(64, '0');

Digest parse_hex_digest(const std::string& hex) {
  Digest d{};
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
  };
  for (std::size_t i = 0; i < d.size(); ++i) {
    int hi = nibble(hex[2 * i]), lo = nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw Error("invalid checkpoint fingerprint");
    d[i] = static_cast<std::uint8_t>(hi << 4 | lo);
  }
  return d;
}

}  // namespace

FlatIndex::FlatIndex(Matrix embeddings, std::vector<PassageId> ids, std::string fingerprint)
    : embeddings_(std::move(embeddings)),
      ids_(std::move(ids)),
      fingerprint_(fingerprint.empty() ? kUnknownFingerprint : std::move(fingerprint)) {
  if (embeddings_.rows() != ids_.size()) throw Error("index: row count does not match id count");
  for (std::size_t i = 1; i < ids_.size(); ++i) {
    if (!(ids_[i - 1] < ids_[i])) throw Error("index: passage ids must be strictly ascending");
  }
  for (double v : embeddings_.values()) {
    if (!std::isfinite(v)) throw Error("index: non-finite embedding entry");
  }
  if (fingerprint_.size() != 64) throw Error("index: fingerprint must be 64 hex characters");
  parse_hex_digest(fingerprint_);
}

std::vector<ScoredPassage> FlatIndex::search(std::span<const double> query, std::size_t k) const {
  if (query.size() != dim()) {
    throw Error("search: query dimension " + std::to_string(query.size()) +
                " does not match index dimension " + std::to_string(dim()));
  }
  if (k == 0) throw Error("search: k must be at least 1");
  const std::size_t n = size();
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) scores[i] = dot(query, embeddings_.row(i));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t top = std::min(k, n);
  // Rows are in ascending id order, so comparing row positions breaks ties by id.
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  std::vector<ScoredPassage> out;
  out.reserve(top);
  for (std::size_t i = 0; i < top; ++i) out.push_back({ids_[order[i]], scores[order[i]]});
  return out;
}

FlatIndex build_index(const DualEncoderParams& params, const Collection& collection) {
  const std::size_t d = params.passage.projection.cols();
  Matrix rows(collection.size(), d);
  std::vector<PassageId> ids(collection.size());
  detail::parallel_for(collection.size(), [&](std::size_t i) {
    const auto& p = collection[i];
    ids[i] = p.id;
    if (p.tokens.empty()) throw Error("build_index: passage " + to_string(p.id) + " has no tokens");
    auto v = encode_passage(params, p.tokens);
    std::copy(v.begin(), v.end(), rows.row(i).begin());
  });
  return FlatIndex(std::move(rows), std::move(ids), checkpoint_fingerprint(params));
}

std::vector<RunResult> search_questions(const DualEncoderParams& params, const FlatIndex& index,
                                        std::span<const Question> questions, std::size_t k) {
  std::vector<RunResult> out(questions.size());
  detail::parallel_for(questions.size(), [&](std::size_t i) {
    const auto& q = questions[i];
    if (q.tokens.empty()) throw Error("search: question " + to_string(q.id) + " has no tokens");
    out[i] = RunResult{q.id, index.search(encode_question(params, q.tokens), k)};
  });
  return out;
}

std::string serialize_index(const FlatIndex& index) {
  detail::ByteWriter payload;
  for (double v : index.embeddings().values()) payload.f32(static_cast<float>(v));
  for (auto id : index.ids()) payload.u64(value(id));
  const Digest checksum = sha256(payload.str());
  const Digest fp = parse_hex_digest(index.checkpoint_fingerprint());

  detail::ByteWriter w;
  w.bytes(kMagic);
  w.u32(kIndexVersion);
  w.u32(static_cast<std::uint32_t>(index.dim()));
  w.u64(index.size());
  w.bytes({reinterpret_cast<const char*>(fp.data()), fp.size()});
  w.bytes({reinterpret_cast<const char*>(checksum.data()), checksum.size()});
  w.bytes(payload.str());
  return w.take();
}

FlatIndex deserialize_index(std::string_view bytes) {
  if (bytes.size() < kMagic.size() || bytes.substr(0, kMagic.size()) != kMagic) {
    throw FormatError("not an index file");
  }
  detail::ByteReader r(bytes, "index");
  r.bytes(kMagic.size());
  const auto version = r.u32();
  if (version != kIndexVersion) throw VersionError("unsupported index version " + std::to_string(version));
  const std::size_t d = r.u32();
  const std::uint64_t m = r.u64();
  auto fp_bytes = r.bytes(32);
  auto checksum_bytes = r.bytes(32);

  if (m > (bytes.size() / 8) || (d > 0 && m * d > bytes.size())) {
    throw TruncatedError("index: truncated file");
  }
  const std::size_t payload_size = m * d * 4 + m * 8;
  if (r.remaining() < payload_size) throw TruncatedError("index: truncated file");
  if (r.remaining() > payload_size) throw FormatError("index: trailing bytes after payload");
  const auto payload = bytes.substr(kHeaderSize);
  const Digest actual = sha256(payload);
  if (std::string_view(reinterpret_cast<const char*>(actual.data()), actual.size()) != checksum_bytes) {
    throw ChecksumError("index: checksum mismatch");
  }

  Matrix rows(m, d);
  for (double& v : rows.values()) v = static_cast<double>(r.f32());
  std::vector<PassageId> ids(m);
  for (auto& id : ids) id = PassageId{r.u64()};
  Digest fp{};
  std::copy(fp_bytes.begin(), fp_bytes.end(), fp.begin());
  return FlatIndex(std::move(rows), std::move(ids), to_hex(fp));
}

void save_index(const FlatIndex& index, const std::string& path) {
  detail::write_file(path, serialize_index(index));
}

FlatIndex load_index(const std::string& path) { return deserialize_index(detail::read_file(path)); }

void write_run(const std::string& path, const std::vector<RunResult>& runs) {
  auto out = detail::open_output(path);
  for (const auto& run : runs) {
    for (std::size_t i = 0; i < run.hits.size(); ++i) {
      out << value(run.question) << '\t' << value(run.hits[i].id) << '\t' << (i + 1) << '\t'
          << detail::format_double(run.hits[i].score) << '\n';
    }
  }
  detail::finish_output(out, path);
}

std::vector<RunResult> load_run(const std::string& path) {
  struct Entry {
    std::uint64_t rank;
    ScoredPassage hit;
  };
  std::map<QuestionId, std::vector<Entry>> grouped;
  detail::for_each_line(path, [&](std::size_t no, std::string_view line) {
    auto f = detail::split(line, '\t');
    if (f.size() != 4) throw ParseError(path, no, "expected question_id<TAB>passage_id<TAB>rank<TAB>score");
    auto q = detail::parse_u64(f[0]);
    auto p = detail::parse_u64(f[1]);
    auto rank = detail::parse_u64(f[2]);
    auto score = detail::parse_double(f[3]);
    if (!q || !p || !rank || *rank == 0 || !score) throw ParseError(path, no, "malformed run line");
    grouped[QuestionId{*q}].push_back({*rank, {PassageId{*p}, *score}});
  });
  std::vector<RunResult> out;
  for (auto& [q, entries] : grouped) {
    std::sort(entries.begin(), entries.end(),
              [](const Entry& a, const Entry& b) { return a.rank < b.rank; });
    RunResult run{q, {}};
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].rank != i + 1) {
        throw Error(path + ": question " + to_string(q) + " has non-consecutive ranks");
      }
      run.hits.push_back(entries[i].hit);
    }
    out.push_back(std::move(run));
  }
  return out;
}

}  // namespace dpr
