#include "dpr/checkpoint.hpp"

#include "binary_io.hpp"
#include "dpr/error.hpp"
#include "dpr/hashing.hpp"

namespace dpr {
namespace {

constexpr std::string_view kMagic{"DPRCKPT\0", 8};

template <class Params>
std::string serialize(const Params& params, EncoderKind kind, std::uint64_t vocab,
                      std::uint64_t emb, std::uint64_t out) {
  detail::ByteWriter w;
  w.bytes(kMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(kind));
  w.u64(vocab);
  w.u64(emb);
  w.u64(out);
  for (auto t : params.tensors()) {
    for (double v : t) w.f64(v);
  }
  return w.take();
}

struct Header {
  EncoderKind kind;
  std::uint64_t vocab, emb, out;
};

Header read_header(detail::ByteReader& r, EncoderKind expected) {
  if (r.remaining() < kMagic.size() || r.bytes(kMagic.size()) != kMagic) {
    throw FormatError("not a checkpoint file");
  }
  auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw VersionError("unsupported checkpoint version " + std::to_string(version));
  }
  Header h{static_cast<EncoderKind>(r.u32()), r.u64(), r.u64(), r.u64()};
  if (h.kind != expected) {
    throw FormatError(expected == EncoderKind::dual ? "checkpoint is not a dual encoder"
                                                    : "checkpoint is not a cross encoder");
  }
  constexpr std::uint64_t kLimit = std::uint64_t{1} << 32;
  if (h.vocab == 0 || h.emb == 0 || h.out == 0 || h.vocab >= kLimit || h.emb >= kLimit ||
      h.out >= kLimit) {
    throw FormatError("checkpoint has invalid dimensions");
  }
  return h;
}

template <class Params>
void read_payload(detail::ByteReader& r, Params& params) {
  std::size_t total = 0;
  for (auto t : params.tensors()) total += t.size();
  r.need(total * 8);
  for (auto t : params.tensors()) {
    for (double& v : t) v = r.f64();
  }
  if (r.remaining() != 0) throw FormatError("checkpoint has trailing bytes");
}

}  // namespace

std::string serialize_checkpoint(const DualEncoderParams& params) {
  auto s = params.shape();
  return serialize(params, EncoderKind::dual, s.vocab_size, s.embedding_dim, s.output_dim);
}

std::string serialize_checkpoint(const CrossEncoderParams& params) {
  auto s = params.shape();
  return serialize(params, EncoderKind::cross, s.vocab_size, s.embedding_dim, s.hidden_dim);
}

DualEncoderParams deserialize_dual_checkpoint(std::string_view bytes) {
  detail::ByteReader r(bytes, "checkpoint");
  auto h = read_header(r, EncoderKind::dual);
  auto params = DualEncoderParams::zeros({h.vocab, h.emb, h.out});
  read_payload(r, params);
  return params;
}

CrossEncoderParams deserialize_cross_checkpoint(std::string_view bytes) {
  detail::ByteReader r(bytes, "checkpoint");
  auto h = read_header(r, EncoderKind::cross);
  auto params = CrossEncoderParams::zeros({h.vocab, h.emb, h.out});
  read_payload(r, params);
  return params;
}

void save_checkpoint(const std::string& path, const DualEncoderParams& params) {
  detail::write_file(path, serialize_checkpoint(params));
}

void save_checkpoint(const std::string& path, const CrossEncoderParams& params) {
  detail::write_file(path, serialize_checkpoint(params));
}

DualEncoderParams load_dual_checkpoint(const std::string& path) {
  return deserialize_dual_checkpoint(detail::read_file(path));
}

CrossEncoderParams load_cross_checkpoint(const std::string& path) {
  return deserialize_cross_checkpoint(detail::read_file(path));
}

std::string checkpoint_fingerprint(const DualEncoderParams& params) {
  return to_hex(sha256(serialize_checkpoint(params)));
}

std::string checkpoint_fingerprint(const CrossEncoderParams& params) {
  return to_hex(sha256(serialize_checkpoint(params)));
}

}  // namespace dpr
