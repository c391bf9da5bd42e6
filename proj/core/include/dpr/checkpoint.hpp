#pragma once

#include <cstdint>
#include <string>

#include "dpr/encoder.hpp"

namespace dpr {

enum class EncoderKind : std::uint32_t { dual = 1, cross = 2 };

/// Checkpoint layout (all integers and floats little-endian):
///
///   offset  size  field
///   0       8     magic "DPRCKPT\0"
///   8       4     format version (1)
///   12      4     encoder kind (1 = dual, 2 = cross)
///   16      8     vocab_size
///   24      8     embedding_dim (d_emb)
///   32      8     output_dim d (dual) or hidden_dim (cross)
///   40      ...   parameter tensors as 8-byte floats, row-major, in
///                 `tensors()` order
///
/// Dual order: question embeddings, question projection, question bias,
/// passage embeddings, passage projection, passage bias.
/// Cross order: embeddings, hidden, hidden_bias, output_weights, output_bias.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const DualEncoderParams& params);
std::string serialize_checkpoint(const CrossEncoderParams& params);

DualEncoderParams deserialize_dual_checkpoint(std::string_view bytes);
CrossEncoderParams deserialize_cross_checkpoint(std::string_view bytes);

void save_checkpoint(const std::string& path, const DualEncoderParams& params);
void save_checkpoint(const std::string& path, const CrossEncoderParams& params);

DualEncoderParams load_dual_checkpoint(const std::string& path);
CrossEncoderParams load_cross_checkpoint(const std::string& path);

/// Hex SHA-256 of the serialized checkpoint.
std::string checkpoint_fingerprint(const DualEncoderParams& params);
std::string checkpoint_fingerprint(const CrossEncoderParams& params);

}  // namespace dpr
