#pragma once

// Byte-level tokenizer: ids 0..255 are raw bytes, plus BOS and EOS
// sentinels. Round-trips any byte string exactly.

#include <string>
#include <string_view>

#include "zamba/tensor.hpp"

namespace zamba {

inline constexpr int32_t kBosToken = 256;
inline constexpr int32_t kEosToken = 257;
inline constexpr int64_t kByteVocabSize = 258;

// [BOS, bytes..., EOS]
TokenIds byte_tokenize(std::string_view text);

// Raw bytes only, drops wrapping; raw byte stream without sentinels.
TokenIds byte_encode_raw(std::string_view text);

// Inverse of both: sentinel ids are skipped.
std::string byte_detokenize(const TokenIds& ids);

}  // namespace zamba
