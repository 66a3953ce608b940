#include "zamba/tokenizer.hpp"

namespace zamba {

TokenIds byte_tokenize(std::string_view text) {
    TokenIds ids;
    ids.reserve(text.size() + 2);
    ids.push_back(kBosToken);
    for (unsigned char c : text) ids.push_back(static_cast<int32_t>(c));
    ids.push_back(kEosToken);
    return ids;
}

TokenIds byte_encode_raw(std::string_view text) {
    TokenIds ids;
    ids.reserve(text.size());
    for (unsigned char c : text) ids.push_back(static_cast<int32_t>(c));
    return ids;
}

std::string byte_detokenize(const TokenIds& ids) {
    std::string out;
    out.reserve(ids.size());
    for (int32_t id : ids) {
        if (id >= 0 && id < 256) out.push_back(static_cast<char>(static_cast<unsigned char>(id)));
    }
    return out;
}

}  // namespace zamba
