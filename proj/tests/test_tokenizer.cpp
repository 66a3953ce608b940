#include <doctest.h>

#include "zamba/rng.hpp"
#include "zamba/tokenizer.hpp"

using namespace zamba;

TEST_SUITE("tokenizer") {

TEST_CASE("empty string is just the sentinels") {
    CHECK(byte_tokenize("") == TokenIds{kBosToken, kEosToken});
}

TEST_CASE("ascii bytes map to their codes") {
    CHECK(byte_tokenize("ab") == TokenIds{kBosToken, 97, 98, kEosToken});
}

TEST_CASE("round trip on random byte strings") {
    Rng rng(64);
    for (int it = 0; it < 50; ++it) {
        std::string s;
        const int len = static_cast<int>(rng.next_below(300));
        for (int i = 0; i < len; ++i) s.push_back(static_cast<char>(rng.next_below(256)));
        CHECK(byte_detokenize(byte_tokenize(s)) == s);
        CHECK(byte_detokenize(byte_encode_raw(s)) == s);
    }
}

TEST_CASE("vocab constants") {
    CHECK(kByteVocabSize == 258);
    CHECK(kBosToken == 256);
    CHECK(kEosToken == 257);
}

}  // TEST_SUITE
