#include <doctest.h>

#include <set>
#include <stdexcept>

#include "zamba/corpus.hpp"
#include "zamba/rng.hpp"

using namespace zamba;

namespace {

std::string repeat_word(const std::string& w, int n) {
    std::string out;
    for (int i = 0; i < n; ++i) {
        if (i) out += ' ';
        out += w;
    }
    return out;
}

// random word soup with a given vocabulary size
std::string random_text(Rng& rng, int words, int vocab = 5000) {
    std::string out;
    for (int i = 0; i < words; ++i) {
        if (i) out += ' ';
        out += "w" + std::to_string(rng.next_below(vocab));
    }
    return out;
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("filter boundary fixtures") {
    // 99 characters -> min_length; exactly 100 -> kept (25 words x "aaa " = 100 chars)
    std::string s99(99, 'a');
    CHECK(filter_text(s99).failed_rule == FilterRule::min_length);
    std::string s100 = repeat_word("aaa", 25);  // 25*3 + 24 = 99 chars... pad one more
    s100 += "a";                                // 100 chars, last word "aaaa"
    REQUIRE(compute_text_stats(s100).chars == 100);
    CHECK(filter_text(s100).keep);

    // mean word length exactly 3 stays; below rejects
    const std::string mean3 = repeat_word("aaa", 40);  // 40 words of 3 chars, 159 chars
    CHECK(filter_text(mean3).keep);
    const std::string mean2 = repeat_word("aa", 50);  // mean 2, 149 chars
    CHECK(filter_text(mean2).failed_rule == FilterRule::mean_word_short);

    // a single 100-char word: mean 100 > 12
    CHECK(filter_text(std::string(100, 'a')).failed_rule == FilterRule::mean_word_long);
    // mean exactly 12 is kept
    CHECK(filter_text(repeat_word(std::string(12, 'a'), 10)).keep);
    // mean exactly 12.x rejects: 9 words of 12 and one of 13
    CHECK(filter_text(repeat_word(std::string(12, 'a'), 9) + " " + std::string(13, 'a'))
              .failed_rule == FilterRule::mean_word_long);

    // non-alphanumeric fraction: 120 chars, 36 punct = exactly 0.3 keeps
    {
        std::string t;  // words of "aa??" with padding to tune the ratio
        // 21 words of "aaa." -> 84 alnum-ish chars: build explicitly instead
        t = repeat_word("aaa;", 30);  // 30*4 + 29 spaces = 149 chars, 30 ';'
        const auto st = compute_text_stats(t);
        REQUIRE(st.chars == 149);
        REQUIRE(st.non_alnum == 30);  // 30/149 < 0.3 -> keep (spaces count as chars)
        CHECK(filter_text(t).keep);
        std::string over = repeat_word(";;;a", 30);  // 90 non-alnum of 149 chars
        CHECK(filter_text(over).failed_rule == FilterRule::non_alnum_frac);
    }
    // exact 0.3: 70 'a' + 30 ';' in one blob is mean_word_long; use spaced words
    {
        // 10 words "aaaaaaa;;;" = 7 alnum + 3 punct, chars = 10*10 + 9 = 109
        // non_alnum = 30, 30*10 <= 109*3 -> 300 <= 327 keep
        std::string t = repeat_word("aaaaaaa;;;", 10);
        CHECK(filter_text(t).keep);
        // push to exactly 0.3: 120 chars with 36 non-alnum
        // 12 words of "aaaaaaa;;;" minus... construct 120 chars: 12 words len 9 + 11 spaces
        // word "aaaaaa;;;" = 6 alnum + 3 punct
        std::string exact = repeat_word("aaaaaa;;;", 12);  // 12*9+11 = 119 chars, 36 punct
        exact += "a";                                      // 120 chars, still 36 punct
        const auto st = compute_text_stats(exact);
        REQUIRE(st.chars == 120);
        REQUIRE(st.non_alnum == 36);
        CHECK(filter_text(exact).keep);  // 36/120 == 0.3 exactly, kept
        std::string over = exact;
        over[0] = ';';  // 37/120 > 0.3
        CHECK(filter_text(over).failed_rule == FilterRule::non_alnum_frac);
    }

    // numeric fraction exactly 0.2 keeps, above rejects
    {
        // word "aaa7" = 1 digit of 4 chars; 25 words -> 25 digits, 124 chars
        std::string t = repeat_word("aaa7", 25);
        t += "a";  // 125 chars, 25 digits -> exactly 0.2
        const auto st = compute_text_stats(t);
        REQUIRE(st.chars == 125);
        REQUIRE(st.numeric == 25);
        CHECK(filter_text(t).keep);
        std::string over = t;
        over[0] = '7';  // 26 digits
        CHECK(filter_text(over).failed_rule == FilterRule::numeric_frac);
    }
}

TEST_CASE("filter reports the first failing rule in order") {
    // short AND mean-word-short: min_length wins
    CHECK(filter_text("aa aa").failed_rule == FilterRule::min_length);
    // long enough, mean short AND numeric heavy: mean_word_short wins
    std::string t = repeat_word("77", 60);
    CHECK(filter_text(t).failed_rule == FilterRule::mean_word_short);
}

TEST_CASE("whitespace-only text rejects via mean_word_short") {
    CHECK(filter_text(std::string(120, ' ')).failed_rule == FilterRule::mean_word_short);
}

TEST_CASE("filters apply to pile and c4 only; cosmopedia bypasses") {
    CHECK(filter_applies("pile"));
    CHECK(filter_applies("c4"));
    CHECK_FALSE(filter_applies("pes2o"));
    CHECK_FALSE(filter_applies("refinedweb"));
    CHECK(bypasses_processing("cosmopedia"));
    CHECK_FALSE(bypasses_processing("pile"));
}

TEST_CASE("unicode scalars count once each") {
    // e-acute as two UTF-8 bytes is one char; CJK is a letter; NBSP splits words
    const std::string t = "caf\xC3\xA9\xC2\xA0\xE4\xB8\xAD";
    const auto st = compute_text_stats(t);
    CHECK(st.chars == 6);      // c a f e-acute NBSP CJK
    CHECK(st.words == 2);
    CHECK(st.non_alnum == 0);  // all letters aside from the space
}

TEST_CASE("shingle window counts") {
    Rng rng1(1);
    CHECK(shingle_13grams(random_text(rng1, 13)).size() == 1);
    Rng rng(2);
    CHECK(shingle_13grams(random_text(rng, 20)).size() == 8);
    Rng rng3(3);
    const std::string t = random_text(rng3, 40);
    CHECK(shingle_13grams(t) == shingle_13grams(t));
    // short texts collapse to one whole-document shingle
    CHECK(shingle_13grams("three words only").size() == 1);
    CHECK_THROWS_AS(shingle_13grams("   "), std::invalid_argument);
    // case folding: shingles are case-insensitive
    CHECK(shingle_13grams("The Cat Sat") == shingle_13grams("the cat sat"));
}

TEST_CASE("minhash determinism and input checks") {
    Rng rng(4);
    const auto sh = shingle_13grams(random_text(rng, 50));
    CHECK(minhash(sh, 42) == minhash(sh, 42));
    CHECK_FALSE(minhash(sh, 42) == minhash(sh, 43));
    CHECK_THROWS_AS(minhash({}, 42), std::invalid_argument);
}

TEST_CASE("slot-match fraction estimates Jaccard within binomial bounds") {
    Rng rng(5);
    int failures = 0;
    for (int pair = 0; pair < 200; ++pair) {
        // build two shingle sets with a planted overlap
        const int common = 50 + static_cast<int>(rng.next_below(400));
        const int only_a = static_cast<int>(rng.next_below(300));
        const int only_b = static_cast<int>(rng.next_below(300));
        std::vector<uint64_t> a, b;
        for (int i = 0; i < common; ++i) {
            const uint64_t v = rng.next_u64();
            a.push_back(v);
            b.push_back(v);
        }
        for (int i = 0; i < only_a; ++i) a.push_back(rng.next_u64());
        for (int i = 0; i < only_b; ++i) b.push_back(rng.next_u64());
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());

        // exact Jaccard from the sets themselves
        std::vector<uint64_t> inter, uni;
        std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
        std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(uni));
        const double jac = static_cast<double>(inter.size()) / static_cast<double>(uni.size());

        const double est = signature_similarity(minhash(a, 7), minhash(b, 7));
        const double sigma = std::sqrt(std::max(jac * (1 - jac), 1e-9) / 128.0);
        if (std::abs(est - jac) > 4.0 * sigma + 1e-9) ++failures;
    }
    // 4-sigma misses should be rare; allow a couple over 200 trials
    CHECK(failures <= 2);
}

TEST_CASE("identical and disjoint shingle sets") {
    Rng rng(6);
    const auto t = random_text(rng, 100);
    const auto s1 = minhash(shingle_13grams(t), 9);
    const auto s2 = minhash(shingle_13grams(t), 9);
    CHECK(signature_similarity(s1, s2) == 1.0);
    const auto t2 = random_text(rng, 100, 50000);
    CHECK(signature_similarity(s1, minhash(shingle_13grams(t2), 9)) <= 0.05);
}

TEST_CASE("lsh index: insert, query, duplicate rejection") {
    Rng rng(7);
    LshIndex index;
    const auto sig_a = minhash(shingle_13grams(random_text(rng, 60)), 3);
    const auto sig_b = minhash(shingle_13grams(random_text(rng, 60)), 3);
    index.insert("a", sig_a);
    index.insert("b", sig_b);
    CHECK(index.size() == 2);
    CHECK(index.contains("a"));
    CHECK_THROWS_AS(index.insert("a", sig_a), std::invalid_argument);
    // identical signature collides in every band
    const auto hits = index.query(sig_a);
    REQUIRE(!hits.empty());
    CHECK(hits.front() == "a");
}

TEST_CASE("banding operating point on synthetic signature pairs") {
    // slots agree independently with probability s; candidate probability
    // follows 1 - (1 - s^5)^25
    Rng rng(8);
    auto rate_at = [&](double s, int pairs) {
        int hits = 0;
        for (int p = 0; p < pairs; ++p) {
            MinHashSignature a, b;
            for (int i = 0; i < kMinhashSlots; ++i) {
                a.slots[i] = rng.next_u64();
                b.slots[i] = rng.next_double() < s ? a.slots[i] : rng.next_u64();
            }
            if (lsh_candidate_pair(a, b)) ++hits;
        }
        return static_cast<double>(hits) / pairs;
    };
    CHECK(std::abs(rate_at(0.5, 2000) - 0.548) <= 0.04);
    CHECK(rate_at(0.8, 1000) >= 0.995);
    CHECK(rate_at(0.2, 1000) <= 0.02);
}

TEST_CASE("dedup: n identical documents keep exactly one") {
    std::vector<Document> docs;
    Rng rng(9);
    const std::string text = random_text(rng, 80);
    for (int i = 0; i < 6; ++i) docs.push_back({"d" + std::to_string(i), "pile", text});
    const auto res = dedup_corpora({{"pile", true, &docs}}, 17);
    CHECK(res.stats[0].duplicates == 5);
    CHECK_FALSE(res.marks[0][0].duplicate);
    for (int i = 1; i < 6; ++i) {
        CHECK(res.marks[0][i].duplicate);
        CHECK(res.marks[0][i].matched_id == "d0");
    }
    CHECK(res.index_size == 1);
}

TEST_CASE("query-only corpora are marked but never inserted") {
    Rng rng(10);
    std::vector<Document> base, probe;
    for (int i = 0; i < 5; ++i) {
        const std::string text = random_text(rng, 60);
        base.push_back({"base" + std::to_string(i), "pile", text});
        probe.push_back({"probe" + std::to_string(i), "refinedweb", text});
    }
    const auto res = dedup_corpora({{"pile", true, &base}, {"refinedweb", false, &probe}}, 17);
    CHECK(res.stats[1].duplicates == 5);          // 100% marked
    CHECK(res.index_size == base.size());         // index unchanged by the probe corpus
    for (const auto& m : res.marks[1]) CHECK(m.duplicate);
}

TEST_CASE("cross-corpus dedup respects insertion order") {
    Rng rng(11);
    const std::string shared_text = random_text(rng, 70);
    std::vector<Document> first = {{"p0", "pile", shared_text}};
    std::vector<Document> second = {{"c0", "c4", shared_text},
                                    {"c1", "c4", random_text(rng, 70)}};
    const auto res = dedup_corpora({{"pile", true, &first}, {"c4", true, &second}}, 23);
    CHECK_FALSE(res.marks[0][0].duplicate);
    CHECK(res.marks[1][0].duplicate);
    CHECK(res.marks[1][0].matched_id == "p0");
    CHECK_FALSE(res.marks[1][1].duplicate);
}

TEST_CASE("planted near-duplicates are caught; unrelated pairs are not") {
    // appending m words to a W-word text shares W-12 of W+m-12 shingles, so
    // m = (W-12)/4 plants a pair at Jaccard ~ 0.8
    Rng rng(12);
    std::vector<Document> docs;
    int planted = 0;
    for (int i = 0; i < 60; ++i) {
        const std::string text = random_text(rng, 120);
        docs.push_back({"orig" + std::to_string(i), "pile", text});
        if (i % 3 == 0) {
            docs.push_back({"near" + std::to_string(i), "pile",
                            text + " " + random_text(rng, 27)});
            ++planted;
        }
    }
    const auto res = dedup_corpora({{"pile", true, &docs}}, 29);
    int caught = 0;
    for (size_t d = 0; d < docs.size(); ++d)
        if (res.marks[0][d].duplicate) ++caught;
    CHECK(caught >= planted - 1);       // banding at s~0.8 catches essentially all
    CHECK(caught <= planted);           // unrelated documents stay unmarked
}

TEST_CASE("dedup is deterministic for a fixed seed and order") {
    Rng rng(13);
    std::vector<Document> docs;
    for (int i = 0; i < 30; ++i) docs.push_back({"d" + std::to_string(i), "pile",
                                                 random_text(rng, 50)});
    const auto r1 = dedup_corpora({{"pile", true, &docs}}, 31);
    const auto r2 = dedup_corpora({{"pile", true, &docs}}, 31);
    for (size_t i = 0; i < docs.size(); ++i) {
        CHECK(r1.marks[0][i].duplicate == r2.marks[0][i].duplicate);
        CHECK(r1.marks[0][i].matched_id == r2.marks[0][i].matched_id);
    }
}

}  // TEST_SUITE
