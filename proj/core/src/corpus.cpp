#include "zamba/corpus.hpp"

#include <algorithm>
#include <stdexcept>

#include "zamba/rng.hpp"

namespace zamba {

namespace {

// Minimal UTF-8 cursor; an invalid byte is consumed as a single scalar.
uint32_t next_scalar(std::string_view s, size_t& i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    if (b0 < 0x80) {
        ++i;
        return b0;
    }
    int len = 0;
    uint32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        ++i;
        return b0;
    }
    if (i + static_cast<size_t>(len) > s.size()) {
        ++i;
        return b0;
    }
    for (int k = 1; k < len; ++k) {
        const auto bk = static_cast<unsigned char>(s[i + static_cast<size_t>(k)]);
        if ((bk & 0xC0) != 0x80) {
            ++i;
            return b0;
        }
        cp = (cp << 6) | (bk & 0x3F);
    }
    i += static_cast<size_t>(len);
    return cp;
}

bool is_space_cp(uint32_t c) {
    return (c >= 0x09 && c <= 0x0D) || c == 0x20 || c == 0x85 || c == 0xA0 || c == 0x1680 ||
           (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F ||
           c == 0x205F || c == 0x3000;
}

bool is_digit_cp(uint32_t c) {
    return (c >= '0' && c <= '9') || (c >= 0x660 && c <= 0x669) || (c >= 0x6F0 && c <= 0x6F9) ||
           (c >= 0x966 && c <= 0x96F) || (c >= 0xFF10 && c <= 0xFF19);
}

// Coarse letter classification over the common blocks; enough for corpus
// heuristics without full category tables.
bool is_letter_cp(uint32_t c) {
    if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')) return true;
    if (c >= 0xC0 && c <= 0x24F) return c != 0xD7 && c != 0xF7;
    if (c >= 0x370 && c <= 0x3FF) return true;   // Greek
    if (c >= 0x400 && c <= 0x4FF) return true;   // Cyrillic
    if (c >= 0x590 && c <= 0x5FF) return true;   // Hebrew
    if (c >= 0x600 && c <= 0x6FF) return !is_digit_cp(c);  // Arabic
    if (c >= 0x900 && c <= 0x97F) return !is_digit_cp(c);  // Devanagari
    if (c >= 0x3040 && c <= 0x30FF) return true;   // kana
    if (c >= 0x4E00 && c <= 0x9FFF) return true;   // CJK unified
    if (c >= 0xAC00 && c <= 0xD7AF) return true;   // Hangul
    if ((c >= 0xFF21 && c <= 0xFF3A) || (c >= 0xFF41 && c <= 0xFF5A)) return true;
    return false;
}

}  // namespace

const char* filter_rule_name(FilterRule r) {
    switch (r) {
        case FilterRule::none: return "none";
        case FilterRule::min_length: return "min_length";
        case FilterRule::mean_word_short: return "mean_word_short";
        case FilterRule::mean_word_long: return "mean_word_long";
        case FilterRule::non_alnum_frac: return "non_alnum_frac";
        case FilterRule::numeric_frac: return "numeric_frac";
    }
    return "unknown";
}

TextStats compute_text_stats(std::string_view text) {
    TextStats st;
    bool in_word = false;
    size_t i = 0;
    while (i < text.size()) {
        const uint32_t c = next_scalar(text, i);
        ++st.chars;
        if (is_space_cp(c)) {
            in_word = false;
            continue;
        }
        if (!in_word) {
            in_word = true;
            ++st.words;
        }
        ++st.word_chars;
        const bool digit = is_digit_cp(c);
        if (digit) ++st.numeric;
        if (!digit && !is_letter_cp(c)) ++st.non_alnum;
    }
    return st;
}

FilterVerdict filter_text(std::string_view text) {
    const TextStats st = compute_text_stats(text);
    // integer-exact comparisons so boundary fixtures are deterministic
    if (st.chars < 100) return {false, FilterRule::min_length};
    if (st.word_chars < 3 * st.words || st.words == 0) return {false, FilterRule::mean_word_short};
    if (st.word_chars > 12 * st.words) return {false, FilterRule::mean_word_long};
    if (st.non_alnum * 10 > st.chars * 3) return {false, FilterRule::non_alnum_frac};
    if (st.numeric * 5 > st.chars) return {false, FilterRule::numeric_frac};
    return {true, FilterRule::none};
}

FilterVerdict filter_doc(const Document& doc) { return filter_text(doc.text); }

bool filter_applies(std::string_view source) { return source == "pile" || source == "c4"; }

bool bypasses_processing(std::string_view source) { return source == "cosmopedia"; }

std::vector<uint64_t> shingle_13grams(std::string_view text) {
    constexpr int kGram = 13;
    // lowercased word hashes in order (ASCII case folding)
    std::vector<uint64_t> word_hashes;
    uint64_t wh = 0xcbf29ce484222325ULL;
    bool in_word = false;
    size_t i = 0;
    while (i < text.size()) {
        uint32_t c = next_scalar(text, i);
        if (is_space_cp(c)) {
            if (in_word) {
                word_hashes.push_back(wh);
                wh = 0xcbf29ce484222325ULL;
                in_word = false;
            }
            continue;
        }
        in_word = true;
        if (c >= 'A' && c <= 'Z') c += 32;
        wh ^= c;
        wh *= 0x100000001b3ULL;
    }
    if (in_word) word_hashes.push_back(wh);
    if (word_hashes.empty())
        throw std::invalid_argument("shingle_13grams: text contains no words");

    std::vector<uint64_t> shingles;
    auto combine = [](const uint64_t* words, size_t n) {
        uint64_t h = 0x9e3779b97f4a7c15ULL;
        for (size_t k = 0; k < n; ++k) h = splitmix64(h ^ words[k]);
        return h;
    };
    if (word_hashes.size() < kGram) {
        shingles.push_back(combine(word_hashes.data(), word_hashes.size()));
    } else {
        shingles.reserve(word_hashes.size() - kGram + 1);
        for (size_t w = 0; w + kGram <= word_hashes.size(); ++w)
            shingles.push_back(combine(word_hashes.data() + w, kGram));
    }
    std::sort(shingles.begin(), shingles.end());
    shingles.erase(std::unique(shingles.begin(), shingles.end()), shingles.end());
    return shingles;
}

MinHashSignature minhash(const std::vector<uint64_t>& shingles, uint64_t hash_family_seed) {
    if (shingles.empty()) throw std::invalid_argument("minhash: empty shingle set");
    MinHashSignature sig;
    for (int slot = 0; slot < kMinhashSlots; ++slot) {
        const uint64_t salt = splitmix64(hash_family_seed + static_cast<uint64_t>(slot));
        uint64_t best = UINT64_MAX;
        for (uint64_t s : shingles) best = std::min(best, splitmix64(s ^ salt));
        sig.slots[static_cast<size_t>(slot)] = best;
    }
    return sig;
}

double signature_similarity(const MinHashSignature& a, const MinHashSignature& b) {
    int match = 0;
    for (int i = 0; i < kMinhashSlots; ++i)
        if (a.slots[static_cast<size_t>(i)] == b.slots[static_cast<size_t>(i)]) ++match;
    return static_cast<double>(match) / static_cast<double>(kMinhashSlots);
}

namespace {

uint64_t band_key(const MinHashSignature& sig, int band) {
    return fnv1a64(sig.slots.data() + band * kLshRange, kLshRange * sizeof(uint64_t),
                   0xcbf29ce484222325ULL ^ static_cast<uint64_t>(band));
}

}  // namespace

bool lsh_candidate_pair(const MinHashSignature& a, const MinHashSignature& b) {
    for (int band = 0; band < kLshBands; ++band) {
        bool all = true;
        for (int r = 0; r < kLshRange; ++r) {
            const size_t slot = static_cast<size_t>(band * kLshRange + r);
            if (a.slots[slot] != b.slots[slot]) {
                all = false;
                break;
            }
        }
        if (all) return true;
    }
    return false;
}

LshIndex::LshIndex() = default;

void LshIndex::insert(const std::string& id, const MinHashSignature& sig) {
    if (id_set_.count(id))
        throw std::invalid_argument("lsh_insert: duplicate id '" + id + "'");
    const auto ordinal = static_cast<uint32_t>(ids_.size());
    ids_.push_back(id);
    id_set_.insert(id);
    for (int band = 0; band < kLshBands; ++band)
        bands_[static_cast<size_t>(band)][band_key(sig, band)].push_back(ordinal);
}

std::vector<std::string> LshIndex::query(const MinHashSignature& sig) const {
    std::vector<uint32_t> hits;
    for (int band = 0; band < kLshBands; ++band) {
        const auto& table = bands_[static_cast<size_t>(band)];
        auto it = table.find(band_key(sig, band));
        if (it == table.end()) continue;
        hits.insert(hits.end(), it->second.begin(), it->second.end());
    }
    std::sort(hits.begin(), hits.end());
    hits.erase(std::unique(hits.begin(), hits.end()), hits.end());
    std::vector<std::string> out;
    out.reserve(hits.size());
    for (uint32_t h : hits) out.push_back(ids_[h]);
    return out;
}

bool LshIndex::contains(const std::string& id) const { return id_set_.count(id) > 0; }

DedupResult dedup_corpora(const std::vector<DedupInput>& corpora, uint64_t minhash_seed) {
    LshIndex index;
    DedupResult result;
    result.marks.resize(corpora.size());
    for (size_t c = 0; c < corpora.size(); ++c) {
        const auto& corpus = corpora[c];
        CorpusDedupStats stats;
        stats.name = corpus.name;
        stats.insert_mode = corpus.insert_mode;
        auto& marks = result.marks[c];
        marks.resize(corpus.docs ? corpus.docs->size() : 0);
        if (corpus.docs) {
            for (size_t d = 0; d < corpus.docs->size(); ++d) {
                const Document& doc = (*corpus.docs)[d];
                ++stats.total;
                std::vector<uint64_t> shingles;
                try {
                    shingles = shingle_13grams(doc.text);
                } catch (const std::invalid_argument&) {
                    continue;  // no words: unhashable, passes through unmarked
                }
                const MinHashSignature sig = minhash(shingles, minhash_seed);
                auto candidates = index.query(sig);
                if (!candidates.empty()) {
                    marks[d].duplicate = true;
                    marks[d].matched_id = candidates.front();
                    ++stats.duplicates;
                } else if (corpus.insert_mode) {
                    index.insert(doc.id, sig);
                }
            }
        }
        result.stats.push_back(std::move(stats));
    }
    result.index_size = index.size();
    return result;
}

}  // namespace zamba
