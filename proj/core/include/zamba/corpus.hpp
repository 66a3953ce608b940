#pragma once

// Corpus preparation: quality filters (applied to the pile and c4 sources),
// word 13-gram shingling, 128-slot minhash signatures, and a 25-band x
// range-5 LSH index targeting the 50% Jaccard operating point. Corpora are
// streamed once in a caller-chosen order; a document is a duplicate when a
// query hits at least one full band, and only non-duplicates from
// insert-mode corpora enter the index. Query-only corpora are matched
// against the index without ever growing it. The cosmopedia source bypasses
// both filtering and dedup.

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace zamba {

struct Document {
    std::string id;
    std::string source;  // pile | c4 | pes2o | arxiv | refinedweb | cosmopedia | ...
    std::string text;    // UTF-8
};

enum class FilterRule : uint8_t {
    none,
    min_length,
    mean_word_short,
    mean_word_long,
    non_alnum_frac,
    numeric_frac,
};

const char* filter_rule_name(FilterRule r);

struct FilterVerdict {
    bool keep = true;
    FilterRule failed_rule = FilterRule::none;
};

// Counts are in Unicode scalar values; an invalid UTF-8 byte counts as one
// scalar. Words are maximal runs between Unicode whitespace. Whitespace
// contributes to the character count but not to the non-alphanumeric or
// numeric tallies.
struct TextStats {
    int64_t chars = 0;
    int64_t words = 0;
    int64_t word_chars = 0;
    int64_t non_alnum = 0;
    int64_t numeric = 0;
};

TextStats compute_text_stats(std::string_view text);

// Rules in order: length >= 100 chars, mean word length in [3, 12],
// non-alphanumeric fraction <= 0.3, numeric fraction <= 0.2. Values exactly
// at a threshold are kept; comparisons are integer-exact. The first failing
// rule is reported.
FilterVerdict filter_doc(const Document& doc);
FilterVerdict filter_text(std::string_view text);

// Filters target only the pile and c4 sources.
bool filter_applies(std::string_view source);
// Cosmopedia is passed through untouched (no filter, no dedup).
bool bypasses_processing(std::string_view source);

// Sorted unique 64-bit hashes of all 13-word windows (lowercased,
// whitespace-split); texts with fewer than 13 words produce the single
// whole-document shingle. Throws on texts without any words.
std::vector<uint64_t> shingle_13grams(std::string_view text);

inline constexpr int kMinhashSlots = 128;
inline constexpr int kLshBands = 25;
inline constexpr int kLshRange = 5;  // bands use slots 0..124; 125..127 stay spare

struct MinHashSignature {
    std::array<uint64_t, kMinhashSlots> slots;
    bool operator==(const MinHashSignature&) const = default;
};

// slot_i = min over shingles of mix(shingle ^ salt_i); the salts derive from
// the hash family seed.
MinHashSignature minhash(const std::vector<uint64_t>& shingles, uint64_t hash_family_seed);

// Fraction of matching slots; unbiased estimator of Jaccard similarity.
double signature_similarity(const MinHashSignature& a, const MinHashSignature& b);

// True when the two signatures agree on at least one full band.
bool lsh_candidate_pair(const MinHashSignature& a, const MinHashSignature& b);

class LshIndex {
public:
    LshIndex();

    // Rejects duplicate ids.
    void insert(const std::string& id, const MinHashSignature& sig);
    // All ids sharing at least one full band, in first-seen order.
    std::vector<std::string> query(const MinHashSignature& sig) const;
    bool contains(const std::string& id) const;
    size_t size() const { return ids_.size(); }

private:
    std::vector<std::string> ids_;
    std::unordered_set<std::string> id_set_;
    std::array<std::unordered_map<uint64_t, std::vector<uint32_t>>, kLshBands> bands_;
};

struct DocMark {
    bool duplicate = false;
    std::string matched_id;
};

struct CorpusDedupStats {
    std::string name;
    bool insert_mode = true;
    int64_t total = 0;
    int64_t duplicates = 0;
    double duplicate_pct() const {
        return total > 0 ? 100.0 * static_cast<double>(duplicates) / static_cast<double>(total) : 0.0;
    }
};

struct DedupInput {
    std::string name;
    bool insert_mode = true;  // false: query-only (matched but never inserted)
    const std::vector<Document>* docs = nullptr;
};

struct DedupResult {
    std::vector<std::vector<DocMark>> marks;  // aligned with the input corpora
    std::vector<CorpusDedupStats> stats;
    size_t index_size = 0;
};

// Streams the corpora once each, in the given order; dedups every corpus
// against itself and everything inserted before it. Documents without any
// words cannot be hashed and pass through unmarked.
DedupResult dedup_corpora(const std::vector<DedupInput>& corpora, uint64_t minhash_seed);

}  // namespace zamba
