#pragma once

// Token-sequence streams for training. WindowSampler cuts random fixed-size
// windows out of a token array and never runs dry; MixSampler draws each
// emitted sequence from source i with probability weight_i, renormalizing
// (with a warning) when a finite source runs out mid-stream.

#include <memory>
#include <optional>
#include <vector>

#include "zamba/rng.hpp"
#include "zamba/tensor.hpp"

namespace zamba {

class TokenStream {
public:
    virtual ~TokenStream() = default;
    virtual std::optional<TokenIds> next() = 0;
    // Counter-based state for bit-exact resume.
    virtual uint64_t state_counter() const { return 0; }
    virtual void set_state_counter(uint64_t) {}
};

class WindowSampler : public TokenStream {
public:
    WindowSampler(std::shared_ptr<const TokenIds> tokens, int64_t lo, int64_t hi, int64_t window,
                  uint64_t seed);

    std::optional<TokenIds> next() override;
    uint64_t state_counter() const override { return rng_.counter(); }
    void set_state_counter(uint64_t c) override { rng_.set_counter(c); }

private:
    std::shared_ptr<const TokenIds> tokens_;
    int64_t lo_, hi_, window_;
    Rng rng_;
};

// Fixed list of sequences, exhausted once consumed; used for finite feeds.
class VectorStream : public TokenStream {
public:
    explicit VectorStream(std::vector<TokenIds> items) : items_(std::move(items)) {}
    std::optional<TokenIds> next() override {
        if (pos_ >= items_.size()) return std::nullopt;
        return items_[pos_++];
    }

private:
    std::vector<TokenIds> items_;
    size_t pos_ = 0;
};

class MixSampler : public TokenStream {
public:
    struct Source {
        std::shared_ptr<TokenStream> stream;
        double weight;
    };

    MixSampler(std::vector<Source> sources, uint64_t seed);

    std::optional<TokenIds> next() override;
    uint64_t state_counter() const override { return rng_.counter(); }
    void set_state_counter(uint64_t c) override { rng_.set_counter(c); }

    size_t draw_count(size_t source) const { return draws_[source]; }
    size_t total_draws() const;

private:
    std::vector<Source> sources_;
    std::vector<bool> exhausted_;
    std::vector<size_t> draws_;
    Rng rng_;
};

}  // namespace zamba
