#include "zamba/sampler.hpp"

#include <iostream>
#include <numeric>

namespace zamba {

WindowSampler::WindowSampler(std::shared_ptr<const TokenIds> tokens, int64_t lo, int64_t hi,
                             int64_t window, uint64_t seed)
    : tokens_(std::move(tokens)), lo_(lo), hi_(hi), window_(window), rng_(Rng::stream(seed, 0x77)) {
    op_require(tokens_ != nullptr, "window_sampler", "token array is null");
    op_require(window_ >= 1, "window_sampler", "window must be >= 1");
    op_require(lo_ >= 0 && hi_ <= static_cast<int64_t>(tokens_->size()) && hi_ - lo_ >= window_,
               "window_sampler",
               "range [" + std::to_string(lo_) + "," + std::to_string(hi_) + ") too small for window " +
                   std::to_string(window_));
}

std::optional<TokenIds> WindowSampler::next() {
    const int64_t span = hi_ - lo_ - window_ + 1;
    const int64_t start = lo_ + static_cast<int64_t>(rng_.next_below(static_cast<uint64_t>(span)));
    return TokenIds(tokens_->begin() + start, tokens_->begin() + start + window_);
}

MixSampler::MixSampler(std::vector<Source> sources, uint64_t seed)
    : sources_(std::move(sources)), rng_(Rng::stream(seed, 0x313)) {
    op_require(!sources_.empty(), "mix_sampler", "need at least one source");
    for (const auto& s : sources_)
        op_require(s.weight > 0.0, "mix_sampler", "weights must be positive");
    exhausted_.assign(sources_.size(), false);
    draws_.assign(sources_.size(), 0);
}

size_t MixSampler::total_draws() const {
    return std::accumulate(draws_.begin(), draws_.end(), size_t{0});
}

std::optional<TokenIds> MixSampler::next() {
    for (;;) {
        double total = 0.0;
        for (size_t i = 0; i < sources_.size(); ++i)
            if (!exhausted_[i]) total += sources_[i].weight;
        if (total <= 0.0) return std::nullopt;
        const double u = rng_.next_double() * total;
        double cum = 0.0;
        size_t pick = sources_.size();
        for (size_t i = 0; i < sources_.size(); ++i) {
            if (exhausted_[i]) continue;
            cum += sources_[i].weight;
            if (u < cum) {
                pick = i;
                break;
            }
        }
        if (pick == sources_.size()) {  // u == total from rounding: last live source
            for (size_t i = sources_.size(); i-- > 0;)
                if (!exhausted_[i]) {
                    pick = i;
                    break;
                }
        }
        auto item = sources_[pick].stream->next();
        if (item) {
            ++draws_[pick];
            return item;
        }
        exhausted_[pick] = true;
        std::cerr << "mix_sampler: source " << pick
                  << " exhausted mid-stream, renormalizing remaining weights\n";
    }
}

}  // namespace zamba
