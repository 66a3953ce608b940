#include "zamba/model.hpp"

#include <cmath>
#include <stdexcept>

namespace zamba {

void ZambaConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw std::invalid_argument("config: " + field + " " + why);
    };
    if (vocab_size < 2) fail("vocab_size", "must be >= 2");
    if (d_model < 1) fail("d_model", "must be >= 1");
    if (n_layers < 1) fail("n_layers", "must be >= 1");
    if (gsa_period < 1) fail("gsa_period", "must be >= 1");
    if (d_state < 1) fail("d_state", "must be >= 1");
    if (d_conv < 1) fail("d_conv", "must be >= 1");
    if (n_heads < 1) fail("n_heads", "must be >= 1");
    if (expand_factor < 1) fail("expand_factor", "must be >= 1");
    if (dt_rank < 0) fail("dt_rank", "must be >= 0 (0 selects the default)");
    if (mlp_hidden < 0) fail("mlp_hidden", "must be >= 0 (0 selects the default)");
    if (context_length < 1) fail("context_length", "must be >= 1");
    if (norm_eps < 0) fail("norm_eps", "must be >= 0");
    if (n_sites() > 0 && (2 * d_model) % n_heads != 0)
        fail("n_heads", "must divide 2*d_model for the shared attention block");
}

std::vector<int64_t> gsa_sites(int64_t n_layers, int64_t gsa_period) {
    op_require(gsa_period >= 1, "gsa_sites", "period must be >= 1");
    op_require(n_layers >= 0, "gsa_sites", "layer count must be >= 0");
    std::vector<int64_t> sites;
    for (int64_t s = gsa_period; s <= n_layers; s += gsa_period) sites.push_back(s);
    return sites;
}

std::vector<int64_t> site_block_indices(const ZambaConfig& cfg) {
    std::vector<int64_t> idx;
    for (int64_t s : gsa_sites(cfg.n_layers, cfg.gsa_period))
        idx.push_back(cfg.sites_from_zero ? s - cfg.gsa_period : s - 1);
    return idx;
}

template <typename S>
std::vector<std::pair<std::string, Tensor<S>>> Model<S>::named_params() const {
    std::vector<std::pair<std::string, Tensor<S>>> out;
    out.emplace_back("embedding", embedding);
    for (size_t l = 0; l < blocks.size(); ++l) {
        const std::string p = "blocks." + std::to_string(l) + ".";
        out.emplace_back(p + "norm", block_norms[l]);
        out.emplace_back(p + "in_proj", blocks[l].in_proj);
        out.emplace_back(p + "conv_kernel", blocks[l].conv_kernel);
        out.emplace_back(p + "x_proj", blocks[l].x_proj);
        out.emplace_back(p + "dt_proj_w", blocks[l].dt_proj_w);
        out.emplace_back(p + "dt_proj_b", blocks[l].dt_proj_b);
        out.emplace_back(p + "A_log", blocks[l].A_log);
        out.emplace_back(p + "D_skip", blocks[l].D_skip);
        out.emplace_back(p + "out_proj", blocks[l].out_proj);
    }
    if (gsa.defined()) {
        out.emplace_back("gsa.qkv_proj", gsa.qkv_proj);
        out.emplace_back("gsa.attn_out_proj", gsa.attn_out_proj);
        out.emplace_back("gsa.mlp_in", gsa.mlp_in);
        out.emplace_back("gsa.mlp_out", gsa.mlp_out);
        out.emplace_back("gsa.norm_concat", gsa.norm_concat);
        out.emplace_back("gsa.norm_premlp", gsa.norm_premlp);
    }
    for (size_t s = 0; s < site_projs.size(); ++s)
        out.emplace_back("site_proj." + std::to_string(s), site_projs[s]);
    out.emplace_back("final_norm", final_norm);
    if (head.defined()) out.emplace_back("head", head);
    return out;
}

template <typename S>
void Model<S>::zero_grads() const {
    for (auto& [name, t] : named_params()) const_cast<Tensor<S>&>(t).zero_grad();
}

namespace {

template <typename S>
void init_linear(Tensor<S>& t, Rng rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(t.dim(0)));
    fill_uniform(t, rng, -bound, bound);
}

}  // namespace

template <typename S>
Model<S> build_model(const ZambaConfig& cfg) {
    cfg.validate();
    Model<S> m;
    m.cfg = cfg;
    const int64_t d = cfg.d_model, di = cfg.d_inner(), ds = cfg.d_state, k = cfg.d_conv;
    const int64_t dtr = cfg.dt_rank_eff();
    const int64_t n_sites = cfg.n_sites();

    auto stream = [&](const std::string& name) {
        return Rng::stream(cfg.seed, fnv1a64(name.data(), name.size()));
    };

    m.embedding = Tensor<S>::zeros({cfg.vocab_size, d}, true);
    {
        Rng r = stream("embedding");
        fill_normal(m.embedding, r, 0.0, 0.02);
    }

    for (int64_t l = 0; l < cfg.n_layers; ++l) {
        const std::string p = "blocks." + std::to_string(l) + ".";
        m.block_norms.push_back(Tensor<S>::full({d}, S(1), true));
        auto blk = MambaParams<S>::create(d, di, ds, k, dtr);
        init_linear(blk.in_proj, stream(p + "in_proj"));
        init_linear(blk.x_proj, stream(p + "x_proj"));
        init_linear(blk.out_proj, stream(p + "out_proj"));
        {
            Rng r = stream(p + "conv_kernel");
            const double bound = 1.0 / std::sqrt(static_cast<double>(k));
            fill_uniform(blk.conv_kernel, r, -bound, bound);
        }
        init_linear(blk.dt_proj_w, stream(p + "dt_proj_w"));
        {
            // softplus(bias) lands in [1e-3, 1e-1], log-uniform per channel
            Rng r = stream(p + "dt_proj_b");
            for (auto& b : blk.dt_proj_b.data()) {
                const double dt = std::exp(r.uniform(std::log(1e-3), std::log(1e-1)));
                b = static_cast<S>(std::log(std::expm1(dt)));
            }
        }
        // -A spans 1..d_state on every channel
        for (int64_t i = 0; i < di; ++i)
            for (int64_t n = 0; n < ds; ++n)
                blk.A_log.data()[i * ds + n] = static_cast<S>(std::log(static_cast<double>(n + 1)));
        std::fill(blk.D_skip.data().begin(), blk.D_skip.data().end(), S(1));
        m.blocks.push_back(std::move(blk));
    }

    if (n_sites > 0) {
        m.gsa = GsaParams<S>::create(d, cfg.mlp_hidden_eff());
        init_linear(m.gsa.qkv_proj, stream("gsa.qkv_proj"));
        init_linear(m.gsa.attn_out_proj, stream("gsa.attn_out_proj"));
        init_linear(m.gsa.mlp_in, stream("gsa.mlp_in"));
        init_linear(m.gsa.mlp_out, stream("gsa.mlp_out"));
        std::fill(m.gsa.norm_concat.data().begin(), m.gsa.norm_concat.data().end(), S(1));
        std::fill(m.gsa.norm_premlp.data().begin(), m.gsa.norm_premlp.data().end(), S(1));
        for (int64_t s = 0; s < n_sites; ++s) {
            auto proj = Tensor<S>::zeros({d, d}, true);
            init_linear(proj, stream("site_proj." + std::to_string(s)));
            m.site_projs.push_back(std::move(proj));
        }
    }

    m.final_norm = Tensor<S>::full({d}, S(1), true);
    if (!cfg.tie_embeddings) {
        m.head = Tensor<S>::zeros({d, cfg.vocab_size}, true);
        init_linear(m.head, stream("head"));
    }
    return m;
}

template <typename S>
Tensor<S> model_forward(const Model<S>& m, const TokenIds& tokens, Shape id_shape,
                        ForwardCapture<S>* capture) {
    const auto& cfg = m.cfg;
    op_require(!id_shape.empty(), "forward", "token shape must be non-empty");
    const int64_t T = id_shape.back();
    op_require(T >= 1, "forward", "sequence length must be >= 1");
    op_require(T <= cfg.context_length, "forward",
               "sequence length " + std::to_string(T) + " exceeds context_length " +
                   std::to_string(cfg.context_length));
    const S eps = static_cast<S>(cfg.norm_eps);

    if (capture) {
        capture->blocks.assign(m.blocks.size(), {});
        capture->sites.assign(m.site_projs.size(), {});
    }

    auto x = embedding(m.embedding, tokens, id_shape);
    const auto x0 = x;
    const auto sites0 = site_block_indices(cfg);
    const auto opts = m.block_options();
    size_t next_site = 0;
    for (int64_t l = 0; l < cfg.n_layers; ++l) {
        Tensor<S> inp = x;
        if (next_site < sites0.size() && sites0[next_site] == l) {
            auto y = gsa_forward(m.gsa, m.site_projs[next_site], x, x0, cfg.n_heads, eps, cfg.rope,
                                 capture ? &capture->sites[next_site] : nullptr);
            inp = add(x, y);
            ++next_site;
        }
        auto mb = mamba_block_forward(m.blocks[l], rmsnorm(inp, m.block_norms[l], eps), opts,
                                      capture ? &capture->blocks[l] : nullptr);
        x = add(x, mb);
    }
    auto xn = rmsnorm(x, m.final_norm, eps);
    return m.head.defined() ? matmul(xn, m.head) : linear_t(xn, m.embedding);
}

template <typename S>
ParamCount count_params(const Model<S>& m) {
    ParamCount c;
    for (const auto& [name, t] : m.named_params()) {
        c.total += t.numel();
        if (name.rfind("gsa.", 0) == 0) c.gsa += t.numel();
        if (name.rfind("site_proj.", 0) == 0) c.site_proj += t.numel();
    }
    c.shared_attention_fraction =
        c.total > 0 ? static_cast<double>(c.gsa) / static_cast<double>(c.total) : 0.0;
    return c;
}

int64_t param_count_formula(const ZambaConfig& cfg) {
    const int64_t d = cfg.d_model, di = cfg.d_inner(), ds = cfg.d_state, k = cfg.d_conv;
    const int64_t dtr = cfg.dt_rank_eff(), mh = cfg.mlp_hidden_eff(), s = cfg.n_sites();
    const int64_t per_block = d                      // norm
                              + d * 2 * di           // in_proj
                              + di * k               // conv kernel
                              + di * (dtr + 2 * ds)  // x_proj
                              + dtr * di + di        // dt_proj (+bias)
                              + di * ds              // A_log
                              + di                   // D passthrough
                              + di * d;              // out_proj
    const int64_t gsa = s > 0 ? (2 * d) * (6 * d) + (2 * d) * d + d * mh + mh * d + 2 * d + d : 0;
    const int64_t head = cfg.tie_embeddings ? 0 : d * cfg.vocab_size;
    return cfg.vocab_size * d + cfg.n_layers * per_block + gsa + s * d * d + d + head;
}

#define ZAMBA_MODEL_INST(S)                                                                        \
    template struct Model<S>;                                                                      \
    template Model<S> build_model<S>(const ZambaConfig&);                                          \
    template Tensor<S> model_forward<S>(const Model<S>&, const TokenIds&, Shape,                   \
                                        ForwardCapture<S>*);                                       \
    template ParamCount count_params<S>(const Model<S>&);

ZAMBA_MODEL_INST(float)
ZAMBA_MODEL_INST(double)
#undef ZAMBA_MODEL_INST

}  // namespace zamba
