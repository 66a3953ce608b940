#include "zamba/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace zamba {

static_assert(std::endian::native == std::endian::little,
              "ZMB1 serialization assumes a little-endian host");

namespace {

void write_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
void write_str(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

uint32_t read_u32(std::istream& is) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
uint64_t read_u64(std::istream& is) {
    uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
std::string read_str(std::istream& is) {
    const uint32_t n = read_u32(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    return s;
}

std::string fmt_double(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::map<std::string, std::string> config_to_entries(const ZambaConfig& c) {
    std::map<std::string, std::string> e;
    e["cfg.vocab_size"] = std::to_string(c.vocab_size);
    e["cfg.d_model"] = std::to_string(c.d_model);
    e["cfg.n_layers"] = std::to_string(c.n_layers);
    e["cfg.gsa_period"] = std::to_string(c.gsa_period);
    e["cfg.d_state"] = std::to_string(c.d_state);
    e["cfg.d_conv"] = std::to_string(c.d_conv);
    e["cfg.n_heads"] = std::to_string(c.n_heads);
    e["cfg.expand_factor"] = std::to_string(c.expand_factor);
    e["cfg.dt_rank"] = std::to_string(c.dt_rank);
    e["cfg.mlp_hidden"] = std::to_string(c.mlp_hidden);
    e["cfg.context_length"] = std::to_string(c.context_length);
    e["cfg.seed"] = std::to_string(c.seed);
    e["cfg.precision"] = c.precision == Precision::f64 ? "f64" : "f32";
    e["cfg.input_discretization"] = c.input_discretization == InputDisc::none ? "none" : "euler";
    e["cfg.scan_mode"] = c.scan_mode == ScanMode::parallel ? "parallel" : "sequential";
    e["cfg.rope"] = c.rope ? "1" : "0";
    e["cfg.sites_from_zero"] = c.sites_from_zero ? "1" : "0";
    e["cfg.tie_embeddings"] = c.tie_embeddings ? "1" : "0";
    e["cfg.use_d_skip"] = c.use_d_skip ? "1" : "0";
    e["cfg.norm_eps"] = fmt_double(c.norm_eps);
    return e;
}

ZambaConfig config_from_entries(const std::map<std::string, std::string>& e) {
    ZambaConfig c;
    auto want = [&](const std::string& key) -> const std::string& {
        auto it = e.find(key);
        if (it == e.end()) throw std::runtime_error("checkpoint: missing config entry " + key);
        return it->second;
    };
    c.vocab_size = std::stoll(want("cfg.vocab_size"));
    c.d_model = std::stoll(want("cfg.d_model"));
    c.n_layers = std::stoll(want("cfg.n_layers"));
    c.gsa_period = std::stoll(want("cfg.gsa_period"));
    c.d_state = std::stoll(want("cfg.d_state"));
    c.d_conv = std::stoll(want("cfg.d_conv"));
    c.n_heads = std::stoll(want("cfg.n_heads"));
    c.expand_factor = std::stoll(want("cfg.expand_factor"));
    c.dt_rank = std::stoll(want("cfg.dt_rank"));
    c.mlp_hidden = std::stoll(want("cfg.mlp_hidden"));
    c.context_length = std::stoll(want("cfg.context_length"));
    c.seed = std::stoull(want("cfg.seed"));
    c.precision = want("cfg.precision") == "f64" ? Precision::f64 : Precision::f32;
    c.input_discretization =
        want("cfg.input_discretization") == "none" ? InputDisc::none : InputDisc::euler;
    c.scan_mode = want("cfg.scan_mode") == "parallel" ? ScanMode::parallel : ScanMode::sequential;
    c.rope = want("cfg.rope") == "1";
    c.sites_from_zero = want("cfg.sites_from_zero") == "1";
    c.tie_embeddings = want("cfg.tie_embeddings") == "1";
    c.use_d_skip = want("cfg.use_d_skip") == "1";
    c.norm_eps = std::stod(want("cfg.norm_eps"));
    return c;
}

std::vector<std::string> config_arch_diff(const ZambaConfig& a, const ZambaConfig& b) {
    std::vector<std::string> diff;
    auto ae = config_to_entries(a);
    auto be = config_to_entries(b);
    for (const auto& [key, va] : ae) {
        if (key == "cfg.seed" || key == "cfg.scan_mode" || key == "cfg.precision") continue;
        if (be.at(key) != va) diff.push_back(key.substr(4) + ": " + va + " vs " + be.at(key));
    }
    return diff;
}

const NamedTensorF32* CheckpointFile::find(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

template <typename S>
void save_checkpoint(const std::string& path, const Model<S>& model, const AdamW<S>* optimizer,
                     const std::map<std::string, std::string>& extras) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    os.write("ZMB1", 4);
    write_u32(os, 1);

    auto entries = config_to_entries(model.cfg);
    for (const auto& [k, v] : extras) entries[k] = v;
    write_u32(os, static_cast<uint32_t>(entries.size()));
    for (const auto& [k, v] : entries) {
        write_str(os, k);
        write_str(os, v);
    }

    auto params = model.named_params();
    uint32_t n_tensors = static_cast<uint32_t>(params.size());
    if (optimizer) n_tensors += 2 * static_cast<uint32_t>(optimizer->size());
    write_u32(os, n_tensors);

    auto write_tensor = [&](const std::string& name, const Shape& shape, const S* data,
                            size_t count) {
        write_str(os, name);
        write_u32(os, static_cast<uint32_t>(shape.size()));
        for (int64_t ext : shape) write_u64(os, static_cast<uint64_t>(ext));
        for (size_t i = 0; i < count; ++i) {
            const float f = static_cast<float>(data[i]);
            os.write(reinterpret_cast<const char*>(&f), 4);
        }
    };

    for (const auto& [name, t] : params)
        write_tensor(name, t.shape(), t.data().data(), t.data().size());
    if (optimizer) {
        auto& opt = *const_cast<AdamW<S>*>(optimizer);
        for (size_t i = 0; i < opt.size(); ++i) {
            const auto& shape = params[i].second.shape();
            write_tensor("opt.m." + opt.name(i), shape, opt.moment1(i).data(), opt.moment1(i).size());
            write_tensor("opt.v." + opt.name(i), shape, opt.moment2(i).data(), opt.moment2(i).size());
        }
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

CheckpointFile read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "ZMB1", 4) != 0)
        throw std::runtime_error("checkpoint: " + path + " is not a ZMB1 file");
    CheckpointFile f;
    f.version = read_u32(is);
    if (f.version != 1)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(f.version));
    std::map<std::string, std::string> entries;
    const uint32_t n_entries = read_u32(is);
    for (uint32_t i = 0; i < n_entries; ++i) {
        auto k = read_str(is);
        entries[k] = read_str(is);
    }
    f.config = config_from_entries(entries);
    for (auto& [k, v] : entries)
        if (k.rfind("cfg.", 0) != 0) f.extras[k] = v;

    const uint32_t n_tensors = read_u32(is);
    f.tensors.reserve(n_tensors);
    for (uint32_t i = 0; i < n_tensors; ++i) {
        NamedTensorF32 t;
        t.name = read_str(is);
        const uint32_t rank = read_u32(is);
        for (uint32_t r = 0; r < rank; ++r) t.shape.push_back(static_cast<int64_t>(read_u64(is)));
        t.data.resize(static_cast<size_t>(numel_of(t.shape)));
        is.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * 4));
        f.tensors.push_back(std::move(t));
    }
    if (!is) throw std::runtime_error("checkpoint: truncated file " + path);
    return f;
}

template <typename S>
Model<S> load_model(const CheckpointFile& file) {
    Model<S> m = build_model<S>(file.config);
    for (auto& [name, t] : m.named_params()) {
        const NamedTensorF32* src = file.find(name);
        if (!src) throw std::runtime_error("checkpoint: missing tensor " + name);
        if (src->shape != t.shape())
            throw std::runtime_error("checkpoint: tensor " + name + " has shape " +
                                     shape_str(src->shape) + ", expected " + shape_str(t.shape()));
        auto& dst = const_cast<Tensor<S>&>(t).data();
        for (size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<S>(src->data[i]);
    }
    return m;
}

template <typename S>
void restore_optimizer(const CheckpointFile& file, AdamW<S>& opt) {
    for (size_t i = 0; i < opt.size(); ++i) {
        for (auto [prefix, moments] :
             {std::pair{"opt.m.", &opt.moment1(i)}, std::pair{"opt.v.", &opt.moment2(i)}}) {
            const NamedTensorF32* src = file.find(prefix + opt.name(i));
            if (!src) throw std::runtime_error("checkpoint: missing optimizer state for " + opt.name(i));
            if (src->data.size() != moments->size())
                throw std::runtime_error("checkpoint: optimizer state size mismatch for " +
                                         opt.name(i));
            for (size_t j = 0; j < moments->size(); ++j)
                (*moments)[j] = static_cast<S>(src->data[j]);
        }
    }
    auto it = file.extras.find("train.opt_step");
    if (it != file.extras.end()) opt.set_step_count(std::stoll(it->second));
}

#define ZAMBA_CKPT_INST(S)                                                                       \
    template void save_checkpoint<S>(const std::string&, const Model<S>&, const AdamW<S>*,      \
                                     const std::map<std::string, std::string>&);                 \
    template Model<S> load_model<S>(const CheckpointFile&);                                      \
    template void restore_optimizer<S>(const CheckpointFile&, AdamW<S>&);

ZAMBA_CKPT_INST(float)
ZAMBA_CKPT_INST(double)
#undef ZAMBA_CKPT_INST

}  // namespace zamba
