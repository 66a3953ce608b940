#include "zamba/runconfig.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace zamba {

namespace {

using nlohmann::json;

// Pulls known keys out of an object and rejects everything else.
class Section {
public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object())
            throw std::invalid_argument("config: section '" + name_ + "' must be an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (j_.contains(key)) out = j_.at(key).get<T>();
    }

    const json* sub(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key()))
                throw std::invalid_argument("config: unknown key '" + name_ + "." + it.key() + "'");
        }
    }

private:
    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

void parse_model(const json& j, ZambaConfig& m) {
    Section s(j, "model");
    s.get("vocab_size", m.vocab_size);
    s.get("d_model", m.d_model);
    s.get("n_layers", m.n_layers);
    s.get("gsa_period", m.gsa_period);
    s.get("d_state", m.d_state);
    s.get("d_conv", m.d_conv);
    s.get("n_heads", m.n_heads);
    s.get("expand_factor", m.expand_factor);
    s.get("dt_rank", m.dt_rank);
    s.get("mlp_hidden", m.mlp_hidden);
    s.get("context_length", m.context_length);
    s.get("seed", m.seed);
    s.get("norm_eps", m.norm_eps);
    s.get("rope", m.rope);
    s.get("sites_from_zero", m.sites_from_zero);
    s.get("tie_embeddings", m.tie_embeddings);
    s.get("use_d_skip", m.use_d_skip);
    std::string precision = m.precision == Precision::f64 ? "f64" : "f32";
    std::string disc = m.input_discretization == InputDisc::none ? "none" : "euler";
    std::string scan = m.scan_mode == ScanMode::parallel ? "parallel" : "sequential";
    s.get("precision", precision);
    s.get("input_discretization", disc);
    s.get("scan_mode", scan);
    s.finish();
    if (precision != "f32" && precision != "f64")
        throw std::invalid_argument("config: model.precision must be f32 or f64");
    if (disc != "euler" && disc != "none")
        throw std::invalid_argument("config: model.input_discretization must be euler or none");
    if (scan != "sequential" && scan != "parallel")
        throw std::invalid_argument("config: model.scan_mode must be sequential or parallel");
    m.precision = precision == "f64" ? Precision::f64 : Precision::f32;
    m.input_discretization = disc == "none" ? InputDisc::none : InputDisc::euler;
    m.scan_mode = scan == "parallel" ? ScanMode::parallel : ScanMode::sequential;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
    }
    RunConfig rc;
    Section root(j, "");
    if (const json* m = root.sub("model")) parse_model(*m, rc.model);
    if (const json* s = root.sub("schedule")) {
        Section sec(*s, "schedule");
        sec.get("eta_max", rc.eta_max);
        sec.get("eta_min", rc.eta_min);
        sec.get("warmup_fraction", rc.warmup_fraction);
        sec.finish();
    }
    if (const json* a = root.sub("anneal")) {
        Section sec(*a, "anneal");
        sec.get("eta0", rc.anneal_eta0);
        sec.get("etaT", rc.anneal_etaT);
        sec.get("gamma", rc.anneal_gamma);
        sec.get("rewarmup_steps", rc.anneal_rewarmup);
        sec.get("replay_fraction", rc.replay_fraction);
        sec.finish();
    }
    if (const json* t = root.sub("train")) {
        Section sec(*t, "train");
        sec.get("steps", rc.steps);
        sec.get("batch_size", rc.batch_size);
        sec.get("seq_len", rc.seq_len);
        sec.get("ckpt_interval", rc.ckpt_interval);
        sec.get("eval_interval", rc.eval_interval);
        sec.get("eval_batches", rc.eval_batches);
        sec.get("val_fraction", rc.val_fraction);
        sec.finish();
    }
    if (const json* d = root.sub("data")) {
        Section sec(*d, "data");
        sec.get("train_corpus", rc.train_corpus);
        sec.get("anneal_corpus", rc.anneal_corpus);
        sec.finish();
    }
    root.get("seed", rc.seed);
    root.get("out_dir", rc.out_dir);
    root.finish();
    return rc;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return parse_run_config(text);
}

std::string run_config_to_json(const RunConfig& rc) {
    json j;
    j["model"] = {
        {"vocab_size", rc.model.vocab_size},
        {"d_model", rc.model.d_model},
        {"n_layers", rc.model.n_layers},
        {"gsa_period", rc.model.gsa_period},
        {"d_state", rc.model.d_state},
        {"d_conv", rc.model.d_conv},
        {"n_heads", rc.model.n_heads},
        {"expand_factor", rc.model.expand_factor},
        {"dt_rank", rc.model.dt_rank},
        {"mlp_hidden", rc.model.mlp_hidden},
        {"context_length", rc.model.context_length},
        {"seed", rc.model.seed},
        {"norm_eps", rc.model.norm_eps},
        {"rope", rc.model.rope},
        {"sites_from_zero", rc.model.sites_from_zero},
        {"tie_embeddings", rc.model.tie_embeddings},
        {"use_d_skip", rc.model.use_d_skip},
        {"precision", rc.model.precision == Precision::f64 ? "f64" : "f32"},
        {"input_discretization",
         rc.model.input_discretization == InputDisc::none ? "none" : "euler"},
        {"scan_mode", rc.model.scan_mode == ScanMode::parallel ? "parallel" : "sequential"},
    };
    j["schedule"] = {{"eta_max", rc.eta_max},
                     {"eta_min", rc.eta_min},
                     {"warmup_fraction", rc.warmup_fraction}};
    j["anneal"] = {{"eta0", rc.anneal_eta0},
                   {"etaT", rc.anneal_etaT},
                   {"gamma", rc.anneal_gamma},
                   {"rewarmup_steps", rc.anneal_rewarmup},
                   {"replay_fraction", rc.replay_fraction}};
    j["train"] = {{"steps", rc.steps},
                  {"batch_size", rc.batch_size},
                  {"seq_len", rc.seq_len},
                  {"ckpt_interval", rc.ckpt_interval},
                  {"eval_interval", rc.eval_interval},
                  {"eval_batches", rc.eval_batches},
                  {"val_fraction", rc.val_fraction}};
    j["data"] = {{"train_corpus", rc.train_corpus}, {"anneal_corpus", rc.anneal_corpus}};
    j["seed"] = rc.seed;
    j["out_dir"] = rc.out_dir;
    return j.dump(2) + "\n";
}

void write_effective_config(const RunConfig& rc, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("config: cannot write " + path);
    os << run_config_to_json(rc);
}

}  // namespace zamba
