#pragma once

// CLI-facing run configuration, read from a JSON file with sections
// "model", "schedule", "anneal", "train" and "data". Unknown keys anywhere
// are rejected so typos never fall back to silent defaults. The effective
// config written next to a run's outputs reproduces the run when fed back.

#include <string>

#include "zamba/model.hpp"

namespace zamba {

struct RunConfig {
    ZambaConfig model;

    // phase-1 schedule
    double eta_max = 1.5e-4;
    double eta_min = 7.5e-5;
    double warmup_fraction = 0.01;

    // annealing schedule + replay mix
    double anneal_eta0 = 1.1e-4;
    double anneal_etaT = 1e-7;
    double anneal_gamma = 0.25;
    int64_t anneal_rewarmup = 0;  // 0 -> 1% of the anneal steps, at least 1
    double replay_fraction = 0.6;

    // loop options
    int64_t steps = 2000;
    int64_t batch_size = 16;
    int64_t seq_len = 256;
    int64_t ckpt_interval = 2500;
    int64_t eval_interval = 0;
    int64_t eval_batches = 16;
    double val_fraction = 0.05;

    // data
    std::string train_corpus;
    std::string anneal_corpus;

    uint64_t seed = 1;
    std::string out_dir = "out";

    int64_t rewarmup_steps_eff(int64_t anneal_steps) const {
        if (anneal_rewarmup > 0) return anneal_rewarmup;
        const int64_t w = anneal_steps / 100;
        return w < 1 ? 1 : w;
    }
};

RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& json_text);
std::string run_config_to_json(const RunConfig& rc);
void write_effective_config(const RunConfig& rc, const std::string& path);

}  // namespace zamba
