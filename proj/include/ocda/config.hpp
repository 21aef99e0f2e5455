#pragma once

#include <cstdint>
#include <string>

#include "ocda/pipeline.hpp"

namespace ocda {

/// Operator-facing run configuration, read from a line-oriented
/// `[section]` / `key = value` text file. Unknown keys are rejected.
struct RunConfig {
    // [run]
    std::uint64_t seed = 42;
    std::string out_dir = "out";

    // [paths] — empty means "under <out_dir>/data/"
    std::string source_dir;
    std::string target_dir;
    std::string open_dir;

    // [synth]
    int image_size = 64;
    int num_classes = 5;
    int n_source = 32;
    int n_target = 60;
    int n_target_val = 24;
    int n_open = 16;
    int k_true = 3;
    double descriptor_margin = 0.25;
    double noise_sigma = 2.0;

    // [separate]
    int desc_bins = 64;
    int k_min = 2;
    int k_max = 8;

    // [train]
    double alpha = 1.0;
    double beta = 1.0;
    double lambda = 0.99;
    double lr0 = 2.5e-4;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    double poly_exponent = 0.9;
    std::int64_t max_iter = 300;
    int batch_size = 2;
    bool augment = true;
    bool parallel_teachers = false;

    // [distill]
    std::int64_t distill_iters = 300;
    bool init_from_teacher = false;

    // [update]
    int update_steps = 10;
    double update_lr_scale = 0.1;
    int update_batch = 4;
    int update_passes = 1;

    // [fusion]
    FusionMode fusion = FusionMode::Verbatim;

    // [mix]
    int mix_samples = 4;

    // [stages] — which stages `all` executes
    bool stage_synth = true;
    bool stage_separate = true;
    bool stage_purify = true;
    bool stage_mix = true;
    bool stage_train = true;
    bool stage_distill = true;
    bool stage_update = true;
    bool stage_eval = true;

    bool operator==(const RunConfig&) const = default;

    TrainConfig to_train_config() const;
    std::string effective_source_dir() const;
    std::string effective_target_dir() const;
    std::string effective_open_dir() const;
};

/// Parses and validates; throws ParseError (syntax, unknown keys, with line
/// numbers) or ValidationError (range violations, naming field and bound).
RunConfig parse_config_file(const std::string& path);
RunConfig parse_config_text(const std::string& text);

/// Range validation only; parse_config_* call this automatically.
void validate_config(const RunConfig& config);

std::string serialize_config(const RunConfig& config);
void write_config_file(const std::string& path, const RunConfig& config);

}  // namespace ocda
