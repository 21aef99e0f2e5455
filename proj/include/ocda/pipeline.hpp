#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ocda/image.hpp"
#include "ocda/mixing.hpp"
#include "ocda/style_purify.hpp"
#include "ocda/tinyseg.hpp"

namespace ocda {

enum class FusionMode {
    Verbatim,    // weights proportional to sum p*log(p), as written
    Negentropy,  // weights proportional to 1 - entropy / (H*W*ln C)
};

struct TrainConfig {
    double alpha = 1.0;
    double beta = 1.0;
    double lambda = 0.99;  // EMA momentum

    double lr0 = 2.5e-4;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    double poly_exponent = 0.9;
    std::int64_t max_iter = 300;
    int batch_size = 2;

    std::uint64_t seed = 42;
    int desc_bins = 64;
    int match_levels = kMatchLevels;

    bool augment_enabled = true;
    AugmentConfig augment{};

    FusionMode fusion = FusionMode::Verbatim;
    KlDirection kl_direction = KlDirection::TargetToStudent;

    std::int64_t distill_iters = 300;
    bool init_student_from_teacher = false;

    int update_steps = 10;
    double update_lr_scale = 0.1;
    int update_batch = 4;
    int update_passes = 1;

    bool parallel_teachers = false;

    Architecture arch{3, {16, 16}, 0, 3};  // num_classes filled by the caller
};

/// One adaptation teacher: segmentation network, its EMA momentum copy, and
/// the subdomain's standard style.
struct TeacherModel {
    int subdomain_index = 0;  // 1-based
    NetworkParams g;
    NetworkParams m;
    StyleTriple style;
};

using TeacherEnsemble = std::vector<TeacherModel>;

struct LossRow {
    std::int64_t iter = 0;
    double lr = 0.0;
    double loss_source = 0.0;
    double loss_s2t = 0.0;
    double loss_t2s = 0.0;
    double total = 0.0;
};

struct EvalReport {
    int num_classes = 0;
    std::vector<double> iou;         // NaN when the class is absent from GT
    std::vector<bool> defined;       // class present in ground truth
    std::vector<std::uint64_t> gt_pixels;
    double miou = 0.0;               // mean over defined classes
    std::string domain_tag;
};

struct FusionResult {
    std::vector<double> weights;
    PredictionMap fused;
    bool degenerate = false;  // all-confident fallback to uniform weights
};

TeacherModel train_teacher(std::span<const LabeledImage> source,
                           const PurifiedSubdomain& subdomain, const TrainConfig& config,
                           std::vector<LossRow>* log = nullptr);

TeacherEnsemble train_all_teachers(std::span<const LabeledImage> source,
                                   std::span<const PurifiedSubdomain> subdomains,
                                   const TrainConfig& config,
                                   std::vector<std::vector<LossRow>>* logs = nullptr);

FusionResult fuse_predictions(const TeacherEnsemble& ensemble, const Image& target_img,
                              FusionMode mode = FusionMode::Verbatim);

NetworkParams distill_student(const TeacherEnsemble& ensemble, std::span<const Image> target_set,
                              const TrainConfig& config, std::vector<LossRow>* log = nullptr);

struct UpdateLossRow {
    int batch = 0;
    int step = 0;
    double loss = 0.0;
};

NetworkParams online_update(const NetworkParams& student, std::span<const Image> open_images,
                            std::span<const StyleTriple> subdomain_styles,
                            const TrainConfig& config,
                            std::vector<UpdateLossRow>* log = nullptr);

EvalReport evaluate_miou(const NetworkParams& params, std::span<const LabeledImage> labeled_set,
                         int num_classes);

}  // namespace ocda
