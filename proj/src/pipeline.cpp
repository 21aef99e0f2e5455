#include "ocda/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "ocda/errors.hpp"
#include "ocda/rng.hpp"

namespace ocda {

namespace {

// Stream tags for deriving independent RNG streams per teacher and purpose.
enum StreamTag : std::uint64_t {
    kTagSample = 1,
    kTagMask = 2,
    kTagAugment = 3,
    kTagInit = 4,
    kTagStudentSample = 5,
    kTagStudentInit = 6,
    kTagUpdateSample = 7,
};

std::uint64_t teacher_stream(std::uint64_t seed, int subdomain_index, StreamTag tag) {
    return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(subdomain_index) * 0x9e37ULL)) ^
           static_cast<std::uint64_t>(tag);
}

std::vector<int> sample_batch(RngEngine& rng, std::size_t n, int batch) {
    std::vector<int> idx(batch);
    for (int i = 0; i < batch; ++i) idx[i] = static_cast<int>(bounded(rng, n));
    return idx;
}

}  // namespace

TeacherModel train_teacher(std::span<const LabeledImage> source,
                           const PurifiedSubdomain& subdomain, const TrainConfig& config,
                           std::vector<LossRow>* log) {
    if (source.empty()) throw EmptyDatasetError("train_teacher: empty source set");
    if (subdomain.members.empty()) throw EmptyDatasetError("train_teacher: empty subdomain");

    Architecture arch = config.arch;
    arch.validate();

    TeacherModel teacher;
    teacher.subdomain_index = subdomain.index;
    teacher.style = subdomain.standard_style;
    teacher.g = init_network(arch, teacher_stream(config.seed, subdomain.index, kTagInit));
    teacher.m = teacher.g;  // momentum network starts as a copy

    OptimizerState opt;
    opt.lr0 = config.lr0;
    opt.momentum = config.momentum;
    opt.weight_decay = config.weight_decay;
    opt.poly_exponent = config.poly_exponent;
    opt.max_iter = config.max_iter;

    RngEngine sample_rng =
        make_stream(teacher_stream(config.seed, subdomain.index, kTagSample), 0);
    RngEngine mask_rng = make_stream(teacher_stream(config.seed, subdomain.index, kTagMask), 0);
    RngEngine aug_rng = make_stream(teacher_stream(config.seed, subdomain.index, kTagAugment), 0);

    const bool mixing_on = config.alpha > 0.0 || config.beta > 0.0;
    const AugmentConfig aug_cfg =
        config.augment_enabled ? config.augment : AugmentConfig::disabled();

    for (std::int64_t it = 0; it < config.max_iter; ++it) {
        const std::vector<int> src_idx = sample_batch(sample_rng, source.size(), config.batch_size);
        std::vector<int> tgt_idx;
        if (mixing_on) {
            tgt_idx = sample_batch(sample_rng, subdomain.members.size(), config.batch_size);
        }

        std::vector<Tensor> grads = zero_grads_like(teacher.g);
        double loss_source = 0.0;
        const double inv_batch = 1.0 / config.batch_size;
        for (int i : src_idx) {
            LossGrads lg = cross_entropy(teacher.g, source[i].image, source[i].label);
            loss_source += lg.loss * inv_batch;
            accumulate_grads(grads, lg.grads, inv_batch);
        }

        double loss_s2t = 0.0;
        double loss_t2s = 0.0;
        if (config.alpha > 0.0) {
            const LabeledImage& src = source[src_idx.front()];
            const Image& tgt = subdomain.members[tgt_idx.front()];
            const LabelMap pseudo = pseudo_label(teacher.m, tgt);
            const BinaryMask mask = classmix_mask(src.label, mask_rng);
            MixedSample mixed = mix_s2t(src.image, src.label, tgt, pseudo, mask,
                                        subdomain.standard_style, config.match_levels);
            mixed = augment(mixed, aug_rng, aug_cfg);
            LossGrads lg = cross_entropy(teacher.g, mixed.image, mixed.label);
            loss_s2t = lg.loss;
            accumulate_grads(grads, lg.grads, config.alpha);
        }
        if (config.beta > 0.0) {
            const LabeledImage& src = source[src_idx.back()];
            const Image& tgt = subdomain.members[tgt_idx.back()];
            const LabelMap pseudo = pseudo_label(teacher.m, tgt);
            const BinaryMask mask = cutmix_mask(src.image.height, src.image.width, mask_rng);
            const StyleTriple source_style =
                mean_histograms(std::span<const Image>(&src.image, 1), config.match_levels);
            MixedSample mixed = mix_t2s(src.image, src.label, tgt, pseudo, mask, source_style,
                                        config.match_levels);
            mixed = augment(mixed, aug_rng, aug_cfg);
            LossGrads lg = cross_entropy(teacher.g, mixed.image, mixed.label);
            loss_t2s = lg.loss;
            accumulate_grads(grads, lg.grads, config.beta);
        }

        const double lr = poly_lr(it, opt);
        sgd_step(teacher.g, grads, opt);
        ema_update(teacher.m, teacher.g, config.lambda);

        if (log) {
            const double total =
                loss_source + config.alpha * loss_s2t + config.beta * loss_t2s;
            log->push_back({it, lr, loss_source, loss_s2t, loss_t2s, total});
        }
    }
    return teacher;
}

TeacherEnsemble train_all_teachers(std::span<const LabeledImage> source,
                                   std::span<const PurifiedSubdomain> subdomains,
                                   const TrainConfig& config,
                                   std::vector<std::vector<LossRow>>* logs) {
    if (subdomains.empty()) throw EmptyDatasetError("train_all_teachers: no subdomains");
    TeacherEnsemble ensemble(subdomains.size());
    if (logs) logs->assign(subdomains.size(), {});

    // The multi-teacher loss decouples over teachers, so each trains in
    // isolation; parallel execution must match sequential bit-for-bit.
    auto run_one = [&](std::size_t i) {
        ensemble[i] =
            train_teacher(source, subdomains[i], config, logs ? &(*logs)[i] : nullptr);
    };
    if (config.parallel_teachers && subdomains.size() > 1) {
        std::vector<std::thread> workers;
        workers.reserve(subdomains.size());
        for (std::size_t i = 0; i < subdomains.size(); ++i) workers.emplace_back(run_one, i);
        for (auto& w : workers) w.join();
    } else {
        for (std::size_t i = 0; i < subdomains.size(); ++i) run_one(i);
    }
    return ensemble;
}

FusionResult fuse_predictions(const TeacherEnsemble& ensemble, const Image& target_img,
                              FusionMode mode) {
    if (ensemble.empty()) throw EmptyDatasetError("fuse_predictions: empty ensemble");
    FusionResult result;
    std::vector<PredictionMap> preds;
    preds.reserve(ensemble.size());
    std::vector<double> conf;
    conf.reserve(ensemble.size());
    for (const TeacherModel& t : ensemble) {
        preds.push_back(forward(t.g, target_img));
        const double plogp = prediction_confidence(preds.back());
        if (mode == FusionMode::Verbatim) {
            conf.push_back(plogp);
        } else {
            const int C = preds.back().channels;
            const double max_entropy =
                static_cast<double>(preds.back().pixel_count()) * std::log(static_cast<double>(C));
            conf.push_back(1.0 + plogp / max_entropy);  // 1 - entropy/(H*W*lnC)
        }
    }
    double total = 0.0;
    for (double c : conf) total += c;
    result.weights.resize(ensemble.size());
    if (total == 0.0) {
        // Every teacher fully confident: the weight formula degenerates, fall
        // back to the uniform average.
        result.degenerate = true;
        std::fill(result.weights.begin(), result.weights.end(), 1.0 / ensemble.size());
    } else {
        for (std::size_t i = 0; i < conf.size(); ++i) result.weights[i] = conf[i] / total;
    }

    result.fused = PredictionMap(preds[0].width, preds[0].height, preds[0].channels);
    for (std::size_t m = 0; m < preds.size(); ++m) {
        const double w = result.weights[m];
        for (std::size_t j = 0; j < result.fused.data.size(); ++j) {
            result.fused.data[j] += w * preds[m].data[j];
        }
    }
    return result;
}

NetworkParams distill_student(const TeacherEnsemble& ensemble, std::span<const Image> target_set,
                              const TrainConfig& config, std::vector<LossRow>* log) {
    if (ensemble.empty()) throw EmptyDatasetError("distill_student: empty ensemble");
    if (target_set.empty()) throw EmptyDatasetError("distill_student: empty target set");

    NetworkParams student;
    if (config.init_student_from_teacher) {
        student = ensemble.front().g;
    } else {
        Architecture arch = config.arch;
        arch.validate();
        student = init_network(arch, splitmix64(config.seed) ^ kTagStudentInit);
    }

    OptimizerState opt;
    opt.lr0 = config.lr0;
    opt.momentum = config.momentum;
    opt.weight_decay = config.weight_decay;
    opt.poly_exponent = config.poly_exponent;
    opt.max_iter = config.distill_iters;

    RngEngine sample_rng = make_stream(config.seed, kTagStudentSample);
    for (std::int64_t it = 0; it < config.distill_iters; ++it) {
        const std::vector<int> idx = sample_batch(sample_rng, target_set.size(), config.batch_size);
        std::vector<Tensor> grads = zero_grads_like(student);
        double loss = 0.0;
        const double inv_batch = 1.0 / config.batch_size;
        for (int i : idx) {
            const FusionResult fused = fuse_predictions(ensemble, target_set[i], config.fusion);
            LossGrads lg =
                kl_divergence(student, target_set[i], fused.fused, config.kl_direction);
            loss += lg.loss * inv_batch;
            accumulate_grads(grads, lg.grads, inv_batch);
        }
        const double lr = poly_lr(it, opt);
        sgd_step(student, grads, opt);
        if (log) log->push_back({it, lr, 0.0, 0.0, 0.0, loss});
    }
    return student;
}

NetworkParams online_update(const NetworkParams& student, std::span<const Image> open_images,
                            std::span<const StyleTriple> subdomain_styles,
                            const TrainConfig& config, std::vector<UpdateLossRow>* log) {
    if (open_images.empty()) throw EmptyDatasetError("online_update: no open images");
    if (subdomain_styles.empty()) throw EmptyDatasetError("online_update: no subdomain styles");

    NetworkParams updated = student;
    OptimizerState opt;
    opt.lr0 = config.lr0 * config.update_lr_scale;
    opt.momentum = config.momentum;
    opt.weight_decay = 0.0;       // short test-time updates: no decay
    opt.poly_exponent = 0.0;      // constant learning rate
    opt.max_iter = std::max<std::int64_t>(
        1, static_cast<std::int64_t>(config.update_passes) * config.update_steps *
               ((open_images.size() + config.update_batch - 1) / config.update_batch));

    int batch_counter = 0;
    for (int pass = 0; pass < config.update_passes; ++pass) {
        for (std::size_t start = 0; start < open_images.size();
             start += static_cast<std::size_t>(config.update_batch)) {
            const std::size_t stop =
                std::min(open_images.size(), start + static_cast<std::size_t>(config.update_batch));

            // Restyled variants are fixed for the whole batch update.
            std::vector<const Image*> batch;
            std::vector<std::vector<Image>> restyled(stop - start);
            for (std::size_t i = start; i < stop; ++i) {
                batch.push_back(&open_images[i]);
                const LabImage lab = rgb_to_lab(open_images[i]);
                for (const StyleTriple& style : subdomain_styles) {
                    restyled[i - start].push_back(
                        lab_to_rgb(histogram_match(lab, style, config.match_levels)));
                }
            }

            for (int step = 0; step < config.update_steps; ++step) {
                std::vector<Tensor> grads = zero_grads_like(updated);
                double loss = 0.0;
                const double inv = 1.0 / static_cast<double>(batch.size());
                for (std::size_t b = 0; b < batch.size(); ++b) {
                    for (const Image& variant : restyled[b]) {
                        LossGrads lg = l1_consistency(updated, variant, *batch[b], true, true);
                        loss += lg.loss * inv;
                        accumulate_grads(grads, lg.grads, inv);
                    }
                }
                sgd_step(updated, grads, opt);
                if (log) log->push_back({batch_counter, step, loss});
            }
            ++batch_counter;
        }
    }
    return updated;
}

EvalReport evaluate_miou(const NetworkParams& params, std::span<const LabeledImage> labeled_set,
                         int num_classes) {
    if (labeled_set.empty()) throw EmptyDatasetError("evaluate_miou: empty dataset");
    EvalReport report;
    report.num_classes = num_classes;

    // confusion[gt * C + pred]
    std::vector<std::uint64_t> confusion(static_cast<std::size_t>(num_classes) * num_classes, 0);
    for (const LabeledImage& item : labeled_set) {
        const LabelMap pred = pseudo_label(params, item.image);
        require_same_dims(pred.width, pred.height, item.label.width, item.label.height,
                          "evaluate_miou");
        for (std::size_t p = 0; p < pred.data.size(); ++p) {
            const std::uint8_t gt = item.label.data[p];
            if (gt == kIgnoreLabel) continue;
            if (gt >= num_classes) {
                throw DimensionMismatchError("evaluate_miou: label class out of range");
            }
            confusion[static_cast<std::size_t>(gt) * num_classes + pred.data[p]]++;
        }
    }

    report.iou.assign(num_classes, std::numeric_limits<double>::quiet_NaN());
    report.defined.assign(num_classes, false);
    report.gt_pixels.assign(num_classes, 0);
    double sum = 0.0;
    int defined_count = 0;
    for (int c = 0; c < num_classes; ++c) {
        std::uint64_t tp = confusion[static_cast<std::size_t>(c) * num_classes + c];
        std::uint64_t fn = 0, fp = 0, gt_total = 0;
        for (int j = 0; j < num_classes; ++j) {
            gt_total += confusion[static_cast<std::size_t>(c) * num_classes + j];
            if (j != c) {
                fn += confusion[static_cast<std::size_t>(c) * num_classes + j];
                fp += confusion[static_cast<std::size_t>(j) * num_classes + c];
            }
        }
        report.gt_pixels[c] = gt_total;
        if (gt_total == 0) continue;  // class absent from ground truth: undefined
        report.defined[c] = true;
        report.iou[c] = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
        sum += report.iou[c];
        ++defined_count;
    }
    if (defined_count == 0) throw EmptyDatasetError("evaluate_miou: no valid labeled pixels");
    report.miou = sum / defined_count;
    return report;
}

}  // namespace ocda
