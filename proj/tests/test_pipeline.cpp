#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ocda/errors.hpp"
#include "ocda/pipeline.hpp"
#include "ocda/rng.hpp"
#include "ocda/synthdata.hpp"

using namespace ocda;

namespace {

// Small everything: 24x24 scenes, narrow net, short schedules.
SceneSpec small_spec() {
    SceneSpec spec;
    spec.width = 24;
    spec.height = 24;
    spec.num_classes = 4;
    return spec;
}

TrainConfig small_config(std::uint64_t seed = 7) {
    TrainConfig config;
    config.arch = Architecture{3, {8, 8}, 4, 3};
    config.max_iter = 10;
    config.distill_iters = 10;
    config.batch_size = 2;
    config.seed = seed;
    return config;
}

std::vector<PurifiedSubdomain> purified_from(const CompoundTarget& target, int k_true) {
    std::vector<std::vector<Image>> members(k_true);
    for (std::size_t i = 0; i < target.images.size(); ++i) {
        members[target.hidden_subdomain[i]].push_back(target.images[i]);
    }
    std::vector<PurifiedSubdomain> out;
    for (int m = 0; m < k_true; ++m) {
        out.push_back(purify_subdomain(m + 1, members[m], kMatchLevels));
    }
    return out;
}

// Single 1x1-layer two-class network whose softmax output is constant
// (p, 1-p) everywhere: zero weights, bias (log(p/(1-p)), 0).
TeacherModel constant_teacher(double p, const StyleTriple& style) {
    Architecture arch{3, {}, 2, 1};
    TeacherModel teacher;
    teacher.subdomain_index = 1;
    teacher.g = init_network(arch, 0);
    for (Tensor& t : teacher.g.tensors) std::fill(t.data.begin(), t.data.end(), 0.0);
    teacher.g.tensors[1].data[0] = std::log(p / (1.0 - p));
    teacher.m = teacher.g;
    teacher.style = style;
    return teacher;
}

}  // namespace

TEST_CASE("fuse_predictions reproduces the two-teacher hand example") {
    Image img(1, 1);
    img.at(0, 0, 0) = 120;
    StyleTriple style;  // unused by fusion
    TeacherEnsemble ensemble;
    ensemble.push_back(constant_teacher(0.9, style));
    ensemble.push_back(constant_teacher(0.6, style));
    ensemble[1].subdomain_index = 2;

    const FusionResult result = fuse_predictions(ensemble, img, FusionMode::Verbatim);

    // direct evaluation of the weight formula on maps (0.9,0.1) and (0.6,0.4)
    const double conf1 = 0.9 * std::log(0.9) + 0.1 * std::log(0.1);
    const double conf2 = 0.6 * std::log(0.6) + 0.4 * std::log(0.4);
    const double w1 = conf1 / (conf1 + conf2);
    const double w2 = conf2 / (conf1 + conf2);
    REQUIRE(result.weights.size() == 2);
    CHECK(std::abs(result.weights[0] - w1) <= 1e-9);
    CHECK(std::abs(result.weights[1] - w2) <= 1e-9);
    CHECK(std::abs(result.fused.at(0, 0, 0) - (w1 * 0.9 + w2 * 0.6)) <= 1e-9);
    CHECK(std::abs(result.fused.at(0, 0, 1) - (w1 * 0.1 + w2 * 0.4)) <= 1e-9);
    // the verbatim rule weights the less confident teacher more
    CHECK(result.weights[1] > result.weights[0]);
}

TEST_CASE("fuse_predictions gives identical teachers equal weights") {
    RngEngine rng = make_stream(80, 1);
    Image img(8, 8);
    for (auto& v : img.data) v = static_cast<std::uint8_t>(bounded(rng, 256));

    Architecture arch{3, {6}, 3, 3};
    TeacherModel teacher;
    teacher.subdomain_index = 1;
    teacher.g = init_network(arch, 5);
    teacher.m = teacher.g;
    TeacherEnsemble ensemble = {teacher, teacher, teacher};

    const FusionResult result = fuse_predictions(ensemble, img, FusionMode::Verbatim);
    for (double w : result.weights) CHECK(w == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("fused maps are pixelwise convex combinations with weights summing to one") {
    RngEngine rng = make_stream(80, 2);
    Image img(9, 9);
    for (auto& v : img.data) v = static_cast<std::uint8_t>(bounded(rng, 256));

    Architecture arch{3, {6}, 3, 3};
    TeacherEnsemble ensemble;
    for (int m = 0; m < 3; ++m) {
        TeacherModel t;
        t.subdomain_index = m + 1;
        t.g = init_network(arch, 100 + m);
        t.m = t.g;
        ensemble.push_back(std::move(t));
    }

    for (FusionMode mode : {FusionMode::Verbatim, FusionMode::Negentropy}) {
        const FusionResult result = fuse_predictions(ensemble, img, mode);
        double sum = 0.0;
        for (double w : result.weights) {
            CHECK(w >= 0.0);
            sum += w;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-9);

        std::vector<PredictionMap> preds;
        for (const TeacherModel& t : ensemble) preds.push_back(forward(t.g, img));
        for (std::size_t j = 0; j < result.fused.data.size(); ++j) {
            double lo = preds[0].data[j], hi = preds[0].data[j];
            for (const auto& p : preds) {
                lo = std::min(lo, p.data[j]);
                hi = std::max(hi, p.data[j]);
            }
            CHECK(result.fused.data[j] >= lo - 1e-12);
            CHECK(result.fused.data[j] <= hi + 1e-12);
        }
    }
}

TEST_CASE("fully confident teachers degenerate to uniform weights") {
    Image img(1, 1);
    StyleTriple style;
    // logit difference so large that softmax saturates to exactly (1, 0)
    Architecture arch{3, {}, 2, 1};
    TeacherModel teacher;
    teacher.subdomain_index = 1;
    teacher.g = init_network(arch, 0);
    for (Tensor& t : teacher.g.tensors) std::fill(t.data.begin(), t.data.end(), 0.0);
    teacher.g.tensors[1].data[0] = 2000.0;
    teacher.m = teacher.g;
    teacher.style = style;
    TeacherEnsemble ensemble = {teacher, teacher};

    const FusionResult result = fuse_predictions(ensemble, img, FusionMode::Verbatim);
    CHECK(result.degenerate);
    CHECK(result.weights[0] == doctest::Approx(0.5));
    CHECK(result.weights[1] == doctest::Approx(0.5));
}

TEST_CASE("negentropy fusion weights the more confident teacher more") {
    Image img(1, 1);
    StyleTriple style;
    TeacherEnsemble ensemble;
    ensemble.push_back(constant_teacher(0.9, style));
    ensemble.push_back(constant_teacher(0.6, style));
    const FusionResult result = fuse_predictions(ensemble, img, FusionMode::Negentropy);
    CHECK(result.weights[0] > result.weights[1]);
    CHECK(std::abs(result.weights[0] + result.weights[1] - 1.0) <= 1e-9);
}

TEST_CASE("train_teacher with alpha = beta = 0 ignores the target data entirely") {
    const SceneSpec spec = small_spec();
    const auto source = generate_source(spec, 6, 1);
    const CompoundTarget ta = generate_compound_target(spec, 2, 8, 2);
    const CompoundTarget tb = generate_compound_target(spec, 2, 8, 999);

    TrainConfig config = small_config();
    config.alpha = 0.0;
    config.beta = 0.0;

    auto subdomain_a = purified_from(ta, 2)[0];
    auto subdomain_b = purified_from(tb, 2)[0];
    subdomain_b.index = subdomain_a.index;  // identical stream identity

    std::vector<LossRow> log_a, log_b;
    const TeacherModel a = train_teacher(source, subdomain_a, config, &log_a);
    const TeacherModel b = train_teacher(source, subdomain_b, config, &log_b);

    CHECK(a.g == b.g);
    CHECK(a.m == b.m);
    REQUIRE(log_a.size() == log_b.size());
    for (std::size_t i = 0; i < log_a.size(); ++i) {
        CHECK(log_a[i].loss_source == log_b[i].loss_source);
        CHECK(log_a[i].loss_s2t == 0.0);
        CHECK(log_a[i].loss_t2s == 0.0);
        CHECK(std::abs(log_a[i].total - log_a[i].loss_source) <= 1e-9);
    }
}

TEST_CASE("train_teacher is bit-identical across executions") {
    const SceneSpec spec = small_spec();
    const auto source = generate_source(spec, 5, 3);
    const CompoundTarget target = generate_compound_target(spec, 2, 8, 4);
    const auto subdomains = purified_from(target, 2);

    const TrainConfig config = small_config();
    std::vector<LossRow> log_a, log_b;
    const TeacherModel a = train_teacher(source, subdomains[0], config, &log_a);
    const TeacherModel b = train_teacher(source, subdomains[0], config, &log_b);
    CHECK(a.g == b.g);
    CHECK(a.m == b.m);
    REQUIRE(log_a.size() == log_b.size());
    for (std::size_t i = 0; i < log_a.size(); ++i) CHECK(log_a[i].total == log_b[i].total);
}

TEST_CASE("train_teacher aborts on numeric blowup") {
    const SceneSpec spec = small_spec();
    const auto source = generate_source(spec, 4, 5);
    const CompoundTarget target = generate_compound_target(spec, 2, 6, 6);
    const auto subdomains = purified_from(target, 2);
    TrainConfig config = small_config();
    config.lr0 = 1e280;
    CHECK_THROWS_AS(train_teacher(source, subdomains[0], config, nullptr), NonFiniteError);
}

TEST_CASE("train_all_teachers: teachers are isolated and order-independent") {
    const SceneSpec spec = small_spec();
    const auto source = generate_source(spec, 5, 7);
    const CompoundTarget target = generate_compound_target(spec, 3, 12, 8);
    const auto subdomains = purified_from(target, 3);

    TrainConfig config = small_config();
    const TeacherEnsemble sequential = train_all_teachers(source, subdomains, config);
    REQUIRE(sequential.size() == 3);

    // each teacher matches its isolated run
    for (int m = 0; m < 3; ++m) {
        const TeacherModel isolated = train_teacher(source, subdomains[m], config);
        CHECK(sequential[m].g == isolated.g);
        CHECK(sequential[m].m == isolated.m);
    }

    // parallel execution produces the same ensemble
    config.parallel_teachers = true;
    const TeacherEnsemble parallel = train_all_teachers(source, subdomains, config);
    for (int m = 0; m < 3; ++m) {
        CHECK(parallel[m].g == sequential[m].g);
        CHECK(parallel[m].m == sequential[m].m);
    }
}

TEST_CASE("train_all_teachers with one subdomain equals a single train_teacher call") {
    const SceneSpec spec = small_spec();
    const auto source = generate_source(spec, 5, 9);
    const CompoundTarget target = generate_compound_target(spec, 2, 8, 10);
    auto subdomains = purified_from(target, 2);
    subdomains.resize(1);

    const TrainConfig config = small_config();
    const TeacherEnsemble ensemble = train_all_teachers(source, subdomains, config);
    const TeacherModel single = train_teacher(source, subdomains[0], config);
    REQUIRE(ensemble.size() == 1);
    CHECK(ensemble[0].g == single.g);
}

TEST_CASE("distill_student initialized at its lone teacher is stationary") {
    const SceneSpec spec = small_spec();
    const CompoundTarget target = generate_compound_target(spec, 2, 8, 11);

    TrainConfig config = small_config();
    config.weight_decay = 0.0;
    config.init_student_from_teacher = true;
    config.distill_iters = 5;

    TeacherModel teacher;
    teacher.subdomain_index = 1;
    teacher.g = init_network(config.arch, 55);
    teacher.m = teacher.g;
    TeacherEnsemble ensemble = {teacher};

    std::vector<LossRow> log;
    const NetworkParams student =
        distill_student(ensemble, target.images, config, &log);
    CHECK(student == teacher.g);
    for (const LossRow& row : log) CHECK(std::abs(row.total) <= 1e-12);
}

TEST_CASE("distillation loss decreases over a fixed-teacher run") {
    const SceneSpec spec = small_spec();
    const CompoundTarget target = generate_compound_target(spec, 2, 50, 12);

    TrainConfig config = small_config();
    config.distill_iters = 60;
    config.lr0 = 5e-3;  // larger steps so the trend is visible in few iters

    TeacherModel teacher;
    teacher.subdomain_index = 1;
    teacher.g = init_network(config.arch, 77);
    teacher.m = teacher.g;
    const TeacherEnsemble ensemble = {teacher, teacher};

    std::vector<LossRow> log;
    distill_student(ensemble, target.images, config, &log);

    // smoothed over 10-step windows, the KL loss trends down
    std::vector<double> windows;
    for (std::size_t start = 0; start + 10 <= log.size(); start += 10) {
        double mean = 0.0;
        for (std::size_t i = start; i < start + 10; ++i) mean += log[i].total / 10.0;
        windows.push_back(mean);
    }
    REQUIRE(windows.size() >= 3);
    CHECK(windows.back() < windows.front());
    for (std::size_t i = 1; i < windows.size(); ++i) {
        CHECK(windows[i] <= windows[i - 1] * 1.05 + 1e-12);
    }
}

TEST_CASE("online_update with a matching style is a near no-op") {
    const SceneSpec spec = small_spec();
    const OpenDomain open = generate_open(spec, 1, 13);

    TrainConfig config = small_config();
    const NetworkParams student = init_network(config.arch, 14);

    // style of the open image itself: the restyled copy stays put
    const StyleTriple own =
        mean_histograms(std::span<const Image>(&open.images[0], 1), kMatchLevels);
    std::vector<UpdateLossRow> log;
    const NetworkParams updated =
        online_update(student, open.images, std::vector<StyleTriple>{own}, config, &log);

    for (const UpdateLossRow& row : log) CHECK(row.loss <= 2e-2);
    double max_delta = 0.0;
    for (std::size_t t = 0; t < student.tensors.size(); ++t) {
        for (std::size_t j = 0; j < student.tensors[t].data.size(); ++j) {
            max_delta = std::max(max_delta, std::abs(student.tensors[t].data[j] -
                                                     updated.tensors[t].data[j]));
        }
    }
    CHECK(max_delta <= 1e-4);
}

TEST_CASE("online_update reduces the consistency loss") {
    const SceneSpec spec = small_spec();
    const CompoundTarget target = generate_compound_target(spec, 2, 10, 15);
    const OpenDomain open = generate_open(spec, 4, 16);
    const auto subdomains = purified_from(target, 2);

    TrainConfig config = small_config();
    config.update_steps = 10;
    config.update_lr_scale = 40.0;  // visible movement at toy scale

    const NetworkParams student = init_network(config.arch, 17);
    std::vector<StyleTriple> styles;
    for (const auto& sub : subdomains) styles.push_back(sub.standard_style);

    std::vector<UpdateLossRow> log;
    online_update(student, open.images, styles, config, &log);
    REQUIRE(!log.empty());
    double first = 0.0, last = 0.0;
    for (const UpdateLossRow& row : log) {
        if (row.step == 0) first += row.loss;
        if (row.step == config.update_steps - 1) last += row.loss;
    }
    CHECK(last < first);
}

TEST_CASE("evaluate_miou: perfect predictions give mIoU 1") {
    // channel-argmax classifier: logits_c = pixel_c / 255
    Architecture arch{3, {}, 3, 1};
    NetworkParams params = init_network(arch, 0);
    std::fill(params.tensors[0].data.begin(), params.tensors[0].data.end(), 0.0);
    std::fill(params.tensors[1].data.begin(), params.tensors[1].data.end(), 0.0);
    for (int c = 0; c < 3; ++c) params.tensors[0].data[c * 3 + c] = 1.0;

    Image img(3, 1);
    LabelMap label(3, 1);
    for (int x = 0; x < 3; ++x) {
        img.at(x, 0, x) = 255;
        label.at(x, 0) = static_cast<std::uint8_t>(x);
    }
    std::vector<LabeledImage> set = {{img, label}};
    const EvalReport report = evaluate_miou(params, set, 3);
    CHECK(report.miou == doctest::Approx(1.0));
    for (int c = 0; c < 3; ++c) {
        CHECK(report.defined[c]);
        CHECK(report.iou[c] == doctest::Approx(1.0));
    }
}

TEST_CASE("evaluate_miou: class disjoint from predictions scores zero") {
    Architecture arch{3, {}, 3, 1};
    NetworkParams params = init_network(arch, 0);
    std::fill(params.tensors[0].data.begin(), params.tensors[0].data.end(), 0.0);
    std::fill(params.tensors[1].data.begin(), params.tensors[1].data.end(), 0.0);
    params.tensors[1].data[0] = 10.0;  // always predicts class 0

    Image img(2, 2);
    LabelMap label(2, 2, 1);  // ground truth everywhere class 1
    std::vector<LabeledImage> set = {{img, label}};
    const EvalReport report = evaluate_miou(params, set, 3);
    CHECK(report.defined[1]);
    CHECK(report.iou[1] == doctest::Approx(0.0));
    CHECK(!report.defined[0]);  // class 0 absent from ground truth
    CHECK(!report.defined[2]);
}

TEST_CASE("evaluate_miou matches a hand confusion-matrix scenario") {
    // channel-argmax classifier over a 2x2 image:
    //   predictions: [0, 1, 1, 2]; ground truth: [0, 1, 2, 2]
    Architecture arch{3, {}, 3, 1};
    NetworkParams params = init_network(arch, 0);
    std::fill(params.tensors[0].data.begin(), params.tensors[0].data.end(), 0.0);
    std::fill(params.tensors[1].data.begin(), params.tensors[1].data.end(), 0.0);
    for (int c = 0; c < 3; ++c) params.tensors[0].data[c * 3 + c] = 1.0;

    Image img(2, 2);
    img.at(0, 0, 0) = 255;  // pred 0
    img.at(1, 0, 1) = 255;  // pred 1
    img.at(0, 1, 1) = 255;  // pred 1
    img.at(1, 1, 2) = 255;  // pred 2
    LabelMap label(2, 2);
    label.at(0, 0) = 0;
    label.at(1, 0) = 1;
    label.at(0, 1) = 2;
    label.at(1, 1) = 2;

    std::vector<LabeledImage> set = {{img, label}};
    const EvalReport report = evaluate_miou(params, set, 3);
    // hand-filled confusion: class0 TP1 FP0 FN0 -> 1; class1 TP1 FP1 FN0 -> 1/2;
    // class2 TP1 FP0 FN1 -> 1/2
    CHECK(report.iou[0] == doctest::Approx(1.0));
    CHECK(report.iou[1] == doctest::Approx(0.5));
    CHECK(report.iou[2] == doctest::Approx(0.5));
    CHECK(report.miou == doctest::Approx((1.0 + 0.5 + 0.5) / 3));
}

TEST_CASE("evaluate_miou rejects an empty dataset") {
    Architecture arch{3, {}, 3, 1};
    const NetworkParams params = init_network(arch, 0);
    CHECK_THROWS_AS(evaluate_miou(params, std::span<const LabeledImage>(), 3),
                    EmptyDatasetError);
}

TEST_CASE("empty inputs raise EmptyDataset errors across the pipeline") {
    const SceneSpec spec = small_spec();
    const auto source = generate_source(spec, 2, 20);
    const CompoundTarget target = generate_compound_target(spec, 2, 6, 21);
    const auto subdomains = purified_from(target, 2);
    const TrainConfig config = small_config();

    CHECK_THROWS_AS(train_teacher({}, subdomains[0], config), EmptyDatasetError);
    PurifiedSubdomain empty;
    empty.index = 1;
    CHECK_THROWS_AS(train_teacher(source, empty, config), EmptyDatasetError);
    CHECK_THROWS_AS(train_all_teachers(source, {}, config), EmptyDatasetError);
    CHECK_THROWS_AS(distill_student({}, target.images, config), EmptyDatasetError);

    TeacherModel teacher;
    teacher.g = init_network(config.arch, 1);
    teacher.m = teacher.g;
    const TeacherEnsemble ensemble = {teacher};
    CHECK_THROWS_AS(distill_student(ensemble, {}, config), EmptyDatasetError);
    CHECK_THROWS_AS(online_update(teacher.g, {}, std::vector<StyleTriple>{StyleTriple{}},
                                  config),
                    EmptyDatasetError);
}
