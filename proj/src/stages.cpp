#include "ocda/stages.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "ocda/domain_sep.hpp"
#include "ocda/errors.hpp"
#include "ocda/mixing.hpp"
#include "ocda/pipeline.hpp"
#include "ocda/png_io.hpp"
#include "ocda/rng.hpp"
#include "ocda/style_purify.hpp"
#include "ocda/synthdata.hpp"
#include "ocda/tinyseg.hpp"

namespace fs = std::filesystem;

namespace ocda {

namespace {

constexpr Stage kPipelineOrder[] = {Stage::Synth,  Stage::Separate, Stage::Purify,
                                    Stage::Mix,    Stage::Train,    Stage::Distill,
                                    Stage::Update, Stage::Eval};

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string join_path(const std::string& a, const std::string& b) {
    return (fs::path(a) / b).string();
}

void ensure_dir(const std::string& path) { fs::create_directories(path); }

void require_artifact(const std::string& path, const std::string& hint) {
    if (!fs::exists(path)) {
        throw MissingArtifactError("missing artifact: " + path + " (" + hint + ")");
    }
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::trunc | std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    os << text;
    if (!os) throw IoError("write failed: " + path);
}

std::string read_text(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::istringstream is(read_text(path));
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        for (;;) {
            const auto comma = line.find(',', start);
            if (comma == std::string::npos) {
                cells.push_back(line.substr(start));
                break;
            }
            cells.push_back(line.substr(start, comma - start));
            start = comma + 1;
        }
        rows.push_back(std::move(cells));
    }
    return rows;
}

// Tracks this stage's artifacts and rewrites the stage's manifest rows.
class StageRecorder {
public:
    StageRecorder(const RunConfig& config, Stage stage) : config_(config), stage_(stage) {}

    void input(const std::string& abs_path) { add("input", abs_path); }
    void output(const std::string& abs_path) { add("output", abs_path); }

    void commit() {
        std::vector<ManifestRow> manifest = load_manifest(config_.out_dir);
        const std::string name = stage_name(stage_);
        std::erase_if(manifest, [&](const ManifestRow& r) { return r.stage == name; });
        manifest.insert(manifest.end(), rows_.begin(), rows_.end());

        auto order_of = [](const std::string& s) {
            for (std::size_t i = 0; i < std::size(kPipelineOrder); ++i) {
                if (s == stage_name(kPipelineOrder[i])) return i;
            }
            return std::size(kPipelineOrder);
        };
        std::sort(manifest.begin(), manifest.end(),
                  [&](const ManifestRow& a, const ManifestRow& b) {
                      if (a.stage != b.stage) return order_of(a.stage) < order_of(b.stage);
                      if (a.role != b.role) return a.role < b.role;
                      return a.path < b.path;
                  });
        save_manifest(config_.out_dir, manifest);
    }

private:
    void add(const std::string& role, const std::string& abs_path) {
        const std::string rel =
            fs::relative(fs::path(abs_path), fs::path(config_.out_dir)).generic_string();
        rows_.push_back({stage_name(stage_), role, rel, file_digest(abs_path), config_.seed});
    }

    const RunConfig& config_;
    Stage stage_;
    std::vector<ManifestRow> rows_;
};

SceneSpec scene_spec_from(const RunConfig& config) {
    SceneSpec spec;
    spec.width = config.image_size;
    spec.height = config.image_size;
    spec.num_classes = config.num_classes;
    spec.descriptor_margin = config.descriptor_margin;
    spec.margin_bins = config.desc_bins;
    spec.source_profile.noise_sigma = config.noise_sigma;
    spec.open_profile.noise_sigma = config.noise_sigma;
    for (auto& p : spec.compound_profiles) p.noise_sigma = config.noise_sigma;
    return spec;
}

std::string eval_only_dir(const RunConfig& config) {
    return join_path(config.out_dir, "data/eval-only");
}

// ---------------------------------------------------------------------------
// synth

void stage_synth(const RunConfig& config) {
    StageRecorder rec(config, Stage::Synth);
    const SceneSpec spec = scene_spec_from(config);

    const std::string source_dir = config.effective_source_dir();
    const std::string target_dir = config.effective_target_dir();
    const std::string target_val_dir = join_path(config.out_dir, "data/target_val");
    const std::string open_dir = config.effective_open_dir();
    const std::string hidden = eval_only_dir(config);
    for (const auto& d :
         {source_dir, target_dir, target_val_dir, open_dir, join_path(hidden, "target_labels"),
          join_path(hidden, "target_val_labels"), join_path(hidden, "open_labels")}) {
        ensure_dir(d);
    }

    const auto source = generate_source(spec, config.n_source, splitmix64(config.seed ^ 0x01));
    for (std::size_t i = 0; i < source.size(); ++i) {
        char img_name[64], lab_name[64];
        std::snprintf(img_name, sizeof(img_name), "source_%04zu.png", i);
        std::snprintf(lab_name, sizeof(lab_name), "source_%04zu_label.png", i);
        const std::string img_path = join_path(source_dir, img_name);
        const std::string lab_path = join_path(source_dir, lab_name);
        write_image_png(img_path, source[i].image);
        write_label_png(lab_path, source[i].label);
        rec.output(img_path);
        rec.output(lab_path);
    }

    const CompoundTarget target =
        generate_compound_target(spec, config.k_true, config.n_target,
                                 splitmix64(config.seed ^ 0x02));
    std::string subdomain_csv = "image,subdomain\n";
    for (std::size_t i = 0; i < target.images.size(); ++i) {
        const std::string img_path = join_path(target_dir, target.names[i] + ".png");
        write_image_png(img_path, target.images[i]);
        rec.output(img_path);
        const std::string lab_path =
            join_path(join_path(hidden, "target_labels"), target.names[i] + ".png");
        write_label_png(lab_path, target.hidden_labels[i]);
        rec.output(lab_path);
        subdomain_csv +=
            target.names[i] + "," + std::to_string(target.hidden_subdomain[i] + 1) + "\n";
    }
    const std::string subdomain_path = join_path(hidden, "target_subdomains.csv");
    write_text(subdomain_path, subdomain_csv);
    rec.output(subdomain_path);

    const CompoundTarget val = generate_compound_target(spec, config.k_true, config.n_target_val,
                                                        splitmix64(config.seed ^ 0x03));
    for (std::size_t i = 0; i < val.images.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "val_%04zu.png", i);
        const std::string img_path = join_path(target_val_dir, name);
        write_image_png(img_path, val.images[i]);
        rec.output(img_path);
        const std::string lab_path = join_path(join_path(hidden, "target_val_labels"), name);
        write_label_png(lab_path, val.hidden_labels[i]);
        rec.output(lab_path);
    }

    const OpenDomain open = generate_open(spec, config.n_open, splitmix64(config.seed ^ 0x04));
    for (std::size_t i = 0; i < open.images.size(); ++i) {
        const std::string img_path = join_path(open_dir, open.names[i] + ".png");
        write_image_png(img_path, open.images[i]);
        rec.output(img_path);
        const std::string lab_path =
            join_path(join_path(hidden, "open_labels"), open.names[i] + ".png");
        write_label_png(lab_path, open.hidden_labels[i]);
        rec.output(lab_path);
    }

    rec.commit();
}

// ---------------------------------------------------------------------------
// separate

struct TargetSet {
    std::vector<std::string> names;  // file names without extension
    std::vector<Image> images;
};

TargetSet load_target_images(const RunConfig& config, StageRecorder* rec) {
    const std::string target_dir = config.effective_target_dir();
    require_artifact(target_dir, "run the synth stage first");
    TargetSet set;
    for (const std::string& name : list_files_sorted(target_dir, ".png")) {
        const std::string path = join_path(target_dir, name);
        set.images.push_back(read_image_png(path));
        set.names.push_back(fs::path(name).stem().string());
        if (rec) rec->input(path);
    }
    if (set.images.empty()) {
        throw MissingArtifactError("missing artifact: no target images in " + target_dir);
    }
    return set;
}

void stage_separate(const RunConfig& config) {
    StageRecorder rec(config, Stage::Separate);
    const TargetSet targets = load_target_images(config, &rec);
    const int n = static_cast<int>(targets.images.size());

    std::vector<StyleDescriptor> descs;
    descs.reserve(targets.images.size());
    for (const Image& img : targets.images) {
        descs.push_back(style_descriptor(img, config.desc_bins));
    }

    const int k_max = std::min(config.k_max, n - 1);
    std::vector<ScPoint> curve;
    const SubdomainPartition part =
        auto_separate(descs, config.k_min, k_max, splitmix64(config.seed ^ 0x10), &curve);

    const std::string sep_dir = join_path(config.out_dir, "separate");
    ensure_dir(sep_dir);

    std::string partition_csv = "image_path,subdomain_index\n";
    const std::string target_dir = config.effective_target_dir();
    for (std::size_t i = 0; i < targets.names.size(); ++i) {
        const std::string rel =
            fs::relative(fs::path(target_dir) / (targets.names[i] + ".png"),
                         fs::path(config.out_dir))
                .generic_string();
        partition_csv += rel + "," + std::to_string(part.assignment[i] + 1) + "\n";
    }
    const std::string partition_path = join_path(sep_dir, "partition.csv");
    write_text(partition_path, partition_csv);
    rec.output(partition_path);

    std::string curve_csv = "k,sc,sc_mean\n";
    for (const ScPoint& p : curve) {
        curve_csv += std::to_string(p.k) + "," + fmt_double(p.sc) + "," + fmt_double(p.sc_mean) +
                     "\n";
    }
    const std::string curve_path = join_path(sep_dir, "sc_curve.csv");
    write_text(curve_path, curve_csv);
    rec.output(curve_path);

    std::string desc_csv = "image,channel,bin_index,value\n";
    const char* channel_names[3] = {"l", "a", "b"};
    for (std::size_t i = 0; i < descs.size(); ++i) {
        for (int c = 0; c < 3; ++c) {
            for (int bin = 0; bin < config.desc_bins; ++bin) {
                desc_csv += targets.names[i];
                desc_csv += ',';
                desc_csv += channel_names[c];
                desc_csv += ',';
                desc_csv += std::to_string(bin);
                desc_csv += ',';
                desc_csv += fmt_double(descs[i][static_cast<std::size_t>(c) * config.desc_bins +
                                                bin]);
                desc_csv += '\n';
            }
        }
    }
    const std::string desc_path = join_path(sep_dir, "descriptors.csv");
    write_text(desc_path, desc_csv);
    rec.output(desc_path);

    rec.commit();
}

// ---------------------------------------------------------------------------
// purify

std::map<int, std::vector<std::string>> load_partition(const RunConfig& config,
                                                       StageRecorder* rec) {
    const std::string partition_path = join_path(config.out_dir, "separate/partition.csv");
    require_artifact(partition_path, "run the separate stage first");
    if (rec) rec->input(partition_path);
    std::map<int, std::vector<std::string>> by_subdomain;
    const auto rows = read_csv(partition_path);
    for (std::size_t i = 1; i < rows.size(); ++i) {  // skip header
        if (rows[i].size() != 2) throw IoError("partition.csv: malformed row");
        by_subdomain[std::stoi(rows[i][1])].push_back(rows[i][0]);
    }
    return by_subdomain;
}

void stage_purify(const RunConfig& config) {
    StageRecorder rec(config, Stage::Purify);
    const auto partition = load_partition(config, &rec);
    const std::string purify_dir = join_path(config.out_dir, "purify");

    for (const auto& [subdomain, rel_paths] : partition) {
        std::vector<Image> members;
        members.reserve(rel_paths.size());
        for (const std::string& rel : rel_paths) {
            const std::string path = join_path(config.out_dir, rel);
            require_artifact(path, "target image listed in partition.csv");
            rec.input(path);
            members.push_back(read_image_png(path));
        }
        const PurifiedSubdomain purified =
            purify_subdomain(subdomain, members, kMatchLevels, kMatchLevels);

        const std::string sub_dir =
            join_path(purify_dir, "subdomain_" + std::to_string(subdomain));
        ensure_dir(sub_dir);
        for (std::size_t i = 0; i < purified.members.size(); ++i) {
            const std::string out_path =
                join_path(sub_dir, fs::path(rel_paths[i]).filename().string());
            write_image_png(out_path, purified.members[i]);
            rec.output(out_path);
        }
        const std::string style_path =
            join_path(purify_dir, "style_" + std::to_string(subdomain) + ".csv");
        write_style_csv(style_path, purified.standard_style);
        rec.output(style_path);
    }
    rec.commit();
}

// ---------------------------------------------------------------------------
// shared loading for mix / train / distill

struct SourceSet {
    std::vector<LabeledImage> items;
    std::vector<std::string> names;
};

SourceSet load_source(const RunConfig& config, StageRecorder* rec) {
    const std::string source_dir = config.effective_source_dir();
    require_artifact(source_dir, "run the synth stage first");
    SourceSet set;
    for (const std::string& name : list_files_sorted(source_dir, ".png")) {
        if (name.find("_label") != std::string::npos) continue;
        const std::string img_path = join_path(source_dir, name);
        const std::string lab_path =
            join_path(source_dir, fs::path(name).stem().string() + "_label.png");
        require_artifact(lab_path, "source label for " + name);
        if (rec) {
            rec->input(img_path);
            rec->input(lab_path);
        }
        set.items.push_back({read_image_png(img_path), read_label_png(lab_path)});
        set.names.push_back(fs::path(name).stem().string());
    }
    if (set.items.empty()) {
        throw MissingArtifactError("missing artifact: no source images in " + source_dir);
    }
    return set;
}

std::vector<PurifiedSubdomain> load_purified(const RunConfig& config, StageRecorder* rec) {
    const std::string purify_dir = join_path(config.out_dir, "purify");
    require_artifact(purify_dir, "run the purify stage first");
    std::vector<PurifiedSubdomain> subdomains;
    for (int m = 1;; ++m) {
        const std::string sub_dir = join_path(purify_dir, "subdomain_" + std::to_string(m));
        if (!fs::exists(sub_dir)) break;
        PurifiedSubdomain sub;
        sub.index = m;
        const std::string style_path =
            join_path(purify_dir, "style_" + std::to_string(m) + ".csv");
        require_artifact(style_path, "standard style for subdomain " + std::to_string(m));
        if (rec) rec->input(style_path);
        sub.standard_style = read_style_csv(style_path);
        for (const std::string& name : list_files_sorted(sub_dir, ".png")) {
            const std::string path = join_path(sub_dir, name);
            if (rec) rec->input(path);
            sub.members.push_back(read_image_png(path));
        }
        if (sub.members.empty()) {
            throw MissingArtifactError("missing artifact: empty purified subdomain " + sub_dir);
        }
        subdomains.push_back(std::move(sub));
    }
    if (subdomains.empty()) {
        throw MissingArtifactError("missing artifact: no purified subdomains under " + purify_dir);
    }
    return subdomains;
}

// ---------------------------------------------------------------------------
// mix (audit stage: materializes sample mixes as image/label pairs)

void stage_mix(const RunConfig& config) {
    StageRecorder rec(config, Stage::Mix);
    const SourceSet source = load_source(config, &rec);
    const auto subdomains = load_purified(config, &rec);

    const std::string mix_dir = join_path(config.out_dir, "mix");
    ensure_dir(mix_dir);

    Architecture arch{3, {16, 16}, config.num_classes, 3};
    std::string manifest = "file,direction,subdomain,source_id,target_id,seed\n";
    for (const PurifiedSubdomain& sub : subdomains) {
        // Pseudo-labels come from a freshly initialized momentum network, as at
        // the first training iteration.
        const std::uint64_t net_seed = splitmix64(config.seed ^ (0x20ULL + sub.index));
        const NetworkParams momentum_net = init_network(arch, net_seed);
        RngEngine rng = make_stream(config.seed, 0x6d6978ULL, sub.index);  // "mix"

        for (int i = 0; i < config.mix_samples; ++i) {
            const std::uint64_t sample_seed = rng();
            RngEngine sample_rng(sample_seed);
            const int si = static_cast<int>(bounded(sample_rng, source.items.size()));
            const int ti = static_cast<int>(bounded(sample_rng, sub.members.size()));
            const LabeledImage& src = source.items[si];
            const Image& tgt = sub.members[ti];
            const LabelMap pseudo = pseudo_label(momentum_net, tgt);

            const BinaryMask psi = classmix_mask(src.label, sample_rng);
            MixedSample s2t =
                mix_s2t(src.image, src.label, tgt, pseudo, psi, sub.standard_style);
            const StyleTriple source_style =
                mean_histograms(std::span<const Image>(&src.image, 1), kMatchLevels);
            const BinaryMask phi = cutmix_mask(src.image.height, src.image.width, sample_rng);
            MixedSample t2s = mix_t2s(src.image, src.label, tgt, pseudo, phi, source_style);

            for (const MixedSample* sample : {&s2t, &t2s}) {
                const char* dir_tag =
                    sample->direction == MixDirection::SourceToTarget ? "s2t" : "t2s";
                char base[64];
                std::snprintf(base, sizeof(base), "subdomain_%d_%s_%02d", sub.index, dir_tag, i);
                const std::string img_path = join_path(mix_dir, std::string(base) + ".png");
                const std::string lab_path =
                    join_path(mix_dir, std::string(base) + "_label.png");
                write_image_png(img_path, sample->image);
                write_label_png(lab_path, sample->label);
                rec.output(img_path);
                rec.output(lab_path);
                manifest += std::string(base) + ".png," + dir_tag + "," +
                            std::to_string(sub.index) + "," + source.names[si] + "," +
                            "member_" + std::to_string(ti) + "," + std::to_string(sample_seed) +
                            "\n";
            }
        }
    }
    const std::string manifest_path = join_path(mix_dir, "manifest.csv");
    write_text(manifest_path, manifest);
    rec.output(manifest_path);
    rec.commit();
}

// ---------------------------------------------------------------------------
// train

std::string loss_csv(const std::vector<LossRow>& rows) {
    std::string csv = "iter,lr,loss_source,loss_s2t,loss_t2s,total\n";
    for (const LossRow& r : rows) {
        csv += std::to_string(r.iter) + "," + fmt_double(r.lr) + "," + fmt_double(r.loss_source) +
               "," + fmt_double(r.loss_s2t) + "," + fmt_double(r.loss_t2s) + "," +
               fmt_double(r.total) + "\n";
    }
    return csv;
}

void stage_train(const RunConfig& config) {
    StageRecorder rec(config, Stage::Train);
    const SourceSet source = load_source(config, &rec);
    const auto subdomains = load_purified(config, &rec);

    TrainConfig train_cfg = config.to_train_config();
    std::vector<std::vector<LossRow>> logs;
    const TeacherEnsemble ensemble =
        train_all_teachers(source.items, subdomains, train_cfg, &logs);

    const std::string train_dir = join_path(config.out_dir, "train");
    ensure_dir(train_dir);
    for (std::size_t i = 0; i < ensemble.size(); ++i) {
        const TeacherModel& teacher = ensemble[i];
        const std::string tag = std::to_string(teacher.subdomain_index);
        const std::string rng_note =
            "master_seed=" + std::to_string(config.seed) + " subdomain=" + tag;

        Checkpoint g_ckpt;
        g_ckpt.params = teacher.g;
        g_ckpt.opt.lr0 = train_cfg.lr0;
        g_ckpt.opt.momentum = train_cfg.momentum;
        g_ckpt.opt.weight_decay = train_cfg.weight_decay;
        g_ckpt.opt.poly_exponent = train_cfg.poly_exponent;
        g_ckpt.opt.max_iter = train_cfg.max_iter;
        g_ckpt.opt.iter = train_cfg.max_iter;
        g_ckpt.rng_state = rng_note;
        const std::string g_path = join_path(train_dir, "teacher_" + tag + ".ckpt");
        save_checkpoint(g_path, g_ckpt);
        rec.output(g_path);

        Checkpoint m_ckpt = g_ckpt;
        m_ckpt.params = teacher.m;
        const std::string m_path = join_path(train_dir, "momentum_" + tag + ".ckpt");
        save_checkpoint(m_path, m_ckpt);
        rec.output(m_path);

        const std::string log_path = join_path(train_dir, "loss_teacher_" + tag + ".csv");
        write_text(log_path, loss_csv(logs[i]));
        rec.output(log_path);
    }
    rec.commit();
}

// ---------------------------------------------------------------------------
// distill

TeacherEnsemble load_ensemble(const RunConfig& config, StageRecorder* rec) {
    const std::string train_dir = join_path(config.out_dir, "train");
    require_artifact(train_dir, "run the train stage first");
    TeacherEnsemble ensemble;
    for (int m = 1;; ++m) {
        const std::string g_path = join_path(train_dir, "teacher_" + std::to_string(m) + ".ckpt");
        if (!fs::exists(g_path)) break;
        const std::string m_path =
            join_path(train_dir, "momentum_" + std::to_string(m) + ".ckpt");
        const std::string style_path =
            join_path(config.out_dir, "purify/style_" + std::to_string(m) + ".csv");
        require_artifact(m_path, "momentum checkpoint for teacher " + std::to_string(m));
        require_artifact(style_path, "standard style for teacher " + std::to_string(m));
        if (rec) {
            rec->input(g_path);
            rec->input(m_path);
            rec->input(style_path);
        }
        TeacherModel teacher;
        teacher.subdomain_index = m;
        teacher.g = load_checkpoint(g_path).params;
        teacher.m = load_checkpoint(m_path).params;
        teacher.style = read_style_csv(style_path);
        ensemble.push_back(std::move(teacher));
    }
    if (ensemble.empty()) {
        throw MissingArtifactError("missing artifact: no teacher checkpoints under " + train_dir);
    }
    return ensemble;
}

void stage_distill(const RunConfig& config) {
    StageRecorder rec(config, Stage::Distill);
    const TeacherEnsemble ensemble = load_ensemble(config, &rec);
    const TargetSet targets = load_target_images(config, &rec);

    TrainConfig train_cfg = config.to_train_config();
    std::vector<LossRow> log;
    const NetworkParams student =
        distill_student(ensemble, targets.images, train_cfg, &log);

    const std::string distill_dir = join_path(config.out_dir, "distill");
    ensure_dir(distill_dir);
    Checkpoint ckpt;
    ckpt.params = student;
    ckpt.opt.lr0 = train_cfg.lr0;
    ckpt.opt.momentum = train_cfg.momentum;
    ckpt.opt.weight_decay = train_cfg.weight_decay;
    ckpt.opt.poly_exponent = train_cfg.poly_exponent;
    ckpt.opt.max_iter = train_cfg.distill_iters;
    ckpt.opt.iter = train_cfg.distill_iters;
    ckpt.rng_state = "master_seed=" + std::to_string(config.seed) + " role=student";
    const std::string ckpt_path = join_path(distill_dir, "student.ckpt");
    save_checkpoint(ckpt_path, ckpt);
    rec.output(ckpt_path);

    std::string csv = "iter,lr,kl_loss\n";
    for (const LossRow& r : log) {
        csv += std::to_string(r.iter) + "," + fmt_double(r.lr) + "," + fmt_double(r.total) + "\n";
    }
    const std::string log_path = join_path(distill_dir, "loss_student.csv");
    write_text(log_path, csv);
    rec.output(log_path);
    rec.commit();
}

// ---------------------------------------------------------------------------
// update

void stage_update(const RunConfig& config) {
    StageRecorder rec(config, Stage::Update);
    const std::string student_path = join_path(config.out_dir, "distill/student.ckpt");
    require_artifact(student_path, "run the distill stage first");
    rec.input(student_path);
    const NetworkParams student = load_checkpoint(student_path).params;

    std::vector<StyleTriple> styles;
    for (int m = 1;; ++m) {
        const std::string style_path =
            join_path(config.out_dir, "purify/style_" + std::to_string(m) + ".csv");
        if (!fs::exists(style_path)) break;
        rec.input(style_path);
        styles.push_back(read_style_csv(style_path));
    }
    if (styles.empty()) {
        throw MissingArtifactError("missing artifact: no subdomain styles under " +
                                   join_path(config.out_dir, "purify"));
    }

    const std::string open_dir = config.effective_open_dir();
    require_artifact(open_dir, "run the synth stage first");
    std::vector<Image> open_images;
    for (const std::string& name : list_files_sorted(open_dir, ".png")) {
        const std::string path = join_path(open_dir, name);
        rec.input(path);
        open_images.push_back(read_image_png(path));
    }
    if (open_images.empty()) {
        throw MissingArtifactError("missing artifact: no open images in " + open_dir);
    }

    TrainConfig train_cfg = config.to_train_config();
    std::vector<UpdateLossRow> log;
    const NetworkParams updated =
        online_update(student, open_images, styles, train_cfg, &log);

    const std::string update_dir = join_path(config.out_dir, "update");
    ensure_dir(update_dir);
    Checkpoint ckpt;
    ckpt.params = updated;
    ckpt.opt.lr0 = train_cfg.lr0 * train_cfg.update_lr_scale;
    ckpt.opt.momentum = train_cfg.momentum;
    ckpt.opt.weight_decay = 0.0;
    ckpt.opt.poly_exponent = 0.0;
    ckpt.opt.max_iter = 1;
    ckpt.opt.iter = 0;
    ckpt.rng_state = "master_seed=" + std::to_string(config.seed) + " role=student_updated";
    const std::string ckpt_path = join_path(update_dir, "student_updated.ckpt");
    save_checkpoint(ckpt_path, ckpt);
    rec.output(ckpt_path);

    std::string csv = "batch,step,loss\n";
    for (const UpdateLossRow& r : log) {
        csv += std::to_string(r.batch) + "," + std::to_string(r.step) + "," +
               fmt_double(r.loss) + "\n";
    }
    const std::string log_path = join_path(update_dir, "consistency_loss.csv");
    write_text(log_path, csv);
    rec.output(log_path);
    rec.commit();
}

// ---------------------------------------------------------------------------
// eval

std::vector<LabeledImage> load_labeled(const std::string& image_dir, const std::string& label_dir,
                                       StageRecorder* rec) {
    require_artifact(image_dir, "run the synth stage first");
    require_artifact(label_dir, "hidden labels from the synth stage");
    std::vector<LabeledImage> items;
    for (const std::string& name : list_files_sorted(image_dir, ".png")) {
        const std::string img_path = join_path(image_dir, name);
        const std::string lab_path = join_path(label_dir, name);
        require_artifact(lab_path, "label for " + name);
        if (rec) {
            rec->input(img_path);
            rec->input(lab_path);
        }
        items.push_back({read_image_png(img_path), read_label_png(lab_path)});
    }
    if (items.empty()) {
        throw MissingArtifactError("missing artifact: no labeled images in " + image_dir);
    }
    return items;
}

std::string report_csv(const EvalReport& report) {
    std::string csv = "class,iou\n";
    for (int c = 0; c < report.num_classes; ++c) {
        if (!report.defined[c]) continue;
        csv += std::to_string(c) + "," + fmt_double(report.iou[c]) + "\n";
    }
    csv += "mean," + fmt_double(report.miou) + "\n";
    return csv;
}

void stage_eval(const RunConfig& config) {
    StageRecorder rec(config, Stage::Eval);
    const std::string student_path = join_path(config.out_dir, "distill/student.ckpt");
    require_artifact(student_path, "run the distill stage first");
    rec.input(student_path);
    const NetworkParams student = load_checkpoint(student_path).params;

    const std::string hidden = eval_only_dir(config);
    const auto compound_val = load_labeled(join_path(config.out_dir, "data/target_val"),
                                           join_path(hidden, "target_val_labels"), &rec);
    const auto open_set =
        load_labeled(config.effective_open_dir(), join_path(hidden, "open_labels"), &rec);

    const std::string eval_dir = join_path(config.out_dir, "eval");
    ensure_dir(eval_dir);

    EvalReport compound = evaluate_miou(student, compound_val, config.num_classes);
    compound.domain_tag = "compound";
    EvalReport open_report = evaluate_miou(student, open_set, config.num_classes);
    open_report.domain_tag = "open";

    const std::string compound_path = join_path(eval_dir, "report_compound.csv");
    write_text(compound_path, report_csv(compound));
    rec.output(compound_path);
    const std::string open_path = join_path(eval_dir, "report_open.csv");
    write_text(open_path, report_csv(open_report));
    rec.output(open_path);

    std::string summary = "report,miou\ncompound," + fmt_double(compound.miou) + "\nopen," +
                          fmt_double(open_report.miou) + "\n";

    const std::string updated_path = join_path(config.out_dir, "update/student_updated.ckpt");
    if (fs::exists(updated_path)) {
        rec.input(updated_path);
        const NetworkParams updated = load_checkpoint(updated_path).params;
        EvalReport compound_u = evaluate_miou(updated, compound_val, config.num_classes);
        EvalReport open_u = evaluate_miou(updated, open_set, config.num_classes);
        const std::string cu_path = join_path(eval_dir, "report_compound_updated.csv");
        write_text(cu_path, report_csv(compound_u));
        rec.output(cu_path);
        const std::string ou_path = join_path(eval_dir, "report_open_updated.csv");
        write_text(ou_path, report_csv(open_u));
        rec.output(ou_path);
        summary += "compound_updated," + fmt_double(compound_u.miou) + "\n";
        summary += "open_updated," + fmt_double(open_u.miou) + "\n";
    }

    const std::string summary_path = join_path(eval_dir, "summary.csv");
    write_text(summary_path, summary);
    rec.output(summary_path);
    rec.commit();
}

}  // namespace

const char* stage_name(Stage stage) {
    switch (stage) {
        case Stage::Synth: return "synth";
        case Stage::Separate: return "separate";
        case Stage::Purify: return "purify";
        case Stage::Mix: return "mix";
        case Stage::Train: return "train";
        case Stage::Distill: return "distill";
        case Stage::Update: return "update";
        case Stage::Eval: return "eval";
    }
    return "?";
}

std::optional<Stage> stage_from_name(const std::string& name) {
    for (Stage s : kPipelineOrder) {
        if (name == stage_name(s)) return s;
    }
    return std::nullopt;
}

std::uint64_t fnv1a64(const void* data, std::size_t size) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string digest_hex(std::uint64_t digest) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(digest));
    return buf;
}

std::string file_digest(const std::string& path) {
    const std::string bytes = read_text(path);
    return digest_hex(fnv1a64(bytes.data(), bytes.size()));
}

std::vector<std::string> list_files_sorted(const std::string& dir, const std::string& ext) {
    std::vector<std::string> names;
    if (!fs::exists(dir)) return names;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        if (!ext.empty() && entry.path().extension() != ext) continue;
        names.push_back(entry.path().filename().string());
    }
    std::sort(names.begin(), names.end());
    return names;
}

std::vector<ManifestRow> load_manifest(const std::string& out_dir) {
    const std::string path = join_path(out_dir, "manifest.csv");
    std::vector<ManifestRow> rows;
    if (!fs::exists(path)) return rows;
    const auto cells = read_csv(path);
    for (std::size_t i = 1; i < cells.size(); ++i) {
        if (cells[i].size() != 5) throw IoError("manifest.csv: malformed row");
        rows.push_back({cells[i][0], cells[i][1], cells[i][2], cells[i][3],
                        std::stoull(cells[i][4])});
    }
    return rows;
}

void save_manifest(const std::string& out_dir, const std::vector<ManifestRow>& rows) {
    std::string csv = "stage,role,path,digest,seed\n";
    for (const ManifestRow& r : rows) {
        csv += r.stage + "," + r.role + "," + r.path + "," + r.digest + "," +
               std::to_string(r.seed) + "\n";
    }
    write_text(join_path(out_dir, "manifest.csv"), csv);
}

OutputDirLock::OutputDirLock(const std::string& out_dir) {
    ensure_dir(out_dir);
    path_ = join_path(out_dir, ".lock");
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f) {
        throw IoError("output dir is locked by another process (" + path_ +
                      " exists); remove the stale lock if no run is active");
    }
    std::fclose(f);
}

OutputDirLock::~OutputDirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
}

void write_style_csv(const std::string& path, const StyleTriple& style) {
    std::string csv = "channel,bin_index,value\n";
    const char* names[3] = {"l", "a", "b"};
    for (int c = 0; c < 3; ++c) {
        const Histogram& h = style.channel(static_cast<LabChannel>(c));
        for (int bin = 0; bin < h.bins(); ++bin) {
            csv += std::string(names[c]) + "," + std::to_string(bin) + "," +
                   fmt_double(h.counts[bin]) + "\n";
        }
    }
    write_text(path, csv);
}

StyleTriple read_style_csv(const std::string& path) {
    const auto rows = read_csv(path);
    std::vector<double> counts[3];
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() != 3) throw IoError("style csv: malformed row in " + path);
        const std::string& ch = rows[i][0];
        const int c = ch == "l" ? 0 : ch == "a" ? 1 : ch == "b" ? 2 : -1;
        if (c < 0) throw IoError("style csv: unknown channel in " + path);
        counts[c].push_back(std::stod(rows[i][2]));
    }
    StyleTriple style;
    style.l = {LabChannel::L, counts[0]};
    style.a = {LabChannel::A, counts[1]};
    style.b = {LabChannel::B, counts[2]};
    if (style.l.bins() == 0 || style.l.bins() != style.a.bins() ||
        style.l.bins() != style.b.bins()) {
        throw IoError("style csv: inconsistent channel bins in " + path);
    }
    return style;
}

void run_stage(const RunConfig& config, Stage stage) {
    switch (stage) {
        case Stage::Synth: stage_synth(config); break;
        case Stage::Separate: stage_separate(config); break;
        case Stage::Purify: stage_purify(config); break;
        case Stage::Mix: stage_mix(config); break;
        case Stage::Train: stage_train(config); break;
        case Stage::Distill: stage_distill(config); break;
        case Stage::Update: stage_update(config); break;
        case Stage::Eval: stage_eval(config); break;
    }
}

void run_stages(const RunConfig& config, const std::vector<Stage>& stages) {
    OutputDirLock lock(config.out_dir);
    for (Stage stage : stages) run_stage(config, stage);
}

std::vector<Stage> enabled_stages(const RunConfig& config) {
    std::vector<Stage> stages;
    const bool flags[] = {config.stage_synth, config.stage_separate, config.stage_purify,
                          config.stage_mix,   config.stage_train,    config.stage_distill,
                          config.stage_update, config.stage_eval};
    for (std::size_t i = 0; i < std::size(kPipelineOrder); ++i) {
        if (flags[i]) stages.push_back(kPipelineOrder[i]);
    }
    return stages;
}

}  // namespace ocda
