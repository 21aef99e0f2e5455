#include "ocda/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "ocda/errors.hpp"

namespace ocda {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

struct Field {
    std::function<void(RunConfig&, const std::string&, int line)> set;
    std::function<std::string(const RunConfig&)> get;
};

[[noreturn]] void bad_value(const std::string& key, const std::string& value, int line) {
    throw ParseError("config line " + std::to_string(line) + ": invalid value '" + value +
                     "' for " + key);
}

double parse_double(const std::string& key, const std::string& v, int line) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) bad_value(key, v, line);
        return d;
    } catch (const ParseError&) {
        throw;
    } catch (...) {
        bad_value(key, v, line);
    }
}

std::int64_t parse_int(const std::string& key, const std::string& v, int line) {
    try {
        std::size_t pos = 0;
        const std::int64_t i = std::stoll(v, &pos);
        if (pos != v.size()) bad_value(key, v, line);
        return i;
    } catch (const ParseError&) {
        throw;
    } catch (...) {
        bad_value(key, v, line);
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v, int line) {
    try {
        std::size_t pos = 0;
        const std::uint64_t i = std::stoull(v, &pos);
        if (pos != v.size()) bad_value(key, v, line);
        return i;
    } catch (const ParseError&) {
        throw;
    } catch (...) {
        bad_value(key, v, line);
    }
}

bool parse_bool(const std::string& key, const std::string& v, int line) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    bad_value(key, v, line);
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

#define STR_FIELD(member)                                                          \
    Field{[](RunConfig& c, const std::string& v, int) { c.member = v; },           \
          [](const RunConfig& c) { return c.member; }}
#define DOUBLE_FIELD(member)                                                                     \
    Field{[](RunConfig& c, const std::string& v, int line) {                                    \
              c.member = parse_double(#member, v, line);                                         \
          },                                                                                     \
          [](const RunConfig& c) { return fmt_double(c.member); }}
#define INT_FIELD(member)                                                                        \
    Field{[](RunConfig& c, const std::string& v, int line) {                                    \
              c.member = static_cast<int>(parse_int(#member, v, line));                          \
          },                                                                                     \
          [](const RunConfig& c) { return std::to_string(c.member); }}
#define INT64_FIELD(member)                                                                      \
    Field{[](RunConfig& c, const std::string& v, int line) {                                    \
              c.member = parse_int(#member, v, line);                                            \
          },                                                                                     \
          [](const RunConfig& c) { return std::to_string(c.member); }}
#define BOOL_FIELD(member)                                                                       \
    Field{[](RunConfig& c, const std::string& v, int line) {                                    \
              c.member = parse_bool(#member, v, line);                                           \
          },                                                                                     \
          [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }}

// Ordered section -> key -> field table; also drives serialization.
const std::vector<std::pair<std::string, std::vector<std::pair<std::string, Field>>>>&
schema() {
    static const std::vector<std::pair<std::string, std::vector<std::pair<std::string, Field>>>>
        s = {
            {"run",
             {
                 {"seed", Field{[](RunConfig& c, const std::string& v,
                                   int line) { c.seed = parse_u64("seed", v, line); },
                                [](const RunConfig& c) { return std::to_string(c.seed); }}},
                 {"out_dir", STR_FIELD(out_dir)},
             }},
            {"paths",
             {
                 {"source_dir", STR_FIELD(source_dir)},
                 {"target_dir", STR_FIELD(target_dir)},
                 {"open_dir", STR_FIELD(open_dir)},
             }},
            {"synth",
             {
                 {"image_size", INT_FIELD(image_size)},
                 {"classes", INT_FIELD(num_classes)},
                 {"n_source", INT_FIELD(n_source)},
                 {"n_target", INT_FIELD(n_target)},
                 {"n_target_val", INT_FIELD(n_target_val)},
                 {"n_open", INT_FIELD(n_open)},
                 {"k_true", INT_FIELD(k_true)},
                 {"descriptor_margin", DOUBLE_FIELD(descriptor_margin)},
                 {"noise_sigma", DOUBLE_FIELD(noise_sigma)},
             }},
            {"separate",
             {
                 {"bins", INT_FIELD(desc_bins)},
                 {"k_min", INT_FIELD(k_min)},
                 {"k_max", INT_FIELD(k_max)},
             }},
            {"train",
             {
                 {"alpha", DOUBLE_FIELD(alpha)},
                 {"beta", DOUBLE_FIELD(beta)},
                 {"lambda", DOUBLE_FIELD(lambda)},
                 {"lr0", DOUBLE_FIELD(lr0)},
                 {"momentum", DOUBLE_FIELD(momentum)},
                 {"weight_decay", DOUBLE_FIELD(weight_decay)},
                 {"poly_exponent", DOUBLE_FIELD(poly_exponent)},
                 {"max_iter", INT64_FIELD(max_iter)},
                 {"batch_size", INT_FIELD(batch_size)},
                 {"augment", BOOL_FIELD(augment)},
                 {"parallel_teachers", BOOL_FIELD(parallel_teachers)},
             }},
            {"distill",
             {
                 {"iters", INT64_FIELD(distill_iters)},
                 {"init_from_teacher", BOOL_FIELD(init_from_teacher)},
             }},
            {"update",
             {
                 {"steps", INT_FIELD(update_steps)},
                 {"lr_scale", DOUBLE_FIELD(update_lr_scale)},
                 {"batch", INT_FIELD(update_batch)},
                 {"passes", INT_FIELD(update_passes)},
             }},
            {"fusion",
             {
                 {"mode", Field{[](RunConfig& c, const std::string& v, int line) {
                                    if (v == "verbatim") {
                                        c.fusion = FusionMode::Verbatim;
                                    } else if (v == "negentropy") {
                                        c.fusion = FusionMode::Negentropy;
                                    } else {
                                        bad_value("fusion.mode", v, line);
                                    }
                                },
                                [](const RunConfig& c) {
                                    return std::string(c.fusion == FusionMode::Verbatim
                                                           ? "verbatim"
                                                           : "negentropy");
                                }}},
             }},
            {"mix",
             {
                 {"samples", INT_FIELD(mix_samples)},
             }},
            {"stages",
             {
                 {"synth", BOOL_FIELD(stage_synth)},
                 {"separate", BOOL_FIELD(stage_separate)},
                 {"purify", BOOL_FIELD(stage_purify)},
                 {"mix", BOOL_FIELD(stage_mix)},
                 {"train", BOOL_FIELD(stage_train)},
                 {"distill", BOOL_FIELD(stage_distill)},
                 {"update", BOOL_FIELD(stage_update)},
                 {"eval", BOOL_FIELD(stage_eval)},
             }},
        };
    return s;
}

#undef STR_FIELD
#undef DOUBLE_FIELD
#undef INT_FIELD
#undef INT64_FIELD
#undef BOOL_FIELD

const Field* find_field(const std::string& section, const std::string& key) {
    for (const auto& [sec, fields] : schema()) {
        if (sec != section) continue;
        for (const auto& [k, f] : fields) {
            if (k == key) return &f;
        }
        return nullptr;
    }
    return nullptr;
}

bool section_exists(const std::string& section) {
    for (const auto& [sec, fields] : schema()) {
        if (sec == section) return true;
    }
    return false;
}

void check_range(bool ok, const std::string& field, const std::string& bound) {
    if (!ok) throw ValidationError("config field " + field + " " + bound);
}

}  // namespace

TrainConfig RunConfig::to_train_config() const {
    TrainConfig t;
    t.alpha = alpha;
    t.beta = beta;
    t.lambda = lambda;
    t.lr0 = lr0;
    t.momentum = momentum;
    t.weight_decay = weight_decay;
    t.poly_exponent = poly_exponent;
    t.max_iter = max_iter;
    t.batch_size = batch_size;
    t.seed = seed;
    t.desc_bins = desc_bins;
    t.augment_enabled = augment;
    t.fusion = fusion;
    t.distill_iters = distill_iters;
    t.init_student_from_teacher = init_from_teacher;
    t.update_steps = update_steps;
    t.update_lr_scale = update_lr_scale;
    t.update_batch = update_batch;
    t.update_passes = update_passes;
    t.parallel_teachers = parallel_teachers;
    t.arch.num_classes = num_classes;
    return t;
}

std::string RunConfig::effective_source_dir() const {
    return source_dir.empty() ? out_dir + "/data/source" : source_dir;
}
std::string RunConfig::effective_target_dir() const {
    return target_dir.empty() ? out_dir + "/data/target" : target_dir;
}
std::string RunConfig::effective_open_dir() const {
    return open_dir.empty() ? out_dir + "/data/open" : open_dir;
}

void validate_config(const RunConfig& c) {
    check_range(c.alpha >= 0.0, "train.alpha", "must be >= 0");
    check_range(c.beta >= 0.0, "train.beta", "must be >= 0");
    check_range(c.lambda >= 0.0 && c.lambda <= 1.0, "train.lambda", "must lie in [0,1]");
    check_range(c.lr0 > 0.0, "train.lr0", "must be > 0");
    check_range(c.momentum >= 0.0 && c.momentum < 1.0, "train.momentum", "must lie in [0,1)");
    check_range(c.weight_decay >= 0.0, "train.weight_decay", "must be >= 0");
    check_range(c.poly_exponent >= 0.0, "train.poly_exponent", "must be >= 0");
    check_range(c.max_iter >= 1, "train.max_iter", "must be >= 1");
    check_range(c.batch_size >= 1, "train.batch_size", "must be >= 1");
    check_range(c.desc_bins >= 2, "separate.bins", "must be >= 2");
    check_range(c.k_min >= 2, "separate.k_min", "must be >= 2");
    check_range(c.k_max >= c.k_min, "separate.k_max", "must be >= k_min");
    check_range(c.image_size >= 16, "synth.image_size", "must be >= 16");
    check_range(c.num_classes >= 2 && c.num_classes <= 8, "synth.classes",
                "must lie in [2,8]");
    check_range(c.n_source >= 1, "synth.n_source", "must be >= 1");
    check_range(c.n_target >= 2, "synth.n_target", "must be >= 2");
    check_range(c.n_target_val >= 1, "synth.n_target_val", "must be >= 1");
    check_range(c.n_open >= 1, "synth.n_open", "must be >= 1");
    check_range(c.k_true >= 2 && c.k_true <= 6, "synth.k_true", "must lie in [2,6]");
    check_range(c.descriptor_margin > 0.0, "synth.descriptor_margin", "must be > 0");
    check_range(c.noise_sigma >= 0.0, "synth.noise_sigma", "must be >= 0");
    check_range(c.distill_iters >= 1, "distill.iters", "must be >= 1");
    check_range(c.update_steps >= 1, "update.steps", "must be >= 1");
    check_range(c.update_lr_scale > 0.0, "update.lr_scale", "must be > 0");
    check_range(c.update_batch >= 1, "update.batch", "must be >= 1");
    check_range(c.update_passes >= 1, "update.passes", "must be >= 1");
    check_range(c.mix_samples >= 1, "mix.samples", "must be >= 1");
}

RunConfig parse_config_text(const std::string& text) {
    RunConfig config;
    std::istringstream is(text);
    std::string raw;
    std::string section;
    int line_no = 0;
    while (std::getline(is, raw)) {
        ++line_no;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ParseError("config line " + std::to_string(line_no) +
                                 ": malformed section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            if (!section_exists(section)) {
                throw ParseError("config line " + std::to_string(line_no) +
                                 ": unknown section [" + section + "]");
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError("config line " + std::to_string(line_no) +
                             ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty()) {
            throw ParseError("config line " + std::to_string(line_no) + ": key '" + key +
                             "' outside any [section]");
        }
        const Field* field = find_field(section, key);
        if (!field) {
            throw ParseError("config line " + std::to_string(line_no) + ": unknown key '" +
                             section + "." + key + "'");
        }
        field->set(config, value, line_no);
    }
    validate_config(config);
    return config;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ParseError("config: cannot open " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str());
}

std::string serialize_config(const RunConfig& config) {
    std::ostringstream os;
    bool first = true;
    for (const auto& [section, fields] : schema()) {
        if (!first) os << "\n";
        first = false;
        os << "[" << section << "]\n";
        for (const auto& [key, field] : fields) {
            os << key << " = " << field.get(config) << "\n";
        }
    }
    return os.str();
}

void write_config_file(const std::string& path, const RunConfig& config) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("config: cannot open for write " + path);
    os << serialize_config(config);
    if (!os) throw IoError("config: write failed " + path);
}

}  // namespace ocda
