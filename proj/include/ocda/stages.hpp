#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ocda/color_lab.hpp"
#include "ocda/config.hpp"

namespace ocda {

enum class Stage { Synth, Separate, Purify, Mix, Train, Distill, Update, Eval };

const char* stage_name(Stage stage);
std::optional<Stage> stage_from_name(const std::string& name);

/// FNV-1a 64-bit content digest, printed as 16 hex digits.
std::uint64_t fnv1a64(const void* data, std::size_t size);
std::string digest_hex(std::uint64_t digest);
std::string file_digest(const std::string& path);

/// Sorted relative filenames in `dir` with the given extension.
std::vector<std::string> list_files_sorted(const std::string& dir, const std::string& ext);

struct ManifestRow {
    std::string stage;
    std::string role;  // "input" | "output"
    std::string path;  // relative to the output dir
    std::string digest;
    std::uint64_t seed = 0;
};

std::vector<ManifestRow> load_manifest(const std::string& out_dir);
void save_manifest(const std::string& out_dir, const std::vector<ManifestRow>& rows);

/// Exclusive ownership of an output directory via a lock file.
class OutputDirLock {
public:
    explicit OutputDirLock(const std::string& out_dir);
    ~OutputDirLock();
    OutputDirLock(const OutputDirLock&) = delete;
    OutputDirLock& operator=(const OutputDirLock&) = delete;

private:
    std::string path_;
};

void write_style_csv(const std::string& path, const StyleTriple& style);
StyleTriple read_style_csv(const std::string& path);

/// Runs one stage; assumes the output-dir lock is already held.
void run_stage(const RunConfig& config, Stage stage);

/// Locks the output dir, then runs the stages in pipeline order.
void run_stages(const RunConfig& config, const std::vector<Stage>& stages);

/// The stages enabled in the config, in pipeline order (`all` behavior).
std::vector<Stage> enabled_stages(const RunConfig& config);

}  // namespace ocda
