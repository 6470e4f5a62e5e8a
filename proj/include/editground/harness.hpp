#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "editground/bundle.hpp"
#include "editground/metrics.hpp"
#include "editground/semantic_localization.hpp"
#include "editground/separability.hpp"

namespace editground {

/// "remove " + trimmed expression.
std::string build_instruction(const std::string& expression);

/// Default feature block for known model families (20 of 32 blocks, 40 of 57 blocks).
std::optional<int> default_feature_block(const std::string& model_family);

struct RunConfig {
    SegmentConfig segment;
    int attention_timestep = 0;  // recorded; bundles carrying another timestep are rejected
    std::size_t workers = 0;     // 0: hardware concurrency; never echoed (results do not depend on it)

    /// Everything that affects results, as a JSON object string (stable key order).
    std::string echo_json() const;
    static RunConfig from_json(const std::string& text);
};

/// Runs fn(0..n-1) on up to `workers` threads. Each index is handled exactly once.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

struct SampleOutcome {
    std::string sample_id;
    std::string instruction;
    std::optional<IoURecord> record;  // absent when the sample failed or has no ground truth
    std::string error;                // non-empty on failure
    std::size_t zero_feature_rows = 0;
};

struct EvalReport {
    std::string config_json;
    std::vector<SampleOutcome> samples;
    std::optional<IoUAggregate> aggregate;
    std::size_t failures = 0;

    bool partial_failure() const { return failures > 0; }
};

struct EvalOptions {
    std::optional<std::filesystem::path> mask_dir;  // write <sample_id>.pgm predictions here
};

/// Segments and scores every manifest entry. Per-sample failures are recorded,
/// not thrown; throws only if no sample could be processed at all.
EvalReport run_eval(const std::vector<SampleManifest>& manifest, const RunConfig& config, const EvalOptions& options = {});

std::string report_json(const EvalReport& report);
std::string report_csv(const EvalReport& report);
std::string report_table(const EvalReport& report);
void write_eval_report(const EvalReport& report, const std::filesystem::path& out_dir);

/// Separability records for every (sample, timestep, block) cell, in sample-major order.
std::vector<SeparabilityRecord> run_separability(const std::vector<SampleManifest>& manifest,
                                                 const std::vector<int>& timesteps, const std::vector<int>& blocks,
                                                 std::size_t workers = 0);

struct SweepCell {
    int timestep = 0;
    int block = 0;
    bool present = false;
    std::optional<IoUAggregate> segmentation;
    std::size_t failures = 0;
    BoxStats separability;
};

struct SweepReport {
    std::string config_json;
    std::vector<SweepCell> cells;  // timestep-major, in the order given
    std::vector<SeparabilityRecord> records;
};

SweepReport run_sweep(const std::vector<SampleManifest>& manifest, const std::vector<int>& timesteps,
                      const std::vector<int>& blocks, const RunConfig& config);

std::string sweep_csv(const SweepReport& report);
std::string separability_csv(const std::vector<SeparabilityRecord>& records);
std::string separability_summary_csv(const std::vector<SeparabilityRecord>& records);

}  // namespace editground
