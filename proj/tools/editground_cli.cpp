// editground - command-line front end for attention/feature grounding dumps.
//
// Exit codes: 0 success, 1 fatal configuration or I/O error, 2 some samples failed.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "editground/attention_maps.hpp"
#include "editground/bundle.hpp"
#include "editground/error.hpp"
#include "editground/harness.hpp"
#include "editground/semantic_localization.hpp"
#include "editground/synthetic.hpp"
#include "editground/tensor_io.hpp"

namespace fs = std::filesystem;
using namespace editground;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFatal = 1;
constexpr int kExitPartial = 2;

struct CommonOptions {
    std::string manifest;
    std::string bundle;
    std::string out = "out";
    std::string config_file;
    double tau = kDefaultTau;
    std::string blocks = "all";
    std::optional<int> feature_block;
    std::optional<int> feature_timestep;
    int attention_timestep = 0;
    bool binarize_only = false;
    std::string binarize_source = "ram";
    double binarize_threshold = kAblationThreshold;
    std::string upsample = "similarity";
    double eps = kDefaultTransitionEps;
    std::size_t workers = 0;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--manifest", o.manifest, "JSONL sample manifest");
    cmd->add_option("--bundle", o.bundle, "single bundle directory (instead of --manifest)");
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--config", o.config_file, "run config JSON (e.g. a previous report.json) as the base");
    cmd->add_option("--tau", o.tau, "proposal threshold on the refined map");
    cmd->add_option("--blocks", o.blocks, "attention blocks: all | shallow | deep | i,j,k");
    cmd->add_option("--feature-block", o.feature_block, "feature block l'");
    cmd->add_option("--feature-timestep", o.feature_timestep, "feature timestep t'");
    cmd->add_option("--attention-timestep", o.attention_timestep, "expected attention timestep t");
    cmd->add_flag("--binarize-only", o.binarize_only, "ablation: threshold the attention map instead of classifying");
    cmd->add_option("--binarize-source", o.binarize_source, "map used by --binarize-only: ram | cam")
        ->check(CLI::IsMember({"ram", "cam"}));
    cmd->add_option("--binarize-threshold", o.binarize_threshold, "threshold used by --binarize-only");
    cmd->add_option("--upsample", o.upsample, "classification path: similarity | full")
        ->check(CLI::IsMember({"similarity", "full"}));
    cmd->add_option("--eps", o.eps, "transition row-sum stabilizer");
    cmd->add_option("--workers", o.workers, "worker threads (0 = hardware concurrency)");
}

RunConfig make_config(const CommonOptions& o, const CLI::App* cmd) {
    RunConfig c;
    if (!o.config_file.empty()) {
        std::ifstream in(o.config_file);
        if (!in) fail(ErrorKind::io, "cannot open config " + o.config_file);
        std::stringstream ss;
        ss << in.rdbuf();
        c = RunConfig::from_json(ss.str());
    }
    // Explicit flags override the config file.
    auto given = [&](const char* name) { return o.config_file.empty() || cmd->count(name) > 0; };
    if (given("--tau")) c.segment.tau = o.tau;
    if (given("--blocks")) c.segment.blocks = BlockSelection::parse(o.blocks);
    if (given("--feature-block")) c.segment.feature_block = o.feature_block;
    if (given("--feature-timestep")) c.segment.feature_timestep = o.feature_timestep;
    if (given("--attention-timestep")) c.attention_timestep = o.attention_timestep;
    if (given("--binarize-threshold")) c.segment.binarize_threshold = o.binarize_threshold;
    if (given("--upsample")) c.segment.upsample = parse_upsample_path(o.upsample);
    if (given("--eps")) c.segment.eps = o.eps;
    if (given("--binarize-only") || given("--binarize-source")) {
        c.segment.mode = !o.binarize_only ? LocalizationMode::full
                         : o.binarize_source == "cam" ? LocalizationMode::cam_binarize
                                                      : LocalizationMode::ram_binarize;
    }
    if (c.segment.mode == LocalizationMode::full && !(c.segment.tau > 0.0 && c.segment.tau < 1.0))
        fail(ErrorKind::config, "--tau must lie in (0, 1)");
    c.workers = o.workers;
    return c;
}

std::vector<SampleManifest> samples_from(const CommonOptions& o) {
    if (!o.manifest.empty()) return read_manifest(o.manifest);
    if (o.bundle.empty()) fail(ErrorKind::config, "pass --manifest or --bundle");
    const DumpBundle b = load_bundle(o.bundle);
    SampleManifest e;
    e.sample_id = fs::path(o.bundle).filename().string();
    if (e.sample_id.empty()) e.sample_id = "bundle";
    e.expression = "object";
    e.bundle_path = o.bundle;
    e.image_size = b.image_size;
    return {e};
}

std::vector<int> parse_int_list(const std::string& text, const char* what) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            fail(ErrorKind::config, std::string("malformed ") + what + " list '" + text + "'");
        }
    }
    if (out.empty()) fail(ErrorKind::config, std::string("empty ") + what + " list");
    return out;
}

// cam / ram: normalized maps as heatmap PGM plus [N_h, N_w] GTEN.
int cmd_maps(const CommonOptions& o, const CLI::App* cmd, bool refined) {
    const RunConfig config = make_config(o, cmd);
    const auto samples = samples_from(o);
    fs::create_directories(o.out);
    const char* tag = refined ? "ram" : "cam";
    int failures = 0;
    for (const auto& s : samples) {
        try {
            const DumpBundle b = load_sample_bundle(s);
            const auto blocks = resolve_blocks(b, config.segment.blocks);
            const SpatialMap map = refined ? aggregate_ram(b, blocks, config.segment.eps) : aggregate_cam(b, blocks);
            write_heatmap_pgm(map, fs::path(o.out) / (s.sample_id + "." + tag + ".pgm"));
            Tensor t;
            t.shape = {static_cast<std::uint32_t>(map.shape.rows), static_cast<std::uint32_t>(map.shape.cols)};
            t.data = map.values;
            write_tensor_file(t, fs::path(o.out) / (s.sample_id + "." + tag + ".gten"));
            std::cout << s.sample_id << ": wrote " << tag << " map\n";
        } catch (const std::exception& e) {
            ++failures;
            std::cerr << s.sample_id << ": " << e.what() << '\n';
        }
    }
    if (failures == static_cast<int>(samples.size())) return kExitFatal;
    return failures ? kExitPartial : kExitOk;
}

int cmd_segment(const CommonOptions& o, const CLI::App* cmd, bool export_similarity) {
    const RunConfig config = make_config(o, cmd);
    const auto samples = samples_from(o);
    fs::create_directories(o.out);
    int failures = 0;
    for (const auto& s : samples) {
        try {
            const DumpBundle b = load_sample_bundle(s);
            const auto result = segment_detailed(b, config.segment);
            write_mask_pgm(result.mask, fs::path(o.out) / (s.sample_id + ".pgm"));
            if (export_similarity && config.segment.mode == LocalizationMode::full) {
                const FeatureDump* f = find_feature(b, config.segment.feature_block, config.segment.feature_timestep);
                const auto sims = token_similarities(l2_normalize_features(f->values, b.grid), result.prototypes);
                Tensor t;
                t.shape = {2, static_cast<std::uint32_t>(b.grid.rows), static_cast<std::uint32_t>(b.grid.cols)};
                t.data.assign(sims.data.begin(), sims.data.end());
                write_tensor_file(t, fs::path(o.out) / (s.sample_id + ".similarity.gten"));
            }
            std::cout << s.sample_id << ": " << count_ones(result.mask) << " foreground pixels\n";
        } catch (const std::exception& e) {
            ++failures;
            std::cerr << s.sample_id << ": " << e.what() << '\n';
        }
    }
    if (failures == static_cast<int>(samples.size())) return kExitFatal;
    return failures ? kExitPartial : kExitOk;
}

int cmd_validate(const CommonOptions& o) {
    std::vector<SampleManifest> samples;
    if (!o.manifest.empty()) {
        samples = read_manifest(o.manifest);
    } else if (!o.bundle.empty()) {
        SampleManifest e;
        e.sample_id = o.bundle;
        e.bundle_path = o.bundle;
        samples.push_back(e);
    } else {
        fail(ErrorKind::config, "pass --manifest or --bundle");
    }
    int failures = 0;
    for (const auto& s : samples) {
        try {
            const DumpBundle b = o.manifest.empty() ? load_bundle(s.bundle_path) : load_sample_bundle(s);
            if (s.gt_mask_path) check_mask_size(read_mask_pgm(*s.gt_mask_path), s.image_size);
            std::cout << "ok     " << s.sample_id << "  grid " << b.grid.rows << "x" << b.grid.cols << ", "
                      << b.blocks.size() << " blocks, N_p " << b.n_prompt << ", D " << b.feature.values.cols << '\n';
        } catch (const std::exception& e) {
            ++failures;
            std::cout << "FAIL   " << s.sample_id << "  " << e.what() << '\n';
        }
    }
    if (failures == 0) return kExitOk;
    return static_cast<std::size_t>(failures) == samples.size() ? kExitFatal : kExitPartial;
}

int cmd_eval(const CommonOptions& o, const CLI::App* cmd, bool write_masks) {
    const RunConfig config = make_config(o, cmd);
    const auto samples = samples_from(o);
    EvalOptions options;
    if (write_masks) options.mask_dir = fs::path(o.out) / "masks";
    const EvalReport report = run_eval(samples, config, options);
    write_eval_report(report, o.out);
    std::cout << report_table(report);
    return report.partial_failure() ? kExitPartial : kExitOk;
}

int cmd_separability(const CommonOptions& o, const std::string& timesteps, const std::string& feature_blocks) {
    if (o.manifest.empty()) fail(ErrorKind::config, "separability needs --manifest");
    const auto records = run_separability(read_manifest(o.manifest), parse_int_list(timesteps, "timestep"),
                                          parse_int_list(feature_blocks, "feature block"), o.workers);
    fs::create_directories(o.out);
    std::ofstream(fs::path(o.out) / "separability.csv") << separability_csv(records);
    const std::string summary = separability_summary_csv(records);
    std::ofstream(fs::path(o.out) / "separability_summary.csv") << summary;
    std::cout << summary;
    for (const auto& r : records)
        if (r.flag == "error") return kExitPartial;
    return kExitOk;
}

int cmd_sweep(const CommonOptions& o, const CLI::App* cmd, const std::string& timesteps,
              const std::string& feature_blocks) {
    if (o.manifest.empty()) fail(ErrorKind::config, "sweep needs --manifest");
    const RunConfig config = make_config(o, cmd);
    const auto report = run_sweep(read_manifest(o.manifest), parse_int_list(timesteps, "timestep"),
                                  parse_int_list(feature_blocks, "feature block"), config);
    fs::create_directories(o.out);
    const std::string grid = sweep_csv(report);
    std::ofstream(fs::path(o.out) / "sweep.csv") << grid;
    std::ofstream(fs::path(o.out) / "separability.csv") << separability_csv(report.records);
    std::ofstream(fs::path(o.out) / "config.json") << report.config_json << '\n';
    std::cout << grid;
    for (const auto& c : report.cells)
        if (c.failures) return kExitPartial;
    return kExitOk;
}

struct SynthOptions {
    std::string suite;
    std::uint64_t seed = 0;
    std::uint64_t count = 1;
    std::string affinity = "object-coherent";
    double coverage = 1.0;
    double snr = 10.0;
    double separation = std::numbers::pi;
    double noise = 0.1;
};

int cmd_synth(const CommonOptions& o, const SynthOptions& s, const CLI::App* cmd) {
    PlantSuite suite;
    if (!s.suite.empty()) {
        suite = read_plant_suite(s.suite);
        if (cmd->count("--seed")) {
            suite.seeds.clear();
            for (std::uint64_t k = 0; k < s.count; ++k) suite.seeds.push_back(s.seed + k);
        }
    } else {
        suite.name = "synth";
        suite.base.affinity = parse_affinity_mode(s.affinity);
        suite.base.partial_coverage = s.coverage;
        suite.base.attn_snr = s.snr;
        suite.base.feat_separation = s.separation;
        suite.base.feat_noise = s.noise;
        for (std::uint64_t k = 0; k < s.count; ++k) suite.seeds.push_back(s.seed + k);
    }
    const auto entries = write_plant_suite(suite, o.out);
    std::ofstream(fs::path(o.out) / "suite.json") << plant_suite_json(suite) << '\n';
    std::cout << "wrote " << entries.size() << " planted samples to " << o.out << '\n';
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Referring segmentation from image-editing transformer attention and feature dumps"};
    app.require_subcommand(1);

    CommonOptions common;
    SynthOptions synth;
    std::string timesteps = "0";
    std::string feature_blocks;
    bool write_masks = false;
    bool export_similarity = false;

    auto* cam = app.add_subcommand("cam", "coarse attention maps");
    auto* ram = app.add_subcommand("ram", "refined attention maps");
    auto* seg = app.add_subcommand("segment", "write predicted masks");
    auto* sep = app.add_subcommand("separability", "foreground/background separability of feature dumps");
    auto* sweep = app.add_subcommand("sweep", "segmentation and separability over (timestep, feature block) cells");
    auto* eval = app.add_subcommand("eval", "segment and score a manifest");
    auto* syn = app.add_subcommand("synth", "write planted bundles with ground truth");
    auto* val = app.add_subcommand("validate", "check bundles against the dump format");
    for (auto* c : {cam, ram, seg, sep, sweep, eval, syn, val}) add_common(c, common);

    seg->add_flag("--export-similarity", export_similarity, "also write token similarity grids as GTEN");
    eval->add_flag("--write-masks", write_masks, "also write predicted masks under <out>/masks");
    for (auto* c : {sep, sweep}) {
        c->add_option("--timesteps", timesteps, "comma-separated feature timesteps");
        c->add_option("--feature-blocks", feature_blocks, "comma-separated feature blocks")->required();
    }
    syn->add_option("--suite", synth.suite, "plant suite JSON");
    syn->add_option("--seed", synth.seed, "first seed");
    syn->add_option("--count", synth.count, "number of seeds");
    syn->add_option("--affinity", synth.affinity, "identity | object-coherent | uniform");
    syn->add_option("--coverage", synth.coverage, "fraction of object tokens receiving attention");
    syn->add_option("--snr", synth.snr, "foreground-to-background attention mass ratio");
    syn->add_option("--separation", synth.separation, "angle between cluster means (radians)");
    syn->add_option("--noise", synth.noise, "per-token feature noise scale");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitFatal;
    }

    try {
        if (*cam) return cmd_maps(common, cam, false);
        if (*ram) return cmd_maps(common, ram, true);
        if (*seg) return cmd_segment(common, seg, export_similarity);
        if (*sep) return cmd_separability(common, timesteps, feature_blocks);
        if (*sweep) return cmd_sweep(common, sweep, timesteps, feature_blocks);
        if (*eval) return cmd_eval(common, eval, write_masks);
        if (*syn) return cmd_synth(common, synth, syn);
        if (*val) return cmd_validate(common);
    } catch (const std::exception& e) {
        std::cerr << "editground: " << e.what() << '\n';
        return kExitFatal;
    }
    return kExitFatal;
}
