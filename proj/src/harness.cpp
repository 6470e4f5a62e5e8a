#include "editground/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "editground/error.hpp"
#include "editground/tensor_io.hpp"
#include "json.hpp"

namespace editground {
namespace {

using nlohmann::json;

std::string num(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::string describe(const std::exception& e) { return e.what(); }

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write " + path.string());
    out << text;
    if (!out) fail(ErrorKind::io, "write failed for " + path.string());
}

// Resolves the feature dump a config refers to for one bundle.
SegmentConfig effective_config(const DumpBundle& bundle, const RunConfig& config) {
    if (bundle.attention_timestep != config.attention_timestep)
        fail(ErrorKind::config, "bundle attention was dumped at timestep " + std::to_string(bundle.attention_timestep) +
                                    ", config expects " + std::to_string(config.attention_timestep));
    SegmentConfig seg = config.segment;
    if (!seg.feature_block) {
        if (auto l = default_feature_block(bundle.model); l && find_feature(bundle, l, seg.feature_timestep))
            seg.feature_block = l;
    }
    return seg;
}

}  // namespace

std::string build_instruction(const std::string& expression) {
    const auto first = expression.find_first_not_of(" \t\r\n\f\v");
    if (first == std::string::npos) fail(ErrorKind::validation, "referring expression is empty");
    const auto last = expression.find_last_not_of(" \t\r\n\f\v");
    return "remove " + expression.substr(first, last - first + 1);
}

std::optional<int> default_feature_block(const std::string& model_family) {
    const std::string m = lower(model_family);
    if (m.find("flux") != std::string::npos) return 20;
    if (m.find("step1x") != std::string::npos) return 40;
    return std::nullopt;
}

std::string RunConfig::echo_json() const {
    json j;
    j["tau"] = segment.tau;
    j["attention_blocks"] = segment.blocks.to_string();
    j["feature_block"] = segment.feature_block ? json(*segment.feature_block) : json(nullptr);
    j["feature_timestep"] = segment.feature_timestep ? json(*segment.feature_timestep) : json(nullptr);
    j["attention_timestep"] = attention_timestep;
    j["mode"] = to_string(segment.mode);
    j["binarize_threshold"] = segment.binarize_threshold;
    j["upsample"] = to_string(segment.upsample);
    j["eps"] = segment.eps;
    return j.dump();
}

RunConfig RunConfig::from_json(const std::string& text) {
    RunConfig c;
    try {
        json j = json::parse(text);
        if (j.contains("config")) j = j["config"];
        c.segment.tau = j.value("tau", c.segment.tau);
        c.segment.blocks = BlockSelection::parse(j.value("attention_blocks", std::string("all")));
        if (j.contains("feature_block") && !j["feature_block"].is_null()) c.segment.feature_block = j["feature_block"].get<int>();
        if (j.contains("feature_timestep") && !j["feature_timestep"].is_null())
            c.segment.feature_timestep = j["feature_timestep"].get<int>();
        c.attention_timestep = j.value("attention_timestep", 0);
        c.segment.mode = parse_localization_mode(j.value("mode", std::string("full")));
        c.segment.binarize_threshold = j.value("binarize_threshold", kAblationThreshold);
        c.segment.upsample = parse_upsample_path(j.value("upsample", std::string("similarity")));
        c.segment.eps = j.value("eps", kDefaultTransitionEps);
    } catch (const json::exception& e) {
        fail(ErrorKind::config, std::string("run config: ") + e.what());
    }
    return c;
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) fn(i);
        });
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

namespace {

SampleOutcome evaluate_sample(const SampleManifest& entry, const RunConfig& config, const EvalOptions& options) {
    SampleOutcome out;
    out.sample_id = entry.sample_id;
    try {
        out.instruction = build_instruction(entry.expression);
        const DumpBundle bundle = load_sample_bundle(entry);
        const auto result = segment_detailed(bundle, effective_config(bundle, config));
        out.zero_feature_rows = result.zero_feature_rows;
        if (options.mask_dir) write_mask_pgm(result.mask, *options.mask_dir / (entry.sample_id + ".pgm"));
        if (entry.gt_mask_path) {
            const auto gt = read_mask_pgm(*entry.gt_mask_path);
            check_mask_size(gt, entry.image_size);
            out.record = iou(result.mask, gt, entry.sample_id);
        }
    } catch (const std::exception& e) {
        out.error = describe(e);
        out.record.reset();
    }
    return out;
}

}  // namespace

EvalReport run_eval(const std::vector<SampleManifest>& manifest, const RunConfig& config, const EvalOptions& options) {
    if (manifest.empty()) fail(ErrorKind::validation, "manifest has no samples");
    if (options.mask_dir) std::filesystem::create_directories(*options.mask_dir);
    EvalReport report;
    report.config_json = config.echo_json();
    report.samples.resize(manifest.size());
    parallel_for(manifest.size(), config.workers,
                 [&](std::size_t i) { report.samples[i] = evaluate_sample(manifest[i], config, options); });

    std::vector<IoURecord> records;
    for (const auto& s : report.samples) {
        if (!s.error.empty()) ++report.failures;
        if (s.record) records.push_back(*s.record);
    }
    if (report.failures == manifest.size())
        fail(ErrorKind::io, "no sample could be processed; first error: " + report.samples.front().error);
    if (!records.empty()) report.aggregate = aggregate(records);
    return report;
}

std::string report_json(const EvalReport& report) {
    json j;
    j["config"] = json::parse(report.config_json);
    json summary;
    summary["samples"] = report.samples.size();
    summary["failures"] = report.failures;
    std::size_t scored = 0;
    for (const auto& s : report.samples) scored += s.record.has_value();
    summary["scored"] = scored;
    summary["oIoU"] = report.aggregate ? json(report.aggregate->oiou) : json(nullptr);
    summary["mIoU"] = report.aggregate ? json(report.aggregate->miou) : json(nullptr);
    j["summary"] = summary;
    json samples = json::array();
    for (const auto& s : report.samples) {
        json e;
        e["sample_id"] = s.sample_id;
        e["instruction"] = s.instruction;
        if (s.record) {
            e["intersection"] = s.record->intersection;
            e["union"] = s.record->union_count;
            e["iou"] = s.record->iou;
            e["empty_union"] = s.record->empty_union;
        }
        if (s.zero_feature_rows) e["zero_feature_rows"] = s.zero_feature_rows;
        if (!s.error.empty()) e["error"] = s.error;
        samples.push_back(e);
    }
    j["samples"] = samples;
    return j.dump(2) + "\n";
}

std::string report_csv(const EvalReport& report) {
    std::ostringstream out;
    out << "sample_id,intersection,union,iou,flags\n";
    for (const auto& s : report.samples) {
        std::string flags;
        if (!s.error.empty()) flags = "error";
        else if (!s.record) flags = "no-gt";
        else if (s.record->empty_union) flags = "empty-union";
        out << s.sample_id << ',';
        if (s.record) out << s.record->intersection << ',' << s.record->union_count << ',' << num(s.record->iou);
        else out << ",,";
        out << ',' << flags << '\n';
    }
    return out.str();
}

std::string report_table(const EvalReport& report) {
    std::size_t width = 9;
    for (const auto& s : report.samples) width = std::max(width, s.sample_id.size());
    std::ostringstream out;
    auto pad = [&](const std::string& s) { return s + std::string(width - std::min(width, s.size()), ' '); };
    out << pad("sample_id") << "  intersection        union       iou  status\n";
    for (const auto& s : report.samples) {
        char line[160];
        if (s.record) {
            std::snprintf(line, sizeof line, "  %12llu %12llu  %8.4f  %s",
                          static_cast<unsigned long long>(s.record->intersection),
                          static_cast<unsigned long long>(s.record->union_count), s.record->iou,
                          s.record->empty_union ? "empty-union" : "ok");
        } else {
            std::snprintf(line, sizeof line, "  %12s %12s  %8s  %s", "-", "-", "-", s.error.empty() ? "no-gt" : "error");
        }
        out << pad(s.sample_id) << line << '\n';
    }
    out << '\n';
    if (report.aggregate) {
        out << "oIoU  " << fixed(100.0 * report.aggregate->oiou, 2) << '\n';
        out << "mIoU  " << fixed(100.0 * report.aggregate->miou, 2) << '\n';
        out << "scored " << report.aggregate->count << " of " << report.samples.size() << " samples";
    } else {
        out << "no scored samples";
    }
    out << ", " << report.failures << " failed\n";
    return out.str();
}

void write_eval_report(const EvalReport& report, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    write_text(out_dir / "report.json", report_json(report));
    write_text(out_dir / "samples.csv", report_csv(report));
    write_text(out_dir / "summary.txt", report_table(report));
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

namespace {

enum class CellStatus : std::uint8_t { absent, failed, scored, unscored };

struct CellOutcome {
    CellStatus status = CellStatus::absent;
    IoURecord record;
    SeparabilityRecord separability;
};

std::vector<std::pair<int, int>> cell_grid(const std::vector<int>& timesteps, const std::vector<int>& blocks) {
    if (timesteps.empty()) fail(ErrorKind::config, "sweep needs at least one timestep");
    if (blocks.empty()) fail(ErrorKind::config, "sweep needs at least one block");
    std::vector<std::pair<int, int>> cells;
    for (int t : timesteps)
        for (int l : blocks) cells.emplace_back(t, l);
    return cells;
}

// One sample across all cells. Loads the bundle and ground truth once.
std::vector<CellOutcome> sweep_sample(const SampleManifest& entry, const std::vector<std::pair<int, int>>& cells,
                                      const RunConfig* config) {
    std::vector<CellOutcome> out(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c)
        out[c].separability = {entry.sample_id, cells[c].first, cells[c].second, {}, "absent"};

    std::optional<DumpBundle> bundle;
    std::optional<GroundTruthMask> gt;
    try {
        bundle = load_sample_bundle(entry);
        if (entry.gt_mask_path) {
            gt = read_mask_pgm(*entry.gt_mask_path);
            check_mask_size(*gt, entry.image_size);
        }
    } catch (const std::exception&) {
        for (auto& o : out) {
            o.status = CellStatus::failed;
            o.separability.flag = "error";
        }
        return out;
    }

    for (std::size_t c = 0; c < cells.size(); ++c) {
        const auto [t, l] = cells[c];
        auto& o = out[c];
        const FeatureDump* feature = find_feature(*bundle, l, t);
        if (!feature) continue;
        o.separability.flag.clear();
        if (gt) {
            try {
                o.separability = separability_record(entry.sample_id, t, l, feature->values, bundle->grid, *gt);
            } catch (const std::exception&) {
                o.separability.flag = "error";
            }
        } else {
            o.separability.flag = "no-gt";
        }
        if (!config) {
            o.status = CellStatus::unscored;
            continue;
        }
        try {
            RunConfig cell_config = *config;
            cell_config.segment.feature_block = l;
            cell_config.segment.feature_timestep = t;
            const auto mask = segment(*bundle, effective_config(*bundle, cell_config));
            if (gt) {
                o.record = iou(mask, *gt, entry.sample_id);
                o.status = CellStatus::scored;
            } else {
                o.status = CellStatus::unscored;
            }
        } catch (const std::exception&) {
            o.status = CellStatus::failed;
        }
    }
    return out;
}

}  // namespace

std::vector<SeparabilityRecord> run_separability(const std::vector<SampleManifest>& manifest,
                                                 const std::vector<int>& timesteps, const std::vector<int>& blocks,
                                                 std::size_t workers) {
    const auto cells = cell_grid(timesteps, blocks);
    std::vector<std::vector<CellOutcome>> per_sample(manifest.size());
    parallel_for(manifest.size(), workers,
                 [&](std::size_t i) { per_sample[i] = sweep_sample(manifest[i], cells, nullptr); });
    std::vector<SeparabilityRecord> records;
    for (const auto& sample : per_sample)
        for (const auto& o : sample) records.push_back(o.separability);
    return records;
}

SweepReport run_sweep(const std::vector<SampleManifest>& manifest, const std::vector<int>& timesteps,
                      const std::vector<int>& blocks, const RunConfig& config) {
    const auto cells = cell_grid(timesteps, blocks);
    if (manifest.empty()) fail(ErrorKind::validation, "manifest has no samples");
    std::vector<std::vector<CellOutcome>> per_sample(manifest.size());
    parallel_for(manifest.size(), config.workers,
                 [&](std::size_t i) { per_sample[i] = sweep_sample(manifest[i], cells, &config); });

    SweepReport report;
    RunConfig echoed = config;
    echoed.segment.feature_block.reset();
    echoed.segment.feature_timestep.reset();
    report.config_json = echoed.echo_json();
    for (std::size_t c = 0; c < cells.size(); ++c) {
        SweepCell cell;
        cell.timestep = cells[c].first;
        cell.block = cells[c].second;
        std::vector<IoURecord> records;
        std::vector<SeparabilityRecord> seps;
        for (const auto& sample : per_sample) {
            const auto& o = sample[c];
            if (o.status != CellStatus::absent) cell.present = true;
            if (o.status == CellStatus::failed) ++cell.failures;
            if (o.status == CellStatus::scored) records.push_back(o.record);
            seps.push_back(o.separability);
        }
        if (!records.empty()) cell.segmentation = aggregate(records);
        cell.separability = box_stats(seps);
        report.cells.push_back(cell);
    }
    for (const auto& sample : per_sample)
        for (const auto& o : sample) report.records.push_back(o.separability);
    return report;
}

std::string sweep_csv(const SweepReport& report) {
    std::ostringstream out;
    out << "t,l,status,oIoU,mIoU,scored,failures,J_count,J_min,J_q1,J_median,J_q3,J_max,J_infinite\n";
    for (const auto& c : report.cells) {
        out << c.timestep << ',' << c.block << ',' << (c.present ? "present" : "absent") << ',';
        if (c.segmentation) out << num(c.segmentation->oiou) << ',' << num(c.segmentation->miou) << ',' << c.segmentation->count;
        else out << ",,0";
        out << ',' << c.failures << ',' << c.separability.count << ',';
        if (!c.separability.empty()) {
            const auto& b = c.separability;
            out << num(b.min) << ',' << num(b.q1) << ',' << num(b.median) << ',' << num(b.q3) << ',' << num(b.max);
        } else {
            out << ",,,,";
        }
        out << ',' << c.separability.infinite << '\n';
    }
    return out.str();
}

std::string separability_csv(const std::vector<SeparabilityRecord>& records) {
    std::ostringstream out;
    out << "sample_id,t,l,J,flag\n";
    for (const auto& r : records) {
        out << r.sample_id << ',' << r.timestep << ',' << r.block << ',';
        if (r.flag.empty() || r.flag == "infinite") out << num(r.score.value);
        out << ',' << r.flag << '\n';
    }
    return out.str();
}

std::string separability_summary_csv(const std::vector<SeparabilityRecord>& records) {
    std::ostringstream out;
    out << "t,l,count,min,q1,median,q3,max,infinite,excluded\n";
    for (const auto& [key, b] : summarize_by_cell(records)) {
        out << key.first << ',' << key.second << ',' << b.count << ',';
        if (!b.empty())
            out << num(b.min) << ',' << num(b.q1) << ',' << num(b.median) << ',' << num(b.q3) << ',' << num(b.max);
        else
            out << ",,,,";
        out << ',' << b.infinite << ',' << b.excluded << '\n';
    }
    return out.str();
}

}  // namespace editground
