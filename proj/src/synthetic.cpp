#include "editground/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "editground/error.hpp"
#include "editground/philox.hpp"
#include "editground/tensor_io.hpp"
#include "json.hpp"

namespace editground {
namespace {

using nlohmann::json;

// Stream ids, one per independent random quantity.
constexpr std::uint32_t kStreamShape = 1;
constexpr std::uint32_t kStreamBasis = 2;
constexpr std::uint32_t kStreamFeature = 3;
constexpr std::uint32_t kStreamAttention = 0x100;  // + block
constexpr std::uint32_t kStreamAffinity = 0x200;   // + block
constexpr std::uint32_t kStreamVariant = 0x300;    // + variant

enum Region : std::uint8_t { kBackground = 0, kObject = 1, kDistractor = 2 };

std::vector<double> unit_gaussian(CounterRng& rng, std::size_t dim) {
    std::vector<double> v(dim);
    double sq = 0.0;
    for (auto& x : v) {
        x = rng.normal();
        sq += x * x;
    }
    const double n = std::sqrt(sq);
    for (auto& x : v) x /= n;
    return v;
}

// Orthonormal pair (u, v) for the two cluster directions.
std::pair<std::vector<double>, std::vector<double>> cluster_basis(std::uint64_t seed, std::size_t dim) {
    CounterRng rng(seed, kStreamBasis);
    auto u = unit_gaussian(rng, dim);
    std::vector<double> v;
    for (;;) {
        v = unit_gaussian(rng, dim);
        double d = 0.0;
        for (std::size_t k = 0; k < dim; ++k) d += u[k] * v[k];
        double sq = 0.0;
        for (std::size_t k = 0; k < dim; ++k) {
            v[k] -= d * u[k];
            sq += v[k] * v[k];
        }
        if (sq > 1e-6) {
            const double n = std::sqrt(sq);
            for (auto& x : v) x /= n;
            return {u, v};
        }
    }
}

Matrix<float> make_features(const PlantSpec& spec, const std::vector<std::uint8_t>& region, double separation,
                            double noise, std::uint32_t stream) {
    const std::size_t n_v = spec.grid.size(), dim = spec.feature_dim;
    const auto [u, v] = cluster_basis(spec.seed, dim);
    std::vector<double> mu_fg(dim);
    for (std::size_t k = 0; k < dim; ++k) mu_fg[k] = std::cos(separation) * u[k] + std::sin(separation) * v[k];

    CounterRng rng(spec.seed, stream);
    const double per_channel = noise / std::sqrt(static_cast<double>(dim));
    Matrix<float> f(n_v, dim);
    for (std::size_t i = 0; i < n_v; ++i) {
        const auto& mu = region[i] == kBackground ? u : mu_fg;
        const double scale = rng.uniform(0.5, 2.0);
        auto row = f.row(i);
        for (std::size_t k = 0; k < dim; ++k)
            row[k] = static_cast<float>(scale * (mu[k] + per_channel * rng.normal()));
    }
    return f;
}

TokenRect random_rect(const PlantSpec& spec, CounterRng& rng) {
    const std::size_t hmax = std::min(spec.max_object, spec.grid.rows);
    const std::size_t wmax = std::min(spec.max_object, spec.grid.cols);
    const std::size_t hmin = std::min(spec.min_object, hmax), wmin = std::min(spec.min_object, wmax);
    TokenRect r;
    r.height = rng.uniform_int(hmin, hmax);
    r.width = rng.uniform_int(wmin, wmax);
    r.row = rng.uniform_int(0, spec.grid.rows - r.height);
    r.col = rng.uniform_int(0, spec.grid.cols - r.width);
    return r;
}

void check_rect(const TokenRect& r, GridShape grid, const char* what) {
    if (r.height == 0 || r.width == 0) fail(ErrorKind::config, std::string(what) + " rectangle is empty");
    if (r.row + r.height > grid.rows || r.col + r.width > grid.cols)
        fail(ErrorKind::config, std::string(what) + " rectangle exceeds the token grid");
}

Matrix<float> make_attn_vp(const PlantSpec& spec, const std::vector<std::uint8_t>& region,
                           const std::vector<std::uint8_t>& attended, std::size_t block) {
    const std::size_t n_v = spec.grid.size();
    CounterRng rng(spec.seed, kStreamAttention + static_cast<std::uint32_t>(block));
    std::vector<double> mass(n_v);
    for (std::size_t i = 0; i < n_v; ++i) mass[i] = (attended[i] ? spec.attn_snr : 1.0) * rng.uniform(0.5, 1.5);

    std::vector<std::size_t> background;
    for (std::size_t i = 0; i < n_v; ++i)
        if (region[i] == kBackground) background.push_back(i);
    const std::size_t hot = std::min(spec.hotspots, background.size());
    for (std::size_t h = 0; h < hot; ++h) {
        // Partial Fisher-Yates: distinct hotspot tokens.
        const std::size_t pick = rng.uniform_int(h, background.size() - 1);
        std::swap(background[h], background[pick]);
        mass[background[h]] = spec.attn_snr * rng.uniform(0.5, 1.0);
    }

    Matrix<float> a(n_v, spec.n_prompt);
    std::vector<double> w(spec.n_prompt);
    for (std::size_t i = 0; i < n_v; ++i) {
        double total = 0.0;
        for (auto& x : w) total += (x = rng.uniform(0.5, 1.5));
        for (std::size_t p = 0; p < spec.n_prompt; ++p) a(i, p) = static_cast<float>(mass[i] * w[p] / total);
    }
    return a;
}

Matrix<float> make_attn_vv(const PlantSpec& spec, const std::vector<std::uint8_t>& region, std::size_t block) {
    const std::size_t n_v = spec.grid.size();
    Matrix<float> a(n_v, n_v, 0.0f);
    switch (spec.affinity) {
        case AffinityMode::identity:
            for (std::size_t i = 0; i < n_v; ++i) a(i, i) = 1.0f;
            return a;
        case AffinityMode::uniform:
            std::fill(a.data.begin(), a.data.end(), 1.0f);
            return a;
        case AffinityMode::object_coherent: break;
    }
    CounterRng rng(spec.seed, kStreamAffinity + static_cast<std::uint32_t>(block));
    const double two_l2 = 2.0 * spec.affinity_length * spec.affinity_length;
    for (std::size_t i = 0; i < n_v; ++i) {
        const double ri = static_cast<double>(i / spec.grid.cols), ci = static_cast<double>(i % spec.grid.cols);
        for (std::size_t j = 0; j < n_v; ++j) {
            const double rj = static_cast<double>(j / spec.grid.cols), cj = static_cast<double>(j % spec.grid.cols);
            const double d2 = (ri - rj) * (ri - rj) + (ci - cj) * (ci - cj);
            const bool same = region[i] == region[j];
            double w = std::exp(-d2 / two_l2) * (same ? 1.0 : spec.cross_affinity);
            if (same && region[i] != kBackground) w += spec.object_link;
            a(i, j) = static_cast<float>(w * rng.uniform(0.8, 1.2));
        }
    }
    return a;
}

}  // namespace

std::string to_string(AffinityMode m) {
    switch (m) {
        case AffinityMode::identity: return "identity";
        case AffinityMode::object_coherent: return "object-coherent";
        case AffinityMode::uniform: return "uniform";
    }
    return "identity";
}

AffinityMode parse_affinity_mode(const std::string& text) {
    if (text == "identity") return AffinityMode::identity;
    if (text == "object-coherent" || text == "coherent") return AffinityMode::object_coherent;
    if (text == "uniform") return AffinityMode::uniform;
    fail(ErrorKind::config, "unknown affinity mode '" + text + "'");
}

void validate_plant_spec(const PlantSpec& s) {
    if (s.grid.size() == 0) fail(ErrorKind::config, "plant grid must be non-empty");
    if (s.image_size.height < s.grid.rows || s.image_size.width < s.grid.cols)
        fail(ErrorKind::config, "plant image size is smaller than the grid");
    if (s.n_prompt == 0 || s.feature_dim < 2) fail(ErrorKind::config, "plant needs n_prompt >= 1 and feature_dim >= 2");
    if (!(s.feat_separation >= 0.0)) fail(ErrorKind::config, "feature separation must be >= 0");
    if (!(s.feat_noise >= 0.0)) fail(ErrorKind::config, "feature noise must be >= 0");
    if (!(s.partial_coverage > 0.0 && s.partial_coverage <= 1.0))
        fail(ErrorKind::config, "partial coverage must lie in (0, 1]");
    if (!(s.attn_snr >= 1.0)) fail(ErrorKind::config, "attention SNR must be >= 1");
    if (s.n_blocks == 0) fail(ErrorKind::config, "plant needs at least one block");
    if (s.affinity_length <= 0.0 || s.cross_affinity < 0.0 || s.object_link < 0.0)
        fail(ErrorKind::config, "affinity parameters out of range");
    if (s.min_object == 0 || s.min_object > s.max_object) fail(ErrorKind::config, "bad random object size range");
    for (const auto& r : s.object) check_rect(r, s.grid, "object");
    for (const auto& r : s.distractor) check_rect(r, s.grid, "distractor");
}

GroundTruthMask rasterize(const std::vector<TokenRect>& rects, GridShape grid, ImageSize image) {
    GroundTruthMask gt(image.shape(), 0);
    for (std::size_t y = 0; y < image.height; ++y) {
        const std::size_t r = ((2 * y + 1) * grid.rows) / (2 * image.height);
        for (std::size_t x = 0; x < image.width; ++x) {
            const std::size_t c = ((2 * x + 1) * grid.cols) / (2 * image.width);
            for (const auto& rect : rects)
                if (rect.contains(r, c)) gt.values[y * image.width + x] = 1;
        }
    }
    return gt;
}

PlantedSample generate(const PlantSpec& spec) {
    validate_plant_spec(spec);
    PlantedSample out;
    out.object = spec.object;
    if (out.object.empty()) {
        CounterRng rng(spec.seed, kStreamShape);
        out.object.push_back(random_rect(spec, rng));
    }

    const std::size_t n_v = spec.grid.size();
    std::vector<std::uint8_t> region(n_v, kBackground);
    for (std::size_t i = 0; i < n_v; ++i) {
        const std::size_t r = i / spec.grid.cols, c = i % spec.grid.cols;
        for (const auto& rect : spec.distractor)
            if (rect.contains(r, c)) region[i] = kDistractor;
        for (const auto& rect : out.object)
            if (rect.contains(r, c)) region[i] = kObject;
    }
    out.token_truth = TokenMask(spec.grid, 0);
    std::vector<std::size_t> object_tokens;
    for (std::size_t i = 0; i < n_v; ++i)
        if (region[i] == kObject) {
            out.token_truth.values[i] = 1;
            object_tokens.push_back(i);
        }
    if (object_tokens.empty()) fail(ErrorKind::config, "planted object covers no tokens");
    if (object_tokens.size() == n_v) fail(ErrorKind::config, "planted object covers the whole grid");

    const auto n_attended = static_cast<std::size_t>(
        std::ceil(spec.partial_coverage * static_cast<double>(object_tokens.size()) - 1e-9));
    std::vector<std::uint8_t> attended(n_v, 0);
    for (std::size_t k = 0; k < std::max<std::size_t>(1, n_attended); ++k) {
        attended[object_tokens[k]] = 1;
        out.attended.push_back(object_tokens[k]);
    }

    DumpBundle& b = out.bundle;
    b.grid = spec.grid;
    b.n_prompt = spec.n_prompt;
    b.image_size = spec.image_size;
    b.model = spec.model;
    b.prompt_tokens = "all";
    for (std::size_t k = 0; k < spec.n_blocks; ++k) {
        BlockAttention blk;
        blk.index = static_cast<int>(k);
        blk.attn_vp = make_attn_vp(spec, region, attended, k);
        blk.attn_vv = make_attn_vv(spec, region, k);
        b.blocks.push_back(std::move(blk));
        (k < (spec.n_blocks + 1) / 2 ? b.block_presets["shallow"] : b.block_presets["deep"]).push_back(static_cast<int>(k));
    }
    b.feature.block = spec.feature_block;
    b.feature.timestep = spec.feature_timestep;
    b.feature.values = make_features(spec, region, spec.feat_separation, spec.feat_noise, kStreamFeature);
    for (std::size_t v = 0; v < spec.extra_features.size(); ++v) {
        const auto& var = spec.extra_features[v];
        b.extra_features.push_back({var.block, var.timestep,
                                    make_features(spec, region, var.separation, var.noise,
                                                  kStreamVariant + static_cast<std::uint32_t>(v))});
    }
    out.gt = rasterize(out.object, spec.grid, spec.image_size);
    validate_bundle(b);
    return out;
}

// ---------------------------------------------------------------------------
// Suite files
// ---------------------------------------------------------------------------

namespace {

json rects_json(const std::vector<TokenRect>& rects) {
    json a = json::array();
    for (const auto& r : rects) a.push_back({r.row, r.col, r.height, r.width});
    return a;
}

std::vector<TokenRect> rects_from(const json& a) {
    std::vector<TokenRect> out;
    for (const auto& r : a) {
        auto v = r.get<std::vector<std::size_t>>();
        if (v.size() != 4) fail(ErrorKind::format, "rectangles are [row, col, height, width]");
        out.push_back({v[0], v[1], v[2], v[3]});
    }
    return out;
}

json spec_json(const PlantSpec& s) {
    json j;
    j["grid"] = {s.grid.rows, s.grid.cols};
    j["image_size"] = {s.image_size.height, s.image_size.width};
    j["n_prompt"] = s.n_prompt;
    j["feature_dim"] = s.feature_dim;
    j["object"] = rects_json(s.object);
    j["distractor"] = rects_json(s.distractor);
    j["attn_snr"] = s.attn_snr;
    j["feat_separation"] = s.feat_separation;
    j["feat_noise"] = s.feat_noise;
    j["affinity"] = to_string(s.affinity);
    j["partial_coverage"] = s.partial_coverage;
    j["n_blocks"] = s.n_blocks;
    j["hotspots"] = s.hotspots;
    j["affinity_length"] = s.affinity_length;
    j["cross_affinity"] = s.cross_affinity;
    j["object_link"] = s.object_link;
    j["object_size"] = {s.min_object, s.max_object};
    j["feature_block"] = s.feature_block;
    j["feature_timestep"] = s.feature_timestep;
    json extras = json::array();
    for (const auto& v : s.extra_features)
        extras.push_back({{"timestep", v.timestep}, {"block", v.block}, {"separation", v.separation}, {"noise", v.noise}});
    j["extra_features"] = extras;
    j["model"] = s.model;
    j["generator"] = kGeneratorId;
    return j;
}

PlantSpec spec_from(const json& j) {
    PlantSpec s;
    if (j.contains("generator") && j["generator"].get<std::string>() != kGeneratorId)
        fail(ErrorKind::config, "suite requests unsupported generator '" + j["generator"].get<std::string>() + "'");
    if (j.contains("grid")) s.grid = {j["grid"][0].get<std::size_t>(), j["grid"][1].get<std::size_t>()};
    if (j.contains("image_size"))
        s.image_size = {j["image_size"][0].get<std::size_t>(), j["image_size"][1].get<std::size_t>()};
    s.n_prompt = j.value("n_prompt", s.n_prompt);
    s.feature_dim = j.value("feature_dim", s.feature_dim);
    if (j.contains("object")) s.object = rects_from(j["object"]);
    if (j.contains("distractor")) s.distractor = rects_from(j["distractor"]);
    s.attn_snr = j.value("attn_snr", s.attn_snr);
    if (j.contains("feat_separation")) {
        const auto& d = j["feat_separation"];
        s.feat_separation = d.is_string() && d.get<std::string>() == "antipodal" ? std::numbers::pi : d.get<double>();
    }
    s.feat_noise = j.value("feat_noise", s.feat_noise);
    if (j.contains("affinity")) s.affinity = parse_affinity_mode(j["affinity"].get<std::string>());
    s.partial_coverage = j.value("partial_coverage", s.partial_coverage);
    s.seed = j.value("seed", s.seed);
    s.n_blocks = j.value("n_blocks", s.n_blocks);
    s.hotspots = j.value("hotspots", s.hotspots);
    s.affinity_length = j.value("affinity_length", s.affinity_length);
    s.cross_affinity = j.value("cross_affinity", s.cross_affinity);
    s.object_link = j.value("object_link", s.object_link);
    if (j.contains("object_size")) {
        s.min_object = j["object_size"][0].get<std::size_t>();
        s.max_object = j["object_size"][1].get<std::size_t>();
    }
    s.feature_block = j.value("feature_block", s.feature_block);
    s.feature_timestep = j.value("feature_timestep", s.feature_timestep);
    if (j.contains("extra_features"))
        for (const auto& e : j["extra_features"])
            s.extra_features.push_back({e.at("timestep").get<int>(), e.at("block").get<int>(),
                                        e.value("separation", std::numbers::pi), e.value("noise", 0.1)});
    s.model = j.value("model", s.model);
    return s;
}

}  // namespace

PlantSuite parse_plant_suite(std::istream& source) {
    PlantSuite suite;
    try {
        json j = json::parse(source);
        suite.name = j.value("name", std::string("suite"));
        suite.base = spec_from(j.value("spec", json::object()));
        if (j.contains("seeds")) {
            suite.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
        } else {
            const auto start = j.at("seed_start").get<std::uint64_t>();
            const auto count = j.at("seed_count").get<std::uint64_t>();
            for (std::uint64_t k = 0; k < count; ++k) suite.seeds.push_back(start + k);
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::format, std::string("plant suite: ") + e.what());
    }
    if (suite.seeds.empty()) fail(ErrorKind::config, "plant suite lists no seeds");
    validate_plant_spec(suite.base);
    return suite;
}

PlantSuite read_plant_suite(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open plant suite " + path.string());
    return parse_plant_suite(in);
}

std::string plant_suite_json(const PlantSuite& suite) {
    json j;
    j["name"] = suite.name;
    j["spec"] = spec_json(suite.base);
    j["seeds"] = suite.seeds;
    return j.dump(2);
}

std::vector<SampleManifest> write_plant_suite(const PlantSuite& suite, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir / "masks");
    std::vector<SampleManifest> entries;
    for (auto seed : suite.seeds) {
        PlantSpec spec = suite.base;
        spec.seed = seed;
        const auto sample = generate(spec);
        SampleManifest e;
        e.sample_id = "plant_" + std::to_string(seed);
        e.expression = "planted object " + std::to_string(seed);
        e.image_size = spec.image_size;
        save_bundle(sample.bundle, out_dir / e.sample_id);
        write_mask_pgm(sample.gt, out_dir / "masks" / (e.sample_id + ".pgm"));
        e.bundle_path = e.sample_id;
        e.gt_mask_path = std::filesystem::path("masks") / (e.sample_id + ".pgm");
        entries.push_back(e);
    }
    std::ofstream manifest(out_dir / "manifest.jsonl", std::ios::trunc);
    if (!manifest) fail(ErrorKind::io, "cannot write " + (out_dir / "manifest.jsonl").string());
    write_manifest(entries, manifest);
    for (auto& e : entries) {
        e.bundle_path = out_dir / e.bundle_path;
        e.gt_mask_path = out_dir / *e.gt_mask_path;
    }
    return entries;
}

}  // namespace editground
