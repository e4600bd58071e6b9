#include "wsic/synthcorpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>

#include "wsic/error.hpp"
#include "wsic/imageops.hpp"
#include "wsic/png_io.hpp"
#include "wsic/rng.hpp"

namespace wsic {

void SlideRecipe::validate() const {
    require(width >= 256 && height >= 256, ErrorCode::InvalidArgument, "canvas must be at least 256x256");
    require(tumor_blobs >= 1, ErrorCode::InvalidArgument, "need at least one tumour blob");
    require(separability >= 0.0 && separability <= 1.0, ErrorCode::InvalidArgument, "separability must be in [0, 1]");
    require(tumor_radius_min > 0.0 && tumor_radius_min <= tumor_radius_max, ErrorCode::InvalidArgument,
            "bad tumour radius range");
    require(tissue_radius_min > 0.0 && tissue_radius_min <= tissue_radius_max && tissue_radius_max < 0.5,
            ErrorCode::InvalidArgument, "bad tissue radius range");
    require(noise >= 0.0 && modulation >= 0.0, ErrorCode::InvalidArgument, "noise levels must be non-negative");
}

namespace {

constexpr double kPi = std::numbers::pi;

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

// Closed random walk over the angle, smoothed: relative radius perturbation.
std::vector<double> radial_walk(Rng& rng, int samples, double step) {
    std::vector<double> walk(samples + 1, 0.0);
    for (int k = 1; k <= samples; ++k) walk[k] = walk[k - 1] + step * standard_normal(rng);
    for (int k = 0; k <= samples; ++k) walk[k] -= walk[samples] * k / samples;
    walk.pop_back();
    std::vector<double> smooth(samples, 0.0);
    for (int k = 0; k < samples; ++k) {
        for (int d = -3; d <= 3; ++d) smooth[k] += walk[(k + d + samples) % samples] / 7.0;
    }
    for (double& v : smooth) v = std::clamp(v, -0.45, 0.6);
    return smooth;
}

// Perturbed ellipse rasterised into `mask` (OR-ed in).
void paint_blob(BinaryMask& mask, double cx, double cy, double mean_r, Rng& rng, double roughness) {
    const double aspect = uniform(rng, 0.7, 1.4);
    const double rotation = uniform(rng, 0.0, kPi);
    const double a = mean_r * std::sqrt(aspect);
    const double b = mean_r / std::sqrt(aspect);
    constexpr int kSamples = 72;
    const auto walk = radial_walk(rng, kSamples, roughness);
    auto radius_at = [&](double theta) {
        const double phi = theta - rotation;
        const double ell = a * b / std::sqrt(std::pow(b * std::cos(phi), 2) + std::pow(a * std::sin(phi), 2));
        double pos = (theta + kPi) / (2 * kPi) * kSamples;
        const int i0 = static_cast<int>(std::floor(pos)) % kSamples;
        const double t = pos - std::floor(pos);
        const double w = walk[i0] * (1 - t) + walk[(i0 + 1) % kSamples] * t;
        return ell * (1.0 + w);
    };
    const double reach = std::max(a, b) * 1.7;
    const int x0 = std::max(0, static_cast<int>(cx - reach));
    const int x1 = std::min(mask.width() - 1, static_cast<int>(cx + reach));
    const int y0 = std::max(0, static_cast<int>(cy - reach));
    const int y1 = std::min(mask.height() - 1, static_cast<int>(cy + reach));
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double dx = x - cx, dy = y - cy;
            const double r = std::hypot(dx, dy);
            if (r <= radius_at(std::atan2(dy, dx))) mask.set(x, y);
        }
    }
}

BinaryMask largest_component(const BinaryMask& mask) {
    const auto comps = connected_components(mask);
    if (comps.empty()) return mask;
    return comps.front().to_mask(mask.width(), mask.height());
}

std::uint8_t clamp_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

} // namespace

SyntheticSlide generate_slide(const SlideRecipe& recipe) {
    recipe.validate();
    Rng rng(recipe.seed);
    const int w = recipe.width, h = recipe.height;
    const double scale = std::min(w, h);

    SyntheticSlide out;
    out.tissue = BinaryMask(w, h);
    paint_blob(out.tissue, w / 2.0 + uniform(rng, -0.03, 0.03) * w, h / 2.0 + uniform(rng, -0.03, 0.03) * h,
               uniform(rng, recipe.tissue_radius_min, recipe.tissue_radius_max) * scale, rng, 0.012);
    out.tissue = largest_component(morph_close(out.tissue, 2));
    // Keep the tissue off the canvas border.
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (x < 2 || y < 2 || x >= w - 2 || y >= h - 2) out.tissue.set(x, y, false);

    // Tumour centres are drawn well inside the tissue.
    const int margin = static_cast<int>(recipe.tumor_radius_min * scale);
    const BinaryMask core = erode(out.tissue, std::max(1, margin));
    require(core.popcount() > 0, ErrorCode::DegenerateInput, "tissue too small to host tumours");
    out.tumor = BinaryMask(w, h);
    int placed = 0;
    for (int attempt = 0; attempt < 200 * recipe.tumor_blobs && placed < recipe.tumor_blobs; ++attempt) {
        const int x = static_cast<int>(uniform01(rng) * w);
        const int y = static_cast<int>(uniform01(rng) * h);
        if (!core.get(x, y)) continue;
        paint_blob(out.tumor, x, y, uniform(rng, recipe.tumor_radius_min, recipe.tumor_radius_max) * scale, rng, 0.025);
        ++placed;
    }
    require(placed == recipe.tumor_blobs, ErrorCode::DegenerateInput, "could not place all tumour blobs");
    out.tumor = morph_close(out.tumor, 2) & out.tissue;

    // Colours. Healthy tissue is pink, tumour shifts toward purple with separability.
    const double delta = recipe.separability;
    const double healthy[3] = {232.0, 168.0, 202.0};
    const double shift[3] = {-55.0, -78.0, -28.0};
    const double stain[3] = {uniform(rng, -6, 6), uniform(rng, -6, 6), uniform(rng, -6, 6)};
    struct Wave {
        double kx, ky, phase, amp;
    };
    std::vector<Wave> waves;
    for (int k = 0; k < 3; ++k) {
        const double wavelength = uniform(rng, 0.12, 0.4) * scale;
        const double angle = uniform(rng, 0.0, kPi);
        waves.push_back({2 * kPi * std::cos(angle) / wavelength, 2 * kPi * std::sin(angle) / wavelength,
                         uniform(rng, 0.0, 2 * kPi), uniform(rng, 0.6, 1.0)});
    }
    double amp_sum = 0.0;
    for (const auto& wv : waves) amp_sum += wv.amp;
    const double channel_gain[3] = {0.8, 1.0, 0.6};
    const double tumor_noise = recipe.noise * (1.0 + 0.6 * delta);

    out.image = Raster(w, h, 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!out.tissue.get(x, y)) {
                const double bg = 246.0 + 2.5 * standard_normal(rng);
                for (int c = 0; c < 3; ++c) out.image.at(x, y, c) = clamp_u8(bg);
                continue;
            }
            double mod = 0.0;
            for (const auto& wv : waves) mod += wv.amp * std::sin(wv.kx * x + wv.ky * y + wv.phase);
            mod *= recipe.modulation / amp_sum;
            const bool tumor = out.tumor.get(x, y);
            const double sigma = tumor ? tumor_noise : recipe.noise;
            for (int c = 0; c < 3; ++c) {
                double v = healthy[c] + stain[c] + channel_gain[c] * mod + sigma * standard_normal(rng);
                if (tumor) v += delta * shift[c];
                out.image.at(x, y, c) = clamp_u8(v);
            }
        }
    }
    return out;
}

std::string_view to_string(Split s) {
    switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    }
    return "test";
}

Split split_from_string(std::string_view s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    fail(ErrorCode::ParseError, "unknown split '" + std::string(s) + "'");
}

std::vector<const CorpusEntry*> CorpusManifest::in_split(Split s) const {
    std::vector<const CorpusEntry*> out;
    for (const auto& e : slides)
        if (e.split == s) out.push_back(&e);
    return out;
}

const CorpusEntry* CorpusManifest::find(const std::string& slide_id) const {
    for (const auto& e : slides)
        if (e.slide_id == slide_id) return &e;
    return nullptr;
}

CorpusManifest plan_corpus(const CorpusConfig& config) {
    require(config.train + config.val + config.test >= 1, ErrorCode::InvalidArgument, "corpus needs >= 1 slide");
    require(config.train >= 0 && config.val >= 0 && config.test >= 0, ErrorCode::InvalidArgument,
            "split sizes must be non-negative");
    require(config.separability_min <= config.separability_max, ErrorCode::InvalidArgument,
            "bad separability range");
    require(config.tumor_blobs_min >= 1 && config.tumor_blobs_min <= config.tumor_blobs_max,
            ErrorCode::InvalidArgument, "bad tumour blob range");
    CorpusManifest m;
    m.corpus_id = config.corpus_id;
    m.seed = config.seed;
    Rng rng(config.seed);
    int index = 0;
    auto add = [&](int count, Split split) {
        for (int i = 0; i < count; ++i, ++index) {
            CorpusEntry e;
            char id[32];
            std::snprintf(id, sizeof(id), "slide_%03d", index);
            e.slide_id = id;
            e.split = split;
            e.recipe = config.base;
            e.recipe.seed = derive_seed(config.seed, static_cast<std::uint64_t>(index));
            e.recipe.separability = uniform(rng, config.separability_min, config.separability_max);
            e.recipe.tumor_blobs = config.tumor_blobs_min +
                                   static_cast<int>(rng() % static_cast<std::uint64_t>(
                                                              config.tumor_blobs_max - config.tumor_blobs_min + 1));
            e.recipe.validate();
            m.slides.push_back(std::move(e));
        }
    };
    add(config.train, Split::Train);
    add(config.val, Split::Val);
    add(config.test, Split::Test);
    return m;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::Io, "cannot write " + path.string());
    out << text;
}

} // namespace

CorpusManifest generate_corpus(const CorpusConfig& config, const std::filesystem::path& root) {
    CorpusManifest m = plan_corpus(config);
    std::filesystem::create_directories(root);
    for (const auto& e : m.slides) {
        const auto dir = root / e.slide_id;
        std::filesystem::create_directories(dir);
        const SyntheticSlide s = generate_slide(e.recipe);
        write_png(dir / "image.png", s.image);
        write_mask_png(dir / "tumor_mask.png", s.tumor);
        write_mask_png(dir / "tissue_mask.png", s.tissue);
        write_text(dir / "recipe.json", recipe_to_json(e.recipe).dump(2) + "\n");
    }
    save_manifest(m, root);
    return m;
}

nlohmann::json recipe_to_json(const SlideRecipe& r) {
    return {{"seed", r.seed},
            {"width", r.width},
            {"height", r.height},
            {"tumor_blobs", r.tumor_blobs},
            {"tumor_radius_min", r.tumor_radius_min},
            {"tumor_radius_max", r.tumor_radius_max},
            {"tissue_radius_min", r.tissue_radius_min},
            {"tissue_radius_max", r.tissue_radius_max},
            {"separability", r.separability},
            {"noise", r.noise},
            {"modulation", r.modulation}};
}

SlideRecipe recipe_from_json(const nlohmann::json& j) {
    SlideRecipe r;
    r.seed = j.at("seed").get<std::uint64_t>();
    r.width = j.at("width").get<int>();
    r.height = j.at("height").get<int>();
    r.tumor_blobs = j.at("tumor_blobs").get<int>();
    r.tumor_radius_min = j.at("tumor_radius_min").get<double>();
    r.tumor_radius_max = j.at("tumor_radius_max").get<double>();
    r.tissue_radius_min = j.at("tissue_radius_min").get<double>();
    r.tissue_radius_max = j.at("tissue_radius_max").get<double>();
    r.separability = j.at("separability").get<double>();
    r.noise = j.at("noise").get<double>();
    r.modulation = j.at("modulation").get<double>();
    r.validate();
    return r;
}

nlohmann::json manifest_to_json(const CorpusManifest& m) {
    nlohmann::json slides = nlohmann::json::array();
    for (const auto& e : m.slides) {
        slides.push_back({{"slide_id", e.slide_id},
                          {"split", to_string(e.split)},
                          {"recipe", recipe_to_json(e.recipe)},
                          {"image", e.slide_id + "/image.png"},
                          {"tumor_mask", e.slide_id + "/tumor_mask.png"},
                          {"tissue_mask", e.slide_id + "/tissue_mask.png"}});
    }
    nlohmann::json j{{"version", 1}, {"corpus_id", m.corpus_id}, {"seed", m.seed}, {"slides", std::move(slides)}};
    if (m.calibration) j["calibration"] = {{"h_min", m.calibration->h_min}, {"h_max", m.calibration->h_max}};
    return j;
}

CorpusManifest manifest_from_json(const nlohmann::json& j) {
    CorpusManifest m;
    try {
        require(j.at("version").get<int>() == 1, ErrorCode::ParseError, "manifest: unsupported version");
        m.corpus_id = j.at("corpus_id").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& s : j.at("slides")) {
            CorpusEntry e;
            e.slide_id = s.at("slide_id").get<std::string>();
            e.split = split_from_string(s.at("split").get<std::string>());
            e.recipe = recipe_from_json(s.at("recipe"));
            m.slides.push_back(std::move(e));
        }
        if (j.contains("calibration")) {
            m.calibration = Calibration{j["calibration"].at("h_min").get<double>(),
                                        j["calibration"].at("h_max").get<double>()};
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ParseError, std::string("manifest: ") + e.what());
    }
    return m;
}

void save_manifest(const CorpusManifest& m, const std::filesystem::path& root) {
    write_text(root / "manifest.json", manifest_to_json(m).dump(2) + "\n");
}

CorpusManifest load_manifest(const std::filesystem::path& root) {
    std::ifstream in(root / "manifest.json");
    require(static_cast<bool>(in), ErrorCode::NotFound, "no manifest.json under " + root.string());
    try {
        return manifest_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ParseError, std::string("manifest: ") + e.what());
    }
}

SyntheticSlide load_slide(const std::filesystem::path& root, const std::string& slide_id) {
    const auto dir = root / slide_id;
    require(std::filesystem::exists(dir / "image.png"), ErrorCode::NotFound, "unknown slide " + slide_id);
    return {read_png(dir / "image.png"), read_mask_png(dir / "tumor_mask.png"),
            read_mask_png(dir / "tissue_mask.png")};
}

} // namespace wsic
