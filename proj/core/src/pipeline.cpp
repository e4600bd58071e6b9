#include "wsic/pipeline.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "wsic/error.hpp"
#include "wsic/rng.hpp"
#include "wsic/uncertainty.hpp"

namespace wsic {

std::vector<LabeledPatch> training_patches(const std::filesystem::path& corpus, const CorpusManifest& manifest,
                                           const PipelineConfig& config) {
    std::vector<LabeledPatch> out;
    std::uint64_t index = 0;
    for (const CorpusEntry* e : manifest.in_split(Split::Train)) {
        const SyntheticSlide slide = load_slide(corpus, e->slide_id);
        ScribbleParams params = config.scribble;
        params.seed = derive_seed(config.seed, 1000 + index++);
        const auto scribbles = ground_truth_scribbles(slide.tumor, slide.tissue, params);
        auto patches = scribble_patches(slide.image, scribbles, config.spec);
        std::move(patches.begin(), patches.end(), std::back_inserter(out));
    }
    require(!out.empty(), ErrorCode::InvalidArgument, "training split produced no scribble patches");
    return out;
}

SlideCase prepare_slide(const std::filesystem::path& corpus, const CorpusEntry& entry, const BackboneModel& model,
                        const PipelineConfig& config) {
    const SyntheticSlide slide = load_slide(corpus, entry.slide_id);
    SlideCase c;
    c.slide_id = entry.slide_id;
    c.separability = entry.recipe.separability;
    const BinaryMask tissue = tissue_mask(slide.image, config.tissue);
    c.grid = build_grid(entry.slide_id, slide.image.width(), slide.image.height(), tissue, config.spec);
    require(c.grid.size() > 0, ErrorCode::DegenerateInput, "slide " + entry.slide_id + " has no tissue patches");
    c.records = predict_slide(model, slide.image, c.grid, config.n_mc, derive_seed(config.seed, 2000 + entry.recipe.seed));
    c.truth = grid_labels(c.grid, slide.tumor, config.label);
    return c;
}

std::vector<SlideCase> prepare_split(const std::filesystem::path& corpus, const CorpusManifest& manifest, Split split,
                                     const BackboneModel& model, const PipelineConfig& config) {
    std::vector<SlideCase> out;
    for (const CorpusEntry* e : manifest.in_split(split)) out.push_back(prepare_slide(corpus, *e, model, config));
    return out;
}

TrainedPipeline train_pipeline(const std::filesystem::path& corpus, const CorpusManifest& manifest,
                               const PipelineConfig& config) {
    TrainedPipeline p;
    p.train = config.train;
    p.spec = config.spec;
    p.n_mc = config.n_mc;
    p.seed = config.seed;
    const auto data = training_patches(corpus, manifest, config);
    TrainResult tr = train_backbone(data, config.train);
    p.model = std::move(tr.model);
    p.train_accuracy = tr.train_accuracy;
    p.epoch_loss = std::move(tr.epoch_loss);

    const auto val = prepare_split(corpus, manifest, Split::Val, p.model, config);
    require(!val.empty(), ErrorCode::InvalidArgument, "corpus has no validation slides");
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& s : val) {
        for (std::size_t i = 0; i < s.records.size(); ++i) {
            scores.push_back(s.records[i].score);
            labels.push_back(s.truth[i]);
        }
    }
    p.threshold = optimize_threshold(scores, labels, config.spec.overlap);
    std::vector<double> h;
    for (const auto& s : val) h.push_back(wsi_uncertainty(s.records, p.threshold.t_thresh).h_wsi);
    p.calibration = calibrate(h);
    return p;
}

nlohmann::json pipeline_to_json(const TrainedPipeline& p) {
    nlohmann::json j = model_to_json(p.model, p.train);
    j["threshold"] = {{"t_thresh", p.threshold.t_thresh}, {"overlap", p.threshold.overlap}};
    j["calibration"] = {{"h_min", p.calibration.h_min}, {"h_max", p.calibration.h_max}};
    j["patch_spec"] = patch_spec_to_json(p.spec);
    j["n_mc"] = p.n_mc;
    j["seed"] = p.seed;
    j["train_accuracy"] = p.train_accuracy;
    j["epoch_loss"] = p.epoch_loss;
    return j;
}

TrainedPipeline pipeline_from_json(const nlohmann::json& j) {
    TrainedPipeline p;
    p.model = model_from_json(j);
    try {
        const auto& tc = j.at("train_config");
        p.train.learning_rate = tc.at("learning_rate").get<double>();
        p.train.epochs = tc.at("epochs").get<int>();
        p.train.batch_size = tc.at("batch_size").get<int>();
        p.train.flips = tc.at("flips").get<bool>();
        p.train.rot90 = tc.at("rot90").get<bool>();
        p.train.seed = tc.at("seed").get<std::uint64_t>();
        p.train.latent_dim = p.model.latent_dim;
        p.train.dropout = p.model.dropout;
        p.threshold.t_thresh = j.at("threshold").at("t_thresh").get<double>();
        p.threshold.overlap = j.at("threshold").at("overlap").get<double>();
        p.calibration.h_min = j.at("calibration").at("h_min").get<double>();
        p.calibration.h_max = j.at("calibration").at("h_max").get<double>();
        p.spec = patch_spec_from_json(j.at("patch_spec"));
        p.n_mc = j.at("n_mc").get<int>();
        p.seed = j.value("seed", std::uint64_t{0});
        p.train_accuracy = j.value("train_accuracy", 0.0);
        p.epoch_loss = j.value("epoch_loss", std::vector<double>{});
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ParseError, std::string("model checkpoint: ") + e.what());
    }
    return p;
}

void save_pipeline(const TrainedPipeline& p, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorCode::Io, "cannot write " + path.string());
    out << pipeline_to_json(p).dump(1) << '\n';
    require(static_cast<bool>(out), ErrorCode::Io, "failed writing " + path.string());
}

TrainedPipeline load_pipeline(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorCode::NotFound, "cannot open model " + path.string());
    try {
        return pipeline_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
}

PipelineConfig pipeline_config(const TrainedPipeline& p) {
    PipelineConfig c;
    c.spec = p.spec;
    c.train = p.train;
    c.n_mc = p.n_mc;
    c.seed = p.seed;
    return c;
}

SessionOptions session_options(const TrainedPipeline& p) {
    SessionOptions o;
    o.t_thresh = p.threshold.t_thresh;
    o.calibration = p.calibration;
    return o;
}

} // namespace wsic
