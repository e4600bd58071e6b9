#include "wsic/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "wsic/error.hpp"

namespace wsic {

std::vector<double> extract_descriptor(const Raster& patch) {
    require(patch.channels() == 3, ErrorCode::InvalidArgument, "descriptor expects an RGB patch");
    std::vector<double> d(kDescriptorDim, 0.0);
    const std::size_t n = static_cast<std::size_t>(patch.width()) * patch.height();
    double sum[3] = {0, 0, 0}, sq[3] = {0, 0, 0};
    std::uint32_t hist[3][8] = {};
    const auto& px = patch.data();
    for (std::size_t i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c) {
            const std::uint8_t v = px[3 * i + c];
            sum[c] += v;
            sq[c] += static_cast<double>(v) * v;
            ++hist[c][v >> 5];
        }
    }
    for (int c = 0; c < 3; ++c) {
        const double mean = sum[c] / n;
        const double var = std::max(0.0, sq[c] / n - mean * mean);
        d[c] = mean / 255.0;
        d[3 + c] = std::sqrt(var) / 127.5;
        for (int b = 0; b < 8; ++b) d[6 + 8 * c + b] = static_cast<double>(hist[c][b]) / n;
    }
    return d;
}

Raster augment_patch(const Raster& patch, int transform) {
    require(patch.width() == patch.height(), ErrorCode::InvalidArgument, "augmentation needs a square patch");
    require(transform >= 0 && transform < 8, ErrorCode::InvalidArgument, "transform must be in [0, 8)");
    const int s = patch.width();
    const int ch = patch.channels();
    Raster out(s, s, ch);
    for (int y = 0; y < s; ++y) {
        for (int x = 0; x < s; ++x) {
            int sx = x, sy = y;
            if (transform & 4) sx = s - 1 - sx; // horizontal flip
            for (int r = 0; r < (transform & 3); ++r) {
                const int t = sx;
                sx = sy;
                sy = s - 1 - t;
            }
            for (int c = 0; c < ch; ++c) out.at(x, y, c) = patch.at(sx, sy, c);
        }
    }
    return out;
}

double squash(double z) {
    const double s = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    return std::clamp(s, 1e-12, 1.0 - 1e-12);
}

std::vector<double> BackboneModel::latent(const std::vector<double>& x) const {
    std::vector<double> h(latent_dim);
    for (int j = 0; j < latent_dim; ++j) {
        double z = b1[j];
        const double* row = w1.data() + static_cast<std::size_t>(j) * input_dim;
        for (int i = 0; i < input_dim; ++i) z += row[i] * x[i];
        h[j] = z > 0.0 ? z : 0.0;
    }
    return h;
}

double BackboneModel::logit(const std::vector<double>& h, const std::vector<double>& mask) const {
    double z = b2;
    if (mask.empty()) {
        for (int j = 0; j < latent_dim; ++j) z += w2[j] * h[j];
    } else {
        for (int j = 0; j < latent_dim; ++j) z += w2[j] * h[j] * mask[j];
    }
    return z;
}

double BackboneModel::score(const std::vector<double>& x) const { return squash(logit(latent(x))); }

std::size_t BackboneModel::parameter_count() const {
    return static_cast<std::size_t>(latent_dim) * input_dim + 2 * static_cast<std::size_t>(latent_dim) + 1;
}

void BackboneModel::validate() const {
    require(input_dim > 0 && latent_dim > 0, ErrorCode::InvalidArgument, "model dimensions must be positive");
    require(dropout >= 0.0 && dropout < 1.0, ErrorCode::InvalidArgument, "dropout must be in [0, 1)");
    require(w1.size() == static_cast<std::size_t>(latent_dim) * input_dim && b1.size() == static_cast<std::size_t>(latent_dim) &&
                w2.size() == static_cast<std::size_t>(latent_dim),
            ErrorCode::InvalidArgument, "model weight shapes are inconsistent");
    auto finite = [](double v) { return std::isfinite(v); };
    require(std::all_of(w1.begin(), w1.end(), finite) && std::all_of(b1.begin(), b1.end(), finite) &&
                std::all_of(w2.begin(), w2.end(), finite) && std::isfinite(b2),
            ErrorCode::InvalidArgument, "model weights must be finite");
}

BackboneModel init_backbone(int input_dim, int latent_dim, double dropout, std::uint64_t seed) {
    BackboneModel m;
    m.input_dim = input_dim;
    m.latent_dim = latent_dim;
    m.dropout = dropout;
    Rng rng(seed);
    const double limit1 = std::sqrt(6.0 / input_dim);
    const double limit2 = std::sqrt(6.0 / (latent_dim + 1));
    m.w1.resize(static_cast<std::size_t>(latent_dim) * input_dim);
    for (double& w : m.w1) w = (2.0 * uniform01(rng) - 1.0) * limit1;
    m.b1.assign(latent_dim, 0.01);
    m.w2.resize(latent_dim);
    for (double& w : m.w2) w = (2.0 * uniform01(rng) - 1.0) * limit2;
    m.b2 = 0.0;
    m.validate();
    return m;
}

std::vector<double> dropout_mask(int size, double p, Rng& rng) {
    std::vector<double> mask(size, 1.0);
    if (p <= 0.0) return mask;
    const double keep = 1.0 / (1.0 - p);
    for (double& m : mask) m = uniform01(rng) < p ? 0.0 : keep;
    return mask;
}

double loss_and_gradient(const BackboneModel& model, const std::vector<double>& x, int label,
                         const std::vector<double>& mask, Gradient* grad) {
    const int in = model.input_dim, lat = model.latent_dim;
    std::vector<double> pre(lat), h(lat);
    for (int j = 0; j < lat; ++j) {
        double z = model.b1[j];
        const double* row = model.w1.data() + static_cast<std::size_t>(j) * in;
        for (int i = 0; i < in; ++i) z += row[i] * x[i];
        pre[j] = z;
        h[j] = z > 0.0 ? z : 0.0;
    }
    const double z = model.logit(h, mask);
    const double y = label ? 1.0 : 0.0;
    // Numerically stable BCE with logits.
    const double loss = std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    if (grad != nullptr) {
        auto& g = grad->values;
        g.assign(model.parameter_count(), 0.0);
        const double dz = 1.0 / (1.0 + std::exp(-z)) - y;
        const std::size_t off_b1 = static_cast<std::size_t>(lat) * in;
        const std::size_t off_w2 = off_b1 + lat;
        const std::size_t off_b2 = off_w2 + lat;
        for (int j = 0; j < lat; ++j) {
            const double m = mask.empty() ? 1.0 : mask[j];
            g[off_w2 + j] = dz * h[j] * m;
            const double dh = pre[j] > 0.0 ? dz * model.w2[j] * m : 0.0;
            g[off_b1 + j] = dh;
            double* row = g.data() + static_cast<std::size_t>(j) * in;
            for (int i = 0; i < in; ++i) row[i] = dh * x[i];
        }
        g[off_b2] = dz;
    }
    return loss;
}

std::vector<double> flatten_parameters(const BackboneModel& model) {
    std::vector<double> flat;
    flat.reserve(model.parameter_count());
    flat.insert(flat.end(), model.w1.begin(), model.w1.end());
    flat.insert(flat.end(), model.b1.begin(), model.b1.end());
    flat.insert(flat.end(), model.w2.begin(), model.w2.end());
    flat.push_back(model.b2);
    return flat;
}

void assign_parameters(BackboneModel& model, const std::vector<double>& flat) {
    require(flat.size() == model.parameter_count(), ErrorCode::InvalidArgument, "parameter vector size mismatch");
    auto it = flat.begin();
    std::copy_n(it, model.w1.size(), model.w1.begin());
    it += static_cast<std::ptrdiff_t>(model.w1.size());
    std::copy_n(it, model.b1.size(), model.b1.begin());
    it += static_cast<std::ptrdiff_t>(model.b1.size());
    std::copy_n(it, model.w2.size(), model.w2.begin());
    it += static_cast<std::ptrdiff_t>(model.w2.size());
    model.b2 = *it;
}

namespace {

void check_config(const TrainConfig& c) {
    require(c.learning_rate > 0.0, ErrorCode::InvalidArgument, "learning rate must be positive");
    require(c.epochs >= 1, ErrorCode::InvalidArgument, "epochs must be >= 1");
    require(c.batch_size >= 1, ErrorCode::InvalidArgument, "batch size must be >= 1");
    require(c.dropout >= 0.0 && c.dropout < 1.0, ErrorCode::InvalidArgument, "dropout must be in [0, 1)");
}

void check_both_classes(const std::vector<int>& labels) {
    const bool pos = std::find(labels.begin(), labels.end(), 1) != labels.end();
    const bool neg = std::find(labels.begin(), labels.end(), 0) != labels.end();
    require(pos && neg, ErrorCode::SingleClass, "training data must contain both classes");
}

// Shared optimisation loop; `descriptor_of(i, rng)` supplies sample i's input.
template <typename DescriptorFn>
TrainResult run_adam(std::size_t n, const std::vector<int>& labels, int input_dim, const TrainConfig& config,
                     DescriptorFn&& descriptor_of, const std::vector<std::vector<double>>& clean) {
    TrainResult result;
    BackboneModel model = init_backbone(input_dim, config.latent_dim, config.dropout, derive_seed(config.seed, 1));
    Rng rng(derive_seed(config.seed, 2));
    std::vector<double> params = flatten_parameters(model);
    std::vector<double> m(params.size(), 0.0), v(params.size(), 0.0), batch_grad(params.size());
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Gradient g;
    long step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t end = std::min(n, start + static_cast<std::size_t>(config.batch_size));
            std::fill(batch_grad.begin(), batch_grad.end(), 0.0);
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t idx = order[k];
                const auto x = descriptor_of(idx, rng);
                const auto mask = dropout_mask(model.latent_dim, model.dropout, rng);
                loss_and_gradient(model, x, labels[idx], mask, &g);
                for (std::size_t p = 0; p < params.size(); ++p) batch_grad[p] += g.values[p];
            }
            const double inv = 1.0 / static_cast<double>(end - start);
            ++step;
            const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
            for (std::size_t p = 0; p < params.size(); ++p) {
                const double gp = batch_grad[p] * inv;
                m[p] = config.beta1 * m[p] + (1.0 - config.beta1) * gp;
                v[p] = config.beta2 * v[p] + (1.0 - config.beta2) * gp * gp;
                params[p] -= config.learning_rate * (m[p] / bc1) / (std::sqrt(v[p] / bc2) + config.epsilon);
            }
            assign_parameters(model, params);
        }
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) total += loss_and_gradient(model, clean[i], labels[i], {}, nullptr);
        result.epoch_loss.push_back(total / static_cast<double>(n));
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if ((model.score(clean[i]) > 0.5 ? 1 : 0) == labels[i]) ++correct;
    }
    result.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    model.validate();
    result.model = std::move(model);
    return result;
}

} // namespace

TrainResult train_backbone_descriptors(const std::vector<std::vector<double>>& descriptors,
                                       const std::vector<int>& labels, const TrainConfig& config) {
    check_config(config);
    require(!descriptors.empty() && descriptors.size() == labels.size(), ErrorCode::InvalidArgument,
            "descriptors and labels must be non-empty and aligned");
    check_both_classes(labels);
    const int dim = static_cast<int>(descriptors.front().size());
    for (const auto& d : descriptors)
        require(static_cast<int>(d.size()) == dim, ErrorCode::InvalidArgument, "descriptor dimensions differ");
    return run_adam(
        descriptors.size(), labels, dim, config,
        [&](std::size_t i, Rng&) -> const std::vector<double>& { return descriptors[i]; }, descriptors);
}

TrainResult train_backbone(const std::vector<LabeledPatch>& data, const TrainConfig& config) {
    check_config(config);
    require(!data.empty(), ErrorCode::InvalidArgument, "training set is empty");
    std::vector<int> labels;
    std::vector<std::vector<double>> clean;
    labels.reserve(data.size());
    clean.reserve(data.size());
    for (const auto& s : data) {
        labels.push_back(s.label);
        clean.push_back(extract_descriptor(s.pixels));
    }
    check_both_classes(labels);
    const bool augment = config.flips || config.rot90;
    return run_adam(
        data.size(), labels, kDescriptorDim, config,
        [&](std::size_t i, Rng& rng) -> std::vector<double> {
            if (!augment) return clean[i];
            const int rot = config.rot90 ? static_cast<int>(rng() % 4) : 0;
            const int flip = config.flips ? static_cast<int>(rng() % 2) : 0;
            const int transform = rot | (flip << 2);
            if (transform == 0) return clean[i];
            return extract_descriptor(augment_patch(data[i].pixels, transform));
        },
        clean);
}

std::vector<LabeledPatch> scribble_patches(const Raster& image, const std::vector<Scribble>& scribbles,
                                           const PatchSpec& spec) {
    std::vector<LabeledPatch> out;
    for (const auto& s : scribbles) {
        const int label = s.cls == ScribbleClass::Tumor ? 1 : 0;
        for (const Patch& p : patches_along_scribble(s.polyline, spec, image.width(), image.height())) {
            out.push_back({image.crop(p.x, p.y, spec.size, spec.size), label});
        }
    }
    return out;
}

double McRecord::mean() const {
    if (mc_scores.empty()) return 0.0;
    return std::accumulate(mc_scores.begin(), mc_scores.end(), 0.0) / static_cast<double>(mc_scores.size());
}

McRecord predict_mc(const BackboneModel& model, const std::vector<double>& descriptor, int n_mc, std::uint64_t seed) {
    require(n_mc >= 2, ErrorCode::InvalidArgument, "n_mc must be >= 2");
    require(static_cast<int>(descriptor.size()) == model.input_dim, ErrorCode::InvalidArgument,
            "descriptor dimension does not match the model");
    McRecord r;
    r.features = model.latent(descriptor);
    r.score = squash(model.logit(r.features));
    Rng rng(seed);
    r.mc_scores.reserve(n_mc);
    for (int k = 0; k < n_mc; ++k) {
        const auto mask = dropout_mask(model.latent_dim, model.dropout, rng);
        r.mc_scores.push_back(squash(model.logit(r.features, mask)));
    }
    return r;
}

std::vector<McRecord> predict_slide(const BackboneModel& model, const Raster& image, const PatchGrid& grid, int n_mc,
                                    std::uint64_t seed) {
    std::vector<McRecord> out;
    out.reserve(grid.size());
    for (const Patch& p : grid.patches) {
        McRecord r = predict_mc(model, extract_descriptor(image.crop(p.x, p.y, grid.spec.size, grid.spec.size)), n_mc,
                                derive_seed(seed, static_cast<std::uint64_t>(p.id)));
        r.patch_id = p.id;
        r.x = p.x;
        r.y = p.y;
        out.push_back(std::move(r));
    }
    return out;
}

ThresholdConfig optimize_threshold(const std::vector<double>& scores, const std::vector<int>& labels,
                                   double overlap) {
    require(scores.size() == labels.size() && !scores.empty(), ErrorCode::InvalidArgument,
            "scores and labels must be non-empty and aligned");
    check_both_classes(labels);
    ThresholdConfig best{0.01, overlap};
    double best_f1 = -1.0;
    for (int k = 1; k <= 99; ++k) {
        const double t = k / 100.0;
        long tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            const bool pred = scores[i] > t;
            if (pred && labels[i] == 1) ++tp;
            else if (pred) ++fp;
            else if (labels[i] == 1) ++fn;
        }
        const double f1 = tp == 0 ? 0.0 : 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
        if (f1 > best_f1) {
            best_f1 = f1;
            best.t_thresh = t;
        }
    }
    return best;
}

std::string export_features(const FeatureHeader& header, const std::vector<McRecord>& records) {
    std::ostringstream out;
    out << nlohmann::json{{"version", header.version},
                          {"d_latent", header.d_latent},
                          {"n_mc", header.n_mc},
                          {"slide_id", header.slide_id}}
               .dump()
        << '\n';
    for (const auto& r : records) {
        out << nlohmann::json{{"patch_id", r.patch_id}, {"x", r.x},           {"y", r.y},
                              {"features", r.features}, {"mc_scores", r.mc_scores}, {"score", r.score}}
                   .dump()
            << '\n';
    }
    return out.str();
}

FeatureFile ingest_features(const std::string& text) {
    FeatureFile file;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    auto fail_at = [&](const std::string& what) {
        fail(ErrorCode::ParseError, "features line " + std::to_string(line_no) + ": " + what);
    };
    try {
        if (!std::getline(in, line)) {
            line_no = 1;
            fail_at("missing header");
        }
        ++line_no;
        const auto h = nlohmann::json::parse(line);
        file.header.version = h.at("version").get<int>();
        if (file.header.version != 1) fail_at("unsupported version");
        file.header.n_mc = h.at("n_mc").get<int>();
        file.header.d_latent = h.value("d_latent", 0);
        file.header.slide_id = h.value("slide_id", std::string());
        if (file.header.n_mc < 2) fail_at("n_mc must be >= 2");
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            const auto j = nlohmann::json::parse(line);
            McRecord r;
            r.patch_id = j.at("patch_id").get<int>();
            r.x = j.at("x").get<int>();
            r.y = j.at("y").get<int>();
            r.features = j.at("features").get<std::vector<double>>();
            r.mc_scores = j.at("mc_scores").get<std::vector<double>>();
            if (file.header.d_latent == 0) file.header.d_latent = static_cast<int>(r.features.size());
            if (static_cast<int>(r.features.size()) != file.header.d_latent || r.features.empty()) {
                fail_at("expected " + std::to_string(file.header.d_latent) + " features, got " +
                        std::to_string(r.features.size()));
            }
            if (static_cast<int>(r.mc_scores.size()) != file.header.n_mc) {
                fail_at("expected " + std::to_string(file.header.n_mc) + " mc_scores, got " +
                        std::to_string(r.mc_scores.size()));
            }
            for (double f : r.features)
                if (!std::isfinite(f)) fail_at("non-finite feature");
            for (double s : r.mc_scores)
                if (!(s >= 0.0 && s <= 1.0)) fail_at("mc score outside [0, 1]");
            r.score = j.contains("score") ? j.at("score").get<double>() : r.mean();
            if (!(r.score >= 0.0 && r.score <= 1.0)) fail_at("score outside [0, 1]");
            file.records.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        fail_at(e.what());
    }
    return file;
}

nlohmann::json model_to_json(const BackboneModel& model, const TrainConfig& config) {
    return {{"version", 1},
            {"input_dim", model.input_dim},
            {"latent_dim", model.latent_dim},
            {"dropout", model.dropout},
            {"w1", model.w1},
            {"b1", model.b1},
            {"w2", model.w2},
            {"b2", model.b2},
            {"train_config",
             {{"learning_rate", config.learning_rate},
              {"epochs", config.epochs},
              {"batch_size", config.batch_size},
              {"flips", config.flips},
              {"rot90", config.rot90},
              {"seed", config.seed}}}};
}

BackboneModel model_from_json(const nlohmann::json& j) {
    BackboneModel m;
    try {
        m.input_dim = j.at("input_dim").get<int>();
        m.latent_dim = j.at("latent_dim").get<int>();
        m.dropout = j.at("dropout").get<double>();
        m.w1 = j.at("w1").get<std::vector<double>>();
        m.b1 = j.at("b1").get<std::vector<double>>();
        m.w2 = j.at("w2").get<std::vector<double>>();
        m.b2 = j.at("b2").get<double>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ParseError, std::string("model checkpoint: ") + e.what());
    }
    m.validate();
    return m;
}

} // namespace wsic
