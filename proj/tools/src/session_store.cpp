#include "session_store.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "files.hpp"
#include "wsic/error.hpp"
#include "wsic/uncertainty.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace wsic::app {

int http_status(ErrorCode code) {
    switch (code) {
    case ErrorCode::NotFound: return 404;
    case ErrorCode::EmptyConfidentSet:
    case ErrorCode::ContradictoryCorrection:
    case ErrorCode::NoPendingScribbles: return 409;
    case ErrorCode::ZeroPatches:
    case ErrorCode::DegenerateInput:
    case ErrorCode::NonSimplePolygon:
    case ErrorCode::SingleClass: return 422;
    case ErrorCode::InvalidArgument:
    case ErrorCode::UnknownPolicy:
    case ErrorCode::ParseError: return 400;
    case ErrorCode::Io: return 500;
    }
    return 500;
}

namespace {

constexpr int kSnapshotVersion = 1;
constexpr double kQuantScale = 65535.0;

std::vector<int> quantize(const std::vector<double>& values) {
    std::vector<int> q(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        q[i] = static_cast<int>(std::lround(std::clamp(values[i], 0.0, 1.0) * kQuantScale));
    return q;
}

json grid_header(const PatchGrid& g) {
    std::vector<int> xy, cells;
    xy.reserve(2 * g.size());
    cells.reserve(2 * g.size());
    for (const auto& p : g.patches) {
        xy.push_back(p.x);
        xy.push_back(p.y);
        cells.push_back(p.row);
        cells.push_back(p.col);
    }
    return {{"slide_width", g.slide_width},
            {"slide_height", g.slide_height},
            {"patch_size", g.spec.size},
            {"stride", g.spec.grid_stride()},
            {"rows", g.rows},
            {"cols", g.cols},
            {"patches", g.size()},
            {"xy", xy},
            {"cells", cells}};
}

ScribbleKind api_kind(const std::string& s) {
    if (s == "fp" || s == "corrective_fp") return ScribbleKind::CorrectiveFp;
    if (s == "fn" || s == "corrective_fn") return ScribbleKind::CorrectiveFn;
    fail(ErrorCode::InvalidArgument, "scribble kind must be 'fp' or 'fn', got '" + s + "'");
}

std::string api_kind_name(ScribbleKind k) { return k == ScribbleKind::CorrectiveFn ? "fn" : "fp"; }

json pending_to_json(const PendingScribble& p) {
    json pts = json::array();
    for (const auto& q : p.points) pts.push_back({q.x, q.y});
    return {{"kind", api_kind_name(p.kind)}, {"points", pts}, {"patch_ids", p.patch_ids}};
}

PendingScribble pending_from_json(const json& j) {
    PendingScribble p;
    p.kind = api_kind(j.at("kind").get<std::string>());
    for (const auto& q : j.at("points")) p.points.push_back({q.at(0).get<double>(), q.at(1).get<double>()});
    p.patch_ids = j.at("patch_ids").get<std::vector<int>>();
    return p;
}

template <typename T>
T body_value(const json& body, const char* key, T fallback) {
    if (!body.is_object() || !body.contains(key) || body.at(key).is_null()) return fallback;
    try {
        return body.at(key).get<T>();
    } catch (const json::exception&) {
        fail(ErrorCode::InvalidArgument, std::string("field '") + key + "' has the wrong type");
    }
}

} // namespace

// Immutable view published after every mutation; GET handlers only read this.
struct SessionStore::Committed {
    int pass_count = 0;
    std::vector<int> heatmap_q;
    std::vector<int> hard_code;
    std::size_t pending = 0;
    json history = json::array();
};

struct SessionStore::Entry {
    std::string session_id;
    std::shared_ptr<const SlideData> slide;
    json grid_json;
    json uncertainty_json;
    double t_thresh = 0.0;

    std::mutex write_mutex;
    CorrectionSession session;
    std::vector<PendingScribble> pending;
    json history = json::array();

    mutable std::mutex view_mutex;
    std::shared_ptr<const Committed> view;

    std::shared_ptr<const Committed> snapshot() const {
        std::lock_guard lock(view_mutex);
        return view;
    }
};

SessionStore::SessionStore(DataRoot root) : root_(std::move(root)) { load_persisted(); }

SessionStore::~SessionStore() = default;

std::shared_ptr<const SlideData> SessionStore::slide(const std::string& slide_id) {
    std::lock_guard lock(slides_mutex_);
    if (auto it = slides_.find(slide_id); it != slides_.end()) return it->second;
    auto data = std::make_shared<const SlideData>(root_.load(slide_id));
    slides_.emplace(slide_id, data);
    return data;
}

std::shared_ptr<SessionStore::Entry> SessionStore::find(const std::string& session_id) const {
    std::shared_lock lock(map_mutex_);
    auto it = sessions_.find(session_id);
    require(it != sessions_.end(), ErrorCode::NotFound, "unknown session '" + session_id + "'");
    return it->second;
}

std::vector<std::string> SessionStore::session_ids() const {
    std::shared_lock lock(map_mutex_);
    std::vector<std::string> ids;
    for (const auto& [id, e] : sessions_) ids.push_back(id);
    return ids;
}

namespace {

json pass_entry(const CorrectionSession& s, const SlideData& slide, int pass, int n_epoch, const std::string& mode,
                double elapsed_ms, int fp, int fn) {
    json j{{"pass", pass}, {"n_epoch", n_epoch}, {"mode", mode}, {"elapsed_ms", elapsed_ms},
           {"fp_patches", fp}, {"fn_patches", fn}};
    if (slide.truth) {
        const Confusion c = confusion(s.predicted_labels(), *slide.truth);
        j["confusion"] = {{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}};
        j["metrics"] = metrics_to_json(wsi_metrics(c));
    }
    return j;
}

} // namespace

void SessionStore::commit(Entry& e) const {
    auto v = std::make_shared<Committed>();
    v->pass_count = e.session.pass_count;
    v->heatmap_q = quantize(e.session.heatmap);
    v->hard_code.assign(e.session.hard_code.begin(), e.session.hard_code.end());
    v->pending = e.pending.size();
    v->history = e.history;
    std::lock_guard lock(e.view_mutex);
    e.view = std::move(v);
}

void SessionStore::persist(const Entry& e) const {
    json pending = json::array();
    for (const auto& p : e.pending) pending.push_back(pending_to_json(p));
    const json j{{"version", kSnapshotVersion},
                 {"session_id", e.session_id},
                 {"slide_id", e.session.slide_id},
                 {"snapshot", session_snapshot(e.session)},
                 {"pending", pending},
                 {"history", e.history}};
    write_text_atomic(root_.sessions_dir() / (e.session_id + ".json"), j.dump(1) + "\n");
}

void SessionStore::load_persisted() {
    const fs::path dir = root_.sessions_dir();
    if (!fs::is_directory(dir)) return;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".json") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        json j;
        try {
            j = json::parse(read_text(f));
        } catch (const json::parse_error& ex) {
            fail(ErrorCode::ParseError, f.string() + ": " + ex.what());
        }
        auto e = std::make_shared<Entry>();
        try {
            require(j.at("version").get<int>() == kSnapshotVersion, ErrorCode::ParseError,
                    f.string() + ": unsupported session version");
            e->session_id = j.at("session_id").get<std::string>();
            e->slide = slide(j.at("slide_id").get<std::string>());
            e->session = restore_session(j.at("snapshot"), e->slide->grid, e->slide->records);
            for (const auto& p : j.at("pending")) e->pending.push_back(pending_from_json(p));
            e->history = j.at("history");
        } catch (const json::exception& ex) {
            fail(ErrorCode::ParseError, f.string() + ": " + ex.what());
        }
        e->grid_json = grid_header(e->slide->grid);
        e->t_thresh = e->session.t_thresh;
        const SessionOptions opts = root_.session_options();
        const Calibration* calib = opts.calibration ? &*opts.calibration : nullptr;
        e->uncertainty_json = report_to_json(uncertainty_report(e->slide->records, e->session.t_thresh, calib));
        commit(*e);
        if (e->session_id.size() > 1 && e->session_id[0] == 's') {
            try {
                next_id_ = std::max<std::uint64_t>(next_id_, std::stoull(e->session_id.substr(1)) + 1);
            } catch (const std::exception&) {
            }
        }
        sessions_.emplace(e->session_id, std::move(e));
    }
}

json SessionStore::list_slides() const {
    json slides = json::array();
    for (const auto& s : root_.list_slides()) {
        json j{{"slide_id", s.slide_id}, {"width", s.width},       {"height", s.height},
               {"rows", s.rows},         {"cols", s.cols},         {"patches", s.patches},
               {"has_image", s.has_image}, {"has_truth", s.has_truth}};
        j["split"] = s.split ? json(*s.split) : json(nullptr);
        j["separability"] = s.separability ? json(*s.separability) : json(nullptr);
        slides.push_back(std::move(j));
    }
    return {{"slides", slides}};
}

json SessionStore::create(const json& body) {
    require(body.is_object() && body.contains("slide_id") && body.at("slide_id").is_string(),
            ErrorCode::InvalidArgument, "body must carry a string 'slide_id'");
    const std::string slide_id = body.at("slide_id").get<std::string>();
    auto data = slide(slide_id);

    SessionOptions opts = root_.session_options();
    opts.seed = body_value<std::uint64_t>(body, "seed", 0);
    auto e = std::make_shared<Entry>();
    e->slide = data;
    e->session = init_session(data->grid, data->records, opts);
    e->grid_json = grid_header(data->grid);
    const Calibration* calib = opts.calibration ? &*opts.calibration : nullptr;
    const UncertaintyReport report = uncertainty_report(data->records, opts.t_thresh, calib);
    e->uncertainty_json = report_to_json(report);
    e->history.push_back(pass_entry(e->session, *data, 0, 0, "rough", 0.0, 0, 0));

    e->t_thresh = e->session.t_thresh;
    {
        std::unique_lock lock(map_mutex_);
        do e->session_id = "s" + std::to_string(next_id_++);
        while (sessions_.count(e->session_id));
    }
    persist(*e);
    commit(*e);
    {
        std::unique_lock lock(map_mutex_);
        sessions_.emplace(e->session_id, e);
    }

    const CorrectionSession& s = e->session;
    json defaults{{"mode", "naive"}, {"n_epoch_star", CorrectionPolicy{}.n_epoch_star},
                  {"n_pass", CorrectionPolicy{}.n_pass}, {"n_epoch_naive", session_epochs(s, CorrectionPolicy{})}};
    if (s.h_star) defaults["n_epoch_uncertainty"] = session_epochs(s, {PolicyMode::Uncertainty, 30, 4});
    else defaults["n_epoch_uncertainty"] = nullptr;
    json out{{"session_id", e->session_id},
             {"slide_id", slide_id},
             {"grid", {{"rows", s.grid.rows}, {"cols", s.grid.cols}, {"patch_size", s.grid.spec.size},
                       {"stride", s.grid.spec.grid_stride()}, {"slide_width", s.grid.slide_width},
                       {"slide_height", s.grid.slide_height}}},
             {"t_thresh", s.t_thresh},
             {"patch_count", s.records.size()},
             {"h_wsi", s.h_wsi},
             {"sigma_wsi", report.wsi.sigma_wsi},
             {"empty_t", s.empty_t},
             {"init", {{"set_size", s.init_ids.size()}, {"epochs", s.init_epochs}, {"accuracy", s.init_accuracy}}},
             {"policy_defaults", defaults},
             {"has_truth", data->truth.has_value()}};
    out["h_star"] = s.h_star ? json(*s.h_star) : json(nullptr);
    return out;
}

json SessionStore::heatmap(const std::string& session_id) const {
    const auto e = find(session_id);
    const auto v = e->snapshot();
    return {{"session_id", session_id},
            {"pass", v->pass_count},
            {"grid", e->grid_json},
            {"scale", static_cast<int>(kQuantScale)},
            {"values", v->heatmap_q},
            {"hard_code", v->hard_code},
            {"pending_scribbles", v->pending}};
}

json SessionStore::uncertainty(const std::string& session_id) const {
    const auto e = find(session_id);
    json out = e->uncertainty_json;
    out["session_id"] = session_id;
    out["t_thresh"] = e->t_thresh;
    out["grid"] = e->grid_json;
    return out;
}

json SessionStore::metrics(const std::string& session_id) const {
    const auto e = find(session_id);
    const auto v = e->snapshot();
    return {{"session_id", session_id},
            {"slide_id", e->slide->slide_id},
            {"pass", v->pass_count},
            {"has_truth", e->slide->truth.has_value()},
            {"history", v->history}};
}

json SessionStore::add_scribble(const std::string& session_id, const json& body) {
    const auto e = find(session_id);
    require(body.is_object(), ErrorCode::InvalidArgument, "body must be a JSON object");
    require(body.contains("kind") && body.at("kind").is_string(), ErrorCode::InvalidArgument,
            "body must carry 'kind' ('fp' or 'fn')");
    require(body.contains("points") && body.at("points").is_array(), ErrorCode::InvalidArgument,
            "body must carry 'points' as [[x, y], ...]");
    PendingScribble p;
    p.kind = api_kind(body.at("kind").get<std::string>());
    for (const auto& q : body.at("points")) {
        require(q.is_array() && q.size() == 2 && q.at(0).is_number() && q.at(1).is_number(),
                ErrorCode::InvalidArgument, "each point must be [x, y]");
        const Point pt{q.at(0).get<double>(), q.at(1).get<double>()};
        require(std::isfinite(pt.x) && std::isfinite(pt.y), ErrorCode::InvalidArgument, "points must be finite");
        p.points.push_back(pt);
    }
    require(p.points.size() >= 2, ErrorCode::DegenerateInput, "a scribble needs at least 2 points");

    std::lock_guard lock(e->write_mutex);
    Polyline line;
    line.points = p.points;
    require(line.length() > 0.0, ErrorCode::DegenerateInput, "scribble has zero length");
    p.patch_ids = resolve_scribble_patches(e->session.grid, line);
    require(!p.patch_ids.empty(), ErrorCode::ZeroPatches, "scribble covers no tissue patch");

    std::vector<Correction> all;
    for (const auto& q : e->pending) all.push_back({q.kind, q.patch_ids});
    all.push_back({p.kind, p.patch_ids});
    check_corrections(e->session, all);

    e->pending.push_back(p);
    persist(*e);
    commit(*e);
    return {{"session_id", session_id},
            {"kind", api_kind_name(p.kind)},
            {"patch_ids", p.patch_ids},
            {"pending_scribbles", e->pending.size()}};
}

json SessionStore::run_pass(const std::string& session_id, const json& body) {
    const auto e = find(session_id);
    CorrectionPolicy policy;
    policy.mode = policy_mode_from_string(body_value<std::string>(body, "mode", "naive"));
    policy.n_epoch_star = body_value<int>(body, "n_epoch_star", policy.n_epoch_star);
    policy.validate();

    std::lock_guard lock(e->write_mutex);
    require(!e->pending.empty(), ErrorCode::NoPendingScribbles, "no pending scribbles; post scribbles first");
    std::vector<Correction> corrections;
    int fp = 0, fn = 0;
    for (const auto& p : e->pending) {
        corrections.push_back({p.kind, p.patch_ids});
        (p.kind == ScribbleKind::CorrectiveFn ? fn : fp) += static_cast<int>(p.patch_ids.size());
    }
    // Work on a copy so a failed pass leaves the committed session untouched.
    CorrectionSession next = e->session;
    const auto start = std::chrono::steady_clock::now();
    const int n_epoch = apply_correction(next, corrections, policy);
    const double elapsed_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

    e->session = std::move(next);
    e->pending.clear();
    e->history.push_back(
        pass_entry(e->session, *e->slide, e->session.pass_count, n_epoch, to_string(policy.mode), elapsed_ms, fp, fn));
    persist(*e);
    commit(*e);

    json out{{"session_id", session_id},
             {"pass", e->session.pass_count},
             {"mode", to_string(policy.mode)},
             {"n_epoch", n_epoch},
             {"elapsed_ms", elapsed_ms},
             {"scale", static_cast<int>(kQuantScale)},
             {"values", quantize(e->session.heatmap)},
             {"hard_code", std::vector<int>(e->session.hard_code.begin(), e->session.hard_code.end())},
             {"signed_entropy", e->uncertainty_json.at("signed_entropy")}};
    if (e->slide->truth) out["metrics"] = e->history.back().at("metrics");
    if (policy.mode == PolicyMode::Uncertainty && e->session.empty_t)
        out["warning"] = "no patch above t_thresh; uncertainty policy fell back to n_epoch = 1";
    return out;
}

} // namespace wsic::app
