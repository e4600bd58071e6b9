#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "data_root.hpp"
#include "http_api.hpp"
#include "session_store.hpp"
#include "support/app_fixture.hpp"
#include "support/synthetic_session.hpp"

using namespace wsic;
using namespace wsic::testing;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

class Server {
public:
    explicit Server(const fs::path& root) : store_(app::DataRoot(root)) {
        app::register_routes(server_, store_);
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~Server() {
        server_.stop();
        thread_.join();
    }

    httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }
    app::SessionStore& store() { return store_; }

private:
    app::SessionStore store_;
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

json body(const httplib::Result& r) { return json::parse(r->body); }

httplib::Result post(httplib::Client& c, const std::string& path, const json& j) {
    return c.Post(path, j.dump(), "application/json");
}

// Copy of the shared trained corpus so session files do not leak between tests.
fs::path fresh_root(const std::string& name) {
    const fs::path dir = scratch_dir(name);
    fs::copy(trained_corpus(), dir / "c", fs::copy_options::recursive);
    fs::remove_all(dir / "c" / "sessions");
    return dir / "c";
}

std::string first_test_slide(const fs::path& root) {
    for (const auto& s : app::DataRoot(root).list_slides())
        if (s.split == "test") return s.slide_id;
    return {};
}

// Centres of two horizontally adjacent patches whose heatmap value exceeds 0.5.
std::optional<std::pair<Point, Point>> tumour_pair(const json& heat) {
    const auto& g = heat.at("grid");
    const auto xy = g.at("xy").get<std::vector<int>>();
    const auto cells = g.at("cells").get<std::vector<int>>();
    const auto v = heat.at("values").get<std::vector<int>>();
    const int half = g.at("patch_size").get<int>() / 2;
    const std::size_t n = v.size();
    for (std::size_t i = 0; i + 1 < n; ++i) {
        if (v[i] > 40000 && v[i + 1] > 40000 && cells[2 * i] == cells[2 * i + 2] && cells[2 * i + 1] + 1 == cells[2 * i + 3])
            return std::make_pair(Point{double(xy[2 * i] + half), double(xy[2 * i + 1] + half)},
                                  Point{double(xy[2 * i + 2] + half), double(xy[2 * i + 3] + half)});
    }
    return std::nullopt;
}

} // namespace

TEST(Http, SlidesAndSessions) {
    const fs::path root = fresh_root("http_slides");
    Server s(root);
    auto c = s.client();
    auto r = c.Get("/slides");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200);
    const auto slides = body(r).at("slides");
    EXPECT_EQ(slides.size(), 7u);
    EXPECT_TRUE(slides.at(0).at("has_truth").get<bool>());

    const std::string slide = first_test_slide(root);
    r = post(c, "/sessions", {{"slide_id", slide}});
    ASSERT_EQ(r->status, 201) << r->body;
    const json a = body(r);
    EXPECT_EQ(a.at("slide_id"), slide);
    EXPECT_GT(a.at("patch_count").get<int>(), 100);
    EXPECT_GT(a.at("t_thresh").get<double>(), 0.0);
    EXPECT_TRUE(a.contains("h_wsi"));
    EXPECT_EQ(a.at("policy_defaults").at("n_epoch_naive"), 30);
    const json b = body(post(c, "/sessions", {{"slide_id", slide}}));
    EXPECT_NE(a.at("session_id"), b.at("session_id"));

    r = post(c, "/sessions", {{"slide_id", "no_such_slide"}});
    EXPECT_EQ(r->status, 404);
    EXPECT_EQ(body(r).at("error").at("code"), "not_found");
    r = post(c, "/sessions", {{"slide_id", "../etc"}});
    EXPECT_EQ(r->status, 404);
    r = c.Post("/sessions", "{not json", "application/json");
    EXPECT_EQ(r->status, 400);
    EXPECT_EQ(body(r).at("error").at("code"), "parse_error");
    r = c.Get("/sessions/zzz/heatmap");
    EXPECT_EQ(r->status, 404);
    EXPECT_NO_THROW(body(r));
    r = c.Get("/nowhere");
    EXPECT_EQ(r->status, 404);
    EXPECT_NO_THROW(body(r));

    r = c.Get("/slides/" + slide + "/image.png?max=128");
    ASSERT_EQ(r->status, 200);
    EXPECT_EQ(r->get_header_value("Content-Type"), "image/png");
    EXPECT_EQ(r->body.substr(1, 3), "PNG");
    EXPECT_EQ(r->get_header_value("X-Downsample-Factor"), "4");
}

TEST(Http, ScribbleValidationAndPassSemantics) {
    const fs::path root = fresh_root("http_pass");
    Server s(root);
    auto c = s.client();
    const std::string sid = body(post(c, "/sessions", {{"slide_id", first_test_slide(root)}})).at("session_id");
    const std::string base = "/sessions/" + sid;

    auto r = post(c, base + "/scribbles", {{"kind", "fp"}, {"points", {{100, 100}}}});
    EXPECT_EQ(r->status, 422);
    r = post(c, base + "/scribbles", {{"kind", "fp"}, {"points", {{1, 1}, {20, 2}}}});
    EXPECT_EQ(r->status, 422);
    EXPECT_EQ(body(r).at("error").at("code"), "zero_patches");
    r = post(c, base + "/scribbles", {{"kind", "maybe"}, {"points", {{1, 1}, {20, 2}}}});
    EXPECT_EQ(r->status, 400);
    r = post(c, base + "/passes", {{"mode", "naive"}});
    EXPECT_EQ(r->status, 409);
    EXPECT_EQ(body(r).at("error").at("code"), "no_pending_scribbles");

    const json heat0 = body(c.Get(base + "/heatmap"));
    const auto pair = tumour_pair(heat0);
    ASSERT_TRUE(pair.has_value());
    const json pts = {{pair->first.x, pair->first.y}, {pair->second.x, pair->second.y}};
    r = post(c, base + "/scribbles", {{"kind", "fp"}, {"points", pts}});
    ASSERT_EQ(r->status, 201) << r->body;
    const auto ids = body(r).at("patch_ids").get<std::vector<int>>();
    ASSERT_FALSE(ids.empty());
    r = post(c, base + "/scribbles", {{"kind", "fn"}, {"points", pts}});
    EXPECT_EQ(r->status, 409);
    EXPECT_EQ(body(r).at("error").at("code"), "contradictory_correction");
    EXPECT_EQ(body(c.Get(base + "/heatmap")).at("pending_scribbles"), 1);

    r = post(c, base + "/passes", {{"mode", "greedy"}});
    EXPECT_EQ(r->status, 400);
    EXPECT_EQ(body(r).at("error").at("code"), "unknown_policy");

    r = post(c, base + "/passes", {{"mode", "naive"}});
    ASSERT_EQ(r->status, 200) << r->body;
    const json pass = body(r);
    EXPECT_EQ(pass.at("pass"), 1);
    EXPECT_EQ(pass.at("n_epoch"), 30);
    EXPECT_TRUE(pass.contains("metrics"));
    EXPECT_GE(pass.at("elapsed_ms").get<double>(), 0.0);
    const auto values = pass.at("values").get<std::vector<int>>();
    const auto hard = pass.at("hard_code").get<std::vector<int>>();
    for (int id : ids) {
        EXPECT_EQ(values[id], 0);
        EXPECT_EQ(hard[id], 0);
    }
    EXPECT_EQ(pass.at("signed_entropy").size(), values.size());

    // Re-posting the pass without new scribbles is rejected, not re-applied.
    r = post(c, base + "/passes", {{"mode", "naive"}});
    EXPECT_EQ(r->status, 409);
    const json m = body(c.Get(base + "/metrics"));
    EXPECT_EQ(m.at("pass"), 1);
    ASSERT_EQ(m.at("history").size(), 2u);
    EXPECT_EQ(m.at("history").at(1).at("fp_patches"), static_cast<int>(ids.size()));
    EXPECT_TRUE(m.at("history").at(0).contains("metrics"));

    const json u = body(c.Get(base + "/uncertainty"));
    for (double v : u.at("signed_entropy").get<std::vector<double>>()) {
        EXPECT_GE(v, -1.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(Http, GetsDoNotMutate) {
    const fs::path root = fresh_root("http_idem");
    Server s(root);
    auto c = s.client();
    const std::string sid = body(post(c, "/sessions", {{"slide_id", first_test_slide(root)}})).at("session_id");
    const fs::path file = root / "sessions" / (sid + ".json");
    const auto before = fs::last_write_time(file);
    const std::string h1 = c.Get("/sessions/" + sid + "/heatmap")->body;
    c.Get("/sessions/" + sid + "/uncertainty");
    c.Get("/sessions/" + sid + "/metrics");
    EXPECT_EQ(c.Get("/sessions/" + sid + "/heatmap")->body, h1);
    EXPECT_EQ(fs::last_write_time(file), before);
}

TEST(Http, RestartReplaysToIdenticalHeatmap) {
    const fs::path root = fresh_root("http_restart");
    std::string sid, heat, pending_heat;
    {
        Server s(root);
        auto c = s.client();
        sid = body(post(c, "/sessions", {{"slide_id", first_test_slide(root)}})).at("session_id");
        const auto pair = tumour_pair(body(c.Get("/sessions/" + sid + "/heatmap")));
        ASSERT_TRUE(pair.has_value());
        const json pts = {{pair->first.x, pair->first.y}, {pair->second.x, pair->second.y}};
        ASSERT_EQ(post(c, "/sessions/" + sid + "/scribbles", {{"kind", "fp"}, {"points", pts}})->status, 201);
        ASSERT_EQ(post(c, "/sessions/" + sid + "/passes", {{"mode", "uncertainty"}})->status, 200);
        heat = c.Get("/sessions/" + sid + "/heatmap")->body;
        ASSERT_EQ(post(c, "/sessions/" + sid + "/scribbles", {{"kind", "fp"}, {"points", pts}})->status, 201);
        pending_heat = c.Get("/sessions/" + sid + "/heatmap")->body;
    }
    Server s(root);
    auto c = s.client();
    EXPECT_EQ(c.Get("/sessions/" + sid + "/heatmap")->body, pending_heat);
    // The pending scribble survived the restart and applies on the next pass.
    const auto r = post(c, "/sessions/" + sid + "/passes", {{"mode", "naive"}});
    EXPECT_EQ(r->status, 200);
    EXPECT_EQ(body(r).at("pass"), 2);
    // A new session on the restarted server gets a fresh id.
    const std::string sid2 = body(post(c, "/sessions", {{"slide_id", first_test_slide(root)}})).at("session_id");
    EXPECT_NE(sid2, sid);
    (void)heat;
}

TEST(Http, IngestedFeaturesWithoutMasks) {
    // Scores above t_thresh exist but every MC mean is below it: the T set is
    // empty and the uncertainty policy falls back to one epoch.
    const fs::path root = scratch_dir("http_ingest");
    const PatchGrid grid = build_grid("ingested", 256, 256, BinaryMask(256, 256, true), PatchSpec{});
    std::vector<int> truth;
    auto records = toy_records(grid, truth, 3);
    for (auto& r : records) {
        r.score = truth[r.patch_id] ? 0.8 : 0.1;
        for (auto& m : r.mc_scores) m = 0.05;
    }
    app::write_slide_features(root, grid, 20, records);

    Server s(root);
    auto c = s.client();
    const auto slides = body(c.Get("/slides")).at("slides");
    ASSERT_EQ(slides.size(), 1u);
    EXPECT_FALSE(slides.at(0).at("has_truth").get<bool>());
    EXPECT_TRUE(slides.at(0).at("split").is_null());
    EXPECT_EQ(c.Get("/slides/ingested/image.png")->status, 404);

    const json created = body(post(c, "/sessions", {{"slide_id", "ingested"}}));
    EXPECT_TRUE(created.at("empty_t").get<bool>());
    EXPECT_EQ(created.at("h_star"), 0.0);
    const std::string sid = created.at("session_id");
    const Patch& p = grid.patches.at(grid.at(2, 2));
    const json pts = {{p.x + 16, p.y + 16}, {p.x + 40, p.y + 16}};
    ASSERT_EQ(post(c, "/sessions/" + sid + "/scribbles", {{"kind", "fn"}, {"points", pts}})->status, 201);
    const json pass = body(post(c, "/sessions/" + sid + "/passes", {{"mode", "uncertainty"}}));
    EXPECT_EQ(pass.at("n_epoch"), 1);
    EXPECT_TRUE(pass.contains("warning"));
    EXPECT_FALSE(pass.contains("metrics"));
    EXPECT_FALSE(body(c.Get("/sessions/" + sid + "/metrics")).at("history").at(0).contains("metrics"));
}

TEST(Http, EmptyConfidentSetIsConflict) {
    const fs::path root = scratch_dir("http_empty");
    const PatchGrid grid = build_grid("flat", 128, 128, BinaryMask(128, 128, true), PatchSpec{});
    std::vector<int> truth;
    auto records = toy_records(grid, truth, 4);
    for (auto& r : records) r.score = 0.1;
    app::write_slide_features(root, grid, 20, records);
    Server s(root);
    auto c = s.client();
    const auto r = post(c, "/sessions", {{"slide_id", "flat"}});
    EXPECT_EQ(r->status, 409);
    EXPECT_EQ(body(r).at("error").at("code"), "empty_confident_set");
}

TEST(Http, ConcurrentSessionsStayIndependent) {
    const fs::path root = fresh_root("http_concurrent");
    Server s(root);
    const std::string slide = first_test_slide(root);
    auto c0 = s.client();
    const json heat0 = body(c0.Get("/slides"));
    std::vector<std::string> sids;
    for (int i = 0; i < 3; ++i) sids.push_back(body(post(c0, "/sessions", {{"slide_id", slide}})).at("session_id"));
    const auto pair = tumour_pair(body(c0.Get("/sessions/" + sids[0] + "/heatmap")));
    ASSERT_TRUE(pair.has_value());
    const json pts = {{pair->first.x, pair->first.y}, {pair->second.x, pair->second.y}};

    std::vector<std::string> results(sids.size());
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < sids.size(); ++i) {
        threads.emplace_back([&, i] {
            auto c = s.client();
            post(c, "/sessions/" + sids[i] + "/scribbles", {{"kind", "fp"}, {"points", pts}});
            for (int k = 0; k < 5; ++k) c.Get("/sessions/" + sids[i] + "/heatmap");
            post(c, "/sessions/" + sids[i] + "/passes", {{"mode", "naive"}});
            results[i] = body(c.Get("/sessions/" + sids[i] + "/heatmap")).at("values").dump();
        });
    }
    for (auto& t : threads) t.join();
    // Same slide, same seed, same scribble: identical results whatever the interleaving.
    EXPECT_EQ(results[0], results[1]);
    EXPECT_EQ(results[1], results[2]);
    (void)heat0;
}
