#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "data_root.hpp"
#include "wsic/corrector.hpp"
#include "wsic/evalsim.hpp"

namespace wsic::app {

struct PendingScribble {
    ScribbleKind kind = ScribbleKind::CorrectiveFp;
    std::vector<Point> points;
    std::vector<int> patch_ids;
};

/// HTTP status for a library error code; every code maps to one status.
int http_status(ErrorCode code);

/// Interactive correction sessions over one data root. Mutations of a session
/// are serialised by its own lock; reads see the last committed state and never
/// wait for a pass in progress. Every mutation is persisted before it returns.
class SessionStore {
public:
    explicit SessionStore(DataRoot root);
    ~SessionStore();

    const DataRoot& data_root() const { return root_; }

    nlohmann::json list_slides() const;
    nlohmann::json create(const nlohmann::json& body);
    nlohmann::json heatmap(const std::string& session_id) const;
    nlohmann::json uncertainty(const std::string& session_id) const;
    nlohmann::json metrics(const std::string& session_id) const;
    nlohmann::json add_scribble(const std::string& session_id, const nlohmann::json& body);
    nlohmann::json run_pass(const std::string& session_id, const nlohmann::json& body);

    std::vector<std::string> session_ids() const;

private:
    struct Entry;
    struct Committed;

    std::shared_ptr<Entry> find(const std::string& session_id) const;
    std::shared_ptr<const SlideData> slide(const std::string& slide_id);
    void load_persisted();
    void persist(const Entry& e) const;
    void commit(Entry& e) const;

    DataRoot root_;
    mutable std::shared_mutex map_mutex_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
    std::mutex slides_mutex_;
    std::map<std::string, std::shared_ptr<const SlideData>> slides_;
    std::uint64_t next_id_ = 1;
};

} // namespace wsic::app
