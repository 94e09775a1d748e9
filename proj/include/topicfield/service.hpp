#pragma once

#include "topicfield/corpus.hpp"
#include "topicfield/error.hpp"
#include "topicfield/field.hpp"
#include "topicfield/layout.hpp"
#include "topicfield/search.hpp"
#include "topicfield/topic_model.hpp"

#include <nlohmann/json_fwd.hpp>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

namespace httplib {
class Server;
}

namespace topicfield {

struct ServiceConfig {
    LayoutParams default_params;
    FieldBounds bounds;
    /// Pause between simulation steps of a live session.
    std::chrono::milliseconds frame_interval{16};
    /// How long an idle event stream waits before sending a keep-alive.
    std::chrono::milliseconds keepalive_interval{1000};
};

/// Runs submitted tasks one at a time, in arrival order, on its own thread.
class CommandQueue {
public:
    CommandQueue();
    ~CommandQueue();
    CommandQueue(const CommandQueue&) = delete;
    CommandQueue& operator=(const CommandQueue&) = delete;

    void post(std::function<void()> task);

    /// Runs `fn` on the queue thread and waits for its result; exceptions
    /// propagate to the caller.
    template <typename Fn>
    auto call(Fn fn) -> decltype(fn()) {
        using Result = decltype(fn());
        auto task = std::make_shared<std::packaged_task<Result()>>(std::move(fn));
        auto future = task->get_future();
        post([task] { (*task)(); });
        return future.get();
    }

    void shutdown();

private:
    void run();

    std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<std::function<void()>> tasks_;
    bool stopping_ = false;
    std::thread thread_;
};

/// One event on a session's frame stream.
struct StreamEvent {
    std::uint64_t epoch = 0;
    std::string name;  // "epoch" or "frame"
    std::string data;

    /// Server-sent-events wire form: `event:` and `data:` lines plus a blank line.
    std::string wire() const;
};

/// Per-connection event buffer. Frames from an epoch older than the newest
/// one this subscriber has seen are dropped on arrival.
class Subscription {
public:
    void push(StreamEvent event);
    /// Waits up to `timeout` for the next event.
    std::optional<StreamEvent> next(std::chrono::milliseconds timeout);
    void close();
    bool closed() const;

private:
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<StreamEvent> events_;
    std::uint64_t newest_epoch_ = 0;
    bool closed_ = false;
};

/// Mutable per-session state owned by the command queue.
struct SessionState {
    Field field;
    LayoutParams params;
    /// When false, mutations do not start a simulation run.
    bool simulate = true;
};

/// Immutable view handed to readers.
struct SessionSnapshot {
    std::uint64_t version = 0;
    std::uint64_t epoch = 0;
    FieldState field;
    LayoutParams params;
    bool simulate = true;
};

/// Topic model shared by every session; labels are guarded by `mutex`.
struct SharedModel {
    TopicModel model;
    mutable std::shared_mutex mutex;
};

/// An exploration session: a serialized command queue over a Field plus a
/// simulation worker that streams frames and writes positions back.
class Session {
public:
    Session(std::string id, const Corpus& corpus, SharedModel& model, const ServiceConfig& config,
            std::optional<FieldState> initial = std::nullopt, std::optional<LayoutParams> params = std::nullopt);
    ~Session();
    Session(const Session&) = delete;
    Session& operator=(const Session&) = delete;

    const std::string& id() const noexcept { return id_; }

    std::shared_ptr<const SessionSnapshot> snapshot() const;
    /// True while a run is in progress or queued.
    bool simulating() const;

    /// Applies `op` to a copy of the state on the command queue and commits
    /// it only if `op` returns normally. Bumps the version; a stale
    /// `expected_version` raises Error(conflict). When `restart` is set the
    /// running simulation is cancelled and a new epoch begins.
    std::shared_ptr<const SessionSnapshot> mutate(std::optional<std::uint64_t> expected_version,
                                                  const std::function<void(SessionState&)>& op,
                                                  bool restart = true);

    std::shared_ptr<Subscription> subscribe();

    /// Blocks until no simulation is running and its positions have been
    /// written back, or the timeout expires.
    bool wait_idle(std::chrono::milliseconds timeout);

    void shutdown();

private:
    struct Run {
        std::uint64_t epoch;
        FieldState field;
        LayoutParams params;
    };

    void publish();
    void broadcast(StreamEvent event);
    void begin_epoch();
    void simulation_loop();
    void write_back(std::uint64_t epoch, std::vector<std::pair<NodeRef, Point>> positions);

    const std::string id_;
    const Corpus& corpus_;
    SharedModel& model_;
    const ServiceConfig config_;

    // Owned by the command queue thread.
    SessionState state_;
    std::uint64_t version_ = 0;

    mutable std::mutex snapshot_mutex_;
    std::shared_ptr<const SessionSnapshot> snapshot_;

    std::mutex broadcast_mutex_;
    std::vector<std::weak_ptr<Subscription>> subscribers_;
    std::atomic<std::uint64_t> epoch_{0};

    mutable std::mutex sim_mutex_;
    mutable std::condition_variable sim_cv_;
    std::optional<Run> pending_;
    bool stopping_ = false;
    std::atomic<bool> simulating_{false};
    std::thread worker_;

    CommandQueue queue_;
};

/// HTTP facade over one corpus, one topic model, and many sessions.
class Service {
public:
    Service(const Corpus& corpus, TopicModel model, ServiceConfig config = {});
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    bool bind(const std::string& host, int port);
    /// Binds an ephemeral port; returns it, or -1 on failure.
    int bind_to_any_port(const std::string& host);
    /// Serves until stop(); blocks.
    bool listen_after_bind();
    void stop();
    bool wait_until_ready() const;

    const Corpus& corpus() const noexcept { return corpus_; }
    const Index& index() const noexcept { return index_; }
    const SharedModel& model() const noexcept { return model_; }

    std::shared_ptr<Session> session(const std::string& id) const;

private:
    void install_routes();
    std::shared_ptr<Session> create_session(const nlohmann::json& body);
    std::string next_session_id();

    const Corpus& corpus_;
    SharedModel model_;
    Index index_;
    ServiceConfig config_;

    mutable std::mutex sessions_mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::uint64_t session_counter_ = 0;

    std::atomic<bool> stopping_{false};
    std::unique_ptr<httplib::Server> server_;
};

/// `host:port` split; Error(invalid_argument) when malformed.
std::pair<std::string, int> parse_bind_address(const std::string& address);

/// HTTP status for a library error kind.
int http_status(ErrorKind kind);

}  // namespace topicfield
