#include "topicfield/service.hpp"

#include "topicfield/error.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <charconv>
#include <fstream>
#include <random>

namespace topicfield {

using nlohmann::json;

// ---------------------------------------------------------------------------
// CommandQueue

CommandQueue::CommandQueue() : thread_([this] { run(); }) {}

CommandQueue::~CommandQueue() { shutdown(); }

void CommandQueue::post(std::function<void()> task) {
    {
        std::lock_guard lock(mutex_);
        if (stopping_) throw Error(ErrorKind::state, "session is shutting down");
        tasks_.push_back(std::move(task));
    }
    cv_.notify_one();
}

void CommandQueue::shutdown() {
    {
        std::lock_guard lock(mutex_);
        if (stopping_ && !thread_.joinable()) return;
        stopping_ = true;
    }
    cv_.notify_all();
    if (thread_.joinable() && thread_.get_id() != std::this_thread::get_id()) thread_.join();
}

void CommandQueue::run() {
    std::unique_lock lock(mutex_);
    while (true) {
        cv_.wait(lock, [this] { return stopping_ || !tasks_.empty(); });
        if (tasks_.empty()) return;  // stopping and drained
        auto task = std::move(tasks_.front());
        tasks_.pop_front();
        lock.unlock();
        task();
        lock.lock();
    }
}

// ---------------------------------------------------------------------------
// Streaming

std::string StreamEvent::wire() const { return "event: " + name + "\ndata: " + data + "\n\n"; }

void Subscription::push(StreamEvent event) {
    {
        std::lock_guard lock(mutex_);
        if (closed_ || event.epoch < newest_epoch_) return;
        if (event.name == "epoch") {
            newest_epoch_ = event.epoch;
            // Anything still buffered from an older run is stale now.
            std::erase_if(events_, [&](const StreamEvent& e) { return e.epoch < newest_epoch_; });
        }
        events_.push_back(std::move(event));
    }
    cv_.notify_all();
}

std::optional<StreamEvent> Subscription::next(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, timeout, [this] { return closed_ || !events_.empty(); });
    if (events_.empty()) return std::nullopt;
    auto event = std::move(events_.front());
    events_.pop_front();
    return event;
}

void Subscription::close() {
    {
        std::lock_guard lock(mutex_);
        closed_ = true;
        events_.clear();
    }
    cv_.notify_all();
}

bool Subscription::closed() const {
    std::lock_guard lock(mutex_);
    return closed_;
}

// ---------------------------------------------------------------------------
// Session

namespace {

SessionState initial_state(const Corpus& corpus, const TopicModel& model, const ServiceConfig& config,
                           std::optional<FieldState> initial, std::optional<LayoutParams> params) {
    LayoutParams p = params.value_or(config.default_params);
    p.validate();
    if (initial) return SessionState{Field(corpus, model, std::move(*initial)), p, true};
    return SessionState{Field(corpus, model, config.bounds), p, true};
}

}  // namespace

Session::Session(std::string id, const Corpus& corpus, SharedModel& model, const ServiceConfig& config,
                 std::optional<FieldState> initial, std::optional<LayoutParams> params)
    : id_(std::move(id)),
      corpus_(corpus),
      model_(model),
      config_(config),
      state_(initial_state(corpus, model.model, config, initial, params)) {
    publish();
    worker_ = std::thread([this] { simulation_loop(); });
}

Session::~Session() { shutdown(); }

void Session::shutdown() {
    {
        std::lock_guard lock(sim_mutex_);
        stopping_ = true;
    }
    sim_cv_.notify_all();
    if (worker_.joinable()) worker_.join();
    queue_.shutdown();
    std::lock_guard lock(broadcast_mutex_);
    for (auto& weak : subscribers_) {
        if (auto sub = weak.lock()) sub->close();
    }
    subscribers_.clear();
}

std::shared_ptr<const SessionSnapshot> Session::snapshot() const {
    std::lock_guard lock(snapshot_mutex_);
    return snapshot_;
}

void Session::publish() {
    auto snap = std::make_shared<SessionSnapshot>();
    snap->version = version_;
    snap->epoch = epoch_.load();
    snap->field = state_.field.state();
    snap->params = state_.params;
    snap->simulate = state_.simulate;
    std::lock_guard lock(snapshot_mutex_);
    snapshot_ = std::move(snap);
}

void Session::broadcast(StreamEvent event) {
    std::erase_if(subscribers_, [&](const std::weak_ptr<Subscription>& weak) {
        auto sub = weak.lock();
        if (!sub || sub->closed()) return true;
        sub->push(event);
        return false;
    });
}

void Session::begin_epoch() {
    std::uint64_t epoch = 0;
    {
        std::lock_guard lock(broadcast_mutex_);
        epoch = ++epoch_;
        broadcast({epoch, "epoch", json{{"epoch", epoch}}.dump()});
    }
    {
        std::lock_guard lock(sim_mutex_);
        if (state_.simulate) pending_ = Run{epoch, state_.field.state(), state_.params};
        else pending_.reset();
    }
    sim_cv_.notify_all();
}

std::shared_ptr<const SessionSnapshot> Session::mutate(std::optional<std::uint64_t> expected_version,
                                                       const std::function<void(SessionState&)>& op,
                                                       bool restart) {
    return queue_.call([&]() -> std::shared_ptr<const SessionSnapshot> {
        if (expected_version && *expected_version != version_) {
            throw Error(ErrorKind::conflict, "snapshot version is " + std::to_string(version_) + ", request expected " +
                                                 std::to_string(*expected_version));
        }
        SessionState working = state_;
        op(working);
        working.params.validate();
        state_ = std::move(working);
        ++version_;
        if (restart) begin_epoch();
        publish();
        return snapshot();
    });
}

std::shared_ptr<Subscription> Session::subscribe() {
    auto sub = std::make_shared<Subscription>();
    std::lock_guard lock(broadcast_mutex_);
    const auto epoch = epoch_.load();
    sub->push({epoch, "epoch", json{{"epoch", epoch}}.dump()});
    subscribers_.push_back(sub);
    return sub;
}

bool Session::simulating() const {
    std::lock_guard lock(sim_mutex_);
    return simulating_.load() || pending_.has_value();
}

bool Session::wait_idle(std::chrono::milliseconds timeout) {
    {
        std::unique_lock lock(sim_mutex_);
        if (!sim_cv_.wait_for(lock, timeout, [this] { return !simulating_.load() && !pending_.has_value(); }))
            return false;
    }
    queue_.call([] { return 0; });  // drain pending write-backs
    return true;
}

void Session::write_back(std::uint64_t epoch, std::vector<std::pair<NodeRef, Point>> positions) {
    try {
        queue_.post([this, epoch, positions = std::move(positions)] {
            if (epoch_.load() != epoch) return;
            state_.field.apply_positions(positions);
            publish();
        });
    } catch (const Error&) {
        // Queue already stopped; the session is going away.
    }
}

void Session::simulation_loop() {
    std::unique_lock lock(sim_mutex_);
    while (true) {
        sim_cv_.wait(lock, [this] { return stopping_ || pending_.has_value(); });
        if (stopping_) break;
        Run run = std::move(*pending_);
        pending_.reset();
        simulating_ = true;
        lock.unlock();

        try {
            Simulation sim(run.field, model_.model, run.params);
            while (epoch_.load() == run.epoch) {
                PositionFrame frame = sim.advance();
                json payload = to_json(frame);
                payload["epoch"] = run.epoch;
                {
                    std::lock_guard guard(broadcast_mutex_);
                    if (epoch_.load() != run.epoch) break;
                    broadcast({run.epoch, "frame", payload.dump()});
                }
                write_back(run.epoch, frame.positions());
                if (sim.converged() || sim.steps_taken() >= run.params.max_steps) break;

                lock.lock();
                sim_cv_.wait_for(lock, config_.frame_interval, [this] { return stopping_ || pending_.has_value(); });
                const bool interrupted = stopping_ || pending_.has_value();
                lock.unlock();
                if (interrupted) break;
            }
        } catch (const Error&) {
            // A diverging run stops; the field keeps its last finite positions.
        }
        try {
            queue_.call([] { return 0; });  // report idle only once write-backs are applied
        } catch (const Error&) {
        }

        lock.lock();
        if (!pending_) simulating_ = false;
        sim_cv_.notify_all();
    }
    simulating_ = false;
    sim_cv_.notify_all();
}

// ---------------------------------------------------------------------------
// HTTP helpers

int http_status(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::not_found: return 404;
    case ErrorKind::invalid_argument:
    case ErrorKind::parse:
    case ErrorKind::validation:
    case ErrorKind::state: return 400;
    case ErrorKind::non_finite: return 422;
    case ErrorKind::conflict: return 409;
    case ErrorKind::io: return 500;
    }
    return 500;
}

std::pair<std::string, int> parse_bind_address(const std::string& address) {
    const auto colon = address.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == address.size())
        throw Error(ErrorKind::invalid_argument, "bind address must look like host:port, got '" + address + "'");
    int port = 0;
    const char* begin = address.data() + colon + 1;
    const char* end = address.data() + address.size();
    auto [ptr, ec] = std::from_chars(begin, end, port);
    if (ec != std::errc() || ptr != end || port < 0 || port > 65535)
        throw Error(ErrorKind::invalid_argument, "invalid port in bind address '" + address + "'");
    return {address.substr(0, colon), port};
}

namespace {

void send_json(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& kind, const std::string& message) {
    send_json(res, {{"error", kind}, {"message", message}}, status);
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        send_error(res, http_status(e.kind()), to_string(e.kind()), e.what());
    } catch (const json::exception& e) {
        send_error(res, 400, "bad request", e.what());
    } catch (const std::exception& e) {
        send_error(res, 500, "internal error", e.what());
    }
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
        auto body = json::parse(req.body);
        if (!body.is_object()) throw Error(ErrorKind::parse, "request body must be a JSON object");
        return body;
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::parse, std::string("malformed JSON body: ") + e.what());
    } catch (const json::out_of_range& e) {
        // The parser refuses numbers beyond double range.
        if (e.id == 406) throw Error(ErrorKind::non_finite, std::string("non-finite number in body: ") + e.what());
        throw;
    }
}

DocumentSet ids_from(const json& body, const char* key = "ids") {
    auto it = body.find(key);
    if (it == body.end() || !it->is_array())
        throw Error(ErrorKind::invalid_argument, std::string("body needs an array '") + key + "'");
    DocumentSet ids;
    for (const auto& v : *it) {
        if (!v.is_string()) throw Error(ErrorKind::invalid_argument, std::string("'") + key + "' must hold strings");
        ids.insert(v.get<std::string>());
    }
    return ids;
}

TopicId topic_from(const std::string& text) {
    TopicId topic = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), topic);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw Error(ErrorKind::not_found, "unknown topic '" + text + "'");
    return topic;
}

NodeRef node_from(const std::string& kind, const std::string& ref) {
    auto k = parse_node_kind(kind);
    if (!k) throw Error(ErrorKind::not_found, "unknown node kind '" + kind + "'");
    if (*k == NodeKind::topic) return topic_from(ref);
    return ref;
}

std::optional<std::uint64_t> expected_version(const httplib::Request& req) {
    if (!req.has_header("If-Match")) return std::nullopt;
    std::string v = req.get_header_value("If-Match");
    if (v.rfind("W/", 0) == 0) v = v.substr(2);
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
    std::uint64_t version = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), version);
    if (ec != std::errc() || ptr != v.data() + v.size())
        throw Error(ErrorKind::invalid_argument, "If-Match must carry a snapshot version number");
    return version;
}

double finite_number(const json& body, const char* key) {
    auto it = body.find(key);
    if (it == body.end() || !it->is_number())
        throw Error(ErrorKind::invalid_argument, std::string("body needs a number '") + key + "'");
    return it->get<double>();
}

json mutation_response(const SessionSnapshot& snap) {
    return {{"version", snap.version}, {"epoch", snap.epoch}, {"field", to_json(snap.field)}};
}

json document_json(const Corpus& corpus, const Document& doc) {
    json out = {{"id", doc.id}, {"title", doc.title}, {"authors", doc.authors}};
    out["year"] = doc.year ? json(*doc.year) : json(nullptr);
    out["venue"] = doc.venue ? json(*doc.venue) : json(nullptr);
    (void)corpus;
    return out;
}

json labels_json(const SharedModel& shared) {
    std::shared_lock lock(shared.mutex);
    return shared.model.labels();
}

}  // namespace

// ---------------------------------------------------------------------------
// Service

Service::Service(const Corpus& corpus, TopicModel model, ServiceConfig config)
    : corpus_(corpus),
      model_{std::move(model), {}},
      index_(Index::build(corpus)),
      config_(std::move(config)),
      server_(std::make_unique<httplib::Server>()) {
    config_.default_params.validate();
    install_routes();
}

Service::~Service() {
    stop();
    std::map<std::string, std::shared_ptr<Session>> sessions;
    {
        std::lock_guard lock(sessions_mutex_);
        sessions.swap(sessions_);
    }
    for (auto& [id, s] : sessions) s->shutdown();
}

bool Service::bind(const std::string& host, int port) { return server_->bind_to_port(host, port); }

int Service::bind_to_any_port(const std::string& host) { return server_->bind_to_any_port(host); }

bool Service::listen_after_bind() { return server_->listen_after_bind(); }

bool Service::wait_until_ready() const {
    server_->wait_until_ready();
    return server_->is_running();
}

void Service::stop() {
    stopping_ = true;
    {
        std::lock_guard lock(sessions_mutex_);
        for (auto& [id, s] : sessions_) s->shutdown();
    }
    if (server_) server_->stop();
}

std::shared_ptr<Session> Service::session(const std::string& id) const {
    std::lock_guard lock(sessions_mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorKind::not_found, "unknown session '" + id + "'");
    return it->second;
}

std::string Service::next_session_id() {
    static thread_local std::mt19937_64 engine{std::random_device{}()};
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(engine()));
    return std::to_string(++session_counter_) + "-" + buf;
}

std::shared_ptr<Session> Service::create_session(const json& body) {
    std::optional<FieldState> initial;
    std::optional<LayoutParams> params;
    if (auto it = body.find("load"); it != body.end()) {
        const auto path = it->get<std::string>();
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error(ErrorKind::not_found, "cannot open saved session " + path);
        json saved;
        try {
            saved = json::parse(in);
        } catch (const json::parse_error& e) {
            throw Error(ErrorKind::parse, std::string("saved session is not JSON: ") + e.what());
        }
        initial = field_state_from_json(saved.at("field"));
        if (saved.contains("layout")) params = apply_overrides(config_.default_params, saved.at("layout"));
        if (saved.contains("labels")) {
            auto labels = saved.at("labels").get<std::vector<std::string>>();
            std::unique_lock lock(model_.mutex);
            for (TopicId t = 0; t < labels.size() && t < model_.model.num_topics(); ++t)
                model_.model.rename_topic(t, labels[t]);
        }
    }
    std::lock_guard lock(sessions_mutex_);
    if (stopping_) throw Error(ErrorKind::state, "service is stopping");
    auto id = next_session_id();
    auto session = std::make_shared<Session>(id, corpus_, model_, config_, std::move(initial), params);
    sessions_.emplace(id, session);
    return session;
}

void Service::install_routes() {
    auto& svr = *server_;

    svr.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto session = create_session(parse_body(req));
            auto snap = session->snapshot();
            send_json(res,
                      {{"id", session->id()},
                       {"version", snap->version},
                       {"model", {{"num_topics", model_.model.num_topics()}, {"labels", labels_json(model_)}}},
                       {"field", to_json(snap->field)}},
                      201);
        });
    });

    svr.Post(R"(/sessions/([^/]+)/search)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            session(req.matches[1]);
            auto body = parse_body(req);
            auto query = body.value("query", std::string{});
            auto sort = parse_sort_key(body.value("sort", std::string("relevance")));
            if (!sort) throw Error(ErrorKind::invalid_argument, "unknown sort key");
            auto limit = body.value("limit", std::size_t{50});
            json hits = json::array();
            for (const auto& hit : index_.search(corpus_, query, *sort, limit)) {
                auto entry = document_json(corpus_, corpus_.document(hit.doc));
                entry["doc"] = hit.doc;
                entry["score"] = hit.score;
                entry.erase("id");
                hits.push_back(std::move(entry));
            }
            send_json(res, hits);
        });
    });

    svr.Get(R"(/documents/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto& doc = corpus_.document(req.matches[1]);
            auto out = document_json(corpus_, doc);
            out["text"] = doc.text;
            out["theta"] = model_.model.has_document(doc.id) ? json(std::vector<double>(
                                                                    model_.model.theta_row(doc.id).begin(),
                                                                    model_.model.theta_row(doc.id).end()))
                                                              : json(nullptr);
            out["cites"] = corpus_.cites(doc.id);
            out["cited_by"] = corpus_.cited_by(doc.id);
            send_json(res, out);
        });
    });

    svr.Get(R"(/topics/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            TopicId topic = topic_from(req.matches[1]);
            std::shared_lock lock(model_.mutex);
            json terms = json::array();
            for (const auto& tw : model_.model.top_terms(topic, 10))
                terms.push_back({{"term", tw.term}, {"probability", tw.probability}});
            send_json(res, {{"topic", topic}, {"label", model_.model.label(topic)}, {"top_terms", terms}});
        });
    });

    // Field mutations. Each runs on the session's command queue.
    auto mutation = [this](const std::string& path, auto method, auto op, bool restart = true) {
        (server_.get()->*method)(path, [this, op, restart](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                auto s = session(req.matches[1]);
                auto body = parse_body(req);
                auto expected = expected_version(req);
                auto snap = s->mutate(expected, [&](SessionState& st) { op(req, body, st); }, restart);
                send_json(res, mutation_response(*snap));
            });
        });
    };
    using Method = httplib::Server& (httplib::Server::*)(const std::string&, httplib::Server::Handler);
    const Method post = &httplib::Server::Post;
    const Method del = &httplib::Server::Delete;
    const Method patch = &httplib::Server::Patch;

    mutation(R"(/sessions/([^/]+)/field/documents)", post,
             [](const httplib::Request&, const json& body, SessionState& st) { st.field.add_documents(ids_from(body)); });
    mutation(R"(/sessions/([^/]+)/field/documents)", del,
             [](const httplib::Request&, const json& body, SessionState& st) { st.field.remove_documents(ids_from(body)); });
    mutation(R"(/sessions/([^/]+)/field/expand)", post,
             [](const httplib::Request&, const json& body, SessionState& st) {
                 auto direction = parse_direction(body.value("direction", std::string("both")));
                 if (!direction) throw Error(ErrorKind::invalid_argument, "direction must be citing, cited or both");
                 st.field.expand_citations(ids_from(body), *direction);
             });
    mutation(R"(/sessions/([^/]+)/field/selection)", post,
             [](const httplib::Request&, const json& body, SessionState& st) { st.field.set_selection(ids_from(body)); },
             false);
    mutation(R"(/sessions/([^/]+)/field/selection)", del,
             [](const httplib::Request&, const json&, SessionState& st) { st.field.delete_selection(); });
    mutation(R"(/sessions/([^/]+)/field/topics)", post,
             [](const httplib::Request&, const json& body, SessionState& st) {
                 for (const auto& t : body.at("topics")) st.field.add_topic(t.get<TopicId>());
             });
    mutation(R"(/sessions/([^/]+)/field/topics)", del,
             [](const httplib::Request&, const json& body, SessionState& st) {
                 for (const auto& t : body.at("topics")) st.field.remove_topic(t.get<TopicId>());
             });
    mutation(R"(/sessions/([^/]+)/nodes/([^/]+)/(.+)/position)", post,
             [](const httplib::Request& req, const json& body, SessionState& st) {
                 auto node = node_from(req.matches[2], req.matches[3]);
                 st.field.move_node(node, {finite_number(body, "x"), finite_number(body, "y")});
             });
    mutation(R"(/sessions/([^/]+)/nodes/([^/]+)/(.+)/pin)", post,
             [](const httplib::Request& req, const json& body, SessionState& st) {
                 auto node = node_from(req.matches[2], req.matches[3]);
                 auto it = body.find("pinned");
                 if (it == body.end() || !it->is_boolean())
                     throw Error(ErrorKind::invalid_argument, "body needs a boolean 'pinned'");
                 st.field.set_pin(node, it->get<bool>());
             });
    mutation(R"(/sessions/([^/]+)/topics/([^/]+)/label)", post,
             [this](const httplib::Request& req, const json& body, SessionState&) {
                 TopicId topic = topic_from(req.matches[2]);
                 auto it = body.find("label");
                 if (it == body.end() || !it->is_string())
                     throw Error(ErrorKind::invalid_argument, "body needs a string 'label'");
                 std::unique_lock lock(model_.mutex);
                 model_.model.rename_topic(topic, it->get<std::string>());
             },
             false);
    mutation(R"(/sessions/([^/]+)/settings)", patch,
             [](const httplib::Request&, const json& body, SessionState& st) {
                 static const std::set<std::string> layout_keys = {"stiffness", "damping", "dt",
                                                                   "repulsion", "epsilon", "max_steps"};
                 json overrides = json::object();
                 bool auto_topics = st.field.state().settings.auto_topics;
                 std::size_t k = st.field.state().settings.k;
                 bool topics_changed = false;
                 for (const auto& [key, value] : body.items()) {
                     if (key == "auto_topics") {
                         auto_topics = value.get<bool>();
                         topics_changed = true;
                     } else if (key == "k") {
                         k = value.get<std::size_t>();
                         topics_changed = true;
                     } else if (key == "default_pin") {
                         auto pin = parse_pin_default(value.get<std::string>());
                         if (!pin) throw Error(ErrorKind::invalid_argument, "default_pin must be topics or documents");
                         st.field.set_default_pin(*pin);
                     } else if (key == "simulate") {
                         st.simulate = value.get<bool>();
                     } else if (key == "layout") {
                         if (!value.is_object()) throw Error(ErrorKind::invalid_argument, "'layout' must be an object");
                         overrides.update(value);
                     } else if (layout_keys.count(key)) {
                         overrides[key] = value;
                     } else {
                         throw Error(ErrorKind::invalid_argument, "unknown setting '" + key + "'");
                     }
                 }
                 if (topics_changed) st.field.set_topic_settings(auto_topics, k);
                 st.params = apply_overrides(st.params, overrides);
             });

    svr.Get(R"(/sessions/([^/]+)/field)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto s = session(req.matches[1]);
            auto snap = s->snapshot();
            send_json(res, {{"version", snap->version},
                            {"epoch", snap->epoch},
                            {"simulating", s->simulating()},
                            {"simulate", snap->simulate},
                            {"layout", to_json(snap->params)},
                            {"field", to_json(snap->field)}});
        });
    });

    svr.Get(R"(/sessions/([^/]+)/frames)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto sub = session(req.matches[1])->subscribe();
            const auto keepalive = config_.keepalive_interval;
            res.set_header("Cache-Control", "no-cache");
            res.set_chunked_content_provider(
                "text/event-stream",
                [this, sub, keepalive](std::size_t, httplib::DataSink& sink) {
                    if (stopping_ || sub->closed()) {
                        sink.done();
                        return true;
                    }
                    auto event = sub->next(keepalive);
                    if (!event && sub->closed()) {
                        sink.done();
                        return true;
                    }
                    const std::string chunk = event ? event->wire() : std::string(": keep-alive\n\n");
                    return sink.write(chunk.data(), chunk.size());
                },
                [sub](bool) { sub->close(); });
        });
    });

    svr.Get(R"(/sessions/([^/]+)/export\.json)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto snap = session(req.matches[1])->snapshot();
            send_json(res, to_json(final_frame(snap->field, model_.model, snap->params)));
        });
    });

    svr.Get(R"(/sessions/([^/]+)/export\.svg)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto snap = session(req.matches[1])->snapshot();
            auto frame = final_frame(snap->field, model_.model, snap->params);
            std::shared_lock lock(model_.mutex);
            res.set_content(render_svg(snap->field, model_.model, frame), "image/svg+xml");
        });
    });

    svr.Post(R"(/sessions/([^/]+)/save)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto snap = session(req.matches[1])->snapshot();
            auto body = parse_body(req);
            auto it = body.find("path");
            if (it == body.end() || !it->is_string())
                throw Error(ErrorKind::invalid_argument, "body needs a string 'path'");
            const std::string path = it->get<std::string>();
            json saved = {{"field", to_json(snap->field)},
                          {"layout", to_json(snap->params)},
                          {"labels", labels_json(model_)}};
            std::ofstream out(path, std::ios::binary);
            if (!out) throw Error(ErrorKind::io, "cannot write " + path);
            out << saved.dump(1) << '\n';
            if (!out) throw Error(ErrorKind::io, "failed writing " + path);
            send_json(res, {{"version", snap->version}, {"path", path}});
        });
    });
}

}  // namespace topicfield
