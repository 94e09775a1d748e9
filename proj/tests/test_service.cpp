#include "http_support.hpp"
#include "replay.hpp"
#include "support.hpp"

#include "topicfield/error.hpp"
#include "topicfield/synth.hpp"

#include <doctest.h>

#include <atomic>
#include <fstream>
#include <sstream>

using namespace topicfield;
using nlohmann::json;

namespace {

struct World {
    TopicModel model = synth_model(5, 80, 12, 40);
    Corpus corpus = synth_corpus(model, 5);
};

ServiceConfig fast_config() {
    ServiceConfig config;
    config.frame_interval = std::chrono::milliseconds(1);
    config.keepalive_interval = std::chrono::milliseconds(50);
    return config;
}

std::string create_session(httplib::Client& cli) {
    auto reply = http::send(cli, "POST", "/sessions");
    REQUIRE(reply.status == 201);
    return reply.body.at("id");
}

struct Event {
    std::string name;
    json data;
};

std::vector<Event> parse_events(const std::string& stream) {
    std::vector<Event> out;
    std::istringstream in(stream);
    std::string line, name, data;
    while (std::getline(in, line)) {
        if (line.rfind("event: ", 0) == 0) name = line.substr(7);
        else if (line.rfind("data: ", 0) == 0) data = line.substr(6);
        else if (line.empty() && !name.empty()) {
            out.push_back({name, json::parse(data)});
            name.clear();
            data.clear();
        }
    }
    return out;
}

}  // namespace

TEST_SUITE("service") {

TEST_CASE("command queue runs tasks in order and forwards exceptions") {
    CommandQueue queue;
    std::vector<int> seen;
    for (int i = 0; i < 50; ++i) queue.post([&seen, i] { seen.push_back(i); });
    CHECK(queue.call([&] { return seen.size(); }) == 50);
    for (int i = 0; i < 50; ++i) CHECK(seen[i] == i);
    CHECK_THROWS_AS(queue.call([]() -> int { throw Error(ErrorKind::conflict, "boom"); }), Error);
    queue.shutdown();
    CHECK_THROWS_AS(queue.post([] {}), Error);
}

TEST_CASE("subscriptions drop frames from superseded epochs") {
    Subscription sub;
    sub.push({1, "epoch", "{}"});
    sub.push({1, "frame", "a"});
    sub.push({2, "epoch", "{}"});  // purges everything buffered from epoch 1
    sub.push({1, "frame", "late"});
    sub.push({2, "frame", "b"});
    std::vector<std::string> got;
    while (auto e = sub.next(std::chrono::milliseconds(1))) got.push_back(e->name + std::to_string(e->epoch) + ":" + e->data);
    CHECK(got == std::vector<std::string>{"epoch2:{}", "frame2:b"});
    CHECK(StreamEvent{3, "frame", "{\"x\":1}"}.wire() == "event: frame\ndata: {\"x\":1}\n\n");
    sub.close();
    CHECK(sub.closed());
    CHECK_FALSE(sub.next(std::chrono::milliseconds(1)));
}

TEST_CASE("bind address parsing and status mapping") {
    CHECK(parse_bind_address("127.0.0.1:8080") == std::pair<std::string, int>{"127.0.0.1", 8080});
    CHECK(parse_bind_address("::1:80").second == 80);
    CHECK_THROWS_AS(parse_bind_address("localhost"), Error);
    CHECK_THROWS_AS(parse_bind_address("host:99999"), Error);
    CHECK_THROWS_AS(parse_bind_address(":80"), Error);
    CHECK(http_status(ErrorKind::not_found) == 404);
    CHECK(http_status(ErrorKind::invalid_argument) == 400);
    CHECK(http_status(ErrorKind::state) == 400);
    CHECK(http_status(ErrorKind::non_finite) == 422);
    CHECK(http_status(ErrorKind::conflict) == 409);
}

TEST_CASE("sessions start empty with seven automatic topics") {
    World w;
    http::Server server(w.corpus, w.model, fast_config());
    auto cli = server.client();
    auto created = http::send(cli, "POST", "/sessions");
    REQUIRE(created.status == 201);
    CHECK(created.body["model"]["num_topics"] == 12);
    CHECK(created.body["model"]["labels"].size() == 12);
    const std::string id = created.body["id"];

    auto field = http::send(cli, "GET", "/sessions/" + id + "/field");
    REQUIRE(field.status == 200);
    CHECK(field.body["version"] == 0);
    CHECK(field.body["field"]["nodes"].empty());
    CHECK(field.body["field"]["settings"]["auto_topics"] == true);
    CHECK(field.body["field"]["settings"]["k"] == 7);
    CHECK(field.body["layout"]["dt"].get<double>() == LayoutParams{}.dt);

    auto added = http::send(cli, "POST", "/sessions/" + id + "/field/documents", {{"ids", {"d1", "d2", "d3"}}});
    REQUIRE(added.status == 200);
    CHECK(added.body["version"] == 1);
    std::size_t topics = 0;
    for (const auto& n : added.body["field"]["nodes"]) topics += n["kind"] == "topic";
    CHECK(topics == 7);
}

TEST_CASE("documents, topics and search") {
    World w;
    http::Server server(w.corpus, w.model, fast_config());
    auto cli = server.client();
    const std::string id = create_session(cli);

    auto doc = http::send(cli, "GET", "/documents/d7");
    REQUIRE(doc.status == 200);
    CHECK(doc.body["title"] == w.corpus.document("d7").title);
    auto theta = w.model.theta_row("d7");
    CHECK(doc.body["theta"].get<std::vector<double>>() == std::vector<double>(theta.begin(), theta.end()));
    CHECK(doc.body["cites"].get<DocumentSet>() == w.corpus.cites("d7"));
    CHECK(doc.body["cited_by"].get<DocumentSet>() == w.corpus.cited_by("d7"));

    auto topic = http::send(cli, "GET", "/topics/4");
    REQUIRE(topic.status == 200);
    CHECK(topic.body["label"] == w.model.label(4));
    REQUIRE(topic.body["top_terms"].size() == 10);
    auto terms = w.model.top_terms(4, 10);
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(topic.body["top_terms"][i]["term"] == terms[i].term);
        CHECK(topic.body["top_terms"][i]["probability"].get<double>() == terms[i].probability);
    }

    auto hits = http::send(cli, "POST", "/sessions/" + id + "/search", {{"query", "w3 w9"}, {"sort", "year"}, {"limit", 8}});
    REQUIRE(hits.status == 200);
    auto expect = Index::build(w.corpus).search(w.corpus, "w3 w9", SortKey::year, 8);
    REQUIRE(hits.body.size() == expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) {
        CHECK(hits.body[i]["doc"] == expect[i].doc);
        CHECK(hits.body[i]["score"].get<double>() == expect[i].score);
        CHECK(hits.body[i].contains("authors"));
        CHECK(hits.body[i].contains("venue"));
    }
}

TEST_CASE("error statuses") {
    World w;
    http::Server server(w.corpus, w.model, fast_config());
    auto cli = server.client();
    const std::string id = create_session(cli);
    const std::string base = "/sessions/" + id;
    http::send(cli, "PATCH", base + "/settings", {{"simulate", false}});
    http::send(cli, "POST", base + "/field/documents", {{"ids", {"d1", "d2"}}});

    CHECK(http::send(cli, "GET", "/sessions/nope/field").status == 404);
    CHECK(http::send(cli, "GET", "/documents/nope").status == 404);
    CHECK(http::send(cli, "GET", "/topics/12").status == 404);
    CHECK(http::send(cli, "GET", "/topics/abc").status == 404);
    CHECK(http::send(cli, "POST", base + "/field/documents", {{"ids", {"nope"}}}).status == 404);
    CHECK(http::send(cli, "POST", base + "/nodes/document/d9/pin", {{"pinned", true}}).status == 404);
    CHECK(http::send(cli, "POST", base + "/nodes/blob/d1/pin", {{"pinned", true}}).status == 404);

    auto malformed = http::to_reply(cli.Post(base + "/field/documents", "{not json", "application/json"));
    CHECK(malformed.status == 400);
    CHECK(malformed.body.contains("error"));
    CHECK(http::send(cli, "POST", base + "/field/documents", {{"id", "d1"}}).status == 400);
    CHECK(http::send(cli, "POST", base + "/field/topics", {{"topics", {3}}}).status == 400);
    CHECK(http::send(cli, "PATCH", base + "/settings", {{"gravity", 3}}).status == 400);
    CHECK(http::send(cli, "PATCH", base + "/settings", {{"k", 0}}).status == 400);
    CHECK(http::send(cli, "PATCH", base + "/settings", {{"damping", 2.0}}).status == 400);
    CHECK(http::send(cli, "POST", base + "/field/expand", {{"ids", {"d1"}}, {"direction", "up"}}).status == 400);
    CHECK(http::send(cli, "POST", base + "/topics/2/label", {{"label", ""}}).status == 400);

    auto overflow = http::to_reply(cli.Post(base + "/nodes/document/d1/position", R"({"x":1e999,"y":0})", "application/json"));
    CHECK(overflow.status == 422);

    // Failed requests leave the version alone.
    CHECK(http::send(cli, "GET", base + "/field").body["version"] == 2);
}

TEST_CASE("versions increase and stale conditional writes conflict") {
    World w;
    http::Server server(w.corpus, w.model, fast_config());
    auto cli = server.client();
    const std::string base = "/sessions/" + create_session(cli);

    std::uint64_t last = 0;
    auto bump = [&](const http::Reply& r) {
        REQUIRE(r.status == 200);
        const auto v = r.body["version"].get<std::uint64_t>();
        CHECK(v > last);
        last = v;
    };
    bump(http::send(cli, "PATCH", base + "/settings", {{"simulate", false}}));
    bump(http::send(cli, "POST", base + "/field/documents", {{"ids", {"d1", "d2", "d3"}}}));
    bump(http::send(cli, "POST", base + "/field/selection", {{"ids", {"d1"}}}));
    bump(http::send(cli, "DELETE", base + "/field/selection"));

    const std::string current = std::to_string(last);
    auto stale = http::send(cli, "POST", base + "/field/documents", {{"ids", {"d4"}}}, {{"If-Match", "\"0\""}});
    CHECK(stale.status == 409);
    CHECK(http::send(cli, "GET", base + "/field").body["version"] == last);
    bump(http::send(cli, "POST", base + "/field/documents", {{"ids", {"d4"}}}, {{"If-Match", "\"" + current + "\""}}));
    CHECK(http::send(cli, "POST", base + "/field/documents", {{"ids", {"d5"}}}, {{"If-Match", "soon"}}).status == 400);
}

TEST_CASE("pinned magnet positions round-trip exactly") {
    World w;
    http::Server server(w.corpus, w.model, fast_config());
    auto cli = server.client();
    const std::string id = create_session(cli);
    const std::string base = "/sessions/" + id;
    auto added = http::send(cli, "POST", base + "/field/documents", {{"ids", {"d10", "d11", "d12", "d13"}}});
    const auto topic = added.body["field"]["nodes"][0]["ref"].get<TopicId>();

    const double x = 123.456789012345678, y = -0.1;
    auto moved = http::send(cli, "POST", base + "/nodes/topic/" + std::to_string(topic) + "/position", {{"x", x}, {"y", y}});
    REQUIRE(moved.status == 200);
    auto field = http::wait_until_idle(cli, id);
    auto state = field_state_from_json(field["field"]);
    CHECK(state.topic_nodes.at(topic).position == Point{x, y});
    CHECK(state.topic_nodes.at(topic).pinned);
}

TEST_CASE("the simulation converges and writes positions back") {
    World w;
    http::Server server(w.corpus, w.model, fast_config());
    auto cli = server.client();
    const std::string id = create_session(cli);
    http::send(cli, "POST", "/sessions/" + id + "/field/documents", {{"ids", {"d1", "d2", "d3", "d4", "d5"}}});
    auto settled = field_state_from_json(http::wait_until_idle(cli, id)["field"]);

    std::map<TopicId, Point> magnets;
    for (const auto& [t, n] : settled.topic_nodes) magnets[t] = n.position;
    for (const auto& [doc, n] : settled.doc_nodes) {
        auto p = project(w.model, doc, magnets);
        CHECK(std::hypot(n.position.x - p.x, n.position.y - p.y) < 1e-3);
    }

    // Export of a settled session equals a direct run from the same snapshot.
    auto exported = http::send(cli, "GET", "/sessions/" + id + "/export.json");
    REQUIRE(exported.status == 200);
    CHECK(exported.body == to_json(final_frame(settled, w.model, {})));
    auto svg = http::to_reply(cli.Get("/sessions/" + id + "/export.svg"));
    CHECK(svg.status == 200);
    CHECK(svg.raw.rfind("<svg", 0) == 0);
}

TEST_CASE("frame stream carries epochs and never stale frames") {
    World w;
    http::Server server(w.corpus, w.model, fast_config());
    auto cli = server.client();
    const std::string id = create_session(cli);
    const std::string base = "/sessions/" + id;

    std::string received;
    std::mutex received_mutex;
    std::atomic<bool> stop{false};
    std::atomic<bool> opened{false};
    std::thread reader([&] {
        auto stream_cli = server.client();
        stream_cli.Get(base + "/frames", [&](const char* data, std::size_t len) {
            {
                std::lock_guard lock(received_mutex);
                received.append(data, len);
            }
            opened = true;
            return !stop.load();
        });
    });
    while (!opened) std::this_thread::sleep_for(std::chrono::milliseconds(1));

    http::send(cli, "POST", base + "/field/documents", {{"ids", {"d1", "d2", "d3", "d4"}}});
    std::this_thread::sleep_for(std::chrono::milliseconds(15));
    http::send(cli, "POST", base + "/field/documents", {{"ids", {"d5", "d6"}}});
    http::wait_until_idle(cli, id);
    std::this_thread::sleep_for(std::chrono::milliseconds(120));  // at least one keep-alive
    stop = true;
    reader.join();

    std::string text;
    {
        std::lock_guard lock(received_mutex);
        text = received;
    }
    CHECK(text.find(": keep-alive") != std::string::npos);
    auto events = parse_events(text);
    REQUIRE(events.size() >= 4);
    CHECK(events[0].name == "epoch");
    CHECK(events[0].data["epoch"] == 0);

    std::uint64_t epoch = 0;
    std::size_t last_step = 0;
    std::vector<std::uint64_t> markers;
    const Event* final_frame_event = nullptr;
    for (const auto& e : events) {
        if (e.name == "epoch") {
            const auto next = e.data["epoch"].get<std::uint64_t>();
            if (!markers.empty()) CHECK(next > epoch);
            markers.push_back(next);
            epoch = next;
            last_step = 0;
        } else {
            REQUIRE(e.name == "frame");
            CHECK(e.data["epoch"].get<std::uint64_t>() == epoch);
            const auto step = e.data["step"].get<std::size_t>();
            CHECK(step == last_step + 1);
            last_step = step;
            final_frame_event = &e;
        }
    }
    CHECK(markers == std::vector<std::uint64_t>{0, 1, 2});
    REQUIRE(final_frame_event != nullptr);
    CHECK(final_frame_event->data["epoch"] == 2);
    CHECK(final_frame_event->data["max_displacement"].get<double>() < LayoutParams{}.epsilon);
}

TEST_CASE("labels, settings and manual topics") {
    World w;
    http::Server server(w.corpus, w.model, fast_config());
    auto cli = server.client();
    const std::string base = "/sessions/" + create_session(cli);
    http::send(cli, "POST", base + "/field/documents", {{"ids", {"d1", "d2", "d3"}}});

    auto renamed = http::send(cli, "POST", base + "/topics/2/label", {{"label", "subwords"}});
    REQUIRE(renamed.status == 200);
    CHECK(http::send(cli, "GET", "/topics/2").body["label"] == "subwords");

    auto patched = http::send(cli, "PATCH", base + "/settings",
                              {{"auto_topics", false}, {"k", 4}, {"repulsion", 0.5}, {"default_pin", "documents"}});
    REQUIRE(patched.status == 200);
    auto field = http::send(cli, "GET", base + "/field").body;
    CHECK(field["field"]["settings"]["auto_topics"] == false);
    CHECK(field["field"]["settings"]["k"] == 4);
    CHECK(field["field"]["settings"]["default_pin"] == "documents");
    CHECK(field["layout"]["repulsion"].get<double>() == 0.5);

    auto state = field_state_from_json(field["field"]);
    const TopicId gone = state.topics().front();
    CHECK(http::send(cli, "DELETE", base + "/field/topics", {{"topics", {gone}}}).status == 200);
    TopicId extra = 0;
    while (state.topic_nodes.count(extra)) ++extra;
    CHECK(http::send(cli, "POST", base + "/field/topics", {{"topics", {extra}}}).status == 200);
    state = field_state_from_json(http::send(cli, "GET", base + "/field").body["field"]);
    CHECK_FALSE(state.topic_nodes.count(gone));
    CHECK(state.topic_nodes.count(extra));
    CHECK(state.topic_nodes.size() == 7);

    CHECK(http::send(cli, "PATCH", base + "/settings", {{"layout", {{"dt", 0.1}}}}).status == 200);
    CHECK(http::send(cli, "GET", base + "/field").body["layout"]["dt"].get<double>() == 0.1);
}

TEST_CASE("sessions save and load") {
    World w;
    fixtures::TempDir dir("session");
    http::Server server(w.corpus, w.model, fast_config());
    auto cli = server.client();
    const std::string id = create_session(cli);
    const std::string base = "/sessions/" + id;
    http::send(cli, "POST", base + "/field/documents", {{"ids", {"d20", "d21", "d22"}}});
    http::send(cli, "POST", base + "/field/expand", {{"ids", {"d22"}}, {"direction", "cited"}});
    http::send(cli, "POST", base + "/topics/1/label", {{"label", "saved label"}});
    http::send(cli, "PATCH", base + "/settings", {{"repulsion", 0.25}});
    auto saved_field = http::wait_until_idle(cli, id);

    const auto path = (dir / "session.json").string();
    auto saved = http::send(cli, "POST", base + "/save", {{"path", path}});
    REQUIRE(saved.status == 200);
    CHECK(http::send(cli, "POST", base + "/save", {{"path", (dir / "missing" / "x.json").string()}}).status == 500);

    auto loaded = http::send(cli, "POST", "/sessions", {{"load", path}});
    REQUIRE(loaded.status == 201);
    const std::string other = loaded.body["id"];
    CHECK(other != id);
    auto reloaded = http::send(cli, "GET", "/sessions/" + other + "/field").body;
    CHECK(field_state_from_json(reloaded["field"]) == field_state_from_json(saved_field["field"]));
    CHECK(reloaded["layout"]["repulsion"].get<double>() == 0.25);
    CHECK(http::send(cli, "GET", "/topics/1").body["label"] == "saved label");

    CHECK(http::send(cli, "POST", "/sessions", {{"load", (dir / "absent.json").string()}}).status == 404);
}

TEST_CASE("novice replay through HTTP equals the field module") {
    World w;
    http::Server server(w.corpus, w.model, fast_config());
    auto cli = server.client();
    for (bool simulate : {false, true}) {
        CAPTURE(simulate);
        auto outcome = replay::novice_scenario(cli, w.corpus, w.model, simulate);
        CHECK(outcome.http_hits == outcome.direct_hits);
        CHECK(outcome.http_hits.size() == replay::kDragged);
        CHECK(outcome.over_http.documents() == outcome.direct.documents());
        CHECK(outcome.over_http == outcome.direct);
    }
}

}
