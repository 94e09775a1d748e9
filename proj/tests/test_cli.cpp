#include "http_support.hpp"
#include "support.hpp"

#include "topicfield/cli.hpp"
#include "topicfield/synth.hpp"

#include <doctest.h>

#include <fstream>
#include <regex>
#include <sstream>

using namespace topicfield;
using nlohmann::json;

namespace {

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

Run cli(std::vector<std::string> args) {
    args.insert(args.begin(), "topicfield");
    std::ostringstream out, err;
    Run r;
    r.code = run_cli(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void spit(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

void write_corpus(const std::filesystem::path& path, const Corpus& corpus) {
    std::ofstream out(path, std::ios::binary);
    corpus.save(out);
}

std::vector<std::vector<std::string>> tsv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::istringstream cols(line);
        std::string cell;
        while (std::getline(cols, cell, '\t')) cells.push_back(cell);
        if (!line.empty() && line.back() == '\t') cells.emplace_back();
        rows.push_back(cells);
    }
    return rows;
}

std::map<std::string, Point> svg_centers(const std::string& svg, const std::string& attribute) {
    std::map<std::string, Point> out;
    const std::regex circle("<circle class=\"[a-z]+\" " + attribute + "=\"([^\"]+)\" cx=\"([^\"]+)\" cy=\"([^\"]+)\"");
    for (auto it = std::sregex_iterator(svg.begin(), svg.end(), circle); it != std::sregex_iterator(); ++it)
        out[(*it)[1]] = {std::stod((*it)[2]), std::stod((*it)[3])};
    return out;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("synth output validates and a corrupted cell fails") {
    fixtures::TempDir dir("cli-validate");
    const auto data = dir / "data";
    REQUIRE(cli({"synth", "--seed", "3", "--docs", "25", "--topics", "6", "--vocab", "30", "--out", data.string()}).code ==
            kExitOk);

    const auto corpus = (data / "corpus.jsonl").string();
    const auto ok = cli({"validate", "--corpus", corpus, "--model", data.string()});
    CHECK(ok.code == kExitOk);
    CHECK(ok.out == "ok: 25 documents\n");

    std::string theta = slurp(data / "theta.csv");
    const auto comma = theta.find(',');
    theta.replace(0, comma, "0.9");
    spit(data / "theta.csv", theta);
    const auto bad = cli({"validate", "--corpus", corpus, "--model", data.string()});
    CHECK(bad.code == kExitFailure);
    CHECK(bad.out.find("model: theta row 0") != std::string::npos);

    spit(dir / "broken.jsonl", "{\"id\": \"x\"\n");
    const auto broken = cli({"validate", "--corpus", (dir / "broken.jsonl").string(), "--model", data.string()});
    CHECK(broken.code == kExitFailure);
    CHECK(broken.out.rfind("corpus: ", 0) == 0);
}

TEST_CASE("query prints ranked TSV") {
    fixtures::TempDir dir("cli-query");
    const auto corpus = (dir / "corpus.jsonl").string();
    write_corpus(corpus, fixtures::bm25_corpus());

    const auto r = cli({"query", "--corpus", corpus, "-q", "names"});
    REQUIRE(r.code == kExitOk);
    auto rows = tsv(r.out);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0][0] == "a");
    CHECK(std::abs(std::stod(rows[0][1]) - fixtures::kNamesA) < 1e-9);
    CHECK(rows[0][3] == "2001");
    CHECK(rows[1][0] == "b");
    CHECK(std::abs(std::stod(rows[1][1]) - fixtures::kNamesB) < 1e-9);
    CHECK(rows[1][3].empty());

    rows = tsv(cli({"query", "--corpus", corpus, "-q", "names translation", "--limit", "1"}).out);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0][0] == "c");
    CHECK(std::abs(std::stod(rows[0][1]) - fixtures::kNamesTranslationC) < 1e-9);

    rows = tsv(cli({"query", "--corpus", corpus, "-q", "names", "--sort", "title"}).out);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0][2] <= rows[1][2]);

    CHECK(cli({"query", "--corpus", corpus, "-q", "zzz"}).out.empty());
    CHECK(cli({"query", "--corpus", corpus, "-q", "names", "--sort", "colour"}).code == kExitUsage);
}

TEST_CASE("index cache is reused until the corpus changes") {
    fixtures::TempDir dir("cli-cache");
    const auto corpus = dir / "corpus.jsonl";
    const auto cache = dir / "index.bin";
    write_corpus(corpus, fixtures::bm25_corpus());

    const auto first = cli({"query", "--corpus", corpus.string(), "--index-cache", cache.string(), "-q", "names"});
    REQUIRE(first.code == kExitOk);
    REQUIRE(std::filesystem::exists(cache));
    const auto cached_bytes = slurp(cache);
    const auto second = cli({"query", "--corpus", corpus.string(), "--index-cache", cache.string(), "-q", "names"});
    CHECK(second.out == first.out);
    CHECK(second.err.empty());
    CHECK(slurp(cache) == cached_bytes);

    auto docs = fixtures::bm25_corpus().documents();
    std::vector<Document> changed;
    for (const auto& [id, d] : docs) changed.push_back(d);
    changed[1].title += " names";
    write_corpus(corpus, Corpus::from_documents(changed));
    const auto third = cli({"query", "--corpus", corpus.string(), "--index-cache", cache.string(), "-q", "names"});
    CHECK(third.err.find("stale") != std::string::npos);
    CHECK(third.out != first.out);
    CHECK(third.out == cli({"query", "--corpus", corpus.string(), "-q", "names"}).out);
}

TEST_CASE("layout of a one-hot document sits on its magnet") {
    fixtures::TempDir dir("cli-onehot");
    const std::vector<DocumentId> ids{"hot", "mix1", "mix2"};
    auto model = fixtures::model_from_theta(ids, {{0, 0, 1, 0}, {0.25, 0.25, 0.25, 0.25}, {0.4, 0.1, 0.2, 0.3}});
    const auto model_dir = dir / "model";
    std::filesystem::create_directories(model_dir);
    save_model(model, model_dir);
    write_corpus(dir / "corpus.jsonl", fixtures::plain_corpus(ids));
    spit(dir / "docs.txt", "hot\n\n  mix1 \n");

    const auto svg_path = dir / "out.svg";
    const auto r = cli({"layout", "--corpus", (dir / "corpus.jsonl").string(), "--model", model_dir.string(), "--docs",
                        (dir / "docs.txt").string(), "--out", svg_path.string()});
    REQUIRE(r.code == kExitOk);
    const std::string svg = slurp(svg_path);
    const auto docs = svg_centers(svg, "data-id");
    const auto magnets = svg_centers(svg, "data-topic");
    REQUIRE(docs.size() == 2);
    REQUIRE(magnets.count("2"));
    const Point d = docs.at("hot"), m = magnets.at("2");
    CHECK(std::hypot(d.x - m.x, d.y - m.y) < 1e-3);
}

TEST_CASE("layout JSON matches the service export") {
    fixtures::TempDir dir("cli-export");
    const auto data = dir / "data";
    REQUIRE(cli({"synth", "--seed", "9", "--docs", "40", "--topics", "10", "--vocab", "25", "--out", data.string()}).code ==
            kExitOk);
    const auto corpus_path = data / "corpus.jsonl";
    const auto before_corpus = slurp(corpus_path);
    const auto before_theta = slurp(data / "theta.csv");

    const auto json_path = dir / "frame.json";
    const auto steps_path = dir / "steps.json";
    const auto r = cli({"layout", "--corpus", corpus_path.string(), "--model", data.string(), "--query", "w4 w7",
                        "--limit", "12", "--out", json_path.string(), "--steps-out", steps_path.string()});
    REQUIRE(r.code == kExitOk);
    const json frame = json::parse(slurp(json_path));
    const json steps = json::parse(slurp(steps_path));
    REQUIRE(!steps.empty());
    CHECK(steps.back() == frame);
    CHECK(steps.size() == frame["step"].get<std::size_t>());

    Corpus corpus = Corpus::load_file(corpus_path);
    TopicModel model = load_model(data, corpus);
    auto hits = Index::build(corpus).search(corpus, "w4 w7", SortKey::relevance, 12);
    std::vector<DocumentId> ids;
    for (const auto& h : hits) ids.push_back(h.doc);

    http::Server server(corpus, model);
    auto client = server.client();
    const std::string id = http::send(client, "POST", "/sessions").body["id"];
    http::send(client, "PATCH", "/sessions/" + id + "/settings", {{"simulate", false}});
    REQUIRE(http::send(client, "POST", "/sessions/" + id + "/field/documents", {{"ids", ids}}).status == 200);
    CHECK(http::send(client, "GET", "/sessions/" + id + "/export.json").body == frame);

    CHECK(slurp(corpus_path) == before_corpus);
    CHECK(slurp(data / "theta.csv") == before_theta);
}

TEST_CASE("usage errors exit with 2") {
    CHECK(cli({}).code == kExitUsage);
    CHECK(cli({"frobnicate"}).code == kExitUsage);
    CHECK(cli({"query", "-q", "x"}).code == kExitUsage);
    CHECK(cli({"layout", "--corpus", "c", "--model", "m", "--docs", "d", "--out", "x.png"}).code == kExitUsage);
    CHECK(cli({"layout", "--corpus", "c", "--model", "m", "--docs", "d", "--query", "q", "--out", "x.svg"}).code ==
          kExitUsage);
    CHECK(cli({"synth", "--seed", "1", "--docs", "0", "--topics", "2", "--vocab", "2", "--out", "x"}).code == kExitUsage);
    CHECK(cli({"serve", "--corpus", "c", "--model", "m", "--bind", "nowhere"}).code != kExitOk);

    const auto help = cli({"--help"});
    CHECK(help.code == kExitOk);
    CHECK(help.out.find("validate") != std::string::npos);
    CHECK(cli({"query", "--help"}).code == kExitOk);
}

TEST_CASE("missing files exit with 1") {
    CHECK(cli({"query", "--corpus", "/nonexistent/corpus.jsonl", "-q", "x"}).code == kExitFailure);
    CHECK(cli({"validate", "--corpus", "/nonexistent/corpus.jsonl", "--model", "/nonexistent"}).code == kExitFailure);
}

}
