#include "topicfield/cli.hpp"

#include "topicfield/corpus.hpp"
#include "topicfield/error.hpp"
#include "topicfield/field.hpp"
#include "topicfield/layout.hpp"
#include "topicfield/search.hpp"
#include "topicfield/service.hpp"
#include "topicfield/synth.hpp"
#include "topicfield/topic_model.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <array>
#include <atomic>
#include <charconv>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

namespace topicfield {

namespace {

using nlohmann::json;

std::atomic<Service*> running_service{nullptr};

extern "C" void handle_stop_signal(int) {
    if (Service* s = running_service.load()) s->stop();
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
    out << contents;
    if (!out) throw Error(ErrorKind::io, "failed writing " + path.string());
}

struct ValidateArgs {
    std::string corpus;
    std::string model;
};

int cmd_validate(const ValidateArgs& a, std::ostream& out, std::ostream& err) {
    Corpus corpus;
    try {
        corpus = Corpus::load_file(a.corpus);
    } catch (const Error& e) {
        out << "corpus: " << e.what() << '\n';
        err << "validation failed\n";
        return kExitFailure;
    }
    std::vector<std::string> violations;
    try {
        violations = check_model_files(read_model_files(a.model), corpus);
    } catch (const Error& e) {
        violations.push_back(e.what());
    }
    if (violations.empty()) {
        out << "ok: " << corpus.size() << " documents\n";
        return kExitOk;
    }
    for (const auto& v : violations) out << "model: " << v << '\n';
    err << violations.size() << " violation(s)\n";
    return kExitFailure;
}

struct QueryArgs {
    std::string corpus;
    std::string index_cache;
    std::string query;
    std::string sort = "relevance";
    std::size_t limit = kNoLimit;
};

Index cached_index(const Corpus& corpus, const std::string& corpus_path, const std::string& cache_path,
                   std::ostream& err) {
    if (cache_path.empty()) return Index::build(corpus);
    const std::uint64_t fingerprint = fnv1a(read_file(corpus_path));
    if (std::ifstream in(cache_path, std::ios::binary); in) {
        if (auto index = Index::load(in, fingerprint)) return std::move(*index);
        err << "index cache " << cache_path << " is stale, rebuilding\n";
    }
    Index index = Index::build(corpus);
    std::ostringstream buf;
    index.save(buf, fingerprint);
    write_file(cache_path, buf.str());
    return index;
}

int cmd_query(const QueryArgs& a, std::ostream& out, std::ostream& err) {
    auto sort = parse_sort_key(a.sort);
    if (!sort) {
        err << "unknown sort key '" << a.sort << "'\n";
        return kExitUsage;
    }
    Corpus corpus = Corpus::load_file(a.corpus);
    Index index = cached_index(corpus, a.corpus, a.index_cache, err);
    for (const auto& hit : index.search(corpus, a.query, *sort, a.limit)) {
        const Document& doc = corpus.document(hit.doc);
        std::array<char, 32> score{};
        auto [end, ec] = std::to_chars(score.data(), score.data() + score.size(), hit.score);
        (void)ec;
        out << doc.id << '\t' << std::string_view(score.data(), end - score.data()) << '\t' << doc.title << '\t';
        if (doc.year) out << *doc.year;
        out << '\n';
    }
    return kExitOk;
}

struct LayoutArgs {
    std::string corpus;
    std::string model;
    std::string docs;
    std::string query;
    std::size_t limit = 20;
    std::size_t k = kDefaultTopicCount;
    std::string steps_out;
    std::string out;
};

DocumentSet read_id_list(const std::string& path) {
    std::istringstream in(read_file(path));
    DocumentSet ids;
    std::string line;
    while (std::getline(in, line)) {
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r");
        ids.insert(line.substr(first, last - first + 1));
    }
    return ids;
}

int cmd_layout(const LayoutArgs& a, std::ostream& out, std::ostream& err) {
    const std::filesystem::path out_path = a.out;
    const auto ext = out_path.extension().string();
    if (ext != ".svg" && ext != ".json") {
        err << "--out must end in .svg or .json\n";
        return kExitUsage;
    }
    if (a.docs.empty() == a.query.empty()) {
        err << "give exactly one of --docs or --query\n";
        return kExitUsage;
    }
    Corpus corpus = Corpus::load_file(a.corpus);
    TopicModel model = load_model(a.model, corpus);

    DocumentSet ids;
    if (!a.docs.empty()) {
        ids = read_id_list(a.docs);
    } else {
        Index index = Index::build(corpus);
        for (const auto& hit : index.search(corpus, a.query, SortKey::relevance, a.limit)) ids.insert(hit.doc);
    }

    Field field(corpus, model);
    field.set_topic_settings(true, a.k);
    field.add_documents(ids);

    const LayoutParams params;
    std::vector<json> frames;
    PositionFrame last = run_to_convergence(field.state(), model, params, [&](const PositionFrame& frame) {
        if (!a.steps_out.empty()) frames.push_back(to_json(frame));
        return true;
    });
    if (!a.steps_out.empty()) write_file(a.steps_out, json(frames).dump() + "\n");

    if (ext == ".svg") write_file(out_path, render_svg(field.state(), model, last));
    else write_file(out_path, to_json(last).dump(1) + "\n");
    out << "wrote " << out_path.string() << " (" << field.state().doc_nodes.size() << " documents, "
        << field.state().topic_nodes.size() << " topics, " << last.step << " steps)\n";
    return kExitOk;
}

struct SynthArgs {
    std::uint64_t seed = 0;
    std::size_t docs = 0;
    std::size_t topics = 0;
    std::size_t vocab = 0;
    std::string out;
};

int cmd_synth(const SynthArgs& a, std::ostream& out, std::ostream&) {
    if (a.docs == 0 || a.topics == 0 || a.vocab == 0)
        throw Error(ErrorKind::invalid_argument, "--docs, --topics and --vocab must be positive");
    std::filesystem::create_directories(a.out);
    write_synth_dataset(a.out, a.seed, a.docs, a.topics, a.vocab);
    out << "wrote " << a.out << '\n';
    return kExitOk;
}

struct ServeArgs {
    std::string corpus;
    std::string model;
    std::string bind = "127.0.0.1:8080";
    LayoutParams params;
    int frame_interval_ms = 16;
};

int cmd_serve(const ServeArgs& a, std::ostream& out, std::ostream& err) {
    auto [host, port] = parse_bind_address(a.bind);
    a.params.validate();
    Corpus corpus = Corpus::load_file(a.corpus);
    TopicModel model = load_model(a.model, corpus);

    ServiceConfig config;
    config.default_params = a.params;
    config.frame_interval = std::chrono::milliseconds(a.frame_interval_ms);
    Service service(corpus, std::move(model), config);
    if (!service.bind(host, port)) {
        err << "cannot bind " << a.bind << '\n';
        return kExitFailure;
    }
    running_service = &service;
    auto previous_int = std::signal(SIGINT, handle_stop_signal);
    auto previous_term = std::signal(SIGTERM, handle_stop_signal);
    out << "listening on " << a.bind << std::endl;
    service.listen_after_bind();
    std::signal(SIGINT, previous_int);
    std::signal(SIGTERM, previous_term);
    running_service = nullptr;
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Topic field document explorer", args.empty() ? "topicfield" : args.front()};
    app.require_subcommand(1);

    ValidateArgs validate;
    auto* v = app.add_subcommand("validate", "Check corpus and model invariants");
    v->add_option("--corpus", validate.corpus, "Corpus JSONL file")->required()->envname("TOPICFIELD_CORPUS");
    v->add_option("--model", validate.model, "Model directory")->required()->envname("TOPICFIELD_MODEL");

    QueryArgs query;
    auto* q = app.add_subcommand("query", "Search the corpus; prints id, score, title, year as TSV");
    q->add_option("--corpus", query.corpus, "Corpus JSONL file")->required()->envname("TOPICFIELD_CORPUS");
    q->add_option("--index-cache", query.index_cache, "Index file, reused while the corpus is unchanged");
    q->add_option("-q,--query", query.query, "Query text")->required();
    q->add_option("--sort", query.sort, "relevance|title|author|year|venue")
        ->check(CLI::IsMember({"relevance", "title", "author", "year", "venue"}));
    q->add_option("--limit", query.limit, "Maximum number of hits");

    LayoutArgs layout;
    auto* l = app.add_subcommand("layout", "Converge a field and export its final frame");
    l->add_option("--corpus", layout.corpus, "Corpus JSONL file")->required()->envname("TOPICFIELD_CORPUS");
    l->add_option("--model", layout.model, "Model directory")->required()->envname("TOPICFIELD_MODEL");
    auto* docs_opt = l->add_option("--docs", layout.docs, "File with one document id per line");
    auto* query_opt = l->add_option("--query", layout.query, "Place the top hits of this query");
    docs_opt->excludes(query_opt);
    l->add_option("--limit", layout.limit, "Number of hits used with --query");
    l->add_option("--k", layout.k, "Number of topic magnets")->check(CLI::PositiveNumber);
    l->add_option("--steps-out", layout.steps_out, "Write every frame to this JSON file");
    l->add_option("--out", layout.out, "Output .svg or .json")->required();

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "Write a synthetic model and matching corpus");
    s->add_option("--seed", synth.seed, "PRNG seed")->required();
    s->add_option("--docs", synth.docs, "Number of documents")->required();
    s->add_option("--topics", synth.topics, "Number of topics")->required();
    s->add_option("--vocab", synth.vocab, "Vocabulary size")->required();
    s->add_option("--out", synth.out, "Output directory")->required();

    ServeArgs serve;
    auto* sv = app.add_subcommand("serve", "Run the HTTP service");
    sv->add_option("--corpus", serve.corpus, "Corpus JSONL file")->required()->envname("TOPICFIELD_CORPUS");
    sv->add_option("--model", serve.model, "Model directory")->required()->envname("TOPICFIELD_MODEL");
    sv->add_option("--bind", serve.bind, "host:port")->envname("TOPICFIELD_BIND")->capture_default_str();
    sv->add_option("--stiffness", serve.params.stiffness, "Spring stiffness")->capture_default_str();
    sv->add_option("--damping", serve.params.damping, "Velocity retained per step")->capture_default_str();
    sv->add_option("--dt", serve.params.dt, "Integration step")->capture_default_str();
    sv->add_option("--repulsion", serve.params.repulsion, "Document repulsion")->capture_default_str();
    sv->add_option("--epsilon", serve.params.epsilon, "Convergence threshold")->capture_default_str();
    sv->add_option("--max-steps", serve.params.max_steps, "Step limit per run")->capture_default_str();
    sv->add_option("--frame-interval-ms", serve.frame_interval_ms, "Pause between streamed frames")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        if (!reversed.empty()) reversed.pop_back();
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (v->parsed()) return cmd_validate(validate, out, err);
        if (q->parsed()) return cmd_query(query, out, err);
        if (l->parsed()) return cmd_layout(layout, out, err);
        if (s->parsed()) return cmd_synth(synth, out, err);
        if (sv->parsed()) return cmd_serve(serve, out, err);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return e.kind() == ErrorKind::invalid_argument ? kExitUsage : kExitFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitUsage;
}

}  // namespace topicfield
