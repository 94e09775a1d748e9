#include "topicfield/corpus.hpp"

#include "topicfield/error.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <istream>
#include <ostream>

namespace topicfield {

using nlohmann::json;

const char* to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::not_found: return "not found";
    case ErrorKind::invalid_argument: return "invalid argument";
    case ErrorKind::parse: return "parse error";
    case ErrorKind::validation: return "validation error";
    case ErrorKind::state: return "invalid state";
    case ErrorKind::non_finite: return "non-finite value";
    case ErrorKind::conflict: return "conflict";
    case ErrorKind::io: return "i/o error";
    }
    return "error";
}

std::string make_body(const std::string& title, const std::string& text) {
    if (text.empty()) return title;
    return title + " " + text;
}

std::optional<Direction> parse_direction(std::string_view name) {
    if (name == "citing") return Direction::citing;
    if (name == "cited") return Direction::cited;
    if (name == "both") return Direction::both;
    return std::nullopt;
}

const char* to_string(Direction direction) {
    switch (direction) {
    case Direction::citing: return "citing";
    case Direction::cited: return "cited";
    case Direction::both: return "both";
    }
    return "both";
}

namespace {

Error record_error(std::size_t line, const std::string& what) {
    return Error(ErrorKind::parse, "line " + std::to_string(line) + ": " + what);
}

std::string required_string(const json& record, const char* key, std::size_t line) {
    auto it = record.find(key);
    if (it == record.end() || it->is_null())
        throw record_error(line, std::string("missing required field '") + key + "'");
    if (!it->is_string())
        throw record_error(line, std::string("field '") + key + "' must be a string");
    return it->get<std::string>();
}

std::vector<std::string> string_array(const json& record, const char* key, std::size_t line) {
    std::vector<std::string> out;
    auto it = record.find(key);
    if (it == record.end() || it->is_null()) return out;
    if (!it->is_array())
        throw record_error(line, std::string("field '") + key + "' must be an array of strings");
    for (const auto& v : *it) {
        if (!v.is_string())
            throw record_error(line, std::string("field '") + key + "' must be an array of strings");
        out.push_back(v.get<std::string>());
    }
    return out;
}

Document parse_record(const std::string& text, std::size_t line) {
    json record;
    try {
        record = json::parse(text);
    } catch (const json::parse_error& e) {
        throw record_error(line, std::string("malformed JSON: ") + e.what());
    }
    if (!record.is_object()) throw record_error(line, "record is not a JSON object");

    Document doc;
    doc.id = required_string(record, "id", line);
    if (doc.id.empty()) throw record_error(line, "empty document id");
    doc.title = required_string(record, "title", line);
    doc.authors = string_array(record, "authors", line);

    if (auto it = record.find("year"); it != record.end() && !it->is_null()) {
        if (!it->is_number_integer()) throw record_error(line, "field 'year' must be an integer");
        doc.year = it->get<int>();
    }
    if (auto it = record.find("venue"); it != record.end() && !it->is_null()) {
        if (!it->is_string()) throw record_error(line, "field 'venue' must be a string");
        doc.venue = it->get<std::string>();
    }
    if (auto it = record.find("text"); it != record.end() && !it->is_null()) {
        if (!it->is_string()) throw record_error(line, "field 'text' must be a string");
        doc.text = it->get<std::string>();
    }
    for (auto& target : string_array(record, "cites", line)) {
        if (target == doc.id)
            throw Error(ErrorKind::validation,
                        "line " + std::to_string(line) + ": document '" + doc.id + "' cites itself");
        doc.cites.insert(std::move(target));
    }
    doc.body = make_body(doc.title, doc.text);
    return doc;
}

}  // namespace

Corpus Corpus::load(std::istream& source) {
    Corpus corpus;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(source, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        Document doc = parse_record(line, line_no);
        DocumentId id = doc.id;
        if (!corpus.documents_.emplace(id, std::move(doc)).second)
            throw Error(ErrorKind::validation,
                        "line " + std::to_string(line_no) + ": duplicate document id '" + id + "'");
    }
    corpus.index_citations();
    return corpus;
}

Corpus Corpus::load_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open corpus file " + path.string());
    return load(in);
}

Corpus Corpus::from_documents(std::vector<Document> documents) {
    Corpus corpus;
    for (auto& doc : documents) {
        if (doc.id.empty()) throw Error(ErrorKind::validation, "empty document id");
        if (doc.cites.count(doc.id))
            throw Error(ErrorKind::validation, "document '" + doc.id + "' cites itself");
        doc.body = make_body(doc.title, doc.text);
        DocumentId id = doc.id;
        if (!corpus.documents_.emplace(id, std::move(doc)).second)
            throw Error(ErrorKind::validation, "duplicate document id '" + id + "'");
    }
    corpus.index_citations();
    return corpus;
}

void Corpus::index_citations() {
    reverse_.clear();
    for (const auto& [id, doc] : documents_) {
        for (const auto& target : doc.cites) {
            if (documents_.count(target)) reverse_[target].insert(id);
        }
    }
}

const Document& Corpus::document(const DocumentId& id) const {
    auto it = documents_.find(id);
    if (it == documents_.end()) throw Error(ErrorKind::not_found, "unknown document '" + id + "'");
    return it->second;
}

DocumentSet Corpus::cites(const DocumentId& id) const {
    DocumentSet out;
    for (const auto& target : document(id).cites) {
        if (documents_.count(target)) out.insert(target);
    }
    return out;
}

DocumentSet Corpus::cited_by(const DocumentId& id) const {
    document(id);
    auto it = reverse_.find(id);
    return it == reverse_.end() ? DocumentSet{} : it->second;
}

DocumentSet Corpus::expand(const DocumentSet& seed, Direction direction) const {
    for (const auto& id : seed) document(id);

    DocumentSet out;
    for (const auto& id : seed) {
        if (direction != Direction::cited) {
            auto citers = cited_by(id);
            out.insert(citers.begin(), citers.end());
        }
        if (direction != Direction::citing) {
            auto targets = cites(id);
            out.insert(targets.begin(), targets.end());
        }
    }
    for (const auto& id : seed) out.erase(id);
    return out;
}

std::vector<CitationEdge> Corpus::edges() const {
    std::vector<CitationEdge> out;
    for (const auto& [id, doc] : documents_) {
        for (const auto& target : doc.cites) {
            if (documents_.count(target)) out.emplace_back(id, target);
        }
    }
    return out;
}

void Corpus::save(std::ostream& out) const {
    for (const auto& [id, doc] : documents_) {
        json record = {{"id", doc.id}, {"title", doc.title}, {"authors", doc.authors}};
        if (doc.year) record["year"] = *doc.year;
        if (doc.venue) record["venue"] = *doc.venue;
        record["text"] = doc.text;
        record["cites"] = doc.cites;
        out << record.dump() << '\n';
    }
}

}  // namespace topicfield
