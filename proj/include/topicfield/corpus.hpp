#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace topicfield {

using DocumentId = std::string;
using DocumentSet = std::set<DocumentId>;

/// Directed citation edge: (citing, cited).
using CitationEdge = std::pair<DocumentId, DocumentId>;

struct Document {
    DocumentId id;
    std::string title;
    std::vector<std::string> authors;
    std::optional<int> year;
    std::optional<std::string> venue;
    /// Raw `text` field as read from the record.
    std::string text;
    /// Title followed by text; what the index sees.
    std::string body;
    /// Outgoing citations, including targets that are not in the corpus.
    DocumentSet cites;

    bool operator==(const Document&) const = default;
};

/// `title` alone when `text` is empty, otherwise `title + " " + text`.
std::string make_body(const std::string& title, const std::string& text);

enum class Direction { citing, cited, both };

std::optional<Direction> parse_direction(std::string_view name);
const char* to_string(Direction direction);

/// Immutable document collection plus its citation graph.
class Corpus {
public:
    Corpus() = default;

    /// Parses newline-delimited JSON records. Throws Error(parse) with the
    /// 1-based line number on malformed input, Error(validation) on
    /// duplicate ids or self-citations.
    static Corpus load(std::istream& source);
    static Corpus load_file(const std::filesystem::path& path);

    /// Builds a corpus from already-constructed documents. `body` is
    /// recomputed from title and text.
    static Corpus from_documents(std::vector<Document> documents);

    std::size_t size() const noexcept { return documents_.size(); }
    bool empty() const noexcept { return documents_.empty(); }
    bool contains(const DocumentId& id) const { return documents_.count(id) != 0; }

    /// Throws Error(not_found) for unknown ids.
    const Document& document(const DocumentId& id) const;

    const std::map<DocumentId, Document>& documents() const noexcept { return documents_; }
    const std::map<DocumentId, DocumentSet>& reverse_citations() const noexcept {
        return reverse_;
    }

    /// Outgoing citations restricted to ids present in the corpus.
    DocumentSet cites(const DocumentId& id) const;
    /// Documents in the corpus that cite `id`.
    DocumentSet cited_by(const DocumentId& id) const;

    /// Union of the requested neighbourhoods of every seed, minus the seeds.
    DocumentSet expand(const DocumentSet& seed, Direction direction) const;

    /// Every citation edge whose endpoints are both in the corpus.
    std::vector<CitationEdge> edges() const;

    /// Writes the corpus back in its line-oriented JSON form.
    void save(std::ostream& out) const;

private:
    void index_citations();

    std::map<DocumentId, Document> documents_;
    std::map<DocumentId, DocumentSet> reverse_;
};

}  // namespace topicfield
