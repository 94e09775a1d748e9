#pragma once

#include "topicfield/corpus.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace topicfield {

/// Lowercases ASCII letters and splits on every ASCII character that is not
/// a letter or digit. Bytes >= 0x80 are kept inside tokens so UTF-8 words
/// stay whole.
std::vector<std::string> tokenize(std::string_view text);

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

/// idf = ln((N - df + 0.5) / (df + 0.5) + 1); always positive.
double bm25_idf(std::size_t num_docs, std::size_t doc_freq);

/// Per-occurrence contribution of one query term to one document.
double bm25_term_score(double idf, std::uint32_t term_freq, double doc_length, double avg_doc_length,
                       const Bm25Params& params = {});

enum class SortKey { relevance, title, author, year, venue };

std::optional<SortKey> parse_sort_key(std::string_view name);
const char* to_string(SortKey key);

struct Posting {
    std::uint32_t doc;  // position in Index::doc_ids()
    std::uint32_t term_freq;

    bool operator==(const Posting&) const = default;
};

struct SearchHit {
    DocumentId doc;
    double score = 0.0;

    bool operator==(const SearchHit&) const = default;
};

inline constexpr std::size_t kNoLimit = std::numeric_limits<std::size_t>::max();

/// Inverted index over document bodies.
class Index {
public:
    Index() = default;

    static Index build(const Corpus& corpus);

    std::size_t num_docs() const noexcept { return doc_ids_.size(); }
    double avg_doc_length() const noexcept { return avg_doc_length_; }
    const std::vector<DocumentId>& doc_ids() const noexcept { return doc_ids_; }
    const std::vector<std::uint32_t>& doc_lengths() const noexcept { return doc_lengths_; }
    const std::unordered_map<std::string, std::vector<Posting>>& postings() const noexcept {
        return postings_;
    }

    /// Token count of one document; Error(not_found) for unknown ids.
    std::uint32_t doc_length(const DocumentId& id) const;
    /// Postings for a term, empty when the term never occurs.
    const std::vector<Posting>& postings_for(const std::string& term) const;

    /// BM25 scores of every document matching at least one query token,
    /// ordered by `sort` with DocumentId as the final tie-break.
    /// Metadata sorts consult `corpus`, which must be the indexed corpus.
    std::vector<SearchHit> search(const Corpus& corpus, std::string_view query,
                                  SortKey sort = SortKey::relevance,
                                  std::size_t limit = kNoLimit,
                                  const Bm25Params& params = {}) const;

    /// Persists the index with a fingerprint of the corpus it came from.
    void save(std::ostream& out, std::uint64_t fingerprint) const;
    /// Returns nothing when the stream holds an index for another corpus.
    static std::optional<Index> load(std::istream& in, std::uint64_t fingerprint);

    bool operator==(const Index&) const = default;

private:
    std::vector<DocumentId> doc_ids_;
    std::vector<std::uint32_t> doc_lengths_;
    double avg_doc_length_ = 0.0;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
};

/// 64-bit FNV-1a; stable across platforms and runs.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace topicfield
