#include "topicfield/search.hpp"

#include "topicfield/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>

namespace topicfield {

using nlohmann::json;

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char ch : text) {
        auto c = static_cast<unsigned char>(ch);
        if (c >= 0x80 || (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z')) {
            current.push_back(ch);
        } else if (c >= 'A' && c <= 'Z') {
            current.push_back(static_cast<char>(c - 'A' + 'a'));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

double bm25_idf(std::size_t num_docs, std::size_t doc_freq) {
    const double n = static_cast<double>(num_docs);
    const double df = static_cast<double>(doc_freq);
    return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

double bm25_term_score(double idf, std::uint32_t term_freq, double doc_length, double avg_doc_length,
                       const Bm25Params& params) {
    const double tf = static_cast<double>(term_freq);
    const double norm = avg_doc_length > 0.0 ? doc_length / avg_doc_length : 0.0;
    return idf * tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * norm));
}

std::optional<SortKey> parse_sort_key(std::string_view name) {
    if (name == "relevance") return SortKey::relevance;
    if (name == "title") return SortKey::title;
    if (name == "author") return SortKey::author;
    if (name == "year") return SortKey::year;
    if (name == "venue") return SortKey::venue;
    return std::nullopt;
}

const char* to_string(SortKey key) {
    switch (key) {
    case SortKey::relevance: return "relevance";
    case SortKey::title: return "title";
    case SortKey::author: return "author";
    case SortKey::year: return "year";
    case SortKey::venue: return "venue";
    }
    return "relevance";
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

Index Index::build(const Corpus& corpus) {
    Index index;
    index.doc_ids_.reserve(corpus.size());
    index.doc_lengths_.reserve(corpus.size());
    double total = 0.0;
    std::unordered_map<std::string, std::uint32_t> counts;
    for (const auto& [id, doc] : corpus.documents()) {
        const auto position = static_cast<std::uint32_t>(index.doc_ids_.size());
        auto tokens = tokenize(doc.body);
        counts.clear();
        for (auto& t : tokens) ++counts[std::move(t)];
        for (const auto& [term, tf] : counts) index.postings_[term].push_back({position, tf});
        index.doc_ids_.push_back(id);
        index.doc_lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
        total += static_cast<double>(tokens.size());
    }
    if (!index.doc_ids_.empty()) index.avg_doc_length_ = total / static_cast<double>(index.doc_ids_.size());
    return index;
}

std::uint32_t Index::doc_length(const DocumentId& id) const {
    auto it = std::lower_bound(doc_ids_.begin(), doc_ids_.end(), id);
    if (it == doc_ids_.end() || *it != id) throw Error(ErrorKind::not_found, "unknown document '" + id + "'");
    return doc_lengths_[static_cast<std::size_t>(it - doc_ids_.begin())];
}

const std::vector<Posting>& Index::postings_for(const std::string& term) const {
    static const std::vector<Posting> none;
    auto it = postings_.find(term);
    return it == postings_.end() ? none : it->second;
}

namespace {

template <typename Key>
bool absent_last_less(const std::optional<Key>& a, const std::optional<Key>& b) {
    if (a.has_value() != b.has_value()) return a.has_value();
    return a && *a < *b;
}

std::optional<std::string> first_author(const Document& doc) {
    if (doc.authors.empty()) return std::nullopt;
    return doc.authors.front();
}

}  // namespace

std::vector<SearchHit> Index::search(const Corpus& corpus, std::string_view query, SortKey sort,
                                     std::size_t limit, const Bm25Params& params) const {
    std::vector<SearchHit> hits;
    if (limit == 0) return hits;

    // Query term multiplicities, in term order so summation order is fixed.
    std::map<std::string, std::uint32_t> query_terms;
    for (auto& t : tokenize(query)) ++query_terms[std::move(t)];
    if (query_terms.empty()) return hits;

    std::vector<double> scores(doc_ids_.size(), 0.0);
    std::vector<std::uint32_t> touched;
    for (const auto& [term, multiplicity] : query_terms) {
        const auto& list = postings_for(term);
        if (list.empty()) continue;
        const double idf = bm25_idf(doc_ids_.size(), list.size());
        for (const auto& p : list) {
            if (scores[p.doc] == 0.0) touched.push_back(p.doc);
            scores[p.doc] += static_cast<double>(multiplicity) *
                             bm25_term_score(idf, p.term_freq, doc_lengths_[p.doc], avg_doc_length_, params);
        }
    }

    hits.reserve(touched.size());
    for (auto doc : touched) {
        if (scores[doc] > 0.0) hits.push_back({doc_ids_[doc], scores[doc]});
    }

    auto by_id = [](const SearchHit& a, const SearchHit& b) { return a.doc < b.doc; };
    switch (sort) {
    case SortKey::relevance:
        std::sort(hits.begin(), hits.end(), [](const SearchHit& a, const SearchHit& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.doc < b.doc;
        });
        break;
    case SortKey::title:
        std::sort(hits.begin(), hits.end(), [&](const SearchHit& a, const SearchHit& b) {
            const auto& ta = corpus.document(a.doc).title;
            const auto& tb = corpus.document(b.doc).title;
            if (ta != tb) return ta < tb;
            return by_id(a, b);
        });
        break;
    case SortKey::author:
        std::sort(hits.begin(), hits.end(), [&](const SearchHit& a, const SearchHit& b) {
            auto fa = first_author(corpus.document(a.doc));
            auto fb = first_author(corpus.document(b.doc));
            if (fa != fb) return absent_last_less(fa, fb);
            return by_id(a, b);
        });
        break;
    case SortKey::year:
        std::sort(hits.begin(), hits.end(), [&](const SearchHit& a, const SearchHit& b) {
            auto ya = corpus.document(a.doc).year;
            auto yb = corpus.document(b.doc).year;
            if (ya != yb) {
                if (ya.has_value() != yb.has_value()) return ya.has_value();
                return *ya > *yb;
            }
            return by_id(a, b);
        });
        break;
    case SortKey::venue:
        std::sort(hits.begin(), hits.end(), [&](const SearchHit& a, const SearchHit& b) {
            const auto& va = corpus.document(a.doc).venue;
            const auto& vb = corpus.document(b.doc).venue;
            if (va != vb) return absent_last_less(va, vb);
            return by_id(a, b);
        });
        break;
    }

    if (hits.size() > limit) hits.resize(limit);
    return hits;
}

void Index::save(std::ostream& out, std::uint64_t fingerprint) const {
    json postings = json::object();
    for (const auto& [term, list] : postings_) {
        json entries = json::array();
        for (const auto& p : list) entries.push_back({p.doc, p.term_freq});
        postings[term] = std::move(entries);
    }
    json doc = {
        {"format", "topicfield-index-1"},
        {"fingerprint", fingerprint},
        {"doc_ids", doc_ids_},
        {"doc_lengths", doc_lengths_},
        {"postings", std::move(postings)},
    };
    out << doc.dump() << '\n';
}

std::optional<Index> Index::load(std::istream& in, std::uint64_t fingerprint) {
    json doc;
    try {
        doc = json::parse(in);
        if (doc.value("format", std::string{}) != "topicfield-index-1") return std::nullopt;
        if (doc.at("fingerprint").get<std::uint64_t>() != fingerprint) return std::nullopt;

        Index index;
        index.doc_ids_ = doc.at("doc_ids").get<std::vector<DocumentId>>();
        index.doc_lengths_ = doc.at("doc_lengths").get<std::vector<std::uint32_t>>();
        if (index.doc_ids_.size() != index.doc_lengths_.size()) return std::nullopt;
        double total = 0.0;
        for (auto len : index.doc_lengths_) total += len;
        if (!index.doc_ids_.empty()) index.avg_doc_length_ = total / static_cast<double>(index.doc_ids_.size());
        for (const auto& [term, entries] : doc.at("postings").items()) {
            auto& list = index.postings_[term];
            for (const auto& e : entries) {
                Posting p{e.at(0).get<std::uint32_t>(), e.at(1).get<std::uint32_t>()};
                if (p.doc >= index.doc_ids_.size() || p.term_freq == 0) return std::nullopt;
                list.push_back(p);
            }
        }
        return index;
    } catch (const json::exception&) {
        return std::nullopt;
    }
}

}  // namespace topicfield
