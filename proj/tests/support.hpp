#pragma once

#include "topicfield/corpus.hpp"
#include "topicfield/topic_model.hpp"

#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace fixtures {

using namespace topicfield;

/// The three-document corpus behind the hand-computed BM25 scores.
inline Corpus bm25_corpus() {
    std::vector<Document> docs(3);
    docs[0].id = "a";
    docs[0].title = "Names in text";
    docs[0].text = "Proper names and place names are names.";
    docs[0].year = 2001;
    docs[1].id = "b";
    docs[1].title = "Parsing";
    docs[1].text = "Syntax trees and names.";
    docs[2].id = "c";
    docs[2].title = "Translation";
    docs[2].text = "Bilingual corpora for translation.";
    docs[2].year = 1999;
    return Corpus::from_documents(std::move(docs));
}

/// Hand-computed BM25 scores (k1 = 1.2, b = 0.75) for bm25_corpus().
inline constexpr double kNamesA = 0.7320410508606148;
inline constexpr double kNamesB = 0.523548346501579;
inline constexpr double kBilingualC = 1.0925692944940748;
inline constexpr double kNamesTranslationC = 1.450638222941713;

/// Ten documents p0..p9 with seventeen in-corpus citation edges plus two
/// dangling ones.
inline std::vector<std::pair<std::string, std::string>> citation_edges() {
    return {{"p1", "p0"}, {"p2", "p0"}, {"p2", "p1"}, {"p3", "p1"}, {"p4", "p2"}, {"p4", "p3"},
            {"p5", "p0"}, {"p5", "p4"}, {"p6", "p5"}, {"p6", "p2"}, {"p7", "p6"}, {"p7", "p3"},
            {"p8", "p7"}, {"p8", "p1"}, {"p9", "p8"}, {"p9", "p0"}, {"p3", "p9"}};
}

inline Corpus citation_corpus() {
    std::vector<Document> docs(10);
    for (int i = 0; i < 10; ++i) {
        docs[i].id = "p" + std::to_string(i);
        docs[i].title = "Paper " + std::to_string(i);
    }
    for (const auto& [from, to] : citation_edges()) docs[std::stoi(from.substr(1))].cites.insert(to);
    docs[4].cites.insert("outside-1");
    docs[9].cites.insert("outside-2");
    return Corpus::from_documents(std::move(docs));
}

/// Corpus with one titled document per id.
inline Corpus plain_corpus(const std::vector<DocumentId>& ids) {
    std::vector<Document> docs;
    for (const auto& id : ids) {
        Document d;
        d.id = id;
        d.title = "Document " + id;
        docs.push_back(std::move(d));
    }
    return Corpus::from_documents(std::move(docs));
}

/// Model with the given theta rows (one per id) and a flat beta.
inline TopicModel model_from_theta(const std::vector<DocumentId>& ids, const std::vector<std::vector<double>>& rows) {
    const std::size_t t = rows.front().size();
    const std::size_t v = 3;
    std::vector<std::string> vocab{"alpha", "beta", "gamma"};
    Matrix beta(t, v, 1.0 / static_cast<double>(v));
    Matrix theta(ids.size(), t);
    for (std::size_t d = 0; d < ids.size(); ++d) {
        for (std::size_t k = 0; k < t; ++k) theta(d, k) = rows[d][k];
    }
    return TopicModel::from_matrices(vocab, beta, ids, theta);
}

/// Random probability row with `n` entries, all strictly positive.
inline std::vector<double> random_row(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    std::vector<double> row(n);
    double sum = 0.0;
    for (auto& x : row) sum += (x = u(rng));
    for (auto& x : row) x /= sum;
    return row;
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("topicfield-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace fixtures
