#pragma once

#include "topicfield/corpus.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace topicfield {

using TopicId = std::size_t;

/// Dense row-major matrix of probabilities.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    /// `data` must hold rows * cols values in row-major order.
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    const std::vector<double>& data() const noexcept { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Row sums and entries must sit within this distance of a probability row.
inline constexpr double kStochasticTolerance = 1e-6;

/// Number of topics shown in a fresh field.
inline constexpr std::size_t kDefaultTopicCount = 7;

struct TermWeight {
    std::string term;
    double probability = 0.0;

    bool operator==(const TermWeight&) const = default;
};

/// A pre-trained topic model: per-topic word distributions (beta, T x V)
/// and per-document topic proportions (theta, D x T). Only the labels
/// change after construction.
class TopicModel {
public:
    TopicModel() = default;

    /// Validates and assembles a model. Missing labels are generated from
    /// the top three terms of each topic. Throws Error(validation) listing
    /// every violated invariant.
    static TopicModel from_matrices(std::vector<std::string> vocabulary,
                                    Matrix beta,
                                    std::vector<DocumentId> document_ids,
                                    Matrix theta,
                                    std::vector<std::string> labels = {});

    std::size_t num_topics() const noexcept { return beta_.rows(); }
    std::size_t vocabulary_size() const noexcept { return vocabulary_.size(); }
    std::size_t num_documents() const noexcept { return document_ids_.size(); }

    const std::vector<std::string>& vocabulary() const noexcept { return vocabulary_; }
    const std::vector<DocumentId>& document_ids() const noexcept { return document_ids_; }
    const Matrix& beta() const noexcept { return beta_; }
    const Matrix& theta() const noexcept { return theta_; }
    const std::vector<std::string>& labels() const noexcept { return labels_; }

    bool has_document(const DocumentId& id) const { return row_of_.count(id) != 0; }
    /// Topic proportions of one document. Throws Error(not_found).
    std::span<const double> theta_row(const DocumentId& id) const;

    const std::string& label(TopicId topic) const;
    /// Throws Error(not_found) for out-of-range topics and
    /// Error(invalid_argument) for an empty label.
    void rename_topic(TopicId topic, std::string label);

    /// Highest-probability terms of a topic, ties broken by term.
    std::vector<TermWeight> top_terms(TopicId topic, std::size_t n) const;

    /// Mean of theta[d][topic] over `docs`.
    double topic_relevance(const DocumentSet& docs, TopicId topic) const;
    /// Mean theta row over `docs`, one entry per topic.
    std::vector<double> relevances(const DocumentSet& docs) const;
    /// Top-k topics by relevance, ties broken by ascending topic id.
    std::vector<TopicId> rank_topics(const DocumentSet& docs, std::size_t k) const;

    std::string default_label(TopicId topic) const;

    void check_topic(TopicId topic) const;

private:
    std::vector<std::string> vocabulary_;
    Matrix beta_;
    std::vector<DocumentId> document_ids_;
    Matrix theta_;
    std::vector<std::string> labels_;
    std::unordered_map<DocumentId, std::size_t> row_of_;
};

/// Every invariant violation of the given pieces, one message each.
/// An empty result means `TopicModel::from_matrices` would accept them.
std::vector<std::string> check_model(const std::vector<std::string>& vocabulary,
                                     const Matrix& beta,
                                     const std::vector<DocumentId>& document_ids,
                                     const Matrix& theta,
                                     const std::vector<std::string>& labels);

/// Raw contents of a model directory before validation.
struct ModelFiles {
    std::size_t num_topics = 0;
    std::vector<std::string> vocabulary;
    std::vector<DocumentId> document_ids;
    std::vector<std::string> labels;
    Matrix beta;
    Matrix theta;
};

/// Parses `model.json`, `beta.csv` and `theta.csv`. Throws Error(parse)
/// or Error(io); performs no stochasticity checks.
ModelFiles read_model_files(const std::filesystem::path& directory);

/// All violations of a parsed directory against a corpus: matrix
/// invariants, dimension agreement, and manifest ids missing from the corpus.
std::vector<std::string> check_model_files(const ModelFiles& files, const Corpus& corpus);

/// Reads and validates a model directory against a corpus.
TopicModel load_model(const std::filesystem::path& directory, const Corpus& corpus);

/// Writes a model directory. Values use the shortest decimal form that
/// parses back to the identical double.
void save_model(const TopicModel& model, const std::filesystem::path& directory);

/// Deterministic flat-Dirichlet model: every cell is -ln(u) for u drawn
/// uniformly from (0, 1], then rows are normalized. Beta is drawn first,
/// then theta. Documents are named `d<index>`, terms `w<index>`.
TopicModel synth_model(std::uint64_t seed, std::size_t num_docs, std::size_t num_topics,
                       std::size_t vocab_size);

/// Uniform double in (0, 1] from the top 53 bits of a 64-bit draw.
template <typename Engine>
double unit_interval_open_closed(Engine& engine) {
    return static_cast<double>((engine() >> 11) + 1) * 0x1.0p-53;
}

std::string synth_document_id(std::size_t index);

}  // namespace topicfield
