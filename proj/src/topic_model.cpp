#include "topicfield/topic_model.hpp"

#include "topicfield/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_set>

namespace topicfield {

using nlohmann::json;

namespace {

std::string format_double(double value) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, end);
}

void check_rows(const char* name, const Matrix& m, std::vector<std::string>& out) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < m.cols(); ++c) {
            double v = m(r, c);
            if (!std::isfinite(v) || v < -kStochasticTolerance || v > 1.0 + kStochasticTolerance) {
                out.push_back(std::string(name) + " row " + std::to_string(r) + " column " +
                              std::to_string(c) + " holds " + format_double(v) +
                              ", outside [0, 1]");
            }
            sum += v;
        }
        if (!(std::abs(sum - 1.0) <= kStochasticTolerance)) {
            out.push_back(std::string(name) + " row " + std::to_string(r) + " sums to " +
                          format_double(sum) + ", expected 1 within 1e-6");
        }
    }
}

void check_unique(const char* name, const std::vector<std::string>& items,
                  std::vector<std::string>& out) {
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (items[i].empty()) out.push_back(std::string(name) + " entry " + std::to_string(i) + " is empty");
        else if (!seen.insert(items[i]).second)
            out.push_back(std::string(name) + " entry '" + items[i] + "' is duplicated");
    }
}

Matrix read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());

    std::vector<double> values;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::string line;
    std::size_t line_no = 0;
    const std::string file = path.filename().string();
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;

        std::size_t count = 0;
        const char* p = line.data();
        const char* end = line.data() + line.size();
        while (true) {
            const char* comma = std::find(p, end, ',');
            const char* a = p;
            const char* b = comma;
            while (a < b && (*a == ' ' || *a == '\t')) ++a;
            while (b > a && (b[-1] == ' ' || b[-1] == '\t')) --b;
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(a, b, v);
            if (ec != std::errc() || ptr != b || a == b) {
                throw Error(ErrorKind::parse, file + " line " + std::to_string(line_no) +
                                                  ", column " + std::to_string(count + 1) +
                                                  ": non-numeric cell '" + std::string(a, b) + "'");
            }
            values.push_back(v);
            ++count;
            if (comma == end) break;
            p = comma + 1;
        }
        if (rows == 0) cols = count;
        else if (count != cols) {
            throw Error(ErrorKind::parse, file + " line " + std::to_string(line_no) + " has " +
                                              std::to_string(count) + " cells, expected " +
                                              std::to_string(cols));
        }
        ++rows;
    }

    return Matrix(rows, cols, std::move(values));
}

void write_csv(const Matrix& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
    std::string line;
    for (std::size_t r = 0; r < m.rows(); ++r) {
        line.clear();
        for (std::size_t c = 0; c < m.cols(); ++c) {
            if (c) line.push_back(',');
            line += format_double(m(r, c));
        }
        line.push_back('\n');
        out << line;
    }
    if (!out) throw Error(ErrorKind::io, "failed writing " + path.string());
}

std::vector<std::string> string_list(const json& manifest, const char* key, bool required) {
    auto it = manifest.find(key);
    if (it == manifest.end()) {
        if (required) throw Error(ErrorKind::parse, std::string("model.json: missing key '") + key + "'");
        return {};
    }
    if (!it->is_array()) throw Error(ErrorKind::parse, std::string("model.json: '") + key + "' must be an array");
    std::vector<std::string> out;
    for (const auto& v : *it) {
        if (!v.is_string())
            throw Error(ErrorKind::parse, std::string("model.json: '") + key + "' must hold strings");
        out.push_back(v.get<std::string>());
    }
    return out;
}

}  // namespace

std::vector<std::string> check_model(const std::vector<std::string>& vocabulary,
                                     const Matrix& beta,
                                     const std::vector<DocumentId>& document_ids,
                                     const Matrix& theta,
                                     const std::vector<std::string>& labels) {
    std::vector<std::string> out;
    const std::size_t topics = beta.rows();
    if (topics == 0) out.push_back("model has no topics");
    if (vocabulary.empty()) out.push_back("vocabulary is empty");
    if (beta.cols() != vocabulary.size()) {
        out.push_back("beta has " + std::to_string(beta.cols()) + " columns but vocabulary has " +
                      std::to_string(vocabulary.size()) + " terms");
    }
    if (theta.rows() != document_ids.size()) {
        out.push_back("theta has " + std::to_string(theta.rows()) + " rows but " +
                      std::to_string(document_ids.size()) + " document ids are listed");
    }
    if (theta.rows() > 0 && theta.cols() != topics) {
        out.push_back("theta has " + std::to_string(theta.cols()) + " columns but beta has " +
                      std::to_string(topics) + " topics");
    }
    if (!labels.empty() && labels.size() != topics) {
        out.push_back(std::to_string(labels.size()) + " labels given for " + std::to_string(topics) +
                      " topics");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i].empty()) out.push_back("label " + std::to_string(i) + " is empty");
    }
    check_unique("vocabulary", vocabulary, out);
    check_unique("document_ids", document_ids, out);
    check_rows("beta", beta, out);
    check_rows("theta", theta, out);
    return out;
}

TopicModel TopicModel::from_matrices(std::vector<std::string> vocabulary, Matrix beta,
                                     std::vector<DocumentId> document_ids, Matrix theta,
                                     std::vector<std::string> labels) {
    auto violations = check_model(vocabulary, beta, document_ids, theta, labels);
    if (!violations.empty()) {
        std::string message = "invalid topic model:";
        for (const auto& v : violations) message += "\n  " + v;
        throw Error(ErrorKind::validation, message);
    }

    TopicModel model;
    model.vocabulary_ = std::move(vocabulary);
    model.beta_ = std::move(beta);
    model.document_ids_ = std::move(document_ids);
    model.theta_ = std::move(theta);
    for (std::size_t r = 0; r < model.document_ids_.size(); ++r) model.row_of_[model.document_ids_[r]] = r;
    if (labels.empty()) {
        for (TopicId t = 0; t < model.num_topics(); ++t) labels.push_back(model.default_label(t));
    }
    model.labels_ = std::move(labels);
    return model;
}

std::span<const double> TopicModel::theta_row(const DocumentId& id) const {
    auto it = row_of_.find(id);
    if (it == row_of_.end())
        throw Error(ErrorKind::not_found, "document '" + id + "' has no topic proportions");
    return theta_.row(it->second);
}

void TopicModel::check_topic(TopicId topic) const {
    if (topic >= num_topics())
        throw Error(ErrorKind::not_found, "topic " + std::to_string(topic) + " out of range [0, " +
                                              std::to_string(num_topics()) + ")");
}

const std::string& TopicModel::label(TopicId topic) const {
    check_topic(topic);
    return labels_[topic];
}

void TopicModel::rename_topic(TopicId topic, std::string label) {
    check_topic(topic);
    if (label.empty()) throw Error(ErrorKind::invalid_argument, "topic label must not be empty");
    labels_[topic] = std::move(label);
}

std::vector<TermWeight> TopicModel::top_terms(TopicId topic, std::size_t n) const {
    check_topic(topic);
    if (n == 0) throw Error(ErrorKind::invalid_argument, "term count must be at least 1");
    auto row = beta_.row(topic);
    std::vector<std::size_t> order(row.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t take = std::min(n, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (row[a] != row[b]) return row[a] > row[b];
                          return vocabulary_[a] < vocabulary_[b];
                      });
    std::vector<TermWeight> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) out.push_back({vocabulary_[order[i]], row[order[i]]});
    return out;
}

std::string TopicModel::default_label(TopicId topic) const {
    std::string label = "t" + std::to_string(topic) + ":";
    auto terms = top_terms(topic, 3);
    for (std::size_t i = 0; i < terms.size(); ++i) {
        label += i == 0 ? " " : "/";
        label += terms[i].term;
    }
    return label;
}

std::vector<double> TopicModel::relevances(const DocumentSet& docs) const {
    if (docs.empty()) throw Error(ErrorKind::invalid_argument, "relevance needs at least one document");
    std::vector<double> sums(num_topics(), 0.0);
    for (const auto& id : docs) {
        auto row = theta_row(id);
        for (std::size_t t = 0; t < sums.size(); ++t) sums[t] += row[t];
    }
    const double count = static_cast<double>(docs.size());
    for (auto& s : sums) s /= count;
    return sums;
}

double TopicModel::topic_relevance(const DocumentSet& docs, TopicId topic) const {
    check_topic(topic);
    return relevances(docs)[topic];
}

std::vector<TopicId> TopicModel::rank_topics(const DocumentSet& docs, std::size_t k) const {
    if (k == 0) throw Error(ErrorKind::invalid_argument, "topic count k must be at least 1");
    auto rel = relevances(docs);
    std::vector<TopicId> order(rel.size());
    std::iota(order.begin(), order.end(), TopicId{0});
    const std::size_t take = std::min(k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                      [&](TopicId a, TopicId b) {
                          if (rel[a] != rel[b]) return rel[a] > rel[b];
                          return a < b;
                      });
    order.resize(take);
    return order;
}

ModelFiles read_model_files(const std::filesystem::path& directory) {
    const auto manifest_path = directory / "model.json";
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open " + manifest_path.string());
    json manifest;
    try {
        manifest = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::parse, std::string("model.json: ") + e.what());
    }
    if (!manifest.is_object()) throw Error(ErrorKind::parse, "model.json: expected an object");

    ModelFiles files;
    auto topics = manifest.find("num_topics");
    if (topics == manifest.end() || !topics->is_number_integer() || topics->get<long long>() < 0)
        throw Error(ErrorKind::parse, "model.json: 'num_topics' must be a non-negative integer");
    files.num_topics = topics->get<std::size_t>();
    files.vocabulary = string_list(manifest, "vocabulary", true);
    files.document_ids = string_list(manifest, "document_ids", true);
    files.labels = string_list(manifest, "labels", false);
    files.beta = read_csv(directory / "beta.csv");
    files.theta = read_csv(directory / "theta.csv");
    return files;
}

std::vector<std::string> check_model_files(const ModelFiles& files, const Corpus& corpus) {
    std::vector<std::string> out;
    if (files.beta.rows() != files.num_topics) {
        out.push_back("beta.csv has " + std::to_string(files.beta.rows()) + " rows but num_topics is " +
                      std::to_string(files.num_topics));
    }
    auto rest = check_model(files.vocabulary, files.beta, files.document_ids, files.theta, files.labels);
    out.insert(out.end(), rest.begin(), rest.end());
    for (const auto& id : files.document_ids) {
        if (!corpus.contains(id)) out.push_back("manifest document '" + id + "' is not in the corpus");
    }
    return out;
}

TopicModel load_model(const std::filesystem::path& directory, const Corpus& corpus) {
    ModelFiles files = read_model_files(directory);
    auto violations = check_model_files(files, corpus);
    if (!violations.empty()) {
        std::string message = "invalid topic model in " + directory.string() + ":";
        for (const auto& v : violations) message += "\n  " + v;
        throw Error(ErrorKind::validation, message);
    }
    return TopicModel::from_matrices(std::move(files.vocabulary), std::move(files.beta),
                                     std::move(files.document_ids), std::move(files.theta),
                                     std::move(files.labels));
}

void save_model(const TopicModel& model, const std::filesystem::path& directory) {
    std::filesystem::create_directories(directory);
    json manifest = {
        {"num_topics", model.num_topics()},
        {"vocabulary", model.vocabulary()},
        {"document_ids", model.document_ids()},
        {"labels", model.labels()},
    };
    {
        std::ofstream out(directory / "model.json", std::ios::binary);
        if (!out) throw Error(ErrorKind::io, "cannot write " + (directory / "model.json").string());
        out << manifest.dump(1) << '\n';
    }
    write_csv(model.beta(), directory / "beta.csv");
    write_csv(model.theta(), directory / "theta.csv");
}

std::string synth_document_id(std::size_t index) { return "d" + std::to_string(index); }

TopicModel synth_model(std::uint64_t seed, std::size_t num_docs, std::size_t num_topics,
                       std::size_t vocab_size) {
    if (num_docs == 0 || num_topics == 0 || vocab_size == 0)
        throw Error(ErrorKind::invalid_argument, "synthetic model dimensions must all be at least 1");

    std::mt19937_64 engine(seed);
    auto fill = [&engine](Matrix& m) {
        for (std::size_t r = 0; r < m.rows(); ++r) {
            auto row = m.row(r);
            double sum = 0.0;
            for (auto& v : row) {
                v = -std::log(unit_interval_open_closed(engine));
                sum += v;
            }
            if (sum == 0.0) {
                // Every draw was exactly 1.0; fall back to the uniform row.
                std::fill(row.begin(), row.end(), 1.0 / static_cast<double>(row.size()));
            } else {
                for (auto& v : row) v /= sum;
            }
        }
    };

    Matrix beta(num_topics, vocab_size);
    Matrix theta(num_docs, num_topics);
    fill(beta);
    fill(theta);

    std::vector<std::string> vocabulary;
    vocabulary.reserve(vocab_size);
    for (std::size_t i = 0; i < vocab_size; ++i) vocabulary.push_back("w" + std::to_string(i));
    std::vector<DocumentId> ids;
    ids.reserve(num_docs);
    for (std::size_t i = 0; i < num_docs; ++i) ids.push_back(synth_document_id(i));

    return TopicModel::from_matrices(std::move(vocabulary), std::move(beta), std::move(ids),
                                     std::move(theta));
}

}  // namespace topicfield
