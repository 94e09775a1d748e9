#include "topicfield/synth.hpp"

#include "topicfield/error.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <random>

namespace topicfield {

namespace {

constexpr std::array<const char*, 6> kVenues = {"ACL", "EMNLP", "COLING", "NAACL", "EACL", "CL"};

std::size_t draw_index(std::mt19937_64& engine, std::size_t n) { return static_cast<std::size_t>(engine() % n); }

}  // namespace

Corpus synth_corpus(const TopicModel& model, std::uint64_t seed) {
    const std::size_t topics = model.num_topics();
    const std::size_t vocab = model.vocabulary_size();

    // Cumulative beta rows for inverse-CDF term sampling.
    std::vector<std::vector<double>> cdf(topics);
    for (TopicId t = 0; t < topics; ++t) {
        auto row = model.beta().row(t);
        cdf[t].resize(vocab);
        double acc = 0.0;
        for (std::size_t v = 0; v < vocab; ++v) cdf[t][v] = acc += row[v];
    }

    std::mt19937_64 engine(seed ^ 0x9e3779b97f4a7c15ULL);
    const std::size_t num_authors = std::max<std::size_t>(10, model.num_documents() / 5);

    std::vector<Document> docs;
    docs.reserve(model.num_documents());
    for (std::size_t i = 0; i < model.num_documents(); ++i) {
        const DocumentId& id = model.document_ids()[i];
        auto theta = model.theta().row(i);

        TopicId first = 0;
        for (TopicId t = 1; t < topics; ++t) if (theta[t] > theta[first]) first = t;
        TopicId second = first;
        for (TopicId t = 0; t < topics; ++t) {
            if (t == first) continue;
            if (second == first || theta[t] > theta[second]) second = t;
        }
        const double p_first = second == first ? 1.0 : theta[first] / (theta[first] + theta[second]);

        auto sample_word = [&]() {
            TopicId t = unit_interval_open_closed(engine) <= p_first ? first : second;
            const double u = unit_interval_open_closed(engine) * cdf[t].back();
            auto it = std::lower_bound(cdf[t].begin(), cdf[t].end(), u);
            std::size_t v = std::min<std::size_t>(static_cast<std::size_t>(it - cdf[t].begin()), vocab - 1);
            return model.vocabulary()[v];
        };

        Document doc;
        doc.id = id;
        for (int w = 0; w < 4; ++w) doc.title += (w ? " " : "") + sample_word();
        const std::size_t words = 20 + draw_index(engine, 41);
        for (std::size_t w = 0; w < words; ++w) doc.text += (w ? " " : "") + sample_word();
        const std::size_t author_count = 1 + draw_index(engine, 3);
        for (std::size_t a = 0; a < author_count; ++a)
            doc.authors.push_back("author" + std::to_string(draw_index(engine, num_authors)));
        doc.year = 1990 + static_cast<int>(draw_index(engine, 21));
        doc.venue = kVenues[draw_index(engine, kVenues.size())];
        if (i > 0) {
            const std::size_t cites = draw_index(engine, std::min<std::size_t>(i, 4) + 1);
            for (std::size_t c = 0; c < cites; ++c) doc.cites.insert(model.document_ids()[draw_index(engine, i)]);
        }
        docs.push_back(std::move(doc));
    }
    return Corpus::from_documents(std::move(docs));
}

void write_synth_dataset(const std::filesystem::path& directory, std::uint64_t seed, std::size_t num_docs,
                         std::size_t num_topics, std::size_t vocab_size) {
    auto model = synth_model(seed, num_docs, num_topics, vocab_size);
    auto corpus = synth_corpus(model, seed);
    save_model(model, directory);
    std::ofstream out(directory / "corpus.jsonl", std::ios::binary);
    if (!out) throw Error(ErrorKind::io, "cannot write " + (directory / "corpus.jsonl").string());
    corpus.save(out);
    if (!out) throw Error(ErrorKind::io, "failed writing " + (directory / "corpus.jsonl").string());
}

}  // namespace topicfield
