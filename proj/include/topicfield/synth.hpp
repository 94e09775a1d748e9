#pragma once

#include "topicfield/corpus.hpp"
#include "topicfield/topic_model.hpp"

#include <cstdint>
#include <filesystem>

namespace topicfield {

/// A corpus matching a synthetic model: one document per theta row, whose
/// words are sampled from its two dominant topics. Citations only point to
/// lower-numbered documents, so the graph is acyclic.
Corpus synth_corpus(const TopicModel& model, std::uint64_t seed);

/// Writes `model.json`, `beta.csv`, `theta.csv` and `corpus.jsonl` into
/// `directory`.
void write_synth_dataset(const std::filesystem::path& directory, std::uint64_t seed, std::size_t num_docs,
                         std::size_t num_topics, std::size_t vocab_size);

}  // namespace topicfield
