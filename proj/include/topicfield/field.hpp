#pragma once

#include "topicfield/corpus.hpp"
#include "topicfield/topic_model.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace topicfield {

struct Point {
    double x = 0.0;
    double y = 0.0;

    bool operator==(const Point&) const = default;
};

bool is_finite(Point p);

enum class NodeKind { document, topic };

std::optional<NodeKind> parse_node_kind(std::string_view name);
const char* to_string(NodeKind kind);

/// Identifies a node in the field: a document by id or a topic magnet by index.
using NodeRef = std::variant<DocumentId, TopicId>;

NodeKind kind_of(const NodeRef& ref);
std::string describe(const NodeRef& ref);

struct FieldNode {
    Point position;
    bool pinned = false;

    bool operator==(const FieldNode&) const = default;
};

/// Screen-space rectangle; the origin is the top-left corner, y grows down.
struct FieldBounds {
    double width = 800.0;
    double height = 600.0;

    Point center() const { return {width / 2.0, height / 2.0}; }
    bool operator==(const FieldBounds&) const = default;
};

/// Which node kind is pinned when a node is created. `topics` is the usual
/// magnets-pull-documents view; `documents` pins documents into piles and
/// lets the magnets float.
enum class PinDefault { topics, documents };

std::optional<PinDefault> parse_pin_default(std::string_view name);
const char* to_string(PinDefault value);

struct FieldSettings {
    bool auto_topics = true;
    std::size_t k = kDefaultTopicCount;
    PinDefault default_pin = PinDefault::topics;

    bool operator==(const FieldSettings&) const = default;
};

/// Plain snapshot of an exploration session.
struct FieldState {
    FieldBounds bounds;
    std::map<DocumentId, FieldNode> doc_nodes;
    std::map<TopicId, FieldNode> topic_nodes;
    DocumentSet selection;
    std::set<CitationEdge> visible_edges;
    FieldSettings settings;

    DocumentSet documents() const;
    std::vector<TopicId> topics() const;
    const FieldNode* find(const NodeRef& ref) const;

    bool operator==(const FieldState&) const = default;
};

/// Evenly spaced slots on a circle of radius 0.45 * min(width, height)
/// around the field center. Slot 0 sits at the top; slots run clockwise.
Point ring_position(std::size_t slot, std::size_t total, const FieldBounds& bounds);

/// Field center plus a small offset derived from a hash of the id.
Point entry_position(const DocumentId& id, const FieldBounds& bounds);

inline constexpr double kEntryJitterRadius = 5.0;

/// Mutation operations over a FieldState, checked against the corpus and
/// topic model it was built from. Every operation validates its whole
/// input before changing anything.
class Field {
public:
    Field(const Corpus& corpus, const TopicModel& model, FieldBounds bounds = {});
    /// Adopts an existing state after checking it against corpus and model.
    Field(const Corpus& corpus, const TopicModel& model, FieldState state);

    const FieldState& state() const noexcept { return state_; }
    const Corpus& corpus() const noexcept { return *corpus_; }
    const TopicModel& model() const noexcept { return *model_; }

    void add_documents(const DocumentSet& ids);
    void remove_documents(const DocumentSet& ids);
    void expand_citations(const DocumentSet& ids, Direction direction);

    void set_pin(const NodeRef& node, bool pinned);
    void move_node(const NodeRef& node, Point position);

    void set_selection(const DocumentSet& ids);
    void delete_selection();

    /// Re-enabling auto topics, or changing k while enabled, refreshes the
    /// magnet set immediately.
    void set_topic_settings(bool auto_topics, std::size_t k);
    void set_default_pin(PinDefault value);
    /// Manual magnet edits; Error(state) while auto topics are on.
    void add_topic(TopicId topic);
    void remove_topic(TopicId topic);

    /// Writes positions for nodes that exist and are not pinned; the rest
    /// of the list is ignored.
    void apply_positions(const std::vector<std::pair<NodeRef, Point>>& positions);

private:
    void require_in_field(const DocumentSet& ids) const;
    void refresh_topics();
    bool pin_documents() const { return state_.settings.default_pin == PinDefault::documents; }

    const Corpus* corpus_;
    const TopicModel* model_;
    FieldState state_;
};

nlohmann::json to_json(const FieldState& state);
/// Structural parse only; Field's adopting constructor checks references.
FieldState field_state_from_json(const nlohmann::json& doc);

}  // namespace topicfield
