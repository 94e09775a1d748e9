#include "topicfield/field.hpp"

#include "topicfield/error.hpp"
#include "topicfield/search.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace topicfield {

using nlohmann::json;

bool is_finite(Point p) { return std::isfinite(p.x) && std::isfinite(p.y); }

std::optional<NodeKind> parse_node_kind(std::string_view name) {
    if (name == "document") return NodeKind::document;
    if (name == "topic") return NodeKind::topic;
    return std::nullopt;
}

const char* to_string(NodeKind kind) { return kind == NodeKind::document ? "document" : "topic"; }

NodeKind kind_of(const NodeRef& ref) {
    return std::holds_alternative<DocumentId>(ref) ? NodeKind::document : NodeKind::topic;
}

std::string describe(const NodeRef& ref) {
    if (const auto* doc = std::get_if<DocumentId>(&ref)) return "document '" + *doc + "'";
    return "topic " + std::to_string(std::get<TopicId>(ref));
}

std::optional<PinDefault> parse_pin_default(std::string_view name) {
    if (name == "topics") return PinDefault::topics;
    if (name == "documents") return PinDefault::documents;
    return std::nullopt;
}

const char* to_string(PinDefault value) { return value == PinDefault::topics ? "topics" : "documents"; }

DocumentSet FieldState::documents() const {
    DocumentSet out;
    for (const auto& [id, node] : doc_nodes) out.insert(out.end(), id);
    return out;
}

std::vector<TopicId> FieldState::topics() const {
    std::vector<TopicId> out;
    out.reserve(topic_nodes.size());
    for (const auto& [t, node] : topic_nodes) out.push_back(t);
    return out;
}

const FieldNode* FieldState::find(const NodeRef& ref) const {
    if (const auto* doc = std::get_if<DocumentId>(&ref)) {
        auto it = doc_nodes.find(*doc);
        return it == doc_nodes.end() ? nullptr : &it->second;
    }
    auto it = topic_nodes.find(std::get<TopicId>(ref));
    return it == topic_nodes.end() ? nullptr : &it->second;
}

Point ring_position(std::size_t slot, std::size_t total, const FieldBounds& bounds) {
    const double radius = 0.45 * std::min(bounds.width, bounds.height);
    const double angle = std::numbers::pi / 2.0 -
                         2.0 * std::numbers::pi * static_cast<double>(slot) / static_cast<double>(std::max<std::size_t>(total, 1));
    const Point c = bounds.center();
    // Screen y grows downward, so "up" is negative y.
    return {c.x + radius * std::cos(angle), c.y - radius * std::sin(angle)};
}

Point entry_position(const DocumentId& id, const FieldBounds& bounds) {
    const std::uint64_t h = fnv1a(id);
    const double u = static_cast<double>(h & 0xffffffffULL) * 0x1.0p-32;
    const double v = static_cast<double>(h >> 32) * 0x1.0p-32;
    const double angle = 2.0 * std::numbers::pi * u;
    const double radius = kEntryJitterRadius * (0.2 + 0.8 * v);
    const Point c = bounds.center();
    return {c.x + radius * std::cos(angle), c.y + radius * std::sin(angle)};
}

Field::Field(const Corpus& corpus, const TopicModel& model, FieldBounds bounds)
    : corpus_(&corpus), model_(&model) {
    if (!(bounds.width > 0.0) || !(bounds.height > 0.0) || !std::isfinite(bounds.width) ||
        !std::isfinite(bounds.height))
        throw Error(ErrorKind::invalid_argument, "field bounds must be positive and finite");
    state_.bounds = bounds;
}

Field::Field(const Corpus& corpus, const TopicModel& model, FieldState state)
    : Field(corpus, model, state.bounds) {
    for (const auto& [id, node] : state.doc_nodes) {
        corpus.document(id);
        model.theta_row(id);
        if (!is_finite(node.position))
            throw Error(ErrorKind::non_finite, "document '" + id + "' has a non-finite position");
    }
    for (const auto& [topic, node] : state.topic_nodes) {
        model.check_topic(topic);
        if (!is_finite(node.position))
            throw Error(ErrorKind::non_finite, "topic " + std::to_string(topic) + " has a non-finite position");
    }
    for (const auto& id : state.selection) {
        if (!state.doc_nodes.count(id))
            throw Error(ErrorKind::validation, "selected document '" + id + "' is not in the field");
    }
    for (const auto& [from, to] : state.visible_edges) {
        if (!state.doc_nodes.count(from) || !state.doc_nodes.count(to) || !corpus.document(from).cites.count(to))
            throw Error(ErrorKind::validation, "edge " + from + " -> " + to + " is not a citation inside the field");
    }
    if (state.settings.k == 0) throw Error(ErrorKind::validation, "topic count k must be at least 1");
    state_ = std::move(state);
    if (state_.settings.auto_topics) {
        auto expected = state_.doc_nodes.empty() ? std::vector<TopicId>{}
                                                 : model.rank_topics(state_.documents(), state_.settings.k);
        std::sort(expected.begin(), expected.end());
        if (expected != state_.topics())
            throw Error(ErrorKind::validation, "topic magnets do not match the automatic topic ranking");
    }
}

void Field::require_in_field(const DocumentSet& ids) const {
    for (const auto& id : ids) {
        if (!state_.doc_nodes.count(id))
            throw Error(ErrorKind::not_found, "document '" + id + "' is not in the field");
    }
}

void Field::refresh_topics() {
    if (!state_.settings.auto_topics) return;
    std::vector<TopicId> ranked;
    if (!state_.doc_nodes.empty()) ranked = model_->rank_topics(state_.documents(), state_.settings.k);

    std::set<TopicId> keep(ranked.begin(), ranked.end());
    std::erase_if(state_.topic_nodes, [&](const auto& entry) { return !keep.count(entry.first); });
    for (std::size_t slot = 0; slot < ranked.size(); ++slot) {
        if (state_.topic_nodes.count(ranked[slot])) continue;
        state_.topic_nodes.emplace(ranked[slot],
                                   FieldNode{ring_position(slot, ranked.size(), state_.bounds), !pin_documents()});
    }
}

void Field::add_documents(const DocumentSet& ids) {
    for (const auto& id : ids) {
        corpus_->document(id);
        model_->theta_row(id);
    }
    bool changed = false;
    for (const auto& id : ids) {
        if (state_.doc_nodes.count(id)) continue;
        state_.doc_nodes.emplace(id, FieldNode{entry_position(id, state_.bounds), pin_documents()});
        changed = true;
    }
    if (changed) refresh_topics();
}

void Field::remove_documents(const DocumentSet& ids) {
    require_in_field(ids);
    if (ids.empty()) return;
    for (const auto& id : ids) {
        state_.doc_nodes.erase(id);
        state_.selection.erase(id);
    }
    std::erase_if(state_.visible_edges, [&](const CitationEdge& e) {
        return ids.count(e.first) || ids.count(e.second);
    });
    refresh_topics();
}

void Field::expand_citations(const DocumentSet& ids, Direction direction) {
    require_in_field(ids);
    auto neighbours = corpus_->expand(ids, direction);
    for (const auto& id : neighbours) model_->theta_row(id);

    add_documents(neighbours);
    for (const auto& [id, node] : state_.doc_nodes) {
        for (const auto& target : corpus_->document(id).cites) {
            if (state_.doc_nodes.count(target)) state_.visible_edges.emplace(id, target);
        }
    }
}

void Field::set_pin(const NodeRef& node, bool pinned) {
    if (!state_.find(node)) throw Error(ErrorKind::not_found, describe(node) + " is not in the field");
    if (const auto* doc = std::get_if<DocumentId>(&node)) state_.doc_nodes.at(*doc).pinned = pinned;
    else state_.topic_nodes.at(std::get<TopicId>(node)).pinned = pinned;
}

void Field::move_node(const NodeRef& node, Point position) {
    if (!state_.find(node)) throw Error(ErrorKind::not_found, describe(node) + " is not in the field");
    if (!is_finite(position)) throw Error(ErrorKind::non_finite, "position for " + describe(node) + " is not finite");
    if (const auto* doc = std::get_if<DocumentId>(&node)) state_.doc_nodes.at(*doc).position = position;
    else state_.topic_nodes.at(std::get<TopicId>(node)).position = position;
}

void Field::set_selection(const DocumentSet& ids) {
    require_in_field(ids);
    state_.selection = ids;
}

void Field::delete_selection() {
    DocumentSet doomed = state_.selection;
    remove_documents(doomed);
    state_.selection.clear();
}

void Field::set_topic_settings(bool auto_topics, std::size_t k) {
    if (k == 0) throw Error(ErrorKind::invalid_argument, "topic count k must be at least 1");
    state_.settings.auto_topics = auto_topics;
    state_.settings.k = k;
    refresh_topics();
}

void Field::set_default_pin(PinDefault value) { state_.settings.default_pin = value; }

void Field::add_topic(TopicId topic) {
    if (state_.settings.auto_topics)
        throw Error(ErrorKind::state, "topics cannot be added manually while automatic topics are on");
    model_->check_topic(topic);
    if (state_.topic_nodes.count(topic)) return;
    const std::size_t count = state_.topic_nodes.size();
    state_.topic_nodes.emplace(topic, FieldNode{ring_position(count, count + 1, state_.bounds), !pin_documents()});
}

void Field::remove_topic(TopicId topic) {
    if (state_.settings.auto_topics)
        throw Error(ErrorKind::state, "topics cannot be removed manually while automatic topics are on");
    model_->check_topic(topic);
    if (!state_.topic_nodes.erase(topic))
        throw Error(ErrorKind::not_found, "topic " + std::to_string(topic) + " is not in the field");
}

void Field::apply_positions(const std::vector<std::pair<NodeRef, Point>>& positions) {
    for (const auto& [ref, p] : positions) {
        if (!is_finite(p)) throw Error(ErrorKind::non_finite, "position for " + describe(ref) + " is not finite");
    }
    for (const auto& [ref, p] : positions) {
        FieldNode* node = nullptr;
        if (const auto* doc = std::get_if<DocumentId>(&ref)) {
            auto it = state_.doc_nodes.find(*doc);
            if (it != state_.doc_nodes.end()) node = &it->second;
        } else {
            auto it = state_.topic_nodes.find(std::get<TopicId>(ref));
            if (it != state_.topic_nodes.end()) node = &it->second;
        }
        if (node && !node->pinned) node->position = p;
    }
}

json to_json(const FieldState& state) {
    json nodes = json::array();
    for (const auto& [topic, node] : state.topic_nodes) {
        nodes.push_back({{"kind", "topic"}, {"ref", topic}, {"x", node.position.x}, {"y", node.position.y},
                         {"pinned", node.pinned}});
    }
    for (const auto& [id, node] : state.doc_nodes) {
        nodes.push_back({{"kind", "document"}, {"ref", id}, {"x", node.position.x}, {"y", node.position.y},
                         {"pinned", node.pinned}});
    }
    json edges = json::array();
    for (const auto& [from, to] : state.visible_edges) edges.push_back({from, to});
    return {
        {"bounds", {{"width", state.bounds.width}, {"height", state.bounds.height}}},
        {"nodes", std::move(nodes)},
        {"selection", state.selection},
        {"edges", std::move(edges)},
        {"settings",
         {{"auto_topics", state.settings.auto_topics},
          {"k", state.settings.k},
          {"default_pin", to_string(state.settings.default_pin)}}},
    };
}

FieldState field_state_from_json(const json& doc) {
    try {
        FieldState state;
        if (doc.contains("bounds")) {
            state.bounds.width = doc.at("bounds").at("width").get<double>();
            state.bounds.height = doc.at("bounds").at("height").get<double>();
        }
        for (const auto& n : doc.at("nodes")) {
            auto kind = parse_node_kind(n.at("kind").get<std::string>());
            if (!kind) throw Error(ErrorKind::parse, "unknown node kind");
            FieldNode node{{n.at("x").get<double>(), n.at("y").get<double>()}, n.at("pinned").get<bool>()};
            if (*kind == NodeKind::document) state.doc_nodes[n.at("ref").get<DocumentId>()] = node;
            else state.topic_nodes[n.at("ref").get<TopicId>()] = node;
        }
        state.selection = doc.value("selection", DocumentSet{});
        for (const auto& e : doc.value("edges", json::array()))
            state.visible_edges.emplace(e.at(0).get<DocumentId>(), e.at(1).get<DocumentId>());
        if (doc.contains("settings")) {
            const auto& s = doc.at("settings");
            state.settings.auto_topics = s.value("auto_topics", true);
            state.settings.k = s.value("k", kDefaultTopicCount);
            auto pin = parse_pin_default(s.value("default_pin", std::string("topics")));
            if (!pin) throw Error(ErrorKind::parse, "unknown default_pin value");
            state.settings.default_pin = *pin;
        }
        return state;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::parse, std::string("malformed field document: ") + e.what());
    }
}

}  // namespace topicfield
