#include "topicfield/layout.hpp"

#include "topicfield/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace topicfield {

using nlohmann::json;

void LayoutParams::validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorKind::invalid_argument, "layout parameter " + what); };
    if (!(stiffness > 0.0) || !std::isfinite(stiffness)) fail("stiffness must be positive");
    if (!(damping > 0.0 && damping <= 1.0)) fail("damping must lie in (0, 1]");
    if (!(dt > 0.0) || !std::isfinite(dt)) fail("dt must be positive");
    if (!(repulsion >= 0.0) || !std::isfinite(repulsion)) fail("repulsion must be non-negative");
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) fail("epsilon must be positive");
    if (max_steps == 0) fail("max_steps must be at least 1");
}

const FrameNode* PositionFrame::find(const NodeRef& ref) const {
    for (const auto& n : nodes) {
        if (n.ref == ref) return &n;
    }
    return nullptr;
}

std::vector<std::pair<NodeRef, Point>> PositionFrame::positions() const {
    std::vector<std::pair<NodeRef, Point>> out;
    out.reserve(nodes.size());
    for (const auto& n : nodes) out.emplace_back(n.ref, n.position);
    return out;
}

std::vector<double> renormalized_theta(const TopicModel& model, const DocumentId& doc,
                                       std::span<const TopicId> displayed) {
    auto row = model.theta_row(doc);
    std::vector<double> out;
    out.reserve(displayed.size());
    double total = 0.0;
    for (TopicId t : displayed) {
        model.check_topic(t);
        out.push_back(row[t]);
        total += row[t];
    }
    if (displayed.empty()) return out;
    if (total > 0.0) {
        for (auto& w : out) w /= total;
    } else {
        std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(displayed.size()));
    }
    return out;
}

Point project(const TopicModel& model, const DocumentId& doc, const std::map<TopicId, Point>& topic_positions) {
    if (topic_positions.empty())
        throw Error(ErrorKind::invalid_argument, "projection needs at least one topic position");
    std::vector<TopicId> displayed;
    for (const auto& [t, p] : topic_positions) {
        if (!is_finite(p)) throw Error(ErrorKind::non_finite, "topic " + std::to_string(t) + " has a non-finite position");
        displayed.push_back(t);
    }
    auto weights = renormalized_theta(model, doc, displayed);
    Point out;
    std::size_t i = 0;
    for (const auto& [t, p] : topic_positions) {
        out.x += weights[i] * p.x;
        out.y += weights[i] * p.y;
        ++i;
    }
    return out;
}

Simulation::Simulation(const FieldState& field, const TopicModel& model, const LayoutParams& params,
                       const Velocities& velocities)
    : params_(params) {
    params_.validate();
    const auto displayed = field.topics();
    num_magnets_ = displayed.size();

    auto initial_velocity = [&](const NodeRef& ref) {
        auto it = velocities.find(ref);
        return it == velocities.end() ? Point{} : it->second;
    };

    bodies_.reserve(field.topic_nodes.size() + field.doc_nodes.size());
    for (const auto& [t, node] : field.topic_nodes) {
        NodeRef ref = t;
        bodies_.push_back({ref, node.position, initial_velocity(ref), node.pinned, 0.0});
    }
    weights_.reserve(field.doc_nodes.size() * num_magnets_);
    for (const auto& [id, node] : field.doc_nodes) {
        NodeRef ref = id;
        bodies_.push_back({ref, node.position, initial_velocity(ref), node.pinned, 1.0});
        if (num_magnets_ == 0) continue;
        auto w = renormalized_theta(model, id, displayed);
        for (std::size_t m = 0; m < num_magnets_; ++m) {
            weights_.push_back(w[m]);
            bodies_[m].inertia += w[m];
        }
    }
    for (std::size_t m = 0; m < num_magnets_; ++m) {
        if (!(bodies_[m].inertia > 0.0)) bodies_[m].inertia = 1.0;
    }
    for (const auto& b : bodies_) {
        if (!is_finite(b.position) || !is_finite(b.velocity))
            throw Error(ErrorKind::non_finite, describe(b.ref) + " starts with a non-finite position or velocity");
    }
}

PositionFrame Simulation::advance() {
    const std::size_t n = bodies_.size();
    const std::size_t first_doc = num_magnets_;
    const double k = params_.stiffness;
    std::vector<Point> force(n);

    if (num_magnets_ > 0) {
        for (std::size_t d = first_doc; d < n; ++d) {
            const double* w = weights_.data() + (d - first_doc) * num_magnets_;
            const Point xd = bodies_[d].position;
            for (std::size_t m = 0; m < num_magnets_; ++m) {
                const double dx = bodies_[m].position.x - xd.x;
                const double dy = bodies_[m].position.y - xd.y;
                const double kw = k * w[m];
                force[d].x += kw * dx;
                force[d].y += kw * dy;
                force[m].x -= kw * dx;
                force[m].y -= kw * dy;
            }
        }
    }

    if (params_.repulsion > 0.0) {
        for (std::size_t a = first_doc; a < n; ++a) {
            for (std::size_t b = a + 1; b < n; ++b) {
                const double dx = bodies_[a].position.x - bodies_[b].position.x;
                const double dy = bodies_[a].position.y - bodies_[b].position.y;
                const double dist = std::max(std::hypot(dx, dy), kRepulsionDistanceFloor);
                const double scale = params_.repulsion / (dist * dist * dist);
                force[a].x += scale * dx;
                force[a].y += scale * dy;
                force[b].x -= scale * dx;
                force[b].y -= scale * dy;
            }
        }
    }

    ++steps_;
    double max_displacement = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        Body& body = bodies_[i];
        if (body.pinned) continue;
        body.velocity.x = params_.damping * (body.velocity.x + params_.dt * force[i].x / body.inertia);
        body.velocity.y = params_.damping * (body.velocity.y + params_.dt * force[i].y / body.inertia);
        const double step_x = params_.dt * body.velocity.x;
        const double step_y = params_.dt * body.velocity.y;
        body.position.x += step_x;
        body.position.y += step_y;
        if (!is_finite(body.position)) {
            throw Error(ErrorKind::non_finite, describe(body.ref) + " left the finite plane at step " +
                                                   std::to_string(steps_));
        }
        max_displacement = std::max(max_displacement, std::hypot(step_x, step_y));
    }
    converged_ = max_displacement < params_.epsilon;
    return snapshot(max_displacement);
}

PositionFrame Simulation::snapshot(double max_displacement) const {
    PositionFrame frame;
    frame.step = steps_;
    frame.max_displacement = max_displacement;
    frame.nodes.reserve(bodies_.size());
    for (const auto& b : bodies_) frame.nodes.push_back({b.ref, b.position, b.pinned});
    return frame;
}

Velocities Simulation::velocities() const {
    Velocities out;
    for (const auto& b : bodies_) out.emplace(b.ref, b.velocity);
    return out;
}

PositionFrame step(const FieldState& field, const TopicModel& model, const LayoutParams& params,
                   Velocities& velocities) {
    Simulation sim(field, model, params, velocities);
    auto frame = sim.advance();
    velocities = sim.velocities();
    return frame;
}

PositionFrame run_to_convergence(const FieldState& field, const TopicModel& model, const LayoutParams& params,
                                 const std::function<bool(const PositionFrame&)>& on_frame) {
    Simulation sim(field, model, params);
    PositionFrame frame;
    do {
        frame = sim.advance();
        if (on_frame && !on_frame(frame)) break;
    } while (!sim.converged() && sim.steps_taken() < params.max_steps);
    return frame;
}

std::vector<PositionFrame> run_to_convergence(const FieldState& field, const TopicModel& model,
                                              const LayoutParams& params) {
    std::vector<PositionFrame> frames;
    run_to_convergence(field, model, params, [&frames](const PositionFrame& f) {
        frames.push_back(f);
        return true;
    });
    return frames;
}

double magnet_radius(double relevance, double rel_max) {
    if (!(rel_max > 0.0)) return kMagnetRadiusMin;
    return kMagnetRadiusMin + (kMagnetRadiusMax - kMagnetRadiusMin) * relevance / rel_max;
}

json to_json(const PositionFrame& frame) {
    json nodes = json::array();
    for (const auto& n : frame.nodes) {
        json ref = std::holds_alternative<DocumentId>(n.ref) ? json(std::get<DocumentId>(n.ref))
                                                             : json(std::get<TopicId>(n.ref));
        nodes.push_back({{"kind", to_string(kind_of(n.ref))},
                         {"ref", std::move(ref)},
                         {"x", n.position.x},
                         {"y", n.position.y},
                         {"pinned", n.pinned}});
    }
    return {{"step", frame.step}, {"nodes", std::move(nodes)}, {"max_displacement", frame.max_displacement}};
}

json to_json(const LayoutParams& params) {
    return {{"stiffness", params.stiffness}, {"damping", params.damping}, {"dt", params.dt},
            {"repulsion", params.repulsion}, {"epsilon", params.epsilon}, {"max_steps", params.max_steps}};
}

LayoutParams apply_overrides(LayoutParams params, const json& doc) {
    if (!doc.is_object()) throw Error(ErrorKind::invalid_argument, "layout overrides must be an object");
    try {
        for (const auto& [key, value] : doc.items()) {
            if (key == "stiffness") params.stiffness = value.get<double>();
            else if (key == "damping") params.damping = value.get<double>();
            else if (key == "dt") params.dt = value.get<double>();
            else if (key == "repulsion") params.repulsion = value.get<double>();
            else if (key == "epsilon") params.epsilon = value.get<double>();
            else if (key == "max_steps") params.max_steps = value.get<std::size_t>();
            else throw Error(ErrorKind::invalid_argument, "unknown layout parameter '" + key + "'");
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::invalid_argument, std::string("bad layout parameter: ") + e.what());
    }
    params.validate();
    return params;
}

PositionFrame final_frame(const FieldState& field, const TopicModel& model, const LayoutParams& params) {
    return run_to_convergence(field, model, params, nullptr);
}

namespace {

std::string num(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, end);
}

std::string xml_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out.push_back(c);
        }
    }
    return out;
}

}  // namespace

std::string render_svg(const FieldState& field, const TopicModel& model, const PositionFrame& frame) {
    auto position_of = [&](const NodeRef& ref, Point fallback) {
        const FrameNode* n = frame.find(ref);
        return n ? n->position : fallback;
    };

    std::vector<double> relevance(model.num_topics(), 0.0);
    if (!field.doc_nodes.empty()) relevance = model.relevances(field.documents());
    double rel_max = 0.0;
    for (const auto& [t, node] : field.topic_nodes) rel_max = std::max(rel_max, relevance[t]);

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(field.bounds.width) << "\" height=\""
        << num(field.bounds.height) << "\" viewBox=\"0 0 " << num(field.bounds.width) << ' '
        << num(field.bounds.height) << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    svg << "<g class=\"edges\" stroke=\"#999\" stroke-width=\"1\">\n";
    for (const auto& [from, to] : field.visible_edges) {
        Point a = position_of(from, field.doc_nodes.at(from).position);
        Point b = position_of(to, field.doc_nodes.at(to).position);
        svg << "<line class=\"edge\" x1=\"" << num(a.x) << "\" y1=\"" << num(a.y) << "\" x2=\"" << num(b.x)
            << "\" y2=\"" << num(b.y) << "\" data-from=\"" << xml_escape(from) << "\" data-to=\""
            << xml_escape(to) << "\"/>\n";
    }
    svg << "</g>\n";

    svg << "<g class=\"magnets\">\n";
    for (const auto& [t, node] : field.topic_nodes) {
        Point p = position_of(t, node.position);
        svg << "<circle class=\"magnet\" data-topic=\"" << t << "\" cx=\"" << num(p.x) << "\" cy=\"" << num(p.y)
            << "\" r=\"" << num(magnet_radius(relevance[t], rel_max)) << "\" fill=\"#f4a261\" fill-opacity=\"0.6\""
            << (node.pinned ? " stroke=\"#333\"" : "") << "/>\n";
        svg << "<text class=\"label\" x=\"" << num(p.x) << "\" y=\"" << num(p.y) << "\" text-anchor=\"middle\">"
            << xml_escape(model.label(t)) << "</text>\n";
    }
    svg << "</g>\n";

    svg << "<g class=\"documents\">\n";
    for (const auto& [id, node] : field.doc_nodes) {
        Point p = position_of(id, node.position);
        svg << "<circle class=\"document\" data-id=\"" << xml_escape(id) << "\" cx=\"" << num(p.x) << "\" cy=\""
            << num(p.y) << "\" r=\"" << num(kDocumentRadius) << "\" fill=\""
            << (field.selection.count(id) ? "#e63946" : "#457b9d") << "\"><title>"
            << xml_escape(id) << "</title></circle>\n";
    }
    svg << "</g>\n</svg>\n";
    return svg.str();
}

}  // namespace topicfield
