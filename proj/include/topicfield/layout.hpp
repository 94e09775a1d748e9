#pragma once

#include "topicfield/field.hpp"
#include "topicfield/topic_model.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace topicfield {

/// Spring-network constants. Every document is tied to every displayed
/// magnet by a zero-rest-length spring of stiffness `stiffness * theta'`.
struct LayoutParams {
    double stiffness = 1.0;
    /// Fraction of velocity kept per step, in (0, 1].
    double damping = 0.6;
    double dt = 0.29;
    /// Inverse-square document-document repulsion. Anything above zero
    /// moves documents off their barycentric positions.
    double repulsion = 0.0;
    /// Convergence threshold on the largest per-step displacement.
    double epsilon = 1e-4;
    std::size_t max_steps = 10000;

    /// Throws Error(invalid_argument) naming the first bad field.
    void validate() const;

    bool operator==(const LayoutParams&) const = default;
};

/// Pairwise distances below this are clamped in the repulsion term.
inline constexpr double kRepulsionDistanceFloor = 1e-6;

inline constexpr double kMagnetRadiusMin = 8.0;
inline constexpr double kMagnetRadiusMax = 28.0;
inline constexpr double kDocumentRadius = 4.0;

struct FrameNode {
    NodeRef ref;
    Point position;
    bool pinned = false;

    bool operator==(const FrameNode&) const = default;
};

/// Positions of every node after one integration step. Magnets come
/// first in topic order, then documents in id order.
struct PositionFrame {
    std::size_t step = 0;
    std::vector<FrameNode> nodes;
    double max_displacement = 0.0;

    const FrameNode* find(const NodeRef& ref) const;
    /// (ref, position) pairs suitable for Field::apply_positions.
    std::vector<std::pair<NodeRef, Point>> positions() const;

    bool operator==(const PositionFrame&) const = default;
};

using Velocities = std::map<NodeRef, Point>;

/// theta restricted to `displayed` and rescaled to sum to one; the uniform
/// vector when the document has no mass on any displayed topic.
std::vector<double> renormalized_theta(const TopicModel& model, const DocumentId& doc,
                                       std::span<const TopicId> displayed);

/// Barycenter of the magnet positions weighted by the renormalized theta:
/// the closed-form rest position of a free document among pinned magnets.
Point project(const TopicModel& model, const DocumentId& doc,
              const std::map<TopicId, Point>& topic_positions);

/// Incremental simulation over one snapshot. Forces are computed from the
/// positions at the start of each step; integration is semi-implicit Euler
/// with velocity damping. A free magnet's acceleration is its force divided
/// by its total spring weight, so piles of any size settle at the same rate.
class Simulation {
public:
    Simulation(const FieldState& field, const TopicModel& model, const LayoutParams& params,
               const Velocities& velocities = {});

    /// One step. Throws Error(non_finite) naming the node and step when a
    /// position stops being finite.
    PositionFrame advance();

    std::size_t steps_taken() const noexcept { return steps_; }
    bool converged() const noexcept { return converged_; }
    Velocities velocities() const;

private:
    struct Body {
        NodeRef ref;
        Point position;
        Point velocity;
        bool pinned = false;
        double inertia = 1.0;
    };

    PositionFrame snapshot(double max_displacement) const;

    LayoutParams params_;
    std::vector<Body> bodies_;
    std::size_t num_magnets_ = 0;
    /// Renormalized theta, one row of num_magnets_ weights per document.
    std::vector<double> weights_;
    std::size_t steps_ = 0;
    bool converged_ = false;
};

/// Applies one step to `field`, updating `velocities` in place.
PositionFrame step(const FieldState& field, const TopicModel& model, const LayoutParams& params,
                   Velocities& velocities);

/// Steps from rest until the largest displacement drops below epsilon or
/// max_steps is reached. Returns every frame.
std::vector<PositionFrame> run_to_convergence(const FieldState& field, const TopicModel& model,
                                              const LayoutParams& params);

/// Same run, delivering frames to a callback instead of collecting them.
/// The callback may return false to stop early. Returns the last frame.
PositionFrame run_to_convergence(const FieldState& field, const TopicModel& model,
                                 const LayoutParams& params,
                                 const std::function<bool(const PositionFrame&)>& on_frame);

/// Linear map from relevance to screen radius between 8 and 28 units.
double magnet_radius(double relevance, double rel_max);

nlohmann::json to_json(const PositionFrame& frame);
nlohmann::json to_json(const LayoutParams& params);
/// Overrides the fields present in `doc`, then validates.
LayoutParams apply_overrides(LayoutParams params, const nlohmann::json& doc);

/// Final frame of a full run from `field`, as exported by both the CLI and
/// the service.
PositionFrame final_frame(const FieldState& field, const TopicModel& model, const LayoutParams& params);

/// SVG rendering of a field whose nodes sit at the positions in `frame`.
std::string render_svg(const FieldState& field, const TopicModel& model, const PositionFrame& frame);

}  // namespace topicfield
