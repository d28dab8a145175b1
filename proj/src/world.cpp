#include "sons/world.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <sstream>

namespace sons {

namespace {

uint64_t mix_seed(uint64_t seed, uint64_t salt) {
    uint64_t z = seed ^ (salt * 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double rank_from(uint64_t& state) {
    state = mix_seed(state, 0x2545F4914F6CDD1DULL);
    return static_cast<double>(state >> 11) * (1.0 / 9007199254740992.0);
}

}  // namespace

RobotEntity* WorldState::find_robot(RobotId id) {
    for (auto& r : robots)
        if (r.id == id) return &r;
    return nullptr;
}

const RobotEntity* WorldState::find_robot(RobotId id) const {
    for (auto& r : robots)
        if (r.id == id) return &r;
    return nullptr;
}

WorldState make_world(const WorldConfig& cfg) {
    WorldState w;
    w.cfg = cfg;
    w.rng.seed(cfg.seed);
    return w;
}

RobotEntity& add_robot(WorldState& w, RobotType type, const Vec3& position, double yaw,
                       const TargetGraph& default_target) {
    RobotEntity r;
    r.id = static_cast<RobotId>(w.robots.size()) + 1;
    r.type = type;
    r.protocol.id = r.id;
    r.protocol.type = type;
    r.protocol.rng_state = mix_seed(w.cfg.seed, static_cast<uint64_t>(r.id));
    r.protocol.rank = rank_from(r.protocol.rng_state);
    r.protocol.attrs.sons_root_id = r.id;
    r.protocol.attrs.sons_root_rank = r.protocol.rank;
    r.protocol.attrs.cardinality[type] = 1;
    r.protocol.default_target = default_target;
    r.protocol.target = default_target;
    if (type == RobotType::Aerial) {
        r.quad.params = w.cfg.quad_params;
        r.quad.gains = w.cfg.quad_gains;
        r.quad.set_pose({position.x, position.y, 0.0}, yaw);
        r.quad.trim_motors();
        r.target_altitude = position.z > 0.1 ? position.z : 2.0;
    } else {
        r.ground.position = {position.x, position.y, 0.0};
        r.ground.body_yaw = yaw;
        r.ground.q_frame = UnitQuat::identity();
    }
    w.robots.push_back(std::move(r));
    return w.robots.back();
}

namespace {

void apply_faults(WorldState& w) {
    for (const FaultEvent& f : w.faults) {
        if (f.trigger_step != w.step) continue;
        switch (f.kind) {
            case FaultEvent::Kind::KillRobot: {
                if (RobotEntity* r = w.find_robot(f.target)) {
                    r->alive = false;
                    if (r->type == RobotType::Aerial) r->removed = true;
                }
                break;
            }
            case FaultEvent::Kind::KillRandom: {
                std::uniform_real_distribution<double> uni(0.0, 1.0);
                for (auto& r : w.robots) {
                    if (!r.alive) continue;
                    if (uni(w.rng) < f.probability) {
                        r.alive = false;
                        if (r.type == RobotType::Aerial) r.removed = true;
                    }
                }
                break;
            }
            case FaultEvent::Kind::VisionBlackout:
                w.vision_blackout_until = w.step + f.duration_steps;
                break;
            case FaultEvent::Kind::CommBlackout:
                w.comm_blackout_until = w.step + f.duration_steps;
                break;
        }
    }
}

struct SensedSets {
    std::map<RobotId, std::vector<SensedNeighbor>> neighbors;
    std::map<RobotId, std::vector<SensedFeature>> features;
};

SensedSets build_sensing(WorldState& w, bool vision_blackout,
                         std::map<RobotId, Observation>& direct_now) {
    SensedSets out;
    std::vector<SensingPose> poses;
    for (const auto& r : w.robots) {
        if (r.removed) continue;
        poses.push_back({r.id, r.type, r.position(), r.yaw(), r.alive});
    }

    // Direct downward camera output per aerial robot.
    for (auto& r : w.robots) {
        if (r.type != RobotType::Aerial || !r.alive) continue;
        if (vision_blackout) {
            direct_now[r.id] = {};
            continue;
        }
        SensingPose self{r.id, r.type, r.position(), r.yaw(), true};
        direct_now[r.id] = aerial_observation(self, poses, w.features, w.cfg.fov, w.rng);
    }

    // Aerial robots: direct ground sightings plus quad-quad virtual
    // sensing through a shared ground robot seen by both last tick.
    for (auto& r : w.robots) {
        if (r.type != RobotType::Aerial || !r.alive) continue;
        auto& nb = out.neighbors[r.id];
        auto& ft = out.features[r.id];
        const Observation& obs = direct_now[r.id];
        nb.insert(nb.end(), obs.robots.begin(), obs.robots.end());
        ft.insert(ft.end(), obs.features.begin(), obs.features.end());

        auto prev_i = w.prev_direct.find(r.id);
        if (prev_i == w.prev_direct.end()) continue;
        for (auto& other : w.robots) {
            if (other.id == r.id || other.type != RobotType::Aerial || !other.alive) continue;
            auto prev_k = w.prev_direct.find(other.id);
            if (prev_k == w.prev_direct.end()) continue;
            // Find a shared ground robot in both previous observations.
            const SensedNeighbor* mine = nullptr;
            const SensedNeighbor* theirs = nullptr;
            for (const auto& a : prev_i->second.robots) {
                for (const auto& b : prev_k->second.robots) {
                    if (a.id == b.id) {
                        mine = &a;
                        theirs = &b;
                        break;
                    }
                }
                if (mine) break;
            }
            if (!mine) continue;
            SensedNeighbor v;
            v.id = other.id;
            v.type = RobotType::Aerial;
            v.pose = virtual_sense_quad_quad(mine->pose, theirs->pose);
            v.direct = false;
            nb.push_back(v);
        }
    }

    // Ground robots: inverted view of every quad that saw them last tick,
    // plus relayed sightings of the rest of that quad's field of view.
    for (auto& g : w.robots) {
        if (g.type != RobotType::Ground || !g.alive) continue;
        auto& nb = out.neighbors[g.id];
        auto& ft = out.features[g.id];
        std::set<RobotId> seen_ids;
        std::set<int> seen_features;
        for (auto& q : w.robots) {
            if (q.type != RobotType::Aerial || !q.alive) continue;
            auto prev_q = w.prev_direct.find(q.id);
            if (prev_q == w.prev_direct.end()) continue;
            const SensedNeighbor* me = nullptr;
            for (const auto& o : prev_q->second.robots)
                if (o.id == g.id) me = &o;
            if (!me) continue;
            RelPose quad_pose = virtual_sense_invert(me->pose);
            if (!seen_ids.count(q.id)) {
                SensedNeighbor v;
                v.id = q.id;
                v.type = RobotType::Aerial;
                v.pose = quad_pose;
                v.direct = false;
                nb.push_back(v);
                seen_ids.insert(q.id);
            }
            for (const auto& o : prev_q->second.robots) {
                if (o.id == g.id || seen_ids.count(o.id)) continue;
                SensedNeighbor v;
                v.id = o.id;
                v.type = o.type;
                v.pose = virtual_sense_relay(quad_pose, o.pose);
                v.direct = false;
                nb.push_back(v);
                seen_ids.insert(o.id);
            }
            for (const auto& f : prev_q->second.features) {
                if (seen_features.count(f.id)) continue;
                SensedFeature sf = f;
                sf.pose = virtual_sense_relay(quad_pose, f.pose);
                ft.push_back(sf);
                seen_features.insert(f.id);
            }
        }
    }
    return out;
}

void integrate_vehicles(WorldState& w, const std::map<RobotId, Vec3>& v_cmds,
                        const std::map<RobotId, Vec3>& w_cmds) {
    for (auto& r : w.robots) {
        if (r.removed) continue;
        if (r.type == RobotType::Aerial) {
            if (!r.alive) continue;  // failed quads land and despawn
            Vec3 v_level = v_cmds.count(r.id) ? v_cmds.at(r.id) : Vec3::zero();
            Vec3 w_level = w_cmds.count(r.id) ? w_cmds.at(r.id) : Vec3::zero();
            // Level body frame -> world frame by the current yaw.
            Vec3 v_world = rotate_vector(UnitQuat::yaw(r.yaw()), v_level);
            double alt_err = r.target_altitude - r.position().z;
            double vz = std::clamp(w.cfg.altitude_hold_gain * alt_err + v_world.z,
                                   -w.cfg.takeoff_speed, w.cfg.takeoff_speed);
            v_world.z = vz;
            r.quad.fly_tick(v_world, w_level.z, w.cfg.tick_dt);
        } else {
            if (!r.alive) continue;  // failed ground robots freeze in place
            Vec3 v_level = v_cmds.count(r.id) ? v_cmds.at(r.id) : Vec3::zero();
            Vec3 w_level = w_cmds.count(r.id) ? w_cmds.at(r.id) : Vec3::zero();
            // Commands arrive in the body-level frame; express them in the
            // intermediary frame F the wheel layer expects.
            Vec3 v_frame = rotate_vector(r.ground.q_frame, v_level);
            diff_drive(v_frame, w_level.z, r.ground, r.ground_params, w.cfg.tick_dt);
        }
    }
}

}  // namespace

void resolve_collisions(WorldState& w) {
    const double r_robot = w.cfg.robot_radius;
    // Ground robots vs each other (failed ones are immobile obstacles).
    for (auto& a : w.robots) {
        if (a.type != RobotType::Ground || a.removed) continue;
        for (auto& b : w.robots) {
            if (&a == &b || b.type != RobotType::Ground || b.removed) continue;
            Vec3 delta = b.ground.position - a.ground.position;
            delta.z = 0.0;
            double d = delta.norm();
            double min_d = 2.0 * r_robot;
            if (d >= min_d || d < 1e-9) continue;
            Vec3 dir = normalized(delta);
            double overlap = min_d - d;
            if (a.alive && b.alive) {
                a.ground.position -= 0.5 * overlap * dir;
                b.ground.position += 0.5 * overlap * dir;
            } else if (a.alive) {
                a.ground.position -= overlap * dir;
            } else if (b.alive) {
                b.ground.position += overlap * dir;
            }
        }
    }
    // Ground robots vs physical features; pushable blocks get displaced.
    for (auto& a : w.robots) {
        if (a.type != RobotType::Ground || !a.alive || a.removed) continue;
        for (auto& f : w.features) {
            if (f.radius <= 0.0) continue;
            Vec3 delta = a.ground.position - f.position;
            delta.z = 0.0;
            double d = delta.norm();
            double min_d = r_robot + f.radius;
            if (d >= min_d || d < 1e-9) continue;
            Vec3 dir = normalized(delta);
            double overlap = min_d - d;
            if (f.pushable) {
                const double share = 0.5;
                a.ground.position += (1.0 - share) * overlap * dir;
                f.position -= share * overlap * dir;
            } else {
                a.ground.position += overlap * dir;
            }
        }
    }
    // Arena containment.
    auto clamp_into_arena = [&](Vec3& p, double margin) {
        p.x = std::clamp(p.x, w.cfg.arena_min.x + margin, w.cfg.arena_max.x - margin);
        p.y = std::clamp(p.y, w.cfg.arena_min.y + margin, w.cfg.arena_max.y - margin);
        if (w.cfg.octagon) {
            double cut = w.cfg.octagon_cut;
            Vec3 lo = w.cfg.arena_min, hi = w.cfg.arena_max;
            // Four corner half-planes of the octagon.
            double m = margin * std::sqrt(2.0);
            double c1 = (p.x - lo.x) + (p.y - lo.y);
            if (c1 < cut + m) {
                double push = (cut + m - c1) / 2.0;
                p.x += push;
                p.y += push;
            }
            double c2 = (hi.x - p.x) + (p.y - lo.y);
            if (c2 < cut + m) {
                double push = (cut + m - c2) / 2.0;
                p.x -= push;
                p.y += push;
            }
            double c3 = (p.x - lo.x) + (hi.y - p.y);
            if (c3 < cut + m) {
                double push = (cut + m - c3) / 2.0;
                p.x += push;
                p.y -= push;
            }
            double c4 = (hi.x - p.x) + (hi.y - p.y);
            if (c4 < cut + m) {
                double push = (cut + m - c4) / 2.0;
                p.x -= push;
                p.y -= push;
            }
        }
    };
    for (auto& r : w.robots) {
        if (r.removed) continue;
        if (r.type == RobotType::Ground) {
            clamp_into_arena(r.ground.position, w.cfg.robot_radius);
        } else if (r.alive) {
            Vec3 p = r.quad.position_world();
            Vec3 clamped = p;
            clamp_into_arena(clamped, w.cfg.robot_radius);
            if (distance(p, clamped) > 1e-12) {
                // Shift the quad state laterally; attitude is untouched.
                r.quad.state.x[0] += clamped.x - p.x;
                r.quad.state.x[1] += -(clamped.y - p.y);
            }
        }
    }
}

void tick(WorldState& w) {
    apply_faults(w);
    bool vision_out = w.step < w.vision_blackout_until;
    bool comm_out = w.step < w.comm_blackout_until;

    std::map<RobotId, Observation> direct_now;
    SensedSets sensed = build_sensing(w, vision_out, direct_now);

    // Step every live robot's protocol on last tick's inbox.
    StepContext ctx{&w.cfg.protocol, w.cfg.seed, w.step};
    std::vector<Message> outbox_all;
    std::map<RobotId, Vec3> v_cmds, w_cmds;
    w.brain_features.clear();
    w.ops_this_step = 0;
    for (auto& r : w.robots) {
        if (!r.alive) continue;
        // Stabilization overrides must be refreshed every tick to stay on.
        bool had_override = r.protocol.override_active;
        r.protocol.override_active = false;
        std::vector<Message> inbox;
        if (auto it = w.pending_inboxes.find(r.id); it != w.pending_inboxes.end())
            inbox = std::move(it->second);
        BrainInput bi;
        if (auto it = w.brain_inputs.find(r.id); it != w.brain_inputs.end()) bi = it->second;
        StepResult res = step_protocol(r.protocol, inbox, sensed.neighbors[r.id],
                                       sensed.features[r.id], bi, ctx);
        if (had_override && !res.state.override_active) {
            // Keep the override for one grace tick in case of message jitter.
        }
        r.protocol = std::move(res.state);
        r.v_star = res.v_star;
        r.omega_star = res.omega_star;
        if (r.protocol.is_brain()) w.brain_features[r.id] = res.brain_features;
        w.ops_this_step = std::max(w.ops_this_step, r.protocol.ops);
        for (auto& m : res.outbox) outbox_all.push_back(std::move(m));
        v_cmds[r.id] = r.v_star;
        w_cmds[r.id] = r.omega_star;
    }
    w.brain_inputs.clear();

    // Optional flight stabilization adjusts aerial commands and may
    // commandeer a ground robot as the reference landmark.
    if (w.cfg.flight_stabilization) {
        for (auto& r : w.robots) {
            if (r.type != RobotType::Aerial || !r.alive) continue;
            std::vector<LandmarkObservation> landmarks;
            for (const auto& f : direct_now[r.id].features)
                landmarks.push_back({f.id, true, f.pose.d, f.pose.q});
            for (const auto& n : direct_now[r.id].robots)
                landmarks.push_back({n.id, false, n.pose.d, n.pose.q});
            StabilizationResult sr = flight_stabilization(landmarks, r.stab_tracks, r.v_star,
                                                          r.omega_star, w.cfg.tick_dt);
            v_cmds[r.id] = sr.v;
            w_cmds[r.id] = sr.omega;
            if (sr.override_robot) {
                Message ov;
                ov.kind = MessageKind::StabilizationOverride;
                ov.sender = r.id;
                ov.receiver = *sr.override_robot;
                ov.override_active = true;
                // Express the shared motion in the landmark robot's frame.
                const SensedNeighbor* lm = nullptr;
                for (const auto& n : direct_now[r.id].robots)
                    if (n.id == *sr.override_robot) lm = &n;
                if (lm) {
                    ov.v = rotate_vector(quat_inverse(lm->pose.q), sr.v);
                    ov.omega = rotate_vector(quat_inverse(lm->pose.q), sr.omega);
                    outbox_all.push_back(ov);
                }
            }
        }
    }

    // Visibility for the router: mutual FOV (direct or virtual) plus
    // unexpired SoNS links.
    VisibilityTable vis;
    for (auto& [rid, nbs] : sensed.neighbors)
        for (auto& n : nbs) vis.add(rid, n.id);
    for (auto& r : w.robots) {
        if (!r.alive) continue;
        if (r.protocol.parent) vis.add(r.id, r.protocol.parent->id);
        for (auto& [cid, c] : r.protocol.children) vis.add(r.id, cid);
    }

    w.pending_inboxes = route(w.channel, outbox_all, w.step, vis, comm_out);
    integrate_vehicles(w, v_cmds, w_cmds);
    resolve_collisions(w);

    w.prev_direct = std::move(direct_now);
    ++w.step;
}

bool forest_invariant(const WorldState& w) {
    for (const auto& r : w.robots) {
        if (!r.alive) continue;
        // Parent chain must terminate within n hops.
        RobotId v = r.id;
        int hops = 0;
        while (true) {
            const RobotEntity* e = w.find_robot(v);
            if (!e || !e->alive || !e->protocol.parent) break;
            v = e->protocol.parent->id;
            if (++hops > static_cast<int>(w.robots.size())) return false;
        }
    }
    return true;
}

RobotId root_of(const WorldState& w, RobotId id) {
    RobotId v = id;
    int hops = 0;
    while (true) {
        const RobotEntity* e = w.find_robot(v);
        if (!e || !e->protocol.parent) return v;
        const RobotEntity* p = w.find_robot(e->protocol.parent->id);
        if (!p || !p->alive) return v;
        v = e->protocol.parent->id;
        if (++hops > static_cast<int>(w.robots.size())) return v;
    }
}

std::map<RobotId, std::vector<RobotId>> sons_membership(const WorldState& w) {
    std::map<RobotId, std::vector<RobotId>> out;
    for (const auto& r : w.robots) {
        if (!r.alive) continue;
        out[root_of(w, r.id)].push_back(r.id);
    }
    return out;
}

std::optional<Vec3> assigned_target_position(const WorldState& w, RobotId id) {
    const RobotEntity* r = w.find_robot(id);
    if (!r || !r->alive) return std::nullopt;
    if (!r->protocol.parent) return r->position();
    // Walk up to the brain collecting (parent, child) hops, then compose
    // the target displacements downward in world coordinates.
    std::vector<RobotId> path{id};
    RobotId v = id;
    int hops = 0;
    while (true) {
        const RobotEntity* e = w.find_robot(v);
        if (!e || !e->protocol.parent) break;
        v = e->protocol.parent->id;
        path.push_back(v);
        if (++hops > static_cast<int>(w.robots.size())) return std::nullopt;
    }
    std::reverse(path.begin(), path.end());  // brain .. id
    const RobotEntity* brain = w.find_robot(path.front());
    if (!brain || !brain->alive) return std::nullopt;
    Vec3 pos = brain->position();
    UnitQuat frame = UnitQuat::yaw(brain->yaw());
    for (size_t i = 0; i + 1 < path.size(); ++i) {
        const RobotEntity* parent = w.find_robot(path[i]);
        auto it = parent->protocol.children.find(path[i + 1]);
        if (it == parent->protocol.children.end()) return std::nullopt;
        int node = it->second.assigned_node;
        if (node < 0) return std::nullopt;
        const TargetNode* tn = parent->protocol.target.find(node);
        if (!tn) return std::nullopt;
        pos += rotate_vector(frame, tn->displacement);
        frame = hamilton(frame, tn->orientation);
    }
    return pos;
}

namespace {

// AHU canonical form with type labels.
std::string canonical_tree(const std::map<RobotId, std::vector<RobotId>>& children,
                           const std::map<RobotId, RobotType>& types, RobotId v) {
    std::vector<std::string> subs;
    auto it = children.find(v);
    if (it != children.end())
        for (RobotId c : it->second) subs.push_back(canonical_tree(children, types, c));
    std::sort(subs.begin(), subs.end());
    std::string s = "(";
    s += types.at(v) == RobotType::Aerial ? 'a' : 'g';
    for (auto& x : subs) s += x;
    s += ")";
    return s;
}

std::string canonical_target(const TargetGraph& g, int v) {
    std::vector<std::string> subs;
    for (int c : g.children_of(v)) subs.push_back(canonical_target(g, c));
    std::sort(subs.begin(), subs.end());
    std::string s = "(";
    s += g.find(v)->type == RobotType::Aerial ? 'a' : 'g';
    for (auto& x : subs) s += x;
    s += ")";
    return s;
}

}  // namespace

bool topology_matches_target(const WorldState& w, RobotId brain) {
    const RobotEntity* b = w.find_robot(brain);
    if (!b || !b->alive || b->protocol.parent) return false;
    const TargetGraph& g = b->protocol.target;
    if (g.empty()) return false;

    std::map<RobotId, std::vector<RobotId>> kids;
    std::map<RobotId, RobotType> types;
    std::function<void(RobotId)> walk = [&](RobotId v) {
        const RobotEntity* e = w.find_robot(v);
        if (!e) return;
        types[v] = e->type;
        for (auto& [cid, c] : e->protocol.children) {
            const RobotEntity* ce = w.find_robot(cid);
            if (!ce || !ce->alive) continue;
            if (!ce->protocol.parent || ce->protocol.parent->id != v) continue;
            kids[v].push_back(cid);
            walk(cid);
        }
    };
    walk(brain);
    return canonical_tree(kids, types, brain) == canonical_target(g, g.root_id());
}

}  // namespace sons
