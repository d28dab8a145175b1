#include "sons/protocol.hpp"

#include <algorithm>
#include <cmath>

namespace sons {

namespace {

uint64_t splitmix64(uint64_t& s) {
    s += 0x9E3779B97F4A7C15ULL;
    uint64_t z = s;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double uniform01(uint64_t& s) {
    return static_cast<double>(splitmix64(s) >> 11) * (1.0 / 9007199254740992.0);
}

double quality_primary(RecruitMetric m, RobotRank rank, int size) {
    switch (m) {
        case RecruitMetric::Rank: return rank;
        case RecruitMetric::Cardinality: return static_cast<double>(size);
        case RecruitMetric::Lexicographic: return static_cast<double>(size);
    }
    return rank;
}

double quality_secondary(RecruitMetric m, RobotRank rank) {
    return m == RecruitMetric::Lexicographic ? rank : 0.0;
}

}  // namespace

bool tie_break_coin(uint64_t seed, RobotId a, RobotId b, int step) {
    uint64_t lo = static_cast<uint64_t>(std::min(a, b));
    uint64_t hi = static_cast<uint64_t>(std::max(a, b));
    uint64_t s = seed ^ (lo * 0x9E3779B97F4A7C15ULL) ^ (hi << 32) ^
                 (static_cast<uint64_t>(step) * 0xBF58476D1CE4E5B9ULL);
    return (splitmix64(s) & 1ULL) != 0;
}

RecruitDecision decide_recruitment(const RobotState& self, const RecruitOffer& offer,
                                   const StepContext& ctx) {
    if (offer.root_id == self.attrs.sons_root_id) return RecruitDecision::Ignore;
    if (offer.root_id == self.former_root && self.steps_since_former < self.attrs.height)
        return RecruitDecision::Ignore;

    const RecruitMetric m = ctx.cfg->metric;
    double mine_p = quality_primary(m, self.attrs.sons_root_rank, self.sons_size);
    double theirs_p = quality_primary(m, offer.root_rank, offer.sons_size);
    if (mine_p != theirs_p)
        return mine_p > theirs_p ? RecruitDecision::BecomeParent : RecruitDecision::BecomeChild;
    double mine_s = quality_secondary(m, self.attrs.sons_root_rank);
    double theirs_s = quality_secondary(m, offer.root_rank);
    if (mine_s != theirs_s)
        return mine_s > theirs_s ? RecruitDecision::BecomeParent : RecruitDecision::BecomeChild;

    // Equal quality: both sides flip the same seeded coin.
    bool higher_wins = tie_break_coin(ctx.world_seed, self.id, offer.sender, ctx.step);
    bool i_am_higher = self.id > offer.sender;
    return (higher_wins == i_am_higher) ? RecruitDecision::BecomeParent
                                        : RecruitDecision::BecomeChild;
}

Vec3 compute_v_local(const Vec3& d_target, double v_max, bool avoid, const ProtocolConfig& cfg) {
    double delta = d_target.norm();
    if (delta >= cfg.k3 || delta < 1e-12) return Vec3::zero();
    double speed;
    if (delta < cfg.k1) {
        speed = v_max;
    } else {
        // Log-shaped taper: continuous with the full-speed branch at k1,
        // monotone decreasing out to k3.
        speed = std::min(v_max, -std::log((delta - cfg.k1) / cfg.k3) * cfg.k2);
        speed = std::max(0.0, speed);
    }
    Vec3 dir = normalized(d_target);
    return avoid ? (-speed) * dir : speed * dir;
}

Vec3 compute_v_hierarchical(const Vec3& d_star, const ProtocolConfig& cfg) {
    double mag = d_star.norm();
    if (mag <= cfg.k5) return Vec3::zero();
    Vec3 dir = normalized(d_star);
    if (mag > cfg.k4) return cfg.v_default * dir;
    return cfg.v_default * ((mag - cfg.k5) / cfg.k4) * dir;
}

RelPose transform_feature(const RelPose& link, const RelPose& feature) {
    RelPose out;
    out.d = link.d + rotate_vector(link.q, feature.d);
    out.q = hamilton(link.q, feature.q);
    return out;
}

namespace {

double angle_law(double angle_err, const ProtocolConfig& cfg) {
    double mag = std::fabs(angle_err);
    if (mag <= cfg.k5) return 0.0;
    double w;
    if (mag > cfg.k4)
        w = cfg.omega_default;
    else
        w = cfg.omega_default * ((mag - cfg.k5) / cfg.k4);
    return angle_err > 0 ? w : -w;
}

struct StepWork {
    // Inbox digest.
    std::optional<IdentityUpdate> identity_from_parent;
    int parent_sons_size = -1;
    std::vector<RecruitOffer> offers;
    std::vector<Message> accepts;
    std::vector<Message> handover_requests;   // children offered to me
    std::vector<Message> give_requests;       // coordinator asks me to hand a child up
    std::vector<Message> incoming_features;   // features from children (pre-transform)
    std::vector<Message> global_velocities;
    bool expelled = false;
    std::optional<Message> welcome;           // target assignment completing a switch
};

// On expulsion the robot keeps its downstream subtree map; on any other
// link loss it returns to the defaults it initialized with.
void become_brain(RobotState& s, const StepContext& ctx, bool keep_subtree_map) {
    if (s.parent) {
        s.former_root = s.attrs.sons_root_id;
        s.steps_since_former = 0;
    }
    s.parent.reset();
    s.pending_parent.reset();
    s.rank = uniform01(s.rng_state);
    s.attrs.sons_root_id = s.id;
    s.attrs.sons_root_rank = s.rank;
    if (!keep_subtree_map) s.target = s.default_target;
    s.sons_size = s.attrs.total_cardinality();
    s.freeze_until = ctx.step;  // no extra freeze; brains recruit immediately
}

}  // namespace

StepResult step_protocol(const RobotState& state, const std::vector<Message>& inbox,
                         const std::vector<SensedNeighbor>& sensed,
                         const std::vector<SensedFeature>& features, const BrainInput& brain,
                         const StepContext& ctx) {
    const ProtocolConfig& cfg = *ctx.cfg;
    StepResult result;
    RobotState s = state;
    s.ops = 0;
    std::vector<Message>& out = result.outbox;
    StepWork work;

    auto push = [&](Message m) {
        m.sender = s.id;
        out.push_back(m);
    };

    // ---- aging ---------------------------------------------------------
    if (s.parent) {
        ++s.parent->staleness;
        ++s.parent->instruction_age;
    }
    for (auto& [cid, c] : s.children) {
        ++c.staleness;
        if (c.handover_to != kNoRobot) ++c.handover_age;
    }
    if (s.pending_parent) ++s.pending_age;
    if (s.steps_since_former < (1 << 20)) ++s.steps_since_former;

    // ---- inbox ---------------------------------------------------------
    for (const Message& m : inbox) {
        if (m.receiver != s.id) {
            ++s.malformed;
            continue;
        }
        switch (m.kind) {
            case MessageKind::AttributeUpdate: {
                if (s.parent && m.sender == s.parent->id) {
                    work.identity_from_parent = IdentityUpdate{m.root_id, m.root_rank};
                    work.parent_sons_size = m.sons_size;
                    s.parent->staleness = 0;
                } else if (auto it = s.children.find(m.sender); it != s.children.end()) {
                    if (m.detach) {
                        s.children.erase(it);
                    } else {
                        it->second.cardinality = m.cardinality;
                        it->second.height = m.height;
                        it->second.overridden = m.locally_overridden;
                        it->second.grandchildren = m.child_ids;
                        it->second.staleness = 0;
                    }
                } else {
                    ++s.malformed;
                }
                break;
            }
            case MessageKind::TargetAssignment: {
                if (m.welcome && s.pending_parent && m.sender == *s.pending_parent) {
                    work.welcome = m;
                } else if (m.welcome && s.parent && m.sender != s.parent->id) {
                    // Completed handover: adopter confirms before the old
                    // link is broken.
                    work.welcome = m;
                } else if (s.parent && m.sender == s.parent->id) {
                    s.target = m.target_subtree;
                    s.parent->staleness = 0;
                } else if (m.welcome && !s.parent && !s.pending_parent) {
                    // Recruited while briefly brain (e.g. optimistic adopt
                    // raced with welcome); accept it.
                    work.welcome = m;
                } else {
                    ++s.malformed;
                }
                break;
            }
            case MessageKind::ActuationInstruction: {
                if (s.parent && m.sender == s.parent->id) {
                    s.parent->correction = m.correction;
                    s.parent->orientation_correction = m.orientation_correction;
                    s.parent->damping = m.damping;
                    s.parent->parent_frame_d = m.parent_frame_d;
                    s.parent->parent_frame_d_star = m.parent_frame_d_star;
                    s.parent->have_instruction = true;
                    s.parent->instruction_age = 0;
                    s.parent->staleness = 0;
                } else {
                    ++s.malformed;
                }
                break;
            }
            case MessageKind::Recruit:
                work.offers.push_back({m.sender, m.root_id, m.root_rank, m.sons_size});
                break;
            case MessageKind::RecruitAccept:
                work.accepts.push_back(m);
                break;
            case MessageKind::Handover:
                if (m.handover_ack) {
                    if (auto it = s.children.find(m.handover_child); it != s.children.end())
                        s.children.erase(it);
                } else if (m.override_active) {
                    work.give_requests.push_back(m);
                } else {
                    work.handover_requests.push_back(m);
                }
                break;
            case MessageKind::Expel:
                if (s.parent && m.sender == s.parent->id) work.expelled = true;
                break;
            case MessageKind::SensorFeature:
                if (s.children.count(m.sender) || (s.parent && m.sender == s.parent->id))
                    work.incoming_features.push_back(m);
                else
                    ++s.malformed;
                break;
            case MessageKind::GlobalVelocity:
                if (s.children.count(m.sender) || (s.parent && m.sender == s.parent->id))
                    work.global_velocities.push_back(m);
                else
                    ++s.malformed;
                break;
            case MessageKind::StabilizationOverride:
                s.override_active = m.override_active;
                s.override_v = m.v;
                s.override_w = m.omega;
                break;
        }
    }

    // ---- sensed poses ---------------------------------------------------
    for (const SensedNeighbor& n : sensed) {
        if (s.parent && n.id == s.parent->id) {
            s.parent->pose = n.pose;
            s.parent->pose_known = true;
            s.parent->staleness = 0;
        }
        if (auto it = s.children.find(n.id); it != s.children.end()) {
            it->second.pose = n.pose;
            it->second.staleness = 0;
        }
    }

    // ---- liveness -------------------------------------------------------
    result.parent_lost = false;
    if (work.expelled) {
        become_brain(s, ctx, /*keep_subtree_map=*/true);
        result.parent_lost = true;
    } else if (s.parent && s.parent->staleness >= cfg.liveness_steps) {
        become_brain(s, ctx, /*keep_subtree_map=*/false);
        result.parent_lost = true;
    }
    for (auto it = s.children.begin(); it != s.children.end();) {
        if (it->second.staleness >= cfg.liveness_steps)
            it = s.children.erase(it);
        else
            ++it;
    }
    if (s.pending_parent && s.pending_age > 3) s.pending_parent.reset();

    // ---- welcome: complete a parent switch ------------------------------
    if (work.welcome) {
        const Message& w = *work.welcome;
        RobotId old_parent = s.parent ? s.parent->id : kNoRobot;
        if (old_parent != kNoRobot && old_parent != w.sender) {
            Message detach;
            detach.kind = MessageKind::AttributeUpdate;
            detach.receiver = old_parent;
            detach.detach = true;
            push(detach);
            s.former_root = s.attrs.sons_root_id;
            s.steps_since_former = 0;
        }
        ParentRecord pr;
        pr.id = w.sender;
        for (const SensedNeighbor& n : sensed)
            if (n.id == w.sender) {
                pr.pose = n.pose;
                pr.pose_known = true;
            }
        s.parent = pr;
        s.pending_parent.reset();
        s.target = w.target_subtree;
        if (cfg.switch_freeze) s.freeze_until = ctx.step + s.attrs.height;
        ++s.ops;
    }

    // ---- brain scripted inputs ------------------------------------------
    if (s.is_brain() && brain.new_target) {
        s.target = *brain.new_target;
        s.default_target = *brain.new_target;
        ++s.ops;
    }

    // ---- identity and cardinality/height --------------------------------
    std::optional<IdentityUpdate> ident;
    if (s.parent && work.identity_from_parent) ident = work.identity_from_parent;
    if (s.parent && !ident) {
        // No fresh word from the parent this tick; keep the stored identity.
        ident = IdentityUpdate{s.attrs.sons_root_id, s.attrs.sons_root_rank};
    }
    if (!s.parent) ident.reset();
    s.attrs = update_identity(s.attrs, s.id, s.rank, ident);

    std::vector<ChildReport> reports;
    reports.reserve(s.children.size());
    for (auto& [cid, c] : s.children) reports.push_back({c.cardinality, c.height});
    s.attrs = update_cardinality_height(s.attrs, s.type, reports);
    if (s.is_brain())
        s.sons_size = s.attrs.total_cardinality();
    else if (work.parent_sons_size > 0)
        s.sons_size = work.parent_sons_size;

    // ---- recruitment ----------------------------------------------------
    bool frozen = cfg.switch_freeze && ctx.step < s.freeze_until;
    std::map<RobotId, RobotId> last_known_root;
    for (const auto& o : work.offers) last_known_root[o.sender] = o.root_id;

    if (!frozen && !s.pending_parent) {
        // Respond to offers: pick the strongest offer that wins against us.
        const RecruitOffer* best = nullptr;
        for (const auto& o : work.offers) {
            if (o.sender == s.id) continue;
            if (s.parent && o.sender == s.parent->id) continue;
            if (s.children.count(o.sender)) continue;
            ++s.ops;
            if (decide_recruitment(s, o, ctx) != RecruitDecision::BecomeChild) continue;
            if (!best || o.root_rank > best->root_rank ||
                (o.root_rank == best->root_rank && o.sender < best->sender))
                best = &o;
        }
        if (best) {
            Message accept;
            accept.kind = MessageKind::RecruitAccept;
            accept.receiver = best->sender;
            accept.robot_type = s.type;
            accept.cardinality = s.attrs.cardinality;
            accept.height = s.attrs.height;
            push(accept);
            if (s.is_brain()) {
                // A brain has no link to lose: adopt optimistically so the
                // merge completes one step sooner.
                ParentRecord pr;
                pr.id = best->sender;
                for (const SensedNeighbor& n : sensed)
                    if (n.id == best->sender) {
                        pr.pose = n.pose;
                        pr.pose_known = true;
                    }
                s.former_root = s.attrs.sons_root_id;
                s.steps_since_former = 0;
                s.parent = pr;
                s.attrs.sons_root_id = best->root_id;
                s.attrs.sons_root_rank = best->root_rank;
                if (cfg.switch_freeze) s.freeze_until = ctx.step + s.attrs.height;
            } else {
                s.pending_parent = best->sender;
                s.pending_age = 0;
            }
            ++s.ops;
        }
    }

    // Initiate recruitment toward sensed strangers.
    if (!frozen && !s.pending_parent) {
        for (const SensedNeighbor& n : sensed) {
            if (n.id == s.id) continue;
            if (s.parent && n.id == s.parent->id) continue;
            if (s.children.count(n.id)) continue;
            auto known = last_known_root.find(n.id);
            if (known != last_known_root.end() && known->second == s.attrs.sons_root_id) continue;
            Message rec;
            rec.kind = MessageKind::Recruit;
            rec.receiver = n.id;
            rec.root_id = s.attrs.sons_root_id;
            rec.root_rank = s.attrs.sons_root_rank;
            rec.sons_size = s.sons_size;
            push(rec);
        }
    }

    // Accept new children (recruit handshake completions and handovers).
    auto can_take_child = [&](RobotId rid) {
        return static_cast<int>(s.children.size()) < cfg.max_children && !s.children.count(rid) &&
               (!s.parent || s.parent->id != rid) && rid != s.id;
    };
    std::vector<RobotId> welcomed_now;
    for (const Message& a : work.accepts) {
        if (!can_take_child(a.sender)) continue;
        ChildRecord c;
        c.type = a.robot_type;
        c.cardinality = a.cardinality;
        c.height = a.height;
        for (const SensedNeighbor& n : sensed)
            if (n.id == a.sender) c.pose = n.pose;
        s.children[a.sender] = c;
        welcomed_now.push_back(a.sender);
        ++s.ops;
    }
    for (const Message& h : work.handover_requests) {
        if (!can_take_child(h.handover_child)) continue;
        ChildRecord c;
        c.type = h.robot_type;
        c.cardinality = h.cardinality;
        c.height = h.height;
        for (const SensedNeighbor& n : sensed)
            if (n.id == h.handover_child) c.pose = n.pose;
        s.children[h.handover_child] = c;
        welcomed_now.push_back(h.handover_child);
        Message ack;
        ack.kind = MessageKind::Handover;
        ack.receiver = h.sender;
        ack.handover_child = h.handover_child;
        ack.handover_ack = true;
        push(ack);
        ++s.ops;
    }
    // A coordinator asked us to hand a specific child up to it.
    for (const Message& g : work.give_requests) {
        auto it = s.children.find(g.handover_child);
        if (it == s.children.end() || it->second.handover_to != kNoRobot) continue;
        it->second.handover_to = g.sender;
        it->second.handover_age = 0;
    }

    // ---- allocation / redistribution ------------------------------------
    std::vector<RobotId> expel_now = brain.expel;
    if (!s.children.empty() && !s.target.empty()) {
        std::vector<int> slots = s.target.children_of(s.target.root_id());
        // Partition children and slots by type, allocate within each type.
        std::map<RobotId, int> new_assignment;  // child -> node id (-1 reserve)
        for (auto& [cid, c] : s.children) new_assignment[cid] = -1;
        for (RobotType t : {RobotType::Aerial, RobotType::Ground}) {
            std::vector<RobotId> kids;
            for (auto& [cid, c] : s.children) {
                if (c.type == t && c.handover_to == kNoRobot) kids.push_back(cid);
            }
            std::vector<int> t_slots;
            for (int n : slots)
                if (s.target.find(n)->type == t) t_slots.push_back(n);
            if (kids.empty() || t_slots.empty()) continue;

            AllocationProblem prob;
            for (RobotId k : kids) {
                const ChildRecord& c = s.children[k];
                prob.source_displacements.push_back(c.pose.d);
                int total = 0;
                for (auto& [tt, cc] : c.cardinality) total += cc;
                prob.source_cardinalities.push_back(std::max(1, total));
            }
            for (int n : t_slots) {
                prob.target_displacements.push_back(s.target.find(n)->displacement);
                prob.target_cardinalities.push_back(s.target.subtree_size(n));
            }
            prob = build_costs(std::move(prob));
            Assignment asg = allocate(prob);
            s.ops += asg.augmentations;
            for (size_t i = 0; i < kids.size(); ++i)
                if (asg.matched[i] >= 0) new_assignment[kids[i]] = t_slots[asg.matched[i]];
        }

        // Downward trickle: reserves go to the assigned child whose branch
        // is short of their type; otherwise surplus flows upstream.
        for (auto& [cid, c] : s.children) {
            if (new_assignment[cid] != -1 || c.handover_to != kNoRobot) continue;
            RobotId best_branch = kNoRobot;
            int best_deficit = 0;
            for (auto& [oid, oc] : s.children) {
                if (oid == cid || new_assignment[oid] < 0) continue;
                auto want = s.target.subtree_cardinality(new_assignment[oid]);
                int have_total = 0, want_total = 0;
                for (auto& [tt, cc] : want) want_total += cc;
                for (auto& [tt, cc] : oc.cardinality) have_total += cc;
                int want_type = want.count(c.type) ? want[c.type] : 0;
                int have_type = oc.cardinality.count(c.type) ? oc.cardinality[c.type] : 0;
                int deficit = std::min(want_type - have_type, want_total - have_total);
                if (deficit > best_deficit) {
                    best_deficit = deficit;
                    best_branch = oid;
                }
            }
            RobotId target_parent = kNoRobot;
            if (best_branch != kNoRobot)
                target_parent = best_branch;
            else if (s.parent)
                target_parent = s.parent->id;
            if (target_parent != kNoRobot) {
                c.handover_to = target_parent;
                c.handover_age = 0;
                Message h;
                h.kind = MessageKind::Handover;
                h.receiver = target_parent;
                h.handover_child = cid;
                h.robot_type = c.type;
                h.cardinality = c.cardinality;
                h.height = c.height;
                push(h);
                ++s.ops;
            }
        }
        // Expire handovers that never completed; keep the child.
        for (auto& [cid, c] : s.children) {
            if (c.handover_to != kNoRobot && c.handover_age > 3) {
                c.handover_to = kNoRobot;
                c.handover_age = 0;
            }
        }

        // Substitution test: hand the best-placed child upstream when it
        // stands closer to our own slot than we do.
        if (s.parent && s.parent->have_instruction && s.parent->pose_known) {
            Vec3 d_self_resid = s.parent->parent_frame_d_star - s.parent->parent_frame_d;
            UnitQuat q_me_in_parent = quat_inverse(s.parent->pose.q);
            RobotId best = kNoRobot;
            double best_gap = -0.1;  // swap only on a clear margin
            for (auto& [cid, c] : s.children) {
                if (c.handover_to != kNoRobot) continue;
                Vec3 child_in_parent =
                    s.parent->parent_frame_d + rotate_vector(q_me_in_parent, c.pose.d);
                Vec3 d_child_resid = s.parent->parent_frame_d_star - child_in_parent;
                ++s.ops;
                if (substitution_test(d_child_resid, s.parent->parent_frame_d_star, d_self_resid,
                                      s.parent->parent_frame_d_star)) {
                    double gap = dot(d_self_resid, normalized(s.parent->parent_frame_d_star)) -
                                 dot(d_child_resid, normalized(s.parent->parent_frame_d_star));
                    if (gap > -best_gap && (best == kNoRobot || gap > best_gap)) {
                        best = cid;
                        best_gap = gap;
                    }
                }
            }
            if (best != kNoRobot && best_gap > 0.1) {
                ChildRecord& c = s.children[best];
                c.handover_to = s.parent->id;
                c.handover_age = 0;
                Message h;
                h.kind = MessageKind::Handover;
                h.receiver = s.parent->id;
                h.handover_child = best;
                h.robot_type = c.type;
                h.cardinality = c.cardinality;
                h.height = c.height;
                push(h);
                ++s.ops;
            }
        }

        // Link-crossing swap: when our link to child A crosses child B's
        // link to a directly sensed grandchild G, pull G up and hand A to
        // B. 2D segment test in our own frame.
        auto segments_cross = [](const Vec3& a0, const Vec3& a1, const Vec3& b0, const Vec3& b1) {
            auto orient = [](const Vec3& p, const Vec3& q, const Vec3& r) {
                double v = (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x);
                return v > 1e-9 ? 1 : (v < -1e-9 ? -1 : 0);
            };
            int o1 = orient(a0, a1, b0), o2 = orient(a0, a1, b1);
            int o3 = orient(b0, b1, a0), o4 = orient(b0, b1, a1);
            return o1 != o2 && o3 != o4 && o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0;
        };
        bool swapped = false;
        for (auto& [aid, ac] : s.children) {
            if (swapped || ac.handover_to != kNoRobot) continue;
            for (auto& [bid, bc] : s.children) {
                if (swapped || aid == bid || bc.handover_to != kNoRobot) continue;
                for (const SensedNeighbor& n : sensed) {
                    if (!std::count(bc.grandchildren.begin(), bc.grandchildren.end(), n.id))
                        continue;
                    if (!segments_cross(Vec3::zero(), ac.pose.d, bc.pose.d, n.pose.d)) continue;
                    // Ask B to hand us the grandchild, give A to B.
                    Message give;
                    give.kind = MessageKind::Handover;
                    give.receiver = bid;
                    give.handover_child = n.id;
                    give.override_active = true;  // marks a give-request
                    push(give);
                    ac.handover_to = bid;
                    ac.handover_age = 0;
                    Message h;
                    h.kind = MessageKind::Handover;
                    h.receiver = bid;
                    h.handover_child = aid;
                    h.robot_type = ac.type;
                    h.cardinality = ac.cardinality;
                    h.height = ac.height;
                    push(h);
                    ++s.ops;
                    swapped = true;
                    break;
                }
            }
        }

        // Store assignments and emit per-child instructions.
        int reserve_index = 0;
        int reserve_total = 0;
        for (auto& [cid, c] : s.children)
            if (new_assignment[cid] < 0) ++reserve_total;
        for (auto& [cid, c] : s.children) {
            bool newly_welcomed =
                std::find(welcomed_now.begin(), welcomed_now.end(), cid) != welcomed_now.end();
            int node = new_assignment[cid];
            if (node != c.assigned_node || newly_welcomed) {
                c.assigned_node = node;
                Message ta;
                ta.kind = MessageKind::TargetAssignment;
                ta.receiver = cid;
                ta.welcome = newly_welcomed;
                ta.assigned_node = node;
                if (node >= 0) {
                    auto sub = subdivide_target(s.target, node);
                    if (sub) ta.target_subtree = *sub;
                } else {
                    TargetGraph solo;
                    TargetNode self_node;
                    self_node.id = -1;
                    self_node.type = c.type;
                    solo.nodes.push_back(self_node);
                    ta.target_subtree = solo;
                }
                push(ta);
            }
            // Actuation instruction every step.
            Vec3 d_star;
            UnitQuat q_star;
            if (node >= 0) {
                d_star = s.target.find(node)->displacement;
                q_star = s.target.find(node)->orientation;
            } else {
                double ang = 2.0 * kPi * reserve_index / std::max(1, reserve_total);
                double radius = 1.2;
                d_star = {radius * std::cos(ang), radius * std::sin(ang),
                          c.type == RobotType::Aerial ? 0.0 : c.pose.d.z};
                ++reserve_index;
            }
            Message ai;
            ai.kind = MessageKind::ActuationInstruction;
            ai.receiver = cid;
            Vec3 err_parent_frame = d_star - c.pose.d;
            ai.correction = rotate_vector(quat_inverse(c.pose.q), err_parent_frame);
            ai.orientation_correction = hamilton(quat_inverse(c.pose.q), q_star);
            ai.damping = c.overridden ? cfg.overridden_damping : 1.0;
            ai.parent_frame_d = c.pose.d;
            ai.parent_frame_d_star = d_star;
            push(ai);
        }
    } else if (!s.children.empty()) {
        // No target yet: hold children in place with zero corrections.
        for (auto& [cid, c] : s.children) {
            Message ai;
            ai.kind = MessageKind::ActuationInstruction;
            ai.receiver = cid;
            ai.correction = Vec3::zero();
            ai.orientation_correction = UnitQuat::identity();
            ai.damping = 1.0;
            ai.parent_frame_d = c.pose.d;
            ai.parent_frame_d_star = c.pose.d;
            push(ai);
        }
    }

    // ---- scripted splitting ---------------------------------------------
    for (RobotId e : expel_now) {
        auto it = s.children.find(e);
        if (it == s.children.end()) continue;
        Message ex;
        ex.kind = MessageKind::Expel;
        ex.receiver = e;
        push(ex);
        s.children.erase(it);
        ++s.ops;
    }

    // ---- sensing propagation ---------------------------------------------
    // Own sensed features plus child reports, transformed into our frame.
    std::vector<SensedFeature> all_features = features;
    for (const Message& fm : work.incoming_features) {
        RelPose link;
        bool known = false;
        if (auto it = s.children.find(fm.sender); it != s.children.end()) {
            link = it->second.pose;
            known = it->second.staleness <= cfg.liveness_steps;
        } else if (s.parent && fm.sender == s.parent->id && s.parent->pose_known) {
            link = s.parent->pose;
            known = true;
        }
        if (!known) continue;  // stale link, drop
        SensedFeature f;
        f.kind = fm.feature;
        f.id = fm.feature_id;
        f.width = fm.feature_width;
        f.proposer = fm.proposer;
        RelPose transformed = transform_feature(link, {fm.feature_d, fm.feature_q});
        f.pose = transformed;
        all_features.push_back(f);
    }

    // Forward non-obstacle features upstream; obstacles are handled locally.
    if (s.parent) {
        for (const SensedFeature& f : all_features) {
            if (f.kind == FeatureKind::Obstacle) continue;
            Message fm;
            fm.kind = MessageKind::SensorFeature;
            fm.receiver = s.parent->id;
            fm.feature = f.kind;
            fm.feature_id = f.id;
            fm.feature_width = f.width;
            fm.proposer = f.proposer != kNoRobot ? f.proposer : s.id;
            fm.feature_d = f.pose.d;
            fm.feature_q = f.pose.q;
            push(fm);
        }
    } else {
        for (SensedFeature f : all_features) {
            if (f.proposer == kNoRobot) f.proposer = s.id;
            result.brain_features.push_back(std::move(f));
        }
    }

    // ---- reference vectors -----------------------------------------------
    s.v_local = Vec3::zero();
    s.w_local = Vec3::zero();
    s.locally_overridden = false;
    if (s.type == RobotType::Ground) {
        // Nearest obstacle within range drives the avoid law.
        const SensedFeature* nearest = nullptr;
        double best = cfg.k3;
        for (const SensedFeature& f : all_features) {
            if (f.kind != FeatureKind::Obstacle) continue;
            double d = f.pose.d.norm();
            if (d < best) {
                best = d;
                nearest = &f;
            }
        }
        if (nearest) s.v_local += compute_v_local(nearest->pose.d, cfg.v_max(s.type), true, cfg);

        // Robot-robot separation uses the same law with tighter radii.
        ProtocolConfig robot_cfg = cfg;
        robot_cfg.k1 = cfg.robot_avoid_near;
        robot_cfg.k3 = cfg.robot_avoid_far;
        const SensedNeighbor* closest = nullptr;
        double best_r = cfg.robot_avoid_far;
        for (const SensedNeighbor& n : sensed) {
            if (n.type != RobotType::Ground) continue;
            Vec3 planar{n.pose.d.x, n.pose.d.y, 0.0};
            double d = planar.norm();
            if (d < best_r) {
                best_r = d;
                closest = &n;
            }
        }
        if (closest) {
            Vec3 planar{closest->pose.d.x, closest->pose.d.y, 0.0};
            s.v_local += compute_v_local(planar, cfg.v_max(s.type), true, robot_cfg);
        }
        if (s.v_local.norm() > 1e-9) s.locally_overridden = true;
    }

    s.v_hier = Vec3::zero();
    s.w_hier = Vec3::zero();
    if (s.parent && s.parent->have_instruction && s.parent->instruction_age <= 2) {
        s.v_hier = s.parent->damping * compute_v_hierarchical(s.parent->correction, cfg);
        double yaw_err = quat_yaw(s.parent->orientation_correction);
        s.w_hier = {0, 0, angle_law(yaw_err, cfg)};
    }

    // Global velocities: rotate into own frame, sum for own use, forward
    // to every link except the origin.
    Vec3 vg_sum = Vec3::zero(), wg_sum = Vec3::zero();
    bool got_global = false;
    for (const Message& gm : work.global_velocities) {
        RelPose link;
        bool known = false;
        if (auto it = s.children.find(gm.sender); it != s.children.end()) {
            link = it->second.pose;
            known = true;
        } else if (s.parent && gm.sender == s.parent->id) {
            link = s.parent->pose;
            known = s.parent->pose_known;
        }
        if (!known) continue;
        Vec3 v_mine = rotate_vector(link.q, gm.v);
        Vec3 w_mine = rotate_vector(link.q, gm.omega);
        vg_sum += v_mine;
        wg_sum += w_mine;
        got_global = true;
        // Forward onward.
        auto forward_to = [&](RobotId rid) {
            if (rid == gm.sender) return;
            Message f;
            f.kind = MessageKind::GlobalVelocity;
            f.receiver = rid;
            f.v = v_mine;
            f.omega = w_mine;
            f.origin = gm.origin;
            push(f);
        };
        if (s.parent) forward_to(s.parent->id);
        for (auto& [cid, c] : s.children) forward_to(cid);
    }
    if (s.is_brain() && brain.goal_velocity) {
        vg_sum += *brain.goal_velocity;
        wg_sum += Vec3{0, 0, brain.goal_yaw_rate};
        got_global = true;
        auto send_to = [&](RobotId rid) {
            Message f;
            f.kind = MessageKind::GlobalVelocity;
            f.receiver = rid;
            f.v = *brain.goal_velocity;
            f.omega = {0, 0, brain.goal_yaw_rate};
            f.origin = s.id;
            push(f);
        };
        for (auto& [cid, c] : s.children) send_to(cid);
    }
    s.v_global = got_global ? vg_sum : Vec3::zero();
    s.w_global = got_global ? wg_sum : Vec3::zero();

    // ---- motion fusion ----------------------------------------------------
    Vec3 v_star;
    Vec3 w_star;
    if (s.is_brain()) {
        v_star = s.v_global;
        w_star = s.w_global;
        s.v_hier = Vec3::zero();
        s.v_local = Vec3::zero();
        s.w_hier = Vec3::zero();
        s.w_local = Vec3::zero();
    } else {
        v_star = s.v_hier + s.v_local + s.v_global;
        w_star = s.w_hier + s.w_local + s.w_global;
    }
    double vmax = cfg.v_max(s.type);
    double vn = v_star.norm();
    if (vn > vmax) v_star = (vmax / vn) * v_star;
    if (s.override_active) {
        v_star = s.override_v;
        w_star = s.override_w;
    }
    result.v_star = v_star;
    result.omega_star = w_star;

    // ---- routine per-link attribute traffic --------------------------------
    if (s.parent) {
        Message up;
        up.kind = MessageKind::AttributeUpdate;
        up.receiver = s.parent->id;
        up.cardinality = s.attrs.cardinality;
        up.height = s.attrs.height;
        up.locally_overridden = s.locally_overridden;
        up.robot_type = s.type;
        for (auto& [cid, c] : s.children) up.child_ids.push_back(cid);
        push(up);
    }
    for (auto& [cid, c] : s.children) {
        Message down;
        down.kind = MessageKind::AttributeUpdate;
        down.receiver = cid;
        down.root_id = s.attrs.sons_root_id;
        down.root_rank = s.attrs.sons_root_rank;
        down.sons_size = s.sons_size;
        down.robot_type = s.type;
        push(down);
    }

    result.state = std::move(s);
    return result;
}

}  // namespace sons
