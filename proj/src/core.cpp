#include "sons/core.hpp"

#include <algorithm>
#include <functional>
#include <set>
#include <sstream>

namespace sons {

const TargetNode* TargetGraph::find(int id) const {
    for (const auto& n : nodes)
        if (n.id == id) return &n;
    return nullptr;
}

std::vector<int> TargetGraph::children_of(int id) const {
    std::vector<int> out;
    for (const auto& n : nodes)
        if (n.parent == id) out.push_back(n.id);
    return out;
}

std::map<RobotType, int> TargetGraph::subtree_cardinality(int id) const {
    std::map<RobotType, int> card;
    std::function<void(int)> walk = [&](int v) {
        const TargetNode* n = find(v);
        if (!n) return;
        card[n->type] += 1;
        for (int c : children_of(v)) walk(c);
    };
    walk(id);
    return card;
}

int TargetGraph::subtree_size(int id) const {
    int n = 0;
    for (auto& [t, c] : subtree_cardinality(id)) n += c;
    return n;
}

int TargetGraph::height(int id) const {
    if (!find(id)) return 0;
    int best = 0;
    for (int c : children_of(id)) best = std::max(best, height(c));
    return best + 1;
}

bool TargetGraph::valid() const {
    if (nodes.empty()) return true;
    std::set<int> ids;
    int roots = 0;
    for (const auto& n : nodes) {
        if (!ids.insert(n.id).second) return false;
        if (n.parent < 0) ++roots;
    }
    if (roots != 1 || nodes.front().parent >= 0) return false;
    for (const auto& n : nodes) {
        if (n.parent >= 0 && !ids.count(n.parent)) return false;
        if (static_cast<int>(children_of(n.id).size()) > kMaxChildren) return false;
    }
    // Acyclic and connected: everything must be reachable from the root.
    return subtree_size(root_id()) == size();
}

std::optional<TargetGraph> subdivide_target(const TargetGraph& graph, int child_id) {
    if (!graph.find(child_id)) return std::nullopt;
    TargetGraph sub;
    std::function<void(int, int)> walk = [&](int v, int parent) {
        const TargetNode* n = graph.find(v);
        TargetNode copy = *n;
        copy.parent = parent;
        sub.nodes.push_back(copy);
        for (int c : graph.children_of(v)) walk(c, v);
    };
    walk(child_id, -1);
    return sub;
}

std::string serialize_target_graph(const TargetGraph& g) {
    std::ostringstream os;
    os.precision(12);
    std::function<void(int, int)> walk = [&](int v, int depth) {
        const TargetNode* n = g.find(v);
        for (int i = 0; i < depth; ++i) os << "  ";
        os << "node " << n->id << " " << type_name(n->type);
        if (n->parent >= 0) {
            os << " d=(" << n->displacement.x << "," << n->displacement.y << ","
               << n->displacement.z << ")";
            os << " q=(" << n->orientation.w << "," << n->orientation.x << ","
               << n->orientation.y << "," << n->orientation.z << ")";
        }
        os << "\n";
        for (int c : g.children_of(v)) walk(c, depth + 1);
    };
    if (!g.empty()) walk(g.root_id(), 0);
    return os.str();
}

namespace {

int leading_indent(const std::string& line) {
    int i = 0;
    while (i < static_cast<int>(line.size()) && line[i] == ' ') ++i;
    return i / 2;
}

bool parse_tuple(const std::string& s, double* out, int count) {
    std::string t = s;
    for (auto& c : t)
        if (c == '(' || c == ')' || c == ',') c = ' ';
    std::istringstream is(t);
    for (int i = 0; i < count; ++i)
        if (!(is >> out[i])) return false;
    return true;
}

}  // namespace

std::optional<TargetGraph> parse_target_graph(const std::string& text) {
    TargetGraph g;
    std::istringstream is(text);
    std::string line;
    std::vector<int> stack;  // node id per depth
    while (std::getline(is, line)) {
        if (line.find("node") == std::string::npos) continue;
        int depth = leading_indent(line);
        std::istringstream ls(line);
        std::string tok, type_str;
        TargetNode n;
        ls >> tok >> n.id >> type_str;
        if (tok != "node") return std::nullopt;
        if (type_str == "aerial")
            n.type = RobotType::Aerial;
        else if (type_str == "ground")
            n.type = RobotType::Ground;
        else
            return std::nullopt;
        while (ls >> tok) {
            if (tok.rfind("d=", 0) == 0) {
                double v[3];
                if (!parse_tuple(tok.substr(2), v, 3)) return std::nullopt;
                n.displacement = {v[0], v[1], v[2]};
            } else if (tok.rfind("q=", 0) == 0) {
                double v[4];
                if (!parse_tuple(tok.substr(2), v, 4)) return std::nullopt;
                n.orientation = {v[0], v[1], v[2], v[3]};
            }
        }
        if (depth == 0) {
            n.parent = -1;
        } else {
            if (depth > static_cast<int>(stack.size())) return std::nullopt;
            n.parent = stack[depth - 1];
        }
        stack.resize(depth);
        stack.push_back(n.id);
        g.nodes.push_back(n);
    }
    if (!g.valid()) return std::nullopt;
    return g;
}

NodeAttributes update_identity(const NodeAttributes& self, RobotId own_id, RobotRank own_rank,
                               const std::optional<IdentityUpdate>& from_parent) {
    NodeAttributes next = self;
    if (from_parent) {
        next.sons_root_id = from_parent->sons_root_id;
        next.sons_root_rank = from_parent->sons_root_rank;
    } else {
        next.sons_root_id = own_id;
        next.sons_root_rank = own_rank;
    }
    return next;
}

NodeAttributes update_cardinality_height(const NodeAttributes& self, RobotType own_type,
                                         const std::vector<ChildReport>& child_reports) {
    NodeAttributes next = self;
    next.cardinality.clear();
    next.cardinality[own_type] = 1;
    int max_child_height = 0;
    for (const auto& r : child_reports) {
        for (const auto& [t, c] : r.cardinality) next.cardinality[t] += c;
        max_child_height = std::max(max_child_height, r.height);
    }
    next.height = max_child_height + 1;
    return next;
}

}  // namespace sons
