#include "sons/messages.hpp"

namespace sons {

const char* kind_name(MessageKind k) {
    switch (k) {
        case MessageKind::Recruit: return "Recruit";
        case MessageKind::RecruitAccept: return "RecruitAccept";
        case MessageKind::AttributeUpdate: return "AttributeUpdate";
        case MessageKind::TargetAssignment: return "TargetAssignment";
        case MessageKind::Handover: return "Handover";
        case MessageKind::Expel: return "Expel";
        case MessageKind::ActuationInstruction: return "ActuationInstruction";
        case MessageKind::SensorFeature: return "SensorFeature";
        case MessageKind::GlobalVelocity: return "GlobalVelocity";
        case MessageKind::StabilizationOverride: return "StabilizationOverride";
    }
    return "?";
}

int message_bytes(const Message& m) {
    constexpr int kHeader = 8;       // kind + sender + receiver, packed
    constexpr int kVec = 12;         // 3 floats
    constexpr int kQuat = 16;        // 4 floats
    constexpr int kCardEntry = 3;    // type tag + count
    constexpr int kGraphNode = 40;   // id, type, parent, d*, q*
    switch (m.kind) {
        case MessageKind::Recruit:
            return kHeader + 4 + 8 + 4;  // root id, rank, size
        case MessageKind::RecruitAccept:
            return kHeader + 1 + 2 + kCardEntry * static_cast<int>(m.cardinality.size());
        case MessageKind::AttributeUpdate:
            return kHeader + 4 + 8 + 4 + 2 + 2 +
                   kCardEntry * static_cast<int>(m.cardinality.size()) +
                   4 * static_cast<int>(m.child_ids.size());
        case MessageKind::TargetAssignment:
            return kHeader + 4 + 1 + kGraphNode * m.target_subtree.size();
        case MessageKind::Handover:
            return kHeader + 4 + 1 + 2 + kCardEntry * static_cast<int>(m.cardinality.size());
        case MessageKind::Expel:
            return kHeader;
        case MessageKind::ActuationInstruction:
            return kHeader + kVec + kQuat + 4 + kVec + kVec;
        case MessageKind::SensorFeature:
            return kHeader + 1 + 4 + 4 + 4 + kVec + kQuat;
        case MessageKind::GlobalVelocity:
            return kHeader + kVec + kVec + 4;
        case MessageKind::StabilizationOverride:
            return kHeader + kVec + kVec + 1;
    }
    return kHeader;
}

}  // namespace sons
