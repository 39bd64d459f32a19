#pragma once

#include <string>
#include <string_view>
#include <utility>

#include <json.hpp>

#include "abd/catalogue.hpp"
#include "abd/consent.hpp"
#include "abd/generation.hpp"
#include "abd/ledger.hpp"
#include "abd/retrieval.hpp"
#include "abd/verification.hpp"

// Wire format for every payload the service and CLI exchange. Decoders throw
// Error(InvalidRequest) on malformed input.
namespace abd {

using Json = nlohmann::json;

Json to_json(const FeatureTrack& track, const BlockVocabulary& vocab);
FeatureTrack track_from_json(const Json& j, const BlockVocabulary& vocab);

Json to_json(const Prompt& prompt);
Prompt prompt_from_json(const Json& j);

Json to_json(const GenerationRequest& request, const BlockVocabulary& vocab);
GenerationRequest request_from_json(const Json& j, const BlockVocabulary& vocab);

Json to_json(const Decision& d);
Json to_json(const VerificationOutcome& outcome);
Json to_json(const AlternativeSet& alternatives);

Json to_json(const ProvenanceManifest& manifest);
ProvenanceManifest manifest_from_json(const Json& j);
/// Sorted-key compact dump; the byte form that is hashed.
std::string canonical_manifest(const ProvenanceManifest& manifest);

/// {output_id, manifest, frame_duration_ms, frames}
Json to_json(const GenerationOutput& output, const BlockVocabulary& vocab);
GenerationOutput output_from_json(const Json& j, const BlockVocabulary& vocab);

Json to_json(const HierarchyNode& node);
Json to_json(const SearchHit& hit, const Song& song);
Json song_summary(const Song& song);

Json to_json(const ConsentRecord& record);
/// Reads {"usage": {...}, "distribution": {...}} with every key present.
std::pair<UsageGrants, DistributionGrants> grants_from_json(const Json& j);

Json to_json(const RankResult& result, const Catalogue& catalogue);
Json to_json(const LedgerEntry& entry);
Json to_json(const CompensationStatement& statement, std::string_view currency);

}  // namespace abd
