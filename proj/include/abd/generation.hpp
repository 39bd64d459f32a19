#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "abd/catalogue.hpp"
#include "abd/consent.hpp"
#include "abd/verification.hpp"

namespace abd {

inline constexpr const char* kEngineVersion = "linear-block-mixer/1";

enum class Origin { Attributed, Unattributed, UserMaterial };
enum class ContributorSource { UserSelected, Procedural };

/// Wire names: attributed, unattributed, user_material.
const char* to_string(Origin origin);
Origin parse_origin(std::string_view s);
/// Wire names: user_selected, procedural.
const char* to_string(ContributorSource source);
ContributorSource parse_contributor_source(std::string_view s);

struct Contributor {
  SongId song_id = 0;
  double weight = 0.0;  // normalized within the block
  ContributorSource source = ContributorSource::UserSelected;
  std::optional<Segment> segment;  // temporal level only

  bool operator==(const Contributor&) const = default;
};

struct BlockAssignment {
  BlockName block;
  std::vector<Contributor> contributors;  // ascending song id
  Origin origin = Origin::Unattributed;

  bool operator==(const BlockAssignment&) const = default;
};

/// Exact record of which references shaped which blocks. Carries everything
/// needed to recompute the attributed blocks of the output.
struct ProvenanceManifest {
  std::string request_id;
  std::uint64_t snapshot_id = 0;
  std::uint64_t seed = 0;
  ControlLevel level = ControlLevel::SongLevel;
  IntendedUse intended_use = IntendedUse::SaveForPrivateUse;
  std::vector<BlockAssignment> assignments;  // vocabulary order
  double attributed_fraction = 0.0;
  std::string engine_version = kEngineVersion;
  std::size_t target_frames = 0;
  BlendMode blend_mode = BlendMode::Replace;
  double blend_alpha = 1.0;
  std::vector<SongId> procedural_selections;
  std::vector<std::string> warnings;

  /// Every song id named by an assignment, ascending.
  std::vector<SongId> song_ids() const;
  bool operator==(const ProvenanceManifest&) const = default;
};

struct GenerationOutput {
  std::string output_id;
  FeatureTrack feature_track;
  ProvenanceManifest manifest;
};

/// Access to reference feature data. Tests wrap it to record reads.
class SongSource {
 public:
  virtual ~SongSource() = default;
  virtual const Song& fetch(SongId id) const = 0;
};

class CatalogueSongSource final : public SongSource {
 public:
  explicit CatalogueSongSource(const Catalogue& catalogue) : catalogue_(catalogue) {}
  const Song& fetch(SongId id) const override { return catalogue_.get_song(id); }

 private:
  const Catalogue& catalogue_;
};

struct Resolution {
  std::vector<BlockAssignment> assignments;
  std::vector<SongId> procedural_selections;
  std::vector<std::string> warnings;
};

double attributed_fraction(const std::vector<BlockAssignment>& assignments, const BlockVocabulary& vocab);

/// Share of each reference in the attributed part of the output; empty when
/// no block is attributed.
std::map<SongId, double> contribution_weights(const ProvenanceManifest& manifest, const BlockVocabulary& vocab);

/// Counter-based noise in [-1, 1) keyed by (seed, block, frame, component).
double unattributed_value(std::uint64_t seed, std::size_t block, std::size_t frame, std::size_t component) noexcept;

/// Little-endian byte image of a track (hash input).
std::vector<std::uint8_t> track_bytes(const FeatureTrack& track);
/// hex(sha256(track bytes ∥ canonical manifest bytes)).
std::string compute_output_id(const FeatureTrack& track, const ProvenanceManifest& manifest);

class GenerationEngine {
 public:
  GenerationEngine(const Catalogue& catalogue, const RetrievalIndex& index, const Verifier& verifier,
                   double default_blend_alpha = 1.0)
      : catalogue_(catalogue), index_(index), verifier_(verifier), default_alpha_(default_blend_alpha) {}

  /// Precondition: the request verified Cleared against `snapshot`.
  Resolution resolve_assignments(const GenerationRequest& request, const ConsentSnapshot& snapshot) const;

  /// Song/parameter level mixing. Throws Error(InvalidRequest) on empty input.
  FeatureTrack compose(const std::vector<BlockAssignment>& assignments, const SongSource& songs,
                       std::uint64_t seed, std::size_t target_len, std::int64_t frame_duration_ms) const;

  /// Audio/temporal level edit of the user's own track.
  FeatureTrack apply_to_user_track(const GenerationRequest& request, const std::vector<BlockAssignment>& assignments,
                                   const SongSource& songs) const;

  /// resolve_assignments + compose/apply + manifest + output id.
  GenerationOutput generate(const GenerationRequest& request, const ConsentSnapshot& snapshot,
                            const SongSource& songs) const;

  double blend_alpha_for(const GenerationRequest& request) const noexcept {
    return request.blend_alpha.value_or(default_alpha_);
  }

 private:
  const Catalogue& catalogue_;
  const RetrievalIndex& index_;
  const Verifier& verifier_;
  double default_alpha_;
};

}  // namespace abd
