#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "abd/catalogue.hpp"
#include "abd/consent.hpp"
#include "abd/retrieval.hpp"

namespace abd {

enum class ControlLevel { SongLevel, ParameterLevel, AudioLevel, TemporalLevel };
enum class UnspecifiedPolicy { Unconditional, Procedural };
enum class BlendMode { Replace, Mix };

/// Wire names: song, parameter, audio, temporal.
const char* to_string(ControlLevel level);
ControlLevel parse_control_level(std::string_view s);
/// Wire names: unconditional, procedural.
const char* to_string(UnspecifiedPolicy policy);
UnspecifiedPolicy parse_unspecified_policy(std::string_view s);
/// Wire names: replace, mix.
const char* to_string(BlendMode mode);
BlendMode parse_blend_mode(std::string_view s);

/// Half-open frame window shared by the user track and the reference.
struct Segment {
  std::size_t start_frame = 0;
  std::size_t end_frame = 0;

  std::size_t length() const noexcept { return end_frame - start_frame; }
  bool contains(std::size_t t) const noexcept { return t >= start_frame && t < end_frame; }
  bool operator==(const Segment&) const = default;
};

struct ReferenceSelection {
  SongId song_id = 0;
  std::set<BlockName> function_blocks;  // empty: whole-song reference
  double weight = 1.0;
  std::optional<Segment> segment;

  bool operator==(const ReferenceSelection&) const = default;
};

struct GenerationRequest {
  std::string request_id;
  std::string user_id;
  std::vector<ReferenceSelection> selections;
  ControlLevel level = ControlLevel::SongLevel;
  std::optional<FeatureTrack> user_track;
  IntendedUse intended_use = IntendedUse::SaveForPrivateUse;
  UnspecifiedPolicy unspecified_policy = UnspecifiedPolicy::Unconditional;
  std::uint64_t seed = 0;
  /// Drives procedural selection; defaults to the selected songs' tags.
  std::optional<Prompt> prompt;
  /// Output length at song/parameter level; defaults to the longest reference.
  std::optional<std::size_t> target_frames;
  BlendMode blend_mode = BlendMode::Replace;
  /// Overrides the service default blend strength for BlendMode::Mix.
  std::optional<double> blend_alpha;

  bool operator==(const GenerationRequest&) const = default;
};

UsageKind usage_for(ControlLevel level) noexcept;

/// Structural validation; throws Error(InvalidRequest).
void validate_request(const GenerationRequest& request, const Catalogue& catalogue);

struct SelectionCheck {
  SongId song_id = 0;
  Decision usage;
  Decision distribution;

  bool operator==(const SelectionCheck&) const = default;
};

enum class Verdict { Cleared, Blocked };
const char* to_string(Verdict v);

struct DenialReason {
  SongId song_id = 0;
  std::string check;  // usage kind or intended use wire name
  DenyReason reason = DenyReason::None;
};

struct VerificationOutcome {
  std::string request_id;
  std::uint64_t snapshot_id = 0;
  ControlLevel level = ControlLevel::SongLevel;
  IntendedUse intended_use = IntendedUse::SaveForPrivateUse;
  std::vector<SelectionCheck> per_selection;
  Verdict verdict = Verdict::Blocked;

  bool cleared() const noexcept { return verdict == Verdict::Cleared; }
  std::vector<DenialReason> denials() const;
};

struct AlternativeSet {
  SongId blocked_song_id = 0;
  std::vector<ScoredSong> candidates;
  bool no_compliant_alternative = false;
};

/// Pure given (request, snapshot).
class Verifier {
 public:
  Verifier(const Catalogue& catalogue, const RetrievalIndex& index) : catalogue_(catalogue), index_(index) {}

  VerificationOutcome verify(const GenerationRequest& request, const ConsentSnapshot& snapshot) const;

  bool passes(SongId song, ControlLevel level, IntendedUse use, const ConsentSnapshot& snapshot) const noexcept;

  /// Compliant substitutes for each blocked selection, nearest first.
  /// Throws Error(InvalidRequest) if the outcome is not Blocked.
  std::vector<AlternativeSet> recommend_alternatives(const GenerationRequest& request,
                                                     const VerificationOutcome& outcome,
                                                     const ConsentSnapshot& snapshot, std::size_t k) const;

 private:
  const Catalogue& catalogue_;
  const RetrievalIndex& index_;
};

}  // namespace abd
