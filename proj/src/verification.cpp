#include "abd/verification.hpp"

#include <cmath>

#include "abd/error.hpp"

namespace abd {

const char* to_string(ControlLevel level) {
  switch (level) {
    case ControlLevel::SongLevel: return "song";
    case ControlLevel::ParameterLevel: return "parameter";
    case ControlLevel::AudioLevel: return "audio";
    case ControlLevel::TemporalLevel: return "temporal";
  }
  return "unknown";
}

ControlLevel parse_control_level(std::string_view s) {
  for (auto l : {ControlLevel::SongLevel, ControlLevel::ParameterLevel, ControlLevel::AudioLevel,
                 ControlLevel::TemporalLevel}) {
    if (s == to_string(l)) return l;
  }
  fail(ErrorCode::InvalidRequest, "unknown level: " + std::string(s));
}

const char* to_string(UnspecifiedPolicy policy) {
  return policy == UnspecifiedPolicy::Unconditional ? "unconditional" : "procedural";
}

UnspecifiedPolicy parse_unspecified_policy(std::string_view s) {
  if (s == "unconditional") return UnspecifiedPolicy::Unconditional;
  if (s == "procedural") return UnspecifiedPolicy::Procedural;
  fail(ErrorCode::InvalidRequest, "unknown unspecified_policy: " + std::string(s));
}

const char* to_string(BlendMode mode) { return mode == BlendMode::Replace ? "replace" : "mix"; }

BlendMode parse_blend_mode(std::string_view s) {
  if (s == "replace") return BlendMode::Replace;
  if (s == "mix") return BlendMode::Mix;
  fail(ErrorCode::InvalidRequest, "unknown blend_mode: " + std::string(s));
}

const char* to_string(Verdict v) { return v == Verdict::Cleared ? "cleared" : "blocked"; }

UsageKind usage_for(ControlLevel level) noexcept {
  switch (level) {
    case ControlLevel::SongLevel: return UsageKind::SongLevelInference;
    case ControlLevel::ParameterLevel: return UsageKind::ParameterLevelInference;
    case ControlLevel::AudioLevel:
    case ControlLevel::TemporalLevel: return UsageKind::AudioLevelInference;
  }
  return UsageKind::AudioLevelInference;
}

void validate_request(const GenerationRequest& request, const Catalogue& catalogue) {
  auto invalid = [](const std::string& msg) { fail(ErrorCode::InvalidRequest, msg); };
  const auto& vocab = catalogue.vocabulary();
  if (request.selections.empty()) invalid("request has no selections");

  const bool audio = request.level == ControlLevel::AudioLevel || request.level == ControlLevel::TemporalLevel;
  if (audio) {
    if (!request.user_track) invalid("audio/temporal level requires a user track");
    validate_track(*request.user_track, vocab);
  }
  if (request.target_frames && *request.target_frames == 0) invalid("target_frames must be positive");
  if (request.blend_alpha && !(*request.blend_alpha >= 0.0 && *request.blend_alpha <= 1.0)) {
    invalid("blend_alpha must lie in [0, 1]");
  }
  if (request.prompt) request.prompt->validate();

  std::set<SongId> seen;
  for (const auto& sel : request.selections) {
    const std::string which = "selection " + std::to_string(sel.song_id);
    const Song* song = catalogue.find(sel.song_id);
    if (!song) invalid(which + ": song not in catalogue");
    if (!seen.insert(sel.song_id).second) invalid(which + ": song selected twice");
    if (!(sel.weight > 0.0) || !std::isfinite(sel.weight)) invalid(which + ": weight must be positive");
    for (const auto& b : sel.function_blocks) {
      if (!vocab.index_of(b)) invalid(which + ": unknown block " + b);
    }
    if (request.level == ControlLevel::SongLevel && !sel.function_blocks.empty()) {
      invalid(which + ": song level selections cannot name blocks");
    }
    if (request.level == ControlLevel::ParameterLevel && sel.function_blocks.empty()) {
      invalid(which + ": parameter level selections must name blocks");
    }
    if (request.level == ControlLevel::TemporalLevel && !sel.segment) {
      invalid(which + ": temporal level selections need a segment");
    }
    if (sel.segment) {
      if (request.level != ControlLevel::TemporalLevel) invalid(which + ": segments are only valid at temporal level");
      const auto& seg = *sel.segment;
      if (seg.end_frame <= seg.start_frame) invalid(which + ": segment end must exceed start");
      if (seg.end_frame > song->feature_track.size()) invalid(which + ": segment exceeds reference length");
      if (seg.end_frame > request.user_track->size()) invalid(which + ": segment exceeds user track length");
    }
  }
}

std::vector<DenialReason> VerificationOutcome::denials() const {
  std::vector<DenialReason> out;
  for (const auto& c : per_selection) {
    if (!c.usage.permitted()) out.push_back({c.song_id, to_string(usage_for(level)), c.usage.reason});
    if (!c.distribution.permitted()) out.push_back({c.song_id, to_string(intended_use), c.distribution.reason});
  }
  return out;
}

VerificationOutcome Verifier::verify(const GenerationRequest& request, const ConsentSnapshot& snapshot) const {
  validate_request(request, catalogue_);
  VerificationOutcome out;
  out.request_id = request.request_id;
  out.snapshot_id = snapshot.id();
  out.level = request.level;
  out.intended_use = request.intended_use;
  const UsageKind usage = usage_for(request.level);
  bool all = true;
  for (const auto& sel : request.selections) {
    SelectionCheck c{sel.song_id, snapshot.check_usage(sel.song_id, usage),
                     snapshot.check_distribution(sel.song_id, request.intended_use)};
    all = all && c.usage.permitted() && c.distribution.permitted();
    out.per_selection.push_back(c);
  }
  out.verdict = all ? Verdict::Cleared : Verdict::Blocked;
  return out;
}

bool Verifier::passes(SongId song, ControlLevel level, IntendedUse use,
                      const ConsentSnapshot& snapshot) const noexcept {
  return snapshot.check_usage(song, usage_for(level)).permitted() &&
         snapshot.check_distribution(song, use).permitted();
}

std::vector<AlternativeSet> Verifier::recommend_alternatives(const GenerationRequest& request,
                                                             const VerificationOutcome& outcome,
                                                             const ConsentSnapshot& snapshot,
                                                             std::size_t k) const {
  if (outcome.cleared()) fail(ErrorCode::InvalidRequest, "alternatives are only offered for blocked requests");
  std::set<SongId> requested;
  for (const auto& sel : request.selections) requested.insert(sel.song_id);

  std::vector<AlternativeSet> out;
  for (std::size_t i = 0; i < outcome.per_selection.size(); ++i) {
    const auto& check = outcome.per_selection[i];
    if (check.usage.permitted() && check.distribution.permitted()) continue;
    const auto& sel = request.selections.at(i);
    const std::size_t min_frames = sel.segment ? sel.segment->end_frame : 0;
    AlternativeSet set;
    set.blocked_song_id = check.song_id;
    set.candidates = index_.rank(
        index_.song_embedding(check.song_id),
        [&](SongId id) {
          return !requested.count(id) && passes(id, request.level, request.intended_use, snapshot) &&
                 catalogue_.get_song(id).feature_track.size() >= min_frames;
        },
        k);
    set.no_compliant_alternative = set.candidates.empty();
    out.push_back(std::move(set));
  }
  return out;
}

}  // namespace abd
