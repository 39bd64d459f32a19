#include "abd/generation.hpp"

#include <algorithm>
#include <set>

#include "abd/error.hpp"
#include "abd/hashing.hpp"
#include "abd/json_io.hpp"

namespace abd {

const char* to_string(Origin origin) {
  switch (origin) {
    case Origin::Attributed: return "attributed";
    case Origin::Unattributed: return "unattributed";
    case Origin::UserMaterial: return "user_material";
  }
  return "unknown";
}

Origin parse_origin(std::string_view s) {
  for (auto o : {Origin::Attributed, Origin::Unattributed, Origin::UserMaterial}) {
    if (s == to_string(o)) return o;
  }
  fail(ErrorCode::InvalidRequest, "unknown origin: " + std::string(s));
}

const char* to_string(ContributorSource source) {
  return source == ContributorSource::UserSelected ? "user_selected" : "procedural";
}

ContributorSource parse_contributor_source(std::string_view s) {
  if (s == "user_selected") return ContributorSource::UserSelected;
  if (s == "procedural") return ContributorSource::Procedural;
  fail(ErrorCode::InvalidRequest, "unknown contributor source: " + std::string(s));
}

std::vector<SongId> ProvenanceManifest::song_ids() const {
  std::set<SongId> ids;
  for (const auto& a : assignments) {
    for (const auto& c : a.contributors) ids.insert(c.song_id);
  }
  return {ids.begin(), ids.end()};
}

double attributed_fraction(const std::vector<BlockAssignment>& assignments, const BlockVocabulary& vocab) {
  double attributed = 0.0;
  for (const auto& a : assignments) {
    if (a.origin != Origin::Attributed) continue;
    auto idx = vocab.index_of(a.block);
    if (!idx) fail(ErrorCode::InvalidRequest, "unknown block " + a.block);
    attributed += vocab.at(*idx).importance;
  }
  return attributed / vocab.total_importance();
}

std::map<SongId, double> contribution_weights(const ProvenanceManifest& manifest, const BlockVocabulary& vocab) {
  std::vector<std::pair<double, const BlockAssignment*>> attributed;
  double total = 0.0;
  for (const auto& a : manifest.assignments) {
    if (a.origin != Origin::Attributed) continue;
    auto idx = vocab.index_of(a.block);
    if (!idx) fail(ErrorCode::InvalidRequest, "unknown block " + a.block);
    attributed.emplace_back(vocab.at(*idx).importance, &a);
    total += vocab.at(*idx).importance;
  }
  std::map<SongId, double> weights;
  if (attributed.empty()) return weights;
  // Zero total importance degenerates to uniform block shares.
  const bool uniform = !(total > 0.0);
  if (uniform) total = static_cast<double>(attributed.size());
  // Accumulate importance-weighted mass first and divide once, so a single
  // contributor gets exactly 1.
  for (const auto& [importance, a] : attributed) {
    for (const auto& c : a->contributors) weights[c.song_id] += (uniform ? 1.0 : importance) * c.weight;
  }
  for (auto& [id, w] : weights) w /= total;
  return weights;
}

double unattributed_value(std::uint64_t seed, std::size_t block, std::size_t frame, std::size_t component) noexcept {
  std::uint64_t x = mix64(seed);
  x = mix64(x ^ static_cast<std::uint64_t>(block));
  x = mix64(x ^ static_cast<std::uint64_t>(frame));
  x = mix64(x ^ static_cast<std::uint64_t>(component));
  return static_cast<double>(x >> 11) * 0x1.0p-53 * 2.0 - 1.0;
}

std::vector<std::uint8_t> track_bytes(const FeatureTrack& track) {
  ByteWriter w;
  w.put_i64(track.frame_duration_ms);
  w.put_u64(track.frames.size());
  for (const auto& f : track.frames) {
    for (const auto& block : f.blocks) {
      for (double v : block) w.put_f64(v);
    }
  }
  return w.bytes();
}

std::string compute_output_id(const FeatureTrack& track, const ProvenanceManifest& manifest) {
  auto bytes = track_bytes(track);
  const std::string m = canonical_manifest(manifest);
  bytes.insert(bytes.end(), m.begin(), m.end());
  const auto d = sha256(bytes);
  return to_hex(d);
}

// ---------------------------------------------------------------------------

namespace {

void normalize(std::vector<Contributor>& contributors) {
  std::sort(contributors.begin(), contributors.end(),
            [](const Contributor& a, const Contributor& b) { return a.song_id < b.song_id; });
  double total = 0.0;
  for (const auto& c : contributors) total += c.weight;
  for (auto& c : contributors) c.weight /= total;
}

// acc = w0*x0 + w1*x1 + ..., contributors in the given (ascending id) order.
void mix_into(std::vector<double>& out, const std::vector<std::pair<double, const std::vector<double>*>>& terms) {
  const auto& first = *terms.front().second;
  out.resize(first.size());
  for (std::size_t i = 0; i < first.size(); ++i) out[i] = terms.front().first * first[i];
  for (std::size_t c = 1; c < terms.size(); ++c) {
    const auto& x = *terms[c].second;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += terms[c].first * x[i];
  }
}

}  // namespace

Resolution GenerationEngine::resolve_assignments(const GenerationRequest& request,
                                                 const ConsentSnapshot& snapshot) const {
  const auto& vocab = catalogue_.vocabulary();
  const bool audio = request.level == ControlLevel::AudioLevel || request.level == ControlLevel::TemporalLevel;
  Resolution res;
  std::vector<std::size_t> unnamed;

  for (std::size_t b = 0; b < vocab.size(); ++b) {
    BlockAssignment a;
    a.block = vocab.at(b).name;
    for (const auto& sel : request.selections) {
      const bool names = sel.function_blocks.empty() || sel.function_blocks.count(a.block) != 0;
      if (!names) continue;
      Contributor c{sel.song_id, sel.weight, ContributorSource::UserSelected, std::nullopt};
      if (request.level == ControlLevel::TemporalLevel) c.segment = sel.segment;
      a.contributors.push_back(c);
    }
    if (!a.contributors.empty()) {
      a.origin = Origin::Attributed;
      normalize(a.contributors);
    } else if (audio) {
      a.origin = Origin::UserMaterial;
    } else {
      a.origin = Origin::Unattributed;
      unnamed.push_back(b);
    }
    res.assignments.push_back(std::move(a));
  }

  if (request.level != ControlLevel::ParameterLevel || unnamed.empty() ||
      request.unspecified_policy != UnspecifiedPolicy::Procedural) {
    return res;
  }

  std::set<SongId> requested;
  for (const auto& sel : request.selections) requested.insert(sel.song_id);
  Embedding query;
  if (request.prompt) {
    query = index_.embed_prompt(*request.prompt);
  } else {
    std::set<std::string> tags;
    for (SongId id : requested) {
      for (auto& t : song_tag_set(catalogue_.get_song(id))) tags.insert(std::move(t));
    }
    std::vector<std::string> v(tags.begin(), tags.end());
    query = index_.encoder().embed_tags(v);
  }

  std::optional<SongId> chosen;
  if (!query.is_zero()) {
    const auto ranking = index_.rank(
        query, [&](SongId id) { return requested.count(id) == 0; }, catalogue_.size());
    GenerationRequest probe;
    probe.request_id = request.request_id + "/procedural";
    probe.user_id = request.user_id;
    probe.level = ControlLevel::ParameterLevel;
    probe.intended_use = request.intended_use;
    ReferenceSelection sel;
    for (std::size_t b : unnamed) sel.function_blocks.insert(vocab.at(b).name);
    for (const auto& hit : ranking) {
      sel.song_id = hit.song_id;
      probe.selections = {sel};
      if (verifier_.verify(probe, snapshot).cleared()) {
        chosen = hit.song_id;
        break;
      }
    }
  }

  if (!chosen) {
    res.warnings.push_back("procedural selection found no compliant candidate; unspecified blocks left unattributed");
    return res;
  }
  res.procedural_selections.push_back(*chosen);
  for (std::size_t b : unnamed) {
    auto& a = res.assignments[b];
    a.origin = Origin::Attributed;
    a.contributors = {{*chosen, 1.0, ContributorSource::Procedural, std::nullopt}};
  }
  return res;
}

FeatureTrack GenerationEngine::compose(const std::vector<BlockAssignment>& assignments, const SongSource& songs,
                                       std::uint64_t seed, std::size_t target_len,
                                       std::int64_t frame_duration_ms) const {
  const auto& vocab = catalogue_.vocabulary();
  if (assignments.empty()) fail(ErrorCode::InvalidRequest, "compose needs block assignments");
  if (assignments.size() != vocab.size()) fail(ErrorCode::InvalidRequest, "assignments must cover the vocabulary");
  if (target_len == 0) fail(ErrorCode::InvalidRequest, "target length must be positive");

  FeatureTrack out;
  out.frame_duration_ms = frame_duration_ms;
  out.frames.assign(target_len, Frame{std::vector<std::vector<double>>(vocab.size())});

  for (std::size_t b = 0; b < vocab.size(); ++b) {
    const auto& a = assignments[b];
    if (a.block != vocab.at(b).name) fail(ErrorCode::InvalidRequest, "assignments out of vocabulary order");
    const std::size_t dim = vocab.at(b).dim;
    if (a.origin != Origin::Attributed) {
      for (std::size_t t = 0; t < target_len; ++t) {
        auto& v = out.frames[t].blocks[b];
        v.resize(dim);
        for (std::size_t i = 0; i < dim; ++i) v[i] = unattributed_value(seed, b, t, i);
      }
      continue;
    }
    if (a.contributors.empty()) fail(ErrorCode::InvalidRequest, "attributed block without contributors");
    std::vector<const Song*> refs;
    for (const auto& c : a.contributors) refs.push_back(&songs.fetch(c.song_id));
    std::vector<std::pair<double, const std::vector<double>*>> terms(refs.size());
    for (std::size_t t = 0; t < target_len; ++t) {
      for (std::size_t c = 0; c < refs.size(); ++c) {
        const auto& frames = refs[c]->feature_track.frames;
        terms[c] = {a.contributors[c].weight, &frames[t % frames.size()].blocks[b]};
      }
      mix_into(out.frames[t].blocks[b], terms);
    }
  }
  return out;
}

FeatureTrack GenerationEngine::apply_to_user_track(const GenerationRequest& request,
                                                   const std::vector<BlockAssignment>& assignments,
                                                   const SongSource& songs) const {
  const auto& vocab = catalogue_.vocabulary();
  if (!request.user_track) fail(ErrorCode::InvalidRequest, "audio level edit needs a user track");
  if (assignments.size() != vocab.size()) fail(ErrorCode::InvalidRequest, "assignments must cover the vocabulary");
  const FeatureTrack& user = *request.user_track;
  const bool temporal = request.level == ControlLevel::TemporalLevel;
  const double alpha = blend_alpha_for(request);
  FeatureTrack out = user;

  for (std::size_t b = 0; b < vocab.size(); ++b) {
    const auto& a = assignments[b];
    if (a.origin != Origin::Attributed) continue;
    std::vector<const Song*> refs;
    for (const auto& c : a.contributors) {
      const Song& s = songs.fetch(c.song_id);
      if (c.segment && c.segment->end_frame > s.feature_track.size()) {
        fail(ErrorCode::InvalidRequest, "segment out of range for song " + std::to_string(c.song_id));
      }
      if (c.segment && c.segment->end_frame > user.size()) {
        fail(ErrorCode::InvalidRequest, "segment out of range for user track");
      }
      refs.push_back(&s);
    }
    std::vector<std::pair<double, const std::vector<double>*>> terms;
    std::vector<double> mixture;
    for (std::size_t t = 0; t < user.size(); ++t) {
      terms.clear();
      double active_total = 0.0;
      for (std::size_t c = 0; c < refs.size(); ++c) {
        const auto& contrib = a.contributors[c];
        if (temporal && !(contrib.segment && contrib.segment->contains(t))) continue;
        const auto& frames = refs[c]->feature_track.frames;
        terms.emplace_back(contrib.weight, &frames[t % frames.size()].blocks[b]);
        active_total += contrib.weight;
      }
      if (terms.empty()) continue;
      if (terms.size() != refs.size()) {
        for (auto& term : terms) term.first /= active_total;
      }
      mix_into(mixture, terms);
      auto& target = out.frames[t].blocks[b];
      if (request.blend_mode == BlendMode::Replace) {
        target = mixture;
      } else {
        for (std::size_t i = 0; i < target.size(); ++i) target[i] = (1.0 - alpha) * target[i] + alpha * mixture[i];
      }
    }
  }
  return out;
}

GenerationOutput GenerationEngine::generate(const GenerationRequest& request, const ConsentSnapshot& snapshot,
                                            const SongSource& songs) const {
  validate_request(request, catalogue_);
  Resolution res = resolve_assignments(request, snapshot);
  const auto& vocab = catalogue_.vocabulary();

  ProvenanceManifest m;
  m.request_id = request.request_id;
  m.snapshot_id = snapshot.id();
  m.seed = request.seed;
  m.level = request.level;
  m.intended_use = request.intended_use;
  m.attributed_fraction = attributed_fraction(res.assignments, vocab);
  m.blend_mode = request.blend_mode;
  m.blend_alpha = blend_alpha_for(request);
  m.procedural_selections = res.procedural_selections;
  m.warnings = res.warnings;

  GenerationOutput out;
  const bool audio = request.level == ControlLevel::AudioLevel || request.level == ControlLevel::TemporalLevel;
  if (audio) {
    out.feature_track = apply_to_user_track(request, res.assignments, songs);
  } else {
    std::size_t target = 0;
    if (request.target_frames) {
      target = *request.target_frames;
    } else {
      for (const auto& sel : request.selections) {
        target = std::max(target, catalogue_.get_song(sel.song_id).feature_track.size());
      }
    }
    const auto frame_ms = catalogue_.get_song(request.selections.front().song_id).feature_track.frame_duration_ms;
    out.feature_track = compose(res.assignments, songs, request.seed, target, frame_ms);
  }
  m.target_frames = out.feature_track.size();
  m.assignments = std::move(res.assignments);
  out.manifest = std::move(m);
  out.output_id = compute_output_id(out.feature_track, out.manifest);
  return out;
}

}  // namespace abd
