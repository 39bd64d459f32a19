#include "abd/json_io.hpp"

#include "abd/error.hpp"

namespace abd {

namespace {

template <typename F>
auto decode(const char* what, F&& f) {
  try {
    return f();
  } catch (const Json::exception& e) {
    fail(ErrorCode::InvalidRequest, std::string("malformed ") + what + ": " + e.what());
  }
}

Json segment_json(const Segment& s) { return {{"start_frame", s.start_frame}, {"end_frame", s.end_frame}}; }

Segment segment_from(const Json& j) {
  return {j.at("start_frame").get<std::size_t>(), j.at("end_frame").get<std::size_t>()};
}

}  // namespace

Json to_json(const FeatureTrack& track, const BlockVocabulary& vocab) {
  Json frames = Json::array();
  for (const auto& f : track.frames) {
    Json fj = Json::object();
    for (std::size_t b = 0; b < vocab.size() && b < f.blocks.size(); ++b) fj[vocab.at(b).name] = f.blocks[b];
    frames.push_back(std::move(fj));
  }
  return {{"frame_duration_ms", track.frame_duration_ms}, {"frames", std::move(frames)}};
}

FeatureTrack track_from_json(const Json& j, const BlockVocabulary& vocab) {
  return decode("feature track", [&] {
    FeatureTrack t;
    t.frame_duration_ms = j.at("frame_duration_ms").get<std::int64_t>();
    for (const auto& fj : j.at("frames")) {
      if (!fj.is_object() || fj.size() != vocab.size()) {
        fail(ErrorCode::InvalidRequest, "frame block set differs from vocabulary");
      }
      Frame f;
      f.blocks.resize(vocab.size());
      for (auto it = fj.begin(); it != fj.end(); ++it) {
        auto idx = vocab.index_of(it.key());
        if (!idx) fail(ErrorCode::InvalidRequest, "unknown block: " + it.key());
        f.blocks[*idx] = it->get<std::vector<double>>();
      }
      t.frames.push_back(std::move(f));
    }
    validate_track(t, vocab);
    return t;
  });
}

Json to_json(const Prompt& prompt) {
  if (prompt.kind == PromptKind::FreeText) return {{"kind", "free_text"}, {"text", prompt.text}};
  return {{"kind", "categories"}, {"categories", prompt.categories}};
}

Prompt prompt_from_json(const Json& j) {
  return decode("prompt", [&] {
    const auto kind = j.at("kind").get<std::string>();
    Prompt p;
    if (kind == "free_text") {
      p = Prompt::free_text(j.at("text").get<std::string>());
    } else if (kind == "categories") {
      p = Prompt::from_categories(j.at("categories").get<std::map<std::string, std::vector<std::string>>>());
    } else {
      fail(ErrorCode::InvalidRequest, "unknown prompt kind: " + kind);
    }
    p.validate();
    return p;
  });
}

Json to_json(const GenerationRequest& r, const BlockVocabulary& vocab) {
  Json sels = Json::array();
  for (const auto& s : r.selections) {
    Json sj = {{"song_id", s.song_id}, {"function_blocks", s.function_blocks}, {"weight", s.weight}};
    if (s.segment) sj["segment"] = segment_json(*s.segment);
    sels.push_back(std::move(sj));
  }
  Json j = {
      {"request_id", r.request_id},
      {"user_id", r.user_id},
      {"selections", std::move(sels)},
      {"level", to_string(r.level)},
      {"intended_use", to_string(r.intended_use)},
      {"unspecified_policy", to_string(r.unspecified_policy)},
      {"seed", r.seed},
      {"blend_mode", to_string(r.blend_mode)},
  };
  if (r.user_track) j["user_track"] = to_json(*r.user_track, vocab);
  if (r.prompt) j["prompt"] = to_json(*r.prompt);
  if (r.target_frames) j["target_frames"] = *r.target_frames;
  if (r.blend_alpha) j["blend_alpha"] = *r.blend_alpha;
  return j;
}

GenerationRequest request_from_json(const Json& j, const BlockVocabulary& vocab) {
  return decode("generation request", [&] {
    if (!j.is_object()) fail(ErrorCode::InvalidRequest, "request must be an object");
    GenerationRequest r;
    r.request_id = j.value("request_id", std::string());
    r.user_id = j.value("user_id", std::string());
    r.level = parse_control_level(j.at("level").get<std::string>());
    r.intended_use = parse_intended_use(j.at("intended_use").get<std::string>());
    r.unspecified_policy = parse_unspecified_policy(j.value("unspecified_policy", std::string("unconditional")));
    r.seed = j.value("seed", std::uint64_t{0});
    r.blend_mode = parse_blend_mode(j.value("blend_mode", std::string("replace")));
    for (const auto& sj : j.at("selections")) {
      ReferenceSelection s;
      s.song_id = sj.at("song_id").get<SongId>();
      if (sj.contains("function_blocks")) s.function_blocks = sj.at("function_blocks").get<std::set<BlockName>>();
      s.weight = sj.value("weight", 1.0);
      if (sj.contains("segment") && !sj.at("segment").is_null()) s.segment = segment_from(sj.at("segment"));
      r.selections.push_back(std::move(s));
    }
    if (j.contains("user_track") && !j.at("user_track").is_null()) {
      r.user_track = track_from_json(j.at("user_track"), vocab);
    }
    if (j.contains("prompt") && !j.at("prompt").is_null()) r.prompt = prompt_from_json(j.at("prompt"));
    if (j.contains("target_frames") && !j.at("target_frames").is_null()) {
      r.target_frames = j.at("target_frames").get<std::size_t>();
    }
    if (j.contains("blend_alpha") && !j.at("blend_alpha").is_null()) r.blend_alpha = j.at("blend_alpha").get<double>();
    return r;
  });
}

Json to_json(const Decision& d) {
  return {{"permitted", d.permitted()}, {"reason", to_string(d.reason)}};
}

Json to_json(const VerificationOutcome& o) {
  Json checks = Json::array();
  for (const auto& c : o.per_selection) {
    checks.push_back({{"song_id", c.song_id}, {"usage", to_json(c.usage)}, {"distribution", to_json(c.distribution)}});
  }
  Json denials = Json::array();
  for (const auto& d : o.denials()) {
    denials.push_back({{"song_id", d.song_id}, {"check", d.check}, {"reason", to_string(d.reason)}});
  }
  return {
      {"request_id", o.request_id},
      {"snapshot_id", o.snapshot_id},
      {"level", to_string(o.level)},
      {"usage_kind", to_string(usage_for(o.level))},
      {"intended_use", to_string(o.intended_use)},
      {"per_selection", std::move(checks)},
      {"denials", std::move(denials)},
      {"verdict", to_string(o.verdict)},
  };
}

Json to_json(const AlternativeSet& a) {
  Json c = Json::array();
  for (const auto& s : a.candidates) c.push_back({{"song_id", s.song_id}, {"score", s.score}});
  Json j = {{"blocked_song_id", a.blocked_song_id}, {"candidates", std::move(c)}};
  if (a.no_compliant_alternative) j["signal"] = "no-compliant-alternative";
  return j;
}

Json to_json(const ProvenanceManifest& m) {
  Json assignments = Json::array();
  for (const auto& a : m.assignments) {
    Json contributors = Json::array();
    for (const auto& c : a.contributors) {
      Json cj = {{"song_id", c.song_id}, {"weight", c.weight}, {"source", to_string(c.source)}};
      if (c.segment) cj["segment"] = segment_json(*c.segment);
      contributors.push_back(std::move(cj));
    }
    assignments.push_back({{"block", a.block}, {"origin", to_string(a.origin)}, {"contributors", std::move(contributors)}});
  }
  return {
      {"request_id", m.request_id},
      {"snapshot_id", m.snapshot_id},
      {"seed", m.seed},
      {"level", to_string(m.level)},
      {"intended_use", to_string(m.intended_use)},
      {"assignments", std::move(assignments)},
      {"attributed_fraction", m.attributed_fraction},
      {"engine_version", m.engine_version},
      {"target_frames", m.target_frames},
      {"blend_mode", to_string(m.blend_mode)},
      {"blend_alpha", m.blend_alpha},
      {"procedural_selections", m.procedural_selections},
      {"warnings", m.warnings},
  };
}

ProvenanceManifest manifest_from_json(const Json& j) {
  return decode("manifest", [&] {
    ProvenanceManifest m;
    m.request_id = j.at("request_id").get<std::string>();
    m.snapshot_id = j.at("snapshot_id").get<std::uint64_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.level = parse_control_level(j.at("level").get<std::string>());
    m.intended_use = parse_intended_use(j.at("intended_use").get<std::string>());
    for (const auto& aj : j.at("assignments")) {
      BlockAssignment a;
      a.block = aj.at("block").get<std::string>();
      a.origin = parse_origin(aj.at("origin").get<std::string>());
      for (const auto& cj : aj.at("contributors")) {
        Contributor c;
        c.song_id = cj.at("song_id").get<SongId>();
        c.weight = cj.at("weight").get<double>();
        c.source = parse_contributor_source(cj.at("source").get<std::string>());
        if (cj.contains("segment")) c.segment = segment_from(cj.at("segment"));
        a.contributors.push_back(c);
      }
      m.assignments.push_back(std::move(a));
    }
    m.attributed_fraction = j.at("attributed_fraction").get<double>();
    m.engine_version = j.at("engine_version").get<std::string>();
    m.target_frames = j.at("target_frames").get<std::size_t>();
    m.blend_mode = parse_blend_mode(j.at("blend_mode").get<std::string>());
    m.blend_alpha = j.at("blend_alpha").get<double>();
    m.procedural_selections = j.at("procedural_selections").get<std::vector<SongId>>();
    m.warnings = j.at("warnings").get<std::vector<std::string>>();
    return m;
  });
}

std::string canonical_manifest(const ProvenanceManifest& manifest) { return to_json(manifest).dump(); }

Json to_json(const GenerationOutput& output, const BlockVocabulary& vocab) {
  Json track = to_json(output.feature_track, vocab);
  return {
      {"output_id", output.output_id},
      {"manifest", to_json(output.manifest)},
      {"frame_duration_ms", output.feature_track.frame_duration_ms},
      {"frames", std::move(track.at("frames"))},
  };
}

GenerationOutput output_from_json(const Json& j, const BlockVocabulary& vocab) {
  return decode("generation output", [&] {
    GenerationOutput out;
    out.output_id = j.at("output_id").get<std::string>();
    out.manifest = manifest_from_json(j.at("manifest"));
    out.feature_track = track_from_json({{"frame_duration_ms", j.at("frame_duration_ms")}, {"frames", j.at("frames")}},
                                        vocab);
    return out;
  });
}

Json to_json(const HierarchyNode& node) {
  Json j = {{"node_id", node.node_id},
            {"label", node.label},
            {"kind", to_string(node.kind)},
            {"child_count", node.children.size()}};
  if (node.song_id) j["song_id"] = *node.song_id;
  return j;
}

Json song_summary(const Song& song) {
  return {
      {"song_id", song.song_id},       {"title", song.title},
      {"artist_id", song.artist_id},   {"artist_name", song.artist_name},
      {"album", song.album},           {"genre_path", song.genre_path},
      {"tags", song.tags},             {"release_year", song.release_year},
      {"frames", song.feature_track.size()},
  };
}

Json to_json(const SearchHit& hit, const Song& song) {
  return {{"song_id", hit.song_id}, {"match_field", to_string(hit.field)}, {"title", song.title},
          {"artist_name", song.artist_name}};
}

Json to_json(const ConsentRecord& r) {
  Json usage = Json::object();
  for (auto k : kAllUsageKinds) usage[to_string(k)] = r.usage_grants[static_cast<std::size_t>(k)];
  Json dist = Json::object();
  for (auto u : kAllIntendedUses) dist[to_string(u)] = r.distribution_grants[static_cast<std::size_t>(u)];
  return {{"song_id", r.song_id},   {"usage", std::move(usage)},     {"distribution", std::move(dist)},
          {"version", r.version},   {"updated_at_ms", r.updated_at_ms}, {"revoked", r.revoked},
          {"actor_id", r.actor_id}};
}

std::pair<UsageGrants, DistributionGrants> grants_from_json(const Json& j) {
  return decode("consent grants", [&] {
    UsageGrants usage{};
    DistributionGrants dist{};
    const auto& u = j.at("usage");
    const auto& d = j.at("distribution");
    for (auto k : kAllUsageKinds) usage[static_cast<std::size_t>(k)] = u.at(to_string(k)).get<bool>();
    for (auto x : kAllIntendedUses) dist[static_cast<std::size_t>(x)] = d.at(to_string(x)).get<bool>();
    return std::make_pair(usage, dist);
  });
}

Json to_json(const RankResult& result, const Catalogue& catalogue) {
  Json hits = Json::array();
  for (const auto& h : result.hits) {
    Json hj = {{"song_id", h.song_id}, {"score", h.score}};
    if (const Song* s = catalogue.find(h.song_id)) {
      hj["title"] = s->title;
      hj["artist_name"] = s->artist_name;
    }
    hits.push_back(std::move(hj));
  }
  return {{"hits", std::move(hits)}, {"signal", to_string(result.signal)}};
}

Json to_json(const LedgerEntry& entry) { return Json::parse(entry_to_line(entry)); }

Json to_json(const CompensationStatement& st, std::string_view currency) {
  Json lines = Json::array();
  for (const auto& l : st.lines) {
    lines.push_back({{"entry_index", l.entry_index}, {"song_ids", l.song_ids}, {"weight", l.weight},
                     {"amount_minor_units", l.amount}});
  }
  return {{"artist_id", st.artist_id}, {"from_ms", st.from_ms}, {"to_ms", st.to_ms},
          {"currency", currency},      {"lines", std::move(lines)}, {"total_minor_units", st.total}};
}

}  // namespace abd
