#include "abd/consent.hpp"

#include <chrono>
#include <istream>

#include <json.hpp>

#include "abd/error.hpp"

namespace abd {

using nlohmann::json;

const char* to_string(UsageKind kind) {
  switch (kind) {
    case UsageKind::ModelTraining: return "model_training";
    case UsageKind::SongLevelInference: return "song_level";
    case UsageKind::ParameterLevelInference: return "parameter_level";
    case UsageKind::AudioLevelInference: return "audio_level";
  }
  return "unknown";
}

const char* to_string(IntendedUse use) {
  switch (use) {
    case IntendedUse::SaveForPrivateUse: return "private";
    case IntendedUse::NonCommercialDistribution: return "non_commercial";
    case IntendedUse::CommercialDistribution: return "commercial";
  }
  return "unknown";
}

UsageKind parse_usage_kind(std::string_view s) {
  for (auto k : kAllUsageKinds) {
    if (s == to_string(k)) return k;
  }
  fail(ErrorCode::InvalidRequest, "unknown usage kind: " + std::string(s));
}

IntendedUse parse_intended_use(std::string_view s) {
  for (auto u : kAllIntendedUses) {
    if (s == to_string(u)) return u;
  }
  fail(ErrorCode::InvalidRequest, "unknown intended use: " + std::string(s));
}

const char* to_string(DenyReason reason) {
  switch (reason) {
    case DenyReason::None: return "permitted";
    case DenyReason::NoRecord: return "no-record";
    case DenyReason::Revoked: return "revoked";
    case DenyReason::NotGranted: return "not-granted";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------

const ConsentRecord* ConsentSnapshot::find(SongId id) const noexcept {
  auto it = records_->find(id);
  return it == records_->end() ? nullptr : &it->second;
}

Decision ConsentSnapshot::check_usage(SongId song, UsageKind usage) const noexcept {
  const auto* r = find(song);
  if (!r) return Decision::deny(DenyReason::NoRecord);
  if (r->revoked) return Decision::deny(DenyReason::Revoked);
  if (!r->usage_grants[static_cast<std::size_t>(usage)]) return Decision::deny(DenyReason::NotGranted);
  return Decision::permit();
}

Decision ConsentSnapshot::check_distribution(SongId song, IntendedUse use) const noexcept {
  const auto* r = find(song);
  if (!r) return Decision::deny(DenyReason::NoRecord);
  if (r->revoked) return Decision::deny(DenyReason::Revoked);
  if (!r->distribution_grants[static_cast<std::size_t>(use)]) return Decision::deny(DenyReason::NotGranted);
  return Decision::permit();
}

// ---------------------------------------------------------------------------

ConsentRegistry::ConsentRegistry(SongExists song_exists, Clock clock)
    : song_exists_(std::move(song_exists)),
      clock_(std::move(clock)),
      current_(std::make_shared<const ConsentSnapshot::Records>()) {
  if (!clock_) {
    clock_ = [] {
      return std::chrono::duration_cast<std::chrono::milliseconds>(
                 std::chrono::system_clock::now().time_since_epoch())
          .count();
    };
  }
}

std::uint64_t ConsentRegistry::set_consent(SongId song, const UsageGrants& usage,
                                           const DistributionGrants& distribution, std::string_view actor_id) {
  if (song_exists_ && !song_exists_(song)) fail(ErrorCode::NotFound, "unknown song " + std::to_string(song));
  std::lock_guard lock(mu_);
  auto next = std::make_shared<ConsentSnapshot::Records>(*current_);
  auto& rec = (*next)[song];
  rec.song_id = song;
  rec.usage_grants = usage;
  rec.distribution_grants = distribution;
  rec.revoked = false;
  rec.version += 1;
  rec.updated_at_ms = clock_();
  rec.actor_id = std::string(actor_id);
  ++frontier_;
  audit_.push_back({frontier_, song, rec.actor_id, "set", rec.version, rec.updated_at_ms});
  const auto version = rec.version;
  current_ = std::move(next);
  return version;
}

std::uint64_t ConsentRegistry::revoke(SongId song, std::string_view actor_id) {
  std::lock_guard lock(mu_);
  if (!current_->count(song)) fail(ErrorCode::NotFound, "no consent record for song " + std::to_string(song));
  auto next = std::make_shared<ConsentSnapshot::Records>(*current_);
  auto& rec = next->at(song);
  rec.revoked = true;
  rec.version += 1;
  rec.updated_at_ms = clock_();
  rec.actor_id = std::string(actor_id);
  ++frontier_;
  audit_.push_back({frontier_, song, rec.actor_id, "revoke", rec.version, rec.updated_at_ms});
  const auto version = rec.version;
  current_ = std::move(next);
  return version;
}

ConsentSnapshot ConsentRegistry::take_snapshot() const {
  std::lock_guard lock(mu_);
  return ConsentSnapshot(frontier_, current_);
}

std::vector<ConsentAuditEvent> ConsentRegistry::audit_log() const {
  std::lock_guard lock(mu_);
  return audit_;
}

namespace {

bool require_bool(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_boolean()) fail(ErrorCode::InvalidRequest, std::string("missing boolean ") + key);
  return it->get<bool>();
}

}  // namespace

std::size_t ConsentRegistry::load(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::size_t applied = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json obj = json::parse(line, nullptr, false);
      if (obj.is_discarded() || !obj.is_object()) fail(ErrorCode::InvalidRequest, "malformed consent record");
      auto id = obj.find("song_id");
      if (id == obj.end() || !id->is_number_integer()) fail(ErrorCode::InvalidRequest, "missing song_id");
      const SongId song = id->get<SongId>();
      std::string actor = obj.value("actor_id", std::string("system"));
      if (obj.value("revoke", false)) {
        revoke(song, actor);
      } else {
        const auto& u = obj.at("usage");
        const auto& d = obj.at("distribution");
        UsageGrants usage{require_bool(u, "model_training"), require_bool(u, "song_level"),
                          require_bool(u, "parameter_level"), require_bool(u, "audio_level")};
        DistributionGrants dist{require_bool(d, "private"), require_bool(d, "non_commercial"),
                                require_bool(d, "commercial")};
        set_consent(song, usage, dist, actor);
      }
      ++applied;
    } catch (const Error& e) {
      throw Error(e.code(), "consent line " + std::to_string(line_no) + ": " + e.what());
    } catch (const json::exception& e) {
      fail(ErrorCode::InvalidRequest, "consent line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return applied;
}

std::string format_consent_event(SongId song, const UsageGrants& usage, const DistributionGrants& distribution,
                                 std::string_view actor_id) {
  json obj = {
      {"song_id", song},
      {"usage",
       {{"model_training", usage[0]},
        {"song_level", usage[1]},
        {"parameter_level", usage[2]},
        {"audio_level", usage[3]}}},
      {"distribution",
       {{"private", distribution[0]}, {"non_commercial", distribution[1]}, {"commercial", distribution[2]}}},
      {"actor_id", actor_id},
  };
  return obj.dump();
}

std::string format_revoke_event(SongId song, std::string_view actor_id) {
  return json{{"song_id", song}, {"revoke", true}, {"actor_id", actor_id}}.dump();
}

}  // namespace abd
