#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "abd/catalogue.hpp"

namespace abd {

enum class UsageKind : std::uint8_t {
  ModelTraining,
  SongLevelInference,
  ParameterLevelInference,
  AudioLevelInference,
};
inline constexpr std::size_t kUsageKinds = 4;

enum class IntendedUse : std::uint8_t {
  SaveForPrivateUse,
  NonCommercialDistribution,
  CommercialDistribution,
};
inline constexpr std::size_t kIntendedUses = 3;

inline constexpr std::array<UsageKind, kUsageKinds> kAllUsageKinds{
    UsageKind::ModelTraining, UsageKind::SongLevelInference, UsageKind::ParameterLevelInference,
    UsageKind::AudioLevelInference};
inline constexpr std::array<IntendedUse, kIntendedUses> kAllIntendedUses{
    IntendedUse::SaveForPrivateUse, IntendedUse::NonCommercialDistribution,
    IntendedUse::CommercialDistribution};

/// Wire names: model_training, song_level, parameter_level, audio_level.
const char* to_string(UsageKind kind);
/// Wire names: private, non_commercial, commercial.
const char* to_string(IntendedUse use);
UsageKind parse_usage_kind(std::string_view s);
IntendedUse parse_intended_use(std::string_view s);

using UsageGrants = std::array<bool, kUsageKinds>;
using DistributionGrants = std::array<bool, kIntendedUses>;

struct ConsentRecord {
  SongId song_id = 0;
  UsageGrants usage_grants{};
  DistributionGrants distribution_grants{};
  std::uint64_t version = 0;
  std::int64_t updated_at_ms = 0;
  bool revoked = false;
  std::string actor_id;

  bool operator==(const ConsentRecord&) const = default;
};

enum class DenyReason { None, NoRecord, Revoked, NotGranted };
const char* to_string(DenyReason reason);

struct Decision {
  DenyReason reason = DenyReason::None;

  bool permitted() const noexcept { return reason == DenyReason::None; }
  static Decision permit() { return {}; }
  static Decision deny(DenyReason r) { return {r}; }
  bool operator==(const Decision&) const = default;
};

/// Immutable view of every consent record at one write frontier.
class ConsentSnapshot {
 public:
  using Records = std::map<SongId, ConsentRecord>;

  ConsentSnapshot() : records_(std::make_shared<const Records>()) {}
  ConsentSnapshot(std::uint64_t id, std::shared_ptr<const Records> records)
      : id_(id), records_(std::move(records)) {}

  /// Equals the registry's write count when the snapshot was taken.
  std::uint64_t id() const noexcept { return id_; }
  const Records& records() const noexcept { return *records_; }
  const ConsentRecord* find(SongId id) const noexcept;

  Decision check_usage(SongId song, UsageKind usage) const noexcept;
  Decision check_distribution(SongId song, IntendedUse use) const noexcept;

 private:
  std::uint64_t id_ = 0;
  std::shared_ptr<const Records> records_;
};

struct ConsentAuditEvent {
  std::uint64_t frontier = 0;
  SongId song_id = 0;
  std::string actor_id;
  std::string action;  // "set" | "revoke"
  std::uint64_t version = 0;
  std::int64_t at_ms = 0;
};

/// Writers are serialized; readers take O(1) copy-on-write snapshots.
class ConsentRegistry {
 public:
  using SongExists = std::function<bool(SongId)>;
  using Clock = std::function<std::int64_t()>;

  explicit ConsentRegistry(SongExists song_exists, Clock clock = {});

  /// Returns the record's new version. Clears a previous revocation.
  std::uint64_t set_consent(SongId song, const UsageGrants& usage, const DistributionGrants& distribution,
                            std::string_view actor_id = "system");
  /// Throws Error(NotFound) when no record exists.
  std::uint64_t revoke(SongId song, std::string_view actor_id = "system");

  ConsentSnapshot take_snapshot() const;
  std::vector<ConsentAuditEvent> audit_log() const;

  /// Replays a consent event stream (fixture lines or the persisted store).
  /// Returns the number of events applied; throws Error with the 1-based line.
  std::size_t load(std::istream& in);

 private:
  SongExists song_exists_;
  Clock clock_;
  mutable std::mutex mu_;
  std::shared_ptr<const ConsentSnapshot::Records> current_;
  std::uint64_t frontier_ = 0;
  std::vector<ConsentAuditEvent> audit_;
};

/// One line of the consent fixture / store format.
std::string format_consent_event(SongId song, const UsageGrants& usage, const DistributionGrants& distribution,
                                 std::string_view actor_id);
std::string format_revoke_event(SongId song, std::string_view actor_id);

}  // namespace abd
