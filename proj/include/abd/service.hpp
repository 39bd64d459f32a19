#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "abd/catalogue.hpp"
#include "abd/consent.hpp"
#include "abd/generation.hpp"
#include "abd/ledger.hpp"
#include "abd/retrieval.hpp"
#include "abd/verification.hpp"

namespace abd {

struct ServiceConfig {
  std::string listen_host = "127.0.0.1";
  int listen_port = 8080;
  std::filesystem::path catalogue_path;
  std::filesystem::path consent_path;  // consent event store
  std::filesystem::path ledger_path;
  std::filesystem::path output_dir;
  Tariff tariff;
  BlockVocabulary blocks = BlockVocabulary::defaults();
  std::size_t embedding_dim = 64;
  std::size_t retrieval_k = 5;
  double blend_alpha = 1.0;
  std::string hash_algorithm{kSha256Id};
  std::string admin_token;
  std::int64_t session_idle_seconds = 1800;
  std::vector<std::string> hierarchies{"genre"};

  using EnvLookup = std::function<std::optional<std::string>(std::string_view)>;

  /// key=value lines ('#' comments). Relative paths resolve against
  /// `base_dir`. Environment variables ABD_<KEY> override file values.
  static ServiceConfig parse(std::istream& in, const std::filesystem::path& base_dir, const EnvLookup& env);
  /// Reads `path` with the process environment as override source.
  static ServiceConfig load(const std::filesystem::path& path);

  /// Throws Error(Config) for unknown keys or bad values.
  void set(std::string_view key, std::string_view value, const std::filesystem::path& base_dir = {});
  /// Throws Error(Config) unless the tariff is valid, D >= 8 and the hash
  /// algorithm is supported.
  void validate() const;
};

/// Open session state for one user.
struct UserSession {
  std::string session_id;
  std::string user_id;
  RetrievalSession retrieval;
  std::int64_t last_used_ms = 0;
};

struct VerifyResult {
  VerificationOutcome outcome;
  Money fee_quote = 0;
  std::vector<AlternativeSet> alternatives;
};

struct GenerateResult {
  VerificationOutcome outcome;
  LedgerEntry entry;
  std::optional<GenerationOutput> output;  // set iff cleared
  std::map<SongId, double> contribution_weights;
  std::vector<AlternativeSet> alternatives;  // set iff blocked

  bool cleared() const noexcept { return outcome.cleared(); }
};

/// End-to-end orchestration: interact -> verify -> generate -> compensate.
/// All public members are safe to call from concurrent request handlers.
class Service {
 public:
  using Clock = std::function<std::int64_t()>;
  /// Test-only: invoked with "before-append" after an output has been staged.
  using FaultHook = std::function<void(std::string_view stage)>;

  Service(ServiceConfig config, std::shared_ptr<const Catalogue> catalogue, Ledger ledger, Clock clock = {});

  /// Loads the catalogue, replays the consent store, opens the ledger and
  /// recovers staged outputs from `output_dir`.
  static std::unique_ptr<Service> from_config(const ServiceConfig& config, Clock clock = {});

  const ServiceConfig& config() const noexcept { return config_; }
  const Catalogue& catalogue() const noexcept { return *catalogue_; }
  const RetrievalIndex& retrieval() const noexcept { return index_; }
  const Verifier& verifier() const noexcept { return verifier_; }
  const GenerationEngine& engine() const noexcept { return engine_; }
  ConsentRegistry& consent() noexcept { return registry_; }
  Ledger& ledger() noexcept { return ledger_; }
  const Ledger& ledger() const noexcept { return ledger_; }

  std::string create_session(std::string user_id, Prompt prompt, std::optional<std::size_t> k = std::nullopt);
  RankResult retrieve(std::string_view session_id, const std::vector<SongId>& reject = {});
  RankResult refine(std::string_view session_id, const std::vector<SongId>& reject = {});
  std::size_t session_count() const;

  /// Dry run: verdict, fee quote and alternatives. Not logged.
  VerifyResult verify(const GenerationRequest& request) const;
  /// Verifies against one snapshot, generates when cleared, and commits the
  /// ledger entry. The output is only published once its entry is committed.
  GenerateResult generate(GenerationRequest request);

  std::optional<GenerationOutput> output(std::string_view output_id) const;
  std::vector<std::string> output_ids() const;

  std::uint64_t set_consent(SongId song, const UsageGrants& usage, const DistributionGrants& distribution,
                            std::string_view actor_id);
  std::uint64_t revoke_consent(SongId song, std::string_view actor_id);

  std::optional<LedgerEntry> distribute_tta_pool(std::int64_t from_ms, std::int64_t to_ms);

  std::optional<std::string> artist_of(SongId song) const;
  void set_fault_hook(FaultHook hook) { fault_ = std::move(hook); }

 private:
  RankResult run_retrieval(std::string_view session_id, const std::vector<SongId>& reject, bool refine);
  void purge_idle_sessions_locked(std::int64_t now);
  void recover_outputs();
  void persist_consent_event(const std::string& line);

  ServiceConfig config_;
  Clock clock_;
  std::shared_ptr<const Catalogue> catalogue_;
  RetrievalIndex index_;
  Verifier verifier_;
  GenerationEngine engine_;
  ConsentRegistry registry_;
  Ledger ledger_;
  FaultHook fault_;

  std::mutex commit_mu_;
  std::mutex consent_file_mu_;
  mutable std::mutex outputs_mu_;
  std::map<std::string, GenerationOutput, std::less<>> outputs_;
  mutable std::mutex sessions_mu_;
  std::map<std::string, UserSession, std::less<>> sessions_;
  std::atomic<std::uint64_t> session_counter_{0};
};

/// Derives a stable request id from the request content when none is given.
std::string derive_request_id(const GenerationRequest& request, const BlockVocabulary& vocab);

}  // namespace abd
