#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iosfwd>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "abd/catalogue.hpp"
#include "abd/consent.hpp"
#include "abd/hashing.hpp"

namespace abd {

/// Integer minor currency units.
using Money = std::int64_t;

/// Purpose-based price list. The default magnitudes are placeholders; only
/// the ordering private <= non-commercial <= commercial is normative.
struct Tariff {
  std::array<Money, kIntendedUses> prices{100, 500, 2500};
  double royalty_rate = 0.7;
  std::string currency = "EUR";

  /// Throws Error(Config) unless 0 < p1 <= p2 <= p3 and rate in [0, 1].
  void validate() const;
  Money price(IntendedUse use) const { return prices[static_cast<std::size_t>(use)]; }
};

Money compute_fee(IntendedUse use, const Tariff& tariff);

/// Splits `total` proportionally to `shares`. Leftover units go to the
/// largest fractional parts; ties favour the lower index.
std::vector<Money> largest_remainder(Money total, const std::vector<double>& shares);

/// One artist's credit inside a ledger entry.
struct Credit {
  std::string artist_id;
  std::vector<SongId> song_ids;
  double weight = 0.0;
  Money amount = 0;

  bool operator==(const Credit&) const = default;
};

struct Allocation {
  std::vector<Credit> credits;  // ascending artist id
  Money artist_pool = 0;
  Money tta_pool_delta = 0;
  Money platform_delta = 0;
};

using ArtistOf = std::function<std::optional<std::string>(SongId)>;

/// Royalty = fee * rate; the attributed part goes to artists by
/// contribution weight, the rest of the royalty to the training pool.
/// Throws Error(Config) when a song has no artist.
Allocation allocate(Money fee, const std::map<SongId, double>& weights, double attributed_fraction,
                    const Tariff& tariff, const ArtistOf& artist_of);

enum class EntryKind { Generation, Blocked, TtaDistribution };
/// Wire names: generation, blocked, tta-distribution.
const char* to_string(EntryKind kind);

struct LedgerEntry {
  std::uint64_t entry_index = 0;
  std::int64_t timestamp_ms = 0;
  EntryKind kind = EntryKind::Generation;
  std::string request_id;
  std::uint64_t snapshot_id = 0;
  std::string verification_digest;
  std::string manifest_digest;
  std::string output_id;
  std::string currency;
  Money fee = 0;
  std::vector<Credit> payouts;
  Money tta_pool_delta = 0;
  Money platform_delta = 0;
  std::optional<std::pair<std::int64_t, std::int64_t>> period;
  std::string hash_alg{kSha256Id};
  Digest prev_hash{};
  Digest entry_hash{};

  Money payout_total() const noexcept;
  std::map<std::string, Money> payouts_by_artist() const;
  bool operator==(const LedgerEntry&) const = default;
};

/// Canonical byte form of every field except the two hashes.
std::string canonical_body(const LedgerEntry& entry);
Digest compute_entry_hash(const LedgerEntry& entry);
/// One JSON line, sorted keys, including both hashes.
std::string entry_to_line(const LedgerEntry& entry);
/// Strict decode; throws Error(InvalidRequest).
LedgerEntry entry_from_line(std::string_view line);

struct ChainStatus {
  bool ok = true;
  std::size_t entries = 0;
  std::size_t broken_at = 0;  // meaningful when !ok
  std::string reason;
};

/// Verifies the chain over entries held in memory.
ChainStatus verify_chain(const std::vector<LedgerEntry>& entries);
/// Verifies a stored JSON-lines export byte for byte: each line must decode,
/// be in canonical form, and link to its predecessor.
ChainStatus verify_jsonl(std::istream& in);

/// Incremental form of verify_jsonl, fed one line (without '\n') at a time.
/// Copyable, so a verified prefix can be resumed from.
class JsonlChainVerifier {
 public:
  /// Returns false once the chain is broken; later lines are ignored.
  bool feed(std::string_view line);
  ChainStatus status() const;

 private:
  Digest prev_{};
  std::size_t next_ = 0;
  std::optional<ChainStatus> broken_;
};

struct EntryDraft {
  EntryKind kind = EntryKind::Generation;
  std::string request_id;
  std::uint64_t snapshot_id = 0;
  std::string verification_digest;
  std::string manifest_digest;
  std::string output_id;
  Money fee = 0;
  std::vector<Credit> payouts;
  Money tta_pool_delta = 0;
  Money platform_delta = 0;
  std::optional<std::pair<std::int64_t, std::int64_t>> period;
};

struct StatementLine {
  std::uint64_t entry_index = 0;
  std::vector<SongId> song_ids;
  double weight = 0.0;
  Money amount = 0;
};

struct CompensationStatement {
  std::string artist_id;
  std::int64_t from_ms = 0;
  std::int64_t to_ms = 0;
  std::vector<StatementLine> lines;
  Money total = 0;
};

/// CSV: entry_index,song_id,weight,amount_minor_units,currency. Multiple
/// songs of one artist in one entry are joined with ';'.
std::string statement_csv(const CompensationStatement& statement, std::string_view currency);

/// Append-only, hash-chained event log. One writer at a time; readers copy.
class Ledger {
 public:
  using Clock = std::function<std::int64_t()>;
  /// Invoked with "before-persist" / "after-persist" during append; a throw
  /// aborts the append. Test-only fault injection.
  using FaultHook = std::function<void(std::string_view stage)>;

  explicit Ledger(std::string currency = "EUR", Clock clock = {});

  /// Loads and verifies an existing file (created if missing); later appends
  /// are persisted to it. Throws Error(Io) or Error(Conservation) if broken.
  static Ledger open(const std::filesystem::path& path, std::string currency = "EUR", Clock clock = {});

  Ledger(Ledger&&) noexcept;
  Ledger& operator=(Ledger&&) noexcept;

  /// Throws Error(Conservation) if fee != payouts + tta + platform.
  LedgerEntry append(EntryDraft draft);

  ChainStatus verify_chain() const;
  std::size_t size() const;
  std::vector<LedgerEntry> entries() const;
  /// Entries with index in [from, to).
  std::vector<LedgerEntry> entries(std::uint64_t from, std::uint64_t to) const;
  std::optional<LedgerEntry> entry(std::uint64_t index) const;
  std::string export_jsonl() const;

  Money tta_pool_balance() const;
  /// Credits within [from_ms, to_ms).
  CompensationStatement statement(std::string_view artist_id, std::int64_t from_ms = 0,
                                  std::int64_t to_ms = std::numeric_limits<std::int64_t>::max()) const;

  /// Equal split of the pool among artists with a training grant. Returns
  /// nullopt (pool carried forward) when nobody is eligible or it is empty.
  std::optional<LedgerEntry> distribute_tta_pool(std::int64_t from_ms, std::int64_t to_ms,
                                                 const ConsentSnapshot& snapshot, const Catalogue& catalogue);

  void set_fault_hook(FaultHook hook);

 private:
  std::string currency_;
  Clock clock_;
  FaultHook fault_;
  std::optional<std::filesystem::path> path_;
  std::unique_ptr<std::mutex> mu_;
  std::vector<LedgerEntry> entries_;
};

}  // namespace abd
