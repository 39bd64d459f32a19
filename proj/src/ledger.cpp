#include "abd/ledger.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "abd/error.hpp"

namespace abd {

using nlohmann::json;

void Tariff::validate() const {
  if (!(prices[0] > 0 && prices[0] <= prices[1] && prices[1] <= prices[2])) {
    fail(ErrorCode::Config, "tariff must satisfy 0 < private <= non-commercial <= commercial");
  }
  if (!(royalty_rate >= 0.0 && royalty_rate <= 1.0)) fail(ErrorCode::Config, "royalty_rate must lie in [0, 1]");
  if (currency.empty()) fail(ErrorCode::Config, "currency is empty");
}

Money compute_fee(IntendedUse use, const Tariff& tariff) { return tariff.price(use); }

std::vector<Money> largest_remainder(Money total, const std::vector<double>& shares) {
  std::vector<Money> out(shares.size(), 0);
  if (shares.empty() || total == 0) return out;
  long double sum = 0.0L;
  for (double s : shares) {
    if (!(s >= 0.0) || !std::isfinite(s)) fail(ErrorCode::InvalidRequest, "shares must be non-negative");
    sum += s;
  }
  if (!(sum > 0.0L)) fail(ErrorCode::InvalidRequest, "shares must not all be zero");

  std::vector<long double> frac(shares.size());
  Money assigned = 0;
  for (std::size_t i = 0; i < shares.size(); ++i) {
    const long double exact = static_cast<long double>(total) * shares[i] / sum;
    const long double fl = std::floor(exact);
    out[i] = static_cast<Money>(fl);
    frac[i] = exact - fl;
    assigned += out[i];
  }
  Money left = total - assigned;
  std::vector<std::size_t> order(shares.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t i = 0; left > 0; i = (i + 1) % order.size(), --left) out[order[i]] += 1;
  for (std::size_t i = order.size(); left < 0; ++left) {
    // Only reachable through rounding noise when an exact value sits just
    // below an integer; take the unit back from the smallest fraction.
    i = (i == 0 ? order.size() : i) - 1;
    out[order[i]] -= 1;
  }
  return out;
}

Allocation allocate(Money fee, const std::map<SongId, double>& weights, double attributed_fraction,
                    const Tariff& tariff, const ArtistOf& artist_of) {
  if (fee < 0) fail(ErrorCode::InvalidRequest, "fee must be non-negative");
  if (!(attributed_fraction >= 0.0 && attributed_fraction <= 1.0)) {
    fail(ErrorCode::InvalidRequest, "attributed_fraction must lie in [0, 1]");
  }
  const Money rate_ppm = std::llround(tariff.royalty_rate * 1e6);
  const Money royalty = (fee * rate_ppm + 500000) / 1000000;

  Allocation out;
  if (!weights.empty()) {
    out.artist_pool = std::clamp<Money>(std::llround(static_cast<double>(royalty) * attributed_fraction), 0, royalty);
  }
  out.tta_pool_delta = royalty - out.artist_pool;
  out.platform_delta = fee - royalty;

  std::map<std::string, Credit> by_artist;
  for (const auto& [song, w] : weights) {
    auto artist = artist_of(song);
    if (!artist) fail(ErrorCode::Config, "no artist mapping for song " + std::to_string(song));
    auto& c = by_artist[*artist];
    c.artist_id = *artist;
    c.song_ids.push_back(song);
    c.weight += w;
  }
  std::vector<double> shares;
  for (const auto& [artist, c] : by_artist) {
    shares.push_back(c.weight);
    out.credits.push_back(c);
  }
  if (out.artist_pool > 0) {
    const auto amounts = largest_remainder(out.artist_pool, shares);
    for (std::size_t i = 0; i < amounts.size(); ++i) out.credits[i].amount = amounts[i];
  }
  return out;
}

const char* to_string(EntryKind kind) {
  switch (kind) {
    case EntryKind::Generation: return "generation";
    case EntryKind::Blocked: return "blocked";
    case EntryKind::TtaDistribution: return "tta-distribution";
  }
  return "unknown";
}

namespace {

EntryKind parse_entry_kind(std::string_view s) {
  for (auto k : {EntryKind::Generation, EntryKind::Blocked, EntryKind::TtaDistribution}) {
    if (s == to_string(k)) return k;
  }
  fail(ErrorCode::InvalidRequest, "unknown entry kind: " + std::string(s));
}

json body_json(const LedgerEntry& e) {
  json payouts = json::array();
  for (const auto& c : e.payouts) {
    payouts.push_back({{"artist_id", c.artist_id}, {"song_ids", c.song_ids}, {"weight", c.weight}, {"amount", c.amount}});
  }
  json period = nullptr;
  if (e.period) period = json::array({e.period->first, e.period->second});
  return {
      {"entry_index", e.entry_index},
      {"timestamp_ms", e.timestamp_ms},
      {"kind", to_string(e.kind)},
      {"request_id", e.request_id},
      {"snapshot_id", e.snapshot_id},
      {"verification_digest", e.verification_digest},
      {"manifest_digest", e.manifest_digest},
      {"output_id", e.output_id},
      {"currency", e.currency},
      {"fee", e.fee},
      {"payouts", std::move(payouts)},
      {"tta_pool_delta", e.tta_pool_delta},
      {"platform_delta", e.platform_delta},
      {"period", std::move(period)},
      {"hash_alg", e.hash_alg},
  };
}

const std::set<std::string> kLineKeys{"entry_index",  "timestamp_ms",   "kind",     "request_id",
                                      "snapshot_id",  "verification_digest", "manifest_digest", "output_id",
                                      "currency",     "fee",            "payouts",  "tta_pool_delta",
                                      "platform_delta", "period",       "hash_alg", "prev_hash",
                                      "entry_hash"};

void check_conservation(const LedgerEntry& e) {
  if (e.fee != e.payout_total() + e.tta_pool_delta + e.platform_delta) {
    fail(ErrorCode::Conservation, "entry " + std::to_string(e.entry_index) + ": fee " + std::to_string(e.fee) +
                                      " != payouts + tta + platform");
  }
}

}  // namespace

Money LedgerEntry::payout_total() const noexcept {
  Money t = 0;
  for (const auto& c : payouts) t += c.amount;
  return t;
}

std::map<std::string, Money> LedgerEntry::payouts_by_artist() const {
  std::map<std::string, Money> out;
  for (const auto& c : payouts) out[c.artist_id] += c.amount;
  return out;
}

std::string canonical_body(const LedgerEntry& entry) { return body_json(entry).dump(); }

Digest compute_entry_hash(const LedgerEntry& entry) {
  if (entry.hash_alg != kSha256Id) fail(ErrorCode::Config, "unsupported hash algorithm " + entry.hash_alg);
  std::string bytes(entry.prev_hash.begin(), entry.prev_hash.end());
  bytes += canonical_body(entry);
  return sha256(bytes);
}

std::string entry_to_line(const LedgerEntry& entry) {
  json j = body_json(entry);
  j["prev_hash"] = to_hex(entry.prev_hash);
  j["entry_hash"] = to_hex(entry.entry_hash);
  return j.dump();
}

LedgerEntry entry_from_line(std::string_view line) {
  json j = json::parse(line.begin(), line.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) fail(ErrorCode::InvalidRequest, "malformed ledger line");
  if (j.size() != kLineKeys.size()) fail(ErrorCode::InvalidRequest, "ledger line has unexpected fields");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!kLineKeys.count(it.key())) fail(ErrorCode::InvalidRequest, "unknown ledger field " + it.key());
  }
  try {
    LedgerEntry e;
    e.entry_index = j.at("entry_index").get<std::uint64_t>();
    e.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
    e.kind = parse_entry_kind(j.at("kind").get<std::string>());
    e.request_id = j.at("request_id").get<std::string>();
    e.snapshot_id = j.at("snapshot_id").get<std::uint64_t>();
    e.verification_digest = j.at("verification_digest").get<std::string>();
    e.manifest_digest = j.at("manifest_digest").get<std::string>();
    e.output_id = j.at("output_id").get<std::string>();
    e.currency = j.at("currency").get<std::string>();
    e.fee = j.at("fee").get<Money>();
    for (const auto& cj : j.at("payouts")) {
      Credit c;
      c.artist_id = cj.at("artist_id").get<std::string>();
      c.song_ids = cj.at("song_ids").get<std::vector<SongId>>();
      c.weight = cj.at("weight").get<double>();
      c.amount = cj.at("amount").get<Money>();
      e.payouts.push_back(std::move(c));
    }
    e.tta_pool_delta = j.at("tta_pool_delta").get<Money>();
    e.platform_delta = j.at("platform_delta").get<Money>();
    const auto& p = j.at("period");
    if (!p.is_null()) e.period = std::make_pair(p.at(0).get<std::int64_t>(), p.at(1).get<std::int64_t>());
    e.hash_alg = j.at("hash_alg").get<std::string>();
    e.prev_hash = digest_from_hex(j.at("prev_hash").get<std::string>());
    e.entry_hash = digest_from_hex(j.at("entry_hash").get<std::string>());
    return e;
  } catch (const json::exception& ex) {
    fail(ErrorCode::InvalidRequest, std::string("malformed ledger line: ") + ex.what());
  }
}

namespace {

// Checks entry i against its predecessor's hash. Empty string when valid.
std::string check_link(const LedgerEntry& e, std::size_t i, const Digest& prev) {
  if (e.entry_index != i) return "index out of sequence";
  if (e.prev_hash != prev) return "prev_hash does not link to predecessor";
  try {
    if (compute_entry_hash(e) != e.entry_hash) return "entry_hash mismatch";
    check_conservation(e);
  } catch (const Error& err) {
    return err.what();
  }
  return {};
}

}  // namespace

ChainStatus verify_chain(const std::vector<LedgerEntry>& entries) {
  ChainStatus st;
  Digest prev{};
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (auto why = check_link(entries[i], i, prev); !why.empty()) {
      return {false, entries.size(), i, why};
    }
    prev = entries[i].entry_hash;
  }
  st.entries = entries.size();
  return st;
}

bool JsonlChainVerifier::feed(std::string_view line) {
  if (broken_) return false;
  const std::size_t i = next_;
  LedgerEntry e;
  try {
    e = entry_from_line(line);
  } catch (const Error& err) {
    broken_ = ChainStatus{false, i, i, err.what()};
    return false;
  }
  std::string why;
  if (entry_to_line(e) != line) {
    why = "line is not in canonical form";
  } else {
    why = check_link(e, i, prev_);
  }
  if (!why.empty()) {
    broken_ = ChainStatus{false, i, i, why};
    return false;
  }
  prev_ = e.entry_hash;
  ++next_;
  return true;
}

ChainStatus JsonlChainVerifier::status() const {
  if (broken_) return *broken_;
  return {true, next_, 0, {}};
}

ChainStatus verify_jsonl(std::istream& in) {
  JsonlChainVerifier v;
  std::string line;
  while (std::getline(in, line) && v.feed(line)) {
  }
  return v.status();
}

std::string statement_csv(const CompensationStatement& statement, std::string_view currency) {
  std::ostringstream os;
  os << "entry_index,song_id,weight,amount_minor_units,currency\n";
  for (const auto& l : statement.lines) {
    os << l.entry_index << ',';
    for (std::size_t i = 0; i < l.song_ids.size(); ++i) os << (i ? ";" : "") << l.song_ids[i];
    os << ',' << json(l.weight).dump() << ',' << l.amount << ',' << currency << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------

Ledger::Ledger(std::string currency, Clock clock)
    : currency_(std::move(currency)), clock_(std::move(clock)), mu_(std::make_unique<std::mutex>()) {
  if (!clock_) {
    clock_ = [] {
      return std::chrono::duration_cast<std::chrono::milliseconds>(
                 std::chrono::system_clock::now().time_since_epoch())
          .count();
    };
  }
}

Ledger::Ledger(Ledger&&) noexcept = default;
Ledger& Ledger::operator=(Ledger&&) noexcept = default;

Ledger Ledger::open(const std::filesystem::path& path, std::string currency, Clock clock) {
  Ledger ledger(std::move(currency), std::move(clock));
  std::error_code ec;
  if (std::filesystem::exists(path, ec)) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot read ledger " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    std::istringstream check(text);
    auto st = verify_jsonl(check);
    if (!st.ok) {
      fail(ErrorCode::Conservation,
           "ledger " + path.string() + " broken at entry " + std::to_string(st.broken_at) + ": " + st.reason);
    }
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) ledger.entries_.push_back(entry_from_line(line));
  } else {
    std::ofstream create(path, std::ios::binary | std::ios::app);
    if (!create) fail(ErrorCode::Io, "cannot create ledger " + path.string());
  }
  ledger.path_ = path;
  return ledger;
}

void Ledger::set_fault_hook(FaultHook hook) {
  std::lock_guard lock(*mu_);
  fault_ = std::move(hook);
}

LedgerEntry Ledger::append(EntryDraft draft) {
  std::lock_guard lock(*mu_);
  LedgerEntry e;
  e.entry_index = entries_.size();
  e.timestamp_ms = clock_();
  e.kind = draft.kind;
  e.request_id = std::move(draft.request_id);
  e.snapshot_id = draft.snapshot_id;
  e.verification_digest = std::move(draft.verification_digest);
  e.manifest_digest = std::move(draft.manifest_digest);
  e.output_id = std::move(draft.output_id);
  e.currency = currency_;
  e.fee = draft.fee;
  e.payouts = std::move(draft.payouts);
  std::sort(e.payouts.begin(), e.payouts.end(),
            [](const Credit& a, const Credit& b) { return a.artist_id < b.artist_id; });
  e.tta_pool_delta = draft.tta_pool_delta;
  e.platform_delta = draft.platform_delta;
  e.period = draft.period;
  if (e.fee < 0) fail(ErrorCode::Conservation, "fee must be non-negative");
  check_conservation(e);
  e.prev_hash = entries_.empty() ? Digest{} : entries_.back().entry_hash;
  e.entry_hash = compute_entry_hash(e);

  if (fault_) fault_("before-persist");
  if (path_) {
    std::ofstream out(*path_, std::ios::binary | std::ios::app);
    out << entry_to_line(e) << '\n';
    out.flush();
    if (!out) fail(ErrorCode::Io, "failed to persist ledger entry to " + path_->string());
  }
  entries_.push_back(e);
  if (fault_) fault_("after-persist");
  return e;
}

ChainStatus Ledger::verify_chain() const {
  std::lock_guard lock(*mu_);
  return abd::verify_chain(entries_);
}

std::size_t Ledger::size() const {
  std::lock_guard lock(*mu_);
  return entries_.size();
}

std::vector<LedgerEntry> Ledger::entries() const {
  std::lock_guard lock(*mu_);
  return entries_;
}

std::vector<LedgerEntry> Ledger::entries(std::uint64_t from, std::uint64_t to) const {
  std::lock_guard lock(*mu_);
  std::vector<LedgerEntry> out;
  for (std::uint64_t i = from; i < to && i < entries_.size(); ++i) out.push_back(entries_[i]);
  return out;
}

std::optional<LedgerEntry> Ledger::entry(std::uint64_t index) const {
  std::lock_guard lock(*mu_);
  if (index >= entries_.size()) return std::nullopt;
  return entries_[index];
}

std::string Ledger::export_jsonl() const {
  std::lock_guard lock(*mu_);
  std::string out;
  for (const auto& e : entries_) out += entry_to_line(e) + "\n";
  return out;
}

Money Ledger::tta_pool_balance() const {
  std::lock_guard lock(*mu_);
  Money b = 0;
  for (const auto& e : entries_) b += e.tta_pool_delta;
  return b;
}

CompensationStatement Ledger::statement(std::string_view artist_id, std::int64_t from_ms, std::int64_t to_ms) const {
  std::lock_guard lock(*mu_);
  CompensationStatement st;
  st.artist_id = std::string(artist_id);
  st.from_ms = from_ms;
  st.to_ms = to_ms;
  for (const auto& e : entries_) {
    if (e.timestamp_ms < from_ms || e.timestamp_ms >= to_ms) continue;
    for (const auto& c : e.payouts) {
      if (c.artist_id != artist_id) continue;
      st.lines.push_back({e.entry_index, c.song_ids, c.weight, c.amount});
      st.total += c.amount;
    }
  }
  return st;
}

std::optional<LedgerEntry> Ledger::distribute_tta_pool(std::int64_t from_ms, std::int64_t to_ms,
                                                       const ConsentSnapshot& snapshot, const Catalogue& catalogue) {
  std::map<std::string, std::vector<SongId>> eligible;
  for (const auto& [id, song] : catalogue.songs()) {
    if (snapshot.check_usage(id, UsageKind::ModelTraining).permitted()) eligible[song.artist_id].push_back(id);
  }
  const Money pool = tta_pool_balance();
  if (eligible.empty() || pool <= 0) return std::nullopt;

  const std::vector<double> shares(eligible.size(), 1.0);
  const auto amounts = largest_remainder(pool, shares);
  EntryDraft d;
  d.kind = EntryKind::TtaDistribution;
  d.snapshot_id = snapshot.id();
  d.tta_pool_delta = -pool;
  d.period = std::make_pair(from_ms, to_ms);
  std::size_t i = 0;
  for (auto& [artist, songs] : eligible) {
    d.payouts.push_back({artist, songs, 1.0 / static_cast<double>(eligible.size()), amounts[i++]});
  }
  return append(std::move(d));
}

}  // namespace abd
