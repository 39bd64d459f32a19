#include "abd/service.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "abd/error.hpp"
#include "abd/json_io.hpp"

namespace abd {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// ServiceConfig

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  std::istringstream is{std::string(value)};
  T v{};
  if (!(is >> v) || !is.eof()) fail(ErrorCode::Config, "bad value for " + std::string(key) + ": " + std::string(value));
  return v;
}

fs::path resolve(const fs::path& base, std::string_view value) {
  fs::path p{std::string(value)};
  if (p.is_relative() && !base.empty()) p = base / p;
  return p;
}

const std::vector<std::string> kConfigKeys{
    "listen_address", "catalogue_path", "consent_path",  "ledger_path",    "output_dir",
    "tariff_private", "tariff_non_commercial",           "tariff_commercial", "royalty_rate",
    "currency",       "blocks",         "embedding_dim", "retrieval_k",    "blend_alpha",
    "hash_algorithm", "admin_token",    "session_idle_seconds",            "hierarchies"};

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

void ServiceConfig::set(std::string_view key, std::string_view raw, const fs::path& base_dir) {
  const std::string value = trim(raw);
  if (key == "listen_address") {
    auto colon = value.rfind(':');
    if (colon == std::string::npos) fail(ErrorCode::Config, "listen_address must be host:port");
    listen_host = value.substr(0, colon);
    listen_port = parse_number<int>(key, value.substr(colon + 1));
  } else if (key == "catalogue_path") {
    catalogue_path = resolve(base_dir, value);
  } else if (key == "consent_path") {
    consent_path = resolve(base_dir, value);
  } else if (key == "ledger_path") {
    ledger_path = resolve(base_dir, value);
  } else if (key == "output_dir") {
    output_dir = resolve(base_dir, value);
  } else if (key == "tariff_private") {
    tariff.prices[0] = parse_number<Money>(key, value);
  } else if (key == "tariff_non_commercial") {
    tariff.prices[1] = parse_number<Money>(key, value);
  } else if (key == "tariff_commercial") {
    tariff.prices[2] = parse_number<Money>(key, value);
  } else if (key == "royalty_rate") {
    tariff.royalty_rate = parse_number<double>(key, value);
  } else if (key == "currency") {
    tariff.currency = value;
  } else if (key == "blocks") {
    blocks = BlockVocabulary::parse(value);
  } else if (key == "embedding_dim") {
    embedding_dim = parse_number<std::size_t>(key, value);
  } else if (key == "retrieval_k") {
    retrieval_k = parse_number<std::size_t>(key, value);
  } else if (key == "blend_alpha") {
    blend_alpha = parse_number<double>(key, value);
  } else if (key == "hash_algorithm") {
    hash_algorithm = value;
  } else if (key == "admin_token") {
    admin_token = value;
  } else if (key == "session_idle_seconds") {
    session_idle_seconds = parse_number<std::int64_t>(key, value);
  } else if (key == "hierarchies") {
    hierarchies.clear();
    std::stringstream ss(value);
    std::string h;
    while (std::getline(ss, h, ',')) {
      if (!trim(h).empty()) hierarchies.push_back(trim(h));
    }
  } else {
    fail(ErrorCode::Config, "unknown config key: " + std::string(key));
  }
}

ServiceConfig ServiceConfig::parse(std::istream& in, const fs::path& base_dir, const EnvLookup& env) {
  ServiceConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos) fail(ErrorCode::Config, "config line " + std::to_string(line_no) + ": expected key=value");
    cfg.set(trim(t.substr(0, eq)), t.substr(eq + 1), base_dir);
  }
  if (env) {
    for (const auto& key : kConfigKeys) {
      std::string var = "ABD_";
      for (char c : key) var.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
      if (auto v = env(var)) cfg.set(key, *v, fs::current_path());
    }
  }
  cfg.validate();
  return cfg;
}

ServiceConfig ServiceConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot read config " + path.string());
  return parse(in, path.parent_path(), [](std::string_view name) -> std::optional<std::string> {
    if (const char* v = std::getenv(std::string(name).c_str())) return std::string(v);
    return std::nullopt;
  });
}

void ServiceConfig::validate() const {
  tariff.validate();
  if (embedding_dim < 8) fail(ErrorCode::Config, "embedding_dim must be >= 8");
  if (retrieval_k == 0) fail(ErrorCode::Config, "retrieval_k must be >= 1");
  if (!(blend_alpha >= 0.0 && blend_alpha <= 1.0)) fail(ErrorCode::Config, "blend_alpha must lie in [0, 1]");
  if (hash_algorithm != kSha256Id) fail(ErrorCode::Config, "unsupported hash_algorithm: " + hash_algorithm);
  if (session_idle_seconds <= 0) fail(ErrorCode::Config, "session_idle_seconds must be positive");
  for (const auto& h : hierarchies) {
    if (h != "genre" && h != "decade") fail(ErrorCode::Config, "unknown hierarchy: " + h);
  }
}

// ---------------------------------------------------------------------------
// Service

std::string derive_request_id(const GenerationRequest& request, const BlockVocabulary& vocab) {
  auto j = to_json(request, vocab);
  j.erase("request_id");
  return "req-" + to_hex(sha256(j.dump())).substr(0, 16);
}

Service::Service(ServiceConfig config, std::shared_ptr<const Catalogue> catalogue, Ledger ledger, Clock clock)
    : config_(std::move(config)),
      clock_(clock ? std::move(clock) : Clock(now_ms)),
      catalogue_(std::move(catalogue)),
      index_(*catalogue_, std::make_shared<HashedTagEncoder>(config_.embedding_dim)),
      verifier_(*catalogue_, index_),
      engine_(*catalogue_, index_, verifier_, config_.blend_alpha),
      registry_([cat = catalogue_](SongId id) { return cat->contains(id); }, clock_),
      ledger_(std::move(ledger)) {
  config_.validate();
  if (!(catalogue_->vocabulary() == config_.blocks)) {
    fail(ErrorCode::Config, "catalogue vocabulary differs from configured blocks");
  }
}

std::unique_ptr<Service> Service::from_config(const ServiceConfig& config, Clock clock) {
  config.validate();
  std::vector<std::shared_ptr<const HierarchyPlugin>> plugins;
  for (const auto& h : config.hierarchies) {
    if (h == "genre") plugins.push_back(std::make_shared<GenreHierarchy>());
    if (h == "decade") plugins.push_back(std::make_shared<DecadeHierarchy>());
  }
  auto catalogue = std::make_shared<Catalogue>(config.blocks, std::move(plugins));
  if (!config.catalogue_path.empty()) {
    std::ifstream in(config.catalogue_path);
    if (!in) fail(ErrorCode::Io, "cannot read catalogue " + config.catalogue_path.string());
    auto report = catalogue->ingest(in);
    for (const auto& d : report.rejected) {
      fail(ErrorCode::InvalidRequest,
           config.catalogue_path.string() + ":" + std::to_string(d.line) + ": " + d.message);
    }
  }
  Ledger ledger = config.ledger_path.empty() ? Ledger(config.tariff.currency, clock)
                                             : Ledger::open(config.ledger_path, config.tariff.currency, clock);
  auto svc = std::make_unique<Service>(config, std::move(catalogue), std::move(ledger), std::move(clock));
  if (!config.consent_path.empty() && fs::exists(config.consent_path)) {
    std::ifstream in(config.consent_path);
    if (!in) fail(ErrorCode::Io, "cannot read consent store " + config.consent_path.string());
    svc->registry_.load(in);
  }
  svc->recover_outputs();
  return svc;
}

// Staged outputs are "<id>.json.pending"; the ledger append is the commit
// point. On start, staged files with a committed entry roll forward and the
// rest are discarded.
void Service::recover_outputs() {
  if (config_.output_dir.empty()) return;
  fs::create_directories(config_.output_dir);
  std::set<std::string> committed;
  for (const auto& e : ledger_.entries()) {
    if (e.kind == EntryKind::Generation) committed.insert(e.output_id);
  }
  for (const auto& item : fs::directory_iterator(config_.output_dir)) {
    const auto path = item.path();
    if (path.extension() != ".pending") continue;
    const auto id = path.stem().stem().string();
    if (committed.count(id)) {
      fs::rename(path, config_.output_dir / (id + ".json"));
    } else {
      fs::remove(path);
    }
  }
  std::lock_guard lock(outputs_mu_);
  for (const auto& id : committed) {
    std::ifstream in(config_.output_dir / (id + ".json"));
    if (!in) fail(ErrorCode::Io, "ledger cites output " + id + " but its file is missing");
    auto out = output_from_json(Json::parse(in), catalogue_->vocabulary());
    outputs_.emplace(id, std::move(out));
  }
}

std::optional<std::string> Service::artist_of(SongId song) const {
  if (const Song* s = catalogue_->find(song)) return s->artist_id;
  return std::nullopt;
}

std::string Service::create_session(std::string user_id, Prompt prompt, std::optional<std::size_t> k) {
  const std::string id = "s-" + std::to_string(++session_counter_);
  UserSession s;
  s.session_id = id;
  s.user_id = std::move(user_id);
  s.retrieval = index_.open_session(id, std::move(prompt), k.value_or(config_.retrieval_k));
  const auto now = clock_();
  s.last_used_ms = now;
  std::lock_guard lock(sessions_mu_);
  purge_idle_sessions_locked(now);
  sessions_.emplace(id, std::move(s));
  return id;
}

void Service::purge_idle_sessions_locked(std::int64_t now) {
  const std::int64_t ttl = config_.session_idle_seconds * 1000;
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    it = (now - it->second.last_used_ms > ttl) ? sessions_.erase(it) : std::next(it);
  }
}

RankResult Service::run_retrieval(std::string_view session_id, const std::vector<SongId>& reject, bool refine) {
  const auto now = clock_();
  std::lock_guard lock(sessions_mu_);
  purge_idle_sessions_locked(now);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) fail(ErrorCode::NotFound, "unknown or expired session " + std::string(session_id));
  auto& s = it->second;
  s.last_used_ms = now;
  for (SongId id : reject) index_.reject(s.retrieval, id);
  return refine ? index_.refine(s.retrieval) : index_.rank_top_k(s.retrieval);
}

RankResult Service::retrieve(std::string_view session_id, const std::vector<SongId>& reject) {
  return run_retrieval(session_id, reject, false);
}

RankResult Service::refine(std::string_view session_id, const std::vector<SongId>& reject) {
  return run_retrieval(session_id, reject, true);
}

std::size_t Service::session_count() const {
  std::lock_guard lock(sessions_mu_);
  return sessions_.size();
}

VerifyResult Service::verify(const GenerationRequest& request) const {
  const auto snapshot = registry_.take_snapshot();
  VerifyResult r;
  r.outcome = verifier_.verify(request, snapshot);
  r.fee_quote = r.outcome.cleared() ? compute_fee(request.intended_use, config_.tariff) : 0;
  if (!r.outcome.cleared()) {
    r.alternatives = verifier_.recommend_alternatives(request, r.outcome, snapshot, config_.retrieval_k);
  }
  return r;
}

GenerateResult Service::generate(GenerationRequest request) {
  const auto& vocab = catalogue_->vocabulary();
  validate_request(request, *catalogue_);
  if (request.request_id.empty()) request.request_id = derive_request_id(request, vocab);

  const ConsentSnapshot snapshot = registry_.take_snapshot();
  GenerateResult result;
  result.outcome = verifier_.verify(request, snapshot);
  const std::string verification_digest = to_hex(sha256(to_json(result.outcome).dump()));

  if (!result.outcome.cleared()) {
    result.alternatives = verifier_.recommend_alternatives(request, result.outcome, snapshot, config_.retrieval_k);
    EntryDraft d;
    d.kind = EntryKind::Blocked;
    d.request_id = request.request_id;
    d.snapshot_id = snapshot.id();
    d.verification_digest = verification_digest;
    result.entry = ledger_.append(std::move(d));
    return result;
  }

  CatalogueSongSource songs(*catalogue_);
  GenerationOutput output = engine_.generate(request, snapshot, songs);
  result.contribution_weights = contribution_weights(output.manifest, vocab);
  const Money fee = compute_fee(request.intended_use, config_.tariff);
  const Allocation alloc = allocate(fee, result.contribution_weights, output.manifest.attributed_fraction,
                                    config_.tariff, [this](SongId id) { return artist_of(id); });

  EntryDraft d;
  d.kind = EntryKind::Generation;
  d.request_id = request.request_id;
  d.snapshot_id = snapshot.id();
  d.verification_digest = verification_digest;
  d.manifest_digest = to_hex(sha256(canonical_manifest(output.manifest)));
  d.output_id = output.output_id;
  d.fee = fee;
  d.payouts = alloc.credits;
  d.tta_pool_delta = alloc.tta_pool_delta;
  d.platform_delta = alloc.platform_delta;

  std::lock_guard commit(commit_mu_);
  fs::path staged, final_path;
  if (!config_.output_dir.empty()) {
    final_path = config_.output_dir / (output.output_id + ".json");
    staged = config_.output_dir / (output.output_id + ".json.pending");
    std::ofstream out(staged, std::ios::binary | std::ios::trunc);
    out << to_json(output, vocab).dump();
    out.flush();
    if (!out) fail(ErrorCode::Io, "failed to stage output " + staged.string());
  }

  const std::size_t before = ledger_.size();
  auto publish = [&] {
    if (!staged.empty()) fs::rename(staged, final_path);
    std::lock_guard lock(outputs_mu_);
    outputs_.insert_or_assign(output.output_id, output);
  };
  try {
    if (fault_) fault_("before-append");
    result.entry = ledger_.append(std::move(d));
  } catch (...) {
    auto last = ledger_.size() > before ? ledger_.entry(before) : std::nullopt;
    if (last && last->output_id == output.output_id) {
      publish();
    } else if (!staged.empty()) {
      std::error_code ec;
      fs::remove(staged, ec);
    }
    throw;
  }
  publish();
  result.output = std::move(output);
  return result;
}

std::optional<GenerationOutput> Service::output(std::string_view output_id) const {
  std::lock_guard lock(outputs_mu_);
  auto it = outputs_.find(output_id);
  if (it == outputs_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> Service::output_ids() const {
  std::lock_guard lock(outputs_mu_);
  std::vector<std::string> ids;
  for (const auto& [id, out] : outputs_) ids.push_back(id);
  return ids;
}

void Service::persist_consent_event(const std::string& line) {
  if (config_.consent_path.empty()) return;
  std::lock_guard lock(consent_file_mu_);
  std::ofstream out(config_.consent_path, std::ios::app);
  out << line << '\n';
  out.flush();
  if (!out) fail(ErrorCode::Io, "failed to persist consent event to " + config_.consent_path.string());
}

std::uint64_t Service::set_consent(SongId song, const UsageGrants& usage, const DistributionGrants& distribution,
                                   std::string_view actor_id) {
  const auto v = registry_.set_consent(song, usage, distribution, actor_id);
  persist_consent_event(format_consent_event(song, usage, distribution, actor_id));
  return v;
}

std::uint64_t Service::revoke_consent(SongId song, std::string_view actor_id) {
  const auto v = registry_.revoke(song, actor_id);
  persist_consent_event(format_revoke_event(song, actor_id));
  return v;
}

std::optional<LedgerEntry> Service::distribute_tta_pool(std::int64_t from_ms, std::int64_t to_ms) {
  std::lock_guard commit(commit_mu_);
  return ledger_.distribute_tta_pool(from_ms, to_ms, registry_.take_snapshot(), *catalogue_);
}

}  // namespace abd
