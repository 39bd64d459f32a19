// abd: administration CLI for the attribution-by-design service.
//
// Exit codes: 0 success, 1 validation failure, 2 I/O or configuration error.

#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>

#include "abd/api.hpp"
#include "abd/error.hpp"
#include "abd/json_io.hpp"
#include "abd/service.hpp"

namespace fs = std::filesystem;
using namespace abd;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kIo = 2;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::Io:
    case ErrorCode::Config: return kIo;
    default: return kValidation;
  }
}

struct Options {
  std::string config;
  std::string catalogue;
  std::string consent;
  std::string artist;
  std::int64_t from = 0;
  std::int64_t to = std::numeric_limits<std::int64_t>::max();
  std::uint64_t seed = 7;
  std::string format = "text";
  SongId song = 0;
  SongId song_a = 17189;
  SongId song_b = 17194;
  std::string actor = "cli";
};

ServiceConfig load_config(const Options& o) {
  ServiceConfig cfg = o.config.empty() ? ServiceConfig{} : ServiceConfig::load(o.config);
  if (!o.catalogue.empty()) cfg.catalogue_path = o.catalogue;
  cfg.validate();
  return cfg;
}

Catalogue load_catalogue(const ServiceConfig& cfg, IngestReport& report) {
  if (cfg.catalogue_path.empty()) fail(ErrorCode::Config, "no catalogue given (--catalogue or catalogue_path)");
  std::ifstream in(cfg.catalogue_path);
  if (!in) fail(ErrorCode::Io, "cannot read " + cfg.catalogue_path.string());
  Catalogue cat(cfg.blocks, {std::make_shared<GenreHierarchy>()});
  report = cat.ingest(in);
  return cat;
}

void append_lines(const fs::path& path, const std::vector<std::string>& lines) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  for (const auto& l : lines) out << l << '\n';
  out.flush();
  if (!out) fail(ErrorCode::Io, "failed to write " + path.string());
}

int cmd_ingest(const Options& o) {
  const auto cfg = load_config(o);
  IngestReport report;
  load_catalogue(cfg, report);
  std::cout << "loaded " << report.loaded << " songs\n";
  for (const auto& d : report.rejected) {
    std::cerr << cfg.catalogue_path.string() << ":" << d.line << ": " << d.message << "\n";
  }
  return report.rejected.empty() ? kOk : kValidation;
}

// Validates a consent fixture against the catalogue, then appends it to the
// configured consent store.
int cmd_consent_load(const Options& o) {
  const auto cfg = load_config(o);
  if (o.consent.empty()) fail(ErrorCode::InvalidRequest, "--consent is required");
  IngestReport report;
  auto cat = load_catalogue(cfg, report);

  std::ifstream in(o.consent);
  if (!in) fail(ErrorCode::Io, "cannot read " + o.consent);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) lines.push_back(line);
  }
  ConsentRegistry registry([&](SongId id) { return cat.contains(id); });
  if (!cfg.consent_path.empty() && fs::exists(cfg.consent_path) && fs::absolute(cfg.consent_path) != fs::absolute(o.consent)) {
    std::ifstream store(cfg.consent_path);
    registry.load(store);
  }
  std::stringstream fixture;
  for (const auto& l : lines) fixture << l << '\n';
  const auto applied = registry.load(fixture);

  if (!cfg.consent_path.empty() && fs::absolute(cfg.consent_path) != fs::absolute(o.consent)) {
    append_lines(cfg.consent_path, lines);
    std::cout << "applied " << applied << " consent events to " << cfg.consent_path.string() << "\n";
  } else {
    std::cout << "validated " << applied << " consent events\n";
  }
  return kOk;
}

int cmd_consent_revoke(const Options& o) {
  const auto cfg = load_config(o);
  if (cfg.consent_path.empty()) fail(ErrorCode::Config, "consent_path is not configured");
  IngestReport report;
  auto cat = load_catalogue(cfg, report);
  ConsentRegistry registry([&](SongId id) { return cat.contains(id); });
  if (fs::exists(cfg.consent_path)) {
    std::ifstream store(cfg.consent_path);
    registry.load(store);
  }
  const auto version = registry.revoke(o.song, o.actor);
  append_lines(cfg.consent_path, {format_revoke_event(o.song, o.actor)});
  std::cout << "revoked song " << o.song << " (version " << version << ")\n";
  return kOk;
}

ApiServer* g_server = nullptr;

int cmd_serve(const Options& o) {
  const auto cfg = load_config(o);
  auto svc = Service::from_config(cfg);
  ApiServer server(*svc);
  const int port = server.bind(cfg.listen_host, cfg.listen_port);
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->stop();
  });
  std::cout << "listening on " << cfg.listen_host << ":" << port << " (" << svc->catalogue().size() << " songs, "
            << svc->ledger().size() << " ledger entries)" << std::endl;
  server.run();
  g_server = nullptr;
  return kOk;
}

int cmd_verify_ledger(const Options& o) {
  const auto cfg = load_config(o);
  if (cfg.ledger_path.empty()) fail(ErrorCode::Config, "ledger_path is not configured");
  std::ifstream in(cfg.ledger_path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot read " + cfg.ledger_path.string());
  const auto st = verify_jsonl(in);
  if (st.ok) {
    std::cout << "OK at " << st.entries << " entries\n";
    return kOk;
  }
  std::cout << "BROKEN at entry " << st.broken_at << ": " << st.reason << "\n";
  return kValidation;
}

int cmd_statement(const Options& o) {
  const auto cfg = load_config(o);
  if (o.artist.empty()) fail(ErrorCode::InvalidRequest, "--artist is required");
  if (cfg.ledger_path.empty()) fail(ErrorCode::Config, "ledger_path is not configured");
  if (!fs::exists(cfg.ledger_path)) fail(ErrorCode::Io, "no ledger at " + cfg.ledger_path.string());
  const auto ledger = Ledger::open(cfg.ledger_path, cfg.tariff.currency);
  const auto st = ledger.statement(o.artist, o.from, o.to);
  const auto& currency = cfg.tariff.currency;
  if (o.format == "csv") {
    std::cout << statement_csv(st, currency);
  } else if (o.format == "json") {
    std::cout << to_json(st, currency).dump(2) << "\n";
  } else {
    std::cout << "Statement for " << st.artist_id << "\n";
    for (const auto& l : st.lines) {
      std::cout << "  entry " << l.entry_index << "  songs";
      for (auto id : l.song_ids) std::cout << " " << id;
      std::cout << "  weight " << std::setprecision(6) << l.weight << "  " << l.amount << " " << currency << "\n";
    }
    std::cout << "Total: " << st.total << " " << currency << " (minor units)\n";
  }
  return kOk;
}

// Two references with function-block control at parameter level, for
// non-commercial distribution.
int cmd_demo(const Options& o) {
  const auto cfg = load_config(o);
  auto svc = Service::from_config(cfg);

  GenerationRequest req;
  req.user_id = "demo";
  req.level = ControlLevel::ParameterLevel;
  req.intended_use = IntendedUse::NonCommercialDistribution;
  req.seed = o.seed;
  req.selections = {{o.song_a, {"timbre.guitar", "timbre.voice"}, 1.0, std::nullopt},
                    {o.song_b, {"timbre.voice"}, 1.0, std::nullopt}};
  req.request_id = "demo-" + std::to_string(o.song_a) + "-" + std::to_string(o.song_b) + "-" + std::to_string(o.seed);

  const auto r = svc->generate(req);
  if (o.format == "json") {
    Json j = {{"outcome", to_json(r.outcome)}, {"entry", to_json(r.entry)}};
    if (r.output) j["manifest"] = to_json(r.output->manifest), j["output_id"] = r.output->output_id;
    Json alts = Json::array();
    for (const auto& a : r.alternatives) alts.push_back(to_json(a));
    j["alternatives"] = alts;
    std::cout << j.dump(2) << "\n";
    return r.cleared() ? kOk : kValidation;
  }

  std::cout << "Verdict: " << to_string(r.outcome.verdict) << " (snapshot " << r.outcome.snapshot_id << ")\n";
  if (!r.cleared()) {
    for (const auto& d : r.outcome.denials()) {
      std::cout << "  song " << d.song_id << " denied on " << d.check << ": " << to_string(d.reason) << "\n";
    }
    for (const auto& a : r.alternatives) {
      std::cout << "  alternatives for " << a.blocked_song_id << ":";
      if (a.no_compliant_alternative) std::cout << " none (no-compliant-alternative)";
      for (const auto& c : a.candidates) std::cout << " " << c.song_id;
      std::cout << "\n";
    }
    std::cout << "Ledger entry " << r.entry.entry_index << " (blocked, fee 0)\n";
    return kValidation;
  }
  const auto& m = r.output->manifest;
  std::cout << "Output " << r.output->output_id << "\n";
  for (const auto& a : m.assignments) {
    std::cout << "  " << std::left << std::setw(16) << a.block << to_string(a.origin);
    for (const auto& c : a.contributors) std::cout << " " << c.song_id << "@" << c.weight;
    std::cout << "\n";
  }
  std::cout << "Attributed fraction: " << m.attributed_fraction << "\n";
  std::cout << "Contribution weights:";
  for (const auto& [song, w] : r.contribution_weights) std::cout << " " << song << "=" << w;
  std::cout << "\nFee: " << r.entry.fee << " " << r.entry.currency << "; payouts:";
  for (const auto& c : r.entry.payouts) std::cout << " " << c.artist_id << "=" << c.amount;
  std::cout << "; training pool +" << r.entry.tta_pool_delta << "; platform +" << r.entry.platform_delta << "\n";
  std::cout << "Ledger entry " << r.entry.entry_index << " " << to_hex(r.entry.entry_hash) << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attribution-by-design music generation service"};
  app.require_subcommand(1);
  Options o;

  auto with_config = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Service configuration file");
    sub->add_option("--catalogue", o.catalogue, "Catalogue JSON-lines file (overrides config)");
  };

  auto* ingest = app.add_subcommand("ingest", "Validate a catalogue file");
  with_config(ingest);

  auto* consent_load = app.add_subcommand("consent-load", "Validate a consent fixture and append it to the store");
  with_config(consent_load);
  consent_load->add_option("--consent", o.consent, "Consent JSON-lines fixture")->required();

  auto* revoke = app.add_subcommand("consent-revoke", "Revoke consent for one song");
  with_config(revoke);
  revoke->add_option("song_id", o.song, "Song id")->required();
  revoke->add_option("--actor", o.actor, "Actor recorded in the audit trail");

  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  with_config(serve);

  auto* verify = app.add_subcommand("verify-ledger", "Check the ledger hash chain and conservation");
  with_config(verify);

  auto* statement = app.add_subcommand("statement", "Per-artist compensation statement");
  with_config(statement);
  statement->add_option("--artist", o.artist, "Artist id")->required();
  statement->add_option("--from", o.from, "Period start, ms since epoch (inclusive)");
  statement->add_option("--to", o.to, "Period end, ms since epoch (exclusive)");
  statement->add_option("--format", o.format, "text, csv or json")->check(CLI::IsMember({"text", "csv", "json"}));

  auto* demo = app.add_subcommand("demo", "Run a two-reference parameter-level generation");
  with_config(demo);
  demo->add_option("--seed", o.seed, "Generation seed");
  demo->add_option("--song-a", o.song_a, "First reference (guitar and voice timbre)");
  demo->add_option("--song-b", o.song_b, "Second reference (voice timbre)");
  demo->add_option("--format", o.format, "text or json")->check(CLI::IsMember({"text", "json"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kValidation;
  }

  try {
    if (*ingest) return cmd_ingest(o);
    if (*consent_load) return cmd_consent_load(o);
    if (*revoke) return cmd_consent_revoke(o);
    if (*serve) return cmd_serve(o);
    if (*verify) return cmd_verify_ledger(o);
    if (*statement) return cmd_statement(o);
    if (*demo) return cmd_demo(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  }
  return kOk;
}
