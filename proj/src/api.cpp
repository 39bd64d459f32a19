#include "abd/api.hpp"

#include <httplib.h>

#include <limits>

#include "abd/error.hpp"
#include "abd/json_io.hpp"

namespace abd {

namespace {

using httplib::Request;
using httplib::Response;

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidRequest: return 400;
    case ErrorCode::Unauthorized: return 401;
    case ErrorCode::NotFound: return 404;
    default: return 500;
  }
}

void send(Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(Response& res, int status, std::string_view code, std::string_view message) {
  send(res, status, {{"error", code}, {"message", message}});
}

template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const Request& req, Response& res) {
    try {
      f(req, res);
    } catch (const Error& e) {
      send_error(res, status_for(e.code()), to_string(e.code()), e.what());
    } catch (const Json::exception& e) {
      send_error(res, 400, to_string(ErrorCode::InvalidRequest), e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  };
}

Json body_json(const Request& req) {
  if (req.body.empty()) return Json::object();
  auto j = Json::parse(req.body, nullptr, false);
  if (j.is_discarded()) fail(ErrorCode::InvalidRequest, "request body is not valid JSON");
  return j;
}

template <typename T>
T query_number(const Request& req, const char* key, T fallback) {
  if (!req.has_param(key)) return fallback;
  const auto v = req.get_param_value(key);
  try {
    std::size_t pos = 0;
    long long n = std::stoll(v, &pos);
    if (pos != v.size() || n < 0) throw std::invalid_argument(key);
    return static_cast<T>(n);
  } catch (const std::logic_error&) {
    fail(ErrorCode::InvalidRequest, std::string("bad query parameter ") + key + "=" + v);
  }
}

SongId path_song(const Request& req) {
  try {
    return std::stoll(req.matches[1].str());
  } catch (const std::logic_error&) {
    fail(ErrorCode::InvalidRequest, "bad song id");
  }
}

std::vector<SongId> rejects_of(const Json& body) {
  if (!body.contains("reject")) return {};
  return body.at("reject").get<std::vector<SongId>>();
}

}  // namespace

struct ApiServer::Impl {
  Service& svc;
  httplib::Server server;

  explicit Impl(Service& s) : svc(s) { routes(); }

  void require_admin(const Request& req) const {
    const auto& token = svc.config().admin_token;
    std::string given = req.get_header_value("X-Admin-Token");
    const auto auth = req.get_header_value("Authorization");
    if (given.empty() && auth.rfind("Bearer ", 0) == 0) given = auth.substr(7);
    if (token.empty() || given != token) fail(ErrorCode::Unauthorized, "admin token required");
  }

  void routes() {
    const auto& vocab = svc.catalogue().vocabulary();

    server.Get("/catalogue/roots", guarded([this](const Request&, Response& res) {
      Json roots = Json::array();
      for (const auto& id : svc.catalogue().root_ids()) roots.push_back(to_json(svc.catalogue().node(id)));
      send(res, 200, {{"roots", roots}});
    }));

    server.Get(R"(/catalogue/tree/([^/]+))", guarded([this](const Request& req, Response& res) {
      const auto id = req.matches[1].str();
      const auto& node = svc.catalogue().node(id);
      Json children = Json::array();
      for (const auto& c : svc.catalogue().browse(id)) children.push_back(to_json(c));
      send(res, 200, {{"node", to_json(node)}, {"children", children}});
    }));

    server.Get(R"(/catalogue/songs/(-?\d+))", guarded([this](const Request& req, Response& res) {
      send(res, 200, song_summary(svc.catalogue().get_song(path_song(req))));
    }));

    server.Get("/catalogue/search", guarded([this](const Request& req, Response& res) {
      const auto limit = query_number<std::size_t>(req, "limit", 20);
      Json hits = Json::array();
      for (const auto& h : svc.catalogue().search(req.get_param_value("q"), limit)) {
        hits.push_back(to_json(h, svc.catalogue().get_song(h.song_id)));
      }
      send(res, 200, {{"results", hits}});
    }));

    server.Post("/sessions", guarded([this](const Request& req, Response& res) {
      const auto body = body_json(req);
      std::optional<std::size_t> k;
      if (body.contains("k")) k = body.at("k").get<std::size_t>();
      if (k && *k == 0) fail(ErrorCode::InvalidRequest, "k must be >= 1");
      const auto id = svc.create_session(body.value("user_id", std::string()), prompt_from_json(body.at("prompt")), k);
      send(res, 201, {{"session_id", id}});
    }));

    server.Post(R"(/sessions/([^/]+)/retrieve)", guarded([this](const Request& req, Response& res) {
      const auto r = svc.retrieve(req.matches[1].str(), rejects_of(body_json(req)));
      send(res, 200, to_json(r, svc.catalogue()));
    }));

    server.Post(R"(/sessions/([^/]+)/refine)", guarded([this](const Request& req, Response& res) {
      const auto r = svc.refine(req.matches[1].str(), rejects_of(body_json(req)));
      send(res, 200, to_json(r, svc.catalogue()));
    }));

    server.Post("/verify", guarded([this, &vocab](const Request& req, Response& res) {
      const auto r = svc.verify(request_from_json(body_json(req), vocab));
      Json alts = Json::array();
      for (const auto& a : r.alternatives) alts.push_back(to_json(a));
      send(res, 200, {{"outcome", to_json(r.outcome)},
                      {"fee_quote_minor_units", r.fee_quote},
                      {"currency", svc.config().tariff.currency},
                      {"alternatives", alts}});
    }));

    server.Post("/generate", guarded([this, &vocab](const Request& req, Response& res) {
      const auto r = svc.generate(request_from_json(body_json(req), vocab));
      Json body = {{"outcome", to_json(r.outcome)},
                   {"entry_index", r.entry.entry_index},
                   {"entry_hash", to_hex(r.entry.entry_hash)}};
      if (!r.cleared()) {
        Json alts = Json::array();
        for (const auto& a : r.alternatives) alts.push_back(to_json(a));
        body["status"] = "blocked";
        body["alternatives"] = alts;
        send(res, 403, body);
        return;
      }
      Json weights = Json::object();
      for (const auto& [song, w] : r.contribution_weights) weights[std::to_string(song)] = w;
      Json payouts = Json::array();
      for (const auto& c : r.entry.payouts) {
        payouts.push_back({{"artist_id", c.artist_id}, {"song_ids", c.song_ids}, {"amount_minor_units", c.amount}});
      }
      body["status"] = "generated";
      body["output"] = to_json(*r.output, vocab);
      body["contribution_weights"] = weights;
      body["fee_minor_units"] = r.entry.fee;
      body["currency"] = r.entry.currency;
      body["payouts"] = payouts;
      send(res, 200, body);
    }));

    server.Get(R"(/outputs/([0-9a-f]+)/provenance)", guarded([this](const Request& req, Response& res) {
      auto out = svc.output(req.matches[1].str());
      if (!out) fail(ErrorCode::NotFound, "unknown output " + req.matches[1].str());
      res.status = 200;
      res.set_content(canonical_manifest(out->manifest), "application/json");
    }));

    server.Get(R"(/outputs/([0-9a-f]+))", guarded([this, &vocab](const Request& req, Response& res) {
      auto out = svc.output(req.matches[1].str());
      if (!out) fail(ErrorCode::NotFound, "unknown output " + req.matches[1].str());
      send(res, 200, to_json(*out, vocab));
    }));

    server.Get("/ledger/entries", guarded([this](const Request& req, Response& res) {
      const auto from = query_number<std::uint64_t>(req, "from", 0);
      const auto to = query_number<std::uint64_t>(req, "to", std::numeric_limits<std::uint64_t>::max());
      Json entries = Json::array();
      for (const auto& e : svc.ledger().entries(from, to)) entries.push_back(to_json(e));
      send(res, 200, {{"entries", entries}});
    }));

    server.Get("/ledger/verify", guarded([this](const Request&, Response& res) {
      const auto st = svc.ledger().verify_chain();
      Json body = {{"ok", st.ok}, {"entries", st.entries}};
      if (!st.ok) {
        body["broken_at"] = st.broken_at;
        body["reason"] = st.reason;
      }
      send(res, 200, body);
    }));

    server.Get("/ledger/statement", guarded([this](const Request& req, Response& res) {
      if (!req.has_param("artist")) fail(ErrorCode::InvalidRequest, "artist is required");
      const auto from = query_number<std::int64_t>(req, "from", 0);
      const auto to = query_number<std::int64_t>(req, "to", std::numeric_limits<std::int64_t>::max());
      const auto st = svc.ledger().statement(req.get_param_value("artist"), from, to);
      const auto& currency = svc.config().tariff.currency;
      if (req.get_param_value("format") == "csv") {
        res.status = 200;
        res.set_content(statement_csv(st, currency), "text/csv");
        return;
      }
      send(res, 200, to_json(st, currency));
    }));

    server.Put(R"(/admin/consent/(-?\d+))", guarded([this](const Request& req, Response& res) {
      require_admin(req);
      const auto body = body_json(req);
      const auto [usage, dist] = grants_from_json(body);
      const SongId song = path_song(req);
      const auto version = svc.set_consent(song, usage, dist, body.value("actor_id", std::string("admin")));
      send(res, 200, {{"song_id", song}, {"version", version}});
    }));

    server.Delete(R"(/admin/consent/(-?\d+))", guarded([this](const Request& req, Response& res) {
      require_admin(req);
      const SongId song = path_song(req);
      const auto version = svc.revoke_consent(song, req.get_header_value("X-Actor-Id").empty()
                                                         ? std::string("admin")
                                                         : req.get_header_value("X-Actor-Id"));
      send(res, 200, {{"song_id", song}, {"version", version}, {"revoked", true}});
    }));

    server.Get(R"(/admin/consent/(-?\d+))", guarded([this](const Request& req, Response& res) {
      require_admin(req);
      const SongId song = path_song(req);
      const auto snap = svc.consent().take_snapshot();
      const auto* rec = snap.find(song);
      if (!rec) fail(ErrorCode::NotFound, "no consent record for song " + std::to_string(song));
      send(res, 200, to_json(*rec));
    }));

    server.Post("/admin/tta/distribute", guarded([this](const Request& req, Response& res) {
      require_admin(req);
      const auto from = query_number<std::int64_t>(req, "from", 0);
      const auto to = query_number<std::int64_t>(req, "to", std::numeric_limits<std::int64_t>::max());
      const auto entry = svc.distribute_tta_pool(from, to);
      send(res, 200, entry ? Json{{"distributed", true}, {"entry", to_json(*entry)}}
                           : Json{{"distributed", false}, {"pool_minor_units", svc.ledger().tta_pool_balance()}});
    }));

    server.set_error_handler([](const Request&, Response& res) {
      if (res.body.empty()) send_error(res, res.status, res.status == 404 ? "not-found" : "error", "no such route");
    });
  }
};

ApiServer::ApiServer(Service& service) : impl_(std::make_unique<Impl>(service)) {}
ApiServer::~ApiServer() = default;

int ApiServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = impl_->server.bind_to_any_port(host);
    if (p < 0) fail(ErrorCode::Io, "cannot bind " + host);
    return p;
  }
  if (!impl_->server.bind_to_port(host, port)) fail(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void ApiServer::run() { impl_->server.listen_after_bind(); }
void ApiServer::stop() { impl_->server.stop(); }

}  // namespace abd
