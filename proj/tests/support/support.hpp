#pragma once

// Fixtures, random generators and independent oracles shared by the unit
// and acceptance tests. The oracles deliberately avoid calling into the
// library for the quantity they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "abd/catalogue.hpp"
#include "abd/consent.hpp"
#include "abd/generation.hpp"
#include "abd/ledger.hpp"
#include "abd/retrieval.hpp"
#include "abd/service.hpp"
#include "abd/verification.hpp"

#ifndef ABD_DATA_DIR
#error "ABD_DATA_DIR must point at the fixture directory"
#endif

namespace abd::testsupport {

inline std::filesystem::path data_path(const std::string& name) {
  return std::filesystem::path(ABD_DATA_DIR) / name;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::shared_ptr<Catalogue> fixture_catalogue() {
  auto cat = std::make_shared<Catalogue>(BlockVocabulary::defaults());
  std::ifstream in(data_path("catalogue.jsonl"));
  auto report = cat->ingest(in);
  if (!report.rejected.empty() || report.loaded != 4) throw std::runtime_error("fixture catalogue failed to load");
  return cat;
}

inline void load_fixture_consent(ConsentRegistry& registry) {
  std::ifstream in(data_path("consent.jsonl"));
  registry.load(in);
}

/// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  TempDir() {
    static std::uint64_t counter = 0;
    std::random_device rd;
    path = std::filesystem::temp_directory_path() /
           ("abd-test-" + std::to_string(rd()) + "-" + std::to_string(++counter));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

// ---------------------------------------------------------------------------
// Random data

inline const std::vector<std::string>& word_pool() {
  static const std::vector<std::string> words = [] {
    std::vector<std::string> w{"rock",   "jazz",    "punk",   "calm",     "piano",  "guitar", "evening",
                               "drums",  "fusion",  "upbeat", "dark",     "bright", "vocal",  "strings",
                               "summer", "rainy",   "party",  "lofi",     "brass",  "choir",  "ambient",
                               "techno", "country", "blues",  "folk",     "metal",  "soul",   "funk",
                               "disco",  "reggae",  "latin",  "organ",    "synth",  "bass",   "violin",
                               "cello",  "harp",    "flute",  "trumpet",  "sax",    "happy",  "sad",
                               "angry",  "relaxed", "tense",  "romantic", "epic",   "quiet",  "loud"};
    for (int i = 0; i < 150; ++i) w.push_back("tag" + std::to_string(i));
    return w;
  }();
  return words;
}

inline std::string pick(std::mt19937_64& rng, const std::vector<std::string>& v) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

inline FeatureTrack random_track(std::mt19937_64& rng, const BlockVocabulary& vocab, std::size_t frames,
                                 std::int64_t frame_ms = 500) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  FeatureTrack t;
  t.frame_duration_ms = frame_ms;
  for (std::size_t f = 0; f < frames; ++f) {
    Frame fr;
    for (const auto& b : vocab.entries()) {
      std::vector<double> v(b.dim);
      for (auto& x : v) x = u(rng);
      fr.blocks.push_back(std::move(v));
    }
    t.frames.push_back(std::move(fr));
  }
  return t;
}

inline Song random_song(std::mt19937_64& rng, SongId id, const BlockVocabulary& vocab, std::size_t min_frames,
                        std::size_t max_frames, std::size_t artists) {
  static const std::vector<std::string> genres{"rock", "jazz", "pop", "electronic", "classical", "folk"};
  static const std::vector<std::string> sub{"indie", "fusion", "punk", "cool", "baroque", "ambient", "acoustic"};
  const auto& words = word_pool();
  Song s;
  s.song_id = id;
  const auto artist = std::uniform_int_distribution<std::size_t>(0, artists - 1)(rng);
  s.artist_id = "artist-" + std::to_string(artist);
  s.artist_name = "Artist " + pick(rng, words) + " " + std::to_string(artist);
  s.title = pick(rng, words) + " " + pick(rng, words);
  s.album = pick(rng, words) + " album";
  s.genre_path = {pick(rng, genres), pick(rng, sub)};
  const auto ntags = std::uniform_int_distribution<int>(1, 6)(rng);
  std::set<std::string> tags;
  for (int i = 0; i < ntags; ++i) tags.insert(pick(rng, words));
  s.tags.assign(tags.begin(), tags.end());
  s.release_year = std::uniform_int_distribution<int>(1950, 2024)(rng);
  s.feature_track = random_track(rng, vocab, std::uniform_int_distribution<std::size_t>(min_frames, max_frames)(rng));
  return s;
}

inline std::shared_ptr<Catalogue> random_catalogue(std::mt19937_64& rng, std::size_t n, const BlockVocabulary& vocab,
                                                   std::size_t min_frames = 1, std::size_t max_frames = 2,
                                                   std::size_t artists = 50) {
  auto cat = std::make_shared<Catalogue>(vocab);
  std::set<SongId> ids;
  std::uniform_int_distribution<SongId> idd(1, 1'000'000);
  while (ids.size() < n) ids.insert(idd(rng));
  // Built through ingest so add_song's per-insert hierarchy rebuild is avoided.
  std::stringstream ss;
  for (SongId id : ids) ss << format_song_record(random_song(rng, id, vocab, min_frames, max_frames, artists), vocab) << '\n';
  cat->ingest(ss);
  return cat;
}

inline BlockVocabulary small_vocabulary() { return BlockVocabulary::parse("genre:2,mood:2,melody:3"); }

inline Prompt random_prompt(std::mt19937_64& rng) {
  const auto& words = word_pool();
  if (std::bernoulli_distribution(0.5)(rng)) {
    std::string text;
    const auto n = std::uniform_int_distribution<int>(1, 4)(rng);
    for (int i = 0; i < n; ++i) text += (i ? " " : "") + pick(rng, words);
    return Prompt::free_text(text);
  }
  static const std::vector<std::string> keys{"genre", "instruments", "vocalist", "mood", "situation", "function"};
  std::map<std::string, std::vector<std::string>> cats;
  const auto n = std::uniform_int_distribution<int>(1, 3)(rng);
  for (int i = 0; i < n; ++i) cats[pick(rng, keys)].push_back(pick(rng, words));
  return Prompt::from_categories(cats);
}

inline UsageGrants random_usage(std::mt19937_64& rng, double p = 0.7) {
  std::bernoulli_distribution b(p);
  return {b(rng), b(rng), b(rng), b(rng)};
}

inline DistributionGrants random_distribution(std::mt19937_64& rng, double p = 0.7) {
  std::bernoulli_distribution b(p);
  return {b(rng), b(rng), b(rng)};
}

// ---------------------------------------------------------------------------
// Oracles

namespace oracle {

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::vector<std::string> words_of(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) && c < 128) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline std::vector<double> embed(const std::vector<std::string>& tags, std::size_t dim) {
  std::vector<double> v(dim, 0.0);
  for (const auto& t : tags) {
    if (!t.empty()) v[fnv1a(t) % dim] += 1.0;
  }
  double sq = 0.0;
  for (double x : v) sq += x * x;
  if (sq > 0.0) {
    const double n = std::sqrt(sq);
    for (double& x : v) x /= n;
  }
  return v;
}

inline std::string lower_trim(std::string s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  s = s.substr(b);
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

/// Tag set of a song: tags, genre labels and artist-name words.
inline std::vector<std::string> song_tags(const Song& s) {
  std::set<std::string> out;
  for (const auto& t : s.tags) out.insert(lower_trim(t));
  for (const auto& g : s.genre_path) out.insert(lower_trim(g));
  for (const auto& w : words_of(s.artist_name)) out.insert(w);
  out.erase("");
  return {out.begin(), out.end()};
}

inline std::vector<std::string> prompt_tags(const Prompt& p) {
  if (p.kind == PromptKind::FreeText) return words_of(p.text);
  std::vector<std::string> out;
  for (const auto& [k, labels] : p.categories) {
    for (const auto& l : labels) {
      auto t = lower_trim(l);
      if (!t.empty()) out.push_back(t);
    }
  }
  return out;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  double c = ab / (std::sqrt(aa) * std::sqrt(bb));
  return c > 1.0 ? 1.0 : (c < -1.0 ? -1.0 : c);
}

/// Exhaustive ranking: score descending, then id ascending.
inline std::vector<ScoredSong> rank_all(const Catalogue& cat, const std::vector<double>& query, std::size_t dim,
                                        const std::set<SongId>& excluded = {}) {
  std::vector<ScoredSong> all;
  for (const auto& [id, s] : cat.songs()) {
    if (excluded.count(id)) continue;
    all.push_back({id, cosine(query, embed(song_tags(s), dim))});
  }
  std::stable_sort(all.begin(), all.end(), [](const ScoredSong& a, const ScoredSong& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.song_id < b.song_id;
  });
  return all;
}

/// rank_all with song embeddings computed once per catalogue.
struct CachedRanking {
  std::vector<std::pair<SongId, std::vector<double>>> songs;

  CachedRanking(const Catalogue& cat, std::size_t dim) {
    for (const auto& [id, s] : cat.songs()) songs.emplace_back(id, embed(song_tags(s), dim));
  }

  std::vector<ScoredSong> rank(const std::vector<double>& query, const std::set<SongId>& excluded,
                               std::size_t k) const {
    std::vector<ScoredSong> all;
    for (const auto& [id, e] : songs) {
      if (!excluded.count(id)) all.push_back({id, cosine(query, e)});
    }
    std::stable_sort(all.begin(), all.end(), [](const ScoredSong& a, const ScoredSong& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.song_id < b.song_id;
    });
    if (all.size() > k) all.resize(k);
    return all;
  }
};

/// Brute-force lexical search: exact < prefix < substring per field; first
/// field reaching the best grade wins (title, artist, album, tags).
inline std::vector<SearchHit> search(const Catalogue& cat, const std::string& query, std::size_t limit) {
  std::string q = query;
  for (auto& c : q) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (q.empty()) return {};
  auto lower = [](std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
  };
  struct Row {
    int grade;
    SongId id;
    MatchField field;
  };
  std::vector<Row> rows;
  for (const auto& [id, s] : cat.songs()) {
    std::vector<std::pair<std::string, MatchField>> fields{
        {s.title, MatchField::Title}, {s.artist_name, MatchField::Artist}, {s.album, MatchField::Album}};
    for (const auto& t : s.tags) fields.emplace_back(t, MatchField::Tag);
    int best = 99;
    MatchField bf = MatchField::Title;
    for (const auto& [text, f] : fields) {
      const auto l = lower(text);
      int g = 99;
      if (l == q) {
        g = 0;
      } else if (l.size() > q.size() && l.compare(0, q.size(), q) == 0) {
        g = 1;
      } else if (l.find(q) != std::string::npos) {
        g = 2;
      }
      if (g < best) {
        best = g;
        bf = f;
      }
    }
    if (best != 99) rows.push_back({best, id, bf});
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return a.grade != b.grade ? a.grade < b.grade : a.id < b.id;
  });
  std::vector<SearchHit> out;
  for (std::size_t i = 0; i < rows.size() && i < limit; ++i) out.push_back({rows[i].id, rows[i].field});
  return out;
}

/// Recomputes one attributed block at frame t from the manifest alone:
/// Σ w_c · ref_c[t mod len_c], contributors in manifest order, restricted to
/// contributors whose segment contains t at temporal level (weights
/// renormalised over those).
inline std::optional<std::vector<double>> recombine_block(const ProvenanceManifest& m, const BlockAssignment& a,
                                                          std::size_t block_index, std::size_t t,
                                                          const Catalogue& cat) {
  std::vector<std::pair<double, const std::vector<double>*>> terms;
  double total = 0.0;
  for (const auto& c : a.contributors) {
    if (m.level == ControlLevel::TemporalLevel && !(c.segment && c.segment->contains(t))) continue;
    const auto& frames = cat.get_song(c.song_id).feature_track.frames;
    terms.emplace_back(c.weight, &frames[t % frames.size()].blocks[block_index]);
    total += c.weight;
  }
  if (terms.empty()) return std::nullopt;
  if (terms.size() != a.contributors.size()) {
    for (auto& [w, _] : terms) w /= total;
  }
  std::vector<double> out(terms.front().second->size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = terms.front().first * (*terms.front().second)[i];
  for (std::size_t c = 1; c < terms.size(); ++c) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += terms[c].first * (*terms[c].second)[i];
  }
  return out;
}

inline bool bytes_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

struct RecombinationReport {
  std::size_t checked_blocks = 0;
  std::size_t violations = 0;
  std::string first_violation;
};

/// Checks every attributed block of `out` against the manifest. At audio
/// levels, user-material blocks and inactive temporal frames must equal the
/// user track; mix mode blends with alpha from the manifest.
inline RecombinationReport check_output(const GenerationOutput& out, const Catalogue& cat,
                                        const std::optional<FeatureTrack>& user_track) {
  RecombinationReport r;
  const auto& m = out.manifest;
  const bool audio = m.level == ControlLevel::AudioLevel || m.level == ControlLevel::TemporalLevel;
  auto violation = [&](const std::string& what) {
    if (r.violations++ == 0) r.first_violation = what;
  };
  for (std::size_t b = 0; b < m.assignments.size(); ++b) {
    const auto& a = m.assignments[b];
    for (std::size_t t = 0; t < out.feature_track.size(); ++t) {
      const auto& got = out.feature_track.frames[t].blocks[b];
      if (a.origin != Origin::Attributed) {
        if (audio && !bytes_equal(got, user_track->frames[t].blocks[b])) {
          violation("user material changed at block " + a.block + " frame " + std::to_string(t));
        }
        continue;
      }
      ++r.checked_blocks;
      auto mix = recombine_block(m, a, b, t, cat);
      if (!mix) {
        if (!audio || !bytes_equal(got, user_track->frames[t].blocks[b])) {
          violation("frame outside segments changed at block " + a.block + " frame " + std::to_string(t));
        }
        continue;
      }
      std::vector<double> expected = *mix;
      if (audio && m.blend_mode == BlendMode::Mix) {
        const auto& u = user_track->frames[t].blocks[b];
        for (std::size_t i = 0; i < expected.size(); ++i) {
          expected[i] = (1.0 - m.blend_alpha) * u[i] + m.blend_alpha * (*mix)[i];
        }
      }
      if (!bytes_equal(got, expected)) violation("block " + a.block + " frame " + std::to_string(t) + " differs");
    }
  }
  return r;
}

}  // namespace oracle

/// Records which songs' feature data was fetched.
class RecordingSource final : public SongSource {
 public:
  explicit RecordingSource(const Catalogue& cat) : cat_(cat) {}
  const Song& fetch(SongId id) const override {
    reads_.insert(id);
    return cat_.get_song(id);
  }
  const std::set<SongId>& reads() const { return reads_; }

 private:
  const Catalogue& cat_;
  mutable std::set<SongId> reads_;
};

/// Random structurally valid request over `cat` at `level`. Songs are drawn
/// from `eligible` so the caller can make it clear.
inline GenerationRequest random_request(std::mt19937_64& rng, const Catalogue& cat, ControlLevel level,
                                        const std::vector<SongId>& eligible, IntendedUse use) {
  const auto& vocab = cat.vocabulary();
  GenerationRequest r;
  r.request_id = "r-" + std::to_string(rng());
  r.user_id = "u";
  r.level = level;
  r.intended_use = use;
  r.seed = rng();
  const auto n = std::uniform_int_distribution<std::size_t>(1, std::min<std::size_t>(3, eligible.size()))(rng);
  std::vector<SongId> pool = eligible;
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(n);

  std::size_t user_len = 0;
  if (level == ControlLevel::AudioLevel || level == ControlLevel::TemporalLevel) {
    std::size_t min_ref = SIZE_MAX;
    for (SongId id : pool) min_ref = std::min(min_ref, cat.get_song(id).feature_track.size());
    user_len = std::uniform_int_distribution<std::size_t>(std::max<std::size_t>(2, min_ref / 2), min_ref + 4)(rng);
    r.user_track = random_track(rng, vocab, user_len);
    r.blend_mode = std::bernoulli_distribution(0.5)(rng) ? BlendMode::Mix : BlendMode::Replace;
    if (r.blend_mode == BlendMode::Mix) r.blend_alpha = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  }
  for (SongId id : pool) {
    ReferenceSelection s;
    s.song_id = id;
    s.weight = std::uniform_real_distribution<double>(0.1, 3.0)(rng);
    if (level != ControlLevel::SongLevel) {
      const auto nb = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
      for (std::size_t i = 0; i < nb; ++i) {
        s.function_blocks.insert(vocab.at(std::uniform_int_distribution<std::size_t>(0, vocab.size() - 1)(rng)).name);
      }
    }
    if (level == ControlLevel::TemporalLevel) {
      const std::size_t limit = std::min(user_len, cat.get_song(id).feature_track.size());
      const auto start = std::uniform_int_distribution<std::size_t>(0, limit - 1)(rng);
      const auto end = std::uniform_int_distribution<std::size_t>(start + 1, limit)(rng);
      s.segment = Segment{start, end};
    }
    r.selections.push_back(std::move(s));
  }
  if (level == ControlLevel::ParameterLevel && std::bernoulli_distribution(0.3)(rng)) {
    r.unspecified_policy = UnspecifiedPolicy::Procedural;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Ledger mutation sweep

struct MutationReport {
  std::size_t mutations = 0;
  std::size_t undetected = 0;
  std::string first_undetected;
};

// Applies every (position, xor delta) single-byte mutation to a JSON-lines
// ledger and checks that chain verification rejects it. Lines before the
// mutated one are byte-identical to the original, so verification resumes
// from the verifier state after that prefix instead of re-reading it.
inline MutationReport mutation_sweep(const std::string& text, const std::vector<unsigned char>& deltas) {
  std::vector<std::size_t> starts;
  std::vector<JsonlChainVerifier> prefix{JsonlChainVerifier{}};
  for (std::size_t pos = 0; pos < text.size();) {
    starts.push_back(pos);
    const auto nl = text.find('\n', pos);
    const auto end = nl == std::string::npos ? text.size() : nl;
    prefix.push_back(prefix.back());
    prefix.back().feed(std::string_view(text).substr(pos, end - pos));
    pos = nl == std::string::npos ? text.size() : nl + 1;
  }
  MutationReport r;
  std::size_t line = 0;
  std::string m = text;
  for (std::size_t pos = 0; pos < text.size(); ++pos) {
    while (line + 1 < starts.size() && starts[line + 1] <= pos) ++line;
    for (unsigned char d : deltas) {
      m[pos] = static_cast<char>(static_cast<unsigned char>(text[pos]) ^ d);
      ++r.mutations;
      JsonlChainVerifier v = prefix[line];
      std::string_view rest = std::string_view(m).substr(starts[line]);
      while (!rest.empty()) {
        const auto nl = rest.find('\n');
        if (!v.feed(rest.substr(0, nl))) break;
        rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
      }
      if (v.status().ok && r.undetected++ == 0) {
        r.first_undetected = "pos " + std::to_string(pos) + " xor " + std::to_string(d);
      }
    }
    m[pos] = text[pos];
  }
  return r;
}

// ---------------------------------------------------------------------------
// Service fixtures

// Config over the fixture catalogue with all mutable state under `dir`. The
// consent store starts as a copy of the fixture consent file.
inline ServiceConfig fixture_config(const std::filesystem::path& dir) {
  ServiceConfig cfg;
  cfg.catalogue_path = data_path("catalogue.jsonl");
  cfg.consent_path = dir / "consent.jsonl";
  cfg.ledger_path = dir / "ledger.jsonl";
  cfg.output_dir = dir / "outputs";
  cfg.admin_token = "secret";
  cfg.hierarchies = {"genre", "decade"};
  std::filesystem::copy_file(data_path("consent.jsonl"), cfg.consent_path,
                             std::filesystem::copy_options::overwrite_existing);
  return cfg;
}

// Manually advanced clock shared between a test and the service.
struct ManualClock {
  std::shared_ptr<std::int64_t> now = std::make_shared<std::int64_t>(1'700'000'000'000);
  std::function<std::int64_t()> fn() const {
    return [n = now] { return *n; };
  }
  void advance_ms(std::int64_t ms) const { *now += ms; }
};

}  // namespace abd::testsupport
