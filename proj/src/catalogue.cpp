#include "abd/catalogue.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "abd/error.hpp"

namespace abd {

using nlohmann::json;

std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

// ---------------------------------------------------------------------------
// BlockVocabulary

BlockVocabulary::BlockVocabulary(std::vector<BlockSpec> entries) : entries_(std::move(entries)) {
  if (entries_.empty()) fail(ErrorCode::Config, "block vocabulary is empty");
  std::set<std::string_view> seen;
  for (const auto& e : entries_) {
    if (e.name.empty()) fail(ErrorCode::Config, "block name is empty");
    if (!seen.insert(e.name).second) fail(ErrorCode::Config, "duplicate block name: " + e.name);
    if (e.dim == 0) fail(ErrorCode::Config, "block " + e.name + " has zero dimension");
    if (!(e.importance >= 0.0) || !std::isfinite(e.importance)) {
      fail(ErrorCode::Config, "block " + e.name + " has invalid importance");
    }
    total_importance_ += e.importance;
  }
  if (!(total_importance_ > 0.0)) fail(ErrorCode::Config, "block importances must sum to a positive value");
}

BlockVocabulary BlockVocabulary::defaults() {
  return BlockVocabulary({
      {"genre", 8, 1.0},
      {"mood", 8, 1.0},
      {"situation", 8, 1.0},
      {"melody", 16, 1.0},
      {"rhythm", 16, 1.0},
      {"harmony", 16, 1.0},
      {"timbre.guitar", 16, 1.0},
      {"timbre.voice", 16, 1.0},
      {"timbre.drums", 16, 1.0},
      {"instrumentation", 8, 1.0},
  });
}

BlockVocabulary BlockVocabulary::parse(std::string_view text) {
  std::vector<BlockSpec> entries;
  std::stringstream ss{std::string(text)};
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::vector<std::string> parts;
    std::stringstream is(item);
    std::string p;
    while (std::getline(is, p, ':')) parts.push_back(p);
    if (parts.size() < 2 || parts.size() > 3) fail(ErrorCode::Config, "bad block spec: " + item);
    BlockSpec spec;
    spec.name = parts[0];
    try {
      spec.dim = std::stoul(parts[1]);
      if (parts.size() == 3) spec.importance = std::stod(parts[2]);
    } catch (const std::exception&) {
      fail(ErrorCode::Config, "bad block spec: " + item);
    }
    entries.push_back(std::move(spec));
  }
  return BlockVocabulary(std::move(entries));
}

std::string BlockVocabulary::format() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (i) os << ',';
    os << entries_[i].name << ':' << entries_[i].dim << ':' << entries_[i].importance;
  }
  return os.str();
}

std::optional<std::size_t> BlockVocabulary::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  return std::nullopt;
}

void validate_track(const FeatureTrack& track, const BlockVocabulary& vocab) {
  if (track.frames.empty()) fail(ErrorCode::InvalidRequest, "feature track has no frames");
  if (track.frame_duration_ms <= 0) fail(ErrorCode::InvalidRequest, "frame_duration_ms must be positive");
  for (std::size_t t = 0; t < track.frames.size(); ++t) {
    const auto& f = track.frames[t];
    if (f.blocks.size() != vocab.size()) {
      fail(ErrorCode::InvalidRequest, "frame " + std::to_string(t) + " does not match block vocabulary");
    }
    for (std::size_t b = 0; b < vocab.size(); ++b) {
      if (f.blocks[b].size() != vocab.at(b).dim) {
        fail(ErrorCode::InvalidRequest, "block-dimension mismatch in frame " + std::to_string(t) +
                                            " block " + vocab.at(b).name);
      }
      for (double v : f.blocks[b]) {
        if (!std::isfinite(v)) fail(ErrorCode::InvalidRequest, "non-finite feature value");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Hierarchies

const char* to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::Root: return "root";
    case NodeKind::Genre: return "genre";
    case NodeKind::Subgenre: return "subgenre";
    case NodeKind::Artist: return "artist";
    case NodeKind::Album: return "album";
    case NodeKind::Song: return "song";
    case NodeKind::Decade: return "decade";
    case NodeKind::Year: return "year";
    case NodeKind::Country: return "country";
    case NodeKind::InstrumentFamily: return "instrument-family";
  }
  return "unknown";
}

std::vector<HierarchyLevel> GenreHierarchy::path(const Song& song) const {
  std::vector<HierarchyLevel> levels;
  for (std::size_t i = 0; i < song.genre_path.size(); ++i) {
    levels.push_back({i == 0 ? NodeKind::Genre : NodeKind::Subgenre, song.genre_path[i]});
  }
  levels.push_back({NodeKind::Artist, song.artist_name});
  levels.push_back({NodeKind::Album, song.album});
  return levels;
}

std::vector<HierarchyLevel> DecadeHierarchy::path(const Song& song) const {
  int decade = song.release_year - (((song.release_year % 10) + 10) % 10);
  return {{NodeKind::Decade, std::to_string(decade) + "s"},
          {NodeKind::Year, std::to_string(song.release_year)}};
}

// ---------------------------------------------------------------------------
// Record format

namespace {

const json& require(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(ErrorCode::InvalidRequest, std::string("missing key: ") + key);
  return *it;
}

std::string require_string(const json& obj, const char* key) {
  const auto& v = require(obj, key);
  if (!v.is_string()) fail(ErrorCode::InvalidRequest, std::string(key) + " must be a string");
  return v.get<std::string>();
}

std::int64_t require_int(const json& obj, const char* key) {
  const auto& v = require(obj, key);
  if (!v.is_number_integer()) fail(ErrorCode::InvalidRequest, std::string(key) + " must be an integer");
  return v.get<std::int64_t>();
}

std::vector<std::string> require_strings(const json& obj, const char* key) {
  const auto& v = require(obj, key);
  if (!v.is_array()) fail(ErrorCode::InvalidRequest, std::string(key) + " must be an array");
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) fail(ErrorCode::InvalidRequest, std::string(key) + " must contain strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

}  // namespace

Song parse_song_record(std::string_view line, const BlockVocabulary& vocab) {
  json obj = json::parse(line.begin(), line.end(), nullptr, false);
  if (obj.is_discarded() || !obj.is_object()) fail(ErrorCode::InvalidRequest, "malformed record");

  Song s;
  s.song_id = require_int(obj, "song_id");
  if (s.song_id <= 0) fail(ErrorCode::InvalidRequest, "song_id must be positive");
  s.title = require_string(obj, "title");
  s.artist_id = require_string(obj, "artist_id");
  s.artist_name = require_string(obj, "artist_name");
  s.album = require_string(obj, "album");
  s.genre_path = require_strings(obj, "genre_path");
  if (s.genre_path.empty()) fail(ErrorCode::InvalidRequest, "genre_path is empty");
  std::set<std::string> tags;
  for (auto& t : require_strings(obj, "tags")) {
    if (!t.empty()) tags.insert(to_lower_ascii(t));
  }
  if (tags.empty()) fail(ErrorCode::InvalidRequest, "tags are empty");
  s.tags.assign(tags.begin(), tags.end());
  s.release_year = static_cast<std::int32_t>(require_int(obj, "release_year"));
  s.feature_track.frame_duration_ms = require_int(obj, "frame_duration_ms");

  const auto& frames = require(obj, "frames");
  if (!frames.is_array()) fail(ErrorCode::InvalidRequest, "frames must be an array");
  for (const auto& fj : frames) {
    if (!fj.is_object()) fail(ErrorCode::InvalidRequest, "frame must be an object");
    if (fj.size() != vocab.size()) fail(ErrorCode::InvalidRequest, "frame block set differs from vocabulary");
    Frame f;
    f.blocks.resize(vocab.size());
    for (auto it = fj.begin(); it != fj.end(); ++it) {
      auto idx = vocab.index_of(it.key());
      if (!idx) fail(ErrorCode::InvalidRequest, "unknown block: " + it.key());
      if (!it->is_array()) fail(ErrorCode::InvalidRequest, "block values must be an array");
      auto& values = f.blocks[*idx];
      for (const auto& v : *it) {
        if (!v.is_number()) fail(ErrorCode::InvalidRequest, "block values must be numbers");
        values.push_back(v.get<double>());
      }
    }
    s.feature_track.frames.push_back(std::move(f));
  }
  validate_track(s.feature_track, vocab);
  return s;
}

std::string format_song_record(const Song& song, const BlockVocabulary& vocab) {
  json frames = json::array();
  for (const auto& f : song.feature_track.frames) {
    json fj = json::object();
    for (std::size_t b = 0; b < vocab.size(); ++b) fj[vocab.at(b).name] = f.blocks.at(b);
    frames.push_back(std::move(fj));
  }
  json obj = {
      {"song_id", song.song_id},
      {"title", song.title},
      {"artist_id", song.artist_id},
      {"artist_name", song.artist_name},
      {"album", song.album},
      {"genre_path", song.genre_path},
      {"tags", song.tags},
      {"release_year", song.release_year},
      {"frame_duration_ms", song.feature_track.frame_duration_ms},
      {"frames", std::move(frames)},
  };
  return obj.dump();
}

// ---------------------------------------------------------------------------
// Catalogue

Catalogue::Catalogue(BlockVocabulary vocab, std::vector<std::shared_ptr<const HierarchyPlugin>> hierarchies)
    : vocab_(std::move(vocab)), plugins_(std::move(hierarchies)) {
  if (vocab_.size() == 0) fail(ErrorCode::Config, "catalogue needs a block vocabulary");
  if (plugins_.empty()) plugins_.push_back(std::make_shared<GenreHierarchy>());
  rebuild_hierarchies();
}

IngestReport Catalogue::ingest(std::istream& source) {
  IngestReport report;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(source, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      Song song = parse_song_record(line, vocab_);
      if (songs_.count(song.song_id)) {
        fail(ErrorCode::InvalidRequest, "duplicate song_id " + std::to_string(song.song_id));
      }
      songs_.emplace(song.song_id, std::move(song));
      ++report.loaded;
    } catch (const Error& e) {
      report.rejected.push_back({line_no, e.what()});
    }
  }
  rebuild_hierarchies();
  return report;
}

void Catalogue::add_song(Song song) {
  if (song.song_id <= 0) fail(ErrorCode::InvalidRequest, "song_id must be positive");
  if (songs_.count(song.song_id)) fail(ErrorCode::InvalidRequest, "duplicate song_id " + std::to_string(song.song_id));
  if (song.genre_path.empty()) fail(ErrorCode::InvalidRequest, "genre_path is empty");
  std::set<std::string> tags;
  for (const auto& t : song.tags) {
    if (!t.empty()) tags.insert(to_lower_ascii(t));
  }
  if (tags.empty()) fail(ErrorCode::InvalidRequest, "tags are empty");
  song.tags.assign(tags.begin(), tags.end());
  validate_track(song.feature_track, vocab_);
  songs_.emplace(song.song_id, std::move(song));
  rebuild_hierarchies();
}

const Song& Catalogue::get_song(SongId id) const {
  const Song* s = find(id);
  if (!s) fail(ErrorCode::NotFound, "unknown song " + std::to_string(id));
  return *s;
}

const Song* Catalogue::find(SongId id) const noexcept {
  auto it = songs_.find(id);
  return it == songs_.end() ? nullptr : &it->second;
}

void Catalogue::rebuild_hierarchies() {
  nodes_.clear();
  for (const auto& plugin : plugins_) {
    const std::string root = plugin->root_id();
    nodes_[root] = HierarchyNode{root, plugin->root_label(), NodeKind::Root, {}, std::nullopt};
    // (parent id, kind, label) -> child id
    std::map<std::tuple<std::string, NodeKind, std::string>, std::string> index;
    std::size_t counter = 0;
    for (const auto& [id, song] : songs_) {
      std::string parent = root;
      for (const auto& level : plugin->path(song)) {
        auto key = std::make_tuple(parent, level.kind, level.label);
        auto it = index.find(key);
        if (it == index.end()) {
          std::string child = root + ":" + std::to_string(++counter);
          nodes_[child] = HierarchyNode{child, level.label, level.kind, {}, std::nullopt};
          nodes_[parent].children.push_back(child);
          it = index.emplace(std::move(key), std::move(child)).first;
        }
        parent = it->second;
      }
      std::string leaf = root + ":song:" + std::to_string(id);
      nodes_[leaf] = HierarchyNode{leaf, song.title, NodeKind::Song, {}, id};
      nodes_[parent].children.push_back(leaf);
    }
  }
}

const HierarchyNode& Catalogue::node(std::string_view node_id) const {
  auto it = nodes_.find(std::string(node_id));
  if (it == nodes_.end()) fail(ErrorCode::NotFound, "unknown node " + std::string(node_id));
  return it->second;
}

std::vector<std::string> Catalogue::root_ids() const {
  std::vector<std::string> out;
  for (const auto& p : plugins_) out.push_back(p->root_id());
  return out;
}

std::vector<HierarchyNode> Catalogue::browse(std::string_view node_id) const {
  const auto& parent = node(node_id);
  std::vector<HierarchyNode> out;
  out.reserve(parent.children.size());
  for (const auto& c : parent.children) out.push_back(nodes_.at(c));
  std::sort(out.begin(), out.end(), [](const HierarchyNode& a, const HierarchyNode& b) {
    if (a.label != b.label) return a.label < b.label;
    return a.node_id < b.node_id;
  });
  return out;
}

const char* to_string(MatchField field) {
  switch (field) {
    case MatchField::Title: return "title";
    case MatchField::Artist: return "artist";
    case MatchField::Album: return "album";
    case MatchField::Tag: return "tag";
  }
  return "unknown";
}

std::vector<SearchHit> Catalogue::search(std::string_view query, std::size_t limit) const {
  if (limit == 0) fail(ErrorCode::InvalidRequest, "limit must be >= 1");
  const std::string q = to_lower_ascii(query);
  if (q.empty()) return {};

  // 0 exact, 1 prefix, 2 substring, 3 none
  auto grade = [&q](std::string_view field) {
    const std::string f = to_lower_ascii(field);
    if (f == q) return 0;
    if (f.rfind(q, 0) == 0) return 1;
    if (f.find(q) != std::string::npos) return 2;
    return 3;
  };

  struct Ranked {
    int grade;
    SearchHit hit;
  };
  std::vector<Ranked> ranked;
  for (const auto& [id, song] : songs_) {
    Ranked best{3, {id, MatchField::Title}};
    auto consider = [&](std::string_view field, MatchField which) {
      int g = grade(field);
      if (g < best.grade) best = {g, {id, which}};
    };
    consider(song.title, MatchField::Title);
    consider(song.artist_name, MatchField::Artist);
    consider(song.album, MatchField::Album);
    for (const auto& t : song.tags) consider(t, MatchField::Tag);
    if (best.grade < 3) ranked.push_back(best);
  }
  auto cmp = [](const Ranked& a, const Ranked& b) {
    if (a.grade != b.grade) return a.grade < b.grade;
    return a.hit.song_id < b.hit.song_id;
  };
  const std::size_t n = std::min(limit, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(n), ranked.end(), cmp);
  std::vector<SearchHit> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(ranked[i].hit);
  return out;
}

}  // namespace abd
