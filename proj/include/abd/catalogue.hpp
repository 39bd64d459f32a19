#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace abd {

using SongId = std::int64_t;
using BlockName = std::string;

struct BlockSpec {
  BlockName name;
  std::size_t dim = 0;
  double importance = 1.0;

  bool operator==(const BlockSpec&) const = default;
};

/// Ordered, global set of feature blocks shared by every track.
class BlockVocabulary {
 public:
  BlockVocabulary() = default;
  explicit BlockVocabulary(std::vector<BlockSpec> entries);

  /// genre, mood, situation, instrumentation at dim 8; musical blocks at
  /// dim 16; uniform importance.
  static BlockVocabulary defaults();

  /// Parses "name:dim[:importance],name:dim[:importance],...".
  static BlockVocabulary parse(std::string_view text);
  std::string format() const;

  std::size_t size() const noexcept { return entries_.size(); }
  const std::vector<BlockSpec>& entries() const noexcept { return entries_; }
  const BlockSpec& at(std::size_t i) const { return entries_.at(i); }
  std::optional<std::size_t> index_of(std::string_view name) const;
  double total_importance() const noexcept { return total_importance_; }

  bool operator==(const BlockVocabulary& o) const { return entries_ == o.entries_; }

 private:
  std::vector<BlockSpec> entries_;
  double total_importance_ = 0.0;
};

/// Block values for one frame, indexed in vocabulary order.
struct Frame {
  std::vector<std::vector<double>> blocks;

  bool operator==(const Frame&) const = default;
};

struct FeatureTrack {
  std::vector<Frame> frames;
  std::int64_t frame_duration_ms = 0;

  std::size_t size() const noexcept { return frames.size(); }
  bool operator==(const FeatureTrack&) const = default;
};

/// Throws Error(InvalidRequest) when the track does not conform to `vocab`.
void validate_track(const FeatureTrack& track, const BlockVocabulary& vocab);

struct Song {
  SongId song_id = 0;
  std::string title;
  std::string artist_id;
  std::string artist_name;
  std::string album;
  std::vector<std::string> genre_path;
  std::vector<std::string> tags;  // lowercase, sorted, unique
  std::int32_t release_year = 0;
  FeatureTrack feature_track;

  bool operator==(const Song&) const = default;
};

enum class NodeKind {
  Root,
  Genre,
  Subgenre,
  Artist,
  Album,
  Song,
  Decade,
  Year,
  Country,
  InstrumentFamily,
};

const char* to_string(NodeKind kind);

struct HierarchyNode {
  std::string node_id;
  std::string label;
  NodeKind kind = NodeKind::Root;
  std::vector<std::string> children;
  std::optional<SongId> song_id;  // leaves only

  bool operator==(const HierarchyNode&) const = default;
};

struct HierarchyLevel {
  NodeKind kind;
  std::string label;
};

/// Materializes one browse tree from song metadata. The song leaf is added
/// by the catalogue below the last returned level.
class HierarchyPlugin {
 public:
  virtual ~HierarchyPlugin() = default;
  virtual std::string root_id() const = 0;
  virtual std::string root_label() const = 0;
  virtual std::vector<HierarchyLevel> path(const Song& song) const = 0;
};

/// genre -> subgenre... -> artist -> album -> song. Root id "genre".
class GenreHierarchy final : public HierarchyPlugin {
 public:
  std::string root_id() const override { return "genre"; }
  std::string root_label() const override { return "Genres"; }
  std::vector<HierarchyLevel> path(const Song& song) const override;
};

/// decade -> year -> song. Root id "decade".
class DecadeHierarchy final : public HierarchyPlugin {
 public:
  std::string root_id() const override { return "decade"; }
  std::string root_label() const override { return "Decades"; }
  std::vector<HierarchyLevel> path(const Song& song) const override;
};

struct IngestDiagnostic {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct IngestReport {
  std::size_t loaded = 0;
  std::vector<IngestDiagnostic> rejected;
};

enum class MatchField { Title, Artist, Album, Tag };

const char* to_string(MatchField field);

struct SearchHit {
  SongId song_id = 0;
  MatchField field = MatchField::Title;

  bool operator==(const SearchHit&) const = default;
};

/// Parses one ingestion record. Throws Error(InvalidRequest).
Song parse_song_record(std::string_view line, const BlockVocabulary& vocab);
/// Serializes a song back into the ingestion record format (one line).
std::string format_song_record(const Song& song, const BlockVocabulary& vocab);

/// The inference dataset. Ingest is exclusive; once ingest returns, every
/// const member is safe to call concurrently.
class Catalogue {
 public:
  explicit Catalogue(BlockVocabulary vocab,
                     std::vector<std::shared_ptr<const HierarchyPlugin>> hierarchies = {});

  /// Loads JSON-lines records. Invalid records are skipped and reported.
  IngestReport ingest(std::istream& source);
  /// Adds one validated song; throws Error(InvalidRequest) on violations.
  void add_song(Song song);

  const Song& get_song(SongId id) const;
  const Song* find(SongId id) const noexcept;
  bool contains(SongId id) const noexcept { return songs_.count(id) != 0; }
  const std::map<SongId, Song>& songs() const noexcept { return songs_; }
  std::size_t size() const noexcept { return songs_.size(); }
  const BlockVocabulary& vocabulary() const noexcept { return vocab_; }

  /// Children of `node_id` sorted by label. Throws Error(NotFound).
  std::vector<HierarchyNode> browse(std::string_view node_id) const;
  const HierarchyNode& node(std::string_view node_id) const;
  std::vector<std::string> root_ids() const;

  /// Lexical search over title, artist name, album and tags.
  /// Exact field matches rank first, then prefix, then substring; ties by
  /// ascending song id.
  std::vector<SearchHit> search(std::string_view query, std::size_t limit) const;

 private:
  void rebuild_hierarchies();

  BlockVocabulary vocab_;
  std::vector<std::shared_ptr<const HierarchyPlugin>> plugins_;
  std::map<SongId, Song> songs_;
  std::unordered_map<std::string, HierarchyNode> nodes_;
};

std::string to_lower_ascii(std::string_view s);

}  // namespace abd
