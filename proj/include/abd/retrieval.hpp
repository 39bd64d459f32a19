#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "abd/catalogue.hpp"

namespace abd {

struct Embedding {
  std::vector<double> values;

  bool is_zero() const noexcept;
  bool operator==(const Embedding&) const = default;
};

/// Plugin boundary for the joint text/audio encoder: tags or raw text in,
/// `dim()` reals out.
class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual std::size_t dim() const noexcept = 0;
  virtual Embedding embed_tags(std::span<const std::string> tags) const = 0;
  virtual Embedding embed_text(std::string_view text) const = 0;
};

/// Lowercase ASCII alphanumeric runs; everything else separates tokens.
std::vector<std::string> tokenize(std::string_view text);

/// Deterministic stand-in encoder: FNV-1a bucketed tag counts, L2-normalized.
class HashedTagEncoder final : public Encoder {
 public:
  explicit HashedTagEncoder(std::size_t dim = 64);

  std::size_t dim() const noexcept override { return dim_; }
  std::size_t bucket(std::string_view tag) const noexcept;
  Embedding embed_tags(std::span<const std::string> tags) const override;
  Embedding embed_text(std::string_view text) const override;

 private:
  std::size_t dim_;
};

/// Cosine similarity clamped to [-1, 1]; 0 when either side is zero.
double cosine(const Embedding& a, const Embedding& b) noexcept;

enum class PromptKind { FreeText, Categories };

struct Prompt {
  PromptKind kind = PromptKind::FreeText;
  std::string text;
  /// Keys: genre, instruments, vocalist, mood, situation, function.
  std::map<std::string, std::vector<std::string>> categories;

  static Prompt free_text(std::string text);
  static Prompt from_categories(std::map<std::string, std::vector<std::string>> categories);

  /// Throws Error(InvalidRequest).
  void validate() const;
  /// Free text is tokenized; category labels are used whole (lowercased).
  std::vector<std::string> tags() const;

  bool operator==(const Prompt&) const = default;
};

struct ScoredSong {
  SongId song_id = 0;
  double score = 0.0;

  bool operator==(const ScoredSong&) const = default;
};

enum class RankSignal { None, PromptUninformative, Exhausted };
const char* to_string(RankSignal s);

struct RankResult {
  std::vector<ScoredSong> hits;
  RankSignal signal = RankSignal::None;
};

struct RetrievalSession {
  std::string session_id;
  Prompt prompt;
  Embedding prompt_embedding;
  std::size_t k = 5;
  std::vector<SongId> shown;
  std::set<SongId> rejected;
  std::set<SongId> excluded;  // shown ∪ rejected
  bool started = false;
};

/// Precomputed song embeddings over an immutable catalogue.
class RetrievalIndex {
 public:
  RetrievalIndex(const Catalogue& catalogue, std::shared_ptr<const Encoder> encoder);

  const Encoder& encoder() const noexcept { return *encoder_; }
  Embedding embed_prompt(const Prompt& prompt) const;
  Embedding embed_song(const Song& song) const;
  /// Throws Error(NotFound).
  const Embedding& song_embedding(SongId id) const;

  /// Best `k` songs accepted by `include`, score descending then id ascending.
  std::vector<ScoredSong> rank(const Embedding& query, const std::function<bool(SongId)>& include,
                               std::size_t k) const;

  RetrievalSession open_session(std::string session_id, Prompt prompt, std::size_t k) const;
  RankResult rank_top_k(RetrievalSession& session) const;
  /// Throws Error(InvalidRequest) if the session has not been ranked yet.
  RankResult refine(RetrievalSession& session) const;
  void reject(RetrievalSession& session, SongId id) const;

 private:
  std::shared_ptr<const Encoder> encoder_;
  std::vector<std::pair<SongId, Embedding>> songs_;  // ascending id
};

/// The set of tags the mock audio encoder sees for a song.
std::vector<std::string> song_tag_set(const Song& song);

}  // namespace abd
