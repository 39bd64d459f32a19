#include "abd/retrieval.hpp"

#include <algorithm>
#include <cmath>

#include "abd/error.hpp"
#include "abd/hashing.hpp"

namespace abd {

bool Embedding::is_zero() const noexcept {
  return std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; });
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    const bool alnum = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || (c >= 'A' && c <= 'Z');
    if (alnum) {
      cur.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

HashedTagEncoder::HashedTagEncoder(std::size_t dim) : dim_(dim) {
  if (dim_ == 0) fail(ErrorCode::Config, "embedding dimension must be positive");
}

std::size_t HashedTagEncoder::bucket(std::string_view tag) const noexcept {
  return static_cast<std::size_t>(fnv1a64(tag) % dim_);
}

Embedding HashedTagEncoder::embed_tags(std::span<const std::string> tags) const {
  Embedding e;
  e.values.assign(dim_, 0.0);
  for (const auto& t : tags) {
    if (!t.empty()) e.values[bucket(t)] += 1.0;
  }
  double sq = 0.0;
  for (double v : e.values) sq += v * v;
  if (sq > 0.0) {
    const double norm = std::sqrt(sq);
    for (double& v : e.values) v /= norm;
  }
  return e;
}

Embedding HashedTagEncoder::embed_text(std::string_view text) const {
  const auto tokens = tokenize(text);
  return embed_tags(tokens);
}

double cosine(const Embedding& a, const Embedding& b) noexcept {
  const std::size_t n = std::min(a.values.size(), b.values.size());
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ab += a.values[i] * b.values[i];
    aa += a.values[i] * a.values[i];
    bb += b.values[i] * b.values[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

// ---------------------------------------------------------------------------

namespace {

const std::set<std::string, std::less<>> kCategoryKeys{"genre", "instruments", "vocalist",
                                                       "mood",  "situation",   "function"};

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

Prompt Prompt::free_text(std::string text) {
  Prompt p;
  p.kind = PromptKind::FreeText;
  p.text = std::move(text);
  return p;
}

Prompt Prompt::from_categories(std::map<std::string, std::vector<std::string>> categories) {
  Prompt p;
  p.kind = PromptKind::Categories;
  p.categories = std::move(categories);
  return p;
}

void Prompt::validate() const {
  if (kind == PromptKind::Categories) {
    bool any = false;
    for (const auto& [key, labels] : categories) {
      if (!kCategoryKeys.count(key)) fail(ErrorCode::InvalidRequest, "unknown prompt category: " + key);
      for (const auto& l : labels) any = any || !trim(l).empty();
    }
    if (!any) fail(ErrorCode::InvalidRequest, "category prompt needs at least one selection");
  }
}

std::vector<std::string> Prompt::tags() const {
  if (kind == PromptKind::FreeText) return tokenize(text);
  std::vector<std::string> out;
  for (const auto& [key, labels] : categories) {
    for (const auto& l : labels) {
      auto t = to_lower_ascii(trim(l));
      if (!t.empty()) out.push_back(std::move(t));
    }
  }
  return out;
}

const char* to_string(RankSignal s) {
  switch (s) {
    case RankSignal::None: return "ok";
    case RankSignal::PromptUninformative: return "prompt-uninformative";
    case RankSignal::Exhausted: return "exhausted";
  }
  return "unknown";
}

std::vector<std::string> song_tag_set(const Song& song) {
  std::set<std::string> tags(song.tags.begin(), song.tags.end());
  for (const auto& g : song.genre_path) {
    auto t = to_lower_ascii(trim(g));
    if (!t.empty()) tags.insert(std::move(t));
  }
  for (auto& t : tokenize(song.artist_name)) tags.insert(std::move(t));
  return {tags.begin(), tags.end()};
}

// ---------------------------------------------------------------------------

RetrievalIndex::RetrievalIndex(const Catalogue& catalogue, std::shared_ptr<const Encoder> encoder)
    : encoder_(std::move(encoder)) {
  if (!encoder_) fail(ErrorCode::Config, "retrieval index needs an encoder");
  songs_.reserve(catalogue.size());
  for (const auto& [id, song] : catalogue.songs()) songs_.emplace_back(id, embed_song(song));
}

Embedding RetrievalIndex::embed_prompt(const Prompt& prompt) const {
  prompt.validate();
  if (prompt.kind == PromptKind::FreeText) return encoder_->embed_text(prompt.text);
  const auto tags = prompt.tags();
  return encoder_->embed_tags(tags);
}

Embedding RetrievalIndex::embed_song(const Song& song) const {
  const auto tags = song_tag_set(song);
  return encoder_->embed_tags(tags);
}

const Embedding& RetrievalIndex::song_embedding(SongId id) const {
  auto it = std::lower_bound(songs_.begin(), songs_.end(), id,
                             [](const auto& entry, SongId key) { return entry.first < key; });
  if (it == songs_.end() || it->first != id) fail(ErrorCode::NotFound, "unknown song " + std::to_string(id));
  return it->second;
}

std::vector<ScoredSong> RetrievalIndex::rank(const Embedding& query, const std::function<bool(SongId)>& include,
                                             std::size_t k) const {
  std::vector<ScoredSong> scored;
  scored.reserve(songs_.size());
  for (const auto& [id, emb] : songs_) {
    if (include && !include(id)) continue;
    scored.push_back({id, cosine(query, emb)});
  }
  const std::size_t n = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(),
                    [](const ScoredSong& a, const ScoredSong& b) {
                      if (a.score != b.score) return a.score > b.score;
                      return a.song_id < b.song_id;
                    });
  scored.resize(n);
  return scored;
}

RetrievalSession RetrievalIndex::open_session(std::string session_id, Prompt prompt, std::size_t k) const {
  if (k == 0) fail(ErrorCode::InvalidRequest, "k must be >= 1");
  RetrievalSession s;
  s.session_id = std::move(session_id);
  s.prompt_embedding = embed_prompt(prompt);
  s.prompt = std::move(prompt);
  s.k = k;
  return s;
}

RankResult RetrievalIndex::rank_top_k(RetrievalSession& session) const {
  session.started = true;
  RankResult result;
  if (session.prompt_embedding.is_zero()) {
    result.signal = RankSignal::PromptUninformative;
    return result;
  }
  result.hits = rank(
      session.prompt_embedding, [&](SongId id) { return session.excluded.count(id) == 0; }, session.k);
  if (result.hits.empty()) result.signal = RankSignal::Exhausted;
  for (const auto& h : result.hits) {
    session.shown.push_back(h.song_id);
    session.excluded.insert(h.song_id);
  }
  return result;
}

RankResult RetrievalIndex::refine(RetrievalSession& session) const {
  if (!session.started) fail(ErrorCode::InvalidRequest, "refine requires a prior retrieval");
  return rank_top_k(session);
}

void RetrievalIndex::reject(RetrievalSession& session, SongId id) const {
  session.rejected.insert(id);
  session.excluded.insert(id);
}

}  // namespace abd
