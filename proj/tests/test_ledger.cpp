#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "abd/error.hpp"
#include "abd/ledger.hpp"
#include "support/support.hpp"

using namespace abd;
using namespace abd::testsupport;

namespace {

ArtistOf by_song(std::map<SongId, std::string> m) {
  return [m = std::move(m)](SongId id) -> std::optional<std::string> {
    auto it = m.find(id);
    if (it == m.end()) return std::nullopt;
    return it->second;
  };
}

Ledger::Clock ticking(std::int64_t start = 1000, std::int64_t step = 10) {
  auto t = std::make_shared<std::int64_t>(start);
  return [t, step] { return *t += step; };
}

EntryDraft draft_from(const Allocation& a, Money fee, std::string request_id) {
  EntryDraft d;
  d.request_id = std::move(request_id);
  d.fee = fee;
  d.payouts = a.credits;
  d.tta_pool_delta = a.tta_pool_delta;
  d.platform_delta = a.platform_delta;
  d.output_id = std::string(64, 'a');
  return d;
}

Money amount_of(const Allocation& a, const std::string& artist) {
  for (const auto& c : a.credits) {
    if (c.artist_id == artist) return c.amount;
  }
  return 0;
}

// Builds a random ledger of generation and blocked entries with occasional
// training-pool distributions.
struct RandomLedger {
  Ledger ledger{"EUR", ticking()};
  Money fees = 0;
  std::map<std::string, Money> paid;
  Money platform = 0;
  std::shared_ptr<Catalogue> cat;
  std::map<SongId, std::string> artists;

  RandomLedger(std::mt19937_64& rng, std::size_t events, double distribute_p = 0.02) {
    cat = random_catalogue(rng, 60, small_vocabulary(), 1, 2, 12);
    std::vector<SongId> ids;
    for (const auto& [id, s] : cat->songs()) {
      ids.push_back(id);
      artists[id] = s.artist_id;
    }
    ConsentRegistry reg([this](SongId id) { return cat->contains(id); });
    for (SongId id : ids) reg.set_consent(id, random_usage(rng, 0.3), random_distribution(rng, 0.5));
    const auto snap = reg.take_snapshot();
    Tariff tariff;
    for (std::size_t i = 0; i < events; ++i) {
      if (std::bernoulli_distribution(distribute_p)(rng)) {
        auto e = ledger.distribute_tta_pool(0, 1 << 30, snap, *cat);
        if (e) record(*e);
        continue;
      }
      if (std::bernoulli_distribution(0.1)(rng)) {
        EntryDraft d;
        d.kind = EntryKind::Blocked;
        d.request_id = "b" + std::to_string(i);
        record(ledger.append(d));
        continue;
      }
      const auto use = kAllIntendedUses[std::uniform_int_distribution<std::size_t>(0, 2)(rng)];
      std::map<SongId, double> w;
      const auto n = std::uniform_int_distribution<std::size_t>(0, 6)(rng);
      for (std::size_t j = 0; j < n; ++j) w[ids[std::uniform_int_distribution<std::size_t>(0, ids.size() - 1)(rng)]] += std::uniform_real_distribution<double>(0.01, 1.0)(rng);
      double total = 0.0;
      for (auto& [id, x] : w) total += x;
      for (auto& [id, x] : w) x /= total;
      const double fraction = w.empty() ? 0.0 : std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      const Money fee = compute_fee(use, tariff);
      auto a = allocate(fee, w, fraction, tariff, by_song(artists));
      record(ledger.append(draft_from(a, fee, "r" + std::to_string(i))));
    }
  }

  void record(const LedgerEntry& e) {
    fees += e.fee;
    platform += e.platform_delta;
    for (const auto& c : e.payouts) paid[c.artist_id] += c.amount;
  }
};

}  // namespace

TEST(Tariff, DefaultsAndValidation) {
  Tariff t;
  EXPECT_EQ(compute_fee(IntendedUse::SaveForPrivateUse, t), 100);
  EXPECT_EQ(compute_fee(IntendedUse::NonCommercialDistribution, t), 500);
  EXPECT_EQ(compute_fee(IntendedUse::CommercialDistribution, t), 2500);
  EXPECT_NO_THROW(t.validate());
  t.prices = {500, 100, 2500};
  EXPECT_THROW(t.validate(), Error);
  t.prices = {0, 100, 2500};
  EXPECT_THROW(t.validate(), Error);
  t = Tariff{};
  t.royalty_rate = 1.2;
  EXPECT_THROW(t.validate(), Error);
}

TEST(LargestRemainder, ExactSumAndTieOrder) {
  EXPECT_EQ(largest_remainder(1750, {0.75, 0.25}), (std::vector<Money>{1313, 437}));
  EXPECT_EQ(largest_remainder(1000, {1, 1, 1}), (std::vector<Money>{334, 333, 333}));
  EXPECT_EQ(largest_remainder(1000, {1, 1, 1, 1}), (std::vector<Money>{250, 250, 250, 250}));
  EXPECT_EQ(largest_remainder(2, {1, 1, 1}), (std::vector<Money>{1, 1, 0}));
  EXPECT_EQ(largest_remainder(0, {1, 2}), (std::vector<Money>{0, 0}));
  EXPECT_THROW(largest_remainder(5, {0, 0}), Error);
  EXPECT_THROW(largest_remainder(5, {-1, 2}), Error);
}

TEST(LargestRemainder, RandomSharesSumExactlyAndStayWithinOneUnit) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 2000; ++i) {
    const auto n = std::uniform_int_distribution<std::size_t>(1, 12)(rng);
    std::vector<double> s(n);
    double sum = 0.0;
    for (auto& x : s) sum += x = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const Money total = std::uniform_int_distribution<Money>(0, 100000)(rng);
    const auto out = largest_remainder(total, s);
    Money got = 0;
    for (std::size_t j = 0; j < n; ++j) {
      got += out[j];
      const double exact = static_cast<double>(total) * s[j] / sum;
      ASSERT_LE(std::abs(static_cast<double>(out[j]) - exact), 1.0 + 1e-9);
    }
    ASSERT_EQ(got, total);
  }
}

TEST(Allocate, WorkedExample) {
  Tariff t;
  auto a = allocate(2500, {{1, 0.75}, {2, 0.25}}, 1.0, t, by_song({{1, "artist-a"}, {2, "artist-b"}}));
  ASSERT_EQ(a.credits.size(), 2u);
  EXPECT_EQ(a.credits[0].artist_id, "artist-a");
  EXPECT_EQ(a.credits[0].amount, 1313);
  EXPECT_EQ(a.credits[1].amount, 437);
  EXPECT_EQ(a.tta_pool_delta, 0);
  EXPECT_EQ(a.platform_delta, 750);
}

TEST(Allocate, NoAttributionRoutesRoyaltyToPool) {
  Tariff t;
  auto a = allocate(2500, {}, 0.0, t, by_song({}));
  EXPECT_TRUE(a.credits.empty());
  EXPECT_EQ(a.tta_pool_delta, 1750);
  EXPECT_EQ(a.platform_delta, 750);
}

TEST(Allocate, SingleSongAndPartialFraction) {
  Tariff t;
  auto a = allocate(500, {{1, 1.0}}, 0.2, t, by_song({{1, "x"}}));
  ASSERT_EQ(a.credits.size(), 1u);
  EXPECT_EQ(a.credits[0].amount, 70);
  EXPECT_EQ(a.tta_pool_delta, 280);
  EXPECT_EQ(a.platform_delta, 150);
}

TEST(Allocate, SongsOfOneArtistAreMerged) {
  Tariff t;
  auto a = allocate(100, {{1, 0.5}, {2, 0.25}, {3, 0.25}}, 1.0, t, by_song({{1, "x"}, {2, "y"}, {3, "x"}}));
  ASSERT_EQ(a.credits.size(), 2u);
  EXPECT_EQ(a.credits[0].song_ids, (std::vector<SongId>{1, 3}));
  EXPECT_DOUBLE_EQ(a.credits[0].weight, 0.75);
  EXPECT_EQ(a.credits[0].amount + a.credits[1].amount, 70);
}

TEST(Allocate, MissingArtistIsConfigError) {
  try {
    allocate(100, {{1, 1.0}}, 1.0, Tariff{}, by_song({}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Config);
  }
}

TEST(LedgerChain, AppendLinksAndVerifies) {
  Ledger l("EUR", ticking());
  auto a = allocate(2500, {{1, 0.75}, {2, 0.25}}, 1.0, Tariff{}, by_song({{1, "a"}, {2, "b"}}));
  auto e0 = l.append(draft_from(a, 2500, "x"));
  auto e1 = l.append(draft_from(a, 2500, "y"));
  EXPECT_EQ(e0.entry_index, 0u);
  EXPECT_EQ(e1.entry_index, 1u);
  EXPECT_EQ(e0.prev_hash, Digest{});
  EXPECT_EQ(e1.prev_hash, e0.entry_hash);
  EXPECT_EQ(e0.entry_hash, compute_entry_hash(e0));
  EXPECT_LT(e0.timestamp_ms, e1.timestamp_ms);
  EXPECT_TRUE(l.verify_chain().ok);
  EXPECT_EQ(entry_from_line(entry_to_line(e1)), e1);
}

TEST(LedgerChain, ConservationViolationIsRejected) {
  Ledger l;
  EntryDraft d;
  d.fee = 100;
  d.platform_delta = 30;
  d.tta_pool_delta = 60;
  try {
    l.append(d);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Conservation);
  }
  EXPECT_EQ(l.size(), 0u);
}

TEST(LedgerChain, TamperedEntryIsDetected) {
  Ledger l("EUR", ticking());
  for (int i = 0; i < 5; ++i) {
    EntryDraft d;
    d.kind = EntryKind::Blocked;
    d.request_id = "r" + std::to_string(i);
    l.append(d);
  }
  auto entries = l.entries();
  entries[2].request_id = "forged";
  auto st = verify_chain(entries);
  EXPECT_FALSE(st.ok);
  EXPECT_EQ(st.broken_at, 2u);

  entries = l.entries();
  std::swap(entries[1], entries[3]);
  EXPECT_FALSE(verify_chain(entries).ok);
}

TEST(LedgerPersistence, ReopenAndAppend) {
  TempDir dir;
  const auto path = dir.path / "ledger.jsonl";
  {
    auto l = Ledger::open(path, "EUR", ticking());
    auto a = allocate(500, {{1, 1.0}}, 1.0, Tariff{}, by_song({{1, "a"}}));
    l.append(draft_from(a, 500, "one"));
  }
  auto l = Ledger::open(path, "EUR", ticking(5000));
  ASSERT_EQ(l.size(), 1u);
  EntryDraft d;
  d.kind = EntryKind::Blocked;
  l.append(d);
  std::istringstream in(read_file(path));
  const auto st = verify_jsonl(in);
  EXPECT_TRUE(st.ok) << st.reason;
  EXPECT_EQ(st.entries, 2u);
  EXPECT_EQ(read_file(path), l.export_jsonl());
}

TEST(LedgerPersistence, BrokenFileRefusesToOpen) {
  TempDir dir;
  const auto path = dir.path / "ledger.jsonl";
  {
    auto l = Ledger::open(path);
    EntryDraft d;
    d.kind = EntryKind::Blocked;
    l.append(d);
    l.append(d);
  }
  auto text = read_file(path);
  text[text.find("\"request_id\"") + 2] = 'X';
  std::ofstream(path, std::ios::binary | std::ios::trunc) << text;
  EXPECT_THROW(Ledger::open(path), Error);
}

TEST(LedgerPersistence, FaultHookAbortsWithoutAppending) {
  Ledger l;
  l.set_fault_hook([](std::string_view stage) {
    if (stage == "before-persist") throw std::runtime_error("boom");
  });
  EntryDraft d;
  d.kind = EntryKind::Blocked;
  EXPECT_THROW(l.append(d), std::runtime_error);
  EXPECT_EQ(l.size(), 0u);
}

TEST(Statement, EmptyForUnknownArtist) {
  Ledger l;
  auto s = l.statement("nobody");
  EXPECT_TRUE(s.lines.empty());
  EXPECT_EQ(s.total, 0);
}

TEST(Statement, WorkedExampleAndCsv) {
  Ledger l("EUR", ticking(1000, 10));
  auto a = allocate(2500, {{17189, 0.75}, {17194, 0.25}}, 1.0, Tariff{}, by_song({{17189, "a-001"}, {17194, "a-003"}}));
  l.append(draft_from(a, 2500, "x"));
  auto s = l.statement("a-001");
  ASSERT_EQ(s.lines.size(), 1u);
  EXPECT_EQ(s.total, 1313);
  EXPECT_EQ(s.lines[0].song_ids, std::vector<SongId>{17189});
  EXPECT_EQ(statement_csv(s, "EUR"), "entry_index,song_id,weight,amount_minor_units,currency\n0,17189,0.75,1313,EUR\n");
  EXPECT_TRUE(l.statement("a-001", 0, 1005).lines.empty());
  EXPECT_EQ(l.statement("a-001", 1010, 1011).total, 1313);
  EXPECT_TRUE(l.statement("a-001", 1011).lines.empty());
}

TEST(TtaDistribution, EqualSplitsAndCarryForward) {
  auto cat = fixture_catalogue();
  ConsentRegistry reg([&](SongId id) { return cat->contains(id); });
  load_fixture_consent(reg);
  Ledger l("EUR", ticking());
  auto fund = [&](Money amount) {
    EntryDraft d;
    d.fee = amount;
    d.tta_pool_delta = amount;
    l.append(d);
  };
  fund(1000);
  // No fixture song grants model training: the pool carries forward.
  EXPECT_FALSE(l.distribute_tta_pool(0, 1 << 30, reg.take_snapshot(), *cat));
  EXPECT_EQ(l.tta_pool_balance(), 1000);

  reg.set_consent(17189, {true, true, true, true}, {true, true, true});
  reg.set_consent(17193, {true, false, false, false}, {false, false, false});
  reg.set_consent(17194, {true, false, false, false}, {false, false, false});
  auto e = l.distribute_tta_pool(0, 1 << 30, reg.take_snapshot(), *cat);
  ASSERT_TRUE(e);
  EXPECT_EQ(e->kind, EntryKind::TtaDistribution);
  ASSERT_EQ(e->payouts.size(), 3u);
  EXPECT_EQ(e->payouts[0].artist_id, "a-001");
  EXPECT_EQ(e->payouts[0].amount, 334);
  EXPECT_EQ(e->payouts[1].amount, 333);
  EXPECT_EQ(e->payouts[2].amount, 333);
  EXPECT_EQ(l.tta_pool_balance(), 0);
  EXPECT_FALSE(l.distribute_tta_pool(0, 1 << 30, reg.take_snapshot(), *cat));

  reg.set_consent(17196, {true, false, false, false}, {false, false, false});
  fund(1000);
  e = l.distribute_tta_pool(0, 1 << 30, reg.take_snapshot(), *cat);
  ASSERT_TRUE(e);
  for (const auto& c : e->payouts) EXPECT_EQ(c.amount, 250);
  EXPECT_TRUE(l.verify_chain().ok);
}

TEST(LedgerProperties, ConservationPerEntryAndGlobally) {
  std::mt19937_64 rng(71);
  RandomLedger r(rng, 1500);
  const auto entries = r.ledger.entries();
  ASSERT_GE(entries.size(), 1000u);
  for (const auto& e : entries) {
    ASSERT_EQ(e.fee, e.payout_total() + e.tta_pool_delta + e.platform_delta) << e.entry_index;
    for (const auto& c : e.payouts) ASSERT_GE(c.amount, 0);
  }
  Money all = r.platform + r.ledger.tta_pool_balance();
  for (const auto& [artist, m] : r.paid) all += m;
  EXPECT_EQ(all, r.fees);
  EXPECT_TRUE(r.ledger.verify_chain().ok);
}

TEST(LedgerProperties, StatementsAreComplete) {
  std::mt19937_64 rng(72);
  RandomLedger r(rng, 600);
  std::set<std::string> artists;
  for (const auto& [song, a] : r.artists) artists.insert(a);
  Money sum = 0;
  for (const auto& a : artists) {
    const auto s = r.ledger.statement(a);
    Money lines = 0;
    for (const auto& l : s.lines) lines += l.amount;
    ASSERT_EQ(lines, s.total);
    ASSERT_EQ(s.total, r.paid[a]) << a;
    sum += s.total;
  }
  EXPECT_EQ(sum + r.platform + r.ledger.tta_pool_balance(), r.fees);
}

TEST(LedgerProperties, HigherTierNeverPaysAnArtistLess) {
  std::mt19937_64 rng(73);
  const Tariff t;
  std::size_t violations = 0;
  std::string first;
  for (int i = 0; i < 5000; ++i) {
    std::map<SongId, double> w;
    std::map<SongId, std::string> artists;
    const auto n = std::uniform_int_distribution<int>(1, 12)(rng);
    for (int j = 0; j < n; ++j) {
      w[j] = std::uniform_real_distribution<double>(0.001, 1.0)(rng);
      artists[j] = "a" + std::to_string(std::uniform_int_distribution<int>(0, 8)(rng));
    }
    const double fraction = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    std::vector<Allocation> tiers;
    for (auto use : kAllIntendedUses) tiers.push_back(allocate(compute_fee(use, t), w, fraction, t, by_song(artists)));
    for (std::size_t k = 1; k < tiers.size(); ++k) {
      for (const auto& c : tiers[k - 1].credits) {
        if (amount_of(tiers[k], c.artist_id) < c.amount) {
          if (violations++ == 0) first = "trial " + std::to_string(i) + " artist " + c.artist_id;
        }
      }
    }
  }
  EXPECT_EQ(violations, 0u) << first;
}

TEST(LedgerProperties, EverySingleByteMutationIsDetected) {
  std::mt19937_64 rng(74);
  RandomLedger lg(rng, 120);
  const auto text = lg.ledger.export_jsonl();
  {
    std::istringstream in(text);
    ASSERT_TRUE(verify_jsonl(in).ok);
  }
  const auto r = mutation_sweep(text, {0x01, 0x20, 0x80});
  EXPECT_EQ(r.mutations, text.size() * 3);
  EXPECT_EQ(r.undetected, 0u) << r.first_undetected;

  // Spot-check the sweep against full re-verification.
  for (std::size_t pos = 0; pos < text.size(); pos += 97) {
    std::string m = text;
    m[pos] = static_cast<char>(m[pos] ^ 0x01);
    std::istringstream in(m);
    ASSERT_FALSE(verify_jsonl(in).ok) << pos;
  }
}

TEST(LedgerChain, IncrementalVerifierMatchesStreamVerifier) {
  std::mt19937_64 rng(75);
  RandomLedger r(rng, 30);
  const auto text = r.ledger.export_jsonl();
  JsonlChainVerifier v;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) ASSERT_TRUE(v.feed(line));
  EXPECT_EQ(v.status().entries, r.ledger.size());
  EXPECT_FALSE(v.feed("{}"));
  EXPECT_FALSE(v.status().ok);
  EXPECT_EQ(v.status().broken_at, r.ledger.size());
}
