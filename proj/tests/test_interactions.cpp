// Copyright 2026 The cuembed Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <set>

#include "cuembed/errors.hpp"
#include "cuembed/interactions.hpp"
#include "cuembed/rng.hpp"
#include "doctest.h"

using namespace cuembed;

TEST_CASE("parse_triplets basic, duplicates and boundaries") {
  InteractionSet s = parse_triplets("u1\ts1\t3\nu1\ts2\t1\nu2\ts1\t2\n");
  CHECK(s.user_vocab == std::vector<std::string>{"u1", "u2"});
  CHECK(s.item_vocab == std::vector<std::string>{"s1", "s2"});
  REQUIRE(s.triples.size() == 3);
  CHECK(s.triples[0].count == 3);

  InteractionSet dup = parse_triplets("u\ts\t2\nu\ts\t3\n");
  REQUIRE(dup.triples.size() == 1);
  CHECK(dup.triples[0].count == 5);

  InteractionSet empty = parse_triplets("");
  CHECK(empty.triples.empty());
  CHECK(empty.user_vocab.empty());
}

TEST_CASE("parse_triplets rejects malformed lines with line numbers") {
  using Catch = DataError;
  CHECK_THROWS_WITH_AS(parse_triplets("u\ts\t1\nu\ts\n"),
                       doctest::Contains("line 2"), Catch);
  CHECK_THROWS_AS(parse_triplets("u\ts\t0\n"), Catch);
  CHECK_THROWS_AS(parse_triplets("u\ts\tabc\n"), Catch);
  CHECK_THROWS_AS(parse_triplets("u\ts\t-1\n"), Catch);
  CHECK_THROWS_AS(load_triplets("/nonexistent/file.tsv"), Catch);
}

TEST_CASE("filter_topk keeps the heaviest items then most active users") {
  // item totals: s1=5, s2=9, s3=1, s4=7, s5=2
  const std::string text =
      "a\ts1\t5\n"
      "b\ts2\t9\n"
      "a\ts3\t1\n"
      "c\ts4\t7\n"
      "c\ts5\t2\n"
      "b\ts4\t1\n";
  InteractionSet s = parse_triplets(text);

  InteractionSet f = filter_topk(s, 2, 10);
  CHECK(f.item_vocab == std::vector<std::string>{"s2", "s4"});

  // brute-force oracle over total counts
  std::vector<std::pair<long long, std::string>> totals{
      {-5, "s1"}, {-9, "s2"}, {-1, "s3"}, {-7, "s4"}, {-2, "s5"}};
  std::stable_sort(totals.begin(), totals.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::set<std::string> expect{totals[0].second, totals[1].second};
  for (const std::string& id : f.item_vocab) CHECK(expect.count(id) == 1);

  // after keeping s2,s4: pair counts a=0, b=2, c=1 -> top-2 users are b,c
  InteractionSet fu = filter_topk(s, 2, 2);
  CHECK(fu.user_vocab == std::vector<std::string>{"b", "c"});
  REQUIRE(fu.triples.size() == 3);

  InteractionSet identity = filter_topk(s, 99, 99);
  CHECK(identity.item_vocab == s.item_vocab);
  CHECK(identity.user_vocab == s.user_vocab);
  CHECK(identity.triples.size() == s.triples.size());

  CHECK_THROWS_AS(filter_topk(s, 0, 1), ConfigError);
}

TEST_CASE("filter_topk breaks ties toward the earlier vocab entry") {
  InteractionSet s = parse_triplets("u\ts1\t4\nu\ts2\t4\nv\ts3\t4\n");
  InteractionSet f = filter_topk(s, 2, 10);
  CHECK(f.item_vocab == std::vector<std::string>{"s1", "s2"});
}

TEST_CASE("binarize builds sorted per-user positive sets") {
  InteractionSet s = parse_triplets("u1\ts1\t1\nu1\ts2\t37\nu2\ts2\t2\n");
  BinaryInteractions b = binarize(s);
  CHECK(b.num_items == 2);
  REQUIRE(b.num_users() == 2);
  CHECK(b.positives[0] == std::vector<std::size_t>{0, 1});
  CHECK(b.positives[1] == std::vector<std::size_t>{1});

  // recount oracle: positive-set sizes equal per-user distinct item counts
  for (std::size_t u = 0; u < s.user_vocab.size(); ++u) {
    std::set<std::size_t> items;
    for (const Triple& t : s.triples) {
      if (t.user == u) items.insert(t.item);
    }
    CHECK(b.positives[u].size() == items.size());
  }

  CHECK(binarize(InteractionSet{}).positives.empty());
}

TEST_CASE("split_items produces exact rounded parts deterministically") {
  ItemSplit s = split_items(10, {0.7, 0.1, 0.2}, 99);
  CHECK(s.train.size() == 7);
  CHECK(s.valid.size() == 1);
  CHECK(s.test.size() == 2);

  // partition property
  std::set<std::size_t> all;
  for (const auto* part : {&s.train, &s.valid, &s.test}) {
    for (std::size_t i : *part) {
      CHECK(all.insert(i).second);
      CHECK(i < 10);
    }
  }
  CHECK(all.size() == 10);

  ItemSplit again = split_items(10, {0.7, 0.1, 0.2}, 99);
  CHECK(again.train == s.train);
  CHECK(again.valid == s.valid);
  CHECK(again.test == s.test);

  ItemSplit other = split_items(100, {0.7, 0.1, 0.2}, 1);
  ItemSplit other2 = split_items(100, {0.7, 0.1, 0.2}, 2);
  CHECK(other.train != other2.train);

  CHECK_THROWS_AS(split_items(2, {0.7, 0.1, 0.2}, 0), DataError);
  CHECK_THROWS_AS(split_items(10, {0.7, 0.1, 0.1}, 0), ConfigError);
}

TEST_CASE("popularity_scores counts distinct listeners") {
  InteractionSet s = parse_triplets(
      "a\thit\t1\nb\thit\t9\nc\thit\t2\nc\tniche\t50\nd\tsilent_pad\t1\n");
  BinaryInteractions b = binarize(s);
  std::vector<double> scores = popularity_scores(b);
  REQUIRE(scores.size() == 3);
  CHECK(scores[0] == 3.0);  // hit: a, b, c
  CHECK(scores[1] == 1.0);  // niche: c

  // column-sum oracle
  for (std::size_t i = 0; i < b.num_items; ++i) {
    double col = 0;
    for (const auto& row : b.positives) {
      col += std::count(row.begin(), row.end(), i);
    }
    CHECK(scores[i] == col);
  }
}

TEST_CASE("parse_tags keeps most frequent tags and drops untagged items") {
  // frequencies: rock=3, pop=2, jazz=1
  const std::string text =
      "s1\trock,pop\n"
      "s2\trock\n"
      "s3\trock,pop\n"
      "s4\tjazz\n";
  TagSet t = parse_tags(text, 2);
  CHECK(t.tag_vocab == std::vector<std::string>{"rock", "pop"});
  CHECK(t.items == std::vector<std::string>{"s1", "s2", "s3"});
  REQUIRE(t.labels.size() == 3);
  CHECK(t.labels[0] == std::vector<std::uint8_t>{1, 1});
  CHECK(t.labels[1] == std::vector<std::uint8_t>{1, 0});
  CHECK(t.label_row("s4") == nullptr);
  REQUIRE(t.label_row("s2") != nullptr);

  TagSet all = parse_tags(text, 50);
  CHECK(all.tag_vocab.size() == 3);
  CHECK(all.items.size() == 4);

  CHECK_THROWS_AS(parse_tags("s1\n"), DataError);
  CHECK_THROWS_AS(load_tags("/nonexistent/tags.tsv"), DataError);
}

TEST_CASE("parse_tags merges duplicate item lines and repeated tags") {
  TagSet t = parse_tags("s1\trock,rock\ns1\tpop\n", 50);
  REQUIRE(t.items.size() == 1);
  CHECK(t.labels[0] == std::vector<std::uint8_t>{1, 1});
}

TEST_CASE("holdout_pairs partitions positives and keeps a train positive") {
  Rng rng = Rng::substream(17, "holdout-fixture");
  BinaryInteractions b;
  b.num_items = 40;
  b.positives.resize(30);
  for (auto& row : b.positives) {
    std::set<std::size_t> chosen;
    const std::size_t n = 1 + rng.below(12);
    while (chosen.size() < n) chosen.insert(rng.below(40));
    row.assign(chosen.begin(), chosen.end());
  }

  PairHoldout h = holdout_pairs(b, 0.1, 0.2, 5);
  std::size_t total = 0, test_total = 0;
  for (std::size_t u = 0; u < b.num_users(); ++u) {
    std::set<std::size_t> merged;
    for (const auto* part : {&h.train.positives[u], &h.valid.positives[u],
                             &h.test.positives[u]}) {
      for (std::size_t i : *part) CHECK(merged.insert(i).second);
    }
    std::set<std::size_t> orig(b.positives[u].begin(), b.positives[u].end());
    CHECK(merged == orig);
    CHECK(!h.train.positives[u].empty());
    total += b.positives[u].size();
    test_total += h.test.positives[u].size();
  }
  CHECK(test_total > 0);
  CHECK(test_total < total / 2);

  PairHoldout again = holdout_pairs(b, 0.1, 0.2, 5);
  CHECK(again.test.positives == h.test.positives);

  CHECK_THROWS_AS(holdout_pairs(b, 0.5, 0.5, 1), ConfigError);
}
