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

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace cuembed {

struct Triple {
  std::size_t user;
  std::size_t item;
  std::uint64_t count;  // summed play count, >= 1
};

// Play-count triplets with vocabularies in first-appearance order. At most
// one triple per (user, item) pair; duplicate input lines are summed.
struct InteractionSet {
  std::vector<std::string> user_vocab;
  std::vector<std::string> item_vocab;
  std::vector<Triple> triples;
};

// Binarized interactions: per-user sorted positive item sets.
struct BinaryInteractions {
  std::size_t num_items = 0;
  std::vector<std::vector<std::size_t>> positives;  // indexed by user

  std::size_t num_users() const { return positives.size(); }
};

// Item-wise split; test items are cold-start by construction.
struct ItemSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> valid;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;
};

struct TagSet {
  std::vector<std::string> tag_vocab;
  std::vector<std::string> items;                 // first-appearance order
  std::vector<std::vector<std::uint8_t>> labels;  // items x tag_vocab, 0/1

  // Label row for an item id, or nullptr when the item was dropped.
  const std::vector<std::uint8_t>* label_row(const std::string& item) const;
};

// Pair-wise holdout over a fixed item universe; all three parts share every
// user and item, so evaluation is warm-start. Each user keeps at least one
// training positive whenever they have any.
struct PairHoldout {
  BinaryInteractions train;
  BinaryInteractions valid;
  BinaryInteractions test;
};

// Parses `user<TAB>song<TAB>count` lines. Blank lines are skipped; anything
// else malformed raises DataError with the 1-based line number.
InteractionSet load_triplets(const std::string& path);

// As load_triplets, reading from an in-memory buffer (used by tests).
InteractionSet parse_triplets(const std::string& text);

// Keeps the n_items items with the largest total play counts, then the
// n_users users with the most retained (user,item) pairs. Ties break toward
// the earlier vocabulary entry; survivor order follows the original vocab.
InteractionSet filter_topk(const InteractionSet& s, std::size_t n_items,
                           std::size_t n_users);

BinaryInteractions binarize(const InteractionSet& s);

// Seeded shuffle, then contiguous assignment with rounded part sizes.
ItemSplit split_items(std::size_t num_items, std::array<double, 3> ratios,
                      std::uint64_t seed);

// score(i) = number of distinct users with a positive for item i. One global
// ranking; no per-user state.
std::vector<double> popularity_scores(const BinaryInteractions& b);

// Parses `song<TAB>tag1,tag2,...` lines, keeps the n_tags most frequent tags
// and drops items left without any retained tag.
TagSet load_tags(const std::string& path, std::size_t n_tags = 50);
TagSet parse_tags(const std::string& text, std::size_t n_tags = 50);

PairHoldout holdout_pairs(const BinaryInteractions& b, double valid_frac,
                          double test_frac, std::uint64_t seed);

}  // namespace cuembed
