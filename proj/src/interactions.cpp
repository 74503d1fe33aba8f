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

#include "cuembed/interactions.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "cuembed/errors.hpp"
#include "cuembed/rng.hpp"

namespace cuembed {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Splits on '\t', trimming one trailing '\r' from the line first.
std::vector<std::string_view> tsv_fields(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

std::uint64_t parse_count(std::string_view s, std::size_t line_no) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw DataError("triplets line " + std::to_string(line_no) +
                    ": count is not an unsigned integer");
  }
  if (v < 1) {
    throw DataError("triplets line " + std::to_string(line_no) +
                    ": play count must be >= 1");
  }
  return v;
}

template <typename Fn>
void for_each_line(const std::string& text, Fn&& fn) {
  std::size_t start = 0, line_no = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    ++line_no;
    fn(std::string_view(text).substr(start, end - start), line_no);
    start = end + 1;
  }
}

std::size_t intern(std::vector<std::string>& vocab,
                   std::unordered_map<std::string, std::size_t>& index,
                   std::string_view id) {
  const auto it = index.find(std::string(id));
  if (it != index.end()) return it->second;
  const std::size_t idx = vocab.size();
  vocab.emplace_back(id);
  index.emplace(vocab.back(), idx);
  return idx;
}

bool blank(std::string_view line) {
  return line.empty() || (line.size() == 1 && line[0] == '\r');
}

}  // namespace

InteractionSet parse_triplets(const std::string& text) {
  InteractionSet s;
  std::unordered_map<std::string, std::size_t> user_index, item_index;
  std::unordered_map<std::uint64_t, std::size_t> pair_index;  // (u,i) -> triple
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    if (blank(line)) return;
    const auto fields = tsv_fields(line);
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty()) {
      throw DataError("triplets line " + std::to_string(line_no) +
                      ": expected user<TAB>song<TAB>count");
    }
    const std::size_t u = intern(s.user_vocab, user_index, fields[0]);
    const std::size_t i = intern(s.item_vocab, item_index, fields[1]);
    const std::uint64_t count = parse_count(fields[2], line_no);
    const std::uint64_t key = static_cast<std::uint64_t>(u) << 32 | i;
    const auto it = pair_index.find(key);
    if (it != pair_index.end()) {
      s.triples[it->second].count += count;
    } else {
      pair_index.emplace(key, s.triples.size());
      s.triples.push_back(Triple{u, i, count});
    }
  });
  return s;
}

InteractionSet load_triplets(const std::string& path) {
  return parse_triplets(read_file(path));
}

namespace {

// Indices of the k largest totals, ties toward the smaller index; returned
// in ascending index order so survivor vocab order is preserved.
std::vector<std::size_t> top_k(const std::vector<std::uint64_t>& totals,
                               std::size_t k) {
  std::vector<std::size_t> order(totals.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return totals[a] > totals[b];
  });
  order.resize(std::min(k, order.size()));
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace

InteractionSet filter_topk(const InteractionSet& s, std::size_t n_items,
                           std::size_t n_users) {
  if (n_items < 1 || n_users < 1) {
    throw ConfigError("filter_topk: n_items and n_users must be >= 1");
  }
  std::vector<std::uint64_t> item_totals(s.item_vocab.size(), 0);
  for (const Triple& t : s.triples) item_totals[t.item] += t.count;
  const std::vector<std::size_t> kept_items = top_k(item_totals, n_items);

  std::vector<std::size_t> item_map(s.item_vocab.size(), SIZE_MAX);
  for (std::size_t j = 0; j < kept_items.size(); ++j) item_map[kept_items[j]] = j;

  // Activity = number of retained (user,item) pairs after item filtering.
  std::vector<std::uint64_t> user_activity(s.user_vocab.size(), 0);
  for (const Triple& t : s.triples) {
    if (item_map[t.item] != SIZE_MAX) ++user_activity[t.user];
  }
  const std::vector<std::size_t> kept_users = top_k(user_activity, n_users);
  std::vector<std::size_t> user_map(s.user_vocab.size(), SIZE_MAX);
  for (std::size_t j = 0; j < kept_users.size(); ++j) user_map[kept_users[j]] = j;

  InteractionSet out;
  out.item_vocab.reserve(kept_items.size());
  for (std::size_t i : kept_items) out.item_vocab.push_back(s.item_vocab[i]);
  out.user_vocab.reserve(kept_users.size());
  for (std::size_t u : kept_users) out.user_vocab.push_back(s.user_vocab[u]);
  for (const Triple& t : s.triples) {
    if (user_map[t.user] != SIZE_MAX && item_map[t.item] != SIZE_MAX) {
      out.triples.push_back(Triple{user_map[t.user], item_map[t.item], t.count});
    }
  }
  return out;
}

BinaryInteractions binarize(const InteractionSet& s) {
  BinaryInteractions b;
  b.num_items = s.item_vocab.size();
  b.positives.assign(s.user_vocab.size(), {});
  for (const Triple& t : s.triples) b.positives[t.user].push_back(t.item);
  for (auto& row : b.positives) std::sort(row.begin(), row.end());
  return b;
}

ItemSplit split_items(std::size_t num_items, std::array<double, 3> ratios,
                      std::uint64_t seed) {
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::fabs(sum - 1.0) > 1e-9) {
    throw ConfigError("split_items: ratios must sum to 1");
  }
  if (ratios[0] < 0 || ratios[1] < 0 || ratios[2] < 0) {
    throw ConfigError("split_items: ratios must be non-negative");
  }
  if (num_items < 3) throw DataError("split_items: need at least 3 items");

  std::vector<std::size_t> order(num_items);
  for (std::size_t i = 0; i < num_items; ++i) order[i] = i;
  Rng rng = Rng::substream(seed, "item-split");
  rng.shuffle(order);

  const auto n = static_cast<double>(num_items);
  const std::size_t n_train =
      std::min(num_items, static_cast<std::size_t>(std::llround(ratios[0] * n)));
  const std::size_t n_valid = std::min(
      num_items - n_train, static_cast<std::size_t>(std::llround(ratios[1] * n)));

  ItemSplit split;
  split.seed = seed;
  split.train.assign(order.begin(), order.begin() + n_train);
  split.valid.assign(order.begin() + n_train, order.begin() + n_train + n_valid);
  split.test.assign(order.begin() + n_train + n_valid, order.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.valid.begin(), split.valid.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

std::vector<double> popularity_scores(const BinaryInteractions& b) {
  std::vector<double> scores(b.num_items, 0.0);
  for (const auto& row : b.positives) {
    for (std::size_t i : row) scores[i] += 1.0;
  }
  return scores;
}

const std::vector<std::uint8_t>* TagSet::label_row(const std::string& item) const {
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i] == item) return &labels[i];
  }
  return nullptr;
}

TagSet parse_tags(const std::string& text, std::size_t n_tags) {
  if (n_tags < 1) throw ConfigError("parse_tags: n_tags must be >= 1");

  std::vector<std::string> item_ids;
  std::unordered_map<std::string, std::size_t> item_index;
  std::vector<std::vector<std::string>> raw_tags;  // per item, deduplicated

  std::vector<std::string> tag_order;
  std::unordered_map<std::string, std::size_t> tag_index;
  std::vector<std::uint64_t> tag_freq;  // items carrying the tag

  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    if (blank(line)) return;
    const auto fields = tsv_fields(line);
    if (fields.size() != 2 || fields[0].empty()) {
      throw DataError("tags line " + std::to_string(line_no) +
                      ": expected song<TAB>tag1,tag2,...");
    }
    const std::size_t item = intern(item_ids, item_index, fields[0]);
    if (item == raw_tags.size()) raw_tags.emplace_back();

    std::string_view rest = fields[1];
    while (!rest.empty()) {
      const std::size_t comma = rest.find(',');
      const std::string_view tag = rest.substr(0, comma);
      rest = comma == std::string_view::npos ? std::string_view{}
                                             : rest.substr(comma + 1);
      if (tag.empty()) continue;
      std::string tag_str(tag);
      auto& per_item = raw_tags[item];
      if (std::find(per_item.begin(), per_item.end(), tag_str) != per_item.end()) {
        continue;
      }
      per_item.push_back(tag_str);
      const std::size_t t = intern(tag_order, tag_index, tag);
      if (t == tag_freq.size()) tag_freq.push_back(0);
      ++tag_freq[t];
    }
  });

  std::vector<std::size_t> kept = top_k(tag_freq, n_tags);
  std::vector<std::size_t> tag_map(tag_order.size(), SIZE_MAX);
  TagSet out;
  for (std::size_t j = 0; j < kept.size(); ++j) {
    tag_map[kept[j]] = j;
    out.tag_vocab.push_back(tag_order[kept[j]]);
  }
  for (std::size_t i = 0; i < item_ids.size(); ++i) {
    std::vector<std::uint8_t> row(out.tag_vocab.size(), 0);
    bool any = false;
    for (const std::string& tag : raw_tags[i]) {
      const std::size_t t = tag_map[tag_index.at(tag)];
      if (t != SIZE_MAX) {
        row[t] = 1;
        any = true;
      }
    }
    if (any) {
      out.items.push_back(item_ids[i]);
      out.labels.push_back(std::move(row));
    }
  }
  return out;
}

TagSet load_tags(const std::string& path, std::size_t n_tags) {
  return parse_tags(read_file(path), n_tags);
}

PairHoldout holdout_pairs(const BinaryInteractions& b, double valid_frac,
                          double test_frac, std::uint64_t seed) {
  if (valid_frac < 0 || test_frac < 0 || valid_frac + test_frac >= 1.0) {
    throw ConfigError("holdout_pairs: fractions must be non-negative, sum < 1");
  }
  PairHoldout h;
  for (BinaryInteractions* part : {&h.train, &h.valid, &h.test}) {
    part->num_items = b.num_items;
    part->positives.assign(b.num_users(), {});
  }
  Rng rng = Rng::substream(seed, "pair-holdout");
  for (std::size_t u = 0; u < b.num_users(); ++u) {
    std::vector<std::size_t> items = b.positives[u];
    rng.shuffle(items);
    const auto n = static_cast<double>(items.size());
    std::size_t n_test = static_cast<std::size_t>(std::llround(test_frac * n));
    std::size_t n_valid = static_cast<std::size_t>(std::llround(valid_frac * n));
    while (!items.empty() && n_test + n_valid >= items.size()) {
      if (n_valid > 0) {
        --n_valid;  // training positives take priority
      } else {
        --n_test;
      }
    }
    for (std::size_t j = 0; j < items.size(); ++j) {
      if (j < n_test) {
        h.test.positives[u].push_back(items[j]);
      } else if (j < n_test + n_valid) {
        h.valid.positives[u].push_back(items[j]);
      } else {
        h.train.positives[u].push_back(items[j]);
      }
    }
  }
  for (BinaryInteractions* part : {&h.train, &h.valid, &h.test}) {
    for (auto& row : part->positives) std::sort(row.begin(), row.end());
  }
  return h;
}

}  // namespace cuembed
