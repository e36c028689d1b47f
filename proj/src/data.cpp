#include "convformer/data.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "convformer/error.hpp"

namespace convformer::data {

SequenceDataset::SequenceDataset(std::vector<UserSequence> users, std::size_t item_count,
                                 std::vector<std::string> item_labels)
    : users_(std::move(users)), item_count_(item_count), item_labels_(std::move(item_labels)) {
  if (item_count_ < 1) throw UserError("dataset has no items");
  if (!item_labels_.empty() && item_labels_.size() != item_count_ + 1) {
    throw std::invalid_argument("item_labels must have item_count + 1 entries");
  }
  for (const auto& u : users_) {
    if (u.items.size() < 3) {
      throw UserError("user '" + u.label + "' has " + std::to_string(u.items.size()) +
                      " items; leave-one-out needs at least 3");
    }
    for (ItemId id : u.items) {
      if (id == kPaddingItem || id > item_count_) {
        throw UserError("user '" + u.label + "': item id " + std::to_string(id) + " outside [1, " +
                        std::to_string(item_count_) + "]");
      }
    }
    actions_ += u.items.size();
  }
}

std::span<const ItemId> SequenceDataset::train_part(std::size_t u) const {
  const auto& s = users_.at(u).items;
  return std::span<const ItemId>(s).first(s.size() - 2);
}

std::span<const ItemId> SequenceDataset::test_history(std::size_t u) const {
  const auto& s = users_.at(u).items;
  return std::span<const ItemId>(s).first(s.size() - 1);
}

ItemId SequenceDataset::valid_target(std::size_t u) const {
  const auto& s = users_.at(u).items;
  return s[s.size() - 2];
}

ItemId SequenceDataset::test_target(std::size_t u) const { return users_.at(u).items.back(); }

std::string SequenceDataset::item_label(ItemId id) const {
  if (id > item_count_) throw std::out_of_range("item id out of range");
  return item_labels_.empty() ? std::to_string(id) : item_labels_[id];
}

std::vector<RawSequence> k_core_filter(std::vector<RawSequence> raw, std::size_t k) {
  // intern item labels so the fixpoint loop works on integers
  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::string> names;
  std::vector<std::vector<std::size_t>> seqs(raw.size());
  for (std::size_t u = 0; u < raw.size(); ++u) {
    for (const auto& it : raw[u].items) {
      auto [pos, inserted] = index.emplace(it, names.size());
      if (inserted) names.push_back(it);
      seqs[u].push_back(pos->second);
    }
  }
  std::vector<bool> user_alive(raw.size(), true);
  std::vector<std::size_t> item_count(names.size());
  bool changed = true;
  while (changed) {
    changed = false;
    std::fill(item_count.begin(), item_count.end(), 0);
    for (std::size_t u = 0; u < seqs.size(); ++u) {
      if (!user_alive[u]) continue;
      for (auto i : seqs[u]) ++item_count[i];
    }
    for (std::size_t u = 0; u < seqs.size(); ++u) {
      if (!user_alive[u]) continue;
      auto& s = seqs[u];
      const auto before = s.size();
      std::erase_if(s, [&](std::size_t i) { return item_count[i] < k; });
      if (s.size() != before) changed = true;
      if (s.size() < k) {
        user_alive[u] = false;
        changed = true;
      }
    }
  }
  std::vector<RawSequence> out;
  for (std::size_t u = 0; u < raw.size(); ++u) {
    if (!user_alive[u]) continue;
    RawSequence r{std::move(raw[u].user), {}};
    r.items.reserve(seqs[u].size());
    for (auto i : seqs[u]) r.items.push_back(names[i]);
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

bool is_decimal(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace

std::vector<RawSequence> parse_sequences(std::istream& in, const std::string& source) {
  std::vector<RawSequence> out;
  std::unordered_map<std::string, std::size_t> by_user;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string user;
    if (!(ls >> user)) continue;
    std::vector<std::string> items;
    for (std::string tok; ls >> tok;) {
      if (!is_decimal(tok)) {
        throw UserError(source + ":" + std::to_string(lineno) + ": item '" + tok + "' is not a non-negative integer");
      }
      items.push_back(std::move(tok));
    }
    if (items.empty()) {
      throw UserError(source + ":" + std::to_string(lineno) + ": expected a user id followed by item ids");
    }
    auto [pos, inserted] = by_user.emplace(user, out.size());
    if (inserted) out.push_back(RawSequence{user, {}});
    auto& dst = out[pos->second].items;
    dst.insert(dst.end(), std::make_move_iterator(items.begin()), std::make_move_iterator(items.end()));
  }
  if (out.empty()) throw UserError(source + ": no sequences found (empty file)");
  return out;
}

SequenceDataset remap(const std::vector<RawSequence>& raw) {
  std::unordered_map<std::string, ItemId> ids;
  std::vector<std::string> labels{""};
  std::vector<UserSequence> users;
  users.reserve(raw.size());
  for (const auto& r : raw) {
    UserSequence u{r.user, {}};
    u.items.reserve(r.items.size());
    for (const auto& it : r.items) {
      auto [pos, inserted] = ids.emplace(it, static_cast<ItemId>(labels.size()));
      if (inserted) labels.push_back(it);
      u.items.push_back(pos->second);
    }
    users.push_back(std::move(u));
  }
  const std::size_t n = labels.size() - 1;
  return SequenceDataset(std::move(users), n, std::move(labels));
}

SequenceDataset load_sequences(const std::filesystem::path& path, std::size_t min_count) {
  std::ifstream in(path);
  if (!in) throw UserError("cannot open sequence file '" + path.string() + "'");
  auto raw = k_core_filter(parse_sequences(in, path.string()), min_count);
  if (raw.empty()) throw UserError(path.string() + ": no users survive the " + std::to_string(min_count) + "-core filter");
  return remap(raw);
}

void write_sequences(std::ostream& out, const SequenceDataset& ds) {
  for (std::size_t u = 0; u < ds.user_count(); ++u) {
    out << ds.user(u).label;
    for (ItemId id : ds.sequence(u)) out << ' ' << ds.item_label(id);
    out << '\n';
  }
}

void write_sequences(const std::filesystem::path& path, const SequenceDataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UserError("cannot write '" + path.string() + "'");
  write_sequences(out, ds);
}

std::vector<ItemId> pad_left(std::span<const ItemId> seq, std::size_t L) {
  std::vector<ItemId> out(L, kPaddingItem);
  const std::size_t n = std::min(seq.size(), L);
  std::copy(seq.end() - static_cast<std::ptrdiff_t>(n), seq.end(), out.end() - static_cast<std::ptrdiff_t>(n));
  return out;
}

ItemId sample_negative(ItemId target, Rng& rng, std::size_t item_count) {
  if (item_count < 2) throw std::invalid_argument("sample_negative needs item_count >= 2");
  for (;;) {
    const auto id = static_cast<ItemId>(1 + rng.uniform_index(item_count));
    if (id != target) return id;
  }
}

ItemId sample_negative_strict(std::span<const ItemId> sorted_history, Rng& rng, std::size_t item_count) {
  if (sorted_history.size() >= item_count) throw UserError("no item outside the history to sample");
  for (;;) {
    const auto id = static_cast<ItemId>(1 + rng.uniform_index(item_count));
    if (!std::binary_search(sorted_history.begin(), sorted_history.end(), id)) return id;
  }
}

TrainingExample make_training_example(std::span<const ItemId> train_part, std::size_t L, Rng& rng,
                                      std::size_t item_count, NegativeMode mode) {
  if (train_part.size() < 2) throw UserError("training part needs at least two items");
  TrainingExample ex;
  ex.input = pad_left(train_part.first(train_part.size() - 1), L);
  ex.positives = pad_left(train_part.subspan(1), L);
  ex.negatives.assign(L, kPaddingItem);
  std::vector<ItemId> history;
  if (mode == NegativeMode::History) {
    history.assign(train_part.begin(), train_part.end());
    std::sort(history.begin(), history.end());
    history.erase(std::unique(history.begin(), history.end()), history.end());
  }
  for (std::size_t l = 0; l < L; ++l) {
    if (ex.positives[l] == kPaddingItem) continue;
    ex.negatives[l] = mode == NegativeMode::Target ? sample_negative(ex.positives[l], rng, item_count)
                                                   : sample_negative_strict(history, rng, item_count);
  }
  return ex;
}

ItemId target_of(const SequenceDataset& ds, std::size_t u, Split split) {
  return split == Split::Valid ? ds.valid_target(u) : ds.test_target(u);
}

std::span<const ItemId> history_of(const SequenceDataset& ds, std::size_t u, Split split) {
  return split == Split::Valid ? ds.valid_history(u) : ds.test_history(u);
}

namespace {

std::vector<ItemId> sorted_unique(std::span<const ItemId> s) {
  std::vector<ItemId> v(s.begin(), s.end());
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

std::vector<ItemId> build_candidates_1vs99(const SequenceDataset& ds, std::size_t u, Split split, Rng& rng,
                                           std::size_t negatives) {
  const auto touched = sorted_unique(ds.sequence(u));
  const std::size_t n = ds.item_count();
  const std::size_t free = n - touched.size();
  if (free < negatives) {
    throw UserError("user '" + ds.user(u).label + "' has only " + std::to_string(free) +
                    " non-interacted items; need " + std::to_string(negatives));
  }
  std::vector<ItemId> out{target_of(ds, u, split)};
  out.reserve(negatives + 1);
  std::vector<ItemId> chosen;
  while (out.size() < negatives + 1) {
    const auto id = static_cast<ItemId>(1 + rng.uniform_index(n));
    if (std::binary_search(touched.begin(), touched.end(), id)) continue;
    if (std::find(chosen.begin(), chosen.end(), id) != chosen.end()) continue;
    chosen.push_back(id);
    out.push_back(id);
  }
  return out;
}

std::vector<ItemId> full_sort_candidates(const SequenceDataset& ds, std::size_t u, Split split) {
  const ItemId target = target_of(ds, u, split);
  const auto hist = history_of(ds, u, split);
  std::vector<bool> seen(ds.vocab_size(), false);
  for (ItemId id : hist) seen[id] = true;
  seen[target] = true;
  std::vector<ItemId> out{target};
  for (ItemId id = 1; id <= ds.item_count(); ++id) {
    if (!seen[id]) out.push_back(id);
  }
  return out;
}

CandidateFile build_candidate_file(const SequenceDataset& ds, Split split, std::uint64_t seed, std::size_t negatives) {
  Rng rng(seed);
  CandidateFile c;
  c.users.reserve(ds.user_count());
  for (std::size_t u = 0; u < ds.user_count(); ++u) c.users.push_back(build_candidates_1vs99(ds, u, split, rng, negatives));
  return c;
}

void write_candidates(std::ostream& out, const CandidateFile& c) {
  for (std::size_t u = 0; u < c.users.size(); ++u) {
    out << (u + 1) << ':';
    for (ItemId id : c.users[u]) out << ' ' << id;
    out << '\n';
  }
}

void write_candidates(const std::filesystem::path& path, const CandidateFile& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UserError("cannot write '" + path.string() + "'");
  write_candidates(out, c);
}

CandidateFile read_candidates(std::istream& in, const std::string& source) {
  CandidateFile c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto where = source + ":" + std::to_string(lineno);
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw UserError(where + ": missing ':' after user id");
    std::size_t user = 0;
    try {
      std::size_t used = 0;
      user = std::stoul(line.substr(0, colon), &used);
      if (used != colon) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw UserError(where + ": bad user id");
    }
    if (user != c.users.size() + 1) {
      throw UserError(where + ": expected user " + std::to_string(c.users.size() + 1) + ", got " + std::to_string(user));
    }
    std::istringstream ls(line.substr(colon + 1));
    std::vector<ItemId> ids;
    for (std::string tok; ls >> tok;) {
      if (!is_decimal(tok) || tok.size() > 9) throw UserError(where + ": bad item id '" + tok + "'");
      ids.push_back(static_cast<ItemId>(std::stoul(tok)));
    }
    if (ids.size() < 2) throw UserError(where + ": need a positive and at least one negative");
    c.users.push_back(std::move(ids));
  }
  if (c.users.empty()) throw UserError(source + ": empty candidate file");
  return c;
}

CandidateFile read_candidates(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UserError("cannot open candidate file '" + path.string() + "'");
  return read_candidates(in, path.string());
}

void check_candidates(const CandidateFile& c, const SequenceDataset& ds, Split split) {
  if (c.users.size() != ds.user_count()) {
    throw UserError("candidate file lists " + std::to_string(c.users.size()) + " users; dataset has " +
                    std::to_string(ds.user_count()));
  }
  for (std::size_t u = 0; u < c.users.size(); ++u) {
    const auto& row = c.users[u];
    if (row.front() != target_of(ds, u, split)) {
      throw UserError("candidate row for user " + std::to_string(u + 1) + " does not start with the target item");
    }
    for (ItemId id : row) {
      if (id == kPaddingItem || id > ds.item_count()) {
        throw UserError("candidate row for user " + std::to_string(u + 1) + ": item " + std::to_string(id) + " out of range");
      }
    }
  }
}

}  // namespace convformer::data
