#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "convformer/model.hpp"
#include "convformer/rng.hpp"

namespace convformer::data {

struct UserSequence {
  std::string label;           // user id as it appeared in the source file
  std::vector<ItemId> items;   // chronological, ids in [1, item_count]
};

/// Immutable set of user sequences with leave-one-out views: the last item
/// is the test target, the second-to-last the validation target, and
/// everything before those is the training part.
class SequenceDataset {
 public:
  SequenceDataset() = default;
  SequenceDataset(std::vector<UserSequence> users, std::size_t item_count,
                  std::vector<std::string> item_labels = {});

  std::size_t user_count() const noexcept { return users_.size(); }
  std::size_t item_count() const noexcept { return item_count_; }
  std::size_t action_count() const noexcept { return actions_; }
  std::size_t vocab_size() const noexcept { return item_count_ + 1; }

  const UserSequence& user(std::size_t u) const { return users_.at(u); }
  std::span<const ItemId> sequence(std::size_t u) const { return users_.at(u).items; }
  std::span<const ItemId> train_part(std::size_t u) const;
  std::span<const ItemId> valid_history(std::size_t u) const { return train_part(u); }
  std::span<const ItemId> test_history(std::size_t u) const;
  ItemId valid_target(std::size_t u) const;
  ItemId test_target(std::size_t u) const;

  /// Original label for an item id; the id itself when no labels were kept.
  std::string item_label(ItemId id) const;
  const std::vector<std::string>& item_labels() const noexcept { return item_labels_; }

 private:
  std::vector<UserSequence> users_;
  std::size_t item_count_ = 0;
  std::size_t actions_ = 0;
  std::vector<std::string> item_labels_;  // index = id; [0] is empty
};

/// Keeps users and items with at least `k` interactions, repeating until
/// nothing changes. Works on raw labels; ids are assigned afterwards.
struct RawSequence {
  std::string user;
  std::vector<std::string> items;
};
std::vector<RawSequence> k_core_filter(std::vector<RawSequence> raw, std::size_t k);

/// Parses "user item item ..." lines. A user appearing on several lines has
/// the items appended in file order, so the one-interaction-per-line layout
/// is accepted too. Blank lines are skipped.
std::vector<RawSequence> parse_sequences(std::istream& in, const std::string& source);

/// Builds a dataset from raw sequences: ids follow order of first appearance.
SequenceDataset remap(const std::vector<RawSequence>& raw);

SequenceDataset load_sequences(const std::filesystem::path& path, std::size_t min_count = 5);
void write_sequences(std::ostream& out, const SequenceDataset& ds);
void write_sequences(const std::filesystem::path& path, const SequenceDataset& ds);

/// Most recent L items, left-padded with 0.
std::vector<ItemId> pad_left(std::span<const ItemId> seq, std::size_t L);

/// Uniform over [1, item_count] without the target.
ItemId sample_negative(ItemId target, Rng& rng, std::size_t item_count);
/// Uniform over items absent from `history` (sorted, unique).
ItemId sample_negative_strict(std::span<const ItemId> sorted_history, Rng& rng, std::size_t item_count);

enum class NegativeMode { Target, History };

/// Shifted next-item example from a training part: inputs s[:-1], targets
/// s[1:], one negative per target position.
TrainingExample make_training_example(std::span<const ItemId> train_part, std::size_t L, Rng& rng,
                                      std::size_t item_count, NegativeMode mode = NegativeMode::Target);

enum class Split { Valid, Test };
ItemId target_of(const SequenceDataset& ds, std::size_t u, Split split);
std::span<const ItemId> history_of(const SequenceDataset& ds, std::size_t u, Split split);

/// Positive first, then `negatives` distinct items the user never touched.
std::vector<ItemId> build_candidates_1vs99(const SequenceDataset& ds, std::size_t u, Split split, Rng& rng,
                                           std::size_t negatives = 99);

/// Target first, then every item outside the history up to the target, in id order.
std::vector<ItemId> full_sort_candidates(const SequenceDataset& ds, std::size_t u, Split split);

struct CandidateFile {
  // users[u] lists candidate ids for dataset user u; users[u][0] is the positive
  std::vector<std::vector<ItemId>> users;
};

CandidateFile build_candidate_file(const SequenceDataset& ds, Split split, std::uint64_t seed,
                                   std::size_t negatives = 99);
/// One line per user: "<user index + 1>: id0 id1 ... idN".
void write_candidates(std::ostream& out, const CandidateFile& c);
void write_candidates(const std::filesystem::path& path, const CandidateFile& c);
CandidateFile read_candidates(std::istream& in, const std::string& source);
CandidateFile read_candidates(const std::filesystem::path& path);
/// Throws UserError unless every user has a row whose positive matches the split target.
void check_candidates(const CandidateFile& c, const SequenceDataset& ds, Split split);

}  // namespace convformer::data
