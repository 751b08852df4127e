#pragma once

// Interaction logs, vocabularies, leave-one-out splits and padded batches.
//
// File format: UTF-8 TSV with the header `user_id\titem_id\texpl_id\ttimestamp`
// and one interaction per line; timestamps are non-negative integer seconds.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace tmepsr {

struct Interaction {
  std::string user_id;
  std::string item_id;
  std::string expl_id;
  std::int64_t timestamp = 0;

  bool operator==(const Interaction&) const = default;
};

// Raw id <-> dense index, indices assigned in order of first appearance.
class Vocabulary {
 public:
  std::size_t add(const std::string& id);
  std::size_t index_of(const std::string& id) const;  // throws DataError if unknown
  bool contains(const std::string& id) const { return index_.contains(id); }
  const std::string& id_of(std::size_t index) const { return ids_.at(index); }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }

  static Vocabulary from_ids(std::vector<std::string> ids);

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct InteractionSequence {
  std::size_t user_index = 0;
  std::vector<std::size_t> items;
  std::vector<std::size_t> expls;
  std::vector<std::int64_t> times;

  std::size_t length() const { return items.size(); }
  // First `n` interactions as a new sequence.
  InteractionSequence prefix(std::size_t n) const;
};

struct SplitSequence {
  InteractionSequence train;  // first n-2 interactions
  std::size_t valid_item = 0, valid_expl = 0;
  std::int64_t valid_time = 0;
  std::size_t test_item = 0, test_expl = 0;
  std::int64_t test_time = 0;

  // train + validation interaction: the input used when scoring the test target.
  InteractionSequence train_and_valid() const;
};

struct Corpus {
  std::vector<InteractionSequence> sequences;
  std::vector<std::string> user_ids;  // indexed by InteractionSequence::user_index
  Vocabulary items;
  Vocabulary expls;
  std::size_t dropped_users = 0;
};

// Right-padded B×L batch; padded cells hold 0 and mask false.
struct Batch {
  std::size_t batch_size = 0;
  std::size_t max_length = 0;
  std::vector<std::size_t> users;
  std::vector<std::size_t> items;
  std::vector<std::size_t> expls;
  std::vector<std::int64_t> times;
  std::vector<bool> mask;
  std::vector<std::size_t> lengths;

  std::size_t cell(std::size_t b, std::size_t j) const { return b * max_length + j; }
  // Unpadded row b as a sequence.
  InteractionSequence row(std::size_t b) const;
};

std::vector<Interaction> parse_interactions(std::istream& in);
std::vector<Interaction> load_interactions(const std::filesystem::path& path);
void write_interactions(std::ostream& out, std::span<const Interaction> rows);
void save_interactions(const std::filesystem::path& path, std::span<const Interaction> rows);

// Groups by user (first-appearance order), sorts each user's interactions by
// (timestamp, file order), drops users with fewer than 3 interactions.
Corpus build_corpus(std::span<const Interaction> interactions);

SplitSequence split_leave_one_out(const InteractionSequence& sequence);

// Shuffles with `seed`, keeps the most recent `max_len` steps of long sequences.
std::vector<Batch> make_batches(std::span<const InteractionSequence> sequences, std::size_t batch_size,
                                std::size_t max_len, std::uint64_t seed);

// Most recent `max_len` steps.
InteractionSequence truncate_recent(const InteractionSequence& sequence, std::size_t max_len);

}  // namespace tmepsr
