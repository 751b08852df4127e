#include "tmepsr/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "tmepsr/errors.hpp"

namespace tmepsr {

namespace {

constexpr const char* kHeader = "user_id\titem_id\texpl_id\ttimestamp";

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

}  // namespace

std::size_t Vocabulary::add(const std::string& id) {
  auto [it, inserted] = index_.try_emplace(id, ids_.size());
  if (inserted) ids_.push_back(id);
  return it->second;
}

std::size_t Vocabulary::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw DataError("unknown id '" + id + "'");
  return it->second;
}

Vocabulary Vocabulary::from_ids(std::vector<std::string> ids) {
  Vocabulary vocab;
  for (const auto& id : ids) {
    if (vocab.contains(id)) throw DataError("duplicate vocabulary id '" + id + "'");
    vocab.add(id);
  }
  return vocab;
}

InteractionSequence InteractionSequence::prefix(std::size_t n) const {
  InteractionSequence out;
  out.user_index = user_index;
  n = std::min(n, length());
  out.items.assign(items.begin(), items.begin() + n);
  out.expls.assign(expls.begin(), expls.begin() + n);
  out.times.assign(times.begin(), times.begin() + n);
  return out;
}

InteractionSequence SplitSequence::train_and_valid() const {
  InteractionSequence out = train;
  out.items.push_back(valid_item);
  out.expls.push_back(valid_expl);
  out.times.push_back(valid_time);
  return out;
}

InteractionSequence Batch::row(std::size_t b) const {
  InteractionSequence out;
  out.user_index = users.at(b);
  for (std::size_t j = 0; j < lengths[b]; ++j) {
    out.items.push_back(items[cell(b, j)]);
    out.expls.push_back(expls[cell(b, j)]);
    out.times.push_back(times[cell(b, j)]);
  }
  return out;
}

std::vector<Interaction> parse_interactions(std::istream& in) {
  std::vector<Interaction> rows;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw DataError("empty interaction file");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kHeader) throw DataError("expected header '" + std::string(kHeader) + "'", line_no);
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 4) {
      throw DataError("expected 4 tab-separated fields, found " + std::to_string(fields.size()), line_no);
    }
    for (std::size_t f = 0; f < 3; ++f) {
      if (fields[f].empty()) throw DataError("empty id field", line_no);
    }
    const std::string& ts = fields[3];
    std::int64_t timestamp = 0;
    const auto [ptr, ec] = std::from_chars(ts.data(), ts.data() + ts.size(), timestamp);
    if (ec != std::errc() || ptr != ts.data() + ts.size() || ts.empty()) {
      throw DataError("timestamp '" + ts + "' is not an integer", line_no);
    }
    if (timestamp < 0) throw DataError("negative timestamp " + ts, line_no);
    rows.push_back({fields[0], fields[1], fields[2], timestamp});
  }
  return rows;
}

std::vector<Interaction> load_interactions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_interactions(in);
}

void write_interactions(std::ostream& out, std::span<const Interaction> rows) {
  out << kHeader << '\n';
  for (const auto& r : rows) out << r.user_id << '\t' << r.item_id << '\t' << r.expl_id << '\t' << r.timestamp << '\n';
}

void save_interactions(const std::filesystem::path& path, std::span<const Interaction> rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_interactions(out, rows);
}

Corpus build_corpus(std::span<const Interaction> interactions) {
  if (interactions.empty()) throw DataError("no interactions");

  Vocabulary users;
  std::vector<std::vector<std::size_t>> rows_by_user;
  for (std::size_t i = 0; i < interactions.size(); ++i) {
    const std::size_t u = users.add(interactions[i].user_id);
    if (u == rows_by_user.size()) rows_by_user.emplace_back();
    rows_by_user[u].push_back(i);
  }

  Corpus corpus;
  std::vector<bool> kept(users.size(), false);
  for (std::size_t u = 0; u < users.size(); ++u) {
    kept[u] = rows_by_user[u].size() >= 3;
    if (!kept[u]) ++corpus.dropped_users;
  }
  // Vocabularies follow file order over kept users only.
  for (const auto& r : interactions) {
    if (!kept[users.index_of(r.user_id)]) continue;
    corpus.items.add(r.item_id);
    corpus.expls.add(r.expl_id);
  }

  for (std::size_t u = 0; u < users.size(); ++u) {
    if (!kept[u]) continue;
    auto order = rows_by_user[u];
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return interactions[a].timestamp < interactions[b].timestamp;
    });
    InteractionSequence seq;
    seq.user_index = corpus.user_ids.size();
    for (std::size_t i : order) {
      seq.items.push_back(corpus.items.index_of(interactions[i].item_id));
      seq.expls.push_back(corpus.expls.index_of(interactions[i].expl_id));
      seq.times.push_back(interactions[i].timestamp);
    }
    corpus.user_ids.push_back(users.id_of(u));
    corpus.sequences.push_back(std::move(seq));
  }
  if (corpus.sequences.empty()) throw DataError("corpus is empty after dropping users with fewer than 3 interactions");
  return corpus;
}

SplitSequence split_leave_one_out(const InteractionSequence& sequence) {
  const std::size_t n = sequence.length();
  if (n < 3) throw DataError("leave-one-out split needs at least 3 interactions, got " + std::to_string(n));
  SplitSequence split;
  split.train = sequence.prefix(n - 2);
  split.valid_item = sequence.items[n - 2];
  split.valid_expl = sequence.expls[n - 2];
  split.valid_time = sequence.times[n - 2];
  split.test_item = sequence.items[n - 1];
  split.test_expl = sequence.expls[n - 1];
  split.test_time = sequence.times[n - 1];
  return split;
}

InteractionSequence truncate_recent(const InteractionSequence& sequence, std::size_t max_len) {
  if (sequence.length() <= max_len) return sequence;
  const std::size_t drop = sequence.length() - max_len;
  InteractionSequence out;
  out.user_index = sequence.user_index;
  out.items.assign(sequence.items.begin() + drop, sequence.items.end());
  out.expls.assign(sequence.expls.begin() + drop, sequence.expls.end());
  out.times.assign(sequence.times.begin() + drop, sequence.times.end());
  return out;
}

std::vector<Batch> make_batches(std::span<const InteractionSequence> sequences, std::size_t batch_size,
                                std::size_t max_len, std::uint64_t seed) {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be at least 1");
  if (max_len == 0) throw std::invalid_argument("max_len must be at least 1");
  std::vector<std::size_t> order(sequences.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t stop = std::min(order.size(), start + batch_size);
    Batch batch;
    batch.batch_size = stop - start;
    std::vector<InteractionSequence> rows;
    for (std::size_t i = start; i < stop; ++i) {
      rows.push_back(truncate_recent(sequences[order[i]], max_len));
      batch.max_length = std::max(batch.max_length, rows.back().length());
    }
    const std::size_t cells = batch.batch_size * batch.max_length;
    batch.items.assign(cells, 0);
    batch.expls.assign(cells, 0);
    batch.times.assign(cells, 0);
    batch.mask.assign(cells, false);
    for (std::size_t b = 0; b < rows.size(); ++b) {
      batch.users.push_back(rows[b].user_index);
      batch.lengths.push_back(rows[b].length());
      for (std::size_t j = 0; j < rows[b].length(); ++j) {
        batch.items[batch.cell(b, j)] = rows[b].items[j];
        batch.expls[batch.cell(b, j)] = rows[b].expls[j];
        batch.times[batch.cell(b, j)] = rows[b].times[j];
        batch.mask[batch.cell(b, j)] = true;
      }
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace tmepsr
