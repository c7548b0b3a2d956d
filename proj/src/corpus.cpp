#include "codesearch/corpus.hpp"

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

#include "codesearch/binary_io.hpp"

namespace codesearch {

using nlohmann::json;

JsonlLoad parse_jsonl(std::string_view text) {
  JsonlLoad out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    ++line_no;
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      if (end == text.size()) break;
      continue;
    }
    try {
      const auto j = json::parse(line);
      if (!j.is_object()) throw std::invalid_argument("record is not a JSON object");
      RawPair r;
      for (const char* key : {"id", "docstring", "code"}) {
        if (!j.contains(key)) throw std::invalid_argument(std::string("missing field \"") + key + "\"");
        if (!j.at(key).is_string()) throw std::invalid_argument(std::string("field \"") + key + "\" is not a string");
      }
      r.id = j.at("id").get<std::string>();
      r.docstring = j.at("docstring").get<std::string>();
      r.code = j.at("code").get<std::string>();
      if (j.contains("lang") && j.at("lang").is_string()) r.lang = j.at("lang").get<std::string>();
      out.records.push_back(std::move(r));
    } catch (const std::exception& e) {
      out.errors.push_back({line_no, e.what()});
    }
    if (end == text.size()) break;
  }
  return out;
}

JsonlLoad load_jsonl(const std::string& path) { return parse_jsonl(read_file(path)); }

void save_jsonl(const std::string& path, const std::vector<RawPair>& records) {
  std::string out;
  for (const auto& r : records) {
    json j = {{"id", r.id}, {"docstring", r.docstring}, {"code", r.code}};
    if (!r.lang.empty()) j["lang"] = r.lang;
    out += j.dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

BimodalPair tokenize_pair(const RawPair& raw, const Vocabulary& vocab, const SequenceLimits& limits) {
  BimodalPair p;
  p.id = raw.id;
  p.nl_raw = raw.docstring;
  p.pl_raw = raw.code;
  p.nl_tokens = tokenize(raw.docstring, TextMode::nl, vocab, limits);
  p.pl_tokens = tokenize(raw.code, TextMode::pl, vocab, limits);
  return p;
}

std::vector<BimodalPair> tokenize_pairs(const std::vector<RawPair>& raws, const Vocabulary& vocab,
                                        const SequenceLimits& limits, std::vector<std::string>* dropped) {
  std::vector<BimodalPair> out;
  out.reserve(raws.size());
  for (const auto& r : raws) {
    try {
      out.push_back(tokenize_pair(r, vocab, limits));
    } catch (const std::invalid_argument&) {
      if (dropped) dropped->push_back(r.id);
    }
  }
  return out;
}

DatasetSplit split_dataset(std::vector<BimodalPair> pairs, const SplitSizes& sizes, std::uint64_t seed) {
  const std::size_t held = sizes.dev + sizes.test + sizes.pool_extra;
  if (held > pairs.size()) throw std::invalid_argument("split_dataset: split sizes exceed corpus size");
  Rng rng(seed);
  std::shuffle(pairs.begin(), pairs.end(), rng);
  DatasetSplit s;
  auto it = pairs.begin();
  s.dev.assign(std::make_move_iterator(it), std::make_move_iterator(it + sizes.dev));
  it += sizes.dev;
  s.test.assign(std::make_move_iterator(it), std::make_move_iterator(it + sizes.test));
  it += sizes.test;
  std::vector<BimodalPair> extra(std::make_move_iterator(it), std::make_move_iterator(it + sizes.pool_extra));
  it += sizes.pool_extra;
  s.train.assign(std::make_move_iterator(it), std::make_move_iterator(pairs.end()));
  s.candidates.reserve(held);
  s.candidates.insert(s.candidates.end(), s.dev.begin(), s.dev.end());
  s.candidates.insert(s.candidates.end(), s.test.begin(), s.test.end());
  s.candidates.insert(s.candidates.end(), extra.begin(), extra.end());
  return s;
}

void validate_split(const DatasetSplit& split) {
  std::unordered_set<std::string> seen;
  auto check_part = [&](const std::vector<BimodalPair>& part, const char* name) {
    for (const auto& p : part) {
      if (!seen.insert(p.id).second) {
        throw std::invalid_argument(std::string("dataset: id '") + p.id + "' repeated (in " + name + ")");
      }
    }
  };
  check_part(split.train, "train");
  check_part(split.dev, "dev");
  check_part(split.test, "test");

  std::unordered_set<std::string> pool;
  for (const auto& c : split.candidates) {
    if (!pool.insert(c.id).second) throw std::invalid_argument("dataset: duplicate candidate id '" + c.id + "'");
  }
  for (const auto* part : {&split.dev, &split.test}) {
    for (const auto& p : *part) {
      if (!pool.count(p.id)) throw std::invalid_argument("dataset: gold code for '" + p.id + "' missing from pool");
    }
  }
}

namespace {

json pair_to_json(const BimodalPair& p) {
  return {{"id", p.id}, {"docstring", p.nl_raw}, {"code", p.pl_raw}, {"nl_tokens", p.nl_tokens},
          {"pl_tokens", p.pl_tokens}};
}

void write_pairs(const std::string& path, const std::vector<BimodalPair>& pairs) {
  std::string out;
  for (const auto& p : pairs) {
    out += pair_to_json(p).dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

std::vector<BimodalPair> read_pairs(const std::string& path, std::size_t vocab_size) {
  std::vector<BimodalPair> out;
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      BimodalPair p;
      p.id = j.at("id").get<std::string>();
      p.nl_raw = j.at("docstring").get<std::string>();
      p.pl_raw = j.at("code").get<std::string>();
      p.nl_tokens = j.at("nl_tokens").get<TokenSeq>();
      p.pl_tokens = j.at("pl_tokens").get<TokenSeq>();
      if (p.nl_tokens.empty() || p.pl_tokens.empty()) throw std::invalid_argument("empty token sequence");
      for (const auto* seq : {&p.nl_tokens, &p.pl_tokens}) {
        for (auto t : *seq) {
          if (t < 0 || static_cast<std::size_t>(t) >= vocab_size) throw std::invalid_argument("token id out of range");
        }
      }
      out.push_back(std::move(p));
    } catch (const std::exception& e) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

void save_dataset(const std::string& dir, const DatasetSplit& split, const Vocabulary& vocab) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path d(dir);
  write_pairs((d / "train.jsonl").string(), split.train);
  write_pairs((d / "dev.jsonl").string(), split.dev);
  write_pairs((d / "test.jsonl").string(), split.test);
  write_pairs((d / "candidates.jsonl").string(), split.candidates);
  vocab.save((d / "vocab.json").string());
}

DatasetSplit load_dataset(const std::string& dir, Vocabulary* vocab_out) {
  const std::filesystem::path d(dir);
  auto vocab = Vocabulary::load((d / "vocab.json").string());
  DatasetSplit s;
  s.train = read_pairs((d / "train.jsonl").string(), vocab.size());
  s.dev = read_pairs((d / "dev.jsonl").string(), vocab.size());
  s.test = read_pairs((d / "test.jsonl").string(), vocab.size());
  s.candidates = read_pairs((d / "candidates.jsonl").string(), vocab.size());
  validate_split(s);
  if (vocab_out) *vocab_out = std::move(vocab);
  return s;
}

std::uint64_t corpus_hash(const std::vector<BimodalPair>& candidates) {
  Fnv1a h;
  for (const auto& c : candidates) {
    h.update(c.id);
    h.update(std::string_view("\0", 1));
    h.update(c.pl_raw);
    h.update(std::string_view("\0", 1));
  }
  return h.digest();
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> random_derangement(std::size_t n, Rng& rng) {
  if (n < 2) throw std::invalid_argument("derangement needs n >= 2");
  std::vector<std::size_t> perm(n);
  // Rejection sampling over uniform permutations is uniform over derangements;
  // acceptance probability tends to 1/e.
  for (;;) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) ok = perm[i] != i;
    if (ok) return perm;
  }
}

BatchStream::BatchStream(const std::vector<BimodalPair>& pairs, std::size_t batch_size, std::uint64_t seed)
    : pairs_(&pairs), batch_size_(batch_size), order_(pairs.size()), rng_(seed) {
  if (batch_size < 2) throw std::invalid_argument("batch size must be >= 2 (in-batch negatives)");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::shuffle(order_.begin(), order_.end(), rng_);
}

std::size_t BatchStream::batch_count() const {
  const std::size_t n = order_.size();
  const std::size_t full = n / batch_size_;
  return full + ((n % batch_size_) >= 2 ? 1 : 0);
}

std::optional<TrainBatch> BatchStream::next() {
  const std::size_t left = order_.size() - cursor_;
  if (left < 2) return std::nullopt;
  const std::size_t b = std::min(batch_size_, left);
  TrainBatch batch;
  batch.pairs.reserve(b);
  for (std::size_t i = 0; i < b; ++i) batch.pairs.push_back((*pairs_)[order_[cursor_ + i]]);
  cursor_ += b;
  batch.negative_for = random_derangement(b, rng_);
  return batch;
}

std::vector<TrainBatch> make_batches(const std::vector<BimodalPair>& pairs, std::size_t batch_size,
                                     std::uint64_t seed) {
  BatchStream stream(pairs, batch_size, seed);
  std::vector<TrainBatch> out;
  while (auto b = stream.next()) out.push_back(std::move(*b));
  return out;
}

}  // namespace codesearch
