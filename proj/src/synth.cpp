#include <array>
#include <cctype>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <unordered_set>

#include "codesearch/corpus.hpp"

namespace codesearch {
namespace {

constexpr std::array<const char*, 20> kSyllables = {"ba", "ko", "ri", "zu", "me", "ta", "lo", "vi", "ne", "shu",
                                                     "ga", "pe", "di", "fo", "ru", "xa", "mo", "ke", "ji", "wu"};

constexpr std::array<const char*, 40> kObjects = {
    "list",    "file",   "buffer",  "string",  "matrix",  "socket", "record", "queue",  "stream",   "table",
    "image",   "graph",  "node",    "tree",    "array",   "packet", "token",  "vector", "message",  "config",
    "cache",   "session", "user",   "request", "response", "date",  "path",   "channel", "frame",   "block",
    "row",     "column", "key",     "field",   "widget",  "schema", "report", "ledger", "document", "batch"};

constexpr std::array<const char*, 24> kQualifiers = {
    "fast",    "safe",   "async",   "lazy",       "strict",    "sorted",  "cached", "recursive",
    "parallel", "nested", "local",  "remote",     "binary",    "compressed", "encrypted", "partial",
    "default", "custom", "unique",  "raw",        "batched",   "shared",  "static", "dynamic"};

constexpr std::array<const char*, 12> kNlFiller = {"please", "simply", "basically", "also",    "quickly", "now",
                                                   "here",   "internal", "utility", "method", "helper", "just"};

constexpr std::array<const char*, 8> kPlFiller = {"tmp = 0",        "idx += 1",   "log.debug(msg)", "ctx = None",
                                                  "assert flag",    "count = 0",  "buf.clear()",    "pass"};

template <typename Arr>
const char* pick(const Arr& arr, Rng& rng) {
  std::uniform_int_distribution<std::size_t> d(0, arr.size() - 1);
  return arr[d(rng)];
}

}  // namespace

std::vector<std::string> synth_concept_words(std::size_t n_concepts) {
  const std::size_t base = kSyllables.size();
  if (n_concepts > base * base * base) throw std::invalid_argument("synth: too many concepts");
  std::vector<std::string> words;
  words.reserve(n_concepts);
  for (std::size_t i = 0; i < n_concepts; ++i) {
    // Three syllables; the stride spreads consecutive ids across first syllables.
    const std::size_t k = (i * 7919) % (base * base * base);
    words.push_back(std::string(kSyllables[k % base]) + kSyllables[(k / base) % base] +
                    kSyllables[(k / (base * base)) % base]);
  }
  return words;
}

std::vector<RawPair> synth_corpus(const SynthOptions& opt) {
  if (opt.n_concepts < 2) throw std::invalid_argument("synth: n_concepts must be >= 2");
  if (opt.distractor_rate < 0.0 || opt.distractor_rate > 1.0) {
    throw std::invalid_argument("synth: distractor_rate must be in [0, 1]");
  }
  if (opt.n_objects == 0 || opt.n_objects > kObjects.size() || opt.n_qualifiers == 0 ||
      opt.n_qualifiers > kQualifiers.size()) {
    throw std::invalid_argument("synth: n_objects must be in [1, 40] and n_qualifiers in [1, 24]");
  }
  const auto concepts = synth_concept_words(opt.n_concepts);
  Rng rng(opt.seed);
  std::uniform_int_distribution<std::size_t> concept_dist(0, opt.n_concepts - 1);
  std::bernoulli_distribution distract(opt.distractor_rate);
  std::uniform_int_distribution<int> template_dist(0, 3);
  std::uniform_int_distribution<std::size_t> object_dist(0, opt.n_objects - 1);
  std::uniform_int_distribution<std::size_t> qualifier_dist(0, opt.n_qualifiers - 1);

  auto nl_fill = [&]() -> std::string {
    return distract(rng) ? std::string(pick(kNlFiller, rng)) + " " : std::string();
  };
  auto pl_fill = [&]() -> std::string {
    return distract(rng) ? "    " + std::string(pick(kPlFiller, rng)) + "\n" : std::string();
  };

  std::vector<RawPair> out;
  out.reserve(opt.n_pairs);
  for (std::size_t i = 0; i < opt.n_pairs; ++i) {
    const std::string& c = concepts[concept_dist(rng)];
    const std::string obj = kObjects[object_dist(rng)];
    const std::string qual = kQualifiers[qualifier_dist(rng)];

    // Fillers are drawn up front so the RNG call order is fixed.
    const std::string n1 = nl_fill(), n2 = nl_fill();
    const std::string p1 = pl_fill(), p2 = pl_fill();
    const int nl_template = template_dist(rng);
    const int pl_template = template_dist(rng);

    std::string nl;
    switch (nl_template) {
      case 0:
        nl = n1 + c + " the " + n2 + obj + " using " + qual + " mode";
        break;
      case 1:
        nl = "Return the " + n1 + c + " of a " + qual + " " + n2 + obj;
        break;
      case 2:
        nl = n1 + c + " " + qual + " " + obj + " and " + n2 + "return the result";
        break;
      default:
        nl = "Helper that will " + n1 + c + " the given " + obj + " in a " + n2 + qual + " way";
        break;
    }
    nl[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(nl[0])));

    std::string pl;
    switch (pl_template) {
      case 0:
        pl = "def " + c + "_" + obj + "(self, " + qual + "=True):\n" + p1 + "    return self." + obj + "." + c +
             "(" + qual + ")";
        break;
      case 1:
        pl = "def " + qual + "_" + c + "(" + obj + "):\n" + p2 + "    result = " + c + "(" + obj + ", " + qual +
             "=True)\n" + p1 + "    return result";
        break;
      case 2:
        pl = "def " + c + "(" + obj + ", mode='" + qual + "'):\n" + p2 + "    out = " + obj + "_" + c +
             "(" + obj + ")\n    return out";
        break;
      default:
        pl = "def run(" + obj + "):\n" + p1 + "    if " + qual + ":\n        " + c + "(" + obj + ")\n" +
             p2 + "    return " + obj;
        break;
    }

    char id[32];
    std::snprintf(id, sizeof(id), "synth-%06zu", i);
    out.push_back({id, std::move(nl), std::move(pl), "python"});
  }
  return out;
}

}  // namespace codesearch
