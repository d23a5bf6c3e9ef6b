#include <algorithm>
#include <cctype>
#include <cmath>
#include <string_view>
#include <unordered_map>
#include <unordered_set>

#include "dpgtr/llm_client.hpp"
#include "dpgtr/random.hpp"
#include "dpgtr/text.hpp"

namespace dpgtr {
namespace {

constexpr std::string_view kStage3Header =
    "Refer to the following question to generate a new question:";

// Substituted even at temperature 0.
const std::unordered_map<std::string, std::string>& forced_substitutions() {
  static const std::unordered_map<std::string, std::string> table = {
      {"whom", "who"},
      {"shall", "will"},
      {"amongst", "among"},
      {"whilst", "while"},
  };
  return table;
}

using SynonymIndex = std::unordered_map<std::string, const std::vector<std::string>*>;

const SynonymIndex& synonym_index() {
  static const SynonymIndex index = [] {
    SynonymIndex idx;
    for (const auto& [word, alts] : mock_synonym_table()) idx.emplace(word, &alts);
    return idx;
  }();
  return index;
}

struct WordParts {
  std::string lead;
  std::string core;
  std::string trail;
};

WordParts split_punct(const std::string& raw) {
  std::size_t b = 0;
  std::size_t e = raw.size();
  while (b < e && std::ispunct(static_cast<unsigned char>(raw[b]))) ++b;
  while (e > b && std::ispunct(static_cast<unsigned char>(raw[e - 1]))) --e;
  return {raw.substr(0, b), raw.substr(b, e - b), raw.substr(e)};
}

std::string match_case(const std::string& like, std::string word) {
  if (!like.empty() && std::isupper(static_cast<unsigned char>(like[0])) && !word.empty()) {
    word[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(word[0])));
  }
  return word;
}

// Intensity in [0, 1]; reaches 1 at temperature 1.5.
double edit_intensity(double temperature_bucketed) {
  return std::clamp(temperature_bucketed / 1.5, 0.0, 1.0);
}

std::string perturb(const std::string& text, double temperature, Rng& rng) {
  std::vector<std::string> words = split_whitespace(text);
  const double s = edit_intensity(temperature);
  const auto& forced = forced_substitutions();
  const auto& synonyms = synonym_index();
  for (auto& w : words) {
    WordParts parts = split_punct(w);
    std::string key = normalize_word(parts.core);
    if (key.empty()) continue;
    if (auto f = forced.find(key); f != forced.end()) {
      w = parts.lead + match_case(parts.core, f->second) + parts.trail;
      continue;
    }
    auto it = synonyms.find(key);
    if (it == synonyms.end()) continue;
    // Draw unconditionally so the stream does not depend on the outcome.
    const double u = rng.uniform();
    const auto pick = rng.below(it->second->size());
    if (u < 0.9 * s) {
      w = parts.lead + match_case(parts.core, (*it->second)[pick]) + parts.trail;
    }
  }
  if (words.size() > 1) {
    const auto swaps = static_cast<std::size_t>(std::floor(0.5 * s * static_cast<double>(words.size())));
    for (std::size_t k = 0; k < swaps; ++k) {
      auto i = static_cast<std::size_t>(rng.below(words.size() - 1));
      std::swap(words[i], words[i + 1]);
    }
  }
  return join(words, " ");
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto nl = text.find('\n', start);
    if (nl == std::string::npos) {
      out.push_back(text.substr(start));
      break;
    }
    out.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

std::string stage3_response(const std::string& user, double temperature, Rng& rng,
                            const MockOptions& options) {
  auto lines = lines_of(user);
  std::string exemplar = lines.size() > 1 ? lines[1] : "";
  if (options.follow_avoid_list && lines.size() > 3) {
    std::unordered_set<std::string> forbidden;
    for (const auto& raw : split_whitespace(lines[3])) {
      auto w = normalize_word(raw);
      if (!w.empty()) forbidden.insert(w);
    }
    std::vector<std::string> kept;
    for (const auto& w : split_whitespace(exemplar)) {
      if (!forbidden.contains(normalize_word(w))) kept.push_back(w);
    }
    exemplar = join(kept, " ");
  }
  return perturb(exemplar, temperature, rng);
}

// Lexical-overlap answerer for the evaluation frames.
std::string qa_response(const std::vector<std::string>& lines) {
  std::string question;
  std::string document;
  std::vector<std::pair<std::string, std::string>> choices;
  for (const auto& line : lines) {
    if (starts_with(line, "Question:")) {
      question = line.substr(9);
    } else if (starts_with(line, "Document:")) {
      document = line.substr(9);
    } else if (line.size() >= 3 && std::isupper(static_cast<unsigned char>(line[0])) &&
               line[1] == '.' && line[2] == ' ') {
      choices.emplace_back(line.substr(0, 1), line.substr(3));
    }
  }
  auto qwords = normalize_tokens(question, true);
  std::unordered_set<std::string> qset(qwords.begin(), qwords.end());
  if (!choices.empty()) {
    std::size_t best = 0;
    std::size_t best_score = 0;
    for (std::size_t i = 0; i < choices.size(); ++i) {
      std::size_t score = 0;
      for (const auto& w : normalize_tokens(choices[i].second, true)) score += qset.count(w);
      if (score > best_score) {
        best = i;
        best_score = score;
      }
    }
    return choices[best].first;
  }
  auto doc = normalize_tokens(document, false);
  if (doc.empty()) return "unknown";
  for (std::size_t i = 0; i + 1 < doc.size(); ++i) {
    if (qset.contains(doc[i]) && !qset.contains(doc[i + 1])) return doc[i + 1];
  }
  return doc.front();
}

bool is_qa_frame(const std::vector<std::string>& lines) {
  bool has_question = false;
  for (const auto& l : lines) has_question = has_question || starts_with(l, "Question:");
  return has_question && !lines.empty() && trim(lines.back()) == "Answer:";
}

}  // namespace

ChatResponse mock_complete(const ChatRequest& req, const MockOptions& options) {
  std::string transcript;
  std::string user;
  for (const auto& m : req.messages) {
    transcript += m.role == ChatRole::system ? "S:" : "U:";
    transcript += m.content;
    transcript += '\n';
    if (m.role == ChatRole::user) user = m.content;
  }
  const auto bucket = static_cast<std::int64_t>(std::llround(std::max(0.0, req.temperature) * 100.0));
  const double temperature = static_cast<double>(bucket) / 100.0;
  std::uint64_t seed = stable_hash(transcript.data(), transcript.size());
  seed = mix64(seed ^ mix64(static_cast<std::uint64_t>(bucket)));
  seed = mix64(seed ^ mix64(req.seed.value_or(0)));
  Rng rng(seed);

  std::string text;
  auto lines = lines_of(user);
  if (starts_with(user, kStage3Header)) {
    text = stage3_response(user, temperature, rng, options);
  } else if (is_qa_frame(lines)) {
    text = qa_response(lines);
  } else {
    // Instruction on the first line, payload after it.
    auto nl = user.find('\n');
    text = perturb(nl == std::string::npos ? user : user.substr(nl + 1), temperature, rng);
  }

  ChatResponse resp;
  auto words = split_whitespace(text);
  if (words.size() > static_cast<std::size_t>(req.max_tokens)) {
    words.resize(static_cast<std::size_t>(req.max_tokens));
    text = join(words, " ");
  }
  resp.text = std::move(text);
  resp.tokens_generated = words.size();
  resp.usage_reported = true;
  return resp;
}

const std::vector<std::pair<std::string, std::vector<std::string>>>& mock_synonym_table() {
  static const std::vector<std::pair<std::string, std::vector<std::string>>> table = {
      {"what", {"which", "whatever"}},
      {"where", {"wherever", "whither"}},
      {"would", {"could", "might"}},
      {"person", {"individual", "someone", "human"}},
      {"people", {"folks", "humans", "persons"}},
      {"man", {"gentleman", "guy", "fellow"}},
      {"woman", {"lady", "female", "gal"}},
      {"child", {"kid", "youngster", "minor"}},
      {"children", {"kids", "youngsters", "minors"}},
      {"house", {"home", "residence", "dwelling"}},
      {"home", {"house", "residence", "abode"}},
      {"city", {"town", "metropolis", "municipality"}},
      {"town", {"village", "city", "borough"}},
      {"country", {"nation", "state", "land"}},
      {"store", {"shop", "market", "outlet"}},
      {"shop", {"store", "boutique", "outlet"}},
      {"buy", {"purchase", "acquire", "obtain"}},
      {"get", {"obtain", "receive", "acquire"}},
      {"go", {"travel", "proceed", "head"}},
      {"going", {"heading", "traveling", "proceeding"}},
      {"find", {"locate", "discover", "spot"}},
      {"keep", {"store", "hold", "retain"}},
      {"put", {"place", "set", "lay"}},
      {"make", {"create", "build", "produce"}},
      {"use", {"utilize", "employ", "apply"}},
      {"used", {"utilized", "employed", "applied"}},
      {"want", {"desire", "wish", "crave"}},
      {"need", {"require", "demand", "lack"}},
      {"like", {"enjoy", "prefer", "fancy"}},
      {"see", {"observe", "notice", "view"}},
      {"look", {"glance", "gaze", "peer"}},
      {"say", {"state", "declare", "mention"}},
      {"tell", {"inform", "notify", "advise"}},
      {"ask", {"inquire", "query", "request"}},
      {"think", {"believe", "suppose", "reckon"}},
      {"feel", {"sense", "experience", "perceive"}},
      {"eat", {"consume", "devour", "dine"}},
      {"drink", {"sip", "gulp", "beverage"}},
      {"food", {"meal", "nourishment", "fare"}},
      {"water", {"liquid", "fluid", "aqua"}},
      {"car", {"automobile", "vehicle", "auto"}},
      {"road", {"street", "highway", "route"}},
      {"street", {"road", "avenue", "lane"}},
      {"work", {"job", "labor", "employment"}},
      {"job", {"occupation", "position", "role"}},
      {"office", {"workplace", "bureau", "agency"}},
      {"school", {"academy", "institute", "college"}},
      {"student", {"pupil", "learner", "scholar"}},
      {"teacher", {"instructor", "educator", "tutor"}},
      {"doctor", {"physician", "medic", "clinician"}},
      {"hospital", {"clinic", "infirmary", "sanatorium"}},
      {"sick", {"ill", "unwell", "ailing"}},
      {"money", {"cash", "funds", "currency"}},
      {"bank", {"lender", "vault", "treasury"}},
      {"book", {"volume", "tome", "novel"}},
      {"room", {"chamber", "space", "area"}},
      {"kitchen", {"galley", "cookroom", "scullery"}},
      {"garden", {"yard", "backyard", "plot"}},
      {"big", {"large", "huge", "giant"}},
      {"large", {"big", "vast", "sizable"}},
      {"small", {"little", "tiny", "minor"}},
      {"little", {"small", "tiny", "slight"}},
      {"good", {"fine", "great", "decent"}},
      {"bad", {"poor", "awful", "terrible"}},
      {"happy", {"glad", "joyful", "cheerful"}},
      {"sad", {"unhappy", "gloomy", "sorrowful"}},
      {"fast", {"quick", "rapid", "swift"}},
      {"quick", {"fast", "speedy", "brisk"}},
      {"slow", {"sluggish", "gradual", "leisurely"}},
      {"old", {"aged", "elderly", "ancient"}},
      {"new", {"fresh", "novel", "recent"}},
      {"young", {"youthful", "juvenile", "junior"}},
      {"important", {"vital", "crucial", "key"}},
      {"usually", {"typically", "normally", "generally"}},
      {"often", {"frequently", "regularly", "commonly"}},
      {"likely", {"probably", "presumably", "plausibly"}},
      {"place", {"location", "spot", "site"}},
      {"thing", {"object", "item", "article"}},
      {"things", {"objects", "items", "articles"}},
      {"animal", {"creature", "beast", "critter"}},
      {"dog", {"hound", "canine", "pup"}},
      {"cat", {"kitty", "feline", "tomcat"}},
      {"bird", {"fowl", "songbird", "avian"}},
      {"fish", {"seafood", "trout", "salmon"}},
      {"tree", {"oak", "sapling", "timber"}},
      {"forest", {"woods", "woodland", "jungle"}},
      {"river", {"stream", "creek", "brook"}},
      {"ocean", {"sea", "deep", "main"}},
      {"sea", {"ocean", "waters", "gulf"}},
      {"mountain", {"peak", "summit", "hill"}},
      {"weather", {"climate", "conditions", "forecast"}},
      {"rain", {"shower", "drizzle", "downpour"}},
      {"sun", {"sunshine", "daylight", "sunlight"}},
      {"night", {"evening", "nighttime", "dark"}},
      {"day", {"daytime", "date", "morning"}},
      {"time", {"moment", "period", "while"}},
      {"friend", {"buddy", "pal", "companion"}},
      {"family", {"relatives", "household", "kin"}},
      {"mother", {"mom", "mum", "parent"}},
      {"father", {"dad", "papa", "parent"}},
      {"name", {"title", "label", "designation"}},
      {"number", {"figure", "count", "digit"}},
      {"date", {"day", "deadline", "time"}},
      {"invoice", {"bill", "statement", "receipt"}},
      {"total", {"sum", "amount", "aggregate"}},
      {"amount", {"quantity", "sum", "total"}},
      {"address", {"location", "residence", "domicile"}},
      {"company", {"firm", "business", "enterprise"}},
      {"account", {"profile", "ledger", "record"}},
      {"phone", {"telephone", "mobile", "cellphone"}},
      {"letter", {"note", "message", "missive"}},
      {"report", {"account", "summary", "statement"}},
      {"music", {"melody", "tunes", "songs"}},
      {"game", {"match", "contest", "sport"}},
      {"play", {"perform", "compete", "frolic"}},
      {"read", {"peruse", "study", "scan"}},
      {"write", {"compose", "author", "pen"}},
      {"learn", {"study", "discover", "master"}},
      {"build", {"construct", "assemble", "erect"}},
      {"clean", {"wash", "tidy", "scrub"}},
      {"cold", {"chilly", "icy", "frosty"}},
      {"hot", {"warm", "heated", "scorching"}},
      {"sleep", {"rest", "slumber", "doze"}},
      {"run", {"sprint", "jog", "dash"}},
      {"walk", {"stroll", "stride", "hike"}},
      {"travel", {"journey", "voyage", "trip"}},
      {"airport", {"airfield", "terminal", "aerodrome"}},
      {"train", {"railway", "locomotive", "subway"}},
      {"bus", {"coach", "shuttle", "minibus"}},
      {"hotel", {"inn", "lodge", "motel"}},
      {"table", {"desk", "counter", "bench"}},
      {"chair", {"seat", "stool", "bench"}},
      {"bed", {"cot", "bunk", "mattress"}},
      {"door", {"entrance", "gate", "portal"}},
      {"window", {"pane", "casement", "skylight"}},
  };
  return table;
}

}  // namespace dpgtr
