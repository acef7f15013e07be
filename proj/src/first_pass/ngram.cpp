#include "hec/first_pass/ngram.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>

#include "hec/config.hpp"
#include "hec/error.hpp"

namespace hec::first_pass {

using corpus::kEos;
using corpus::kSos;

namespace {
constexpr int kMaxOrder = 8;
}

std::uint64_t NGramLM::key(std::span<const TokenId> history) const {
  // The last (order-1) tokens, sos-padded, packed 8 bits each.
  const std::size_t n = static_cast<std::size_t>(order_ - 1);
  std::uint64_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t from_end = n - i;
    const TokenId t = from_end <= history.size() ? history[history.size() - from_end] : kSos;
    k = (k << 8) | static_cast<std::uint64_t>(t);
  }
  return k;
}

bool NGramLM::in_vocabulary(TokenId w) const {
  return std::binary_search(vocab_.begin(), vocab_.end(), w);
}

void NGramLM::add_sentence(const TokenSeq& s) {
  TokenSeq padded = s;
  padded.push_back(kEos);
  for (std::size_t i = 0; i < padded.size(); ++i) {
    require(in_vocabulary(padded[i]), ErrorKind::kInvalidArgument,
            "LM training token " + std::to_string(padded[i]) + " is outside the vocabulary");
    auto& ctx = contexts_[key(std::span<const TokenId>(padded.data(), i))];
    ctx.total += 1.0;
    ctx.next[padded[i]] += 1.0;
  }
}

NGramLM NGramLM::train(const std::vector<TokenSeq>& sentences, int order, double k,
                       const std::vector<TokenId>& symbols) {
  require(order >= 1 && order <= kMaxOrder, ErrorKind::kInvalidArgument,
          "LM order must lie in [1, " + std::to_string(kMaxOrder) + "]");
  require(k > 0 && std::isfinite(k), ErrorKind::kInvalidArgument, "LM smoothing k must be > 0");
  require(!sentences.empty(), ErrorKind::kInvalidArgument, "LM training corpus is empty");
  NGramLM lm;
  lm.order_ = order;
  lm.k_ = k;
  for (TokenId s : symbols) {
    require(s >= corpus::kFirstSymbol && s < 256, ErrorKind::kInvalidArgument,
            "LM vocabulary holds a reserved or oversized id " + std::to_string(s));
  }
  lm.vocab_ = symbols;
  lm.vocab_.push_back(kEos);
  std::sort(lm.vocab_.begin(), lm.vocab_.end());
  lm.vocab_.erase(std::unique(lm.vocab_.begin(), lm.vocab_.end()), lm.vocab_.end());
  for (const auto& s : sentences) lm.add_sentence(s);
  return lm;
}

double NGramLM::prob(std::span<const TokenId> history, TokenId word) const {
  require(order_ > 0, ErrorKind::kInvalidArgument, "LM is not trained");
  require(in_vocabulary(word), ErrorKind::kInvalidArgument,
          "token " + std::to_string(word) + " is outside the LM vocabulary");
  const double V = static_cast<double>(vocab_.size());
  auto it = contexts_.find(key(history));
  if (it == contexts_.end()) return 1.0 / V;
  auto w = it->second.next.find(word);
  const double c = w == it->second.next.end() ? 0.0 : w->second;
  return (c + k_) / (it->second.total + k_ * V);
}

double NGramLM::log_prob(std::span<const TokenId> history, TokenId word) const {
  return std::log(prob(history, word));
}

bool operator==(const NGramLM& a, const NGramLM& b) {
  if (a.order_ != b.order_ || a.k_ != b.k_ || a.vocab_ != b.vocab_ ||
      a.contexts_.size() != b.contexts_.size()) {
    return false;
  }
  for (const auto& [key, ctx] : a.contexts_) {
    auto it = b.contexts_.find(key);
    if (it == b.contexts_.end() || it->second.total != ctx.total || it->second.next != ctx.next) {
      return false;
    }
  }
  return true;
}

// Text format:
//   order <n>
//   k <value>
//   vocab <id> <id> ...
//   then one line per (history key, word, count): "<key>\t<word>\t<count>"
void NGramLM::save(const std::filesystem::path& path) const {
  std::ofstream os(path);
  require(os.good(), ErrorKind::kIo, "cannot write LM " + path.string());
  os << "order " << order_ << "\nk " << format_double(k_) << "\nvocab";
  for (TokenId v : vocab_) os << ' ' << v;
  os << '\n';
  std::vector<std::uint64_t> keys;
  for (const auto& kv : contexts_) keys.push_back(kv.first);
  std::sort(keys.begin(), keys.end());
  for (auto key : keys) {
    const auto& next = contexts_.at(key).next;
    std::vector<std::pair<TokenId, double>> entries(next.begin(), next.end());
    std::sort(entries.begin(), entries.end());
    for (const auto& [w, c] : entries) os << key << '\t' << w << '\t' << format_double(c) << '\n';
  }
}

NGramLM NGramLM::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  require(is.good(), ErrorKind::kNotFound, "missing LM " + path.string());
  NGramLM lm;
  std::string line, tag;
  auto header = [&](const std::string& want) {
    require(static_cast<bool>(std::getline(is, line)), ErrorKind::kIo, "truncated LM " + path.string());
    std::istringstream ls(line);
    ls >> tag;
    require(tag == want, ErrorKind::kIo, "LM " + path.string() + ": expected '" + want + "'");
    return std::string(line.substr(want.size()));
  };
  lm.order_ = std::stoi(header("order"));
  lm.k_ = std::stod(header("k"));
  std::istringstream vs(header("vocab"));
  for (TokenId v; vs >> v;) lm.vocab_.push_back(v);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::uint64_t key;
    TokenId w;
    double c;
    ls >> key >> w >> c;
    require(!ls.fail(), ErrorKind::kIo, "malformed LM line '" + line + "'");
    auto& ctx = lm.contexts_[key];
    ctx.total += c;
    ctx.next[w] += c;
  }
  require(lm.order_ >= 1 && lm.order_ <= kMaxOrder && lm.k_ > 0 && !lm.vocab_.empty(),
          ErrorKind::kIo, "invalid LM header in " + path.string());
  return lm;
}

// ------------------------------------------------------------- scorer ----

LmContext LmScorer::start(std::span<const TokenId> history) const {
  LmContext ctx;
  for (TokenId w : history) {
    LmContext next;
    step(ctx, w, next);
    ctx = std::move(next);
  }
  return ctx;
}

int LmScorer::advance(int node, TokenId w) const {
  for (;;) {
    auto it = nodes_[node].child.find(w);
    if (it != nodes_[node].child.end()) return it->second;
    if (node == 0) return 0;
    node = nodes_[node].fail;
  }
}

double LmScorer::step(const LmContext& ctx, TokenId word, LmContext& next) const {
  double score = lm_->log_prob(ctx.tail, word);
  const std::size_t keep = static_cast<std::size_t>(std::max(lm_->order() - 1, 0));
  next.tail = ctx.tail;
  next.tail.push_back(word);
  if (next.tail.size() > keep) next.tail.erase(next.tail.begin(), next.tail.end() - keep);
  if (phrases_ == 0) return score;

  // `credited` counts rewarded tokens of the current match; `banked` is the
  // part of it covered by a completed phrase along the trie path.
  const auto& cur = nodes_[ctx.node];
  const int banked = cur.banked;
  const int to = advance(ctx.node, word);
  const auto child = cur.child.find(word);
  const bool extends = child != cur.child.end() && child->second == to;
  const int depth = nodes_[to].depth;
  int reward;
  if (extends) {
    reward = depth - ctx.credited;
  } else {
    reward = depth - (ctx.credited - banked);
  }
  next.node = to;
  next.credited = depth;
  return score + boost_ * reward;
}

double LmScorer::finish(const LmContext& ctx) const {
  double score = lm_->log_prob(ctx.tail, kEos);
  if (phrases_ == 0) return score;
  return score - boost_ * (ctx.credited - nodes_[ctx.node].banked);
}

LmScorer bias_lm(const NGramLM& lm, const std::vector<TokenSeq>& phrases, double boost) {
  require(boost >= 0 && std::isfinite(boost), ErrorKind::kInvalidArgument,
          "bias boost must be finite and >= 0");
  LmScorer s(lm);
  s.boost_ = boost;
  for (const auto& p : phrases) {
    require(!p.empty(), ErrorKind::kInvalidArgument, "empty phrase in bias list");
    int node = 0;
    for (TokenId w : p) {
      require(lm.in_vocabulary(w) && w != kEos, ErrorKind::kInvalidArgument,
              "bias phrase token " + std::to_string(w) + " is outside the LM vocabulary");
      auto it = s.nodes_[node].child.find(w);
      if (it == s.nodes_[node].child.end()) {
        s.nodes_.emplace_back();
        s.nodes_.back().depth = s.nodes_[node].depth + 1;
        const int id = static_cast<int>(s.nodes_.size() - 1);
        s.nodes_[node].child[w] = id;
        node = id;
      } else {
        node = it->second;
      }
    }
    s.nodes_[node].terminal = true;
    ++s.phrases_;
  }
  for (std::size_t n = 0; n < s.nodes_.size(); ++n) {
    // Children are created after their parents, so parents are final here.
    for (const auto& [w, c] : s.nodes_[n].child) {
      s.nodes_[c].banked = s.nodes_[c].terminal ? s.nodes_[c].depth : s.nodes_[n].banked;
    }
  }
  // Breadth-first failure links.
  std::deque<int> queue;
  for (const auto& [w, c] : s.nodes_[0].child) {
    s.nodes_[c].fail = 0;
    queue.push_back(c);
  }
  while (!queue.empty()) {
    const int n = queue.front();
    queue.pop_front();
    for (const auto& [w, c] : s.nodes_[n].child) {
      int f = s.nodes_[n].fail;
      while (f != 0 && !s.nodes_[f].child.count(w)) f = s.nodes_[f].fail;
      auto it = s.nodes_[f].child.find(w);
      s.nodes_[c].fail = (it != s.nodes_[f].child.end() && it->second != c) ? it->second : 0;
      queue.push_back(c);
    }
  }
  return s;
}

}  // namespace hec::first_pass
