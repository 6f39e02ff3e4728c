#ifndef THREDKIT_TOPICS_HPP
#define THREDKIT_TOPICS_HPP

// Word-level topic space: a sparse PPMI word/context matrix over content
// words, its non-negative factorization M ~ W H, and the topic vectors and
// smoothed topic divergence computed from the rows of W.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "thredkit/autodiff.hpp"
#include "thredkit/binary_io.hpp"
#include "thredkit/corpus.hpp"
#include "thredkit/error.hpp"
#include "thredkit/rng.hpp"
#include "thredkit/tensor.hpp"

namespace thredkit::topics {

using StopwordSet = std::unordered_set<std::string>;

inline constexpr std::size_t default_window = 5;
inline constexpr std::size_t default_rank = 40;
inline constexpr std::size_t default_nmf_iters = 200;
inline constexpr double default_nmf_tol = 1e-5;
inline constexpr double default_kl_eps = 1e-8;

/// Function words excluded from the topic space.
inline const StopwordSet& builtin_stopwords() {
  static const StopwordSet words = {
      // articles and determiners
      "a", "an", "the", "this", "that", "these", "those", "some", "any", "each", "every", "no",
      "all", "both", "either", "neither", "such", "what", "which", "whose",
      // pronouns
      "i", "me", "my", "mine", "myself", "you", "your", "yours", "yourself", "he", "him", "his",
      "himself", "she", "her", "hers", "herself", "it", "its", "itself", "we", "us", "our",
      "ours", "they", "them", "their", "theirs", "who", "whom", "one", "someone", "something",
      "anyone", "anything", "there", "here",
      // auxiliaries and copulas
      "am", "is", "are", "was", "were", "be", "been", "being", "do", "does", "did", "doing",
      "have", "has", "had", "having", "will", "would", "shall", "should", "can", "could", "may",
      "might", "must", "'s", "'re", "'m", "'ve", "'ll", "'d", "n't", "not",
      // prepositions
      "of", "in", "on", "at", "to", "for", "with", "by", "from", "about", "into", "onto", "over",
      "under", "up", "down", "out", "off", "through", "between", "after", "before", "during",
      "without", "within", "above", "below", "around", "against", "like", "than", "as", "via",
      // conjunctions and particles
      "and", "or", "but", "if", "so", "because", "while", "then", "when", "where", "how", "why",
      "just", "too", "very", "also", "only", "yes", "ok", "okay", "oh", "well",
      // punctuation
      ".", ",", "?", "!", ";", ":", "'", "\"", "-", "--", "(", ")", "...", "`", "``", "''"};
  return words;
}

/// One word per line; blank lines and lines starting with '#' are ignored.
inline StopwordSet load_stopwords(const std::string& path, bool lowercase = true) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read stopword file '" + path + "'");
  StopwordSet out;
  std::string line;
  while (std::getline(in, line)) {
    auto toks = split_whitespace(line);
    if (toks.empty() || toks[0][0] == '#') continue;
    out.insert(lowercase ? to_lower_ascii(toks[0]) : toks[0]);
  }
  return out;
}

/// Content words of a vocabulary (non-special, not a stopword), in ID order.
inline std::vector<std::string> content_words(const Vocabulary& vocab, const StopwordSet& stopwords) {
  std::vector<std::string> out;
  for (auto& t : vocab.regular_tokens()) {
    if (!stopwords.contains(t)) out.push_back(t);
  }
  return out;
}

// ---- sparse PPMI ------------------------------------------------------------

/// Row-compressed non-negative matrix with sorted column indices.
struct SparseMatrix {
  struct Cell {
    std::size_t col;
    double value;
  };
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::vector<Cell>> row_cells;

  double at(std::size_t r, std::size_t c) const {
    const auto& cells = row_cells[r];
    auto it = std::lower_bound(cells.begin(), cells.end(), c,
                               [](const Cell& cell, std::size_t col) { return cell.col < col; });
    return it != cells.end() && it->col == c ? it->value : 0.0;
  }

  std::size_t nonzeros() const {
    std::size_t n = 0;
    for (const auto& r : row_cells) n += r.size();
    return n;
  }

  Tensor dense() const {
    Tensor out({rows, cols});
    for (std::size_t r = 0; r < rows; ++r) {
      for (const auto& cell : row_cells[r]) out.at(r, cell.col) = cell.value;
    }
    return out;
  }

  static SparseMatrix from_dense(const Tensor& m) {
    if (m.rank() != 2) throw ShapeError("expected a matrix, got " + m.shape());
    SparseMatrix s;
    s.rows = m.dims()[0];
    s.cols = m.dims()[1];
    s.row_cells.resize(s.rows);
    for (std::size_t r = 0; r < s.rows; ++r) {
      for (std::size_t c = 0; c < s.cols; ++c) {
        if (m.at(r, c) != 0.0) s.row_cells[r].push_back({c, m.at(r, c)});
      }
    }
    return s;
  }
};

/// Square PPMI matrix over content words. Only strictly positive cells are
/// stored.
struct PpmiMatrix {
  std::vector<std::string> words;  // shared row and column index
  SparseMatrix cells;

  std::size_t dim() const noexcept { return words.size(); }
  double at(std::size_t i, std::size_t j) const { return cells.at(i, j); }
};

/// M_ij = max(log(p(w_i, k_j) / (p(w_i) p(k_j))), 0) from symmetric-window
/// co-occurrence counts of content words inside each utterance. Pairs of
/// the same word type are not counted.
inline PpmiMatrix build_ppmi(const std::vector<Dialog>& dialogs, const Vocabulary& vocab,
                             const StopwordSet& stopwords, std::size_t window = default_window) {
  if (window < 1) throw ConfigError("build_ppmi: window must be >= 1");
  PpmiMatrix m;
  m.words = content_words(vocab, stopwords);
  if (m.words.empty()) throw EmptyCorpusError("build_ppmi: vocabulary has no content words");

  std::vector<std::int64_t> row_of_id(vocab.size(), -1);
  for (std::size_t r = 0; r < m.words.size(); ++r) row_of_id[vocab.id_of(m.words[r])] = static_cast<std::int64_t>(r);

  const std::size_t n = m.words.size();
  std::vector<std::map<std::size_t, std::uint64_t>> counts(n);
  std::vector<std::size_t> seq;
  for (const auto& d : dialogs) {
    for (const auto& u : d.utterances) {
      seq.clear();
      for (TokenId id : u) {
        if (id < row_of_id.size() && row_of_id[id] >= 0) seq.push_back(static_cast<std::size_t>(row_of_id[id]));
      }
      for (std::size_t i = 0; i < seq.size(); ++i) {
        const std::size_t hi = std::min(seq.size(), i + window + 1);
        for (std::size_t j = i + 1; j < hi; ++j) {
          if (seq[i] == seq[j]) continue;
          ++counts[seq[i]][seq[j]];
          ++counts[seq[j]][seq[i]];
        }
      }
    }
  }

  std::vector<double> marginal(n, 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    for (const auto& [c, k] : counts[r]) marginal[r] += static_cast<double>(k);
    total += marginal[r];
  }
  if (total == 0.0) throw EmptyCorpusError("build_ppmi: no content-word co-occurrences in corpus");

  m.cells.rows = m.cells.cols = n;
  m.cells.row_cells.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (const auto& [c, k] : counts[r]) {
      // symmetric counts: column marginals equal row marginals
      const double ratio = static_cast<double>(k) * total / (marginal[r] * marginal[c]);
      if (ratio > 1.0) m.cells.row_cells[r].push_back({c, std::log(ratio)});
    }
  }
  return m;
}

// ---- NMF --------------------------------------------------------------------

struct NmfOptions {
  std::size_t rank = default_rank;
  std::size_t max_iters = default_nmf_iters;
  double tol = default_nmf_tol;
  std::uint64_t seed = 0;
};

struct NmfResult {
  Tensor w;  // rows x rank
  Tensor h;  // rank x cols
  std::vector<double> objective;  // ||M - WH||_F before the first and after every update
  std::size_t iterations = 0;
  double relative_error = 0.0;  // ||M - WH||_F / ||M||_F, 0 when M = 0
};

namespace detail {

inline double frobenius_residual(const SparseMatrix& m, const Tensor& w, const Tensor& h) {
  const std::size_t rows = m.rows, cols = m.cols, p = w.dims()[1];
  double s = 0.0;
  if (rows * cols <= (std::size_t{1} << 22)) {
    std::vector<double> row(cols);
    for (std::size_t i = 0; i < rows; ++i) {
      std::fill(row.begin(), row.end(), 0.0);
      for (std::size_t k = 0; k < p; ++k) {
        const double wik = w.at(i, k);
        if (wik == 0.0) continue;
        for (std::size_t j = 0; j < cols; ++j) row[j] += wik * h.at(k, j);
      }
      for (const auto& cell : m.row_cells[i]) row[cell.col] -= cell.value;
      for (double v : row) s += v * v;
    }
    return std::sqrt(s);
  }
  // ||M||^2 - 2 <M, WH> + <W^T W, H H^T> for large sparse M
  double mm = 0.0, cross = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    for (const auto& cell : m.row_cells[i]) {
      mm += cell.value * cell.value;
      double wh = 0.0;
      for (std::size_t k = 0; k < p; ++k) wh += w.at(i, k) * h.at(k, cell.col);
      cross += cell.value * wh;
    }
  }
  std::vector<double> wtw(p * p, 0.0), hht(p * p, 0.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t a = 0; a < p; ++a)
      for (std::size_t b = 0; b < p; ++b) wtw[a * p + b] += w.at(i, a) * w.at(i, b);
  for (std::size_t a = 0; a < p; ++a)
    for (std::size_t b = 0; b < p; ++b)
      for (std::size_t j = 0; j < cols; ++j) hht[a * p + b] += h.at(a, j) * h.at(b, j);
  double quad = 0.0;
  for (std::size_t i = 0; i < p * p; ++i) quad += wtw[i] * hht[i];
  return std::sqrt(std::max(0.0, mm - 2.0 * cross + quad));
}

inline double frobenius_norm(const SparseMatrix& m) {
  double s = 0.0;
  for (const auto& r : m.row_cells)
    for (const auto& cell : r) s += cell.value * cell.value;
  return std::sqrt(s);
}

}  // namespace detail

/// Lee-Seung multiplicative updates for min ||M - WH||_F with W, H >= 0,
/// initialized uniformly in (0, 1]. Stops after `max_iters` updates or when
/// the relative decrease of the objective drops below `tol`.
inline NmfResult nmf_factorize(const SparseMatrix& m, const NmfOptions& opt) {
  const std::size_t rows = m.rows, cols = m.cols, p = opt.rank;
  if (p < 1) throw ConfigError("nmf: rank must be >= 1");
  if (p > std::min(rows, cols)) {
    throw ConfigError("nmf: rank " + std::to_string(p) + " exceeds matrix dimension " +
                      std::to_string(std::min(rows, cols)));
  }
  for (const auto& r : m.row_cells)
    for (const auto& cell : r)
      if (cell.value < 0.0) throw DomainError("nmf: matrix has negative entries");

  Rng rng(opt.seed);
  NmfResult res{Tensor({rows, p}), Tensor({p, cols}), {}, 0, 0.0};
  for (auto& x : res.w.storage()) x = rng.uniform_open_closed();
  for (auto& x : res.h.storage()) x = rng.uniform_open_closed();
  Tensor& w = res.w;
  Tensor& h = res.h;

  res.objective.push_back(detail::frobenius_residual(m, w, h));
  std::vector<double> num, den, gram(p * p);
  for (std::size_t it = 0; it < opt.max_iters; ++it) {
    // H <- H * (W^T M) / (W^T W H)
    num.assign(p * cols, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
      for (const auto& cell : m.row_cells[i])
        for (std::size_t k = 0; k < p; ++k) num[k * cols + cell.col] += w.at(i, k) * cell.value;
    std::fill(gram.begin(), gram.end(), 0.0);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t a = 0; a < p; ++a)
        for (std::size_t b = 0; b < p; ++b) gram[a * p + b] += w.at(i, a) * w.at(i, b);
    den.assign(p * cols, 0.0);
    for (std::size_t a = 0; a < p; ++a)
      for (std::size_t b = 0; b < p; ++b)
        for (std::size_t j = 0; j < cols; ++j) den[a * cols + j] += gram[a * p + b] * h.at(b, j);
    for (std::size_t i = 0; i < p * cols; ++i) {
      if (den[i] > 0.0) h.storage()[i] *= num[i] / den[i];
    }

    // W <- W * (M H^T) / (W H H^T)
    num.assign(rows * p, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
      for (const auto& cell : m.row_cells[i])
        for (std::size_t k = 0; k < p; ++k) num[i * p + k] += cell.value * h.at(k, cell.col);
    std::fill(gram.begin(), gram.end(), 0.0);
    for (std::size_t a = 0; a < p; ++a)
      for (std::size_t b = 0; b < p; ++b)
        for (std::size_t j = 0; j < cols; ++j) gram[a * p + b] += h.at(a, j) * h.at(b, j);
    den.assign(rows * p, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t a = 0; a < p; ++a)
        for (std::size_t b = 0; b < p; ++b) den[i * p + b] += w.at(i, a) * gram[a * p + b];
    for (std::size_t i = 0; i < rows * p; ++i) {
      if (den[i] > 0.0) w.storage()[i] *= num[i] / den[i];
    }

    res.iterations = it + 1;
    const double prev = res.objective.back();
    const double cur = detail::frobenius_residual(m, w, h);
    res.objective.push_back(cur);
    if (cur == 0.0 || prev == 0.0 || (prev - cur) / prev < opt.tol) break;
  }
  const double norm = detail::frobenius_norm(m);
  res.relative_error = norm == 0.0 ? 0.0 : res.objective.back() / norm;
  return res;
}

inline NmfResult nmf_factorize(const Tensor& m, const NmfOptions& opt) {
  return nmf_factorize(SparseMatrix::from_dense(m), opt);
}

// ---- topic model ------------------------------------------------------------

/// Dense word/topic matrix W (|V_w| x p) with its companion H (p x |V_w|).
class TopicModel {
 public:
  TopicModel() = default;

  TopicModel(std::vector<std::string> words, Tensor w, Tensor h)
      : words_(std::move(words)), w_(std::move(w)), h_(std::move(h)) {
    if (w_.rank() != 2 || w_.dims()[0] != words_.size()) {
      throw ShapeError("topic model: W " + w_.shape() + " does not match " +
                       std::to_string(words_.size()) + " words");
    }
    if (!h_.empty() && (h_.rank() != 2 || h_.dims()[0] != rank())) {
      throw ShapeError("topic model: H " + h_.shape() + " does not match rank " + std::to_string(rank()));
    }
    if (rank() > words_.size()) throw ConfigError("topic model: rank exceeds word count");
    for (double v : w_.data())
      if (v < 0.0) throw DomainError("topic model: W has negative entries");
    for (std::size_t i = 0; i < words_.size(); ++i) index_.emplace(words_[i], i);
  }

  /// Raw PPMI rows as topic vectors: W = M, H = I.
  static TopicModel from_ppmi_rows(const PpmiMatrix& m) {
    const std::size_t n = m.dim();
    Tensor eye({n, n});
    for (std::size_t i = 0; i < n; ++i) eye.at(i, i) = 1.0;
    return TopicModel(m.words, m.cells.dense(), std::move(eye));
  }

  static TopicModel from_nmf(const PpmiMatrix& m, const NmfOptions& opt, NmfResult* details = nullptr) {
    NmfResult r = nmf_factorize(m.cells, opt);
    TopicModel tm(m.words, r.w, r.h);
    if (details) *details = std::move(r);
    return tm;
  }

  std::size_t rank() const noexcept { return w_.rank() == 2 ? w_.dims()[1] : 0; }
  std::size_t size() const noexcept { return words_.size(); }
  const std::vector<std::string>& words() const noexcept { return words_; }
  const Tensor& w() const noexcept { return w_; }
  const Tensor& h() const noexcept { return h_; }

  std::optional<std::size_t> row_of(const std::string& word) const {
    auto it = index_.find(word);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::span<const double> row(std::size_t r) const { return w_.data().subspan(r * rank(), rank()); }

 private:
  std::vector<std::string> words_;
  Tensor w_;
  Tensor h_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline constexpr std::uint32_t topic_file_version = 1;

/// "TPMX", u32 version, u64 |V_w|, u64 p, |V_w| length-prefixed words,
/// then W and H as row-major little-endian doubles.
inline void write_topic_model(std::ostream& out, const TopicModel& tm) {
  out.write("TPMX", 4);
  io::write_le<std::uint32_t>(out, topic_file_version);
  io::write_le<std::uint64_t>(out, tm.size());
  io::write_le<std::uint64_t>(out, tm.rank());
  for (const auto& w : tm.words()) io::write_string(out, w);
  io::write_doubles(out, tm.w().storage());
  Tensor h = tm.h().empty() ? Tensor({tm.rank(), tm.size()}) : tm.h();
  io::write_doubles(out, h.storage());
}

inline TopicModel read_topic_model(std::istream& in, const std::string& source) {
  io::expect_magic(in, "TPMX", source);
  const auto version = io::read_le<std::uint32_t>(in);
  if (version != topic_file_version) {
    throw IoError("'" + source + "': unsupported topic file version " + std::to_string(version));
  }
  const auto n = io::read_le<std::uint64_t>(in);
  const auto p = io::read_le<std::uint64_t>(in);
  if (n > (1u << 26) || p > n) throw IoError("'" + source + "': corrupt topic header");
  std::vector<std::string> words(n);
  for (auto& w : words) w = io::read_string(in, 1u << 16);
  Tensor w({n, p}, io::read_doubles(in, n * p));
  Tensor h({p, n}, io::read_doubles(in, n * p));
  return TopicModel(std::move(words), std::move(w), std::move(h));
}

inline void save_topic_model(const std::string& path, const TopicModel& tm) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write topic model '" + path + "'");
  write_topic_model(out, tm);
  if (!out) throw IoError("error while writing '" + path + "'");
}

inline TopicModel load_topic_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read topic model '" + path + "'");
  try {
    return read_topic_model(in, path);
  } catch (const IoError&) {
    throw;
  } catch (const Error& e) {
    throw IoError("'" + path + "': " + e.what());
  }
}

// ---- topic vectors ----------------------------------------------------------

struct TopicVector {
  std::vector<double> values;
  std::size_t matched_tokens = 0;
};

/// Mean of the W rows of the content words in `tokens`; zero when none match.
inline TopicVector topic_vector(std::span<const TokenId> tokens, const TopicModel& model,
                                const Vocabulary& vocab) {
  TopicVector tv{std::vector<double>(model.rank(), 0.0), 0};
  for (TokenId id : tokens) {
    if (Vocabulary::is_special(id) || id >= vocab.size()) continue;
    auto row = model.row_of(vocab.token_of(id));
    if (!row) continue;
    auto r = model.row(*row);
    for (std::size_t k = 0; k < r.size(); ++k) tv.values[k] += r[k];
    ++tv.matched_tokens;
  }
  if (tv.matched_tokens > 0) {
    for (auto& v : tv.values) v /= static_cast<double>(tv.matched_tokens);
  }
  return tv;
}

/// Topic rows re-indexed by vocabulary ID; non-content IDs have zero rows.
class TopicProjector {
 public:
  TopicProjector(const TopicModel& model, const Vocabulary& vocab)
      : rank_(model.rank()), table_({vocab.size(), model.rank()}), transposed_({model.rank(), vocab.size()}),
        mask_({vocab.size()}), content_(vocab.size(), false) {
    for (std::size_t id = special::count; id < vocab.size(); ++id) {
      auto row = model.row_of(vocab.token_of(static_cast<TokenId>(id)));
      if (!row) continue;
      content_[id] = true;
      mask_[id] = 1.0;
      auto r = model.row(*row);
      for (std::size_t k = 0; k < rank_; ++k) {
        table_.at(id, k) = r[k];
        transposed_.at(k, id) = r[k];
      }
    }
  }

  std::size_t rank() const noexcept { return rank_; }
  std::size_t vocab_size() const noexcept { return content_.size(); }
  bool is_content(TokenId id) const { return id < content_.size() && content_[id]; }
  const Tensor& table() const noexcept { return table_; }
  const Tensor& transposed() const noexcept { return transposed_; }
  const Tensor& mask() const noexcept { return mask_; }

  TopicVector topic_vector(std::span<const TokenId> tokens) const {
    TopicVector tv{std::vector<double>(rank_, 0.0), 0};
    for (TokenId id : tokens) {
      if (!is_content(id)) continue;
      for (std::size_t k = 0; k < rank_; ++k) tv.values[k] += table_.at(id, k);
      ++tv.matched_tokens;
    }
    if (tv.matched_tokens > 0) {
      for (auto& v : tv.values) v /= static_cast<double>(tv.matched_tokens);
    }
    return tv;
  }

 private:
  std::size_t rank_;
  Tensor table_;
  Tensor transposed_;
  Tensor mask_;
  std::vector<bool> content_;
};

/// Expected topic vector of per-step token distributions:
/// sum_t sum_w P_t(w) W_w divided by the total content-word mass.
inline TopicVector soft_topic_vector(const std::vector<std::vector<double>>& distributions,
                                     const TopicProjector& proj) {
  TopicVector tv{std::vector<double>(proj.rank(), 0.0), 0};
  double mass = 0.0;
  for (const auto& dist : distributions) {
    if (dist.size() != proj.vocab_size()) {
      throw ShapeError("soft_topic_vector: distribution of size " + std::to_string(dist.size()) +
                       " vs vocabulary " + std::to_string(proj.vocab_size()));
    }
    bool any = false;
    for (std::size_t id = 0; id < dist.size(); ++id) {
      if (!proj.is_content(static_cast<TokenId>(id)) || dist[id] == 0.0) continue;
      any = true;
      mass += dist[id];
      for (std::size_t k = 0; k < proj.rank(); ++k) tv.values[k] += dist[id] * proj.table().at(id, k);
    }
    if (any) ++tv.matched_tokens;
  }
  if (mass <= 0.0) return {std::vector<double>(proj.rank(), 0.0), 0};
  for (auto& v : tv.values) v /= mass;
  return tv;
}

/// Differentiable form over decoder probability vectors. Returns a constant
/// zero vector when the content mass is zero.
inline ad::Var soft_topic_vector(const std::vector<ad::Var>& distributions, const TopicProjector& proj) {
  if (distributions.empty()) return ad::constant(Tensor({proj.rank()}));
  const ad::Var wt = ad::constant(proj.transposed());
  const ad::Var mask = ad::constant(proj.mask());
  std::vector<ad::Var> sums;
  std::vector<ad::Var> masses;
  for (const auto& d : distributions) {
    if (d.size() != proj.vocab_size()) {
      throw ShapeError("soft_topic_vector: distribution " + shape_string(d.dims()) + " vs vocabulary " +
                       std::to_string(proj.vocab_size()));
    }
    sums.push_back(ad::matmul(wt, d));
    masses.push_back(ad::sum(ad::mul(mask, d)));
  }
  ad::Var numer = sums[0];
  ad::Var mass = masses[0];
  for (std::size_t t = 1; t < sums.size(); ++t) {
    numer = ad::add(numer, sums[t]);
    mass = ad::add(mass, masses[t]);
  }
  if (!(mass.item() > 0.0)) return ad::constant(Tensor({proj.rank()}));
  return ad::div(numer, mass);
}

namespace detail {
inline std::vector<double> smooth(std::span<const double> x, double eps) {
  std::vector<double> out(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) total += (out[i] = x[i] + eps);
  for (auto& v : out) v /= total;
  return out;
}
}  // namespace detail

/// (1/d) * KL(tc~ || tr~) where x~ = (x + eps) / sum(x + eps).
inline double topic_kl(std::span<const double> tc, std::span<const double> tr, double eps = default_kl_eps) {
  if (tc.size() != tr.size()) {
    throw ShapeError("topic_kl: length mismatch " + std::to_string(tc.size()) + " vs " +
                     std::to_string(tr.size()));
  }
  if (tc.empty()) throw ShapeError("topic_kl: empty topic vectors");
  if (!(eps > 0.0)) throw ConfigError("topic_kl: eps must be positive");
  const auto p = detail::smooth(tc, eps);
  const auto q = detail::smooth(tr, eps);
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) kl += p[i] * std::log(p[i] / q[i]);
  return std::max(0.0, kl) / static_cast<double>(p.size());
}

inline double topic_kl(const TopicVector& tc, const TopicVector& tr, double eps = default_kl_eps) {
  return topic_kl(tc.values, tr.values, eps);
}

/// Differentiable in `tr`; `tc` is a constant.
inline ad::Var topic_kl(std::span<const double> tc, const ad::Var& tr, double eps = default_kl_eps) {
  if (tc.size() != tr.size()) {
    throw ShapeError("topic_kl: length mismatch " + std::to_string(tc.size()) + " vs " +
                     std::to_string(tr.size()));
  }
  const auto p = detail::smooth(tc, eps);
  Tensor p_t({p.size()}, p);
  Tensor log_p({p.size()});
  for (std::size_t i = 0; i < p.size(); ++i) log_p[i] = std::log(p[i]);
  ad::Var shifted = ad::add_scalar(tr, eps);
  ad::Var q = ad::div(shifted, ad::sum(shifted));
  ad::Var diff = ad::sub(ad::constant(std::move(log_p)), ad::log(q));
  return ad::scale(ad::sum(ad::mul(ad::constant(std::move(p_t)), diff)), 1.0 / static_cast<double>(p.size()));
}

}  // namespace thredkit::topics

#endif  // THREDKIT_TOPICS_HPP
