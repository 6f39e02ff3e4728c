#ifndef THREDKIT_CLI_HPP
#define THREDKIT_CLI_HPP

// Subcommands of the `thredkit` tool. run() returns the process exit code:
// 0 ok, 2 configuration error, 3 I/O error, 4 numeric divergence.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "thredkit/checkpoint.hpp"
#include "thredkit/corpus.hpp"
#include "thredkit/decode.hpp"
#include "thredkit/metrics.hpp"
#include "thredkit/model.hpp"
#include "thredkit/run_config.hpp"
#include "thredkit/topics.hpp"
#include "thredkit/train.hpp"

namespace thredkit::cli {

enum ExitCode : int { ok = 0, failure = 1, config_error = 2, io_error = 3, divergence = 4 };

namespace detail {

inline std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::uint64_t fallback) {
  if (flag) return *flag;
  if (const char* env = std::getenv("THREDKIT_SEED"); env && *env) {
    try {
      return std::stoull(env);
    } catch (const std::logic_error&) {
      throw ConfigError(std::string("THREDKIT_SEED is not an integer: '") + env + "'");
    }
  }
  return fallback;
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

inline std::vector<Utterance> encode_context_line(const std::string& line, const Vocabulary& vocab, bool lowercase) {
  std::vector<Utterance> ctx;
  for (const auto& u : parse_eou_line(line, lowercase)) ctx.push_back(encode_utterance(u, vocab));
  return ctx;
}

inline std::vector<double> parse_betas(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t pos = 0;
      const double b = std::stod(part, &pos);
      if (pos != part.size() || !(b > 0.0)) throw std::invalid_argument("beta");
      out.push_back(b);
    } catch (const std::logic_error&) {
      throw ConfigError("bad beta value '" + part + "'");
    }
  }
  if (out.empty()) throw ConfigError("no beta values given");
  return out;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("error while writing '" + path + "'");
}

inline std::string fmt(double v) { return model::format_double(v); }

}  // namespace detail

// ---- build-vocab ----------------------------------------------------------------

struct BuildVocabArgs {
  std::string corpus;
  std::string out;
  std::size_t top_k = default_top_k;
  bool lowercase = true;
};

inline int cmd_build_vocab(const BuildVocabArgs& a, std::ostream& out) {
  if (a.top_k < 1) throw ConfigError("--top-k must be >= 1");
  auto corpus = load_corpus(a.corpus, CorpusFormat::eou_lines, a.lowercase);
  Vocabulary vocab = build_vocab(corpus.dialogs, a.top_k);
  save_vocab(a.out, vocab);
  RunConfig rc({"command", "corpus", "out", "top_k", "lowercase"});
  rc.set("command", "build-vocab");
  rc.set("corpus", a.corpus);
  rc.set("out", a.out);
  rc.set("top_k", std::to_string(a.top_k));
  rc.set("lowercase", a.lowercase ? "true" : "false");
  rc.write(a.out + ".config");
  out << "dialogs=" << corpus.dialogs.size() << " skipped=" << corpus.skipped << " vocab_size=" << vocab.size()
      << '\n';
  return ok;
}

// ---- topics ---------------------------------------------------------------------

struct TopicsArgs {
  std::string corpus;
  std::string vocab;
  std::string stopwords;  // empty: built-in list
  std::size_t window = topics::default_window;
  std::size_t rank = topics::default_rank;
  std::size_t iters = topics::default_nmf_iters;
  double tol = topics::default_nmf_tol;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool lowercase = true;
};

inline int cmd_topics(const TopicsArgs& a, std::ostream& out) {
  const std::uint64_t seed = detail::resolve_seed(a.seed, 0);
  if (a.window < 1) throw ConfigError("--window must be >= 1");
  if (a.rank < 1) throw ConfigError("--rank must be >= 1");
  Vocabulary vocab = load_vocab(a.vocab);
  auto corpus = load_corpus(a.corpus, CorpusFormat::eou_lines, a.lowercase);
  const topics::StopwordSet stop =
      a.stopwords.empty() ? topics::builtin_stopwords() : topics::load_stopwords(a.stopwords, a.lowercase);
  auto ppmi = topics::build_ppmi(encode_all(corpus.dialogs, vocab), vocab, stop, a.window);
  if (a.rank > ppmi.dim()) {
    throw ConfigError("--rank " + std::to_string(a.rank) + " exceeds the " + std::to_string(ppmi.dim()) +
                      " content words");
  }
  topics::NmfResult details;
  auto tm = topics::TopicModel::from_nmf(ppmi, {a.rank, a.iters, a.tol, seed}, &details);
  topics::save_topic_model(a.out, tm);

  RunConfig rc({"command", "corpus", "vocab", "stopwords", "window", "rank", "iters", "tol", "seed", "out",
                "lowercase"});
  rc.set("command", "topics");
  rc.set("corpus", a.corpus);
  rc.set("vocab", a.vocab);
  rc.set("stopwords", a.stopwords.empty() ? "<builtin>" : a.stopwords);
  rc.set("window", std::to_string(a.window));
  rc.set("rank", std::to_string(a.rank));
  rc.set("iters", std::to_string(a.iters));
  rc.set("tol", detail::fmt(a.tol));
  rc.set("seed", std::to_string(seed));
  rc.set("out", a.out);
  rc.set("lowercase", a.lowercase ? "true" : "false");
  rc.write(a.out + ".config");

  out << "content_words=" << ppmi.dim() << " nonzeros=" << ppmi.cells.nonzeros() << " iterations="
      << details.iterations << '\n';
  out << "relative_frobenius_error=" << detail::fmt(details.relative_error) << '\n';
  return ok;
}

// ---- train ----------------------------------------------------------------------

inline const std::set<std::string>& train_keys() {
  static const std::set<std::string> keys{
      "corpus", "vocab",  "topic_model", "out_dir", "variant",   "embed_dim",   "hidden_dim",
      "d_z",    "d_t",    "topic_weight", "kl_anneal_steps", "topic_eps", "lr", "steps",
      "batch",  "seed",   "split",        "clip_norm", "lowercase", "top_k", "valid_limit", "resume"};
  return keys;
}

struct TrainArgs {
  std::string config;
  std::string variant;
  std::string resume;
  std::string corpus;
  std::string vocab;
  std::string topic_model;
  std::string out_dir;
  std::optional<std::uint64_t> steps;
  std::optional<double> lr;
  std::optional<std::size_t> batch;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;  // key=value
};

inline constexpr const char* train_log_header = "step,ce,kl_global,topic_div";

inline int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig rc(train_keys());
  if (!a.config.empty()) rc.merge_file(a.config);
  for (const auto& o : a.overrides) rc.set_assignment(o);
  if (!a.variant.empty()) rc.set("variant", a.variant);
  if (!a.resume.empty()) rc.set("resume", a.resume);
  if (!a.corpus.empty()) rc.set("corpus", a.corpus);
  if (!a.vocab.empty()) rc.set("vocab", a.vocab);
  if (!a.topic_model.empty()) rc.set("topic_model", a.topic_model);
  if (!a.out_dir.empty()) rc.set("out_dir", a.out_dir);
  if (a.steps) rc.set("steps", std::to_string(*a.steps));
  if (a.lr) rc.set("lr", detail::fmt(*a.lr));
  if (a.batch) rc.set("batch", std::to_string(*a.batch));
  const std::uint64_t seed =
      detail::resolve_seed(a.seed ? a.seed : (rc.has("seed") ? std::optional(rc.get_u64("seed", 1)) : std::nullopt), 1);
  rc.set("seed", std::to_string(seed));

  std::optional<Checkpoint> resume;
  if (rc.has("resume")) resume = load_checkpoint(rc.get("resume"));

  model::ModelConfig mc = resume ? resume->config : model::ModelConfig{};
  if (rc.has("variant")) mc.variant = model::parse_variant(rc.get("variant"));
  if (resume && mc.variant != resume->config.variant) throw ConfigError("--variant differs from the resumed checkpoint");
  if (mc.variant == model::Variant::thred && !rc.has("topic_model")) {
    throw ConfigError("variant thred requires --topic-model");
  }
  if (!rc.has("corpus")) throw ConfigError("--corpus is required");
  if (!rc.has("out_dir")) throw ConfigError("--out-dir is required");

  const bool lowercase = rc.get_bool("lowercase", true);
  const auto ratios = parse_ratios(rc.get("split", "0.8,0.1,0.1"));
  train::TrainOptions topt;
  topt.lr = rc.get_double("lr", train::default_lr);
  topt.steps = rc.get_u64("steps", train::default_steps);
  topt.batch = rc.get_u64("batch", 16);
  topt.seed = seed;
  topt.clip_norm = rc.get_double("clip_norm", 5.0);
  topt.valid_limit = rc.get_u64("valid_limit", 0);
  if (topt.batch == 0) throw ConfigError("batch must be >= 1");
  if (!(topt.lr > 0.0)) throw ConfigError("lr must be positive");

  std::shared_ptr<topics::TopicModel> tm;
  if (rc.has("topic_model")) tm = std::make_shared<topics::TopicModel>(topics::load_topic_model(rc.get("topic_model")));

  if (!resume) {
    mc.embed_dim = rc.get_u64("embed_dim", mc.embed_dim);
    mc.hidden_dim = rc.get_u64("hidden_dim", mc.hidden_dim);
    mc.d_z = rc.get_u64("d_z", mc.d_z);
    mc.d_t = rc.get_u64("d_t", tm ? tm->rank() : mc.d_t);
    mc.topic_weight = rc.get_double("topic_weight", mc.topic_weight);
    mc.kl_anneal_steps = rc.get_u64("kl_anneal_steps", mc.kl_anneal_steps);
    mc.topic_eps = rc.get_double("topic_eps", mc.topic_eps);
  }

  auto corpus = load_corpus(rc.get("corpus"), CorpusFormat::eou_lines, lowercase);
  Vocabulary vocab = resume ? resume->vocabulary()
                     : rc.has("vocab") ? load_vocab(rc.get("vocab"))
                                       : build_vocab(corpus.dialogs, rc.get_u64("top_k", default_top_k));
  mc.vocab_size = vocab.size();
  mc.validate();
  if (resume && !(mc == resume->config)) throw ConfigError("resumed checkpoint does not match the vocabulary");

  std::shared_ptr<const topics::TopicProjector> proj;
  if (tm && mc.variant == model::Variant::thred) {
    if (tm->rank() != mc.d_t) {
      throw ConfigError("topic model rank " + std::to_string(tm->rank()) + " != d_t " + std::to_string(mc.d_t));
    }
    proj = std::make_shared<topics::TopicProjector>(*tm, vocab);
  }

  auto parts = split(encode_all(corpus.dialogs, vocab), ratios, seed);
  const auto train_ex = make_examples(parts.train);
  const auto valid_ex = make_examples(parts.valid);

  // fully resolved settings
  rc.set("variant", model::to_string(mc.variant));
  rc.set("embed_dim", std::to_string(mc.embed_dim));
  rc.set("hidden_dim", std::to_string(mc.hidden_dim));
  rc.set("d_z", std::to_string(mc.d_z));
  rc.set("d_t", std::to_string(mc.d_t));
  rc.set("topic_weight", detail::fmt(mc.topic_weight));
  rc.set("kl_anneal_steps", std::to_string(mc.kl_anneal_steps));
  rc.set("topic_eps", detail::fmt(mc.topic_eps));
  rc.set("lr", detail::fmt(topt.lr));
  rc.set("steps", std::to_string(topt.steps));
  rc.set("batch", std::to_string(topt.batch));
  rc.set("clip_norm", detail::fmt(topt.clip_norm));
  rc.set("valid_limit", std::to_string(topt.valid_limit));
  rc.set("lowercase", lowercase ? "true" : "false");
  rc.set("split", rc.get("split", "0.8,0.1,0.1"));

  const std::filesystem::path dir = rc.get("out_dir");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "'");
  rc.write((dir / "run_config.txt").string());

  std::ofstream log((dir / "train_log.csv").string(), std::ios::binary);
  if (!log) throw IoError("cannot write training log in '" + dir.string() + "'");
  log << train_log_header << '\n';
  auto on_epoch = [&](const train::EpochRecord& r) {
    log << r.step << ',' << detail::fmt(r.ce) << ',' << detail::fmt(r.kl_global) << ',' << detail::fmt(r.topic_div)
        << '\n';
    log.flush();
  };

  const Checkpoint* resume_ptr = resume ? &*resume : nullptr;
  auto result = train::train(mc, train_ex, valid_ex, topt, proj, resume_ptr, vocab.regular_tokens(), on_epoch);
  save_checkpoint((dir / "checkpoint.thrd").string(), result.best);
  save_checkpoint((dir / "last.thrd").string(), result.last);
  out << "epochs=" << result.log.size() << " steps=" << result.last.global_step << " train_examples=" << train_ex.size()
      << " valid_examples=" << valid_ex.size() << '\n';
  if (result.diverged) {
    out << "diverged: non-finite " << result.divergence_component << "; kept last good checkpoint\n";
    return divergence;
  }
  return ok;
}

// ---- generate -------------------------------------------------------------------

struct GenerateArgs {
  std::string checkpoint;
  std::string context_file;
  std::size_t beam = decode::default_beam;
  std::size_t max_len = decode::default_max_len;
  std::optional<std::uint64_t> seed;
  std::string out;  // empty: stdout
  bool greedy = false;
  bool lowercase = true;
};

inline int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  if (a.beam < 1) throw ConfigError("--beam must be >= 1");
  if (a.max_len < 1) throw ConfigError("--max-len must be >= 1");
  const std::uint64_t seed = detail::resolve_seed(a.seed, 0);
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const Vocabulary vocab = ck.vocabulary();
  if (vocab.size() != ck.config.vocab_size) throw IoError("checkpoint vocabulary does not match its model");
  const model::Model m = ck.instantiate();
  const auto lines = detail::read_lines(a.context_file);

  std::ostringstream replies;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto ctx = detail::encode_context_line(lines[i], vocab, a.lowercase);
    if (ctx.empty()) {
      replies << '\n';
      continue;
    }
    const std::uint64_t line_seed = seed + i;
    const Utterance reply = a.greedy ? decode::greedy(m, ctx, a.max_len, line_seed)
                                     : decode::beam_search(m, ctx, a.beam, a.max_len, line_seed).front();
    replies << join_tokens(decode_utterance(reply, vocab)) << '\n';
  }

  if (a.out.empty()) {
    out << replies.str();
  } else {
    detail::write_text(a.out, replies.str());
    RunConfig rc({"command", "checkpoint", "context_file", "beam", "max_len", "seed", "out", "greedy", "lowercase"});
    rc.set("command", "generate");
    rc.set("checkpoint", a.checkpoint);
    rc.set("context_file", a.context_file);
    rc.set("beam", std::to_string(a.beam));
    rc.set("max_len", std::to_string(a.max_len));
    rc.set("seed", std::to_string(seed));
    rc.set("out", a.out);
    rc.set("greedy", a.greedy ? "true" : "false");
    rc.set("lowercase", a.lowercase ? "true" : "false");
    rc.write(a.out + ".config");
  }
  return ok;
}

// ---- eval -----------------------------------------------------------------------

struct EvalArgs {
  std::string refs;
  std::string hyps;
  std::string contexts;
  std::string topic_model;
  std::string checkpoint;
  std::string betas = "0.5,1,1.5";
  std::string out;  // empty: stdout
  std::size_t ppl_samples = 1;
  std::optional<std::uint64_t> seed;
  bool lowercase = true;
};

inline metrics::MetricsReport evaluate(const EvalArgs& a, std::ostream* warn = &std::cerr) {
  const auto betas = detail::parse_betas(a.betas);
  const std::uint64_t seed = detail::resolve_seed(a.seed, 0);
  const auto hyp_lines = detail::read_lines(a.hyps);
  const auto ctx_lines = detail::read_lines(a.contexts);
  if (hyp_lines.size() != ctx_lines.size()) {
    throw ConfigError("line count mismatch: " + std::to_string(hyp_lines.size()) + " hyps vs " +
                      std::to_string(ctx_lines.size()) + " contexts");
  }
  std::vector<std::string> ref_lines;
  if (!a.refs.empty()) {
    ref_lines = detail::read_lines(a.refs);
    if (ref_lines.size() != ctx_lines.size()) {
      throw ConfigError("line count mismatch: " + std::to_string(ref_lines.size()) + " refs vs " +
                        std::to_string(ctx_lines.size()) + " contexts");
    }
  }
  if (!a.checkpoint.empty() && a.refs.empty()) throw ConfigError("perplexity needs --refs alongside --checkpoint");

  // topic words double as the vocabulary: anything else cannot match a row
  const topics::TopicModel tm = topics::load_topic_model(a.topic_model);
  const Vocabulary topic_vocab = Vocabulary::from_tokens(tm.words());

  std::vector<std::vector<std::string>> hyps;
  std::vector<Utterance> ctx_ids, hyp_ids;
  for (std::size_t i = 0; i < hyp_lines.size(); ++i) {
    std::vector<std::string> h;
    for (auto& u : parse_eou_line(hyp_lines[i], a.lowercase)) h.insert(h.end(), u.begin(), u.end());
    Utterance c;
    for (const auto& u : parse_eou_line(ctx_lines[i], a.lowercase)) {
      auto ids = encode_utterance(u, topic_vocab);
      c.insert(c.end(), ids.begin(), ids.end());
    }
    hyp_ids.push_back(encode_utterance(h, topic_vocab));
    ctx_ids.push_back(std::move(c));
    hyps.push_back(std::move(h));
  }

  const double d1 = metrics::distinct_n(std::span<const std::vector<std::string>>(hyps), 1);
  const double d2 = metrics::distinct_n(std::span<const std::vector<std::string>>(hyps), 2);
  const auto td = metrics::topic_div(ctx_ids, hyp_ids, tm, topic_vocab);
  metrics::MetricsReport report = metrics::make_report(d1, d2, td.value, betas, warn);
  report.skipped_pairs = td.skipped;
  report.n_responses = hyps.size();

  if (!a.checkpoint.empty()) {
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const Vocabulary vocab = ck.vocabulary();
    const model::Model m = ck.instantiate();
    std::vector<Example> examples;
    for (std::size_t i = 0; i < ctx_lines.size(); ++i) {
      auto ctx = detail::encode_context_line(ctx_lines[i], vocab, a.lowercase);
      std::vector<std::string> r;
      for (auto& u : parse_eou_line(ref_lines[i], a.lowercase)) r.insert(r.end(), u.begin(), u.end());
      if (ctx.empty()) continue;
      examples.push_back({std::move(ctx), encode_utterance(r, vocab)});
    }
    report.perplexity = metrics::perplexity(m, examples, a.ppl_samples, seed);
  }
  return report;
}

inline int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto report = evaluate(a);
  const std::string json = report.to_json().dump(2) + "\n";
  if (a.out.empty()) {
    out << json;
  } else {
    detail::write_text(a.out, json);
    RunConfig rc({"command", "refs", "hyps", "contexts", "topic_model", "checkpoint", "betas", "out", "ppl_samples",
                  "seed", "lowercase"});
    rc.set("command", "eval");
    rc.set("refs", a.refs);
    rc.set("hyps", a.hyps);
    rc.set("contexts", a.contexts);
    rc.set("topic_model", a.topic_model);
    rc.set("checkpoint", a.checkpoint);
    rc.set("betas", a.betas);
    rc.set("out", a.out);
    rc.set("ppl_samples", std::to_string(a.ppl_samples));
    rc.set("seed", std::to_string(detail::resolve_seed(a.seed, 0)));
    rc.set("lowercase", a.lowercase ? "true" : "false");
    rc.write(a.out + ".config");
  }
  return ok;
}

// ---- entry point ------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"thredkit: topic-coherent hierarchical dialog generation toolkit"};
  app.require_subcommand(1);

  BuildVocabArgs bv;
  auto* s_bv = app.add_subcommand("build-vocab", "Build a frequency-ranked vocabulary file");
  s_bv->add_option("--corpus", bv.corpus, "Corpus file (one dialog per line, __eou__ separated)")->required();
  s_bv->add_option("--out", bv.out, "Output vocabulary file")->required();
  s_bv->add_option("--top-k", bv.top_k, "Number of most frequent tokens to keep")->capture_default_str();
  s_bv->add_option("--lowercase", bv.lowercase, "Lowercase tokens")->capture_default_str();

  TopicsArgs tp;
  std::uint64_t tp_seed = 0;
  auto* s_tp = app.add_subcommand("topics", "Build the PPMI matrix and factorize it into a topic model");
  s_tp->add_option("--corpus", tp.corpus, "Corpus file")->required();
  s_tp->add_option("--vocab", tp.vocab, "Vocabulary file")->required();
  s_tp->add_option("--stopwords", tp.stopwords, "Stopword file (default: built-in English list)");
  s_tp->add_option("--window", tp.window, "Co-occurrence window")->capture_default_str();
  s_tp->add_option("--rank", tp.rank, "Topic rank p")->capture_default_str();
  s_tp->add_option("--iters", tp.iters, "Maximum NMF iterations")->capture_default_str();
  s_tp->add_option("--tol", tp.tol, "Relative objective decrease to stop at")->capture_default_str();
  auto* tp_seed_opt = s_tp->add_option("--seed", tp_seed, "NMF initialization seed");
  s_tp->add_option("--out", tp.out, "Output topic model file")->required();
  s_tp->add_option("--lowercase", tp.lowercase, "Lowercase tokens")->capture_default_str();

  TrainArgs tr;
  std::uint64_t tr_steps = 0, tr_seed = 0;
  double tr_lr = 0.0;
  std::size_t tr_batch = 0;
  auto* s_tr = app.add_subcommand("train", "Train a model variant");
  s_tr->add_option("--config", tr.config, "Flat key = value config file");
  s_tr->add_option("--variant", tr.variant, "seq2seq, hred, vhred or thred");
  s_tr->add_option("--resume", tr.resume, "Checkpoint to resume from");
  s_tr->add_option("--corpus", tr.corpus, "Corpus file");
  s_tr->add_option("--vocab", tr.vocab, "Vocabulary file (built from the corpus when absent)");
  s_tr->add_option("--topic-model", tr.topic_model, "Topic model file (required for thred)");
  s_tr->add_option("--out-dir", tr.out_dir, "Output directory");
  auto* tr_steps_opt = s_tr->add_option("--steps", tr_steps, "Total optimizer steps");
  auto* tr_lr_opt = s_tr->add_option("--lr", tr_lr, "Learning rate");
  auto* tr_batch_opt = s_tr->add_option("--batch", tr_batch, "Batch size");
  auto* tr_seed_opt = s_tr->add_option("--seed", tr_seed, "Seed");
  s_tr->add_option("--set", tr.overrides, "Extra key=value settings")->take_all();

  GenerateArgs ge;
  std::uint64_t ge_seed = 0;
  auto* s_ge = app.add_subcommand("generate", "Generate one reply per context line");
  s_ge->add_option("--checkpoint", ge.checkpoint, "Checkpoint file")->required();
  s_ge->add_option("--context-file", ge.context_file, "One context per line")->required();
  s_ge->add_option("--beam", ge.beam, "Beam width")->capture_default_str();
  s_ge->add_option("--max-len", ge.max_len, "Maximum reply length")->capture_default_str();
  auto* ge_seed_opt = s_ge->add_option("--seed", ge_seed, "Latent sampling seed");
  s_ge->add_option("--out", ge.out, "Output file (default stdout)");
  s_ge->add_flag("--greedy", ge.greedy, "Greedy decoding instead of beam search");
  s_ge->add_option("--lowercase", ge.lowercase, "Lowercase tokens")->capture_default_str();

  EvalArgs ev;
  std::uint64_t ev_seed = 0;
  auto* s_ev = app.add_subcommand("eval", "Compute the metrics report");
  s_ev->add_option("--refs", ev.refs, "Reference replies, one per line");
  s_ev->add_option("--hyps", ev.hyps, "Generated replies, one per line")->required();
  s_ev->add_option("--contexts", ev.contexts, "Contexts, one per line")->required();
  s_ev->add_option("--topic-model", ev.topic_model, "Topic model file")->required();
  s_ev->add_option("--checkpoint", ev.checkpoint, "Checkpoint for perplexity");
  s_ev->add_option("--betas", ev.betas, "Comma-separated F-score betas")->capture_default_str();
  s_ev->add_option("--out", ev.out, "Output JSON file (default stdout)");
  s_ev->add_option("--ppl-samples", ev.ppl_samples, "Latent samples for perplexity")->capture_default_str();
  auto* ev_seed_opt = s_ev->add_option("--seed", ev_seed, "Seed");
  s_ev->add_option("--lowercase", ev.lowercase, "Lowercase tokens")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return config_error;
  }

  try {
    if (*s_bv) return cmd_build_vocab(bv, out);
    if (*s_tp) {
      if (tp_seed_opt->count()) tp.seed = tp_seed;
      return cmd_topics(tp, out);
    }
    if (*s_tr) {
      if (tr_steps_opt->count()) tr.steps = tr_steps;
      if (tr_lr_opt->count()) tr.lr = tr_lr;
      if (tr_batch_opt->count()) tr.batch = tr_batch;
      if (tr_seed_opt->count()) tr.seed = tr_seed;
      return cmd_train(tr, out);
    }
    if (*s_ge) {
      if (ge_seed_opt->count()) ge.seed = ge_seed;
      return cmd_generate(ge, out);
    }
    if (*s_ev) {
      if (ev_seed_opt->count()) ev.seed = ev_seed;
      return cmd_eval(ev, out);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return config_error;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return io_error;
  } catch (const EmptyCorpusError& e) {
    err << "i/o error: " << e.what() << '\n';
    return io_error;
  } catch (const DivergenceError& e) {
    err << "divergence: " << e.what() << '\n';
    return divergence;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return failure;
  }
  return failure;
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<const char*> argv{"thredkit"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace thredkit::cli

#endif  // THREDKIT_CLI_HPP
