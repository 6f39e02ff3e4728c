#ifndef THREDKIT_TESTS_PIPELINE_HPP
#define THREDKIT_TESTS_PIPELINE_HPP

#include <memory>
#include <vector>

#include "thredkit/corpus.hpp"
#include "thredkit/model.hpp"
#include "thredkit/topics.hpp"
#include "support/synthetic.hpp"

namespace thredkit::fixtures {

/// Synthetic corpus carried through vocabulary, encoding, split and topics.
struct Pipeline {
  Vocabulary vocab;
  std::vector<Dialog> dialogs;
  std::vector<Example> train, valid, test;
  topics::PpmiMatrix ppmi;
  std::shared_ptr<topics::TopicModel> nmf;
  std::shared_ptr<topics::TopicModel> ppmi_rows;
};

inline Pipeline make_pipeline(const std::vector<RawDialog>& raws, std::uint64_t seed, std::size_t rank = 3,
                              std::vector<double> ratios = {0.8, 0.1, 0.1}) {
  Pipeline p;
  p.vocab = build_vocab(raws);
  p.dialogs = encode_all(raws, p.vocab);
  auto parts = split(p.dialogs, {ratios[0], ratios[1], ratios[2]}, seed);
  p.train = make_examples(parts.train);
  p.valid = make_examples(parts.valid);
  p.test = make_examples(parts.test);
  p.ppmi = topics::build_ppmi(parts.train, p.vocab, topics::builtin_stopwords());
  topics::NmfOptions opt;
  opt.rank = rank;
  opt.seed = seed;
  p.nmf = std::make_shared<topics::TopicModel>(topics::TopicModel::from_nmf(p.ppmi, opt));
  p.ppmi_rows = std::make_shared<topics::TopicModel>(topics::TopicModel::from_ppmi_rows(p.ppmi));
  return p;
}

inline Pipeline make_pipeline(std::size_t n_dialogs, std::uint64_t seed, std::size_t rank = 3,
                              std::vector<double> ratios = {0.8, 0.1, 0.1}) {
  return make_pipeline(synthetic_corpus(n_dialogs, seed), seed, rank, std::move(ratios));
}

inline model::ModelConfig desk_config(model::Variant v, std::size_t vocab_size, std::size_t d_t) {
  model::ModelConfig c;
  c.variant = v;
  c.vocab_size = vocab_size;
  c.embed_dim = 16;
  c.hidden_dim = 32;
  c.d_z = 8;
  c.d_t = d_t;
  c.kl_anneal_steps = 500;
  return c;
}

}  // namespace thredkit::fixtures

#endif  // THREDKIT_TESTS_PIPELINE_HPP
