#include "hwssl/verifier.hpp"

#include <algorithm>
#include <random>

#include "hwssl/encoder.hpp"

namespace hwssl::verifier {

std::string to_string(Combine c) { return c == Combine::concat ? "concat" : "absdiff"; }

Combine combine_from_string(const std::string& s) {
  if (s == "concat") return Combine::concat;
  if (s == "absdiff") return Combine::absdiff;
  throw Error("unknown pair combination: " + s);
}

std::vector<float> combine_pair(std::span<const float> k, std::span<const float> q, Combine mode) {
  if (k.size() != q.size()) throw Error("combine_pair: embedding dimensions differ");
  std::vector<float> out;
  if (mode == Combine::concat) {
    out.reserve(2 * k.size());
    out.insert(out.end(), k.begin(), k.end());
    out.insert(out.end(), q.begin(), q.end());
  } else {
    out.resize(k.size());
    for (std::size_t i = 0; i < k.size(); ++i) out[i] = std::abs(k[i] - q[i]);
  }
  return out;
}

torch::Tensor combine_pair(const torch::Tensor& k, const torch::Tensor& q, Combine mode) {
  if (k.sizes() != q.sizes()) throw Error("combine_pair: embedding dimensions differ");
  return mode == Combine::concat ? torch::cat({k, q}, 1) : (k - q).abs();
}

bool EarlyStopping::improved(double value) {
  if (value > best + min_delta) {
    best = value;
    bad = 0;
    return true;
  }
  ++bad;
  return false;
}

void to_json(nlohmann::json& j, const VerifierConfig& c) {
  j = {{"feature_source", c.feature_source},
       {"combine", to_string(c.combine)},
       {"fc1", c.fc1},
       {"fc2", c.fc2},
       {"batch_size", c.batch_size},
       {"lr", c.lr},
       {"max_epochs", c.max_epochs},
       {"patience", c.patience},
       {"min_delta", c.min_delta},
       {"val_fraction", c.val_fraction},
       {"standardize", c.standardize},
       {"seed", c.seed},
       {"resnet", c.resnet},
       {"vit", c.vit},
       {"input", c.input}};
}

void from_json(const nlohmann::json& j, VerifierConfig& c) {
  c = VerifierConfig{};
  c.feature_source = j.value("feature_source", c.feature_source);
  if (j.contains("combine")) c.combine = combine_from_string(j.at("combine").get<std::string>());
  c.fc1 = j.value("fc1", c.fc1);
  c.fc2 = j.value("fc2", c.fc2);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.min_delta = j.value("min_delta", c.min_delta);
  c.val_fraction = j.value("val_fraction", c.val_fraction);
  c.standardize = j.value("standardize", c.standardize);
  c.seed = j.value("seed", c.seed);
  if (j.contains("resnet")) c.resnet = j.at("resnet").get<nn::ResNetConfig>();
  if (j.contains("vit")) c.vit = j.at("vit").get<nn::VitConfig>();
  if (j.contains("input")) c.input = j.at("input").get<InputSpec>();
}

bool is_supervised(const VerifierConfig& c) { return c.feature_source.rfind("supervised:", 0) == 0; }

VerifierHeadImpl::VerifierHeadImpl(int64_t in, int64_t fc1, int64_t fc2) {
  l1 = register_module("l1", torch::nn::Linear(in, fc1));
  l2 = register_module("l2", torch::nn::Linear(fc1, fc2));
  out = register_module("out", torch::nn::Linear(fc2, 2));
}

torch::Tensor VerifierHeadImpl::forward(const torch::Tensor& x) {
  return out(torch::relu(l2(torch::relu(l1(x)))));
}

int64_t head_parameter_count(int64_t d_in, int64_t fc1, int64_t fc2) {
  return (d_in * fc1 + fc1) + (fc1 * fc2 + fc2) + (fc2 * 2 + 2);
}

VerifierNetImpl::VerifierNetImpl(const VerifierConfig& cfg, int64_t embed_dim) {
  if (is_supervised(cfg)) {
    backbone_kind = cfg.feature_source.substr(std::string("supervised:").size());
    if (backbone_kind == "resnet18") {
      resnet = register_module("resnet", nn::ResNet18(cfg.resnet));
      embed_dim = resnet->out_dim();
    } else if (backbone_kind == "vit") {
      vit = register_module("vit", nn::VitEncoder(cfg.vit, true));
      embed_dim = cfg.vit.dim;
    } else {
      throw Error("unknown supervised backbone: " + backbone_kind);
    }
  }
  if (embed_dim <= 0) throw Error("verifier: feature dimension must be positive");
  head = register_module("head", VerifierHead(cfg.combine == Combine::concat ? 2 * embed_dim : embed_dim, cfg.fc1, cfg.fc2));
}

torch::Tensor VerifierNetImpl::embed(const torch::Tensor& images) {
  if (resnet) return resnet->forward(images);
  if (vit) return vit->forward(images);
  throw Error("verifier has no backbone");
}

FeatureTable to_feature_table(const std::vector<Embedding>& embeddings) {
  FeatureTable t;
  for (const auto& e : embeddings) t[e.sample] = e;
  return t;
}

FeatureTable compute_features(const Corpus& corpus, const std::vector<std::size_t>& indices,
                              const std::string& source) {
  const std::string prefix = "checkpoint:";
  if (source.rfind(prefix, 0) == 0)
    return to_feature_table(extract_embeddings(load_encoder(source.substr(prefix.size())), corpus, indices));
  FeatureTable t;
  for (auto i : indices) {
    auto e = handcrafted_features(source, corpus[i].image);
    e.sample = corpus[i].key();
    t[e.sample] = std::move(e);
  }
  return t;
}

std::pair<PairSet, PairSet> split_validation(const PairSet& pairs, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw Error("validation fraction must lie in [0, 1)");
  std::map<WriterId, std::vector<Pair>> by_writer;
  for (const auto& p : pairs.pairs) by_writer[p.known.writer_id].push_back(p);
  std::mt19937_64 rng(seed);
  PairSet train, val;
  train.writers = val.writers = pairs.writers;
  for (auto& [w, group] : by_writer) {
    std::shuffle(group.begin(), group.end(), rng);
    const auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(group.size())));
    val.pairs.insert(val.pairs.end(), group.begin(), group.begin() + n_val);
    train.pairs.insert(train.pairs.end(), group.begin() + n_val, group.end());
  }
  if (fraction > 0.0 && val.pairs.empty() && train.pairs.size() >= 2) {
    val.pairs.push_back(train.pairs.back());
    train.pairs.pop_back();
  }
  return {train, val};
}

namespace {

torch::Tensor labels_of(const PairSet& pairs) {
  std::vector<int64_t> y;
  for (const auto& p : pairs.pairs) y.push_back(p.label);
  return torch::tensor(y, torch::kLong);
}

torch::Tensor pair_matrix(const PairSet& pairs, const FeatureTable& features, Combine mode) {
  auto get = [&](const SampleKey& k) -> const Embedding& {
    auto it = features.find(k);
    if (it == features.end()) throw Error("no features for sample " + hwssl::to_string(k));
    return it->second;
  };
  std::vector<float> flat;
  int64_t d = -1;
  for (const auto& p : pairs.pairs) {
    auto row = combine_pair(get(p.known), get(p.questioned), mode);
    if (d < 0) d = static_cast<int64_t>(row.size());
    if (static_cast<int64_t>(row.size()) != d) throw Error("feature dimension differs between samples");
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return torch::from_blob(flat.data(), {static_cast<int64_t>(pairs.pairs.size()), d}, torch::kFloat32).clone();
}

int64_t feature_dim(const FeatureTable& features) {
  if (features.empty()) throw Error("empty feature table");
  return static_cast<int64_t>(features.begin()->second.dim());
}

VerificationMetrics metrics_of(const torch::Tensor& proba, const PairSet& pairs) {
  auto pred = proba.argmax(1).to(torch::kInt).contiguous();
  std::vector<int> p(pred.data_ptr<int>(), pred.data_ptr<int>() + pred.numel());
  std::vector<int> y;
  for (const auto& q : pairs.pairs) y.push_back(q.label);
  return classification_metrics(y, p);
}

/// Head inputs for a pair set: either from features or by running the backbone on images.
struct PairSource {
  virtual ~PairSource() = default;
  virtual torch::Tensor inputs(VerifierModel& m, const PairSet& pairs, const std::vector<int64_t>& rows) = 0;
};

torch::Tensor standardized(const VerifierModel& m, const torch::Tensor& x) {
  return m.feature_mean.defined() ? (x - m.feature_mean) / m.feature_std : x;
}

struct FeatureSource : PairSource {
  torch::Tensor x;
  torch::Tensor inputs(VerifierModel& m, const PairSet&, const std::vector<int64_t>& rows) override {
    return standardized(m, x.index_select(0, torch::tensor(rows, torch::kLong)));
  }
};

struct ImageSource : PairSource {
  std::map<SampleKey, int64_t> row_of;
  torch::Tensor canonical;
  ImageSource(const PairSet& pairs, const Corpus& corpus) {
    std::vector<std::size_t> idx;
    for (const auto& p : pairs.pairs)
      for (const auto& k : {p.known, p.questioned})
        if (row_of.emplace(k, static_cast<int64_t>(idx.size())).second) idx.push_back(corpus.index_of(k));
    canonical = canonical_batch(corpus, idx);
  }
  torch::Tensor inputs(VerifierModel& m, const PairSet& pairs, const std::vector<int64_t>& rows) override {
    std::vector<int64_t> a, b;
    for (auto r : rows) {
      a.push_back(row_of.at(pairs.pairs[r].known));
      b.push_back(row_of.at(pairs.pairs[r].questioned));
    }
    auto ka = conform(canonical.index_select(0, torch::tensor(a, torch::kLong)), m.config.input);
    auto kb = conform(canonical.index_select(0, torch::tensor(b, torch::kLong)), m.config.input);
    auto h = m.net->embed(torch::cat({ka, kb}, 0));
    auto n = static_cast<int64_t>(rows.size());
    return combine_pair(h.slice(0, 0, n), h.slice(0, n, 2 * n), m.config.combine);
  }
};

torch::Tensor predict(VerifierModel& m, PairSource& src, const PairSet& pairs) {
  torch::NoGradGuard no_grad;
  m.net->eval();
  std::vector<torch::Tensor> out;
  const int64_t n = static_cast<int64_t>(pairs.pairs.size());
  const int64_t bs = std::max(1, m.config.batch_size);
  for (int64_t lo = 0; lo < n; lo += bs) {
    std::vector<int64_t> rows;
    for (int64_t r = lo; r < std::min(n, lo + bs); ++r) rows.push_back(r);
    out.push_back(m.net->head->probabilities(src.inputs(m, pairs, rows)));
  }
  if (out.empty()) return torch::empty({0, 2});
  return torch::cat(out, 0);
}

void fit(VerifierModel& m, const PairSet& train, PairSource& train_src, const PairSet& val, PairSource& val_src) {
  const auto& cfg = m.config;
  if (cfg.batch_size < 1 || cfg.max_epochs < 1) throw Error("verifier: invalid batch size or epoch count");
  torch::optim::Adam adam(m.net->parameters(), torch::optim::AdamOptions(cfg.lr));
  const auto y = labels_of(train);
  const int64_t n = y.size(0);
  EarlyStopping stop{cfg.patience, cfg.min_delta};
  std::string best_state = serialize_module(*m.net);
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    m.net->train();
    auto perm = torch::randperm(n, torch::kLong);
    double loss_sum = 0;
    for (int64_t lo = 0; lo < n; lo += cfg.batch_size) {
      auto idx = perm.slice(0, lo, std::min(n, lo + cfg.batch_size));
      if (m.net->backbone_kind.size() && idx.size(0) < 2) continue;  // batch norm needs two samples
      std::vector<int64_t> rows(idx.data_ptr<int64_t>(), idx.data_ptr<int64_t>() + idx.size(0));
      auto logits = m.net->head->forward(train_src.inputs(m, train, rows));
      auto loss = torch::nn::functional::cross_entropy(logits, y.index_select(0, idx));
      adam.zero_grad();
      loss.backward();
      adam.step();
      loss_sum += loss.item<double>() * static_cast<double>(rows.size());
    }
    const auto& eval_set = val.pairs.empty() ? train : val;
    auto& eval_src = val.pairs.empty() ? train_src : val_src;
    const double f1 = metrics_of(predict(m, eval_src, eval_set), eval_set).f1;
    m.history.push_back({epoch, "train_loss", loss_sum / static_cast<double>(n)});
    m.history.push_back({epoch, "val_f1", f1});
    if (stop.improved(f1)) {
      best_state = serialize_module(*m.net);
      m.best_epoch = epoch;
    }
    if (stop.should_stop()) break;
  }
  deserialize_module(*m.net, best_state);
  m.net->eval();
}

}  // namespace

VerifierModel train_verifier(const PairSet& pairs, const FeatureTable& features, const VerifierConfig& cfg) {
  if (pairs.pairs.empty()) throw Error("train_verifier: empty pair set");
  if (is_supervised(cfg)) throw Error("train_verifier: supervised sources need the corpus");
  seed_everything(cfg.seed);
  auto [train, val] = split_validation(pairs, cfg.val_fraction, cfg.seed);
  VerifierModel m;
  m.config = cfg;
  m.embed_dim = feature_dim(features);
  m.train_writers = pairs.referenced_writers();
  m.net = VerifierNet(cfg, m.embed_dim);
  FeatureSource tr, va;
  tr.x = pair_matrix(train, features, cfg.combine);
  if (tr.x.size(1) != m.net->head->l1->options.in_features()) throw Error("train_verifier: feature dimension mismatch");
  if (!val.pairs.empty()) va.x = pair_matrix(val, features, cfg.combine);
  if (cfg.standardize) {
    m.feature_mean = tr.x.mean(0, true);
    m.feature_std = tr.x.std(0, false, true).clamp_min(1e-6);
  }
  fit(m, train, tr, val, va);
  return m;
}

VerifierModel train_verifier_supervised(const PairSet& pairs, const Corpus& corpus, const VerifierConfig& cfg) {
  if (pairs.pairs.empty()) throw Error("train_verifier: empty pair set");
  if (!is_supervised(cfg)) throw Error("train_verifier_supervised: feature source is not supervised");
  seed_everything(cfg.seed);
  auto [train, val] = split_validation(pairs, cfg.val_fraction, cfg.seed);
  VerifierModel m;
  m.config = cfg;
  m.train_writers = pairs.referenced_writers();
  m.net = VerifierNet(cfg, 0);
  m.embed_dim = m.net->resnet ? m.net->resnet->out_dim() : cfg.vit.dim;
  ImageSource tr(train, corpus);
  std::unique_ptr<ImageSource> va = val.pairs.empty() ? nullptr : std::make_unique<ImageSource>(val, corpus);
  fit(m, train, tr, val, va ? static_cast<PairSource&>(*va) : static_cast<PairSource&>(tr));
  return m;
}

VerifierModel train_verifier(const PairSet& pairs, const Corpus& corpus, const VerifierConfig& cfg) {
  if (is_supervised(cfg)) return train_verifier_supervised(pairs, corpus, cfg);
  std::set<SampleKey> keys;
  for (const auto& p : pairs.pairs) keys.insert({p.known, p.questioned});
  std::vector<std::size_t> idx;
  for (const auto& k : keys) idx.push_back(corpus.index_of(k));
  return train_verifier(pairs, compute_features(corpus, idx, cfg.feature_source), cfg);
}

torch::Tensor predict_proba(const VerifierModel& model, const PairSet& pairs, const FeatureTable& features) {
  FeatureSource src;
  src.x = pairs.pairs.empty() ? torch::empty({0, 0}) : pair_matrix(pairs, features, model.config.combine);
  auto& m = const_cast<VerifierModel&>(model);
  return pairs.pairs.empty() ? torch::empty({0, 2}) : predict(m, src, pairs);
}

torch::Tensor predict_proba(const VerifierModel& model, const PairSet& pairs, const Corpus& corpus) {
  auto& m = const_cast<VerifierModel&>(model);
  if (is_supervised(model.config)) {
    ImageSource src(pairs, corpus);
    return predict(m, src, pairs);
  }
  std::set<SampleKey> keys;
  for (const auto& p : pairs.pairs) keys.insert({p.known, p.questioned});
  std::vector<std::size_t> idx;
  for (const auto& k : keys) idx.push_back(corpus.index_of(k));
  return predict_proba(model, pairs, compute_features(corpus, idx, model.config.feature_source));
}

void check_unseen(const VerifierModel& model, const PairSet& pairs) {
  for (auto w : pairs.referenced_writers())
    if (model.train_writers.count(w))
      throw ProtocolViolation("writer " + std::to_string(w) + " appears in both training and evaluation pairs");
}

VerificationMetrics evaluate_verifier(const VerifierModel& model, const PairSet& pairs, const FeatureTable& features) {
  check_unseen(model, pairs);
  if (pairs.pairs.empty()) throw Error("evaluate_verifier: empty pair set");
  return metrics_of(predict_proba(model, pairs, features), pairs);
}

VerificationMetrics evaluate_verifier(const VerifierModel& model, const PairSet& pairs, const Corpus& corpus) {
  check_unseen(model, pairs);
  if (pairs.pairs.empty()) throw Error("evaluate_verifier: empty pair set");
  return metrics_of(predict_proba(model, pairs, corpus), pairs);
}

void save_verifier(const VerifierModel& model, const std::filesystem::path& path) {
  EncoderCheckpoint c;
  c.method = "verifier";
  c.weights = serialize_module(*model.net);
  c.embed_dim = model.embed_dim;
  c.epoch = model.best_epoch;
  c.metric_history = model.history;
  c.train_config = {{"verifier", model.config},
                    {"train_writers", std::vector<WriterId>(model.train_writers.begin(), model.train_writers.end())}};
  if (model.feature_mean.defined()) {
    auto to_vec = [](const torch::Tensor& t) {
      auto c = t.flatten().contiguous();
      return std::vector<float>(c.data_ptr<float>(), c.data_ptr<float>() + c.numel());
    };
    c.train_config["feature_mean"] = to_vec(model.feature_mean);
    c.train_config["feature_std"] = to_vec(model.feature_std);
  }
  save_checkpoint(c, path);
}

VerifierModel load_verifier(const std::filesystem::path& path) {
  auto c = load_checkpoint(path);
  if (c.method != "verifier") throw Error(path.string() + " is not a verifier checkpoint");
  VerifierModel m;
  m.config = c.train_config.at("verifier").get<VerifierConfig>();
  m.embed_dim = c.embed_dim;
  m.best_epoch = c.epoch;
  m.history = c.metric_history;
  for (auto w : c.train_config.at("train_writers").get<std::vector<WriterId>>()) m.train_writers.insert(w);
  m.net = VerifierNet(m.config, m.embed_dim);
  deserialize_module(*m.net, c.weights);
  m.net->eval();
  if (c.train_config.contains("feature_mean")) {
    auto mean = c.train_config.at("feature_mean").get<std::vector<float>>();
    auto sd = c.train_config.at("feature_std").get<std::vector<float>>();
    m.feature_mean = torch::tensor(mean).view({1, -1});
    m.feature_std = torch::tensor(sd).view({1, -1});
  }
  return m;
}

}  // namespace hwssl::verifier
