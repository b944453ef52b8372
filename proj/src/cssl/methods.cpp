#include "hwssl/cssl/methods.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "hwssl/cssl/losses.hpp"

namespace hwssl::cssl {

namespace F = torch::nn::functional;

const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names{"moco",     "simclr", "byol",        "simsiam",
                                              "fastsiam", "dino",   "barlowtwins", "vicreg"};
  return names;
}

double MethodSpec::param(const std::string& key) const {
  if (loss_params.contains(key)) return loss_params.at(key).get<double>();
  auto d = default_method_spec(method);
  if (d.loss_params.contains(key)) return d.loss_params.at(key).get<double>();
  throw Error(method + ": unknown loss parameter " + key);
}

MethodSpec default_method_spec(const std::string& method) {
  MethodSpec s;
  s.method = method;
  if (method == "simclr") {
    s.projection_head = {512, 128};
    s.loss_params = {{"temperature", 0.1}};
  } else if (method == "moco") {
    s.projection_head = {512, 128};
    s.momentum = 0.99;
    s.loss_params = {{"temperature", 0.1}, {"queue_size", 4096}};
  } else if (method == "byol") {
    s.projection_head = {1024, 256};
    s.prediction_head = {512, 256};
    s.momentum = 0.99;
  } else if (method == "simsiam" || method == "fastsiam") {
    s.projection_head = {1024, 256};
    s.prediction_head = {512, 256};
    if (method == "fastsiam") s.n_views = 4;
  } else if (method == "barlowtwins") {
    s.projection_head = {2048, 2048};
    s.loss_params = {{"lambda", 5e-3}};
  } else if (method == "vicreg") {
    s.projection_head = {2048, 2048};
    s.loss_params = {{"lambda", 25.0}, {"mu", 25.0}, {"nu", 1.0}, {"gamma", 1.0}, {"eps", 1e-4}};
  } else if (method == "dino") {
    s.projection_head = {2048, 256};
    s.momentum = 0.99;
    s.loss_params = {{"teacher_temp", 0.04}, {"student_temp", 0.1}, {"center_momentum", 0.9}, {"prototypes", 4096}};
  } else {
    throw Error("unknown contrastive method: " + method);
  }
  return s;
}

void validate(const MethodSpec& s) {
  const auto d = default_method_spec(s.method);
  if (s.projection_head.empty()) throw Error(s.method + ": projection head must not be empty");
  for (auto w : s.projection_head)
    if (w <= 0) throw Error(s.method + ": head widths must be positive");
  if (d.prediction_head.empty() != s.prediction_head.empty())
    throw Error(s.method + (d.prediction_head.empty() ? ": takes no prediction head" : ": needs a prediction head"));
  if (!s.prediction_head.empty() && s.prediction_head.back() != s.projection_head.back())
    throw Error(s.method + ": prediction head must end at the projection width");
  if (d.momentum.has_value() != s.momentum.has_value())
    throw Error(s.method + (d.momentum ? ": needs a momentum" : ": takes no momentum"));
  if (s.momentum && !(*s.momentum > 0.0 && *s.momentum < 1.0)) throw Error(s.method + ": momentum must lie in (0, 1)");
  if (s.n_views != d.n_views) throw Error(s.method + ": expects " + std::to_string(d.n_views) + " views");
}

void to_json(nlohmann::json& j, const MethodSpec& s) {
  j = {{"method", s.method},
       {"projection_head", s.projection_head},
       {"prediction_head", s.prediction_head},
       {"loss_params", s.loss_params},
       {"n_views", s.n_views}};
  j["momentum"] = s.momentum ? nlohmann::json(*s.momentum) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, MethodSpec& s) {
  s = default_method_spec(j.at("method").get<std::string>());
  s.projection_head = j.value("projection_head", s.projection_head);
  s.prediction_head = j.value("prediction_head", s.prediction_head);
  if (j.contains("momentum")) {
    if (j.at("momentum").is_null())
      s.momentum.reset();
    else
      s.momentum = j.at("momentum").get<double>();
  }
  if (j.contains("loss_params"))
    for (auto& [k, v] : j.at("loss_params").items()) s.loss_params[k] = v;
  s.n_views = j.value("n_views", s.n_views);
}

void to_json(nlohmann::json& j, const ContrastiveConfig& c) {
  j = {{"backbone", c.backbone},         {"base_lr", c.base_lr},
       {"weight_decay", c.weight_decay}, {"sgd_momentum", c.sgd_momentum},
       {"collapse_std", c.collapse_std}, {"collapse_patience", c.collapse_patience},
       {"probe_size", c.probe_size}};
}

void from_json(const nlohmann::json& j, ContrastiveConfig& c) {
  c = ContrastiveConfig{};
  if (j.contains("backbone")) c.backbone = j.at("backbone").get<nn::ResNetConfig>();
  c.base_lr = j.value("base_lr", c.base_lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.sgd_momentum = j.value("sgd_momentum", c.sgd_momentum);
  c.collapse_std = j.value("collapse_std", c.collapse_std);
  c.collapse_patience = j.value("collapse_patience", c.collapse_patience);
  c.probe_size = j.value("probe_size", c.probe_size);
}

namespace {

std::vector<int64_t> widths(int64_t in, const std::vector<int64_t>& rest) {
  std::vector<int64_t> w{in};
  w.insert(w.end(), rest.begin(), rest.end());
  return w;
}

void freeze(torch::nn::Module& m) {
  for (auto& p : m.parameters()) p.set_requires_grad(false);
}

}  // namespace

ContrastiveModelImpl::ContrastiveModelImpl(MethodSpec s, nn::ResNetConfig bc) : spec(std::move(s)) {
  validate(spec);
  const bool siam = spec.method == "simsiam" || spec.method == "fastsiam";
  backbone = register_module("backbone", nn::ResNet18(bc));
  projector = register_module("projector", nn::mlp(widths(backbone->out_dim(), spec.projection_head), siam));
  if (!spec.prediction_head.empty())
    predictor = register_module("predictor", nn::mlp(widths(spec.projection_head.back(), spec.prediction_head)));
  if (spec.method == "dino") {
    const auto k = static_cast<int64_t>(spec.param("prototypes"));
    prototypes = register_module(
        "prototypes", torch::nn::Linear(torch::nn::LinearOptions(spec.projection_head.back(), k).bias(false)));
    center = register_buffer("center", torch::zeros({1, k}));
  }
  if (spec.momentum) {
    target_backbone = register_module("target_backbone", nn::ResNet18(bc));
    target_projector = register_module("target_projector", nn::mlp(widths(backbone->out_dim(), spec.projection_head), siam));
    momentum_update(*backbone, *target_backbone, 0.0);
    momentum_update(*projector, *target_projector, 0.0);
    freeze(*target_backbone);
    freeze(*target_projector);
    if (prototypes) {
      target_prototypes = register_module(
          "target_prototypes",
          torch::nn::Linear(torch::nn::LinearOptions(spec.projection_head.back(), prototypes->options.out_features())
                                .bias(false)));
      momentum_update(*prototypes, *target_prototypes, 0.0);
      freeze(*target_prototypes);
    }
  }
  if (spec.method == "moco") {
    const auto q = static_cast<int64_t>(spec.param("queue_size"));
    if (q < 1) throw Error("moco: queue size must be positive");
    queue = register_buffer("queue", F::normalize(torch::randn({q, spec.projection_head.back()}),
                                                  F::NormalizeFuncOptions().dim(1)));
  }
}

std::vector<torch::Tensor> ContrastiveModelImpl::online_parameters() {
  auto ps = backbone->parameters();
  for (auto& p : projector->parameters()) ps.push_back(p);
  if (predictor)
    for (auto& p : predictor->parameters()) ps.push_back(p);
  if (prototypes)
    for (auto& p : prototypes->parameters()) ps.push_back(p);
  return ps;
}

torch::Tensor ContrastiveModelImpl::project(const torch::Tensor& x, bool target) {
  if (target) {
    torch::NoGradGuard no_grad;
    return target_projector->forward(target_backbone->forward(x));
  }
  return projector->forward(backbone->forward(x));
}

torch::Tensor ContrastiveModelImpl::dino_head(const torch::Tensor& x, bool target) {
  auto h = F::normalize(project(x, target), F::NormalizeFuncOptions().dim(1));
  if (target) {
    torch::NoGradGuard no_grad;
    return target_prototypes->forward(h);
  }
  return prototypes->forward(h);
}

std::map<std::string, torch::Tensor> ContrastiveModelImpl::loss(const std::vector<torch::Tensor>& views) {
  const auto& m = spec.method;
  const auto n = static_cast<std::size_t>(spec.n_views);
  if (views.size() < n) throw Error(m + ": expected at least " + std::to_string(n) + " views");
  torch::Tensor loss;
  std::map<std::string, torch::Tensor> out;
  if (m == "simclr") {
    auto z0 = project(views[0], false), z1 = project(views[1], false);
    const double t = spec.param("temperature");
    loss = 0.5 * (nce_loss(z0, z1, {}, t) + nce_loss(z1, z0, {}, t));
  } else if (m == "moco") {
    auto q0 = project(views[0], false), q1 = project(views[1], false);
    auto k0 = project(views[0], true), k1 = project(views[1], true);
    const double t = spec.param("temperature");
    auto negatives = queue.clone();
    loss = 0.5 * (nce_loss(q0, k1, negatives, t) + nce_loss(q1, k0, negatives, t));
    pending_keys_ = {k0, k1};
  } else if (m == "byol") {
    auto p0 = predictor->forward(project(views[0], false)), p1 = predictor->forward(project(views[1], false));
    auto z0 = project(views[0], true), z1 = project(views[1], true);
    loss = 0.5 * (negative_cosine_loss(p0, z1) + negative_cosine_loss(p1, z0));
  } else if (m == "simsiam" || m == "fastsiam") {
    std::vector<torch::Tensor> z, p;
    for (std::size_t i = 0; i < n; ++i) {
      z.push_back(project(views[i], false));
      p.push_back(predictor->forward(z.back()));
    }
    if (m == "simsiam") {
      loss = 0.5 * (negative_cosine_loss(p[0], z[1]) + negative_cosine_loss(p[1], z[0]));
    } else {
      auto sum = torch::stack(z).sum(0);
      for (std::size_t i = 0; i < n; ++i) {
        auto l = negative_cosine_loss(p[i], (sum - z[i]) / static_cast<double>(n - 1));
        loss = loss.defined() ? loss + l : l;
      }
      loss = loss / static_cast<double>(n);
    }
  } else if (m == "barlowtwins") {
    loss = barlow_twins_loss(project(views[0], false), project(views[1], false), spec.param("lambda"));
  } else if (m == "vicreg") {
    VicregParams vp{spec.param("lambda"), spec.param("mu"), spec.param("nu"), spec.param("gamma"), spec.param("eps")};
    auto t = vicreg_terms(project(views[0], false), project(views[1], false), vp);
    loss = t.total;
    out["invariance"] = t.invariance.detach();
    out["variance"] = t.variance.detach();
    out["covariance"] = t.covariance.detach();
  } else if (m == "dino") {
    std::vector<torch::Tensor> students, teachers;
    for (auto& v : views) students.push_back(dino_head(v, false));
    for (std::size_t i = 0; i < n; ++i) teachers.push_back(dino_head(views[i], true));
    loss = dino_loss(students, teachers, spec.param("teacher_temp"), spec.param("student_temp"), center);
    pending_teacher_ = teachers;
  }
  out["loss"] = loss;
  return out;
}

void ContrastiveModelImpl::after_step() {
  torch::NoGradGuard no_grad;
  if (spec.momentum) {
    momentum_update(*backbone, *target_backbone, *spec.momentum);
    momentum_update(*projector, *target_projector, *spec.momentum);
    if (prototypes) momentum_update(*prototypes, *target_prototypes, *spec.momentum);
  }
  if (queue.defined() && !pending_keys_.empty()) {
    auto keys = F::normalize(torch::cat(pending_keys_, 0), F::NormalizeFuncOptions().dim(1));
    const int64_t q = queue.size(0);
    queue.copy_(torch::cat({keys, queue}, 0).slice(0, 0, q));
    pending_keys_.clear();
  }
  if (center.defined() && !pending_teacher_.empty()) {
    center.copy_(update_center(center, pending_teacher_, spec.param("center_momentum")));
    pending_teacher_.clear();
  }
}

double mean_dimension_std(const torch::Tensor& embeddings) {
  TORCH_CHECK(embeddings.dim() == 2 && embeddings.size(0) >= 2, "need an N x D batch with N >= 2");
  return embeddings.to(torch::kDouble).std(0).mean().item<double>();
}

EncoderCheckpoint pretrain_contrastive(const Corpus& corpus, const MethodSpec& spec, const AugmentationPolicy& policy,
                                       const ContrastiveConfig& cfg, const PretrainOptions& opt) {
  validate(spec);
  validate(policy);
  seed_everything(opt.schedule.seed);
  const auto indices = resolve_indices(corpus, opt.indices);
  std::vector<ProcessedImage> images;
  images.reserve(indices.size());
  for (auto i : indices) images.push_back(canonical_image(corpus[i].image, 64));

  ContrastiveModel model(spec, cfg.backbone);
  model->train();
  const int64_t n = static_cast<int64_t>(images.size());
  const int64_t bs = std::min<int64_t>(opt.schedule.batch_size, n);
  const double lr0 = cfg.base_lr * static_cast<double>(bs) / 256.0;
  torch::optim::SGD sgd(model->online_parameters(),
                        torch::optim::SGDOptions(lr0).momentum(cfg.sgd_momentum).weight_decay(cfg.weight_decay));
  std::mt19937_64 view_rng(opt.schedule.seed * 0x9e3779b97f4a7c15ULL + policy.seed_stream);
  const int channels = cfg.backbone.in_channels;
  auto to_input = [channels](std::vector<torch::Tensor>& items) {
    auto t = torch::stack(items);
    return t.size(1) == channels ? t : t.expand({-1, channels, -1, -1}).contiguous();
  };

  auto step = [&](const std::vector<int64_t>& batch, const StepContext& ctx) -> std::map<std::string, torch::Tensor> {
    const double lr = lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * ctx.step / std::max<int64_t>(1, ctx.total_steps)));
    for (auto& g : sgd.param_groups()) static_cast<torch::optim::SGDOptions&>(g.options()).lr(lr);
    std::vector<std::vector<torch::Tensor>> per_view;
    for (auto b : batch) {
      auto views = make_views(images[b], policy, view_rng, spec.n_views);
      if (per_view.empty()) per_view.resize(views.size());
      for (std::size_t v = 0; v < views.size(); ++v) per_view[v].push_back(to_tensor(views[v]));
    }
    std::vector<torch::Tensor> inputs;
    for (auto& items : per_view) inputs.push_back(to_input(items));
    std::map<std::string, torch::Tensor> metrics;
    try {
      metrics = model->loss(inputs);
    } catch (const Error&) {  // non-finite or degenerate projections
      return {{"loss", torch::tensor(std::numeric_limits<double>::quiet_NaN())}};
    }
    sgd.zero_grad();
    metrics["loss"].backward();
    sgd.step();
    model->after_step();
    metrics["loss"] = metrics["loss"].detach();
    return metrics;
  };

  std::vector<std::size_t> probe_pos;
  const int64_t probe = std::min<int64_t>(cfg.probe_size, n);
  for (int64_t i = 0; i < probe; ++i) probe_pos.push_back(static_cast<std::size_t>(i * n / probe));
  int flat_epochs = 0;
  auto on_epoch_end = [&](int epoch) -> std::map<std::string, double> {
    std::vector<torch::Tensor> items;
    for (auto p : probe_pos) items.push_back(to_tensor(images[p]));
    double s;
    {
      torch::NoGradGuard no_grad;
      model->backbone->eval();
      s = mean_dimension_std(model->backbone->forward(conform(torch::stack(items), {policy.output_size, channels})));
      model->backbone->train();
    }
    flat_epochs = s < cfg.collapse_std ? flat_epochs + 1 : 0;
    if (flat_epochs >= cfg.collapse_patience)
      throw RepresentationCollapse(spec.method + ": embedding spread below " + std::to_string(cfg.collapse_std) +
                                   " for " + std::to_string(flat_epochs) + " epochs (epoch " +
                                   std::to_string(epoch) + ")");
    return {{"embedding_std", s}};
  };

  const nlohmann::json model_cfg = {{"backbone", cfg.backbone},
                                    {"input", InputSpec{policy.output_size, channels}},
                                    {"method", spec},
                                    {"contrastive", cfg},
                                    {"augment", policy}};
  auto snapshot = [&](int epoch, const std::vector<MetricPoint>& history) {
    EncoderCheckpoint c;
    c.method = spec.method;
    c.weights = serialize_module(*model->backbone);
    c.embed_dim = model->backbone->out_dim();
    c.train_config = {{"model", model_cfg}, {"schedule", opt.schedule}};
    c.epoch = epoch;
    c.metric_history = history;
    return c;
  };
  return run_epochs(n, opt.schedule, step, snapshot, opt.on_epoch, on_epoch_end);
}

}  // namespace hwssl::cssl
