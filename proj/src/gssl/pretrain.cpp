#include "hwssl/gssl/pretrain.hpp"

#include <limits>

#include "hwssl/tensor.hpp"

namespace hwssl::gssl {

namespace {

struct Data {
  torch::Tensor canonical;  // N x 1 x 64 x 64

  torch::Tensor batch(const std::vector<int64_t>& pos, const InputSpec& spec) const {
    return conform(canonical.index_select(0, torch::tensor(pos, torch::kLong)), spec);
  }
};

Data load_data(const Corpus& corpus, const PretrainOptions& opt) {
  return {canonical_batch(corpus, resolve_indices(corpus, opt.indices))};
}

template <class Model, class Config>
SnapshotFn snapshot_of(const std::string& method, Model& model, const Config& cfg, const TrainSchedule& schedule,
                       int64_t embed_dim) {
  return [&model, method, cfg, schedule, embed_dim](int epoch, const std::vector<MetricPoint>& history) {
    EncoderCheckpoint c;
    c.method = method;
    c.weights = serialize_module(*model);
    c.embed_dim = embed_dim;
    c.train_config = {{"model", cfg}, {"schedule", schedule}};
    c.epoch = epoch;
    c.metric_history = history;
    return c;
  };
}

torch::Tensor nan_tensor() { return torch::tensor(std::numeric_limits<double>::quiet_NaN()); }

}  // namespace

EncoderCheckpoint pretrain_vae(const Corpus& corpus, const VaeConfig& cfg, const PretrainOptions& opt) {
  seed_everything(opt.schedule.seed);
  auto data = load_data(corpus, opt);
  Vae model(cfg);
  model->train();
  torch::optim::Adam adam(model->parameters(), torch::optim::AdamOptions(opt.schedule.lr));
  auto step = [&](const std::vector<int64_t>& pos, const StepContext&) -> std::map<std::string, torch::Tensor> {
    auto x = data.batch(pos, cfg.input);
    auto out = model(x);
    if (!torch::isfinite(out.mu).all().item<bool>() || !torch::isfinite(out.log_var).all().item<bool>())
      return {{"loss", nan_tensor()}};
    auto l = vae_loss(x, out, cfg.beta);
    adam.zero_grad();
    l.total.backward();
    adam.step();
    return {{"loss", l.total.detach()}, {"recon", l.recon.detach()}, {"kl", l.kl.detach()}};
  };
  return run_epochs(data.canonical.size(0), opt.schedule, step,
                    snapshot_of("vae", model, cfg, opt.schedule, cfg.latent), opt.on_epoch);
}

EncoderCheckpoint pretrain_aim(const Corpus& corpus, const AimConfig& cfg, const PretrainOptions& opt) {
  seed_everything(opt.schedule.seed);
  auto data = load_data(corpus, opt);
  Aim model(cfg);
  model->train();
  const InputSpec spec{cfg.vit.image_size, cfg.vit.in_channels};
  const int64_t l = cfg.vit.num_patches();
  torch::optim::Adam adam(model->parameters(), torch::optim::AdamOptions(opt.schedule.lr));
  auto step = [&](const std::vector<int64_t>& pos, const StepContext&) -> std::map<std::string, torch::Tensor> {
    auto x = data.batch(pos, spec);
    auto loss = aim_loss(nn::patchify(x, cfg.vit.patch_size), model(x, torch::randperm(l, torch::kLong)), l);
    adam.zero_grad();
    loss.backward();
    adam.step();
    return {{"loss", loss.detach()}};
  };
  return run_epochs(data.canonical.size(0), opt.schedule, step,
                    snapshot_of("aim", model, cfg, opt.schedule, cfg.vit.dim), opt.on_epoch);
}

EncoderCheckpoint pretrain_mae(const Corpus& corpus, const MaeConfig& cfg, const PretrainOptions& opt) {
  seed_everything(opt.schedule.seed);
  auto data = load_data(corpus, opt);
  Mae model(cfg);
  model->train();
  const InputSpec spec{cfg.vit.image_size, cfg.vit.in_channels};
  torch::optim::Adam adam(model->parameters(), torch::optim::AdamOptions(opt.schedule.lr));
  auto step = [&](const std::vector<int64_t>& pos, const StepContext&) -> std::map<std::string, torch::Tensor> {
    auto x = data.batch(pos, spec);
    auto out = model->forward(x);
    auto loss = mae_loss(nn::patchify(x, cfg.vit.patch_size), out.mask, out.reconstruction);
    adam.zero_grad();
    loss.backward();
    adam.step();
    return {{"loss", loss.detach()}};
  };
  return run_epochs(data.canonical.size(0), opt.schedule, step,
                    snapshot_of("mae", model, cfg, opt.schedule, cfg.vit.dim), opt.on_epoch);
}

EncoderCheckpoint pretrain_flow(const Corpus& corpus, const FlowConfig& cfg, const PretrainOptions& opt) {
  seed_everything(opt.schedule.seed);
  auto data = load_data(corpus, opt);
  FlowModel model(cfg);
  model->train();
  const InputSpec spec{cfg.image_size, 1};
  auto params = model->parameters();
  std::optional<torch::optim::Adam> adam;
  if (!params.empty()) adam.emplace(params, torch::optim::AdamOptions(opt.schedule.lr));
  auto step = [&](const std::vector<int64_t>& pos, const StepContext&) -> std::map<std::string, torch::Tensor> {
    auto x = to_levels(data.batch(pos, spec));
    auto bpd = model->nll(x).bpd.mean();
    if (adam) {
      adam->zero_grad();
      bpd.backward();
      adam->step();
    }
    return {{"loss", bpd.detach()}, {"bpd", bpd.detach()}};
  };
  const int64_t dim = static_cast<int64_t>(cfg.image_size) * cfg.image_size;
  return run_epochs(data.canonical.size(0), opt.schedule, step, snapshot_of("flow", model, cfg, opt.schedule, dim),
                    opt.on_epoch);
}

EncoderCheckpoint pretrain_bigan(const Corpus& corpus, const BiganConfig& cfg, const PretrainOptions& opt) {
  seed_everything(opt.schedule.seed);
  auto data = load_data(corpus, opt);
  Bigan model(cfg);
  model->train();
  auto ge_params = model->encoder->parameters();
  for (auto& p : model->generator->parameters()) ge_params.push_back(p);
  torch::optim::Adam opt_d(model->discriminator->parameters(), torch::optim::AdamOptions(opt.schedule.lr));
  torch::optim::Adam opt_ge(ge_params, torch::optim::AdamOptions(opt.schedule.lr));
  auto step = [&](const std::vector<int64_t>& pos, const StepContext&) -> std::map<std::string, torch::Tensor> {
    try {
      auto l = bigan_step(data.batch(pos, cfg.input), model, opt_d, opt_ge);
      return {{"loss_d", l.loss_d}, {"loss_ge", l.loss_ge}};
    } catch (const Error&) {  // discriminator output went non-finite
      return {{"loss_d", nan_tensor()}};
    }
  };
  return run_epochs(data.canonical.size(0), opt.schedule, step,
                    snapshot_of("bigan", model, cfg, opt.schedule, cfg.latent), opt.on_epoch);
}

EncoderCheckpoint pretrain_generative(const Corpus& corpus, const std::string& method, const nlohmann::json& model,
                                      const PretrainOptions& opt) {
  if (method == "vae") return pretrain_vae(corpus, model.get<VaeConfig>(), opt);
  if (method == "aim") return pretrain_aim(corpus, model.get<AimConfig>(), opt);
  if (method == "mae") return pretrain_mae(corpus, model.get<MaeConfig>(), opt);
  if (method == "flow") return pretrain_flow(corpus, model.get<FlowConfig>(), opt);
  if (method == "bigan") return pretrain_bigan(corpus, model.get<BiganConfig>(), opt);
  throw Error("unknown generative method: " + method);
}

}  // namespace hwssl::gssl
