#include "simrod/model.hpp"

#include "simrod/errors.hpp"
#include "simrod/random.hpp"

namespace simrod {

template <typename T>
void Model<T>::for_each_param(const std::function<void(const std::string&, BasicParam<T>&)>& fn) {
  fn("gge.alpha", gge.alpha);
  ggle.for_each_param(fn);
  head.for_each_param(fn);
}

template <typename T>
void Model<T>::for_each_buffer(const std::function<void(const std::string&, BasicTensor<T>&)>& fn) {
  ggle.for_each_buffer(fn);
}

template <typename T>
void Model<T>::zero_grad() {
  for_each_param([](const std::string&, BasicParam<T>& p) { p.zero_grad(); });
}

template <typename T>
Model<T> init_model(GuidanceMode mode, std::uint64_t seed, double gamma_min, double gamma_max) {
  return Model<T>{GammaParams<T>(gamma_min, gamma_max), init_ggle<T>(mode, derive_seed(seed, 100)),
                  init_head<T>(derive_seed(seed, 200))};
}

template <typename T>
ModelStep<T> model_forward(Model<T>& model, const BasicTensor<T>& x, const BatchTargets& targets,
                           double lambda, nn::NormMode mode, bool update_running) {
  require_4d(x, "model_forward");
  const std::size_t n_batch = x.dim(0);
  if (targets.labels.size() != n_batch || targets.reg.size() != n_batch) {
    throw ShapeError("model_forward: targets do not match the batch size");
  }
  auto gamma = gge_forward(x, model.gge);
  auto local = ggle_forward(gamma.output, model.ggle, mode, update_running);
  auto head = head_forward(local.output, model.head);

  ModelStep<T> step;
  step.cache.d_outputs = BasicTensor<T>({n_batch, kHeadOutputs});
  const double inv_n = 1.0 / static_cast<double>(n_batch);
  for (std::size_t n = 0; n < n_batch; ++n) {
    const T* out = &head.output[n * kHeadOutputs];
    const LossTerms terms = total_loss(out[0], {static_cast<double>(out[1]), static_cast<double>(out[2])},
                                       targets.labels[n], targets.reg[n], lambda);
    step.loss += terms.total * inv_n;
    step.cls += terms.cls * inv_n;
    step.reg += terms.reg * inv_n;
    T* d = &step.cache.d_outputs[n * kHeadOutputs];
    d[0] = static_cast<T>(terms.d_logit * inv_n);
    d[1] = static_cast<T>(terms.d_reg[0] * inv_n);
    d[2] = static_cast<T>(terms.d_reg[1] * inv_n);
  }
  step.cache.gge = std::move(gamma.cache);
  step.cache.ggle = std::move(local.cache);
  step.cache.head = std::move(head.cache);
  return step;
}

template <typename T>
void model_backward(Model<T>& model, const ModelCache<T>& cache) {
  auto g = head_backward(cache.head, cache.d_outputs, model.head);
  g = ggle_backward(cache.ggle, g, model.ggle);
  gge_backward(cache.gge, g, model.gge);
}

template <typename T>
void append_activation_signs(const ModelCache<T>& cache, std::vector<unsigned char>& out) {
  append_activation_signs(cache.ggle, out);
  for (T v : cache.head.act.input.data()) out.push_back(v >= 0);
}

Tensor enhance(const GammaParams<float>& gge, GgleWeights<float>& ggle, const PackedRaw& packed) {
  const Tensor batch = to_batch({&packed});
  auto gamma = gge_forward(batch, gge);
  auto out = ggle_forward(gamma.output, ggle, nn::NormMode::eval, false);
  return out.output.reshaped({kGgleOutputs, packed.height(), packed.width()});
}

#define SIMROD_INSTANTIATE_MODEL(T)                                                                  \
  template struct Model<T>;                                                                          \
  template Model<T> init_model<T>(GuidanceMode, std::uint64_t, double, double);                      \
  template ModelStep<T> model_forward(Model<T>&, const BasicTensor<T>&, const BatchTargets&, double, \
                                      nn::NormMode, bool);                                           \
  template void model_backward(Model<T>&, const ModelCache<T>&);                                     \
  template void append_activation_signs(const ModelCache<T>&, std::vector<unsigned char>&);

SIMROD_INSTANTIATE_MODEL(float)
SIMROD_INSTANTIATE_MODEL(double)

#undef SIMROD_INSTANTIATE_MODEL

}  // namespace simrod
