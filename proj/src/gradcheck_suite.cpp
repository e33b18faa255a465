#include "mamaf/gradcheck_suite.hpp"

#include <random>

#include "mamaf/autodiff.hpp"
#include "mamaf/model.hpp"

namespace mamaf {

namespace {

// Analytic gradients come from the 32-bit tape; the numeric side evaluates the
// same float-representable point in 64-bit.
Tensorf uniform(const Shape& shape, std::mt19937_64& rng, float lo = -1, float hi = 1) {
  std::uniform_real_distribution<float> u(lo, hi);
  Tensorf t(shape);
  for (Index i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

Tensord wide(const Tensorf& t) { return t.cast<double>(); }

// Zero-initialized biases put whole layers exactly on ReLU kinks whenever the
// upstream activations vanish; checks run at a generic point instead.
template <typename Params>
void jitter_biases(Params& params, std::mt19937_64& rng) {
  for (auto& [name, p] : collect_params(params)) {
    if (name.ends_with("bias")) *p = uniform(p->shape(), rng, -0.1f, 0.1f);
  }
}

GradcheckOptions options(const SuiteOptions& s, double tolerance, int samples) {
  GradcheckOptions o;
  o.epsilon = s.epsilon;
  o.tolerance = tolerance;
  o.samples = std::max(s.samples, samples);
  o.seed = s.seed + 1;
  return o;
}

void maybe_flip(const SuiteOptions& s, const std::vector<NamedTensor<double>>& params, std::vector<Tensorf>& grads) {
  if (!s.flip_sign_of) return;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name == *s.flip_sign_of) {
      grads[i] = scale(grads[i], -1.0f);
      return;
    }
  }
  throw ConfigError("gradcheck: no parameter named '" + *s.flip_sign_of + "'");
}

}  // namespace

GradcheckReport check_attention(const SuiteOptions& s) {
  std::mt19937_64 rng(s.seed);
  const Tensorf x = uniform(Shape{4, 3}, rng);
  const Tensorf r = uniform(Shape{4, 3}, rng);

  Tape<float> tape;
  const Var<float> xv = tape.parameter(x, "x");
  tape.backward(sum(mul(attention(xv), tape.constant(r))));
  std::vector<NamedTensor<double>> params{{"x", wide(x)}};
  std::vector<Tensorf> grads{tape.grad_or_zero(xv)};
  maybe_flip(s, params, grads);

  const Tensord rd = wide(r);
  auto loss = [&](const std::vector<Tensord>& p) { return sum(mul(attention(p[0]), rd))[0]; };
  return gradcheck<float>(loss, params, grads, options(s, kAttentionTolerance, 10));
}

GradcheckReport check_motion_aware(const SuiteOptions& s) {
  std::mt19937_64 rng(s.seed);
  MotionAwareParams<Tensorf> m = init_motion_aware<float>(2, rng);
  m.embed.bias = uniform(m.embed.bias.shape(), rng, -0.1f, 0.1f);
  m.gate.bias = uniform(m.gate.bias.shape(), rng, -0.1f, 0.1f);
  const Tensorf x = uniform(Shape{5, 6, 6, 2}, rng, 0, 1);
  const Tensorf r = uniform(x.shape(), rng);

  const std::vector<std::pair<std::string, Tensorf>> values{
      {"embed.kernel", m.embed.kernel}, {"embed.bias", m.embed.bias}, {"gate.kernel", m.gate.kernel},
      {"gate.bias", m.gate.bias},       {"x", x}};
  std::vector<NamedTensor<double>> params;
  Tape<float> tape;
  std::vector<Var<float>> vars;
  for (const auto& [name, v] : values) {
    params.push_back({name, wide(v)});
    vars.push_back(tape.parameter(v, name));
  }
  const MotionAwareParams<Var<float>> mv{{vars[0], vars[1]}, {vars[2], vars[3]}};
  tape.backward(sum(mul(motion_aware(vars[4], mv), tape.constant(r))));
  std::vector<Tensorf> grads;
  for (const auto& v : vars) grads.push_back(tape.grad_or_zero(v));
  maybe_flip(s, params, grads);

  const Tensord rd = wide(r);
  auto loss = [&](const std::vector<Tensord>& p) {
    const MotionAwareParams<Tensord> mp{{p[0], p[1]}, {p[2], p[3]}};
    return sum(mul(motion_aware(p[4], mp), rd))[0];
  };
  return gradcheck<float>(loss, params, grads, options(s, kModuleTolerance, 10));
}

GradcheckReport check_model(const SuiteOptions& s) {
  ModelConfig config;
  config.seq_len = 25;
  config.input_hw = 32;
  config.init_seed = s.seed;
  NetParams<Tensorf> net = init_params<float>(config);

  std::mt19937_64 rng(s.seed + 100);
  jitter_biases(net, rng);
  std::vector<std::array<Tensorf, kNumViews>> batch(2);
  for (auto& views : batch) {
    for (auto& v : views) v = uniform(config.view_shape(), rng, 0, 1);
  }
  const std::vector<int> labels{1, 0};

  std::vector<NamedTensor<double>> params;
  for (const auto& [name, p] : collect_params(net)) params.push_back({name, wide(*p)});

  Tape<float> tape;
  const NetParams<Var<float>> vars = record_params(tape, net);
  std::vector<Var<float>> outputs;
  for (const auto& views : batch) {
    std::array<Var<float>, kNumViews> vv;
    for (std::size_t i = 0; i < kNumViews; ++i) vv[i] = tape.constant(views[i]);
    outputs.push_back(forward(config, vars, vv));
  }
  tape.backward(cross_entropy(stack(outputs), one_hot<float>(labels)));
  std::vector<Tensorf> grads = gradients(tape, vars);
  maybe_flip(s, params, grads);

  const NetParams<Tensord> net64 = cast_params<double>(net);
  std::vector<std::array<Tensord, kNumViews>> batch64(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    for (std::size_t i = 0; i < kNumViews; ++i) batch64[b][i] = wide(batch[b][i]);
  }
  const Tensord target = one_hot<double>(labels);
  auto loss = [&](const std::vector<Tensord>& p) {
    NetParams<Tensord> probe = net64;
    auto slots = collect_params(probe);
    for (std::size_t i = 0; i < slots.size(); ++i) *slots[i].second = p[i];
    std::vector<Tensord> out;
    for (const auto& views : batch64) out.push_back(forward(config, probe, views));
    return cross_entropy(stack(out), target)[0];
  };
  return gradcheck<float>(loss, params, grads, options(s, kModelTolerance, static_cast<int>(params.size())));
}

}  // namespace mamaf
