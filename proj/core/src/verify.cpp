#include "gsmt/verify.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "gsmt/dss.hpp"
#include "gsmt/error.hpp"
#include "gsmt/fft.hpp"
#include "gsmt/ops.hpp"
#include "gsmt/selection.hpp"

namespace gsmt {

namespace {

Tensor gaussian(Shape shape, std::mt19937_64& rng, double sigma = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> n(0.0, sigma);
  for (double& v : t.data()) v = n(rng);
  return t;
}

// Random orthogonal matrix by Gram-Schmidt on a Gaussian draw.
Tensor random_rotation(std::size_t n, std::mt19937_64& rng) {
  Tensor q = gaussian({n, n}, rng);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < i; ++p) {
      double dot = 0.0;
      for (std::size_t c = 0; c < n; ++c) dot += q(i, c) * q(p, c);
      for (std::size_t c = 0; c < n; ++c) q(i, c) -= dot * q(p, c);
    }
    double norm = 0.0;
    for (std::size_t c = 0; c < n; ++c) norm += q(i, c) * q(i, c);
    norm = std::sqrt(norm);
    for (std::size_t c = 0; c < n; ++c) q(i, c) /= norm;
  }
  return q;
}

double scalar_c3(const Tensor& j_v, const Tensor& j_w) {
  Tape tape(Tape::Mode::inference);
  C3Matrices g = c3_matrices(tape.constant(j_v), tape.constant(j_w));
  return c3_loss(g.vv, g.vw, g.ww).value()[0];
}

double scalar_mkl(const Tensor& p, const Tensor& q) {
  Tape tape(Tape::Mode::inference);
  return symmetric_kl_rows(tape.constant(p), tape.constant(q)).value()[0];
}

Tensor random_rows_softmax(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  return ops::softmax_rows(gaussian({rows, cols}, rng, 2.0));
}

SuiteResult kernel_suite(const VerifyOptions& options) {
  SuiteResult r{"kernel", 0.0, 1e-10, false, "closed form vs matrix powers vs recurrence impulse"};
  const double scale = options.perturb_kernel ? 1.0 + 1e-6 : 1.0;
  for (std::size_t ds : {1, 8, 64}) {
    for (std::size_t length : {4, 32, 256}) {
      for (std::size_t s = 0; s < options.seeds; ++s) {
        r.max_error = std::max(r.max_error, kernel_equivalence_error(ds, length, 1000 + s, scale));
      }
    }
  }
  r.passed = r.max_error <= r.tolerance;
  return r;
}

SuiteResult fft_suite(const VerifyOptions& options) {
  SuiteResult r{"fft-path", 0.0, 1e-8, false, "FFT convolution vs recurrence and direct sum"};
  for (std::size_t length : {16, 512, 4096}) {
    for (std::size_t s = 0; s < std::min<std::size_t>(options.seeds, 5); ++s) {
      r.max_error = std::max(r.max_error, ssm_path_error(4, 16, length, 2000 + s));
      std::mt19937_64 rng(3000 + s);
      Tensor x = gaussian({length}, rng), k = gaussian({length}, rng);
      Tensor fast = fft_convolve_causal(x, k);
      Tensor slow({length});
      direct_convolve_causal(x.data(), k.data(), slow.data());
      r.max_error = std::max(r.max_error, ops::max_rel_error(fast, slow));
    }
  }
  r.passed = r.max_error <= r.tolerance;
  return r;
}

SuiteResult gradient_suite(const VerifyOptions& options) {
  SuiteResult r{"gradients", 0.0, 1e-5, false, "end-to-end total loss vs central differences"};
  const GsmtConfig config = minimal_config();
  for (std::size_t s = 0; s < options.seeds; ++s) {
    const Sample sample = random_sample(config, 4, 4, 3, 3, 4000 + s);
    r.max_error = std::max(r.max_error, end_to_end_gradient_check(config, sample, 5000 + s, 6000 + s).max_rel_error);
  }
  // The kernel's analytic gradient on its own, w.r.t. every DSS field.
  for (std::size_t s = 0; s < options.seeds; ++s) {
    std::mt19937_64 rng(7000 + s);
    const DssParams p = make_dss_params(3, 5, rng);
    const Tensor w = gaussian({3, 12}, rng);
    auto build = [&](Tape& tape, const std::vector<Var>& leaves) {
      Var k = dss_kernel({leaves[0], leaves[1], leaves[2]}, 12);
      return sum(mul(k, tape.constant(w)));
    };
    r.max_error = std::max(r.max_error, tape_grad_check(build, {p.log_neg_lambda, p.c, p.log_delta}).max_rel_error);
  }
  r.passed = r.max_error <= r.tolerance;
  return r;
}

SuiteResult mkl_suite(const VerifyOptions& options) {
  SuiteResult r{"m-kl", 0.0, 1e-9, false, "non-negativity, zero at equality, symmetry, rotation invariance"};
  bool ok = true;
  for (std::size_t s = 0; s < 10 * options.seeds; ++s) {
    std::mt19937_64 rng(8000 + s);
    const Tensor p = random_rows_softmax(8, 8, rng), q = random_rows_softmax(8, 8, rng);
    const double pq = scalar_mkl(p, q), qp = scalar_mkl(q, p), pp = scalar_mkl(p, p);
    ok = ok && pq >= 0.0 && std::abs(pp) <= 1e-12 && std::abs(pq - qp) <= 1e-12;
    r.max_error = std::max({r.max_error, std::abs(pp), std::abs(pq - qp)});

    const Tensor j_v = gaussian({8, 8}, rng, 0.35), j_w = gaussian({8, 8}, rng, 0.35);
    const Tensor rot = random_rotation(8, rng);
    const double base = scalar_c3(j_v, j_w);
    const double rotated = scalar_c3(ops::matmul(j_v, rot), ops::matmul(j_w, rot));
    r.max_error = std::max(r.max_error, std::abs(base - rotated));
  }
  r.passed = ok && r.max_error <= r.tolerance;
  return r;
}

SuiteResult selector_suite(const VerifyOptions& options) {
  SuiteResult r{"selector", 0.0, 0.0, false, "exact counts, noise-free determinism, straight-through gradient"};
  std::size_t failures = 0;
  const std::size_t instances = std::max<std::size_t>(20, options.seeds);
  for (std::size_t s = 0; s < instances; ++s) {
    std::mt19937_64 rng(9000 + s);
    const std::size_t d = 6, d_h = 5, d_k = 4, frames = 8, patches = 6;
    const SegmentLayout layout = SegmentLayout::make(frames, patches, 4);
    const SelectorParams w = make_selector_params(d, d_h, d_k, rng);
    const Tensor h = gaussian({layout.length(), d_h}, rng);
    const Tensor q = gaussian({1, d}, rng);

    auto run = [&](bool noise, std::uint64_t seed, Tape& tape, SelectorWeights<Var>& sw) {
      sw = w.map<Var>("", as_parameters(tape));
      Var hv = tape.constant(h);
      Var qv = tape.constant(q);
      Var segments = pool_segments(pool_frames(hv, layout), layout);
      std::mt19937_64 noise_rng(seed);
      SelectorOptions o{1.0, noise};
      SegmentSelection seg = select_segments(qv, segments, sw.segment_query, sw.segment_key, 2, o, noise_rng);
      std::vector<std::size_t> f;
      for (std::size_t b : seg.pick.indices) {
        for (std::size_t t : layout.frames_of_segment(b)) f.push_back(t);
      }
      PatchSelection pat = select_patches(qv, hv, layout, f, sw.patch_query, sw.patch_key, 3, o, noise_rng);
      return std::make_pair(seg, pat);
    };

    Tape t1, t2, t3;
    SelectorWeights<Var> w1, w2, w3;
    auto [seg1, pat1] = run(false, 1, t1, w1);
    auto [seg2, pat2] = run(false, 2, t2, w2);
    auto [seg3, pat3] = run(true, s, t3, w3);

    bool counts = seg3.pick.indices.size() == 2 && pat3.picks.size() == 4;
    for (const auto& p : pat3.picks) {
      std::vector<std::size_t> idx = p.indices;
      std::sort(idx.begin(), idx.end());
      counts = counts && idx.size() == 3 && std::adjacent_find(idx.begin(), idx.end()) == idx.end();
    }
    bool same = seg1.pick.indices == seg2.pick.indices;
    for (std::size_t f = 0; f < pat1.picks.size() && same; ++f) same = pat1.picks[f].indices == pat2.picks[f].indices;

    // A loss that sees only the selected rows.
    Var loss = add(sum(mul(seg3.selected, t3.constant(gaussian({2, d_h}, rng)))),
                   sum(mul(pat3.selected, t3.constant(gaussian({pat3.selected.value().rows(), d_h}, rng)))));
    t3.backward(loss);
    double flow = 0.0;
    for (const Var* v : {&w3.segment_query, &w3.segment_key, &w3.patch_query, &w3.patch_key}) {
      for (double g : v->grad().data()) flow = std::max(flow, std::abs(g));
    }
    if (!counts || !same || !(flow > 0.0)) ++failures;
  }
  r.max_error = static_cast<double>(failures);
  r.passed = failures == 0;
  r.note += " (" + std::to_string(instances - failures) + "/" + std::to_string(instances) + " instances)";
  return r;
}

}  // namespace

double kernel_equivalence_error(std::size_t d_state, std::size_t length, std::uint64_t seed, double delta_scale) {
  std::mt19937_64 rng(seed);
  DssParams p = make_dss_params(2, d_state, rng);
  const DssKernel oracle = kernel_oracle_powers(p, length);

  // Impulse response of the recurrence, channel by channel.
  Tensor impulse({length, 2});
  impulse(0, 0) = impulse(0, 1) = 1.0;
  const Tensor response = ops::transpose(ssm_recurrence(p, impulse));

  DssParams fast = p;
  fast.log_delta[0] += std::log(delta_scale);
  const DssKernel closed = compute_kernel(fast, length);
  return std::max(ops::max_rel_error(closed.values, oracle.values), ops::max_rel_error(response, oracle.values));
}

double ssm_path_error(std::size_t channels, std::size_t d_state, std::size_t length, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const DssParams p = make_dss_params(channels, d_state, rng);
  const Tensor x = gaussian({length, channels}, rng);
  return ops::max_rel_error(ssm_forward_fft(p, x), ssm_recurrence(p, x));
}

GsmtConfig minimal_config() {
  GsmtConfig c;
  c.d = 8;
  c.d_h = 8;
  c.d_state = 8;
  c.d_gating = 4;
  c.d_k = 8;
  c.k = 1;
  c.j = 2;
  c.segments = 2;
  c.layers = 2;
  return c;
}

Sample random_sample(const GsmtConfig& config, std::size_t frames, std::size_t patches, std::size_t words,
                     std::size_t answers, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Sample s;
  s.frames = frames;
  s.patches = patches;
  s.features = gaussian({frames * patches, config.d}, rng);
  s.question = gaussian({words, config.d}, rng);
  s.answers.candidates = gaussian({answers, config.effective_answer_dim()}, rng);
  s.answers.groundtruth = static_cast<std::size_t>(rng() % answers);
  return s;
}

ModelWeights<Var> bind_weights(const ModelParams& layout, const std::vector<Var>& leaves) {
  std::size_t next = 0;
  auto out = layout.map<Var>("", [&](const std::string&, const Tensor&) {
    if (next >= leaves.size()) throw ContractError("bind_weights: too few leaves");
    return leaves[next++];
  });
  if (next != leaves.size()) throw ContractError("bind_weights: too many leaves");
  return out;
}

GradCheckResult end_to_end_gradient_check(const GsmtConfig& config, const Sample& sample, std::uint64_t model_seed,
                                          std::uint64_t noise_seed, double h) {
  const GsmtModel model(config, model_seed);
  ForwardOptions options;
  options.training = true;
  options.noise_seed = noise_seed;
  SelectionTrace trace;
  {
    Tape tape(Tape::Mode::inference);
    auto w = model.params().map<Var>("", as_constants(tape));
    trace = forward(model, w, sample, options).trace;
  }
  options.replay = &trace;
  std::vector<Tensor> params;
  for (const auto& [name, t] : named_tensors(const_cast<ModelParams&>(model.params()))) params.push_back(*t);
  auto build = [&](Tape&, const std::vector<Var>& leaves) {
    return forward(model, bind_weights(model.params(), leaves), sample, options).loss;
  };
  return tape_grad_check(build, params, h);
}

std::vector<SuiteResult> run_verify(const VerifyOptions& options) {
  return {kernel_suite(options), fft_suite(options), gradient_suite(options), mkl_suite(options),
          selector_suite(options)};
}

}  // namespace gsmt
