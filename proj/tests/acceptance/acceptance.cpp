// One PASS/FAIL line per acceptance criterion. Criteria can be picked by
// number on the command line ("acceptance 1 4 8"); the default runs all.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gsmt/bench.hpp"
#include "gsmt/commands.hpp"
#include "gsmt/config.hpp"
#include "gsmt/dss.hpp"
#include "gsmt/ops.hpp"
#include "gsmt/selection.hpp"
#include "gsmt/training.hpp"
#include "gsmt/verify.hpp"

using namespace gsmt;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Tensor gaussian(Shape shape, std::mt19937_64& rng, double sigma = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> n(0.0, sigma);
  for (double& v : t.data()) v = n(rng);
  return t;
}

// Scalar recurrence impulse response per channel: g <- a g + E x, y = c.g
Tensor impulse_loops(const DssParams& p, std::size_t length) {
  const std::size_t ch = p.c.rows(), ds = p.c.cols();
  const double delta = std::exp(p.log_delta[0]);
  Tensor out({ch, length});
  for (std::size_t c = 0; c < ch; ++c) {
    std::vector<double> g(ds, 0.0);
    for (std::size_t t = 0; t < length; ++t) {
      double y = 0;
      for (std::size_t i = 0; i < ds; ++i) {
        const double lam = -std::exp(p.log_neg_lambda[i]);
        g[i] = std::exp(lam * delta) * g[i] + (t == 0 ? std::expm1(lam * delta) / lam : 0.0);
        y += p.c(c, i) * g[i];
      }
      out(c, t) = y;
    }
  }
  return out;
}

Outcome kernel_correctness() {
  const auto t0 = Clock::now();
  double worst = 0, worst_loop = 0;
  for (std::size_t ds : {1, 8, 64})
    for (std::size_t len : {4, 32, 256})
      for (std::uint64_t seed = 0; seed < 100; ++seed) {
        std::mt19937_64 rng(seed * 7919 + ds * 31 + len);
        const DssParams p = make_dss_params(3, ds, rng);
        const Tensor closed = compute_kernel(p, len).values;
        worst = std::max(worst, ops::max_rel_error(closed, kernel_oracle_powers(p, len).values));
        worst_loop = std::max(worst_loop, ops::max_rel_error(closed, impulse_loops(p, len)));
      }
  const double secs = seconds_since(t0);
  return {worst <= 1e-10 && worst_loop <= 1e-10 && secs < 10.0,
          fmt("max rel err vs powers %.2e, vs scalar impulse %.2e (tol 1e-10), %.1fs (limit 10s)", worst, worst_loop,
              secs)};
}

Outcome path_equivalence() {
  const auto t0 = Clock::now();
  double worst = 0;
  for (std::size_t len : {16, 256, 1024, 4096})
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::mt19937_64 rng(seed + 100 * len);
      const DssParams p = make_dss_params(4, 16, rng);
      const Tensor x = gaussian({len, 4}, rng);
      worst = std::max(worst, ops::max_rel_error(ssm_forward_fft(p, x), ssm_recurrence(p, x)));
    }
  const double secs = seconds_since(t0);
  return {worst <= 1e-8 && secs < 30.0,
          fmt("max rel err %.2e (tol 1e-8) over L in {16,256,1024,4096} x 20 seeds, %.1fs (limit 30s)", worst, secs)};
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const GsmtConfig cfg = minimal_config();  // T=4 N=4 I=2 k=1 j=2 d=8 N_L=2
  double worst = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Sample sample = random_sample(cfg, 4, 4, 3, 3, 100 + s);
    worst = std::max(worst, end_to_end_gradient_check(cfg, sample, 200 + s, 300 + s).max_rel_error);
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-5 && secs < 120.0,
          fmt("max rel err %.2e (tol 1e-5) over 10 seeds, %.1fs (limit 120s)", worst, secs)};
}

// Entry-wise symmetric KL between row-stochastic matrices.
double mkl_loops(const Tensor& p, const Tensor& q) {
  double total = 0;
  for (std::size_t i = 0; i < p.rows(); ++i)
    for (std::size_t j = 0; j < p.cols(); ++j) total += (p(i, j) - q(i, j)) * std::log(p(i, j) / q(i, j));
  return total / double(p.rows());
}

Tensor orthogonal(std::size_t n, std::mt19937_64& rng) {
  Tensor q = gaussian({n, n}, rng);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < i; ++p) {
      double dot = 0;
      for (std::size_t c = 0; c < n; ++c) dot += q(i, c) * q(p, c);
      for (std::size_t c = 0; c < n; ++c) q(i, c) -= dot * q(p, c);
    }
    double norm = 0;
    for (std::size_t c = 0; c < n; ++c) norm += q(i, c) * q(i, c);
    for (std::size_t c = 0; c < n; ++c) q(i, c) /= std::sqrt(norm);
  }
  return q;
}

Outcome c3_properties() {
  const auto t0 = Clock::now();
  double zero = 0, asym = 0, rot = 0, vs_loops = 0, min_val = 1e300;
  for (std::uint64_t s = 0; s < 100; ++s) {
    std::mt19937_64 rng(5000 + s);
    const Tensor p = ops::softmax_rows(gaussian({8, 8}, rng, 2.0));
    const Tensor q = ops::softmax_rows(gaussian({8, 8}, rng, 2.0));
    Tape t(Tape::Mode::inference);
    Var pv = t.constant(p), qv = t.constant(q);
    const double pq = symmetric_kl_rows(pv, qv).value()[0];
    const double qp = symmetric_kl_rows(qv, pv).value()[0];
    min_val = std::min(min_val, pq);
    zero = std::max(zero, std::abs(symmetric_kl_rows(pv, pv).value()[0]));
    asym = std::max(asym, std::abs(pq - qp));
    vs_loops = std::max(vs_loops, std::abs(pq - mkl_loops(p, q)));

    // C3 depends on the token spans only through their Gram matrices.
    const Tensor jv = gaussian({8, 8}, rng, 0.35), jw = gaussian({8, 8}, rng, 0.35), r = orthogonal(8, rng);
    auto c3 = [&](const Tensor& a, const Tensor& b) {
      Tape tt(Tape::Mode::inference);
      C3Matrices g = c3_matrices(tt.constant(a), tt.constant(b));
      return c3_loss(g.vv, g.vw, g.ww).value()[0];
    };
    rot = std::max(rot, std::abs(c3(jv, jw) - c3(ops::matmul(jv, r), ops::matmul(jw, r))));
  }
  const double secs = seconds_since(t0);
  const bool ok = min_val >= 0 && zero <= 1e-12 && asym <= 1e-12 && rot <= 1e-9 && vs_loops <= 1e-12 && secs < 5.0;
  return {ok, fmt("min m-KL %.3g, |m-KL(P,P)| %.1e, asymmetry %.1e, rotation %.1e, vs loops %.1e, %.2fs", min_val, zero,
                  asym, rot, vs_loops, secs)};
}

Outcome selector_contracts() {
  const auto t0 = Clock::now();
  std::size_t good = 0;
  const std::size_t instances = 20, k = 3, j = 4;
  for (std::uint64_t s = 0; s < instances; ++s) {
    std::mt19937_64 rng(700 + s);
    const SegmentLayout layout = SegmentLayout::make(12, 8, 6);
    const std::size_t d = 6, d_h = 5, d_k = 4;
    const SelectorParams w = make_selector_params(d, d_h, d_k, rng);
    const Tensor h = gaussian({layout.length(), d_h}, rng), q = gaussian({1, d}, rng);
    const Tensor probe_s = gaussian({k, d_h}, rng), probe_p = gaussian({k * 2 * j, d_h}, rng);

    struct Result {
      std::vector<std::size_t> segments;
      std::vector<std::vector<std::size_t>> patches;
      double seg_flow = 0, patch_flow = 0;
      std::size_t rows = 0;
    };
    auto run = [&](bool noise, std::uint64_t seed) {
      Tape t;
      auto sw = w.map<Var>("", as_parameters(t));
      Var hv = t.constant(h), qv = t.constant(q);
      std::mt19937_64 nr(seed);
      SelectorOptions o{1.0, noise};
      SegmentSelection seg = select_segments(qv, pool_segments(pool_frames(hv, layout), layout), sw.segment_query,
                                             sw.segment_key, k, o, nr);
      std::vector<std::size_t> frames;
      for (std::size_t b : seg.pick.indices)
        for (std::size_t f : layout.frames_of_segment(b)) frames.push_back(f);
      PatchSelection pat = select_patches(qv, hv, layout, frames, sw.patch_query, sw.patch_key, j, o, nr);
      t.backward(add(sum(mul(seg.selected, t.constant(probe_s))), sum(mul(pat.selected, t.constant(probe_p)))));
      Result r;
      r.segments = seg.pick.indices;
      for (const auto& p : pat.picks) r.patches.push_back(p.indices);
      for (double g : sw.segment_query.grad().data()) r.seg_flow = std::max(r.seg_flow, std::abs(g));
      for (double g : sw.patch_query.grad().data()) r.patch_flow = std::max(r.patch_flow, std::abs(g));
      r.rows = pat.selected.value().rows();
      return r;
    };
    const Result a = run(false, 1), b = run(false, 99), noisy = run(true, s);
    bool ok = a.segments == b.segments && a.patches == b.patches;
    ok = ok && std::set<std::size_t>(noisy.segments.begin(), noisy.segments.end()).size() == k;
    ok = ok && noisy.patches.size() == k * layout.frames_per_segment() && noisy.rows == k * 2 * j;
    for (const auto& p : noisy.patches) ok = ok && std::set<std::size_t>(p.begin(), p.end()).size() == j;
    ok = ok && noisy.seg_flow > 0 && noisy.patch_flow > 0;
    good += ok;
  }
  const double secs = seconds_since(t0);
  return {good == instances && secs < 30.0, fmt("%zu/%zu instances pass counts, determinism and ST flow, %.2fs", good,
                                                instances, secs)};
}

RunConfig toy() { return load_run_config(GSMT_TOY_CONFIG); }

struct ArmResult {
  double eval_acc = 0, train_acc = 0, seconds = 0;
};

ArmResult train_arm(const RunConfig& c, const Splits& splits, const std::string& label) {
  const auto t0 = Clock::now();
  TrainOutcome t = train_model(c, splits.train, [&](const TrainMetrics& m) {
    if (m.step % 500 == 0) std::fprintf(stderr, "  [%s] %s\n", label.c_str(), to_json_line(m).c_str());
  });
  ArmResult r;
  r.eval_acc = evaluate_accuracy(t.model, splits.eval).accuracy;
  r.train_acc = t.log.back().train_acc;
  r.seconds = seconds_since(t0);
  std::fprintf(stderr, "  [%s] eval %.4f (%.0fs)\n", label.c_str(), r.eval_acc, r.seconds);
  return r;
}

Outcome global_context() {
  const auto t0 = Clock::now();
  RunConfig base = toy();
  const Splits splits = load_splits(base);
  RunConfig gated = base;
  gated.model.mechanism = MechanismKind::gated_ssl;
  RunConfig none = base;
  none.model.mechanism = MechanismKind::none;
  const ArmResult g = train_arm(gated, splits, "gated-ssl");
  const ArmResult n = train_arm(none, splits, "none");
  const double secs = seconds_since(t0);
  return {g.eval_acc >= 0.85 && n.eval_acc <= 0.55 && secs < 900.0,
          fmt("gated-ssl eval %.3f (need >= 0.85), none eval %.3f (need <= 0.55), %zu steps, %.0fs (limit 900s)",
              g.eval_acc, n.eval_acc, base.steps, secs)};
}

Outcome gating_ablation() {
  RunConfig base = toy();
  const Splits splits = load_splits(base);
  double gated = 0, ungated = 0;
  std::string per_seed;
  for (std::uint64_t seed : {7, 8, 9}) {
    RunConfig a = base, b = base;
    a.seed = b.seed = seed;
    a.model.gating = true;
    b.model.gating = false;
    const double ga = train_arm(a, splits, "gating seed " + std::to_string(seed)).eval_acc;
    const double ub = train_arm(b, splits, "no-gating seed " + std::to_string(seed)).eval_acc;
    gated += ga / 3;
    ungated += ub / 3;
    per_seed += fmt(" s%llu:%.3f/%.3f", static_cast<unsigned long long>(seed), ga, ub);
  }
  return {ungated <= gated - 0.02, fmt("mean eval gating(d_gating=%zu) %.4f, no-gating %.4f (need <= %.4f);%s",
                                       base.model.d_gating, gated, ungated, gated - 0.02, per_seed.c_str())};
}

Outcome memory_scaling() {
  const auto t0 = Clock::now();
  BenchOptions o;  // L = 256 .. 4096
  const auto rows = run_bench(o);
  auto peaks = [&](MechanismKind k) {
    std::vector<double> v;
    for (const auto& r : rows)
      if (r.mechanism == k) v.push_back(double(r.peak_elements));
    return v;
  };
  const auto att = peaks(MechanismKind::self_attention), ssl = peaks(MechanismKind::gated_ssl);
  double att_lo = 1e300, att_hi = 0, ssl_hi = 0;
  for (std::size_t i = 1; i < att.size(); ++i) {
    att_lo = std::min(att_lo, att[i] / att[i - 1]);
    att_hi = std::max(att_hi, att[i] / att[i - 1]);
    ssl_hi = std::max(ssl_hi, ssl[i] / ssl[i - 1]);
  }
  const double secs = seconds_since(t0);
  return {att_lo >= 3.6 && att_hi <= 4.4 && ssl_hi <= 2.3 && secs < 300.0,
          fmt("attention ratio per doubling in [%.3f, %.3f] (need [3.6, 4.4]), gated-ssl max %.3f (need <= 2.3), "
              "%.1fs",
              att_lo, att_hi, ssl_hi, secs)};
}

Outcome determinism() {
  // The shipped toy preset with a shortened run.
  RunConfig c = toy();
  c.steps = 40;
  c.log_interval = 5;
  std::ostringstream out_a, out_b;
  cmd_train(c, out_a);
  cmd_train(c, out_b);
  const std::string a = out_a.str(), b = out_b.str();
  const auto lines = static_cast<std::size_t>(std::count(a.begin(), a.end(), '\n'));
  return {a == b && lines > 1, fmt("%zu metric lines, streams %s", lines, a == b ? "byte-identical" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"kernel correctness", kernel_correctness},
      {"path equivalence", path_equivalence},
      {"gradient suite", gradient_suite},
      {"C3 properties", c3_properties},
      {"selector contracts", selector_contracts},
      {"global-context efficacy", global_context},
      {"gating ablation direction", gating_ablation},
      {"memory scaling", memory_scaling},
      {"determinism", determinism},
  };
  std::set<std::size_t> pick;
  for (int i = 1; i < argc; ++i) pick.insert(std::stoul(argv[i]));

  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!pick.empty() && !pick.count(i + 1)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %zu  %-26s %s  %s\n", i + 1, criteria[i].first, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
