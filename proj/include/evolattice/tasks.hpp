#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "evolattice/path_engine.hpp"
#include "evolattice/rng.hpp"

namespace evolattice {

// ---------------------------------------------------------------------------
// Spearman rank correlation
// ---------------------------------------------------------------------------

struct LengthMismatch : std::runtime_error {
  LengthMismatch(size_t a, size_t b)
      : std::runtime_error("length mismatch: " + std::to_string(a) + " vs " + std::to_string(b)) {}
};

struct SpearmanResult {
  double rho = 0.0;
  bool degenerate = false;  // constant input on either side
};

namespace detail {

inline std::vector<double> average_ranks(const std::vector<double>& xs) {
  size_t n = xs.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
    double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;  // 1-based
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace detail

inline SpearmanResult spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw LengthMismatch(xs.size(), ys.size());
  if (xs.size() < 2) throw LengthMismatch(xs.size(), 2);
  auto rx = detail::average_ranks(xs);
  auto ry = detail::average_ranks(ys);
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= static_cast<double>(rx.size());
  my /= static_cast<double>(ry.size());
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return {0.0, true};
  return {sxy / std::sqrt(sxx * syy), false};
}

namespace detail {

inline std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

inline uint64_t fnv_mix(uint64_t h, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  for (int i = 0; i < 8; ++i) {
    h ^= (bits >> (8 * i)) & 0xff;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Synthetic zero-shot architecture ranking (two-phase Spearman objective)
// ---------------------------------------------------------------------------

struct ArchitectureRecord {
  std::vector<double> spec_vec;  // per-layer top singular-value proxies
  double spectral_cv_abs = 0.0;
  double cov_sum = 0.0;
  double spectral_entropy = 0.0;
  double loss = 0.0;
  double teacher = 0.0;
  uint64_t token = 0;  // input-batch identity for the subpath cache
};

struct RankingTaskConfig {
  int phase_a_size = 64;
  int phase_b_size = 384;
  double rho_min = 0.02;  // phase A pass threshold
  uint64_t batch_seed = 2;
  double w_loss = 0.5;
  double w_spec = 0.3;
  double w_cov = 0.2;
  double noise_scale = 0.05;
};

class RankingTask : public Task {
 public:
  explicit RankingTask(RankingTaskConfig cfg = {}) : cfg_(cfg) {
    teacher_ = parse_lambda(teacher_source(cfg_));
    phase_a_ = generate(cfg_.phase_a_size, Rng::derive(cfg_.batch_seed, "phase_a"));
    phase_b_ = generate(cfg_.phase_b_size, Rng::derive(cfg_.batch_seed, "phase_b"));
  }

  // The ground-truth ranking signal, expressed in the candidate language so
  // the benchmark is closed under it.
  static std::string teacher_source(const RankingTaskConfig& cfg) {
    return "lambda loss, spec_vec, spectral_cv_abs, cov_sum: " + detail::fmt_num(cfg.w_loss) +
           " * (0.0 - loss) + " + detail::fmt_num(cfg.w_spec) +
           " * (tanh(mean(topk(spec_vec, 3.0))) / (1.0 + spectral_cv_abs)) + " +
           detail::fmt_num(cfg.w_cov) + " * sigmoid(log1p(cov_sum))";
  }

  std::string name() const override { return "ranking"; }

  std::vector<std::string> input_names() const override {
    return {"spec_vec", "spectral_cv_abs", "cov_sum", "spectral_entropy", "loss"};
  }

  std::vector<std::pair<std::string, std::string>> input_kinds() const override {
    return {{"spec_vec", "vector"},
            {"spectral_cv_abs", "scalar"},
            {"cov_sum", "scalar"},
            {"spectral_entropy", "scalar"},
            {"loss", "scalar"}};
  }

  std::string output_kind() const override { return "scalar"; }

  std::string default_seed_source() const override { return "lambda spec_vec: mean(spec_vec)"; }

  std::string summary() const override {
    return "zero-shot proxy ranking: maximize Spearman rank correlation between the "
           "candidate's scalar score and a hidden teacher score over synthetic "
           "architecture records; a fast probe over " +
           std::to_string(cfg_.phase_a_size) + " records rejects candidates below rho=" +
           detail::fmt_num(cfg_.rho_min) + " before the full evaluation over " +
           std::to_string(cfg_.phase_b_size) + " records";
  }

  ScoreOutcome score(const PathExecutorFn& exec) const override {
    PhaseRho a = phase_rho(exec, phase_a_);
    if (!a.error.empty()) return ScoreOutcome::fail(a.error);
    if (a.result.rho < cfg_.rho_min) return ScoreOutcome::ok(a.result.rho);  // early reject
    PhaseRho b = phase_rho(exec, phase_b_);
    if (!b.error.empty()) return ScoreOutcome::fail(b.error);
    return ScoreOutcome::ok(b.result.rho);
  }

  uint64_t batch_digest() const override {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto* phase : {&phase_a_, &phase_b_})
      for (const auto& r : *phase) {
        for (double v : r.spec_vec) h = detail::fnv_mix(h, v);
        h = detail::fnv_mix(h, r.spectral_cv_abs);
        h = detail::fnv_mix(h, r.cov_sum);
        h = detail::fnv_mix(h, r.spectral_entropy);
        h = detail::fnv_mix(h, r.loss);
        h = detail::fnv_mix(h, r.teacher);
      }
    return h;
  }

  void export_csv(std::ostream& out) const override {
    out << "phase,index,loss,cov_sum,spectral_cv_abs,spectral_entropy,teacher,spec_vec\n";
    auto row = [&](const char* phase, size_t i, const ArchitectureRecord& r) {
      out << phase << "," << i << "," << r.loss << "," << r.cov_sum << "," << r.spectral_cv_abs
          << "," << r.spectral_entropy << "," << r.teacher << ",";
      for (size_t k = 0; k < r.spec_vec.size(); ++k) out << (k ? ";" : "") << r.spec_vec[k];
      out << "\n";
    };
    for (size_t i = 0; i < phase_a_.size(); ++i) row("A", i, phase_a_[i]);
    for (size_t i = 0; i < phase_b_.size(); ++i) row("B", i, phase_b_[i]);
  }

  const std::vector<ArchitectureRecord>& phase_a_records() const { return phase_a_; }
  const std::vector<ArchitectureRecord>& phase_b_records() const { return phase_b_; }
  const RankingTaskConfig& config() const { return cfg_; }

  static Env record_env(const ArchitectureRecord& r) {
    Env env;
    env.emplace("spec_vec", Value(r.spec_vec));
    env.emplace("spectral_cv_abs", Value(r.spectral_cv_abs));
    env.emplace("cov_sum", Value(r.cov_sum));
    env.emplace("spectral_entropy", Value(r.spectral_entropy));
    env.emplace("loss", Value(r.loss));
    return env;
  }

 private:
  struct PhaseRho {
    SpearmanResult result;
    std::string error;
  };

  PhaseRho phase_rho(const PathExecutorFn& exec, const std::vector<ArchitectureRecord>& recs) const {
    std::vector<double> proxy, teacher;
    proxy.reserve(recs.size());
    teacher.reserve(recs.size());
    for (const auto& r : recs) {
      Value v;
      try {
        v = exec(record_env(r), r.token);
      } catch (const EvalError& e) {
        return {{}, e.what()};
      }
      if (!v.is_scalar()) return {{}, "proxy produced a vector; a scalar score is required"};
      proxy.push_back(v.scalar());
      teacher.push_back(r.teacher);
    }
    return {spearman(proxy, teacher), {}};
  }

  std::vector<ArchitectureRecord> generate(int count, uint64_t seed) const {
    std::vector<ArchitectureRecord> out;
    out.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
      Rng rng(Rng::derive(seed, static_cast<uint64_t>(i)));
      ArchitectureRecord r;
      int depth = rng.range_int(4, 12);
      // Independent latent factors drive the three teacher components, with
      // scales balanced so no single input ranks architectures well on its
      // own; good proxies must combine signals.
      double q_spec = rng.normal();
      double q_cov = rng.normal();
      double q_loss = rng.normal();
      r.spec_vec.reserve(static_cast<size_t>(depth));
      for (int k = 0; k < depth; ++k)
        r.spec_vec.push_back(std::exp(-0.2 + 1.0 * q_spec + 0.25 * rng.normal()));
      r.cov_sum = std::exp(2.0 * q_cov + 0.2 * rng.normal());
      r.loss = std::log1p(std::exp(1.2 - 0.4 * q_loss + 0.12 * rng.normal()));

      double mean = 0.0;
      for (double x : r.spec_vec) mean += x;
      mean /= static_cast<double>(r.spec_vec.size());
      double var = 0.0;
      for (double x : r.spec_vec) var += (x - mean) * (x - mean);
      var /= static_cast<double>(r.spec_vec.size());
      r.spectral_cv_abs = std::fabs(std::sqrt(var) / (std::fabs(mean) + 1e-3));

      // Entropy of the softmaxed spectrum, matching the builtin's semantics
      // exactly (the teacher must stay expressible in the candidate language).
      r.spectral_entropy =
          evolattice::detail::call_builtin("entropy", {Value(r.spec_vec)}).scalar();

      Env env = record_env(r);
      r.teacher = evaluate(*teacher_.body, env).scalar() + cfg_.noise_scale * rng.normal();
      r.token = Rng::derive(Rng::derive(seed, "record"), static_cast<uint64_t>(i));
      out.push_back(std::move(r));
    }
    return out;
  }

  RankingTaskConfig cfg_;
  ParsedLambda teacher_;
  std::vector<ArchitectureRecord> phase_a_, phase_b_;
};

// ---------------------------------------------------------------------------
// Training-free optimizer update rule discovery (virtual updates)
// ---------------------------------------------------------------------------

struct OptimizerTaskConfig {
  int dim = 16;
  int probes = 8;
  uint64_t batch_seed = 2;
  double lambda_align = 0.1;
  double lambda_sharp = 0.1;
  double epsilon = 0.01;          // sharpness probe radius
  double perturb_amplitude = 0.1;  // smooth non-quadratic term; 0 gives pure quadratics
  int sharp_directions = 4;
};

class OptimizerTask : public Task {
 public:
  explicit OptimizerTask(OptimizerTaskConfig cfg = {}) : cfg_(cfg) {
    for (int p = 0; p < cfg_.probes; ++p)
      probes_.push_back(make_probe(Rng::derive(Rng::derive(cfg_.batch_seed, "probe"),
                                               static_cast<uint64_t>(p)),
                                   static_cast<uint64_t>(p)));
  }

  // Handcrafted update rules built from the same primitives, used as
  // comparison baselines.
  static std::string sgd_source() { return "lambda g: -0.01 * g"; }
  static std::string sign_source() { return "lambda g: -0.01 * sign(g)"; }
  static std::string curvature_source() { return "lambda g, h: -0.01 * g / (sqrt(h) + 0.000001)"; }
  static std::string blend_linear_source() {
    return "lambda g, h: -0.01 * (0.5 * sign(g) + 0.5 * g / (sqrt(h) + 0.000001))";
  }
  static std::string blend_gated_source() {
    return "lambda g, h: -0.01 * sign(g) * sigmoid(abs(g) / (sqrt(h) + 0.000001))";
  }
  // Nonlinear sign-curvature operator with evolved constants.
  static std::string discovered_rule_source() {
    return "lambda g, h, w: -tanh(sign(g) * (1.0 + 0.01 * sum(abs(w)))) - "
           "0.3 * sigmoid(g / (sqrt(h) + 0.00000001)) + "
           "0.2 * sign(g) * (1.0 + 0.1 * var(h))";
  }

  std::string name() const override { return "optimizer"; }

  std::vector<std::string> input_names() const override { return {"g", "h", "w"}; }

  std::vector<std::pair<std::string, std::string>> input_kinds() const override {
    return {{"g", "vector"}, {"h", "vector"}, {"w", "vector"}};
  }

  std::string output_kind() const override { return "vector"; }

  std::string default_seed_source() const override { return sgd_source(); }

  std::string summary() const override {
    return "training-free optimizer discovery: the candidate maps gradient g, diagonal "
           "curvature proxy h, and parameters w to an update delta_w; the score is the mean "
           "virtual validation-loss improvement minus alignment and sharpness penalties over " +
           std::to_string(cfg_.probes) + " seeded objectives; parameters are restored after "
           "every probe";
  }

  ScoreOutcome score(const PathExecutorFn& exec) const override {
    double total = 0.0;
    for (const auto& probe : probes_) {
      Env env;
      env.emplace("g", Value(probe.g));
      env.emplace("h", Value(probe.h_proxy));
      env.emplace("w", Value(probe.w));
      Value dw;
      try {
        dw = exec(env, probe.token);
      } catch (const EvalError& e) {
        return ScoreOutcome::fail(e.what());
      }
      if (!dw.is_vector() || dw.vec().size() != probe.w.size())
        return ScoreOutcome::fail("update must be a vector of dimension " +
                                  std::to_string(probe.w.size()));
      const auto& delta = dw.vec();

      std::vector<double> moved = probe.w;
      for (size_t i = 0; i < moved.size(); ++i) moved[i] += delta[i];
      double improvement = objective(probe, probe.w) - objective(probe, moved);

      double align = 1.0 - cosine_with_descent(delta, probe.g);
      double sharp = std::max(0.0, sharpness(probe, moved) - sharpness(probe, probe.w));
      double s = improvement - cfg_.lambda_align * align - cfg_.lambda_sharp * sharp;
      if (!std::isfinite(s)) return ScoreOutcome::fail("non-finite probe score");
      total += s;
    }
    return ScoreOutcome::ok(total / static_cast<double>(probes_.size()));
  }

  uint64_t batch_digest() const override {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : probes_) {
      for (double v : p.w) h = detail::fnv_mix(h, v);
      for (double v : p.g) h = detail::fnv_mix(h, v);
      for (double v : p.h_proxy) h = detail::fnv_mix(h, v);
    }
    return h;
  }

  void export_csv(std::ostream& out) const override {
    out << "probe,component,w,minimizer,h,g,h_proxy\n";
    for (size_t p = 0; p < probes_.size(); ++p)
      for (size_t i = 0; i < probes_[p].w.size(); ++i)
        out << p << "," << i << "," << probes_[p].w[i] << "," << probes_[p].minimizer[i] << ","
            << probes_[p].h_diag[i] << "," << probes_[p].g[i] << "," << probes_[p].h_proxy[i]
            << "\n";
  }

  const OptimizerTaskConfig& config() const { return cfg_; }

  struct Probe {
    std::vector<double> w, minimizer, h_diag, freq, g, h_proxy;
    std::vector<std::vector<double>> directions;  // unit sharpness probes
    uint64_t token = 0;
  };

  const std::vector<Probe>& probes() const { return probes_; }

  double objective(const Probe& p, const std::vector<double>& at) const {
    double v = 0.0;
    for (size_t i = 0; i < at.size(); ++i) {
      double d = at[i] - p.minimizer[i];
      v += 0.5 * p.h_diag[i] * d * d;
      if (cfg_.perturb_amplitude != 0.0) v += cfg_.perturb_amplitude * std::cos(p.freq[i] * d);
    }
    return v;
  }

 private:
  static double cosine_with_descent(const std::vector<double>& delta,
                                    const std::vector<double>& g) {
    double dot = 0.0, nd = 0.0, ng = 0.0;
    for (size_t i = 0; i < delta.size(); ++i) {
      dot += delta[i] * -g[i];
      nd += delta[i] * delta[i];
      ng += g[i] * g[i];
    }
    if (nd == 0.0 || ng == 0.0) return 0.0;  // zero vector: cosine defined as 0
    return dot / std::sqrt(nd * ng);
  }

  // Worst objective increase over the probe's unit directions at radius epsilon.
  double sharpness(const Probe& p, const std::vector<double>& at) const {
    double base = objective(p, at);
    double worst = -std::numeric_limits<double>::infinity();
    std::vector<double> shifted(at.size());
    for (const auto& dir : p.directions) {
      for (size_t i = 0; i < at.size(); ++i) shifted[i] = at[i] + cfg_.epsilon * dir[i];
      worst = std::max(worst, objective(p, shifted) - base);
    }
    return worst;
  }

  Probe make_probe(uint64_t seed, uint64_t index) const {
    Rng rng(seed);
    Probe p;
    size_t n = static_cast<size_t>(cfg_.dim);
    p.w.resize(n);
    p.minimizer.resize(n);
    p.h_diag.resize(n);
    p.freq.resize(n);
    for (size_t i = 0; i < n; ++i) {
      p.h_diag[i] = std::exp(rng.next_unit() * std::log(400.0));  // [1, 400) log-uniform
      p.w[i] = rng.normal();
      p.minimizer[i] = p.w[i] - rng.normal();
      p.freq[i] = 0.5 + 1.5 * rng.next_unit();
    }
    p.g.resize(n);
    p.h_proxy.resize(n);
    for (size_t i = 0; i < n; ++i) {
      double d = p.w[i] - p.minimizer[i];
      p.g[i] = p.h_diag[i] * d;
      p.h_proxy[i] = p.h_diag[i];
      if (cfg_.perturb_amplitude != 0.0) {
        p.g[i] -= cfg_.perturb_amplitude * p.freq[i] * std::sin(p.freq[i] * d);
        p.h_proxy[i] -= cfg_.perturb_amplitude * p.freq[i] * p.freq[i] * std::cos(p.freq[i] * d);
      }
      if (p.h_proxy[i] < 1e-6) p.h_proxy[i] = 1e-6;
    }
    for (int k = 0; k < cfg_.sharp_directions; ++k) {
      std::vector<double> dir(n);
      double norm = 0.0;
      for (size_t i = 0; i < n; ++i) {
        dir[i] = rng.normal();
        norm += dir[i] * dir[i];
      }
      norm = std::sqrt(norm);
      for (double& x : dir) x /= norm;
      p.directions.push_back(std::move(dir));
    }
    p.token = Rng::derive(seed, Rng::derive(0x6f7074ULL, index));
    return p;
  }

  OptimizerTaskConfig cfg_;
  std::vector<Probe> probes_;
};

// ---------------------------------------------------------------------------
// Symbolic regression sanity task
// ---------------------------------------------------------------------------

struct RegressionTaskConfig {
  int dim = 4;
  int samples = 64;
  uint64_t batch_seed = 2;
};

class RegressionTask : public Task {
 public:
  explicit RegressionTask(RegressionTaskConfig cfg = {}) : cfg_(cfg) {
    target_ = parse_lambda(target_source());
    Rng seed_rng(Rng::derive(cfg_.batch_seed, "regression"));
    for (int i = 0; i < cfg_.samples; ++i) {
      Sample s;
      s.x.resize(static_cast<size_t>(cfg_.dim));
      for (double& v : s.x) v = seed_rng.normal();
      Env env;
      env.emplace("x", Value(s.x));
      s.target = evaluate(*target_.body, env).scalar();
      s.token = Rng::derive(Rng::derive(cfg_.batch_seed, "regression_record"),
                            static_cast<uint64_t>(i));
      samples_.push_back(std::move(s));
    }
  }

  static std::string target_source() { return "lambda x: tanh(2.0 * mean(x)) + 0.3 * mean(x * x)"; }

  std::string name() const override { return "regression"; }
  std::vector<std::string> input_names() const override { return {"x"}; }
  std::vector<std::pair<std::string, std::string>> input_kinds() const override {
    return {{"x", "vector"}};
  }
  std::string output_kind() const override { return "scalar"; }
  std::string default_seed_source() const override { return "lambda x: mean(x)"; }

  std::string summary() const override {
    return "symbolic regression: the candidate maps the input vector x to a scalar "
           "prediction; the score is the negated mean squared error against a fixed "
           "target function over " +
           std::to_string(cfg_.samples) + " seeded samples (0 is optimal)";
  }

  ScoreOutcome score(const PathExecutorFn& exec) const override {
    double se = 0.0;
    for (const auto& s : samples_) {
      Env env;
      env.emplace("x", Value(s.x));
      Value v;
      try {
        v = exec(env, s.token);
      } catch (const EvalError& e) {
        return ScoreOutcome::fail(e.what());
      }
      if (!v.is_scalar()) return ScoreOutcome::fail("prediction must be a scalar");
      double d = v.scalar() - s.target;
      se += d * d;
    }
    return ScoreOutcome::ok(-se / static_cast<double>(samples_.size()));
  }

  uint64_t batch_digest() const override {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& s : samples_) {
      for (double v : s.x) h = detail::fnv_mix(h, v);
      h = detail::fnv_mix(h, s.target);
    }
    return h;
  }

  void export_csv(std::ostream& out) const override {
    out << "index,target,x\n";
    for (size_t i = 0; i < samples_.size(); ++i) {
      out << i << "," << samples_[i].target << ",";
      for (size_t k = 0; k < samples_[i].x.size(); ++k)
        out << (k ? ";" : "") << samples_[i].x[k];
      out << "\n";
    }
  }

  struct Sample {
    std::vector<double> x;
    double target = 0.0;
    uint64_t token = 0;
  };

  const std::vector<Sample>& samples() const { return samples_; }

 private:
  RegressionTaskConfig cfg_;
  ParsedLambda target_;
  std::vector<Sample> samples_;
};

}  // namespace evolattice
