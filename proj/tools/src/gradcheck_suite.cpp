#include "socnn_cli/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

#include "socnn/gradcheck.hpp"
#include "socnn/linalg.hpp"
#include "socnn/models.hpp"
#include "socnn/nn.hpp"
#include "socnn/solayers.hpp"

namespace socnn::cli {

namespace {

using G = Graph<double>;
using V = Var<double>;

Tensor random_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  Tensor t(shape);
  for (double& v : t.data()) v = scale * rng.normal();
  return t;
}

// Projects a tensor-valued function to a scalar with fixed random weights so
// the check sees a generic upstream gradient.
V project(V y, const Tensor& weights) { return weighted_sum(y, weights); }

struct Accumulator {
  LayerCheck check;

  void add(const GradCheckResult& r, const std::string& where) {
    ++check.runs;
    const double err = std::isnan(r.max_rel_error) ? INFINITY : r.max_rel_error;
    if (check.runs == 1 || err > check.max_rel_error) {
      check.max_rel_error = err;
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s[%zu] analytic=%.10g numeric=%.10g", where.c_str(),
                    r.worst_index, r.analytic, r.numeric);
      check.detail = buf;
    }
  }
};

// Checks f(x, others...) with respect to each listed input in turn.
void check_inputs(Accumulator& acc, const std::string& seed_tag,
                  const std::vector<std::pair<std::string, Tensor>>& inputs,
                  const std::function<V(G&, std::vector<V>&)>& f) {
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const ScalarFn fn = [&](G& g, V x) {
      std::vector<V> vars;
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        vars.push_back(i == k ? x : g.constant(inputs[i].second));
      }
      return f(g, vars);
    };
    acc.add(finite_diff_check(fn, inputs[k].second), seed_tag + " " + inputs[k].first);
  }
}

Tensor spd_from_samples(std::size_t n, std::size_t d, Rng& rng) {
  return cov_forward(random_tensor(Shape{n, d}, rng), false).c;
}

double min_eig_gap(const Tensor& sym) {
  const EigPair e = sym_eig(sym);
  double gap = INFINITY;
  for (std::size_t i = 0; i + 1 < e.values.numel(); ++i) {
    gap = std::min(gap, std::abs(e.values[i] - e.values[i + 1]));
  }
  return gap;
}

using LayerFn = std::function<void(Accumulator&, Rng&, const std::string&)>;

struct LayerCase {
  std::string name;
  LayerFn run;
};

std::vector<LayerCase> layer_cases(const GradcheckOptions& opt) {
  std::vector<LayerCase> cases;

  cases.push_back({"cov", [](Accumulator& acc, Rng& rng, const std::string& tag) {
                     const Tensor x = random_tensor(Shape{7, 5}, rng);
                     const Tensor r = random_tensor(Shape{5, 5}, rng);
                     check_inputs(acc, tag, {{"x", x}},
                                  [&](G&, std::vector<V>& v) {
                                    return project(covariance(v[0]), r);
                                  });
                   }});

  cases.push_back({"augment", [](Accumulator& acc, Rng& rng, const std::string& tag) {
                     const Tensor sigma = spd_from_samples(8, 4, rng);
                     const Tensor mu = random_tensor(Shape{4}, rng);
                     const Tensor r = random_tensor(Shape{5, 5}, rng);
                     check_inputs(acc, tag, {{"sigma", sigma}, {"mu", mu}},
                                  [&](G&, std::vector<V>& v) {
                                    return project(cov_augment(v[0], v[1], kDefaultBeta), r);
                                  });
                     const Tensor x = random_tensor(Shape{6, 4}, rng);
                     check_inputs(acc, tag, {{"x", x}}, [&](G&, std::vector<V>& v) {
                       return project(cov_layer(v[0], CovLayerOptions{}), r);
                     });
                   }});

  cases.push_back({"o2t", [](Accumulator& acc, Rng& rng, const std::string& tag) {
                     const Tensor m = spd_from_samples(8, 6, rng);
                     const Tensor w = random_tensor(Shape{4, 6}, rng, 0.5);
                     const Tensor r = random_tensor(Shape{4, 4}, rng);
                     check_inputs(acc, tag, {{"m", m}, {"w", w}}, [&](G&, std::vector<V>& v) {
                       return project(o2t(v[0], v[1]), r);
                     });
                   }});

  cases.push_back({"pv", [](Accumulator& acc, Rng& rng, const std::string& tag) {
                     const Tensor y = spd_from_samples(8, 5, rng);
                     const Tensor w = random_tensor(Shape{5, 3}, rng, 0.5);
                     const Tensor r = random_tensor(Shape{3}, rng);
                     check_inputs(acc, tag, {{"y", y}, {"w", w}}, [&](G&, std::vector<V>& v) {
                       return project(pv(v[0], v[1]), r);
                     });
                   }});

  const bool degenerate = opt.degenerate_robust;
  cases.push_back({"robust", [degenerate](Accumulator& acc, Rng& rng, const std::string& tag) {
                     // Full rank from 12 samples in 5 dims, or rank one from 2.
                     const Tensor sigma = spd_from_samples(degenerate ? 2 : 12, 5, rng);
                     const double gap = min_eig_gap(sigma);
                     if (gap < 1e-3) {
                       acc.check.skipped = true;
                       char buf[96];
                       std::snprintf(buf, sizeof buf, "%s degenerate spectrum (min gap %.3g)",
                                     tag.c_str(), gap);
                       acc.check.detail = buf;
                       return;
                     }
                     const Tensor r = random_tensor(Shape{5, 5}, rng);
                     // Perturbations break symmetry, so symmetrize first.
                     check_inputs(acc, tag, {{"sigma", sigma}}, [&](G&, std::vector<V>& v) {
                       const V s = scale(add(v[0], transpose(v[0])), 0.5);
                       return project(robust_rectify(s), r);
                     });
                   }});

  cases.push_back({"transition", [](Accumulator& acc, Rng& rng, const std::string& tag) {
                     const Tensor x = random_tensor(Shape{6, 5}, rng);
                     const Tensor w = random_tensor(Shape{3, 5}, rng);
                     const Tensor b = random_tensor(Shape{3}, rng);
                     const Tensor r = random_tensor(Shape{6, 3}, rng);
                     check_inputs(acc, tag, {{"x", x}, {"w", w}, {"b", b}},
                                  [&](G&, std::vector<V>& v) {
                                    return project(transition(v[0], v[1], v[2]), r);
                                  });
                   }});

  cases.push_back({"conv", [](Accumulator& acc, Rng& rng, const std::string& tag) {
                     const Tensor x = random_tensor(Shape{6, 5, 2}, rng);
                     const Tensor w = random_tensor(Shape{3, 3, 2, 3}, rng, 0.5);
                     const Tensor b = random_tensor(Shape{3}, rng);
                     const Tensor r_same = random_tensor(Shape{6, 5, 3}, rng);
                     const Tensor r_valid = random_tensor(Shape{2, 2, 3}, rng);
                     check_inputs(acc, tag + " same", {{"x", x}, {"w", w}, {"b", b}},
                                  [&](G&, std::vector<V>& v) {
                                    return project(conv2d(v[0], v[1], v[2]), r_same);
                                  });
                     check_inputs(acc, tag + " valid/2", {{"x", x}, {"w", w}, {"b", b}},
                                  [&](G&, std::vector<V>& v) {
                                    return project(conv2d(v[0], v[1], v[2], 2, Padding::Valid), r_valid);
                                  });
                   }});

  cases.push_back({"pool", [](Accumulator& acc, Rng& rng, const std::string& tag) {
                     const Tensor x = random_tensor(Shape{5, 6, 2}, rng);
                     const Tensor r = random_tensor(Shape{3, 3, 2}, rng);
                     check_inputs(acc, tag, {{"x", x}}, [&](G&, std::vector<V>& v) {
                       return project(maxpool2x2(v[0]), r);
                     });
                   }});

  cases.push_back({"dense", [](Accumulator& acc, Rng& rng, const std::string& tag) {
                     const Tensor x = random_tensor(Shape{6}, rng);
                     const Tensor w = random_tensor(Shape{6, 4}, rng);
                     const Tensor b = random_tensor(Shape{4}, rng);
                     const Tensor r = random_tensor(Shape{4}, rng);
                     check_inputs(acc, tag, {{"x", x}, {"w", w}, {"b", b}},
                                  [&](G&, std::vector<V>& v) {
                                    return project(dense(v[0], v[1], v[2]), r);
                                  });
                   }});

  cases.push_back({"softmax-ce", [](Accumulator& acc, Rng& rng, const std::string& tag) {
                     const Tensor logits = random_tensor(Shape{7}, rng, 2.0);
                     const std::size_t label = rng.below(7);
                     check_inputs(acc, tag, {{"logits", logits}}, [&](G&, std::vector<V>& v) {
                       return softmax_cross_entropy(v[0], label);
                     });
                   }});
  return cases;
}

std::vector<ModelSpec> toy_models() {
  std::vector<ModelSpec> specs;
  for (const auto& name : builtin_model_names()) specs.push_back(scaled_for_test(model_by_name(name)));
  ModelSpec robust = scaled_for_test(build_so_cnn(2, DimPlan::Same));
  robust.name += "-robust";
  robust.cdu.unit.robust = true;
  specs.push_back(robust);
  specs.push_back(scaled_for_test(attach_transition(build_so_cnn(2, DimPlan::Same), 32)));
  ModelSpec fused = scaled_for_test(build_so_cnn(1, DimPlan::Same));
  fused.name += "-2xD-concat";
  fused.cdu.groups = 2;
  fused.cdu.fusion = FusionSpec::parse("D-concat");
  specs.push_back(fused);
  return specs;
}

LayerCheck check_model(const ModelSpec& spec, std::uint64_t seed, double tolerance) {
  Accumulator acc;
  acc.check.layer = "model:" + spec.name;
  acc.check.tolerance = tolerance;
  Rng rng = Rng(seed).split("gradcheck-model");
  const Model<double> model(spec, rng.split("init"));
  Rng data_rng = rng.split("input");
  const Tensor input = random_tensor(spec.input_shape(), data_rng);
  const std::size_t label = data_rng.below(spec.classes);
  const auto& params = model.params();

  std::vector<std::pair<std::string, Tensor>> inputs{{"input", input}};
  for (const auto& p : params.items()) inputs.emplace_back(p.name, p.value);
  check_inputs(acc, "", inputs, [&](G&, std::vector<V>& v) {
    std::vector<V> bound(v.begin() + 1, v.end());
    return softmax_cross_entropy(model.forward(v[0], bound), label);
  });
  return acc.check;
}

}  // namespace

std::vector<LayerCheck> run_gradchecks(const GradcheckOptions& options) {
  std::vector<LayerCheck> out;
  if (options.layers) {
    for (const auto& c : layer_cases(options)) {
      Accumulator acc;
      acc.check.layer = c.name;
      acc.check.tolerance = options.layer_tolerance;
      for (std::size_t s = 0; s < options.seeds; ++s) {
        Rng rng = Rng(options.seed).split("gradcheck:" + c.name, s);
        c.run(acc, rng, "seed " + std::to_string(s));
        if (acc.check.skipped) break;
      }
      out.push_back(acc.check);
    }
  }
  if (options.models) {
    for (const auto& spec : toy_models()) {
      out.push_back(check_model(spec, options.seed, options.model_tolerance));
    }
  }
  return out;
}

bool print_gradcheck_report(const std::vector<LayerCheck>& checks, std::ostream& out) {
  bool ok = true;
  for (const auto& c : checks) {
    char line[96];
    if (c.skipped) {
      std::snprintf(line, sizeof line, "SKIP  %-28s", c.layer.c_str());
      out << line << " " << c.detail << "\n";
      continue;
    }
    const bool pass = c.passed();
    ok = ok && pass;
    std::snprintf(line, sizeof line, "%s  %-28s max_rel_err=%.3e (tol %.0e)", pass ? "PASS" : "FAIL",
                  c.layer.c_str(), c.max_rel_error, c.tolerance);
    out << line << "  worst: " << c.detail << "\n";
  }
  return ok;
}

}  // namespace socnn::cli
