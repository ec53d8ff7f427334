#include "socnn/models.hpp"

#include <algorithm>
#include <sstream>

#include "socnn/nn.hpp"
#include "socnn/solayers.hpp"

namespace socnn {

void ModelSpec::validate() const {
  if (classes == 0) throw ConfigError("model: classes must be >= 1");
  if (input_height == 0 || input_width == 0 || input_channels == 0) {
    throw ConfigError("model: input extents must be positive");
  }
  if (kernel == 0 || kernel % 2 == 0) throw ConfigError("model: kernel size must be odd");
  for (const auto& block : backbone) {
    if (block.channels.empty()) throw ConfigError("model: empty convolution block");
    for (std::size_t c : block.channels)
      if (c == 0) throw ConfigError("model: convolution with zero channels");
  }
  if (transition_dim) {
    if (head != HeadKind::Cdu) throw ConfigError("model: transition layer requires a CDU head");
    if (*transition_dim == 0) throw ConfigError("model: transition width must be >= 1");
  }
  switch (head) {
    case HeadKind::Fc:
      if (fc_width == 0) throw ConfigError("model: FC head needs a positive width");
      break;
    case HeadKind::MeanPool:
      break;
    case HeadKind::Cdu:
      cdu.unit.validate();
      cdu_head_params(cdu, head_channels());
      break;
  }
}

std::size_t ModelSpec::backbone_channels() const {
  return backbone.empty() ? input_channels : backbone.back().channels.back();
}

std::size_t ModelSpec::head_channels() const {
  return transition_dim ? *transition_dim : backbone_channels();
}

std::size_t ModelSpec::backbone_sites() const {
  if (backbone.empty()) return input_height;
  std::size_t h = input_height, w = input_width;
  for (std::size_t b = 0; b < backbone.size(); ++b) {
    h = (h + 1) / 2;
    w = (w + 1) / 2;
  }
  return h * w;
}

Shape ModelSpec::input_shape() const {
  if (backbone.empty()) return Shape{input_height, input_channels};
  return Shape{input_height, input_width, input_channels};
}

std::vector<ConvBlockSpec> fitnet_backbone() {
  return {{{16, 16, 16}}, {{32, 32, 32}}, {{48, 48, 64}}};
}

ModelSpec build_fitnet_baseline() {
  ModelSpec spec;
  spec.name = "fitnet";
  spec.backbone = fitnet_backbone();
  spec.head = HeadKind::Fc;
  spec.fc_width = 500;
  return spec;
}

ModelSpec build_so_cnn(std::size_t k, DimPlan plan) {
  if (k > 5) throw ConfigError("so-cnn: O2T count must be in 0..5");
  ModelSpec spec;
  spec.backbone = fitnet_backbone();
  spec.head = HeadKind::Cdu;
  auto& unit = spec.cdu.unit;
  unit.mean_augment = true;
  unit.beta = kDefaultBeta;
  std::size_t dim = 64;
  std::string suffix = "same";
  if (plan == DimPlan::Div2) {
    dim = std::size_t{50} << (k ? k - 1 : 0);
    suffix = "div2";
  } else if (plan == DimPlan::Mul2) {
    dim = 50;
    suffix = "x2";
  }
  for (std::size_t i = 0; i < k; ++i) {
    unit.o2t_dims.push_back(dim);
    if (plan == DimPlan::Div2) dim /= 2;
    if (plan == DimPlan::Mul2) dim *= 2;
  }
  unit.pv_dim = unit.o2t_dims.empty() ? 64 : unit.o2t_dims.back();
  spec.name = "so-cnn-" + std::to_string(k) + "-" + suffix;
  return spec;
}

ModelSpec attach_transition(ModelSpec spec, std::size_t out_dim) {
  if (spec.head != HeadKind::Cdu) throw ConfigError("attach_transition: model has no CDU head");
  spec.transition_dim = out_dim;
  spec.name += "-t" + std::to_string(out_dim);
  spec.validate();
  return spec;
}

ModelSpec build_synth_cdu(std::size_t sites, std::size_t dim, std::size_t classes,
                          std::size_t o2t_dim, std::size_t pv_dim) {
  ModelSpec spec;
  spec.name = "synth-cdu";
  spec.input_height = sites;
  spec.input_width = 1;
  spec.input_channels = dim;
  spec.head = HeadKind::Cdu;
  spec.cdu.unit.o2t_dims = {o2t_dim};
  spec.cdu.unit.pv_dim = pv_dim;
  spec.classes = classes;
  return spec;
}

ModelSpec build_synth_meanpool(std::size_t sites, std::size_t dim, std::size_t classes,
                               std::size_t hidden) {
  ModelSpec spec;
  spec.name = "synth-meanpool";
  spec.input_height = sites;
  spec.input_width = 1;
  spec.input_channels = dim;
  spec.head = HeadKind::MeanPool;
  spec.fc_width = hidden;
  spec.classes = classes;
  return spec;
}

ModelSpec model_by_name(const std::string& name) {
  if (name == "fitnet" || name == "fitnet-500") return build_fitnet_baseline();
  const std::string prefix = "so-cnn-";
  if (name.rfind(prefix, 0) == 0) {
    const std::string rest = name.substr(prefix.size());
    const auto dash = rest.find('-');
    if (dash != std::string::npos && dash > 0) {
      const std::string k_text = rest.substr(0, dash);
      const std::string plan_text = rest.substr(dash + 1);
      if (std::all_of(k_text.begin(), k_text.end(), ::isdigit)) {
        const std::size_t k = std::stoul(k_text);
        if (plan_text == "same") return build_so_cnn(k, DimPlan::Same);
        if (plan_text == "div2") return build_so_cnn(k, DimPlan::Div2);
        if (plan_text == "x2" || plan_text == "mul2") return build_so_cnn(k, DimPlan::Mul2);
      }
    }
  }
  throw ConfigError("unknown model '" + name + "' (expected fitnet or so-cnn-<k>-<same|div2|x2>)");
}

std::vector<std::string> builtin_model_names() {
  std::vector<std::string> names = {"fitnet"};
  for (std::size_t k = 1; k <= 5; ++k)
    for (const char* plan : {"same", "div2", "x2"})
      names.push_back("so-cnn-" + std::to_string(k) + "-" + plan);
  return names;
}

ModelSpec scaled_for_test(const ModelSpec& spec) {
  ModelSpec toy = spec;
  toy.name = spec.name + "-toy";
  auto shrink = [](std::size_t d) { return std::max<std::size_t>(2, d / 25); };
  if (!spec.backbone.empty()) {
    toy.input_height = 8;
    toy.input_width = 8;
    toy.input_channels = 3;
    toy.backbone = {{{2, 2}}, {{4, 4}}};
  }
  toy.fc_width = spec.fc_width ? std::max<std::size_t>(2, spec.fc_width / 100) : 0;
  if (spec.transition_dim) toy.transition_dim = 4;
  for (auto& d : toy.cdu.unit.o2t_dims) d = shrink(d);
  toy.cdu.unit.pv_dim = shrink(spec.cdu.unit.pv_dim);
  toy.classes = std::min<std::size_t>(spec.classes, 3);
  return toy;
}

namespace {

struct ParamPlan {
  std::string name;
  Shape shape;
  std::size_t fan_in = 0, fan_out = 0;
  bool bias = false;
  bool stiefel = false;
  bool backbone = false;
  std::string layer;
};

std::size_t classifier_inputs(const ModelSpec& spec) {
  switch (spec.head) {
    case HeadKind::Fc: return spec.fc_width;
    case HeadKind::MeanPool: return spec.fc_width ? spec.fc_width : spec.head_channels();
    case HeadKind::Cdu: return cdu_head_output_dim(spec.cdu, spec.head_channels());
  }
  return 0;
}

std::vector<ParamPlan> plan_params(const ModelSpec& spec) {
  spec.validate();
  std::vector<ParamPlan> plan;
  const std::size_t k = spec.kernel;
  std::size_t cin = spec.input_channels;
  for (std::size_t b = 0; b < spec.backbone.size(); ++b) {
    for (std::size_t i = 0; i < spec.backbone[b].channels.size(); ++i) {
      const std::size_t cout = spec.backbone[b].channels[i];
      const std::string name = "conv" + std::to_string(b + 1) + "." + std::to_string(i + 1);
      plan.push_back({name + ".w", Shape{k, k, cin, cout}, k * k * cin, k * k * cout, false,
                      false, true, name});
      plan.push_back({name + ".b", Shape{cout}, 0, 0, true, false, true, name});
      cin = cout;
    }
  }
  const std::size_t d = spec.backbone_channels();
  if (spec.transition_dim) {
    const std::size_t dt = *spec.transition_dim;
    plan.push_back({"transition.w", Shape{dt, d}, d, dt, false, false, false, "transition"});
    plan.push_back({"transition.b", Shape{dt}, 0, 0, true, false, false, "transition"});
  }
  switch (spec.head) {
    case HeadKind::Fc: {
      const std::size_t flat = spec.backbone.empty()
                                   ? spec.input_height * spec.input_channels
                                   : spec.backbone_sites() * d;
      plan.push_back({"fc.w", Shape{flat, spec.fc_width}, flat, spec.fc_width, false, false,
                      false, "fc"});
      plan.push_back({"fc.b", Shape{spec.fc_width}, 0, 0, true, false, false, "fc"});
      break;
    }
    case HeadKind::MeanPool:
      if (spec.fc_width) {
        plan.push_back({"fc.w", Shape{d, spec.fc_width}, d, spec.fc_width, false, false, false,
                        "fc"});
        plan.push_back({"fc.b", Shape{spec.fc_width}, 0, 0, true, false, false, "fc"});
      }
      break;
    case HeadKind::Cdu:
      for (const auto& p : cdu_head_params(spec.cdu, spec.head_channels())) {
        std::string layer = p.name.substr(0, p.name.rfind('.'));
        plan.push_back({p.name, Shape{p.rows, p.cols}, p.fan_in, p.fan_out, false, p.stiefel,
                        false, p.name});
      }
      break;
  }
  const std::size_t hin = classifier_inputs(spec);
  plan.push_back({"classifier.w", Shape{hin, spec.classes}, hin, spec.classes, false, false,
                  false, "classifier"});
  plan.push_back({"classifier.b", Shape{spec.classes}, 0, 0, true, false, false, "classifier"});
  return plan;
}

}  // namespace

std::vector<LayerParamCount> param_breakdown(const ModelSpec& spec) {
  std::vector<LayerParamCount> rows;
  for (const auto& p : plan_params(spec)) {
    if (!rows.empty() && rows.back().layer == p.layer) {
      rows.back().shape += " + " + p.shape.str();
      rows.back().count += p.shape.numel();
    } else {
      rows.push_back({p.layer, p.shape.str(), p.shape.numel()});
    }
  }
  return rows;
}

std::size_t count_params(const ModelSpec& spec) {
  std::size_t n = 0;
  for (const auto& row : param_breakdown(spec)) n += row.count;
  return n;
}

// ---------------------------------------------------------------------------

template <typename T>
Model<T>::Model(ModelSpec spec, Rng rng) : spec_(std::move(spec)) {
  for (const auto& p : plan_params(spec_)) {
    BasicTensor<T> value(p.shape);
    if (!p.bias) {
      Rng stream = rng.split("init:" + p.name);
      value = glorot_init<T>(p.shape, p.fan_in, p.fan_out, stream);
      if (p.stiefel) value = orthonormalize(value);
    }
    params_.add(p.name, std::move(value), p.stiefel ? Manifold::Stiefel : Manifold::Euclidean,
                p.backbone);
  }
}

template <typename T>
std::vector<Var<T>> Model<T>::bind(Graph<T>& g) const {
  std::vector<Var<T>> vars;
  vars.reserve(params_.size());
  for (const auto& p : params_.items()) vars.push_back(g.leaf(p.value, p.trainable));
  return vars;
}

template <typename T>
Var<T> Model<T>::forward(Var<T> input, std::span<const Var<T>> bound) const {
  if (bound.size() != params_.size()) throw ConfigError("model: parameter binding size mismatch");
  if (input.shape() != spec_.input_shape()) {
    throw ShapeError("model " + spec_.name + ": input " + input.shape().str() + ", expected " +
                     spec_.input_shape().str());
  }
  std::size_t next = 0;
  auto take = [&]() { return bound[next++]; };

  Var<T> x = input;
  for (const auto& block : spec_.backbone) {
    for (std::size_t i = 0; i < block.channels.size(); ++i) {
      Var<T> w = take();
      Var<T> b = take();
      x = relu(conv2d(x, w, b, 1, Padding::Same));
    }
    x = maxpool2x2(x);
  }

  if (spec_.head == HeadKind::Fc) {
    x = reshape(x, Shape{x.value().numel()});
    Var<T> w = take();
    Var<T> b = take();
    x = relu(dense(x, w, b));
  } else {
    if (x.shape().rank() == 3) {
      const auto& d = x.shape().dims();
      x = reshape(x, Shape{d[0] * d[1], d[2]});
    }
    if (spec_.transition_dim) {
      Var<T> w = take();
      Var<T> b = take();
      x = transition(x, w, b);
    }
    if (spec_.head == HeadKind::MeanPool) {
      x = mean_rows(x);
      if (spec_.fc_width) {
        Var<T> w = take();
        Var<T> b = take();
        x = relu(dense(x, w, b));
      }
    } else {
      const std::size_t n = cdu_head_params(spec_.cdu, spec_.head_channels()).size();
      x = cdu_head_forward(x, spec_.cdu, bound.subspan(next, n));
      next += n;
    }
  }
  Var<T> w = take();
  Var<T> b = take();
  return dense(x, w, b);
}

template <typename T>
BasicTensor<T> Model<T>::predict(const BasicTensor<T>& input) const {
  Graph<T> g;
  std::vector<Var<T>> vars;
  vars.reserve(params_.size());
  for (const auto& p : params_.items()) vars.push_back(g.constant(p.value));
  return forward(g.constant(input), vars).value();
}

template <typename T>
void Model<T>::collect_grads(const Graph<T>& g, std::span<const Var<T>> bound,
                             std::vector<BasicTensor<T>>& sink) const {
  if (sink.size() != params_.size()) {
    sink.clear();
    for (const auto& p : params_.items()) sink.emplace_back(p.value.shape());
  }
  for (std::size_t i = 0; i < bound.size(); ++i) {
    if (!g.requires_grad(bound[i])) continue;
    add_inplace(sink[i], g.grad(bound[i]));
  }
}

template class Model<float>;
template class Model<double>;

}  // namespace socnn
