#include "socnn/cdu.hpp"

#include <sstream>

namespace socnn {

void CduConfig::validate() const {
  if (pv_dim == 0) throw ConfigError("cdu: pv_dim must be >= 1");
  for (std::size_t d : o2t_dims)
    if (d == 0) throw ConfigError("cdu: O2T dimensions must be >= 1");
  if (!relu_after.empty() && relu_after.size() != o2t_dims.size() + 2) {
    throw ConfigError("cdu: relu_after needs " + std::to_string(o2t_dims.size() + 2) +
                      " flags (Cov, each O2T, PV), got " + std::to_string(relu_after.size()));
  }
  if (robust && !(alpha > 0.0)) throw ConfigError("cdu: alpha must be positive");
}

std::vector<bool> CduConfig::relu_flags() const {
  if (!relu_after.empty()) return relu_after;
  std::vector<bool> flags(o2t_dims.size() + 2, false);
  flags.back() = true;
  return flags;
}

std::string FusionSpec::str() const {
  std::string s = stage == FusionStage::Vector ? "V-" : "D-";
  switch (method) {
    case FusionMethod::Sum: return s + "sum";
    case FusionMethod::Average: return s + "avg";
    case FusionMethod::Concat: return s + "concat";
  }
  return s;
}

FusionSpec FusionSpec::parse(const std::string& text) {
  FusionSpec f;
  if (text.size() < 3 || text[1] != '-') throw ConfigError("fusion: cannot parse '" + text + "'");
  if (text[0] == 'V' || text[0] == 'v') {
    f.stage = FusionStage::Vector;
  } else if (text[0] == 'D' || text[0] == 'd') {
    f.stage = FusionStage::Descriptor;
  } else {
    throw ConfigError("fusion: stage must be V or D in '" + text + "'");
  }
  const std::string m = text.substr(2);
  if (m == "sum") {
    f.method = FusionMethod::Sum;
  } else if (m == "avg" || m == "average") {
    f.method = FusionMethod::Average;
  } else if (m == "concat") {
    f.method = FusionMethod::Concat;
  } else {
    throw ConfigError("fusion: method must be sum, avg or concat in '" + text + "'");
  }
  return f;
}

std::vector<CduLayer> build_cdu(const CduConfig& cfg, std::size_t input_channels) {
  cfg.validate();
  if (input_channels == 0) throw ConfigError("cdu: input has no channels");
  const auto relu = cfg.relu_flags();
  std::vector<CduLayer> chain;
  std::size_t side = input_channels + (cfg.mean_augment ? 1 : 0);
  chain.push_back({CduLayerKind::Cov, input_channels, side, relu[0]});
  for (std::size_t i = 0; i < cfg.o2t_dims.size(); ++i) {
    chain.push_back({CduLayerKind::O2T, side, cfg.o2t_dims[i], relu[i + 1]});
    side = cfg.o2t_dims[i];
  }
  chain.push_back({CduLayerKind::PV, side, cfg.pv_dim, relu.back()});
  return chain;
}

std::string describe_chain(const std::vector<CduLayer>& chain) {
  std::ostringstream os;
  for (std::size_t i = 0; i < chain.size(); ++i) {
    if (i) os << '-';
    switch (chain[i].kind) {
      case CduLayerKind::Cov: os << "Cov(" << chain[i].dout << ')'; break;
      case CduLayerKind::O2T: os << "O2T(" << chain[i].dout << ')'; break;
      case CduLayerKind::PV: os << "PV(" << chain[i].dout << ')'; break;
    }
  }
  return os.str();
}

namespace {

std::size_t group_width(const CduHeadSpec& spec, std::size_t input_channels) {
  if (spec.groups == 0) throw ConfigError("cdu: group count must be >= 1");
  if (input_channels % spec.groups != 0) {
    throw ConfigError("cdu: " + std::to_string(spec.groups) + " groups do not divide " +
                      std::to_string(input_channels) + " channels into equal sizes");
  }
  return input_channels / spec.groups;
}

std::size_t descriptor_side(const std::vector<CduLayer>& chain) {
  return chain[chain.size() - 2].dout;
}

}  // namespace

std::vector<CduParamShape> cdu_head_params(const CduHeadSpec& spec, std::size_t input_channels) {
  const std::size_t width = group_width(spec, input_channels);
  const auto chain = build_cdu(spec.unit, width);
  const bool vector_stage = spec.fusion.stage == FusionStage::Vector;
  std::vector<CduParamShape> out;
  for (std::size_t g = 0; g < spec.groups; ++g) {
    const std::string prefix = spec.groups > 1 ? "cdu" + std::to_string(g + 1) + "." : "cdu.";
    std::size_t o2t_index = 0;
    for (const auto& layer : chain) {
      if (layer.kind == CduLayerKind::O2T) {
        out.push_back({prefix + "o2t" + std::to_string(++o2t_index), layer.dout, layer.din,
                       layer.din, layer.dout, spec.unit.orthonormal_o2t});
      } else if (layer.kind == CduLayerKind::PV && vector_stage) {
        out.push_back({prefix + "pv", layer.din, layer.dout, layer.din, layer.dout, false});
      }
    }
  }
  if (!vector_stage) {
    std::size_t side = descriptor_side(chain);
    if (spec.fusion.method == FusionMethod::Concat) side *= spec.groups;
    out.push_back({"cdu.fused_pv", side, spec.unit.pv_dim, side, spec.unit.pv_dim, false});
  }
  return out;
}

std::size_t cdu_head_output_dim(const CduHeadSpec& spec, std::size_t input_channels) {
  group_width(spec, input_channels);
  if (spec.fusion.stage == FusionStage::Vector && spec.fusion.method == FusionMethod::Concat) {
    return spec.groups * spec.unit.pv_dim;
  }
  return spec.unit.pv_dim;
}

// ---------------------------------------------------------------------------

template <typename T>
std::vector<BasicTensor<T>> split_channels(const BasicTensor<T>& x, std::size_t n) {
  require_rank(x.shape(), 2, "split_channels");
  CduHeadSpec probe;
  probe.groups = n;
  const std::size_t width = group_width(probe, x.cols());
  std::vector<BasicTensor<T>> out;
  for (std::size_t g = 0; g < n; ++g) {
    BasicTensor<T> part(Shape{x.rows(), width});
    for (std::size_t k = 0; k < x.rows(); ++k)
      for (std::size_t j = 0; j < width; ++j) part(k, j) = x(k, g * width + j);
    out.push_back(std::move(part));
  }
  return out;
}

template <typename T>
std::vector<Var<T>> split_channels(Var<T> x, std::size_t n) {
  require_rank(x.shape(), 2, "split_channels");
  CduHeadSpec probe;
  probe.groups = n;
  const std::size_t width = group_width(probe, x.shape()[1]);
  if (n == 1) return {x};
  std::vector<Var<T>> out;
  for (std::size_t g = 0; g < n; ++g) out.push_back(slice_cols(x, g * width, (g + 1) * width));
  return out;
}

namespace {

void require_equal_shapes(std::span<const Shape> shapes, const char* what) {
  for (const auto& s : shapes)
    if (s != shapes[0]) {
      throw ShapeError(std::string(what) + ": sum/avg need equal shapes, got " +
                       shapes[0].str() + " and " + s.str());
    }
}

}  // namespace

template <typename T>
BasicTensor<T> fuse_vectors(std::span<const BasicTensor<T>> vs, FusionMethod method) {
  if (vs.empty()) throw ShapeError("fuse_vectors: no inputs");
  for (const auto& v : vs) require_rank(v.shape(), 1, "fuse_vectors");
  if (method == FusionMethod::Concat) {
    std::vector<T> data;
    for (const auto& v : vs) data.insert(data.end(), v.data().begin(), v.data().end());
    const std::size_t n = data.size();
    return BasicTensor<T>(Shape{n}, std::move(data));
  }
  std::vector<Shape> shapes;
  for (const auto& v : vs) shapes.push_back(v.shape());
  require_equal_shapes(shapes, "fuse_vectors");
  BasicTensor<T> out = vs[0];
  for (std::size_t i = 1; i < vs.size(); ++i) add_inplace(out, vs[i]);
  if (method == FusionMethod::Average) out = scale(out, T{1} / static_cast<T>(vs.size()));
  return out;
}

template <typename T>
Var<T> fuse_vectors(std::span<const Var<T>> vs, FusionMethod method) {
  if (vs.empty()) throw ShapeError("fuse_vectors: no inputs");
  for (const auto& v : vs) require_rank(v.shape(), 1, "fuse_vectors");
  if (vs.size() == 1) return vs[0];
  if (method == FusionMethod::Concat) return concat(vs);
  std::vector<Shape> shapes;
  for (const auto& v : vs) shapes.push_back(v.shape());
  require_equal_shapes(shapes, "fuse_vectors");
  Var<T> out = vs[0];
  for (std::size_t i = 1; i < vs.size(); ++i) out = add(out, vs[i]);
  if (method == FusionMethod::Average) out = scale(out, T{1} / static_cast<T>(vs.size()));
  return out;
}

template <typename T>
BasicTensor<T> fuse_descriptors(std::span<const BasicTensor<T>> ms, FusionMethod method) {
  if (ms.empty()) throw ShapeError("fuse_descriptors: no inputs");
  for (const auto& m : ms) {
    require_rank(m.shape(), 2, "fuse_descriptors");
    if (m.rows() != m.cols()) throw ShapeError("fuse_descriptors: descriptor not square");
  }
  if (method == FusionMethod::Concat) {
    std::size_t total = 0;
    for (const auto& m : ms) total += m.rows();
    BasicTensor<T> out(Shape{total, total});
    std::size_t offset = 0;
    for (const auto& m : ms) {
      for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out(offset + i, offset + j) = m(i, j);
      offset += m.rows();
    }
    return out;
  }
  std::vector<Shape> shapes;
  for (const auto& m : ms) shapes.push_back(m.shape());
  require_equal_shapes(shapes, "fuse_descriptors");
  BasicTensor<T> out = ms[0];
  for (std::size_t i = 1; i < ms.size(); ++i) add_inplace(out, ms[i]);
  if (method == FusionMethod::Average) out = scale(out, T{1} / static_cast<T>(ms.size()));
  return out;
}

template <typename T>
Var<T> fuse_descriptors(std::span<const Var<T>> ms, FusionMethod method) {
  if (ms.empty()) throw ShapeError("fuse_descriptors: no inputs");
  for (const auto& m : ms) {
    require_rank(m.shape(), 2, "fuse_descriptors");
    if (m.shape()[0] != m.shape()[1]) throw ShapeError("fuse_descriptors: descriptor not square");
  }
  if (ms.size() == 1) return ms[0];
  if (method == FusionMethod::Concat) return block_diag(ms);
  std::vector<Shape> shapes;
  for (const auto& m : ms) shapes.push_back(m.shape());
  require_equal_shapes(shapes, "fuse_descriptors");
  Var<T> out = ms[0];
  for (std::size_t i = 1; i < ms.size(); ++i) out = add(out, ms[i]);
  if (method == FusionMethod::Average) out = scale(out, T{1} / static_cast<T>(ms.size()));
  return out;
}

template <typename T>
Var<T> cdu_descriptor(Var<T> x, const CduConfig& cfg, const std::vector<CduLayer>& chain,
                      std::span<const Var<T>> o2t_weights) {
  CovLayerOptions cov{cfg.mean_augment, cfg.beta, cfg.robust, cfg.alpha};
  Var<T> m = cov_layer(x, cov);
  if (chain.front().relu) m = relu(m);
  std::size_t w = 0;
  for (const auto& layer : chain) {
    if (layer.kind != CduLayerKind::O2T) continue;
    if (w >= o2t_weights.size()) throw ConfigError("cdu: missing O2T weights");
    m = o2t(m, o2t_weights[w++]);
    if (layer.relu) m = relu(m);
  }
  if (w != o2t_weights.size()) throw ConfigError("cdu: too many O2T weights");
  return m;
}

template <typename T>
Var<T> cdu_forward(Var<T> x, const CduConfig& cfg, const std::vector<CduLayer>& chain,
                   std::span<const Var<T>> o2t_weights, Var<T> pv_weight) {
  Var<T> v = pv(cdu_descriptor(x, cfg, chain, o2t_weights), pv_weight);
  if (chain.back().relu) v = relu(v);
  return v;
}

template <typename T>
Var<T> cdu_head_forward(Var<T> x, const CduHeadSpec& spec, std::span<const Var<T>> params) {
  require_rank(x.shape(), 2, "cdu_head_forward");
  const std::size_t width = group_width(spec, x.shape()[1]);
  const auto chain = build_cdu(spec.unit, width);
  const std::size_t k = spec.unit.o2t_dims.size();
  const bool vector_stage = spec.fusion.stage == FusionStage::Vector;
  const std::size_t per_group = k + (vector_stage ? 1 : 0);
  const std::size_t expected = per_group * spec.groups + (vector_stage ? 0 : 1);
  if (params.size() != expected) {
    throw ConfigError("cdu head: expected " + std::to_string(expected) + " parameters, got " +
                      std::to_string(params.size()));
  }
  const auto groups = split_channels(x, spec.groups);
  std::vector<Var<T>> outs;
  for (std::size_t g = 0; g < spec.groups; ++g) {
    auto weights = params.subspan(g * per_group, per_group);
    if (vector_stage) {
      outs.push_back(cdu_forward(groups[g], spec.unit, chain, weights.first(k), weights[k]));
    } else {
      outs.push_back(cdu_descriptor(groups[g], spec.unit, chain, weights.first(k)));
    }
  }
  if (vector_stage) return fuse_vectors(std::span<const Var<T>>(outs), spec.fusion.method);
  Var<T> fused = fuse_descriptors(std::span<const Var<T>>(outs), spec.fusion.method);
  Var<T> v = pv(fused, params.back());
  if (chain.back().relu) v = relu(v);
  return v;
}

#define SOCNN_INSTANTIATE(T)                                                                    \
  template std::vector<BasicTensor<T>> split_channels(const BasicTensor<T>&, std::size_t);      \
  template std::vector<Var<T>> split_channels(Var<T>, std::size_t);                             \
  template BasicTensor<T> fuse_vectors(std::span<const BasicTensor<T>>, FusionMethod);          \
  template Var<T> fuse_vectors(std::span<const Var<T>>, FusionMethod);                          \
  template BasicTensor<T> fuse_descriptors(std::span<const BasicTensor<T>>, FusionMethod);      \
  template Var<T> fuse_descriptors(std::span<const Var<T>>, FusionMethod);                      \
  template Var<T> cdu_descriptor(Var<T>, const CduConfig&, const std::vector<CduLayer>&,        \
                                 std::span<const Var<T>>);                                      \
  template Var<T> cdu_forward(Var<T>, const CduConfig&, const std::vector<CduLayer>&,           \
                              std::span<const Var<T>>, Var<T>);                                 \
  template Var<T> cdu_head_forward(Var<T>, const CduHeadSpec&, std::span<const Var<T>>);

SOCNN_INSTANTIATE(float)
SOCNN_INSTANTIATE(double)

#undef SOCNN_INSTANTIATE

}  // namespace socnn
