#include "core/stgcn.hpp"

#include "json.hpp"

namespace engage {

const char* to_string(HeadMode mode) noexcept {
  return mode == HeadMode::kClass ? "kclass" : "binary_heads";
}

HeadMode parse_head_mode(const std::string& text) {
  if (text == "kclass") return HeadMode::kClass;
  if (text == "binary_heads") return HeadMode::kBinaryHeads;
  raise(ErrorCode::kConfig, "unknown head_mode '" + text + "' (expected kclass or binary_heads)");
}

ArchSpec ArchSpec::standard(int classes, HeadMode head_mode, std::vector<std::size_t> channels,
                            std::size_t kernel, double dropout, std::size_t nodes) {
  ArchSpec a;
  a.nodes = nodes;
  a.classes = classes;
  a.head_mode = head_mode;
  std::size_t c_in = a.in_channels;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    a.layers.push_back({c_in, channels[i], kernel, i > 0, dropout, true});
    c_in = channels[i];
  }
  return a;
}

void ArchSpec::validate() const {
  require(classes >= 2, ErrorCode::kValidation, "class count K must be >= 2");
  require(nodes >= 1, ErrorCode::kValidation, "node count must be positive");
  require(!layers.empty(), ErrorCode::kValidation, "network needs at least one layer");
  std::size_t c = in_channels;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::string where = "layer " + std::to_string(i);
    require(l.c_in > 0 && l.c_out > 0, ErrorCode::kValidation, where + ": channels must be positive");
    require(l.c_in == c, ErrorCode::kValidation, where + ": input channels do not chain");
    require(l.kernel % 2 == 1, ErrorCode::kValidation, where + ": temporal kernel must be odd");
    require(l.dropout >= 0.0 && l.dropout < 1.0, ErrorCode::kValidation,
            where + ": dropout must be in [0, 1)");
    c = l.c_out;
  }
}

std::string ArchSpec::to_json() const {
  nlohmann::json j;
  j["nodes"] = nodes;
  j["in_channels"] = in_channels;
  j["classes"] = classes;
  j["head_mode"] = to_string(head_mode);
  auto ls = nlohmann::json::array();
  for (const auto& l : layers) {
    ls.push_back({{"c_in", l.c_in}, {"c_out", l.c_out}, {"kernel", l.kernel},
                  {"residual", l.residual}, {"dropout", l.dropout}, {"has_mask", l.has_mask}});
  }
  j["layers"] = std::move(ls);
  return j.dump();
}

ArchSpec ArchSpec::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    ArchSpec a;
    a.nodes = j.at("nodes").get<std::size_t>();
    a.in_channels = j.at("in_channels").get<std::size_t>();
    a.classes = j.at("classes").get<int>();
    a.head_mode = parse_head_mode(j.at("head_mode").get<std::string>());
    for (const auto& l : j.at("layers")) {
      a.layers.push_back({l.at("c_in").get<std::size_t>(), l.at("c_out").get<std::size_t>(),
                          l.at("kernel").get<std::size_t>(), l.at("residual").get<bool>(),
                          l.at("dropout").get<double>(), l.at("has_mask").get<bool>()});
    }
    a.validate();
    return a;
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::kParse, std::string("bad architecture record: ") + e.what());
  }
}

Fingerprint architecture_fingerprint(const ArchSpec& arch, const FaceGraphSpec& graph) {
  std::string text = arch.to_json();
  text += "|graph:" + std::to_string(graph.node_count);
  for (const auto& [a, b] : graph.edges) text += ";" + std::to_string(a) + "-" + std::to_string(b);
  return sha256(text);
}

std::string layer_prefix(std::size_t layer) { return "layer" + std::to_string(layer + 1); }
std::string binary_head_prefix(std::size_t head) { return "head.bin." + std::to_string(head); }

template <class Real>
Tensor<Real> batch_from_sequences(std::span<const LandmarkSequence* const> seqs) {
  require(!seqs.empty(), ErrorCode::kValidation, "empty batch");
  const std::size_t T = seqs.front()->frames, N = seqs.front()->nodes;
  Tensor<Real> out({seqs.size(), 3, T, N});
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    const auto& s = *seqs[b];
    require(s.frames == T && s.nodes == N, ErrorCode::kValidation,
            "all sequences in a batch must share T and N");
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < 3; ++c) {
          const float v = s.at(t, n, c);
          require(std::isfinite(v), ErrorCode::kValidation,
                  "sequence " + s.sample_id + " has non-finite coordinates");
          out[((b * 3 + c) * T + t) * N + n] = static_cast<Real>(v);
        }
  }
  return out;
}

template Tensor<float> batch_from_sequences<float>(std::span<const LandmarkSequence* const>);
template Tensor<double> batch_from_sequences<double>(std::span<const LandmarkSequence* const>);

template <class Real>
StgcnNetwork<Real>::StgcnNetwork(FaceGraphSpec graph, ArchSpec arch, std::uint64_t seed)
    : graph_(std::move(graph)), arch_(std::move(arch)), seed_(seed) {
  tune_allocator();
  arch_.validate();
  require(graph_.node_count == arch_.nodes, ErrorCode::kValidation,
          "graph has " + std::to_string(graph_.node_count) + " nodes but the architecture expects " +
              std::to_string(arch_.nodes));
  support_ = graph_.support();
  const std::size_t N = arch_.nodes;

  auto uniform = [&](Shape shape, double fan_in) {
    Tensor<Real> t(std::move(shape));
    Rng rng(derive_seed(seed_, {blocks_.size()}));
    const double bound = 1.0 / std::sqrt(fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<Real>(dist(rng));
    return t;
  };
  auto add_bn = [&](const std::string& name, std::size_t features) {
    add_block(name + ".gamma", Tensor<Real>({features}, Real{1}));
    add_block(name + ".beta", Tensor<Real>({features}, Real{0}));
    stats_.emplace(name, ad::BatchNormStats<Real>(features));
  };

  add_bn("input_bn", arch_.in_channels * N);
  for (std::size_t l = 0; l < arch_.layers.size(); ++l) {
    const auto& spec = arch_.layers[l];
    const auto p = layer_prefix(l);
    add_block(p + ".spatial.weight", uniform({spec.c_out, spec.c_in}, static_cast<double>(spec.c_in)));
    add_block(p + ".spatial.bias", Tensor<Real>({spec.c_out}));
    if (spec.has_mask) add_block(p + ".mask", Tensor<Real>({N, N}, Real{1}));
    add_bn(p + ".spatial_bn", spec.c_out);
    add_block(p + ".temporal.weight",
              uniform({spec.c_out, spec.c_out, spec.kernel}, static_cast<double>(spec.c_out * spec.kernel)));
    add_block(p + ".temporal.bias", Tensor<Real>({spec.c_out}));
    add_bn(p + ".temporal_bn", spec.c_out);
    if (spec.residual && spec.c_in != spec.c_out) {
      add_block(p + ".residual.weight", uniform({spec.c_out, spec.c_in}, static_cast<double>(spec.c_in)));
      add_block(p + ".residual.bias", Tensor<Real>({spec.c_out}));
      add_bn(p + ".residual_bn", spec.c_out);
    }
  }
  const std::size_t C = arch_.pooled_channels();
  if (arch_.head_mode == HeadMode::kClass) {
    const auto K = static_cast<std::size_t>(arch_.classes);
    add_block("head.weight", uniform({K, C}, static_cast<double>(C)));
    add_block("head.bias", Tensor<Real>({K}));
  } else {
    for (std::size_t h = 0; h + 1 < static_cast<std::size_t>(arch_.classes); ++h) {
      add_block(binary_head_prefix(h) + ".weight", uniform({1, C}, static_cast<double>(C)));
      add_block(binary_head_prefix(h) + ".bias", Tensor<Real>({1}));
    }
  }
}

template <class Real>
std::size_t StgcnNetwork<Real>::add_block(std::string name, Tensor<Real> value) {
  index_[name] = blocks_.size();
  blocks_.emplace_back(std::move(name), std::move(value));
  return blocks_.size() - 1;
}

template <class Real>
std::vector<typename StgcnNetwork<Real>::Block*> StgcnNetwork<Real>::block_ptrs() {
  std::vector<Block*> out;
  for (auto& b : blocks_) out.push_back(&b);
  return out;
}

template <class Real>
typename StgcnNetwork<Real>::Block& StgcnNetwork<Real>::block(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) raise(ErrorCode::kValidation, "no parameter block named " + name);
  return blocks_[it->second];
}

template <class Real>
const typename StgcnNetwork<Real>::Block& StgcnNetwork<Real>::block(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) raise(ErrorCode::kValidation, "no parameter block named " + name);
  return blocks_[it->second];
}

template <class Real>
void StgcnNetwork<Real>::zero_grad() {
  for (auto& b : blocks_) b.zero_grad();
}

template <class Real>
void StgcnNetwork<Real>::freeze_backbone() {
  for (auto& b : blocks_) b.trainable = b.name.rfind("head", 0) == 0;
}

template <class Real>
ad::Var<Real> StgcnNetwork<Real>::bn(ad::Tape<Real>& tape, ad::Var<Real> x, const std::string& name,
                                     ad::Mode mode, ad::BnAxis axis) {
  return ad::batch_norm(x, tape.parameter(block(name + ".gamma")),
                        tape.parameter(block(name + ".beta")), stats_.at(name), mode, axis);
}

template <class Real>
ad::Var<Real> StgcnNetwork<Real>::input_norm(ad::Tape<Real>& tape, ad::Var<Real> x, ad::Mode mode) {
  return bn(tape, x, "input_bn", mode, ad::BnAxis::kChannelNode);
}

template <class Real>
ad::Var<Real> StgcnNetwork<Real>::layer_forward(ad::Tape<Real>& tape, std::size_t layer,
                                                ad::Var<Real> h, ad::Mode mode,
                                                std::uint64_t dropout_seed) {
  const auto& spec = arch_.layers.at(layer);
  const auto p = layer_prefix(layer);
  const std::size_t N = arch_.nodes;

  ad::Var<Real> mask = spec.has_mask ? tape.parameter(block(p + ".mask"))
                                     : tape.constant(Tensor<Real>({N, N}, Real{1}));
  auto adj = ad::masked_adjacency(mask, graph_);
  auto s = ad::channel_mix(h, tape.parameter(block(p + ".spatial.weight")),
                           tape.parameter(block(p + ".spatial.bias")));
  s = ad::node_mix(s, adj, support_);
  s = ad::relu(bn(tape, s, p + ".spatial_bn", mode));

  auto u = ad::temporal_conv(s, tape.parameter(block(p + ".temporal.weight")),
                             tape.parameter(block(p + ".temporal.bias")));
  u = bn(tape, u, p + ".temporal_bn", mode);
  if (spec.residual) {
    ad::Var<Real> r = h;
    if (spec.c_in != spec.c_out) {
      r = ad::channel_mix(h, tape.parameter(block(p + ".residual.weight")),
                          tape.parameter(block(p + ".residual.bias")));
      r = bn(tape, r, p + ".residual_bn", mode);
    }
    u = ad::add(u, r);
  }
  return ad::dropout(ad::relu(u), spec.dropout, mode, derive_seed(dropout_seed, {layer}));
}

template <class Real>
ad::Var<Real> StgcnNetwork<Real>::head_forward(ad::Tape<Real>& tape, ad::Var<Real> pooled) {
  if (arch_.head_mode == HeadMode::kClass) {
    return ad::linear(pooled, tape.parameter(block("head.weight")),
                      tape.parameter(block("head.bias")));
  }
  std::vector<ad::Var<Real>> heads;
  for (std::size_t h = 0; h + 1 < static_cast<std::size_t>(arch_.classes); ++h) {
    heads.push_back(ad::linear(pooled, tape.parameter(block(binary_head_prefix(h) + ".weight")),
                               tape.parameter(block(binary_head_prefix(h) + ".bias"))));
  }
  return ad::concat_columns(heads);
}

template <class Real>
typename StgcnNetwork<Real>::Output StgcnNetwork<Real>::forward(ad::Tape<Real>& tape,
                                                                const Tensor<Real>& input,
                                                                ad::Mode mode,
                                                                std::uint64_t dropout_seed,
                                                                bool input_requires_grad) {
  require(input.rank() == 4 && input.dim(1) == arch_.in_channels && input.dim(3) == arch_.nodes,
          ErrorCode::kShape, "network input must be (B, " + std::to_string(arch_.in_channels) +
                                 ", T, " + std::to_string(arch_.nodes) + "), got " +
                                 shape_string(input.shape()));
  for (std::size_t i = 0; i < input.size(); ++i) {
    if (!std::isfinite(static_cast<double>(input[i]))) {
      raise(ErrorCode::kValidation, "network input contains NaN or infinity");
    }
  }
  auto x = input_requires_grad ? tape.input(input) : tape.constant(input);
  auto h = input_norm(tape, x, mode);
  for (std::size_t l = 0; l < arch_.layers.size(); ++l) {
    h = layer_forward(tape, l, h, mode, dropout_seed);
  }
  auto pooled = ad::global_avg_pool(h);
  auto logits = head_forward(tape, pooled);
  return {logits, h, pooled};
}

template <class Real>
Tensor<Real> StgcnNetwork<Real>::predict_logits(const Tensor<Real>& input) {
  ad::Tape<Real> tape;
  tape.set_param_grads(ad::Tape<Real>::ParamGrads::kNone);
  return forward(tape, input, ad::Mode::kEval).logits.value();
}

template <class Real>
ParameterCount StgcnNetwork<Real>::count_parameters() const {
  ParameterCount c;
  for (const auto& b : blocks_) {
    c.total += b.value.size();
    if (b.trainable) c.trainable += b.value.size();
    c.blocks.emplace_back(b.name, b.value.size());
  }
  return c;
}

template <class Real>
void StgcnNetwork<Real>::append_records(Container& c, const std::string& prefix) const {
  for (const auto& b : blocks_) c.put(Record::from_tensor(prefix + "param." + b.name, b.value));
  for (const auto& [name, s] : stats_) {
    c.put(Record::from_tensor(prefix + "buffer." + name + ".running_mean", s.mean));
    c.put(Record::from_tensor(prefix + "buffer." + name + ".running_var", s.var));
  }
}

template <class Real>
void StgcnNetwork<Real>::load_records(const Container& c, const std::string& prefix) {
  for (auto& b : blocks_) {
    auto t = c.get(prefix + "param." + b.name).template to_tensor<Real>();
    require_shape(t.shape(), b.value.shape(), "checkpoint block " + b.name);
    b.value = std::move(t);
  }
  for (auto& [name, s] : stats_) {
    auto m = c.get(prefix + "buffer." + name + ".running_mean").template to_tensor<Real>();
    auto v = c.get(prefix + "buffer." + name + ".running_var").template to_tensor<Real>();
    require_shape(m.shape(), s.mean.shape(), "checkpoint buffer " + name);
    require_shape(v.shape(), s.var.shape(), "checkpoint buffer " + name);
    s.mean = std::move(m);
    s.var = std::move(v);
  }
}

template <class Real>
Container checkpoint_container(const StgcnNetwork<Real>& net, const std::string& resolved_config) {
  Container c;
  c.fingerprint = net.fingerprint();
  c.put(Record::from_text("meta.arch", net.arch().to_json()));
  c.put(Record::from_text("meta.config", resolved_config));
  c.put(Record::from_u64("meta.seed", net.seed()));
  net.append_records(c);
  return c;
}

template <class Real>
void save_checkpoint(const StgcnNetwork<Real>& net, const std::filesystem::path& path,
                     const std::string& resolved_config) {
  write_container(checkpoint_container(net, resolved_config), path);
}

template <class Real>
StgcnNetwork<Real> network_from_container(const Container& c, const FaceGraphSpec& graph,
                                          const std::optional<ArchSpec>& expected) {
  const auto arch = ArchSpec::from_json(c.get("meta.arch").to_text());
  if (architecture_fingerprint(arch, graph) != c.fingerprint) {
    raise(ErrorCode::kFingerprint,
          "checkpoint fingerprint does not match its architecture on this graph");
  }
  if (expected && architecture_fingerprint(*expected, graph) != c.fingerprint) {
    raise(ErrorCode::kFingerprint, "checkpoint architecture " + arch.to_json() +
                                       " does not match the expected " + expected->to_json());
  }
  StgcnNetwork<Real> net(graph, arch, c.get("meta.seed").to_u64());
  net.load_records(c);
  return net;
}

template <class Real>
StgcnNetwork<Real> load_checkpoint(const std::filesystem::path& path, const FaceGraphSpec& graph,
                                   const std::optional<ArchSpec>& expected) {
  return network_from_container<Real>(read_container(path), graph, expected);
}

template class StgcnNetwork<float>;
template class StgcnNetwork<double>;
template void save_checkpoint(const StgcnNetwork<float>&, const std::filesystem::path&, const std::string&);
template void save_checkpoint(const StgcnNetwork<double>&, const std::filesystem::path&, const std::string&);
template Container checkpoint_container(const StgcnNetwork<float>&, const std::string&);
template Container checkpoint_container(const StgcnNetwork<double>&, const std::string&);
template StgcnNetwork<float> network_from_container(const Container&, const FaceGraphSpec&, const std::optional<ArchSpec>&);
template StgcnNetwork<double> network_from_container(const Container&, const FaceGraphSpec&, const std::optional<ArchSpec>&);
template StgcnNetwork<float> load_checkpoint(const std::filesystem::path&, const FaceGraphSpec&, const std::optional<ArchSpec>&);
template StgcnNetwork<double> load_checkpoint(const std::filesystem::path&, const FaceGraphSpec&, const std::optional<ArchSpec>&);

}  // namespace engage
