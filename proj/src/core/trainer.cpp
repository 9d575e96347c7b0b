#include "core/trainer.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "core/binary_io.hpp"
#include "core/random.hpp"
#include "json.hpp"

namespace engage {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kDropoutStream = 2;
constexpr std::uint64_t kInitStream = 3;
constexpr std::uint64_t kHeadStream = 4;

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

// The embedded config identifies the run, so invocation-only settings (the
// resume flag and the output directory) are normalized away.
std::string run_identity(const RunConfig& cfg) {
  RunConfig c = cfg;
  c.train.resume = false;
  c.paths.out_dir.clear();
  return c.to_json();
}

std::vector<double> class_weights(std::span<const int> labels, int classes, bool enabled) {
  std::vector<double> w(static_cast<std::size_t>(classes), 1.0);
  if (!enabled) return w;
  std::vector<std::size_t> counts(w.size(), 0);
  for (int y : labels) ++counts[static_cast<std::size_t>(y)];
  for (std::size_t k = 0; k < w.size(); ++k) {
    w[k] = counts[k] ? static_cast<double>(labels.size()) /
                           (static_cast<double>(classes) * static_cast<double>(counts[k]))
                     : 0.0;
  }
  return w;
}

template <class Real>
Tensor<Real> binary_targets(std::span<const int> labels, int classes) {
  const std::size_t B = labels.size(), H = static_cast<std::size_t>(classes - 1);
  Tensor<Real> t({B, H});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < H; ++h) t[b * H + h] = labels[b] > static_cast<int>(h) ? Real{1} : Real{0};
  return t;
}

template <class Real>
bool grads_finite(const std::vector<ad::ParameterBlock<Real>*>& params) {
  for (const auto* p : params) {
    if (!p->trainable) continue;
    for (std::size_t i = 0; i < p->grad.size(); ++i)
      if (!std::isfinite(static_cast<double>(p->grad[i]))) return false;
  }
  return true;
}

void require_labels(const Dataset& d, int classes, const char* what) {
  require(!d.empty(), ErrorCode::kValidation, std::string("empty ") + what + " split");
  for (int y : d.labels) {
    require(y >= 0 && y < classes, ErrorCode::kValidation,
            std::string(what) + " label " + std::to_string(y) + " outside 0.." +
                std::to_string(classes - 1));
  }
}

// One training phase: the per-batch loss and the validation pass differ,
// the schedule, logging, snapshots and resume are shared.
template <class Real>
struct Phase {
  std::string prefix;
  ArchSpec arch;
  bool frozen_backbone = false;
  std::function<double(StgcnNetwork<Real>&, std::span<const std::size_t>, std::uint64_t)> batch_loss;
  std::function<EvalReport(StgcnNetwork<Real>&)> validate;
};

std::string log_text(const std::vector<EpochLog>& log) {
  std::string s;
  for (const auto& e : log) s += e.to_json() + "\n";
  return s;
}

std::vector<EpochLog> parse_log(const std::string& text) {
  std::vector<EpochLog> log;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto end = text.find('\n', pos);
    const auto line = text.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
    pos = end == std::string::npos ? text.size() : end + 1;
    if (line.empty()) continue;
    const auto j = json::parse(line);
    EpochLog e;
    e.epoch = j.at("epoch").get<std::size_t>();
    e.lr = j.at("lr").get<double>();
    e.train_loss = j.at("train_loss").get<double>();
    if (!j.at("val_accuracy").is_null()) e.val_accuracy = j.at("val_accuracy").get<double>();
    if (j.contains("val_mae") && !j.at("val_mae").is_null()) e.val_mae = j.at("val_mae").get<double>();
    e.wall_ms = j.at("wall_ms").get<double>();
    log.push_back(e);
  }
  return log;
}

template <class Real>
void put_adam(Container& c, const ad::AdamState<Real>& adam, const StgcnNetwork<Real>& net) {
  c.put(Record::from_u64("adam.step", adam.step));
  if (adam.m.empty()) return;
  for (std::size_t i = 0; i < net.blocks().size(); ++i) {
    c.put(Record::from_tensor("adam.m." + net.blocks()[i].name, adam.m[i]));
    c.put(Record::from_tensor("adam.v." + net.blocks()[i].name, adam.v[i]));
  }
}

template <class Real>
void get_adam(const Container& c, ad::AdamState<Real>& adam, const StgcnNetwork<Real>& net) {
  adam.step = c.get("adam.step").to_u64();
  adam.m.clear();
  adam.v.clear();
  if (!c.find("adam.m." + net.blocks().front().name)) return;
  for (const auto& b : net.blocks()) {
    adam.m.push_back(c.get("adam.m." + b.name).template to_tensor<Real>());
    adam.v.push_back(c.get("adam.v." + b.name).template to_tensor<Real>());
    require_shape(adam.m.back().shape(), b.value.shape(), "stored optimizer moment");
  }
}

template <class Real>
TrainResult<Real> run_phase(const RunConfig& cfg, StgcnNetwork<Real> net, std::size_t train_count,
                            const Phase<Real>& phase, const TrainHooks& hooks) {
  const auto& tc = cfg.train;
  const std::string identity = run_identity(cfg);
  std::optional<fs::path> dir;
  if (!cfg.paths.out_dir.empty()) {
    dir = fs::path(cfg.paths.out_dir);
    std::error_code ec;
    fs::create_directories(*dir, ec);
    require(!ec, ErrorCode::kIo, "cannot create output directory " + dir->string());
  }
  const auto last_path = dir ? *dir / (phase.prefix + "last.stgc") : fs::path();
  const auto best_path = dir ? *dir / (phase.prefix + "best.stgc") : fs::path();
  const auto log_path = dir ? *dir / (phase.prefix + "metrics.jsonl") : fs::path();

  ad::AdamState<Real> adam;
  std::size_t start = 0;
  std::vector<EpochLog> log;
  StgcnNetwork<Real> best = net;
  std::size_t best_epoch = 0;
  double best_acc = -1.0;
  double best_mae = std::numeric_limits<double>::infinity();

  if (tc.resume && dir && fs::exists(last_path)) {
    const auto c = read_container(last_path);
    if (c.get("meta.config").to_text() != identity) {
      raise(ErrorCode::kConfig, "cannot resume " + last_path.string() +
                                    ": it was written with a different config");
    }
    net = network_from_container<Real>(c, net.graph(), phase.arch);
    best = net;
    best.load_records(c, "best.");
    if (phase.frozen_backbone) {
      net.freeze_backbone();
      best.freeze_backbone();
    }
    get_adam(c, adam, net);
    start = c.get("train.next_epoch").to_u64();
    log = parse_log(c.get("train.log").to_text());
    best_epoch = c.get("train.best_epoch").to_u64();
    best_acc = c.get("train.best_accuracy").to_f64();
    best_mae = c.get("train.best_mae").to_f64();
  }

  auto params = net.block_ptrs();
  for (std::size_t epoch = start; epoch < tc.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at(tc, epoch);
    const auto order = shuffled_order(train_count, derive_seed(tc.seed, {kShuffleStream, epoch}));
    double loss_sum = 0.0;
    std::size_t batch = 0;
    for (std::size_t begin = 0; begin < train_count; begin += tc.batch_size, ++batch) {
      const std::size_t end = std::min(train_count, begin + tc.batch_size);
      std::span<const std::size_t> idx(order.data() + begin, end - begin);
      net.zero_grad();
      const double loss =
          phase.batch_loss(net, idx, derive_seed(tc.seed, {kDropoutStream, epoch, batch}));
      if (!std::isfinite(loss) || !grads_finite(params)) {
        raise(ErrorCode::kNumeric, "training diverged: non-finite loss or gradient at epoch " +
                                       std::to_string(epoch) + ", batch " +
                                       std::to_string(batch) + " (lr " + std::to_string(lr) + ")");
      }
      ad::adam_step(params, adam, lr);
      loss_sum += loss * static_cast<double>(idx.size());
    }

    EpochLog e;
    e.epoch = epoch;
    e.lr = lr;
    e.train_loss = loss_sum / static_cast<double>(train_count);
    bool improved = false;
    if ((epoch + 1) % tc.eval_every == 0 || epoch + 1 == tc.epochs) {
      const auto r = phase.validate(net);
      e.val_accuracy = r.accuracy;
      e.val_mae = r.mae;
      if (r.accuracy > best_acc || (r.accuracy == best_acc && r.mae < best_mae)) {
        best = net;
        best_epoch = epoch;
        best_acc = r.accuracy;
        best_mae = r.mae;
        improved = true;
      }
    }
    if (!tc.deterministic) {
      e.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }
    log.push_back(e);

    if (dir) {
      auto c = checkpoint_container(net, identity);
      put_adam(c, adam, net);
      c.put(Record::from_u64("train.next_epoch", epoch + 1));
      c.put(Record::from_text("train.log", log_text(log)));
      c.put(Record::from_u64("train.best_epoch", best_epoch));
      c.put(Record::from_f64("train.best_accuracy", best_acc));
      c.put(Record::from_f64("train.best_mae", best_mae));
      best.append_records(c, "best.");
      write_container(c, last_path);
      write_file_atomic(log_path, log_text(log));
      if (improved || !fs::exists(best_path)) save_checkpoint(best, best_path, identity);
    }
    if (hooks.on_epoch) hooks.on_epoch(e);
    if (hooks.stop_after_epoch && epoch >= *hooks.stop_after_epoch) break;
    if (hooks.stop_when && hooks.stop_when(e)) break;
  }
  return TrainResult<Real>{std::move(best), std::move(net), best_epoch, best_acc, best_mae, std::move(log)};
}

template <class Real>
Tensor<Real> gather_rows(const Tensor<Real>& m, std::span<const std::size_t> idx) {
  const std::size_t C = m.dim(1);
  Tensor<Real> out({idx.size(), C});
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::copy_n(m.data() + idx[r] * C, C, out.data() + r * C);
  return out;
}

template <class Real>
std::vector<const LandmarkSequence*> pick(const Dataset& d, std::span<const std::size_t> idx) {
  std::vector<const LandmarkSequence*> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(&d.samples[i]);
  return out;
}

// Pooled last-layer features (S, C) in eval mode.
template <class Real>
Tensor<Real> pooled_features(StgcnNetwork<Real>& net, const Dataset& d, std::size_t batch_size) {
  const std::size_t C = net.arch().pooled_channels();
  Tensor<Real> out({d.size(), C});
  std::vector<std::size_t> all(d.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  for (std::size_t begin = 0; begin < d.size(); begin += batch_size) {
    const std::size_t end = std::min(d.size(), begin + batch_size);
    const auto ptrs = pick<Real>(d, std::span<const std::size_t>(all.data() + begin, end - begin));
    const auto x = batch_from_sequences<Real>(std::span<const LandmarkSequence* const>(ptrs));
    ad::Tape<Real> tape;
    tape.set_param_grads(ad::Tape<Real>::ParamGrads::kNone);
    const auto& p = net.forward(tape, x, ad::Mode::kEval).pooled.value();
    std::copy_n(p.data(), p.size(), out.data() + begin * C);
  }
  return out;
}

}  // namespace

Dataset load_split(const DatasetManifest& manifest, Split split, const PreprocessConfig& cfg) {
  Dataset d;
  for (const auto& entry : manifest.split(split)) {
    auto seq = read_sequence(entry.path);
    seq.label = entry.label;
    d.samples.push_back(preprocess(seq, cfg));
    d.labels.push_back(entry.label);
  }
  return d;
}

Dataset make_dataset(const std::vector<LandmarkSequence>& samples, const PreprocessConfig& cfg) {
  Dataset d;
  for (const auto& s : samples) {
    require(s.label.has_value(), ErrorCode::kValidation, "sample " + s.sample_id + " has no label");
    d.samples.push_back(preprocess(s, cfg));
    d.labels.push_back(*s.label);
  }
  return d;
}

double lr_at(const TrainConfig& cfg, std::size_t epoch) {
  return cfg.base_lr * std::pow(cfg.decay, static_cast<double>(epoch / cfg.decay_every));
}

std::string EpochLog::to_json() const {
  ordered_json j;
  j["epoch"] = epoch;
  j["lr"] = lr;
  j["train_loss"] = train_loss;
  j["val_accuracy"] = val_accuracy ? ordered_json(*val_accuracy) : ordered_json(nullptr);
  j["val_mae"] = val_mae ? ordered_json(*val_mae) : ordered_json(nullptr);
  j["wall_ms"] = wall_ms;
  return j.dump();
}

template <class Real>
Predictions predictions_from_logits(const Tensor<Real>& logits, HeadMode mode) {
  Predictions p;
  const std::size_t B = logits.dim(0), H = logits.dim(1);
  if (mode == HeadMode::kClass) {
    const auto probs = ad::softmax_rows(logits.template cast<double>());
    for (std::size_t b = 0; b < B; ++b) {
      std::vector<double> row(probs.data() + b * H, probs.data() + (b + 1) * H);
      p.predicted.push_back(argmax_lowest(row));
      p.probs.push_back(std::move(row));
    }
  } else {
    for (std::size_t b = 0; b < B; ++b) {
      std::vector<double> gt(H);
      for (std::size_t h = 0; h < H; ++h) gt[h] = ad::sigmoid(static_cast<double>(logits[b * H + h]));
      auto d = decode_ordinal(gt);
      p.predicted.push_back(d.predicted);
      p.probs.push_back(std::move(d.probs));
    }
  }
  return p;
}

template <class Real>
Predictions predict(StgcnNetwork<Real>& net, const Dataset& data, std::size_t batch_size) {
  require(batch_size > 0, ErrorCode::kValidation, "batch size must be positive");
  Predictions all;
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    const std::size_t end = std::min(data.size(), begin + batch_size);
    const auto ptrs = pick<Real>(data, std::span<const std::size_t>(idx.data() + begin, end - begin));
    const auto x = batch_from_sequences<Real>(std::span<const LandmarkSequence* const>(ptrs));
    auto p = predictions_from_logits(net.predict_logits(x), net.arch().head_mode);
    all.predicted.insert(all.predicted.end(), p.predicted.begin(), p.predicted.end());
    for (auto& r : p.probs) all.probs.push_back(std::move(r));
  }
  return all;
}

EvalReport evaluate_predictions(const Predictions& p, std::span<const int> labels, int classes) {
  require(p.predicted.size() == labels.size(), ErrorCode::kShape, "prediction count != label count");
  require(!labels.empty(), ErrorCode::kValidation, "nothing to evaluate");
  EvalReport r;
  r.count = labels.size();
  r.confusion = confusion(labels, p.predicted, classes);
  r.accuracy = accuracy(r.confusion);
  r.mae = mean_absolute_error(labels, p.predicted);
  if (classes == 2) {
    std::vector<double> scores;
    for (const auto& row : p.probs) scores.push_back(row[1]);
    try {
      r.auc_roc = auc_roc(scores, labels);
      r.auc_pr = auc_pr(scores, labels);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kUndefinedMetric) throw;
    }
  }
  r.predictions = p;
  return r;
}

std::string EvalReport::to_json() const {
  ordered_json j;
  j["count"] = count;
  j["accuracy"] = accuracy;
  j["mae"] = mae;
  ordered_json rows = ordered_json::array();
  for (int t = 0; t < confusion.classes; ++t) {
    ordered_json row = ordered_json::array();
    for (int q = 0; q < confusion.classes; ++q) row.push_back(confusion.at(t, q));
    rows.push_back(std::move(row));
  }
  j["confusion"] = std::move(rows);
  if (confusion.classes == 2) {
    j["auc_roc"] = auc_roc ? ordered_json(*auc_roc) : ordered_json(nullptr);
    j["auc_pr"] = auc_pr ? ordered_json(*auc_pr) : ordered_json(nullptr);
  }
  return j.dump();
}

template <class Real>
EvalReport evaluate(StgcnNetwork<Real>& net, const Dataset& data, std::size_t batch_size) {
  return evaluate_predictions(predict(net, data, batch_size), data.labels, net.arch().classes);
}

template <class Real>
TrainResult<Real> train_base(const RunConfig& cfg, const FaceGraphSpec& graph, const Dataset& train,
                             const Dataset& val, const TrainHooks& hooks) {
  cfg.validate();
  const ArchSpec arch = cfg.arch();
  require_labels(train, arch.classes, "train");
  require_labels(val, arch.classes, "val");
  StgcnNetwork<Real> net(graph, arch, derive_seed(cfg.train.seed, {kInitStream}));
  const auto weights = class_weights(train.labels, arch.classes, cfg.train.class_weighting);

  Phase<Real> phase;
  phase.arch = arch;
  phase.batch_loss = [&](StgcnNetwork<Real>& n, std::span<const std::size_t> idx, std::uint64_t seed) {
    const auto ptrs = pick<Real>(train, idx);
    const auto x = batch_from_sequences<Real>(std::span<const LandmarkSequence* const>(ptrs));
    std::vector<int> y;
    std::vector<double> w;
    for (auto i : idx) {
      y.push_back(train.labels[i]);
      w.push_back(weights[static_cast<std::size_t>(train.labels[i])]);
    }
    ad::Tape<Real> tape;
    auto out = n.forward(tape, x, ad::Mode::kTrain, seed);
    auto loss = arch.head_mode == HeadMode::kClass
                    ? ad::softmax_xent(out.logits, y, w).loss
                    : ad::sigmoid_bce(out.logits, binary_targets<Real>(y, arch.classes)).loss;
    tape.backward(loss);
    return static_cast<double>(loss.value()[0]);
  };
  phase.validate = [&](StgcnNetwork<Real>& n) { return evaluate(n, val, cfg.train.batch_size); };
  return run_phase(cfg, std::move(net), train.size(), phase, hooks);
}

template <class Real>
TrainResult<Real> train_ordinal_heads(const RunConfig& cfg, const StgcnNetwork<Real>& base,
                                      const Dataset& train, const Dataset& val,
                                      const TrainHooks& hooks) {
  cfg.validate();
  const int K = base.arch().classes;
  require(cfg.model.classes == K, ErrorCode::kConfig,
          "config K=" + std::to_string(cfg.model.classes) + " but the base network has K=" +
              std::to_string(K));
  require_labels(train, K, "train");
  require_labels(val, K, "val");
  auto net = make_ordinal(base, derive_seed(cfg.train.seed, {kHeadStream}));

  const std::size_t chunk = std::max<std::size_t>(cfg.train.batch_size, 32);
  const auto train_feats = pooled_features(net, train, chunk);
  const auto val_feats = pooled_features(net, val, chunk);

  Phase<Real> phase;
  phase.prefix = "ordinal_";
  phase.arch = net.arch();
  phase.frozen_backbone = true;
  phase.batch_loss = [&](StgcnNetwork<Real>& n, std::span<const std::size_t> idx, std::uint64_t) {
    std::vector<int> y;
    for (auto i : idx) y.push_back(train.labels[i]);
    ad::Tape<Real> tape;
    auto logits = n.head_forward(tape, tape.constant(gather_rows(train_feats, idx)));
    auto loss = ad::sigmoid_bce(logits, binary_targets<Real>(y, K)).loss;
    tape.backward(loss);
    return static_cast<double>(loss.value()[0]);
  };
  phase.validate = [&](StgcnNetwork<Real>& n) {
    ad::Tape<Real> tape;
    tape.set_param_grads(ad::Tape<Real>::ParamGrads::kNone);
    const auto logits = n.head_forward(tape, tape.constant(val_feats)).value();
    return evaluate_predictions(predictions_from_logits(logits, HeadMode::kBinaryHeads), val.labels, K);
  };
  return run_phase(cfg, std::move(net), train.size(), phase, hooks);
}

template struct TrainResult<float>;
template struct TrainResult<double>;

#define ENGAGE_INSTANTIATE(Real)                                                                \
  template Predictions predictions_from_logits(const Tensor<Real>&, HeadMode);                  \
  template Predictions predict(StgcnNetwork<Real>&, const Dataset&, std::size_t);               \
  template EvalReport evaluate(StgcnNetwork<Real>&, const Dataset&, std::size_t);               \
  template TrainResult<Real> train_base(const RunConfig&, const FaceGraphSpec&, const Dataset&, \
                                        const Dataset&, const TrainHooks&);                     \
  template TrainResult<Real> train_ordinal_heads(const RunConfig&, const StgcnNetwork<Real>&,   \
                                                 const Dataset&, const Dataset&, const TrainHooks&);
ENGAGE_INSTANTIATE(float)
ENGAGE_INSTANTIATE(double)
#undef ENGAGE_INSTANTIATE

}  // namespace engage
