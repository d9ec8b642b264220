#include "albalance/segmenter.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "albalance/raster_io.hpp"

namespace albalance {

namespace {

constexpr int kWindow = 5;

// First `k` entries of `pool` become a uniform sample without replacement.
template <typename T>
void partial_shuffle(std::vector<T>& pool, std::size_t k, std::mt19937_64& rng) {
  k = std::min(k, pool.size());
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
}

}  // namespace

int feature_dim(int channels) { return 3 * channels + 1; }

FeatureMap extract_features(const RasterImage& img) {
  const int h = img.height();
  const int w = img.width();
  const int ch = img.channels();
  FeatureMap out;
  out.height = h;
  out.width = w;
  out.data = RowMatrix::Zero(static_cast<Eigen::Index>(h) * w, feature_dim(ch));
  const auto clampr = [&](int r) { return std::clamp(r, 0, h - 1); };
  const auto clampc = [&](int c) { return std::clamp(c, 0, w - 1); };
  const int half = kWindow / 2;
  const double area = kWindow * kWindow;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const auto row = static_cast<Eigen::Index>(r) * w + c;
      for (int k = 0; k < ch; ++k) {
        double sum = 0.0;
        double sq = 0.0;
        for (int dr = -half; dr <= half; ++dr) {
          for (int dc = -half; dc <= half; ++dc) {
            const double v = img(clampr(r + dr), clampc(c + dc), k) / 255.0;
            sum += v;
            sq += v * v;
          }
        }
        const double mean = sum / area;
        out.data(row, k) = img(r, c, k) / 255.0;
        out.data(row, ch + k) = mean;
        out.data(row, 2 * ch + k) = std::sqrt(std::max(0.0, sq / area - mean * mean));
      }
    }
  }
  const auto luma = img.luma();
  const auto at = [&](int r, int c) {
    return luma[static_cast<std::size_t>(clampr(r)) * w + clampc(c)] / 255.0;
  };
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double gx = (at(r - 1, c + 1) + 2 * at(r, c + 1) + at(r + 1, c + 1)) -
                        (at(r - 1, c - 1) + 2 * at(r, c - 1) + at(r + 1, c - 1));
      const double gy = (at(r + 1, c - 1) + 2 * at(r + 1, c) + at(r + 1, c + 1)) -
                        (at(r - 1, c - 1) + 2 * at(r - 1, c) + at(r - 1, c + 1));
      out.data(static_cast<Eigen::Index>(r) * w + c, 3 * ch) = std::hypot(gx, gy) / 4.0;
    }
  }
  return out;
}

ModelParams ModelParams::zeros(int d_feat, int d_emb, int num_classes) {
  ModelParams p;
  p.w_embed = Eigen::MatrixXd::Zero(d_feat, d_emb);
  p.b_embed = Eigen::VectorXd::Zero(d_emb);
  p.w_cls = Eigen::MatrixXd::Zero(d_emb, num_classes);
  p.b_cls = Eigen::VectorXd::Zero(num_classes);
  return p;
}

ModelParams ModelParams::random(int d_feat, int d_emb, int num_classes, std::uint64_t seed) {
  auto p = zeros(d_feat, d_emb, num_classes);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> embed(0.0, 1.0 / std::sqrt(static_cast<double>(d_feat)));
  std::normal_distribution<double> cls(0.0, 1.0 / std::sqrt(static_cast<double>(d_emb)));
  for (Eigen::Index i = 0; i < p.w_embed.size(); ++i) p.w_embed.data()[i] = embed(rng);
  for (Eigen::Index i = 0; i < p.w_cls.size(); ++i) p.w_cls.data()[i] = cls(rng);
  return p;
}

std::size_t ModelParams::size() const {
  return static_cast<std::size_t>(w_embed.size() + b_embed.size() + w_cls.size() + b_cls.size());
}

Eigen::VectorXd ModelParams::flatten() const {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(size()));
  Eigen::Index o = 0;
  flat.segment(o, w_embed.size()) = Eigen::Map<const Eigen::VectorXd>(w_embed.data(), w_embed.size());
  o += w_embed.size();
  flat.segment(o, b_embed.size()) = b_embed;
  o += b_embed.size();
  flat.segment(o, w_cls.size()) = Eigen::Map<const Eigen::VectorXd>(w_cls.data(), w_cls.size());
  o += w_cls.size();
  flat.segment(o, b_cls.size()) = b_cls;
  return flat;
}

void ModelParams::assign(const Eigen::VectorXd& flat) {
  if (static_cast<std::size_t>(flat.size()) != size()) throw Error("parameter vector has the wrong length");
  Eigen::Index o = 0;
  Eigen::Map<Eigen::VectorXd>(w_embed.data(), w_embed.size()) = flat.segment(o, w_embed.size());
  o += w_embed.size();
  b_embed = flat.segment(o, b_embed.size());
  o += b_embed.size();
  Eigen::Map<Eigen::VectorXd>(w_cls.data(), w_cls.size()) = flat.segment(o, w_cls.size());
  o += w_cls.size();
  b_cls = flat.segment(o, b_cls.size());
}

bool ModelParams::all_finite() const {
  return w_embed.allFinite() && b_embed.allFinite() && w_cls.allFinite() && b_cls.allFinite();
}

void fit_standardization(ModelParams& params, const std::vector<FeatureMap>& features) {
  const int d = params.d_feat();
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(d);
  Eigen::RowVectorXd sq = Eigen::RowVectorXd::Zero(d);
  double n = 0.0;
  for (const auto& f : features) {
    if (f.dim() != d) throw Error("feature dimension does not match model");
    sum += f.data.colwise().sum();
    sq += f.data.array().square().matrix().colwise().sum();
    n += static_cast<double>(f.data.rows());
  }
  if (n == 0.0) throw Error("no pixels to standardize on");
  params.input_shift = sum / n;
  params.input_scale.resize(d);
  for (int k = 0; k < d; ++k) {
    const double var = sq(k) / n - params.input_shift(k) * params.input_shift(k);
    params.input_scale(k) = var > 1e-12 ? 1.0 / std::sqrt(var) : 1.0;
  }
}

RowMatrix model_inputs(const ModelParams& params, const RowMatrix& features) {
  if (params.input_shift.size() == 0) return features;
  return ((features.rowwise() - params.input_shift).array().rowwise() * params.input_scale.array()).matrix();
}

ForwardResult forward(const ModelParams& params, const RowMatrix& features) {
  if (features.cols() != params.d_feat()) {
    throw Error("feature dimension " + std::to_string(features.cols()) + " does not match model (" +
                std::to_string(params.d_feat()) + ")");
  }
  ForwardResult out;
  out.embeddings = ((model_inputs(params, features) * params.w_embed).rowwise() + params.b_embed.transpose()).array().tanh();
  RowMatrix logits = (out.embeddings * params.w_cls).rowwise() + params.b_cls.transpose();
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    logits.row(i) = (logits.row(i).array() - m).exp();
    logits.row(i) /= logits.row(i).sum();
  }
  out.probabilities = std::move(logits);
  return out;
}

ProbabilityMap predict(const ModelParams& params, const FeatureMap& features) {
  auto fw = forward(params, features.data);
  std::vector<double> data(fw.probabilities.data(),
                           fw.probabilities.data() + fw.probabilities.size());
  return ProbabilityMap(features.height, features.width, params.num_classes(), std::move(data));
}

std::vector<int> poor_classes(const std::vector<double>& raw_iou) {
  if (raw_iou.empty()) return {};
  const double mean = std::accumulate(raw_iou.begin(), raw_iou.end(), 0.0) /
                      static_cast<double>(raw_iou.size());
  std::vector<int> out;
  for (std::size_t c = 0; c < raw_iou.size(); ++c) {
    // Values within rounding of the mean are not below it.
    if (raw_iou[c] < mean - 1e-12) out.push_back(static_cast<int>(c));
  }
  if (out.empty()) {
    out.push_back(static_cast<int>(std::min_element(raw_iou.begin(), raw_iou.end()) - raw_iou.begin()));
  }
  return out;
}

ContrastiveBatch ContrastiveBatch::from_vectors(
    const std::vector<std::vector<double>>& anchors,
    const std::vector<std::vector<std::vector<double>>>& positives,
    const std::vector<std::vector<std::vector<double>>>& negatives, double tau) {
  if (positives.size() != anchors.size() || negatives.size() != anchors.size()) {
    throw Error("one positive and one negative set per anchor is required");
  }
  std::vector<const std::vector<double>*> rows;
  ContrastiveBatch batch;
  batch.tau = tau;
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    AnchorSet set;
    set.anchor = static_cast<int>(rows.size());
    rows.push_back(&anchors[a]);
    for (const auto& p : positives[a]) {
      set.positives.push_back(static_cast<int>(rows.size()));
      rows.push_back(&p);
    }
    for (const auto& n : negatives[a]) {
      set.negatives.push_back(static_cast<int>(rows.size()));
      rows.push_back(&n);
    }
    batch.anchors.push_back(std::move(set));
  }
  const auto dim = rows.empty() ? 0 : rows.front()->size();
  batch.vectors = RowMatrix::Zero(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i]->size() != dim) throw Error("contrastive vectors differ in dimension");
    Eigen::RowVectorXd v = Eigen::Map<const Eigen::RowVectorXd>(rows[i]->data(), static_cast<Eigen::Index>(dim));
    const double norm = v.norm();
    if (norm == 0.0) throw Error("contrastive vectors must be non-zero");
    batch.vectors.row(static_cast<Eigen::Index>(i)) = v / norm;
  }
  return batch;
}

ContrastiveResult contrastive_loss(const ContrastiveBatch& batch, bool with_grad) {
  ContrastiveResult out;
  if (with_grad) out.grad = RowMatrix::Zero(batch.vectors.rows(), batch.vectors.cols());
  const double inv_tau = 1.0 / batch.tau;
  double total = 0.0;
  std::vector<double> s;
  std::vector<double> t;
  for (const auto& set : batch.anchors) {
    if (set.positives.empty() || set.negatives.empty()) continue;
    const auto a = batch.vectors.row(set.anchor);
    s.resize(set.positives.size());
    t.resize(set.negatives.size());
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < s.size(); ++k) {
      s[k] = a.dot(batch.vectors.row(set.positives[k])) * inv_tau;
      m = std::max(m, s[k]);
    }
    for (std::size_t j = 0; j < t.size(); ++j) {
      t[j] = a.dot(batch.vectors.row(set.negatives[j])) * inv_tau;
      m = std::max(m, t[j]);
    }
    double neg_mass = 0.0;
    for (double tj : t) neg_mass += std::exp(tj - m);

    const double inv_p = 1.0 / static_cast<double>(s.size());
    double anchor_loss = 0.0;
    double inv_z_sum = 0.0;
    Eigen::RowVectorXd grad_a;
    if (with_grad) grad_a = Eigen::RowVectorXd::Zero(batch.vectors.cols());
    for (std::size_t k = 0; k < s.size(); ++k) {
      const double es = std::exp(s[k] - m);
      const double z = es + neg_mass;
      anchor_loss += -(s[k] - m) + std::log(z);
      if (with_grad) {
        const double ds = (es / z - 1.0) * inv_p * inv_tau;
        grad_a += ds * batch.vectors.row(set.positives[k]);
        out.grad.row(set.positives[k]) += ds * a;
        inv_z_sum += 1.0 / z;
      }
    }
    if (with_grad) {
      for (std::size_t j = 0; j < t.size(); ++j) {
        const double dt = std::exp(t[j] - m) * inv_z_sum * inv_p * inv_tau;
        grad_a += dt * batch.vectors.row(set.negatives[j]);
        out.grad.row(set.negatives[j]) += dt * a;
      }
      out.grad.row(set.anchor) += grad_a;
    }
    total += anchor_loss * inv_p;
    ++out.anchors_used;
  }
  if (out.anchors_used == 0) {
    out.all_skipped = true;
    return out;
  }
  out.loss = total / out.anchors_used;
  if (with_grad) out.grad /= static_cast<double>(out.anchors_used);
  return out;
}

TrainingBatch make_batch(const FeatureMap& features, const LabelMask& labels) {
  if (features.height != labels.height() || features.width != labels.width()) {
    throw Error("features and labels differ in size");
  }
  std::vector<Eigen::Index> rows;
  TrainingBatch batch;
  for (std::size_t p = 0; p < labels.num_pixels(); ++p) {
    const auto idx = static_cast<PixelIndex>(p);
    if (!labels.decided(idx)) continue;
    rows.push_back(static_cast<Eigen::Index>(p));
    batch.labels.push_back(labels.label(idx));
    batch.human.push_back(labels.provenance(idx) == Provenance::Human);
  }
  batch.features = RowMatrix(static_cast<Eigen::Index>(rows.size()), features.dim());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    batch.features.row(static_cast<Eigen::Index>(i)) = features.data.row(rows[i]);
  }
  return batch;
}

std::vector<AnchorSet> sample_anchor_sets(const TrainingBatch& batch,
                                          const std::vector<double>& raw_iou,
                                          const TrainConfig& cfg, std::uint64_t sample_seed) {
  std::vector<AnchorSet> sets;
  if (!cfg.contrastive || cfg.anchors <= 0) return sets;
  const int num_classes = static_cast<int>(raw_iou.size());
  std::vector<bool> anchor_class(num_classes, !cfg.contrastive_balance);
  if (cfg.contrastive_balance) {
    for (int c : poor_classes(raw_iou)) anchor_class[c] = true;
  }
  std::vector<std::vector<int>> by_class(num_classes);
  std::vector<int> candidates;
  for (std::size_t i = 0; i < batch.labels.size(); ++i) {
    if (!batch.human[i]) continue;
    const int c = batch.labels[i];
    if (c < 0 || c >= num_classes) throw Error("training label exceeds class count");
    by_class[c].push_back(static_cast<int>(i));
    if (anchor_class[c]) candidates.push_back(static_cast<int>(i));
  }
  std::mt19937_64 rng(sample_seed);
  const auto n_anchor = std::min(candidates.size(), static_cast<std::size_t>(cfg.anchors));
  partial_shuffle(candidates, n_anchor, rng);
  for (std::size_t k = 0; k < n_anchor; ++k) {
    AnchorSet set;
    set.anchor = candidates[k];
    const int c = batch.labels[set.anchor];
    std::vector<int> pos;
    for (int i : by_class[c]) {
      if (i != set.anchor) pos.push_back(i);
    }
    std::vector<int> neg;
    for (int other = 0; other < num_classes; ++other) {
      if (other != c) neg.insert(neg.end(), by_class[other].begin(), by_class[other].end());
    }
    partial_shuffle(pos, static_cast<std::size_t>(cfg.max_positives), rng);
    partial_shuffle(neg, static_cast<std::size_t>(cfg.max_negatives), rng);
    pos.resize(std::min(pos.size(), static_cast<std::size_t>(cfg.max_positives)));
    neg.resize(std::min(neg.size(), static_cast<std::size_t>(cfg.max_negatives)));
    set.positives = std::move(pos);
    set.negatives = std::move(neg);
    sets.push_back(std::move(set));
  }
  return sets;
}

LossResult loss_and_grad(const ModelParams& params, const TrainingBatch& batch,
                         const std::vector<double>& raw_iou, const TrainConfig& cfg,
                         std::uint64_t sample_seed) {
  const auto n = static_cast<Eigen::Index>(batch.labels.size());
  if (n == 0) throw Error("loss_and_grad: no decided pixels");
  if (static_cast<int>(raw_iou.size()) != params.num_classes()) {
    throw Error("loss_and_grad: IoU vector does not match class count");
  }
  const auto fw = forward(params, batch.features);
  LossResult out;
  out.grad = ModelParams::zeros(params.d_feat(), params.d_emb(), params.num_classes());

  RowMatrix dlogits = fw.probabilities;
  double ce = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = batch.labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= params.num_classes()) throw Error("training label exceeds class count");
    ce -= std::log(std::max(fw.probabilities(i, y), std::numeric_limits<double>::min()));
    dlogits(i, y) -= 1.0;
  }
  out.cross_entropy = ce / static_cast<double>(n);
  dlogits /= static_cast<double>(n);
  out.grad.w_cls = fw.embeddings.transpose() * dlogits;
  out.grad.b_cls = dlogits.colwise().sum().transpose();
  RowMatrix demb = dlogits * params.w_cls.transpose();

  const double weight = cfg.contrastive ? cfg.contrastive_weight : 0.0;
  if (weight != 0.0) {
    ContrastiveBatch cb;
    cb.tau = cfg.tau;
    cb.anchors = sample_anchor_sets(batch, raw_iou, cfg, sample_seed);
    if (!cb.anchors.empty()) {
      cb.vectors = fw.embeddings;
      Eigen::VectorXd norms = fw.embeddings.rowwise().norm();
      for (Eigen::Index i = 0; i < n; ++i) {
        if (norms(i) > 0) cb.vectors.row(i) /= norms(i);
      }
      const auto cr = contrastive_loss(cb, true);
      if (!cr.all_skipped) {
        out.contrastive = cr.loss;
        out.contrastive_skipped = false;
        // Back through the L2 normalization: (g - z (z.g)) / |e|.
        for (Eigen::Index i = 0; i < n; ++i) {
          if (norms(i) == 0) continue;
          const auto g = cr.grad.row(i);
          if (g.isZero(0.0)) continue;
          const auto z = cb.vectors.row(i);
          demb.row(i) += weight * (g - z * z.dot(g)) / norms(i);
        }
      }
    }
  }
  out.total = out.cross_entropy + weight * out.contrastive;

  const RowMatrix dpre = demb.array() * (1.0 - fw.embeddings.array().square());
  out.grad.w_embed = model_inputs(params, batch.features).transpose() * dpre;
  out.grad.b_embed = dpre.colwise().sum().transpose();
  return out;
}

ModelParams fit(const ModelParams& init, const std::vector<LabeledImage>& data,
                const std::vector<double>& raw_iou, const TrainConfig& cfg, FitReport* report) {
  struct Ref {
    std::uint32_t image;
    PixelIndex pixel;
  };
  std::vector<Ref> pool;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& lm = *data[i].labels;
    if (data[i].features->height != lm.height() || data[i].features->width != lm.width()) {
      throw Error("features and labels differ in size");
    }
    for (std::size_t p = 0; p < lm.num_pixels(); ++p) {
      if (lm.decided(static_cast<PixelIndex>(p))) {
        pool.push_back({static_cast<std::uint32_t>(i), static_cast<PixelIndex>(p)});
      }
    }
  }
  if (pool.empty()) throw Error("fit: no labeled pixels");
  if (cfg.batch_size <= 0) throw Error("fit: batch size must be positive");

  ModelParams params = init;
  Eigen::VectorXd theta = params.flatten();
  Eigen::VectorXd velocity = Eigen::VectorXd::Zero(theta.size());
  std::mt19937_64 rng(cfg.seed);
  const int d_feat = params.d_feat();
  TrainingBatch batch;
  std::uint64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr * std::pow(cfg.gamma, epoch);
    const std::size_t take = cfg.pixels_per_epoch == 0 ? pool.size()
                                                       : std::min(pool.size(), cfg.pixels_per_epoch);
    partial_shuffle(pool, take, rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < take; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(take, start + static_cast<std::size_t>(cfg.batch_size));
      batch.features.resize(static_cast<Eigen::Index>(end - start), d_feat);
      batch.labels.clear();
      batch.human.clear();
      for (std::size_t k = start; k < end; ++k) {
        const auto& ref = pool[k];
        const auto& lm = *data[ref.image].labels;
        batch.features.row(static_cast<Eigen::Index>(k - start)) =
            data[ref.image].features->data.row(ref.pixel);
        batch.labels.push_back(lm.label(ref.pixel));
        batch.human.push_back(lm.provenance(ref.pixel) == Provenance::Human);
      }
      params.assign(theta);
      const auto res = loss_and_grad(params, batch, raw_iou, cfg, cfg.seed ^ (0x9E3779B97F4A7C15ULL * ++step));
      if (!std::isfinite(res.total)) {
        throw Error("training diverged (non-finite loss) at epoch " + std::to_string(epoch));
      }
      loss_sum += res.total;
      ++batches;
      const Eigen::VectorXd g = res.grad.flatten() + cfg.weight_decay * theta;
      velocity = cfg.momentum * velocity + g;
      theta -= lr * velocity;
    }
    if (!theta.allFinite()) {
      throw Error("training diverged (non-finite parameters) at epoch " + std::to_string(epoch));
    }
    if (report) report->epoch_loss.push_back(loss_sum / std::max(1, batches));
  }
  params.assign(theta);
  return params;
}

void save_params(const std::filesystem::path& path, const ModelParams& params, std::uint64_t seed,
                 int epoch) {
  AlrtTensor t;
  t.dtype = Dtype::F64;
  const auto flat = params.flatten();
  t.dims = {1u, static_cast<std::uint32_t>(flat.size())};
  t.f64.assign(flat.data(), flat.data() + flat.size());
  write_file_bytes(path, encode_alrt(t));
  nlohmann::json side = {{"d_feat", params.d_feat()},
                         {"d_emb", params.d_emb()},
                         {"C", params.num_classes()},
                         {"seed", seed},
                         {"epoch", epoch}};
  if (params.input_shift.size() > 0) {
    side["input_shift"] = std::vector<double>(params.input_shift.data(), params.input_shift.data() + params.input_shift.size());
    side["input_scale"] = std::vector<double>(params.input_scale.data(), params.input_scale.data() + params.input_scale.size());
  }
  std::ofstream(path.string() + ".json") << side.dump(2) << "\n";
}

ModelParams load_params(const std::filesystem::path& path) {
  std::ifstream side_in(path.string() + ".json");
  if (!side_in) throw IoError(IoErrorKind::Open, path.string() + ".json");
  const auto side = nlohmann::json::parse(side_in);
  auto params = ModelParams::zeros(side.at("d_feat").get<int>(), side.at("d_emb").get<int>(),
                                   side.at("C").get<int>());
  const auto t = decode_alrt(read_file_bytes(path));
  if (t.dtype != Dtype::F64 || t.f64.size() != params.size()) {
    throw IoError(IoErrorKind::WrongType, "parameter tensor does not match its sidecar");
  }
  params.assign(Eigen::Map<const Eigen::VectorXd>(t.f64.data(), static_cast<Eigen::Index>(t.f64.size())));
  if (side.contains("input_shift")) {
    const auto shift = side.at("input_shift").get<std::vector<double>>();
    const auto scale = side.at("input_scale").get<std::vector<double>>();
    if (shift.size() != static_cast<std::size_t>(params.d_feat()) || scale.size() != shift.size()) {
      throw IoError(IoErrorKind::WrongType, "input standardization does not match the feature dimension");
    }
    params.input_shift = Eigen::Map<const Eigen::RowVectorXd>(shift.data(), static_cast<Eigen::Index>(shift.size()));
    params.input_scale = Eigen::Map<const Eigen::RowVectorXd>(scale.data(), static_cast<Eigen::Index>(scale.size()));
  }
  return params;
}

}  // namespace albalance
