// SPDX-License-Identifier: Apache-2.0

#include "eagle/encoder.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "eagle/errors.hpp"
#include "eagle/hashing.hpp"
#include "eagle/rng.hpp"
#include "eagle/simd/kernels.hpp"

namespace eagle {

using nlohmann::json;

namespace {

void generate_base_row(uint64_t base_seed, uint32_t index,
                       std::span<double> out) {
  SplitMix64 rng(hash_u64(base_seed, index));
  for (double& v : out) {
    v = (2.0 * rng.next_double() - 1.0) * kBaseRowScale;
  }
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string train_config_hash(const TrainConfig& config) {
  std::string canon = "lr=" + format_double(config.learning_rate) +
                      ";epochs=" + std::to_string(config.epochs) +
                      ";batch=" + std::to_string(config.batch_size) +
                      ";schedule=linear-decay;seed=" +
                      std::to_string(config.seed);
  return to_hex(fnv1a64(canon));
}

EmbeddingModel EmbeddingModel::base(uint64_t seed, int dims) {
  EmbeddingModel m;
  m.dims_ = dims;
  m.base_seed_ = seed;
  ProvenanceEntry entry;
  entry.kind = "base";
  entry.id = "base-" + to_hex(seed) + "-d" + std::to_string(dims);
  m.provenance_.push_back(std::move(entry));
  return m;
}

const std::string& EmbeddingModel::id() const { return provenance_.back().id; }

void EmbeddingModel::append_provenance(ProvenanceEntry entry) {
  provenance_.push_back(std::move(entry));
}

void EmbeddingModel::row(uint32_t index, std::span<double> out) const {
  auto it = overrides_.find(index);
  if (it != overrides_.end()) {
    std::copy(it->second.begin(), it->second.end(), out.begin());
  } else {
    generate_base_row(base_seed_, index, out);
  }
}

void EmbeddingModel::set_row(uint32_t index, std::vector<double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw Error("non-finite model parameter in row " + std::to_string(index));
    }
  }
  overrides_[index] = std::move(values);
}

std::vector<double> EmbeddingModel::project(
    const FeatureVector& features) const {
  std::vector<double> acc(static_cast<size_t>(dims_), 0.0);
  std::vector<double> buf(static_cast<size_t>(dims_));
  for (const auto& [index, weight] : features.entries) {
    row(index, buf);
    simd::axpy(weight, buf, acc);
  }
  return acc;
}

std::vector<double> EmbeddingModel::embed(const FeatureVector& features) const {
  if (features.empty()) {
    throw EmptyEmbeddingError("text produced no features");
  }
  std::vector<double> v = project(features);
  double norm = simd::nrm2(v);
  if (norm == 0.0) {
    throw EmptyEmbeddingError("projection has zero norm");
  }
  simd::scale(1.0 / norm, v);
  return v;
}

std::vector<double> EmbeddingModel::embed(std::string_view text) const {
  return embed(featurize(text));
}

double EmbeddingModel::similarity(const FeatureVector& a,
                                  const FeatureVector& b) const {
  std::vector<double> ea = embed(a);
  std::vector<double> eb = embed(b);
  return simd::dot(ea, eb);
}

double EmbeddingModel::similarity(std::string_view a,
                                  std::string_view b) const {
  return similarity(featurize(a), featurize(b));
}

bool EmbeddingModel::params_equal(const EmbeddingModel& other) const {
  if (dims_ != other.dims_ || base_seed_ != other.base_seed_ ||
      overrides_.size() != other.overrides_.size()) {
    return false;
  }
  for (const auto& [index, values] : overrides_) {
    auto it = other.overrides_.find(index);
    if (it == other.overrides_.end()) return false;
    if (std::memcmp(values.data(), it->second.data(),
                    values.size() * sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

double pair_loss_accumulate(const EmbeddingModel& model,
                            const FeatureVector& a, const FeatureVector& b,
                            double target, double weight, GradMap& grad) {
  const size_t dims = static_cast<size_t>(model.dims());
  std::vector<double> u = model.project(a);
  std::vector<double> v = model.project(b);
  double nu = simd::nrm2(u);
  double nv = simd::nrm2(v);
  if (a.empty() || nu == 0.0 || b.empty() || nv == 0.0) {
    throw EmptyEmbeddingError("training pair has an empty embedding");
  }
  simd::scale(1.0 / nu, u);  // u, v now unit embeddings
  simd::scale(1.0 / nv, v);
  double score = simd::dot(u, v);
  double err = score - target;

  // d score / d u = (v - score*u) / |u|, same with roles swapped; the
  // score*u term is the Jacobian of the normalization.
  double coeff = 2.0 * err * weight;
  std::vector<double> gu(dims), gv(dims);
  for (size_t d = 0; d < dims; ++d) {
    gu[d] = coeff * (v[d] - score * u[d]) / nu;
    gv[d] = coeff * (u[d] - score * v[d]) / nv;
  }

  auto scatter = [&](const FeatureVector& f, const std::vector<double>& g) {
    for (const auto& [index, w] : f.entries) {
      auto [it, inserted] = grad.try_emplace(index);
      if (inserted) it->second.assign(dims, 0.0);
      simd::axpy(w, g, it->second);
    }
  };
  scatter(a, gu);
  scatter(b, gv);
  return err * err;
}

EmbeddingModel train(const EmbeddingModel& base, const PairDataset& data,
                     const TrainConfig& config) {
  for (const auto& ex : data.examples) {
    if (!ex.label) {
      throw Error("train requires labels; example " + ex.id + " is unlabeled");
    }
  }

  EmbeddingModel model = base;
  const size_t n = data.size();
  const size_t batch_size = static_cast<size_t>(std::max(config.batch_size, 1));
  const size_t batches_per_epoch = n == 0 ? 0 : (n + batch_size - 1) / batch_size;
  const uint64_t total_steps =
      static_cast<uint64_t>(config.epochs) * batches_per_epoch;

  std::string data_print;
  for (const auto& ex : data.examples) {
    data_print += ex.id;
    data_print.push_back(';');
  }
  ProvenanceEntry entry;
  entry.kind = "finetuned";
  entry.parent = base.id();
  entry.train_config_hash = train_config_hash(config);
  entry.train_size = n;
  entry.id = "ft-" + to_hex(fnv1a64(base.id() + "|" + entry.train_config_hash +
                                    "|" + std::to_string(n) + "|" +
                                    data_print));

  if (total_steps == 0 || config.learning_rate == 0.0) {
    model.append_provenance(std::move(entry));
    return model;
  }

  std::vector<FeatureVector> fa(n), fb(n);
  std::vector<double> targets(n);
  for (size_t i = 0; i < n; ++i) {
    fa[i] = featurize(data.examples[i].text_a);
    fb[i] = featurize(data.examples[i].text_b);
    targets[i] = static_cast<double>(*data.examples[i].label);
  }

  const size_t dims = static_cast<size_t>(model.dims());
  std::vector<size_t> order(n);
  std::vector<double> buf(dims);
  uint64_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (size_t i = 0; i < n; ++i) order[i] = i;
    SplitMix64 shuffle_rng(
        hash_u64(config.seed, 0x50FF1EULL, static_cast<uint64_t>(epoch)));
    deterministic_shuffle(std::span<size_t>(order), shuffle_rng);

    for (size_t start = 0; start < n; start += batch_size) {
      size_t end = std::min(start + batch_size, n);
      GradMap grad;
      double weight = 1.0 / static_cast<double>(end - start);
      for (size_t i = start; i < end; ++i) {
        size_t ex = order[i];
        pair_loss_accumulate(model, fa[ex], fb[ex], targets[ex], weight, grad);
      }
      double lr = config.learning_rate *
                  static_cast<double>(total_steps - step) /
                  static_cast<double>(total_steps);
      for (auto& [index, g] : grad) {
        model.row(index, buf);
        simd::axpy(-lr, g, buf);
        model.set_row(index, std::vector<double>(buf.begin(), buf.end()));
      }
      ++step;
    }
  }

  model.append_provenance(std::move(entry));
  return model;
}

double dataset_mse(const EmbeddingModel& model, const PairDataset& data) {
  if (data.size() == 0) {
    throw UndefinedMetricError("MSE over an empty dataset");
  }
  double acc = 0.0;
  for (const auto& ex : data.examples) {
    if (!ex.label) {
      throw Error("dataset_mse requires labels; example " + ex.id +
                  " is unlabeled");
    }
    double e = model.similarity(ex.text_a, ex.text_b) -
               static_cast<double>(*ex.label);
    acc += e * e;
  }
  return acc / static_cast<double>(data.size());
}

namespace {

void sort_scored(std::vector<ScoredLabel>& scored) {
  std::sort(scored.begin(), scored.end(),
            [](const ScoredLabel& a, const ScoredLabel& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.id < b.id;
            });
}

}  // namespace

std::vector<ScoredLabel> nearest_labels(const EmbeddingModel& model,
                                        std::string_view query,
                                        const std::vector<Label>& corpus,
                                        size_t k) {
  if (corpus.empty()) {
    throw Error("nearest_labels requires a nonempty corpus");
  }
  std::vector<double> q = model.embed(query);
  std::vector<ScoredLabel> scored;
  scored.reserve(corpus.size());
  for (const auto& label : corpus) {
    std::vector<double> e = model.embed(label.text);
    scored.push_back({label.id, simd::dot(q, e)});
  }
  sort_scored(scored);
  scored.resize(std::min(k, scored.size()));
  return scored;
}

LabelIndex::LabelIndex(const EmbeddingModel& model,
                       const std::vector<Label>& corpus) {
  if (corpus.empty()) {
    throw Error("label corpus is empty");
  }
  ids_.reserve(corpus.size());
  embeddings_.reserve(corpus.size());
  for (const auto& label : corpus) {
    ids_.push_back(label.id);
    embeddings_.push_back(model.embed(label.text));
  }
}

std::vector<ScoredLabel> LabelIndex::top_k(
    std::span<const double> query_embedding, size_t k) const {
  std::vector<ScoredLabel> scored;
  scored.reserve(ids_.size());
  for (size_t i = 0; i < ids_.size(); ++i) {
    scored.push_back({ids_[i], simd::dot(query_embedding, embeddings_[i])});
  }
  sort_scored(scored);
  scored.resize(std::min(k, scored.size()));
  return scored;
}

namespace {

constexpr char kModelMagic[8] = {'E', 'G', 'L', 'M', 'D', 'L', '0', '1'};

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
}

class ByteReader {
 public:
  ByteReader(const std::string& data, const std::string& what)
      : data_(data), what_(what) {}

  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i) {
      v = (v << 8) | static_cast<unsigned char>(data_[pos_ + static_cast<size_t>(i)]);
    }
    pos_ += 4;
    return v;
  }

  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) {
      v = (v << 8) | static_cast<unsigned char>(data_[pos_ + static_cast<size_t>(i)]);
    }
    pos_ += 8;
    return v;
  }

  std::string bytes(size_t n) {
    need(n);
    std::string out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  bool done() const { return pos_ == data_.size(); }

 private:
  void need(size_t n) {
    if (pos_ + n > data_.size()) {
      throw ParseError(what_ + ": truncated model file");
    }
  }

  const std::string& data_;
  std::string what_;
  size_t pos_ = 0;
};

}  // namespace

void EmbeddingModel::save(const std::filesystem::path& path) const {
  std::string out;
  out.append(kModelMagic, sizeof(kModelMagic));
  put_u32(out, static_cast<uint32_t>(dims_));
  put_u32(out, kHashBits);
  put_u64(out, base_seed_);

  json prov = json::array();
  for (const auto& p : provenance_) {
    prov.push_back({{"kind", p.kind},
                    {"id", p.id},
                    {"parent", p.parent},
                    {"train_config_hash", p.train_config_hash},
                    {"train_size", p.train_size}});
  }
  std::string prov_text = prov.dump();
  put_u32(out, static_cast<uint32_t>(prov_text.size()));
  out += prov_text;

  std::vector<uint32_t> indices;
  indices.reserve(overrides_.size());
  for (const auto& [index, _] : overrides_) indices.push_back(index);
  std::sort(indices.begin(), indices.end());
  put_u64(out, indices.size());
  for (uint32_t index : indices) {
    put_u32(out, index);
    for (double v : overrides_.at(index)) {
      put_u64(out, std::bit_cast<uint64_t>(v));
    }
  }

  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
  }
  std::filesystem::rename(tmp, path);
}

EmbeddingModel EmbeddingModel::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  std::string data = ss.str();

  ByteReader r(data, path.string());
  if (r.bytes(sizeof(kModelMagic)) !=
      std::string(kModelMagic, sizeof(kModelMagic))) {
    throw ParseError(path.string() + ": not a model file");
  }
  EmbeddingModel m;
  m.dims_ = static_cast<int>(r.u32());
  uint32_t hash_bits = r.u32();
  if (hash_bits != kHashBits) {
    throw ParseError(path.string() + ": unsupported hash space");
  }
  m.base_seed_ = r.u64();

  uint32_t prov_len = r.u32();
  json prov = json::parse(r.bytes(prov_len));
  m.provenance_.clear();
  for (const auto& p : prov) {
    ProvenanceEntry entry;
    entry.kind = p.at("kind").get<std::string>();
    entry.id = p.at("id").get<std::string>();
    entry.parent = p.at("parent").get<std::string>();
    entry.train_config_hash = p.at("train_config_hash").get<std::string>();
    entry.train_size = p.at("train_size").get<uint64_t>();
    m.provenance_.push_back(std::move(entry));
  }
  if (m.provenance_.empty()) {
    throw ParseError(path.string() + ": empty provenance chain");
  }

  uint64_t n_rows = r.u64();
  for (uint64_t i = 0; i < n_rows; ++i) {
    uint32_t index = r.u32();
    std::vector<double> values(static_cast<size_t>(m.dims_));
    for (double& v : values) {
      v = std::bit_cast<double>(r.u64());
    }
    m.overrides_[index] = std::move(values);
  }
  if (!r.done()) {
    throw ParseError(path.string() + ": trailing bytes");
  }
  return m;
}

}  // namespace eagle
