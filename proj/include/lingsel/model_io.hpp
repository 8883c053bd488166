#pragma once

// JSON persistence for the three classifiers. Every file carries "type",
// "dim" and "normalize" (whether embeddings were L2-normalised before
// training; scoring repeats it). Large f64 arrays are base64 blobs of
// little-endian doubles; scalars and short arrays are plain JSON numbers,
// which round-trip exactly.
//
//   ocsvm:   gamma, nu, rho, alphas[n], support_vectors (blob, row-major
//            rows where alpha > 0), converged, iterations
//   iforest: psi, c_psi, n_trees, trees[{height_limit, split_dim[], split_val[],
//            left[], right[], size[]}]   (split_dim -1 marks a leaf)
//   dsvdd:   latent_dim, layers[{name, kind, in, out, kernel, stride, pad,
//            weights (blob)}], center[], train_distances (blob), config{}

#include <fstream>
#include <sstream>
#include <string>
#include <variant>

#include "json.hpp"
#include "lingsel/corpus_io.hpp"
#include "lingsel/dsvdd.hpp"
#include "lingsel/encoding.hpp"
#include "lingsel/error.hpp"
#include "lingsel/iforest.hpp"
#include "lingsel/ocsvm.hpp"
#include "lingsel/parallel.hpp"

namespace lingsel {

struct ClassifierModel {
  std::variant<OcSvmModel, IForestModel, DsvddModel> model;
  bool normalize = false;

  std::string type() const {
    return std::visit(
        [](const auto& m) -> std::string {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, OcSvmModel>) return "ocsvm";
          if constexpr (std::is_same_v<M, IForestModel>) return "iforest";
          return "dsvdd";
        },
        model);
  }

  std::size_t dim() const {
    return std::visit(
        [](const auto& m) -> std::size_t {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, IForestModel>) return m.dim;
          else return m.dim();
        },
        model);
  }

  /// Higher is more target-like for every classifier.
  double decision(std::span<const double> x) const {
    return std::visit(
        [&](const auto& m) {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, OcSvmModel>) return ocsvm_decision(m, x);
          else if constexpr (std::is_same_v<M, IForestModel>) return iforest_decision(m, x);
          else return dsvdd_decision(m, x);
        },
        model);
  }
};

namespace detail {

using ojson = nlohmann::ordered_json;

inline const nlohmann::json& field(const nlohmann::json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw DataError(std::string("model file lacks field '") + key + "'");
  return *it;
}

template <typename T>
T get(const nlohmann::json& j, const char* key) {
  try {
    return field(j, key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model field '") + key + "' has the wrong type: " + e.what());
  }
}

inline ojson to_json(const OcSvmModel& m) {
  ojson j;
  j["type"] = "ocsvm";
  j["dim"] = m.dim();
  j["gamma"] = m.gamma;
  j["nu"] = m.nu;
  j["rho"] = m.rho;
  j["alphas"] = m.alphas;
  j["support_vectors"] = encode_f64(m.support_vectors.values());
  j["converged"] = m.converged;
  j["iterations"] = m.iterations;
  return j;
}

inline OcSvmModel ocsvm_from_json(const nlohmann::json& j) {
  OcSvmModel m;
  const auto dim = get<std::size_t>(j, "dim");
  m.gamma = get<double>(j, "gamma");
  m.nu = get<double>(j, "nu");
  m.rho = get<double>(j, "rho");
  m.alphas = get<std::vector<double>>(j, "alphas");
  m.converged = get<bool>(j, "converged");
  m.iterations = j.contains("iterations") ? get<std::size_t>(j, "iterations") : 0;
  auto sv = decode_f64(get<std::string>(j, "support_vectors"));
  std::size_t n_support = 0;
  for (double a : m.alphas) n_support += a > 0.0 ? 1 : 0;
  if (dim == 0 || sv.size() != n_support * dim) {
    throw DataError("ocsvm model: support_vectors blob does not hold " +
                    std::to_string(n_support) + " rows of dim " + std::to_string(dim));
  }
  m.support_vectors = Matrix(n_support, dim, std::move(sv));
  return m;
}

inline ojson to_json(const IForestModel& m) {
  ojson j;
  j["type"] = "iforest";
  j["dim"] = m.dim;
  j["psi"] = m.psi;
  j["c_psi"] = m.c_psi;
  j["n_trees"] = m.trees.size();
  ojson trees = ojson::array();
  for (const auto& t : m.trees) {
    ojson jt;
    jt["height_limit"] = t.height_limit;
    std::vector<std::int32_t> dim, left, right;
    std::vector<double> val;
    std::vector<std::int64_t> size;
    for (const auto& n : t.nodes) {
      dim.push_back(n.split_dim);
      val.push_back(n.split_val);
      left.push_back(n.left);
      right.push_back(n.right);
      size.push_back(n.size);
    }
    jt["split_dim"] = dim;
    jt["split_val"] = val;
    jt["left"] = left;
    jt["right"] = right;
    jt["size"] = size;
    trees.push_back(std::move(jt));
  }
  j["trees"] = std::move(trees);
  return j;
}

inline IForestModel iforest_from_json(const nlohmann::json& j) {
  IForestModel m;
  m.dim = get<std::size_t>(j, "dim");
  m.psi = get<std::size_t>(j, "psi");
  m.c_psi = get<double>(j, "c_psi");
  for (const auto& jt : field(j, "trees")) {
    IsolationTree t;
    t.height_limit = get<std::size_t>(jt, "height_limit");
    const auto dim = get<std::vector<std::int32_t>>(jt, "split_dim");
    const auto val = get<std::vector<double>>(jt, "split_val");
    const auto left = get<std::vector<std::int32_t>>(jt, "left");
    const auto right = get<std::vector<std::int32_t>>(jt, "right");
    const auto size = get<std::vector<std::int64_t>>(jt, "size");
    const std::size_t n = dim.size();
    if (n == 0 || val.size() != n || left.size() != n || right.size() != n || size.size() != n) {
      throw DataError("iforest model: tree node arrays differ in length");
    }
    for (std::size_t i = 0; i < n; ++i) {
      IsolationNode node{dim[i], val[i], left[i], right[i], size[i]};
      if (!node.is_leaf()) {
        const auto bad = [&](std::int32_t c) {
          return c <= static_cast<std::int32_t>(i) || c >= static_cast<std::int32_t>(n);
        };
        if (static_cast<std::size_t>(node.split_dim) >= m.dim || bad(node.left) ||
            bad(node.right)) {
          throw DataError("iforest model: node " + std::to_string(i) + " is malformed");
        }
      }
      t.nodes.push_back(node);
    }
    m.trees.push_back(std::move(t));
  }
  if (m.trees.empty()) throw DataError("iforest model has no trees");
  if (m.trees.size() != get<std::size_t>(j, "n_trees")) {
    throw DataError("iforest model: n_trees does not match the tree list");
  }
  return m;
}

template <typename Layer>
ojson layer_json(const char* name, const char* kind, const Layer& l) {
  ojson j;
  j["name"] = name;
  j["kind"] = kind;
  if constexpr (std::is_same_v<Layer, nn::Dense>) {
    j["in"] = l.in;
    j["out"] = l.out;
  } else {
    j["in"] = l.in_ch;
    j["out"] = l.out_ch;
    j["kernel"] = l.kernel;
    j["stride"] = l.stride;
    j["pad"] = l.pad;
  }
  j["weights"] = encode_f64(l.weight);
  return j;
}

inline ojson to_json(const DsvddModel& m) {
  ojson j;
  j["type"] = "dsvdd";
  j["dim"] = m.dim();
  j["latent_dim"] = m.encoder.latent_dim();
  j["layers"] = {layer_json("conv1", "conv1d", m.encoder.conv1),
                 layer_json("conv2", "conv1d", m.encoder.conv2),
                 layer_json("dense", "dense", m.encoder.dense)};
  j["center"] = m.center;
  j["train_distances"] = encode_f64(m.train_distances);
  const auto& c = m.config;
  j["config"] = {{"ae_epochs", c.ae_epochs},       {"ae_lr", c.ae_lr},
                 {"enc_epochs", c.enc_epochs},     {"enc_lr", c.enc_lr},
                 {"weight_decay", c.weight_decay}, {"batch_size", c.batch_size},
                 {"latent_dim", c.latent_dim},     {"seed", c.seed}};
  return j;
}

inline DsvddModel dsvdd_from_json(const nlohmann::json& j) {
  DsvddModel m;
  const auto& c = field(j, "config");
  m.config.ae_epochs = get<std::size_t>(c, "ae_epochs");
  m.config.ae_lr = get<double>(c, "ae_lr");
  m.config.enc_epochs = get<std::size_t>(c, "enc_epochs");
  m.config.enc_lr = get<double>(c, "enc_lr");
  m.config.weight_decay = get<double>(c, "weight_decay");
  m.config.batch_size = get<std::size_t>(c, "batch_size");
  m.config.latent_dim = get<std::size_t>(c, "latent_dim");
  m.config.seed = get<std::uint64_t>(c, "seed");

  m.encoder = make_encoder_shape(get<std::size_t>(j, "dim"), get<std::size_t>(j, "latent_dim"));
  const auto& layers = field(j, "layers");
  if (!layers.is_array() || layers.size() != 3) {
    throw DataError("dsvdd model: expected 3 encoder layers");
  }
  const std::size_t expected[3] = {m.encoder.conv1.in_ch * m.encoder.conv1.out_ch * 5,
                                   m.encoder.conv2.in_ch * m.encoder.conv2.out_ch * 5,
                                   m.encoder.dense.in * m.encoder.dense.out};
  auto params = m.encoder.parameters();
  for (std::size_t i = 0; i < 3; ++i) {
    *params[i] = decode_f64(get<std::string>(layers[i], "weights"));
    if (params[i]->size() != expected[i]) {
      throw DataError("dsvdd model: layer " + std::to_string(i) + " has " +
                      std::to_string(params[i]->size()) + " weights, expected " +
                      std::to_string(expected[i]));
    }
  }
  m.center = get<std::vector<double>>(j, "center");
  if (m.center.size() != m.encoder.latent_dim()) throw DataError("dsvdd model: center size");
  m.train_distances = decode_f64(get<std::string>(j, "train_distances"));
  return m;
}

}  // namespace detail

inline std::string model_to_string(const ClassifierModel& model) {
  auto j = std::visit([](const auto& m) { return detail::to_json(m); }, model.model);
  j["normalize"] = model.normalize;
  return j.dump(1) + "\n";
}

inline ClassifierModel model_from_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model file is not valid JSON: ") + e.what());
  }
  ClassifierModel out;
  const auto type = detail::get<std::string>(j, "type");
  if (type == "ocsvm") out.model = detail::ocsvm_from_json(j);
  else if (type == "iforest") out.model = detail::iforest_from_json(j);
  else if (type == "dsvdd") out.model = detail::dsvdd_from_json(j);
  else throw DataError("unknown model type \"" + type + "\"");
  out.normalize = j.contains("normalize") && detail::get<bool>(j, "normalize");
  return out;
}

inline void save_model(const ClassifierModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out << model_to_string(model);
  if (!out) throw DataError("write failed: " + path);
}

inline ClassifierModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return model_from_string(buf.str());
}

/// Decision scores in corpus order, applying the model's normalisation.
/// Parallel over utterances; output is independent of `threads`.
inline std::vector<double> score_corpus(const ClassifierModel& model, Corpus corpus,
                                        std::size_t threads = 0) {
  if (!corpus.empty() && corpus.dim != model.dim()) {
    throw DataError("corpus dim " + std::to_string(corpus.dim) + " does not match model dim " +
                    std::to_string(model.dim()));
  }
  if (model.normalize) normalize_embeddings(corpus);
  std::vector<double> scores(corpus.size());
  parallel_for(corpus.size(), threads ? threads : default_thread_count(),
               [&](std::size_t i) { scores[i] = model.decision(corpus.records[i].embedding); });
  return scores;
}

}  // namespace lingsel
