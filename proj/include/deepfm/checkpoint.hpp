#pragma once

// Checkpoint files. First line: "deepfm-checkpoint <version> <fnv1a64 of body>",
// then a JSON body with the schema text, its hash, shapes and every parameter
// (shortest round-trip decimal, so doubles reload bit-exactly).

#include "deepfm/dataset.hpp"
#include "deepfm/linear.hpp"
#include "deepfm/model.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <variant>

namespace deepfm {

inline constexpr int kCheckpointVersion = 1;
inline constexpr std::string_view kCheckpointMagic = "deepfm-checkpoint";

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
  return {{"rows", m.rows()},
          {"cols", m.cols()},
          {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

inline nlohmann::json vector_to_json(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size())
    throw CheckpointError("matrix payload does not match its declared shape");
  return Eigen::Map<const Matrix>(data.data(), rows, cols);
}

inline Vector vector_from_json(const nlohmann::json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(data.data(), static_cast<Eigen::Index>(data.size()));
}

inline nlohmann::json layer_to_json(const DenseLayer& l) {
  return {{"weight", matrix_to_json(l.weight)}, {"bias", vector_to_json(l.bias)}};
}

inline DenseLayer layer_from_json(const nlohmann::json& j) {
  return {matrix_from_json(j.at("weight")), vector_from_json(j.at("bias"))};
}

inline void write_checkpoint_file(const nlohmann::json& body, const std::string& path) {
  const std::string text = body.dump(1);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint '" + path + "'");
  out << kCheckpointMagic << ' ' << kCheckpointVersion << ' ' << hex64(fnv1a64(text)) << '\n'
      << text;
  if (!out) throw CheckpointError("failed writing checkpoint '" + path + "'");
}

inline nlohmann::json read_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  std::string header;
  std::getline(in, header);
  std::stringstream rest;
  rest << in.rdbuf();
  const std::string body = rest.str();

  std::istringstream hs(header);
  std::string magic, checksum;
  int version = 0;
  if (!(hs >> magic >> version >> checksum) || magic != kCheckpointMagic)
    throw CheckpointError("'" + path + "' is not a checkpoint file");
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint format version " + std::to_string(version) +
                          " unsupported (expected " + std::to_string(kCheckpointVersion) + ")");
  if (checksum != hex64(fnv1a64(body)))
    throw CheckpointError("checkpoint '" + path + "' is corrupt or truncated (checksum mismatch)");
  try {
    return nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("checkpoint '" + path + "': " + e.what());
  }
}

inline nlohmann::json standardizer_to_json(const Standardizer* st) {
  if (!st) return nullptr;
  return {{"mean", st->mean}, {"scale", st->scale}, {"zero_variance", st->zero_variance}};
}

inline std::shared_ptr<const FeatureSchema> checkpoint_schema(const nlohmann::json& body,
                                                              const FeatureSchema* expected) {
  auto schema = std::make_shared<const FeatureSchema>(
      parse_schema(body.at("schema").get<std::string>(), "<checkpoint schema>"));
  if (hex64(schema->hash()) != body.at("schema_hash").get<std::string>())
    throw CheckpointError("checkpoint schema text does not match its recorded hash");
  if (expected && expected->hash() != schema->hash())
    throw CheckpointError("checkpoint was trained on schema " + hex64(schema->hash()) +
                          ", refusing to use it with schema " + hex64(expected->hash()));
  return schema;
}

}  // namespace detail

/// `standardizer` (optional) is the training-split scaling, so raw data can
/// be re-encoded exactly as the model saw it.
inline void save_checkpoint(const DeepFMModel& model, const std::string& path,
                            const Standardizer* standardizer = nullptr) {
  const auto& p = model.parameters();
  nlohmann::json emb = nlohmann::json::array();
  for (const auto& a : p.embeddings.matrices) emb.push_back(detail::matrix_to_json(a));
  nlohmann::json hidden = nlohmann::json::array();
  for (const auto& l : p.mlp.hidden) hidden.push_back(detail::layer_to_json(l));
  nlohmann::json body = {
      {"format_version", kCheckpointVersion},
      {"model_type", "deepfm"},
      {"variant", to_string(model.variant())},
      {"interaction", to_string(model.interaction_form())},
      {"schema_hash", hex64(model.schema().hash())},
      {"schema", model.schema().to_text()},
      {"embedding_dim", p.embeddings.dim},
      {"embeddings", emb},
      {"fm",
       {{"bias", detail::vector_to_json(p.fm.bias)},
        {"linear", detail::matrix_to_json(p.fm.linear)},
        {"metric", detail::matrix_to_json(p.fm.metric)}}},
      {"mlp",
       {{"dropout_rate", p.mlp.dropout_rate},
        {"hidden", hidden},
        {"output", detail::layer_to_json(p.mlp.output)}}},
      {"standardizer", detail::standardizer_to_json(standardizer)},
  };
  detail::write_checkpoint_file(body, path);
}

inline void save_checkpoint(const LinearInteractionModel& model, const FeatureSchema& schema,
                            const std::string& path,
                            const Standardizer* standardizer = nullptr) {
  nlohmann::json body = {
      {"format_version", kCheckpointVersion},
      {"model_type", "linear"},
      {"pairwise", model.pairwise()},
      {"schema_hash", hex64(schema.hash())},
      {"schema", schema.to_text()},
      {"input_width", model.input_width()},
      {"bias", detail::vector_to_json(model.parameters().bias)},
      {"weights", detail::matrix_to_json(model.parameters().weights)},
      {"standardizer", detail::standardizer_to_json(standardizer)},
  };
  detail::write_checkpoint_file(body, path);
}

/// Loads a DeepFM-family checkpoint. With `expected` set, a checkpoint
/// trained on a different schema is refused.
inline DeepFMModel load_checkpoint(const std::string& path,
                                   const FeatureSchema* expected = nullptr) {
  const auto body = detail::read_checkpoint_file(path);
  try {
    if (body.at("model_type") != "deepfm")
      throw CheckpointError("'" + path + "' holds a " +
                            body.at("model_type").get<std::string>() + " model, not deepfm");
    auto schema = detail::checkpoint_schema(body, expected);
    auto variant = parse_variant(body.at("variant").get<std::string>());
    if (!variant) throw CheckpointError("unknown variant in checkpoint");
    const auto form = body.at("interaction") == "literal" ? InteractionForm::literal
                                                          : InteractionForm::embedding_dot;
    DeepFMParameters p;
    p.embeddings.dim = body.at("embedding_dim").get<std::size_t>();
    for (const auto& a : body.at("embeddings"))
      p.embeddings.matrices.push_back(detail::matrix_from_json(a));
    const auto& fm = body.at("fm");
    p.fm = {detail::vector_from_json(fm.at("bias")), detail::matrix_from_json(fm.at("linear")),
            detail::matrix_from_json(fm.at("metric"))};
    const auto& mlp = body.at("mlp");
    p.mlp.dropout_rate = mlp.at("dropout_rate").get<double>();
    for (const auto& l : mlp.at("hidden")) p.mlp.hidden.push_back(detail::layer_from_json(l));
    p.mlp.output = detail::layer_from_json(mlp.at("output"));
    return DeepFMModel(std::move(schema), *variant, form, std::move(p));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("checkpoint '" + path + "' is malformed: " + e.what());
  } catch (const ShapeError& e) {
    throw CheckpointError("checkpoint '" + path + "' has inconsistent shapes: " + e.what());
  }
}

inline LinearInteractionModel load_linear_checkpoint(const std::string& path,
                                                     const FeatureSchema* expected = nullptr) {
  const auto body = detail::read_checkpoint_file(path);
  try {
    if (body.at("model_type") != "linear")
      throw CheckpointError("'" + path + "' does not hold a linear model");
    detail::checkpoint_schema(body, expected);
    LinearInteractionModel::Parameters p{detail::vector_from_json(body.at("bias")),
                                         detail::matrix_from_json(body.at("weights"))};
    return LinearInteractionModel(body.at("input_width").get<std::size_t>(),
                                  body.at("pairwise").get<bool>(), std::move(p));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("checkpoint '" + path + "' is malformed: " + e.what());
  } catch (const ShapeError& e) {
    throw CheckpointError("checkpoint '" + path + "' has inconsistent shapes: " + e.what());
  }
}

/// The training standardizer stored with a checkpoint, if any.
inline std::optional<Standardizer> load_checkpoint_standardizer(const std::string& path) {
  const auto body = detail::read_checkpoint_file(path);
  try {
    const auto& j = body.at("standardizer");
    if (j.is_null()) return std::nullopt;
    Standardizer st{j.at("mean").get<std::vector<double>>(),
                    j.at("scale").get<std::vector<double>>(),
                    j.at("zero_variance").get<std::vector<bool>>()};
    if (st.scale.size() != st.mean.size() || st.zero_variance.size() != st.mean.size())
      throw CheckpointError("checkpoint '" + path + "': standardizer lengths disagree");
    return st;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("checkpoint '" + path + "' is malformed: " + e.what());
  }
}

}  // namespace deepfm
