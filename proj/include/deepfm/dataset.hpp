#pragma once

// Samples, delimiter-separated dataset files, standardization and encoding
// into the model's raw input vector.
//
// Dataset layout: header row "patient_id,visit_id,is_baseline,label,<columns>"
// where <columns> are the schema's data columns (any order). Empty cell means
// missing. Categorical cells hold category names, labels hold class names.

#include "deepfm/schema.hpp"

#include <fstream>
#include <optional>
#include <set>
#include <sstream>

namespace deepfm {

struct Sample {
  std::string patient_id;
  std::string visit_id;
  bool is_baseline = false;
  /// One entry per schema data column. Categorical entries hold the
  /// category index; std::nullopt marks a missing value.
  std::vector<std::optional<double>> values;
  std::size_t label = 0;
};

/// Encoded samples ready for training: one raw input vector per sample.
struct EncodedSet {
  std::vector<Vector> inputs;
  std::vector<std::size_t> labels;
  std::vector<std::string> patient_ids;

  std::size_t size() const { return inputs.size(); }
  bool empty() const { return inputs.empty(); }
};

inline constexpr std::string_view kReservedColumns[] = {"patient_id", "visit_id", "is_baseline",
                                                        "label"};

inline std::vector<Sample> parse_dataset(std::string_view text, const FeatureSchema& schema,
                                         const std::string& source = "<dataset>",
                                         char delimiter = ',') {
  std::vector<Sample> samples;
  auto lines = split(text, '\n');
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw ParseError(source, 1, "header", "missing header row");

  auto strip_cr = [](std::string& s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
  };
  strip_cr(lines[0]);
  const auto header = split(lines[0], delimiter);
  if (header.size() < 4)
    throw ParseError(source, 1, "header", "expected patient_id,visit_id,is_baseline,label,...");
  for (std::size_t i = 0; i < 4; ++i)
    if (trim(header[i]) != kReservedColumns[i])
      throw ParseError(source, 1, header[i],
                       "expected '" + std::string(kReservedColumns[i]) + "'");

  // position in file -> schema column index
  std::vector<std::size_t> column_of;
  std::set<std::size_t> covered;
  for (std::size_t i = 4; i < header.size(); ++i) {
    const auto name = std::string(trim(header[i]));
    auto idx = schema.column_index(name);
    if (!idx) throw ParseError(source, 1, name, "column not declared in schema");
    if (!covered.insert(*idx).second) throw ParseError(source, 1, name, "duplicate column");
    column_of.push_back(*idx);
  }
  if (covered.size() != schema.num_columns()) {
    for (const auto& c : schema.columns())
      if (!covered.count(*schema.column_index(c.name)))
        throw ParseError(source, 1, c.name, "schema column missing from header");
  }

  const auto& columns = schema.columns();
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    strip_cr(lines[ln]);
    if (trim(lines[ln]).empty()) continue;
    const std::size_t line_no = ln + 1;
    const auto cells = split(lines[ln], delimiter);
    if (cells.size() != header.size())
      throw ParseError(source, line_no, "row",
                       "expected " + std::to_string(header.size()) + " cells, got " +
                           std::to_string(cells.size()));
    Sample s;
    s.patient_id = std::string(trim(cells[0]));
    s.visit_id = std::string(trim(cells[1]));
    if (s.patient_id.empty()) throw ParseError(source, line_no, "patient_id", "empty");
    const auto baseline = trim(cells[2]);
    if (baseline == "1" || baseline == "true") s.is_baseline = true;
    else if (baseline == "0" || baseline == "false") s.is_baseline = false;
    else throw ParseError(source, line_no, "is_baseline", "expected 0/1");
    auto label = schema.class_index(trim(cells[3]));
    if (!label)
      throw ParseError(source, line_no, "label",
                       "unknown class '" + std::string(trim(cells[3])) + "'");
    s.label = *label;

    s.values.assign(schema.num_columns(), std::nullopt);
    for (std::size_t k = 0; k < column_of.size(); ++k) {
      const auto& spec = columns[column_of[k]];
      const auto cell = trim(cells[k + 4]);
      if (cell.empty()) {
        if (spec.missing_policy == MissingPolicy::reject)
          throw ParseError(source, line_no, spec.name, "missing value under reject policy");
        continue;
      }
      if (spec.kind == FeatureKind::categorical) {
        auto it = std::find(spec.categories.begin(), spec.categories.end(), cell);
        if (it == spec.categories.end())
          throw ParseError(source, line_no, spec.name,
                           "unknown category '" + std::string(cell) + "'");
        s.values[column_of[k]] = static_cast<double>(it - spec.categories.begin());
      } else {
        double v = 0.0;
        if (!parse_double(cell, v) || !std::isfinite(v))
          throw ParseError(source, line_no, spec.name,
                           "unparseable number '" + std::string(cell) + "'");
        s.values[column_of[k]] = v;
      }
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

inline std::vector<Sample> load_dataset(const std::string& path, const FeatureSchema& schema,
                                        char delimiter = ',') {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str(), schema, path, delimiter);
}

inline std::string dataset_to_text(const std::vector<Sample>& samples,
                                   const FeatureSchema& schema, char delimiter = ',') {
  std::string out = "patient_id";
  out += delimiter;
  out += "visit_id";
  out += delimiter;
  out += "is_baseline";
  out += delimiter;
  out += "label";
  for (const auto& c : schema.columns()) {
    out += delimiter;
    out += c.name;
  }
  out += '\n';
  const auto& columns = schema.columns();
  for (const auto& s : samples) {
    out += s.patient_id;
    out += delimiter;
    out += s.visit_id;
    out += delimiter;
    out += s.is_baseline ? '1' : '0';
    out += delimiter;
    out += schema.class_labels().at(s.label);
    for (std::size_t k = 0; k < columns.size(); ++k) {
      out += delimiter;
      if (!s.values[k]) continue;
      if (columns[k].kind == FeatureKind::categorical)
        out += columns[k].categories.at(static_cast<std::size_t>(*s.values[k]));
      else
        out += format_double(*s.values[k]);
    }
    out += '\n';
  }
  return out;
}

inline void save_dataset(const std::vector<Sample>& samples, const FeatureSchema& schema,
                         const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset file '" + path + "'");
  out << dataset_to_text(samples, schema);
}

/// Per-column z-scoring with training statistics (population variance).
/// Zero-variance columns are centered but not scaled, and flagged.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;
  std::vector<bool> zero_variance;

  double apply(std::size_t column, double value) const {
    return (value - mean[column]) / scale[column];
  }
  double invert(std::size_t column, double value) const {
    return value * scale[column] + mean[column];
  }
};

inline Standardizer fit_standardizer(const std::vector<Sample>& samples,
                                     const FeatureSchema& schema) {
  if (samples.empty()) throw DataError("fit_standardizer: empty training set");
  const std::size_t cols = schema.num_columns();
  Standardizer st;
  st.mean.assign(cols, 0.0);
  st.scale.assign(cols, 1.0);
  st.zero_variance.assign(cols, false);
  for (std::size_t k = 0; k < cols; ++k) {
    if (schema.columns()[k].kind != FeatureKind::continuous) continue;
    // two-pass for accuracy
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& s : samples)
      if (s.values[k]) {
        sum += *s.values[k];
        ++count;
      }
    if (count == 0) {
      st.zero_variance[k] = true;
      continue;
    }
    const double mean = sum / static_cast<double>(count);
    double sq = 0.0;
    for (const auto& s : samples)
      if (s.values[k]) sq += (*s.values[k] - mean) * (*s.values[k] - mean);
    const double sd = std::sqrt(sq / static_cast<double>(count));
    st.mean[k] = mean;
    if (sd > 1e-12 * std::max(1.0, std::abs(mean))) {
      st.scale[k] = sd;
    } else {
      st.zero_variance[k] = true;
    }
  }
  return st;
}

/// Raw input vector x of width D. Missing zero_impute values become literal
/// zeros, bypassing standardization.
inline Vector encode(const Sample& sample, const FeatureSchema& schema, const Standardizer& st) {
  if (sample.values.size() != schema.num_columns())
    throw ShapeError("encode: sample has " + std::to_string(sample.values.size()) +
                     " values, schema has " + std::to_string(schema.num_columns()) + " columns");
  Vector x = Vector::Zero(static_cast<Eigen::Index>(schema.input_width()));
  const auto& columns = schema.columns();
  for (std::size_t i = 0; i < schema.num_features(); ++i) {
    auto pos = static_cast<Eigen::Index>(schema.offset(i));
    for (std::size_t col : schema.feature_columns(i)) {
      const auto& spec = columns[col];
      const auto& value = sample.values[col];
      if (!value && spec.missing_policy == MissingPolicy::reject)
        throw DataError("encode: patient '" + sample.patient_id + "' visit '" + sample.visit_id +
                        "' is missing '" + spec.name + "' (reject policy)");
      if (spec.kind == FeatureKind::categorical) {
        if (value) {
          const auto idx = static_cast<std::size_t>(*value);
          if (*value < 0 || idx >= spec.cardinality() || static_cast<double>(idx) != *value)
            throw DataError("encode: category index out of range for '" + spec.name + "'");
          x(pos + static_cast<Eigen::Index>(idx)) = 1.0;
        }
        pos += static_cast<Eigen::Index>(spec.cardinality());
      } else {
        if (value) x(pos) = st.apply(col, *value);
        ++pos;
      }
    }
  }
  return x;
}

inline EncodedSet encode_all(const std::vector<Sample>& samples, const FeatureSchema& schema,
                             const Standardizer& st) {
  EncodedSet out;
  out.inputs.reserve(samples.size());
  for (const auto& s : samples) {
    out.inputs.push_back(encode(s, schema, st));
    out.labels.push_back(s.label);
    out.patient_ids.push_back(s.patient_id);
  }
  return out;
}

}  // namespace deepfm
