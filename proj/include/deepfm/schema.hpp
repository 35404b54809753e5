#pragma once

// Feature schema: which columns a dataset carries, how each model feature
// is built from them, and the class labels.
//
// Text format, one declaration per line ('#' starts a comment):
//
//   classes AD MCI CN
//   continuous <name> [missing=reject|zero_impute] [tags=a,b]
//   categorical <name> categories=c1,c2,... | cardinality=N [missing=..] [tags=..]
//   group <name> members=m1,m2,... [tags=..]
//
// Continuous and categorical declarations are data columns. A group turns the
// continuous columns it lists into a single model feature (a meta-embedding);
// listed columns stop being standalone features. Model features keep
// declaration order, a group sitting where its own line appears.

#include "deepfm/common.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace deepfm {

enum class FeatureKind { continuous, categorical, group };
enum class MissingPolicy { reject, zero_impute };

inline std::string_view to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::continuous: return "continuous";
    case FeatureKind::categorical: return "categorical";
    case FeatureKind::group: return "group";
  }
  return "?";
}

inline std::string_view to_string(MissingPolicy p) {
  return p == MissingPolicy::reject ? "reject" : "zero_impute";
}

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::continuous;
  std::vector<std::string> categories;  // categorical
  std::vector<std::string> members;     // group
  MissingPolicy missing_policy = MissingPolicy::reject;
  std::vector<std::string> tags;

  std::size_t cardinality() const { return categories.size(); }

  /// Raw encoding width d_i.
  std::size_t width() const {
    switch (kind) {
      case FeatureKind::continuous: return 1;
      case FeatureKind::categorical: return categories.size();
      case FeatureKind::group: return members.size();
    }
    return 0;
  }

  bool has_tag(std::string_view tag) const {
    return std::find(tags.begin(), tags.end(), tag) != tags.end();
  }
};

class FeatureSchema {
 public:
  FeatureSchema() = default;

  /// Validates declarations and derives the model feature list.
  FeatureSchema(std::vector<FeatureSpec> declarations,
                std::vector<std::string> class_labels)
      : declarations_(std::move(declarations)),
        class_labels_(std::move(class_labels)) {
    build();
  }

  const std::vector<FeatureSpec>& declarations() const { return declarations_; }
  const std::vector<FeatureSpec>& features() const { return features_; }
  const std::vector<FeatureSpec>& columns() const { return columns_; }
  const std::vector<std::string>& class_labels() const { return class_labels_; }

  std::size_t num_features() const { return features_.size(); }
  std::size_t num_columns() const { return columns_.size(); }
  std::size_t num_classes() const { return class_labels_.size(); }
  std::size_t input_width() const { return offsets_.empty() ? 0 : offsets_.back(); }
  std::size_t pair_count() const { return num_features() * (num_features() - 1) / 2; }

  /// Start of feature i's slice in the encoded input vector.
  std::size_t offset(std::size_t feature) const { return offsets_.at(feature); }
  std::size_t width(std::size_t feature) const { return features_.at(feature).width(); }

  /// Data columns feeding feature i, in encoding order.
  const std::vector<std::size_t>& feature_columns(std::size_t feature) const {
    return feature_columns_.at(feature);
  }

  std::optional<std::size_t> column_index(std::string_view name) const {
    auto it = column_lookup_.find(std::string(name));
    if (it == column_lookup_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<std::size_t> feature_index(std::string_view name) const {
    for (std::size_t i = 0; i < features_.size(); ++i)
      if (features_[i].name == name) return i;
    return std::nullopt;
  }

  std::optional<std::size_t> class_index(std::string_view label) const {
    for (std::size_t c = 0; c < class_labels_.size(); ++c)
      if (class_labels_[c] == label) return c;
    return std::nullopt;
  }

  /// Name of every encoded input column: "age", "apoe=e3e3", member names.
  std::vector<std::string> input_names() const {
    std::vector<std::string> names;
    names.reserve(input_width());
    for (const auto& f : features_) {
      switch (f.kind) {
        case FeatureKind::continuous: names.push_back(f.name); break;
        case FeatureKind::categorical:
          for (const auto& c : f.categories) names.push_back(f.name + "=" + c);
          break;
        case FeatureKind::group:
          for (const auto& m : f.members) names.push_back(m);
          break;
      }
    }
    return names;
  }

  std::string to_text() const {
    std::ostringstream out;
    out << "classes";
    for (const auto& c : class_labels_) out << ' ' << c;
    out << '\n';
    auto join = [](const std::vector<std::string>& items) {
      std::string s;
      for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) s += ',';
        s += items[i];
      }
      return s;
    };
    for (const auto& d : declarations_) {
      out << to_string(d.kind) << ' ' << d.name;
      if (d.kind == FeatureKind::categorical) out << " categories=" << join(d.categories);
      if (d.kind == FeatureKind::group) out << " members=" << join(d.members);
      if (d.kind != FeatureKind::group) out << " missing=" << to_string(d.missing_policy);
      if (!d.tags.empty()) out << " tags=" << join(d.tags);
      out << '\n';
    }
    return out.str();
  }

  std::uint64_t hash() const { return fnv1a64(to_text()); }

 private:
  void build() {
    if (class_labels_.size() < 2)
      throw SchemaError("schema needs at least two class labels");
    for (std::size_t a = 0; a < class_labels_.size(); ++a)
      for (std::size_t b = a + 1; b < class_labels_.size(); ++b)
        if (class_labels_[a] == class_labels_[b])
          throw SchemaError("duplicate class label '" + class_labels_[a] + "'");

    std::map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < declarations_.size(); ++i) {
      const auto& d = declarations_[i];
      if (d.name.empty()) throw SchemaError("feature with empty name");
      if (!seen.emplace(d.name, i).second)
        throw SchemaError("duplicate feature name '" + d.name + "'");
      if (d.kind == FeatureKind::categorical) {
        if (d.categories.size() < 2)
          throw SchemaError("categorical feature '" + d.name + "' needs cardinality >= 2");
        auto cats = d.categories;
        std::sort(cats.begin(), cats.end());
        if (std::adjacent_find(cats.begin(), cats.end()) != cats.end())
          throw SchemaError("categorical feature '" + d.name + "' has duplicate categories");
      }
    }

    for (const auto& d : declarations_)
      if (d.kind != FeatureKind::group) {
        column_lookup_.emplace(d.name, columns_.size());
        columns_.push_back(d);
      }

    std::map<std::string, std::string> owner;
    for (const auto& d : declarations_) {
      if (d.kind != FeatureKind::group) continue;
      if (d.members.empty()) throw SchemaError("group '" + d.name + "' has no members");
      for (const auto& m : d.members) {
        auto it = seen.find(m);
        if (it == seen.end())
          throw SchemaError("group '" + d.name + "' references undeclared member '" + m + "'");
        if (declarations_[it->second].kind != FeatureKind::continuous)
          throw SchemaError("group '" + d.name + "' member '" + m + "' is not continuous");
        if (!owner.emplace(m, d.name).second)
          throw SchemaError("member '" + m + "' listed twice (in '" + owner[m] + "' and '" +
                            d.name + "')");
      }
    }

    offsets_.push_back(0);
    for (const auto& d : declarations_) {
      if (d.kind != FeatureKind::group && owner.count(d.name)) continue;
      std::vector<std::size_t> cols;
      if (d.kind == FeatureKind::group) {
        for (const auto& m : d.members) cols.push_back(column_lookup_.at(m));
      } else {
        cols.push_back(column_lookup_.at(d.name));
      }
      features_.push_back(d);
      feature_columns_.push_back(std::move(cols));
      offsets_.push_back(offsets_.back() + d.width());
    }
    if (features_.empty()) throw SchemaError("schema declares no features");
  }

  std::vector<FeatureSpec> declarations_;
  std::vector<std::string> class_labels_;
  std::vector<FeatureSpec> features_;
  std::vector<FeatureSpec> columns_;
  std::vector<std::vector<std::size_t>> feature_columns_;
  std::vector<std::size_t> offsets_;
  std::map<std::string, std::size_t> column_lookup_;
};

inline FeatureSchema parse_schema(std::string_view text, const std::string& source = "<schema>") {
  std::vector<FeatureSpec> decls;
  std::optional<std::vector<std::string>> classes;
  std::size_t line_no = 0;

  auto tokenize = [](std::string_view line) {
    std::vector<std::string> tokens;
    std::istringstream in{std::string(line)};
    for (std::string tok; in >> tok;) tokens.push_back(tok);
    return tokens;
  };
  auto list = [](const std::string& v) {
    std::vector<std::string> items;
    for (auto& item : split(v, ','))
      if (!trim(item).empty()) items.emplace_back(trim(item));
    return items;
  };

  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto tokens = tokenize(line);
    if (tokens.empty()) continue;

    const auto& keyword = tokens[0];
    if (keyword == "classes") {
      if (classes) throw ParseError(source, line_no, "classes", "declared twice");
      classes = std::vector<std::string>(tokens.begin() + 1, tokens.end());
      continue;
    }

    FeatureSpec spec;
    if (keyword == "continuous") spec.kind = FeatureKind::continuous;
    else if (keyword == "categorical") spec.kind = FeatureKind::categorical;
    else if (keyword == "group") spec.kind = FeatureKind::group;
    else throw ParseError(source, line_no, "kind", "unknown kind '" + keyword + "'");

    if (tokens.size() < 2 || tokens[1].find('=') != std::string::npos)
      throw ParseError(source, line_no, "name", "missing feature name");
    spec.name = tokens[1];

    for (std::size_t t = 2; t < tokens.size(); ++t) {
      const auto eq = tokens[t].find('=');
      if (eq == std::string::npos)
        throw ParseError(source, line_no, tokens[t], "expected key=value");
      const std::string key = tokens[t].substr(0, eq);
      const std::string value = tokens[t].substr(eq + 1);
      if (key == "missing") {
        if (spec.kind == FeatureKind::group)
          throw ParseError(source, line_no, key, "groups take their members' policies");
        if (value == "reject") spec.missing_policy = MissingPolicy::reject;
        else if (value == "zero_impute") spec.missing_policy = MissingPolicy::zero_impute;
        else throw ParseError(source, line_no, key, "unknown policy '" + value + "'");
      } else if (key == "tags") {
        spec.tags = list(value);
      } else if (key == "categories" && spec.kind == FeatureKind::categorical) {
        spec.categories = list(value);
      } else if (key == "cardinality" && spec.kind == FeatureKind::categorical) {
        std::size_t card = 0;
        if (!parse_int(value, card))
          throw ParseError(source, line_no, key, "not an integer: '" + value + "'");
        spec.categories.clear();
        for (std::size_t c = 0; c < card; ++c) spec.categories.push_back(std::to_string(c));
      } else if (key == "members" && spec.kind == FeatureKind::group) {
        spec.members = list(value);
      } else {
        throw ParseError(source, line_no, key,
                         "not valid for " + std::string(to_string(spec.kind)) + " features");
      }
    }
    if (spec.kind == FeatureKind::categorical && spec.categories.empty())
      throw ParseError(source, line_no, "categories", "categorical feature without categories");
    decls.push_back(std::move(spec));
  }

  if (!classes) throw ParseError(source, line_no, "classes", "no 'classes' line");
  try {
    return FeatureSchema(std::move(decls), std::move(*classes));
  } catch (const SchemaError& e) {
    throw SchemaError(source + ": " + e.what());
  }
}

inline FeatureSchema load_schema(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open schema file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_schema(buf.str(), path);
}

inline void save_schema(const FeatureSchema& schema, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write schema file '" + path + "'");
  out << schema.to_text();
}

}  // namespace deepfm
