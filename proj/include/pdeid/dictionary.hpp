#pragma once

#include "pdeid/derivatives.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace pdeid {

/// One partial-derivative factor: a field together with a spatial
/// multi-index (alpha all zero means the raw field value).
struct DerivativeFactor {
  int field = 0;
  MultiIndex alpha;

  bool operator==(const DerivativeFactor& o) const {
    return field == o.field && alpha == o.alpha;
  }
  bool operator<(const DerivativeFactor& o) const {
    if (field != o.field) return field < o.field;
    const int ta = total_order(alpha), tb = total_order(o.alpha);
    if (ta != tb) return ta < tb;
    return alpha > o.alpha;  // reverse-lex so x-derivatives precede y
  }
};

/// Dictionary entry f_k: either a product of derivative factors or
/// sin/cos of a single factor, never both.
struct FeatureDescriptor {
  enum class Kind { product, sin_of, cos_of };
  Kind kind = Kind::product;
  std::vector<DerivativeFactor> factors;  // sorted for products, single for trig

  static FeatureDescriptor product(std::vector<DerivativeFactor> fs) {
    if (fs.empty()) throw ConfigError("feature: a product needs at least one factor");
    std::sort(fs.begin(), fs.end());
    return {Kind::product, std::move(fs)};
  }
  static FeatureDescriptor sin_of(DerivativeFactor f) { return {Kind::sin_of, {std::move(f)}}; }
  static FeatureDescriptor cos_of(DerivativeFactor f) { return {Kind::cos_of, {std::move(f)}}; }

  bool operator==(const FeatureDescriptor& o) const {
    return kind == o.kind && factors == o.factors;
  }
  int max_spatial_order() const {
    int m = 0;
    for (const auto& f : factors) m = std::max(m, total_order(f.alpha));
    return m;
  }
};

inline std::string factor_to_string(const DerivativeFactor& f,
                                    std::span<const std::string> field_names) {
  static const char axis_letter[2] = {'x', 'y'};
  std::string s = field_names[f.field];
  if (total_order(f.alpha) > 0) {
    s += '_';
    for (std::size_t a = 0; a < f.alpha.size(); ++a)
      s.append(f.alpha[a], axis_letter[a]);
  }
  return s;
}

inline std::string to_string(const FeatureDescriptor& d,
                             std::span<const std::string> field_names) {
  if (d.kind == FeatureDescriptor::Kind::sin_of)
    return "sin(" + factor_to_string(d.factors[0], field_names) + ")";
  if (d.kind == FeatureDescriptor::Kind::cos_of)
    return "cos(" + factor_to_string(d.factors[0], field_names) + ")";
  std::string s;
  for (std::size_t i = 0; i < d.factors.size(); ++i) {
    if (i) s += '*';
    s += factor_to_string(d.factors[i], field_names);
  }
  return s;
}

inline DerivativeFactor parse_factor(const std::string& token,
                                     std::span<const std::string> field_names, int dim) {
  // Longest field-name match, then an optional _x/_y subscript run.
  int best = -1;
  std::size_t best_len = 0;
  for (std::size_t i = 0; i < field_names.size(); ++i) {
    const auto& nm = field_names[i];
    if (token.rfind(nm, 0) == 0 && nm.size() > best_len) {
      best = static_cast<int>(i);
      best_len = nm.size();
    }
  }
  if (best < 0) throw ConfigError("feature parse: unknown field in '" + token + "'");
  DerivativeFactor f;
  f.field = best;
  f.alpha.assign(dim, 0);
  std::string rest = token.substr(best_len);
  if (rest.empty()) return f;
  if (rest[0] != '_') throw ConfigError("feature parse: malformed factor '" + token + "'");
  for (std::size_t i = 1; i < rest.size(); ++i) {
    if (rest[i] == 'x') ++f.alpha[0];
    else if (rest[i] == 'y' && dim > 1) ++f.alpha[1];
    else throw ConfigError("feature parse: bad subscript in '" + token + "'");
  }
  return f;
}

inline FeatureDescriptor parse_descriptor(const std::string& text,
                                          std::span<const std::string> field_names,
                                          int dim) {
  auto parse_trig = [&](const std::string& fn,
                        FeatureDescriptor::Kind kind) -> FeatureDescriptor {
    const std::string inner = text.substr(fn.size() + 1, text.size() - fn.size() - 2);
    FeatureDescriptor d;
    d.kind = kind;
    d.factors = {parse_factor(inner, field_names, dim)};
    return d;
  };
  if (text.rfind("sin(", 0) == 0 && text.back() == ')')
    return parse_trig("sin", FeatureDescriptor::Kind::sin_of);
  if (text.rfind("cos(", 0) == 0 && text.back() == ')')
    return parse_trig("cos", FeatureDescriptor::Kind::cos_of);
  std::vector<DerivativeFactor> fs;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t next = text.find('*', pos);
    const std::string tok =
        text.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
    fs.push_back(parse_factor(tok, field_names, dim));
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return FeatureDescriptor::product(std::move(fs));
}

/// Ordered feature catalogue; indices are stable for the lifetime of an
/// experiment.
class Dictionary {
 public:
  Dictionary(std::vector<std::string> field_names, std::vector<FeatureDescriptor> entries,
             int dim)
      : field_names_(std::move(field_names)), entries_(std::move(entries)), dim_(dim) {
    for (std::size_t i = 0; i < entries_.size(); ++i)
      for (std::size_t j = i + 1; j < entries_.size(); ++j)
        if (entries_[i] == entries_[j])
          throw ConfigError("dictionary: duplicate descriptor '" +
                            pdeid::to_string(entries_[i], field_names_) + "'");
  }

  int size() const { return static_cast<int>(entries_.size()); }
  int dim() const { return dim_; }
  const FeatureDescriptor& entry(int k) const { return entries_.at(k); }
  const std::vector<FeatureDescriptor>& entries() const { return entries_; }
  const std::vector<std::string>& field_names() const { return field_names_; }

  std::string entry_string(int k) const { return pdeid::to_string(entries_.at(k), field_names_); }

  int index_of(const FeatureDescriptor& d) const {
    for (int k = 0; k < size(); ++k)
      if (entries_[k] == d) return k;
    return -1;
  }
  int index_of(const std::string& s) const {
    return index_of(parse_descriptor(s, field_names_, dim_));
  }

  /// Largest spatial derivative order appearing anywhere in the dictionary.
  int max_spatial_order() const {
    int m = 0;
    for (const auto& e : entries_) m = std::max(m, e.max_spatial_order());
    return m;
  }

 private:
  std::vector<std::string> field_names_;
  std::vector<FeatureDescriptor> entries_;
  int dim_;
};

namespace detail {
inline void enumerate_alphas(int dim, int max_order, MultiIndex& cur, int axis,
                             std::vector<MultiIndex>& out) {
  if (axis == dim) {
    out.push_back(cur);
    return;
  }
  int used = 0;
  for (int a = 0; a < axis; ++a) used += cur[a];
  for (int o = 0; o <= max_order - used; ++o) {
    cur[axis] = o;
    enumerate_alphas(dim, max_order, cur, axis + 1, out);
  }
  cur[axis] = 0;
}
}  // namespace detail

/// All products of 1..max_product_terms base derivatives (|alpha| up to
/// max_derivative_order, every field), in canonical order, followed by the
/// given trig terms.
inline Dictionary build_dictionary(std::vector<std::string> field_names, int dim,
                                   int max_derivative_order, int max_product_terms,
                                   std::vector<FeatureDescriptor> trig_terms = {}) {
  if (field_names.empty()) throw ConfigError("build_dictionary: empty field list");
  if (max_derivative_order < 0 || max_product_terms < 1)
    throw ConfigError("build_dictionary: invalid order/product limits");

  std::vector<MultiIndex> alphas;
  MultiIndex cur(dim, 0);
  detail::enumerate_alphas(dim, max_derivative_order, cur, 0, alphas);

  std::vector<DerivativeFactor> base;
  for (int f = 0; f < static_cast<int>(field_names.size()); ++f)
    for (const auto& a : alphas) base.push_back({f, a});
  std::sort(base.begin(), base.end());

  // Multisets as non-decreasing index tuples: smallest size first, then
  // lexicographic within a size.
  std::vector<FeatureDescriptor> all;
  std::vector<int> pick;
  auto emit_exact = [&](auto&& self, int start, int remaining) -> void {
    if (remaining == 0) {
      std::vector<DerivativeFactor> fs;
      fs.reserve(pick.size());
      for (int i : pick) fs.push_back(base[i]);
      all.push_back(FeatureDescriptor::product(std::move(fs)));
      return;
    }
    for (int i = start; i < static_cast<int>(base.size()); ++i) {
      pick.push_back(i);
      self(self, i, remaining - 1);
      pick.pop_back();
    }
  };
  for (int size = 1; size <= max_product_terms; ++size) emit_exact(emit_exact, 0, size);
  for (auto& t : trig_terms) all.push_back(std::move(t));
  return Dictionary(std::move(field_names), std::move(all), dim);
}

}  // namespace pdeid
