#pragma once

#include "conflearn/common.hpp"

#include <string>
#include <string_view>

namespace conflearn {

/// A nonempty set of class indices (sorted, unique). Conditions single-class
/// data ({y_s}) and class-subset data.
struct ClassSet {
  std::vector<ClassIndex> members;

  static ClassSet single(ClassIndex y) { return ClassSet{{y}}; }
  static ClassSet all(int num_classes);

  /// Parses one-based labels such as "3" or "2,3".
  static ClassSet parse(std::string_view text);
  /// One-based, comma separated.
  std::string to_string() const;

  bool contains(ClassIndex y) const;
  bool is_singleton() const { return members.size() == 1; }
  std::size_t size() const { return members.size(); }

  /// Throws ArgumentError unless nonempty, unique and within [0, K).
  void validate(int num_classes) const;

  friend bool operator==(const ClassSet&, const ClassSet&) = default;
};

/// Sum of `r` over the members of `set`.
double mass(const Vector& r, const ClassSet& set);

/// Validates a confidence vector and returns it renormalized: entries must
/// lie in [0, 1] and sum to 1 within `tolerance`.
Vector normalize_confidence(const Vector& r, double tolerance = 1e-6);

/// Row-wise normalize_confidence on an n x K matrix.
Matrix normalize_confidence_rows(const Matrix& rows, double tolerance = 1e-6);

}  // namespace conflearn
