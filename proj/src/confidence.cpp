#include "conflearn/confidence.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace conflearn {

ClassSet ClassSet::all(int num_classes) {
  ClassSet out;
  for (int y = 0; y < num_classes; ++y) out.members.push_back(y);
  return out;
}

ClassSet ClassSet::parse(std::string_view text) {
  ClassSet out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = std::min(text.find(',', start), text.size());
    std::string_view token = text.substr(start, comma - start);
    while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
    while (!token.empty() && token.back() == ' ') token.remove_suffix(1);
    int label = 0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), label);
    if (token.empty() || ec != std::errc{} || ptr != token.data() + token.size()) {
      throw ArgumentError("cannot parse class set '" + std::string(text) + "'");
    }
    if (label < 1) throw ArgumentError("class labels are one-based");
    out.members.push_back(label - 1);
    start = comma + 1;
  }
  std::sort(out.members.begin(), out.members.end());
  if (std::adjacent_find(out.members.begin(), out.members.end()) != out.members.end()) {
    throw ArgumentError("class set has duplicate labels: '" + std::string(text) + "'");
  }
  return out;
}

std::string ClassSet::to_string() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (i) out << ',';
    out << members[i] + 1;
  }
  return out.str();
}

bool ClassSet::contains(ClassIndex y) const {
  return std::binary_search(members.begin(), members.end(), y);
}

void ClassSet::validate(int num_classes) const {
  if (members.empty()) throw ArgumentError("class set is empty");
  if (!std::is_sorted(members.begin(), members.end()) ||
      std::adjacent_find(members.begin(), members.end()) != members.end()) {
    throw ArgumentError("class set must be sorted and unique");
  }
  if (members.front() < 0 || members.back() >= num_classes) {
    throw ArgumentError("class set " + to_string() + " outside 1.." + std::to_string(num_classes));
  }
}

double mass(const Vector& r, const ClassSet& set) {
  double total = 0.0;
  for (ClassIndex y : set.members) {
    if (y < 0 || y >= r.size()) throw ClassIndexError("class set member outside confidence vector");
    total += r(y);
  }
  return total;
}

Vector normalize_confidence(const Vector& r, double tolerance) {
  if (r.size() == 0) throw ArgumentError("confidence vector is empty");
  for (Index i = 0; i < r.size(); ++i) {
    if (!std::isfinite(r(i)) || r(i) < -tolerance || r(i) > 1.0 + tolerance) {
      throw ArgumentError("confidence entries must lie in [0, 1]");
    }
  }
  const Vector clipped = r.cwiseMax(0.0).cwiseMin(1.0);
  const double total = clipped.sum();
  if (std::abs(total - 1.0) > tolerance) {
    std::ostringstream msg;
    msg << "confidence vector sums to " << total << ", not 1";
    throw ArgumentError(msg.str());
  }
  return clipped / total;
}

Matrix normalize_confidence_rows(const Matrix& rows, double tolerance) {
  Matrix out(rows.rows(), rows.cols());
  for (Index i = 0; i < rows.rows(); ++i) {
    out.row(i) = normalize_confidence(rows.row(i).transpose(), tolerance).transpose();
  }
  return out;
}

}  // namespace conflearn
