#pragma once

// File formats. CSVs are comma-delimited UTF-8 with a header row:
//   confidence data  x0..x{d-1},r0..r{K-1}
//   unlabeled data   x0..x{d-1}
//   labeled data     x0..x{d-1},y        (y one-based)
// Reals are written in shortest round-trip form, so write-read is exact.

#include "conflearn/common.hpp"
#include "conflearn/mlp.hpp"

#include <filesystem>
#include <string>

#include "json.hpp"

namespace conflearn {

std::string format_double(double value);

/// {"layer_dims": [...], "weights": [[[row]...]...], "biases": [[...]...]}
/// with weight matrices stored row-major (one list per output unit).
nlohmann::json mlp_to_json(const Mlp& model);
Mlp mlp_from_json(const nlohmann::json& doc);

nlohmann::json read_json_file(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc);

struct ConfidenceTable {
  Matrix instances;
  Matrix confidences;
};

void write_confidence_csv(const std::filesystem::path& path, const Matrix& instances,
                          const Matrix& confidences);
/// Confidence rows are validated and renormalized on ingest.
ConfidenceTable read_confidence_csv(const std::filesystem::path& path);

void write_unlabeled_csv(const std::filesystem::path& path, const Matrix& instances);
Matrix read_unlabeled_csv(const std::filesystem::path& path);

void write_labeled_csv(const std::filesystem::path& path, const Matrix& instances,
                       const std::vector<ClassIndex>& labels);
struct LabeledTable {
  Matrix instances;
  std::vector<ClassIndex> labels;  // zero-based
};
LabeledTable read_labeled_csv(const std::filesystem::path& path);

}  // namespace conflearn
