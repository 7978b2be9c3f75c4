#include "conflearn/io.hpp"

#include "conflearn/confidence.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

namespace conflearn {

std::string format_double(double value) {
  std::array<char, 64> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc{}) throw NumericError("cannot format number");
  return std::string(buf.data(), end);
}

nlohmann::json mlp_to_json(const Mlp& model) {
  nlohmann::json doc;
  doc["layer_dims"] = model.layer_dims;
  doc["weights"] = nlohmann::json::array();
  doc["biases"] = nlohmann::json::array();
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    const Matrix& w = model.weights[l];
    nlohmann::json rows = nlohmann::json::array();
    for (Index r = 0; r < w.rows(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(w.cols()));
      for (Index c = 0; c < w.cols(); ++c) row[static_cast<std::size_t>(c)] = w(r, c);
      rows.push_back(std::move(row));
    }
    doc["weights"].push_back(std::move(rows));
    const Vector& b = model.biases[l];
    doc["biases"].push_back(std::vector<double>(b.data(), b.data() + b.size()));
  }
  return doc;
}

Mlp mlp_from_json(const nlohmann::json& doc) {
  try {
    Mlp model = make_zero_mlp(doc.at("layer_dims").get<std::vector<Index>>());
    const auto& weights = doc.at("weights");
    const auto& biases = doc.at("biases");
    if (weights.size() != model.num_layers() || biases.size() != model.num_layers()) {
      throw ShapeError("model JSON: layer count does not match layer_dims");
    }
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
      const auto rows = weights[l].get<std::vector<std::vector<double>>>();
      Matrix& w = model.weights[l];
      if (static_cast<Index>(rows.size()) != w.rows()) throw ShapeError("model JSON: weight rows mismatch");
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (static_cast<Index>(rows[r].size()) != w.cols()) throw ShapeError("model JSON: weight cols mismatch");
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
          w(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
        }
      }
      const auto b = biases[l].get<std::vector<double>>();
      if (static_cast<Index>(b.size()) != model.biases[l].size()) throw ShapeError("model JSON: bias mismatch");
      model.biases[l] = Eigen::Map<const Vector>(b.data(), static_cast<Index>(b.size()));
    }
    if (!model.all_finite()) throw NumericError("model JSON: non-finite parameter");
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("model JSON: ") + e.what());
  }
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& cell, const std::filesystem::path& path, std::size_t line) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) {
    throw ArgumentError(path.string() + ":" + std::to_string(line) + ": cannot parse '" + cell + "'");
  }
  return value;
}

struct RawCsv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

RawCsv read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  RawCsv csv;
  std::string line;
  if (!std::getline(in, line)) throw ArgumentError("'" + path.string() + "' is empty");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  csv.header = split_line(line);
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto cells = split_line(line);
    if (cells.size() != csv.header.size()) {
      throw ArgumentError(path.string() + ":" + std::to_string(csv.rows.size() + 2) +
                          ": expected " + std::to_string(csv.header.size()) + " fields");
    }
    csv.rows.push_back(std::move(cells));
  }
  return csv;
}

// Number of leading columns named prefix0, prefix1, ...
Index count_prefixed(const std::vector<std::string>& header, std::size_t start, char prefix) {
  Index count = 0;
  while (start + static_cast<std::size_t>(count) < header.size() &&
         header[start + static_cast<std::size_t>(count)] == prefix + std::to_string(count)) {
    ++count;
  }
  return count;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  return out;
}

void write_header(std::ostream& out, Index d) {
  for (Index j = 0; j < d; ++j) out << (j ? "," : "") << 'x' << j;
}

void write_row(std::ostream& out, const Matrix& m, Index i) {
  for (Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m(i, j));
}

Matrix parse_block(const RawCsv& csv, std::size_t start, Index width, const std::filesystem::path& path) {
  Matrix out(static_cast<Index>(csv.rows.size()), width);
  for (std::size_t i = 0; i < csv.rows.size(); ++i) {
    for (Index j = 0; j < width; ++j) {
      out(static_cast<Index>(i), j) = parse_double(csv.rows[i][start + static_cast<std::size_t>(j)], path, i + 2);
    }
  }
  return out;
}

}  // namespace

void write_confidence_csv(const std::filesystem::path& path, const Matrix& instances,
                          const Matrix& confidences) {
  if (instances.rows() != confidences.rows()) throw ShapeError("one confidence row per instance required");
  auto out = open_out(path);
  write_header(out, instances.cols());
  for (Index k = 0; k < confidences.cols(); ++k) out << ",r" << k;
  out << '\n';
  for (Index i = 0; i < instances.rows(); ++i) {
    write_row(out, instances, i);
    out << ',';
    write_row(out, confidences, i);
    out << '\n';
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

ConfidenceTable read_confidence_csv(const std::filesystem::path& path) {
  const RawCsv csv = read_csv(path);
  const Index d = count_prefixed(csv.header, 0, 'x');
  const Index k = count_prefixed(csv.header, static_cast<std::size_t>(d), 'r');
  if (d < 1 || k < 1 || static_cast<std::size_t>(d + k) != csv.header.size()) {
    throw ArgumentError("'" + path.string() + "': header must be x0..x{d-1},r0..r{K-1}");
  }
  if (csv.rows.empty()) throw ArgumentError("'" + path.string() + "' has no data rows");
  ConfidenceTable table;
  table.instances = parse_block(csv, 0, d, path);
  table.confidences = normalize_confidence_rows(parse_block(csv, static_cast<std::size_t>(d), k, path));
  return table;
}

void write_unlabeled_csv(const std::filesystem::path& path, const Matrix& instances) {
  auto out = open_out(path);
  write_header(out, instances.cols());
  out << '\n';
  for (Index i = 0; i < instances.rows(); ++i) {
    write_row(out, instances, i);
    out << '\n';
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Matrix read_unlabeled_csv(const std::filesystem::path& path) {
  const RawCsv csv = read_csv(path);
  const Index d = count_prefixed(csv.header, 0, 'x');
  if (d < 1 || static_cast<std::size_t>(d) != csv.header.size()) {
    throw ArgumentError("'" + path.string() + "': header must be x0..x{d-1}");
  }
  if (csv.rows.empty()) throw ArgumentError("'" + path.string() + "' has no data rows");
  return parse_block(csv, 0, d, path);
}

void write_labeled_csv(const std::filesystem::path& path, const Matrix& instances,
                       const std::vector<ClassIndex>& labels) {
  if (static_cast<Index>(labels.size()) != instances.rows()) throw ShapeError("one label per instance required");
  auto out = open_out(path);
  write_header(out, instances.cols());
  out << ",y\n";
  for (Index i = 0; i < instances.rows(); ++i) {
    write_row(out, instances, i);
    out << ',' << labels[static_cast<std::size_t>(i)] + 1 << '\n';
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

LabeledTable read_labeled_csv(const std::filesystem::path& path) {
  const RawCsv csv = read_csv(path);
  const Index d = count_prefixed(csv.header, 0, 'x');
  if (d < 1 || static_cast<std::size_t>(d) + 1 != csv.header.size() || csv.header.back() != "y") {
    throw ArgumentError("'" + path.string() + "': header must be x0..x{d-1},y");
  }
  if (csv.rows.empty()) throw ArgumentError("'" + path.string() + "' has no data rows");
  LabeledTable table;
  table.instances = parse_block(csv, 0, d, path);
  for (std::size_t i = 0; i < csv.rows.size(); ++i) {
    const std::string& cell = csv.rows[i].back();
    int label = 0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), label);
    if (ec != std::errc{} || ptr != cell.data() + cell.size() || label < 1) {
      throw ArgumentError(path.string() + ":" + std::to_string(i + 2) + ": label must be a positive integer");
    }
    table.labels.push_back(label - 1);
  }
  return table;
}

}  // namespace conflearn
