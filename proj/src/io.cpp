#include "uwbpose/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <numbers>
#include <sstream>
#include <system_error>

#include <json.hpp>

namespace uwbpose {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void schema_error(const std::string& what) { throw Error(ErrorCode::schema, what); }

json parse_json(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    schema_error(std::string("malformed JSON: ") + e.what());
  }
}

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) schema_error(where + " must be an object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (auto a : allowed) known = known || item.key() == a;
    if (!known) schema_error("unknown key '" + item.key() + "' in " + where);
  }
}

const json& require(const json& obj, const std::string& key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) schema_error(where + " is missing '" + key + "'");
  return *it;
}

double as_number(const json& v, const std::string& what) {
  if (!v.is_number()) schema_error(what + " must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) schema_error(what + " must be finite");
  return d;
}

std::size_t as_count(const json& v, const std::string& what) {
  if (!v.is_number_integer() && !v.is_number_unsigned()) schema_error(what + " must be an integer");
  const auto i = v.get<long long>();
  if (i < 1) schema_error(what + " must be >= 1");
  return static_cast<std::size_t>(i);
}

Vec2 as_point(const json& v, const std::string& what) {
  if (!v.is_array() || v.size() != 2) schema_error(what + " must be [x, y]");
  return {as_number(v[0], what), as_number(v[1], what)};
}

std::vector<Vec2> as_points(const json& v, const std::string& what) {
  if (!v.is_array() || v.empty()) schema_error(what + " must be a non-empty list of [x, y]");
  std::vector<Vec2> out;
  for (std::size_t k = 0; k < v.size(); ++k) {
    out.push_back(as_point(v[k], what + "[" + std::to_string(k) + "]"));
  }
  return out;
}

std::vector<std::string> as_strings(const json& v, const std::string& what) {
  if (!v.is_array()) schema_error(what + " must be a list of strings");
  std::vector<std::string> out;
  for (const auto& s : v) {
    if (!s.is_string()) schema_error(what + " must be a list of strings");
    out.push_back(s.get<std::string>());
  }
  return out;
}

// Scalar, N x M nested list, or {"slots": [...]} with slot k = m * N + i.
Eigen::MatrixXd as_pair_matrix(const json& v, std::size_t n, std::size_t m,
                               const std::string& what) {
  const auto rows = static_cast<Eigen::Index>(n);
  const auto cols = static_cast<Eigen::Index>(m);
  if (v.is_number()) return Eigen::MatrixXd::Constant(rows, cols, as_number(v, what));
  if (v.is_object()) {
    check_keys(v, what, {"slots"});
    const json& slots = require(v, "slots", what);
    if (!slots.is_array() || slots.size() != n * m) {
      schema_error(what + ".slots must hold tags x anchors = " + std::to_string(n * m) +
                   " values");
    }
    Eigen::MatrixXd out(rows, cols);
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t i = 0; i < n; ++i) {
        out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) =
            as_number(slots[a * n + i], what);
      }
    }
    return out;
  }
  if (!v.is_array() || v.size() != n) schema_error(what + " must have one row per tag");
  Eigen::MatrixXd out(rows, cols);
  for (std::size_t i = 0; i < n; ++i) {
    if (!v[i].is_array() || v[i].size() != m) {
      schema_error(what + " rows must have one entry per anchor");
    }
    for (std::size_t a = 0; a < m; ++a) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) = as_number(v[i][a], what);
    }
  }
  return out;
}

Deployment deployment_from(const json& obj) {
  const std::string where = "deployment";
  check_keys(obj, where, {"anchors", "tags", "sigma", "height_diff", "anchor_ids", "tag_ids"});
  auto anchors = as_points(require(obj, "anchors", where), "anchors");
  auto tags = as_points(require(obj, "tags", where), "tags");
  const std::size_t n = tags.size();
  const std::size_t m = anchors.size();
  Eigen::MatrixXd sigma = as_pair_matrix(require(obj, "sigma", where), n, m, "sigma");
  Eigen::MatrixXd dh;
  if (obj.contains("height_diff")) dh = as_pair_matrix(obj["height_diff"], n, m, "height_diff");
  std::vector<std::string> anchor_ids, tag_ids;
  if (obj.contains("anchor_ids")) anchor_ids = as_strings(obj["anchor_ids"], "anchor_ids");
  if (obj.contains("tag_ids")) tag_ids = as_strings(obj["tag_ids"], "tag_ids");
  try {
    return Deployment(std::move(anchors), std::move(tags), std::move(sigma), std::move(dh),
                      std::move(anchor_ids), std::move(tag_ids));
  } catch (const Error& e) {
    schema_error(std::string("invalid deployment: ") + e.what());
  }
}

Pose2 pose_from(const json& obj, const std::string& where) {
  check_keys(obj, where, {"x", "y", "yaw_deg"});
  const double x = as_number(require(obj, "x", where), where + ".x");
  const double y = as_number(require(obj, "y", where), where + ".y");
  const double yaw = as_number(require(obj, "yaw_deg", where), where + ".yaw_deg");
  return Pose2(yaw * std::numbers::pi / 180.0, Vec2(x, y));
}

McConfig mc_from(const json& obj, const Scenario& sc) {
  const std::string where = "monte_carlo";
  check_keys(obj, where,
             {"axis", "values", "trials", "seed", "estimators", "repeats", "anchor_region",
              "inject_noise"});
  McConfig c;
  c.deployment = sc.deployment;
  if (!sc.truth) schema_error("monte_carlo needs a 'truth' pose");
  c.truth = *sc.truth;
  const json& axis = require(obj, "axis", where);
  if (!axis.is_string()) schema_error("monte_carlo.axis must be a string");
  try {
    c.axis = parse_sweep_axis(axis.get<std::string>());
  } catch (const Error& e) {
    schema_error(e.what());
  }
  const json& values = require(obj, "values", where);
  if (!values.is_array() || values.empty()) schema_error("monte_carlo.values must be a list");
  for (const auto& v : values) c.values.push_back(as_number(v, "monte_carlo.values"));
  if (obj.contains("trials")) c.trials = as_count(obj["trials"], "monte_carlo.trials");
  if (obj.contains("seed")) {
    if (!obj["seed"].is_number_unsigned() && !obj["seed"].is_number_integer()) {
      schema_error("monte_carlo.seed must be a non-negative integer");
    }
    if (obj["seed"].is_number_integer() && obj["seed"].get<long long>() < 0) {
      schema_error("monte_carlo.seed must be a non-negative integer");
    }
    c.seed = obj["seed"].get<std::uint64_t>();
  }
  if (obj.contains("estimators")) {
    c.estimators.clear();
    for (const auto& name : as_strings(obj["estimators"], "monte_carlo.estimators")) {
      try {
        c.estimators.push_back(parse_method(name));
      } catch (const Error& e) {
        schema_error(e.what());
      }
    }
  }
  if (obj.contains("repeats")) c.repeats = as_count(obj["repeats"], "monte_carlo.repeats");
  if (obj.contains("anchor_region")) {
    const json& r = obj["anchor_region"];
    check_keys(r, "monte_carlo.anchor_region", {"min", "max"});
    c.anchor_region.min = as_point(require(r, "min", "anchor_region"), "anchor_region.min");
    c.anchor_region.max = as_point(require(r, "max", "anchor_region"), "anchor_region.max");
  }
  if (obj.contains("inject_noise")) {
    if (!obj["inject_noise"].is_boolean()) schema_error("monte_carlo.inject_noise must be a boolean");
    c.inject_noise = obj["inject_noise"].get<bool>();
  }
  try {
    c.validate();
  } catch (const Error& e) {
    schema_error(std::string("invalid monte_carlo section: ") + e.what());
  }
  return c;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double parse_double(const std::string& field, const std::string& what, std::size_t line) {
  const std::string f = trim(field);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
  if (f.empty() || ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(v)) {
    schema_error("line " + std::to_string(line) + ": " + what + " '" + f + "' is not a number");
  }
  return v;
}

// Yields data rows after validating the header.
template <typename RowFn>
void read_csv(std::istream& in, const std::vector<std::string>& header, RowFn&& on_row) {
  std::string line;
  std::size_t line_no = 0;
  bool seen_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    for (auto& f : fields) f = trim(f);
    if (!seen_header) {
      if (fields != header) {
        std::string expected;
        for (const auto& h : header) expected += (expected.empty() ? "" : ",") + h;
        schema_error("expected CSV header '" + expected + "'");
      }
      seen_header = true;
      continue;
    }
    if (fields.size() != header.size()) {
      schema_error("line " + std::to_string(line_no) + ": expected " +
                   std::to_string(header.size()) + " fields");
    }
    on_row(fields, line_no);
  }
  if (!seen_header) schema_error("CSV file is empty; a header is required");
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) schema_error("cannot open '" + path.string() + "'");
  return in;
}

}  // namespace

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (quoted) {
      if (c == '"') {
        if (k + 1 < line.size() && line[k + 1] == '"') {
          field += '"';
          ++k;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  if (quoted) schema_error("unterminated quoted CSV field");
  out.push_back(std::move(field));
  return out;
}

Deployment parse_deployment(std::string_view json_text) {
  const json doc = parse_json(json_text);
  if (doc.is_object() && doc.contains("deployment")) return *parse_scenario(json_text).deployment;
  return deployment_from(doc);
}

Scenario parse_scenario(std::string_view json_text) {
  const json doc = parse_json(json_text);
  check_keys(doc, "scenario", {"description", "deployment", "truth", "monte_carlo", "crlb"});
  if (doc.contains("description") && !doc["description"].is_string()) {
    schema_error("description must be a string");
  }
  Scenario sc;
  sc.deployment = std::make_shared<const Deployment>(
      deployment_from(require(doc, "deployment", "scenario")));
  if (doc.contains("truth")) sc.truth = pose_from(doc["truth"], "truth");
  if (doc.contains("crlb")) {
    check_keys(doc["crlb"], "crlb", {"repeats"});
    if (doc["crlb"].contains("repeats")) {
      sc.crlb_repeats = as_count(doc["crlb"]["repeats"], "crlb.repeats");
    }
  }
  if (doc.contains("monte_carlo")) sc.monte_carlo = mc_from(doc["monte_carlo"], sc);
  return sc;
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in = open_input(path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Deployment load_deployment(const fs::path& path) { return parse_deployment(read_text_file(path)); }

Scenario load_scenario(const fs::path& path) { return parse_scenario(read_text_file(path)); }

RangeLog read_range_log(std::istream& in, double frequency) {
  if (!(frequency > 0.0)) throw Error(ErrorCode::invalid_argument, "frequency must be positive");
  RangeLog log;
  log.frequency = frequency;
  read_csv(in, {"t", "anchor", "tag", "range"},
           [&](const std::vector<std::string>& f, std::size_t line) {
             RangeRecord r;
             r.t = parse_double(f[0], "t", line);
             r.anchor = f[1];
             r.tag = f[2];
             r.range = parse_double(f[3], "range", line);
             if (r.anchor.empty() || r.tag.empty()) {
               schema_error("line " + std::to_string(line) + ": empty anchor or tag id");
             }
             if (r.range < 0.0) {
               schema_error("line " + std::to_string(line) + ": negative range");
             }
             log.records.push_back(std::move(r));
           });
  return log;
}

RangeLog load_range_log(const fs::path& path, double frequency) {
  std::ifstream in = open_input(path);
  return read_range_log(in, frequency);
}

GroundTruthLog read_ground_truth(std::istream& in) {
  std::vector<GroundTruthRecord> records;
  read_csv(in, {"t", "x", "y", "yaw_deg"}, [&](const std::vector<std::string>& f, std::size_t line) {
    const double t = parse_double(f[0], "t", line);
    const double x = parse_double(f[1], "x", line);
    const double y = parse_double(f[2], "y", line);
    const double yaw = parse_double(f[3], "yaw_deg", line);
    records.push_back({t, Pose2(yaw * std::numbers::pi / 180.0, Vec2(x, y))});
  });
  try {
    return GroundTruthLog(std::move(records));
  } catch (const Error& e) {
    schema_error(std::string("invalid ground truth: ") + e.what());
  }
}

GroundTruthLog load_ground_truth(const fs::path& path) {
  std::ifstream in = open_input(path);
  return read_ground_truth(in);
}

std::string bias_model_to_json(const BiasModel& model) {
  json doc;
  doc["pooled"] = {{"slope", model.pooled.slope}, {"intercept", model.pooled.intercept}};
  json pairs = json::array();
  for (const auto& [key, b] : model.per_pair) {
    pairs.push_back({{"anchor", key.anchor},
                     {"tag", key.tag},
                     {"slope", b.slope},
                     {"intercept", b.intercept}});
  }
  doc["per_pair"] = pairs;
  doc["sigma"] = model.sigma;
  doc["residual_rms"] = model.residual_rms;
  doc["slope_stderr"] = model.slope_stderr;
  doc["intercept_stderr"] = model.intercept_stderr;
  doc["samples"] = model.samples;
  return doc.dump(2) + "\n";
}

BiasModel parse_bias_model(std::string_view json_text) {
  const json doc = parse_json(json_text);
  check_keys(doc, "bias model",
             {"pooled", "per_pair", "sigma", "residual_rms", "slope_stderr", "intercept_stderr",
              "samples"});
  auto linear = [](const json& obj, const std::string& where,
                   std::initializer_list<std::string_view> allowed) {
    check_keys(obj, where, allowed);
    LinearBias b;
    b.slope = as_number(require(obj, "slope", where), where + ".slope");
    b.intercept = as_number(require(obj, "intercept", where), where + ".intercept");
    if (!(1.0 + b.slope > 0.0)) schema_error(where + ".slope must exceed -1");
    return b;
  };
  BiasModel m = BiasModel::identity();
  m.pooled = linear(require(doc, "pooled", "bias model"), "pooled", {"slope", "intercept"});
  if (doc.contains("per_pair")) {
    if (!doc["per_pair"].is_array()) schema_error("per_pair must be a list");
    for (const auto& p : doc["per_pair"]) {
      const LinearBias b = linear(p, "per_pair entry", {"anchor", "tag", "slope", "intercept"});
      const json& a = require(p, "anchor", "per_pair entry");
      const json& t = require(p, "tag", "per_pair entry");
      if (!a.is_string() || !t.is_string()) schema_error("per_pair ids must be strings");
      m.per_pair[StreamKey{a.get<std::string>(), t.get<std::string>()}] = b;
    }
  }
  m.sigma = as_number(require(doc, "sigma", "bias model"), "sigma");
  if (!(m.sigma > 0.0)) schema_error("sigma must be positive");
  if (doc.contains("residual_rms")) m.residual_rms = as_number(doc["residual_rms"], "residual_rms");
  if (doc.contains("slope_stderr")) m.slope_stderr = as_number(doc["slope_stderr"], "slope_stderr");
  if (doc.contains("intercept_stderr")) {
    m.intercept_stderr = as_number(doc["intercept_stderr"], "intercept_stderr");
  }
  if (doc.contains("samples")) {
    if (!doc["samples"].is_number_unsigned() && !doc["samples"].is_number_integer()) {
      schema_error("samples must be an integer");
    }
    m.samples = doc["samples"].get<std::size_t>();
  }
  return m;
}

BiasModel load_bias_model(const fs::path& path) { return parse_bias_model(read_text_file(path)); }

void write_file_atomic(const fs::path& path, std::string_view content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::invalid_argument, "cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      fs::remove(tmp, ec);
      throw Error(ErrorCode::invalid_argument, "failed writing '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorCode::invalid_argument, "cannot replace '" + path.string() + "'");
  }
}

}  // namespace uwbpose
