#include "csnn/model.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "csnn/io.hpp"

namespace csnn {

// ---------------------------------------------------------------------------
// io helpers
// ---------------------------------------------------------------------------

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open file: " + path);
  std::string contents((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  return contents;
}

void atomic_write_file(const std::string& path, const std::string& contents) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError("cannot write file: " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw ParseError("short write: " + tmp.string());
  }
  fs::rename(tmp, target);
}

namespace {
constexpr char kB64Chars[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(const std::uint8_t* data, std::size_t n) {
  std::string out;
  out.reserve((n + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= n; i += 3) {
    const std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
    out.push_back(kB64Chars[(v >> 18) & 63]);
    out.push_back(kB64Chars[(v >> 12) & 63]);
    out.push_back(kB64Chars[(v >> 6) & 63]);
    out.push_back(kB64Chars[v & 63]);
  }
  if (i < n) {
    std::uint32_t v = data[i] << 16;
    const bool two = (i + 1 < n);
    if (two) v |= data[i + 1] << 8;
    out.push_back(kB64Chars[(v >> 18) & 63]);
    out.push_back(kB64Chars[(v >> 12) & 63]);
    out.push_back(two ? kB64Chars[(v >> 6) & 63] : '=');
    out.push_back('=');
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  static const auto lut = [] {
    std::array<std::int8_t, 256> t{};
    t.fill(-1);
    for (int i = 0; i < 64; ++i) t[static_cast<unsigned char>(kB64Chars[i])] = static_cast<std::int8_t>(i);
    return t;
  }();
  if (text.size() % 4 != 0) throw ParseError("base64: length not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int pad = 0;
    std::uint32_t v = 0;
    for (int j = 0; j < 4; ++j) {
      const char c = text[i + j];
      if (c == '=') {
        if (j < 2 || (j == 2 && text[i + 3] != '=')) throw ParseError("base64: bad padding");
        ++pad;
        v <<= 6;
        continue;
      }
      const std::int8_t d = lut[static_cast<unsigned char>(c)];
      if (d < 0 || pad > 0) throw ParseError("base64: invalid character");
      v = (v << 6) | static_cast<std::uint32_t>(d);
    }
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(v & 0xff));
  }
  return out;
}

namespace {

std::uint64_t to_le(std::uint64_t x) {
  if constexpr (std::endian::native == std::endian::little) {
    return x;
  } else {
    std::uint64_t y = 0;
    for (int i = 0; i < 8; ++i) y = (y << 8) | ((x >> (8 * i)) & 0xff);
    return y;
  }
}

}  // namespace

std::string encode_f64(const double* data, std::size_t n) {
  std::vector<std::uint8_t> bytes(n * 8);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, &data[i], 8);
    bits = to_le(bits);
    std::memcpy(bytes.data() + i * 8, &bits, 8);
  }
  return base64_encode(bytes.data(), bytes.size());
}

std::vector<double> decode_f64(const std::string& b64, const std::string& field) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = base64_decode(b64);
  } catch (const ParseError& e) {
    throw ParseError("field '" + field + "': " + e.what());
  }
  if (bytes.size() % 8 != 0) {
    throw ParseError("field '" + field + "': blob length " + std::to_string(bytes.size()) +
                     " is not a multiple of 8");
  }
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, bytes.data() + i * 8, 8);
    bits = to_le(bits);
    std::memcpy(&out[i], &bits, 8);
  }
  return out;
}

// ---------------------------------------------------------------------------
// normalizer
// ---------------------------------------------------------------------------

Normalizer fit_normalizer(const std::vector<Vector>& data) {
  if (data.empty()) throw DimensionError("fit_normalizer: empty data");
  const std::size_t d = data.front().size();
  Normalizer n;
  n.mu.assign(d, 0.0);
  n.sigma.assign(d, 0.0);
  for (const auto& u : data) {
    if (u.size() != d) {
      throw DimensionError("fit_normalizer: mixed dimensions " + std::to_string(d) +
                           " vs " + shape_str(u));
    }
    for (std::size_t j = 0; j < d; ++j) n.mu[j] += u[j];
  }
  const double inv_count = 1.0 / static_cast<double>(data.size());
  for (std::size_t j = 0; j < d; ++j) n.mu[j] *= inv_count;
  for (const auto& u : data) {
    for (std::size_t j = 0; j < d; ++j) {
      const double c = u[j] - n.mu[j];
      n.sigma[j] += c * c;
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    n.sigma[j] = std::max(std::sqrt(n.sigma[j] * inv_count), kSigmaFloor);
  }
  return n;
}

Vector normalize(const Normalizer& n, const Vector& u) {
  if (u.size() != n.dim()) {
    throw DimensionError("normalize: input " + shape_str(u) + " incompatible with normalizer dim " +
                         std::to_string(n.dim()));
  }
  const double sqrt_d = std::sqrt(static_cast<double>(n.dim()));
  Vector v(u.size());
  for (std::size_t j = 0; j < u.size(); ++j) {
    v[j] = (u[j] - n.mu[j]) / (sqrt_d * n.sigma[j]);
  }
  return v;
}

// ---------------------------------------------------------------------------
// layer variants
// ---------------------------------------------------------------------------

Vector standard_forward(const Vector& x, const StandardLayer& layer) {
  Vector out = matvec(layer.W, x);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::max(2.0 * out[i] + layer.b[i], 0.0);
  }
  return out;
}

Vector rbf_forward(const Vector& x, const RbfLayer& layer) {
  if (x.size() != layer.W.cols()) {
    throw DimensionError("rbf_forward: input " + shape_str(x) +
                         " incompatible with centers " + shape_str(layer.W));
  }
  Vector out(layer.W.rows());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double dist_sq = 0.0;
    const double* w = layer.W.row(i);
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double dj = x[j] - w[j];
      dist_sq += dj * dj;
    }
    out[i] = std::exp(-std::exp(layer.log_beta[i]) * dist_sq);
  }
  return out;
}

Vector backbone_forward(const Vector& x, const MlpBackbone& backbone) {
  Vector out = matvec(backbone.W, x);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::max(out[i] + backbone.b[i], 0.0);
  }
  return out;
}

const char* CsnnModel::hidden_kind() const {
  if (std::holds_alternative<CsnLayer>(hidden)) return "csnn";
  if (std::holds_alternative<StandardLayer>(hidden)) return "standard";
  return "rbf";
}

Vector hidden_forward(const Vector& v, const HiddenLayer& hidden) {
  return std::visit(
      [&](const auto& layer) -> Vector {
        using T = std::decay_t<decltype(layer)>;
        if constexpr (std::is_same_v<T, CsnLayer>) {
          return layer_forward(v, layer);
        } else if constexpr (std::is_same_v<T, StandardLayer>) {
          return standard_forward(v, layer);
        } else {
          return rbf_forward(v, layer);
        }
      },
      hidden);
}

Vector raw_outputs(const CsnnModel& m, const Vector& x) {
  const Vector u = m.backbone ? backbone_forward(x, *m.backbone) : x;
  const Vector v = normalize(m.normalizer, u);
  const Vector h = hidden_forward(v, m.hidden);
  return matvec(m.head, h);
}

Vector softmax(const Vector& z) {
  const double zmax = *std::max_element(z.begin(), z.end());
  Vector p(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - zmax);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

Confidence confidence(const CsnnModel& m, const Vector& x) {
  Confidence c;
  c.probs = softmax(raw_outputs(m, x));
  c.predicted = 0;
  for (std::size_t i = 1; i < c.probs.size(); ++i) {
    if (c.probs[i] > c.probs[c.predicted]) c.predicted = i;
  }
  return c;
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

json matrix_to_json(const Matrix& m) { return encode_f64(m.data(), m.size()); }

Matrix matrix_from_json(const json& j, std::size_t rows, std::size_t cols,
                        const std::string& field) {
  if (!j.is_string()) throw ParseError("field '" + field + "': expected base64 string");
  const auto values = decode_f64(j.get<std::string>(), field);
  if (values.size() != rows * cols) {
    throw ParseError("field '" + field + "': expected " + std::to_string(rows * cols) +
                     " values, got " + std::to_string(values.size()));
  }
  Matrix m(rows, cols);
  std::copy(values.begin(), values.end(), m.data());
  return m;
}

Vector vector_from_json(const json& j, std::size_t n, const std::string& field) {
  if (!j.is_string()) throw ParseError("field '" + field + "': expected base64 string");
  auto values = decode_f64(j.get<std::string>(), field);
  if (values.size() != n) {
    throw ParseError("field '" + field + "': expected " + std::to_string(n) +
                     " values, got " + std::to_string(values.size()));
  }
  return values;
}

const json& get_field(const json& j, const char* key, const std::string& ctx) {
  auto it = j.find(key);
  if (it == j.end()) throw ParseError("missing field '" + ctx + key + "'");
  return *it;
}

}  // namespace

void save_model(const CsnnModel& m, const std::string& path) {
  json doc;
  doc["version"] = 1;
  json arch;
  arch["type"] = m.hidden_kind();
  arch["d"] = m.normalizer.dim();
  arch["K"] = m.hidden_size();
  arch["C"] = m.num_classes;
  double alpha = 0.0;
  if (const auto* csn = std::get_if<CsnLayer>(&m.hidden)) alpha = csn->alpha;
  arch["alpha"] = alpha;
  doc["arch"] = arch;

  json norm;
  norm["mu"] = encode_f64(m.normalizer.mu.data(), m.normalizer.mu.size());
  norm["sigma"] = encode_f64(m.normalizer.sigma.data(), m.normalizer.sigma.size());
  doc["normalizer"] = norm;

  json params;
  std::visit(
      [&](const auto& layer) {
        using T = std::decay_t<decltype(layer)>;
        params["W"] = matrix_to_json(layer.W);
        if constexpr (std::is_same_v<T, CsnLayer>) {
          params["b"] = encode_f64(layer.b.data(), layer.b.size());
          params["r"] = encode_f64(layer.r.data(), layer.r.size());
        } else if constexpr (std::is_same_v<T, StandardLayer>) {
          params["b"] = encode_f64(layer.b.data(), layer.b.size());
        } else {
          params["log_beta"] = encode_f64(layer.log_beta.data(), layer.log_beta.size());
        }
      },
      m.hidden);
  params["L"] = matrix_to_json(m.head);
  doc["params"] = params;

  if (m.backbone) {
    json bb;
    bb["hidden"] = m.backbone->W.rows();
    bb["W"] = matrix_to_json(m.backbone->W);
    bb["b"] = encode_f64(m.backbone->b.data(), m.backbone->b.size());
    doc["backbone"] = bb;
  }

  atomic_write_file(path, doc.dump(2) + "\n");
}

CsnnModel load_model(const std::string& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError("model file " + path + ": " + e.what());
  }
  if (!doc.is_object()) throw ParseError("model file " + path + ": not a JSON object");

  const json& version = get_field(doc, "version", "");
  if (!version.is_number_integer() || version.get<int>() != 1) {
    throw ParseError("unsupported version in " + path + ": expected 1, got " + version.dump());
  }

  const json& arch = get_field(doc, "arch", "");
  const std::string type = get_field(arch, "type", "arch.").get<std::string>();
  const auto d = get_field(arch, "d", "arch.").get<std::size_t>();
  const auto k = get_field(arch, "K", "arch.").get<std::size_t>();
  const auto c = get_field(arch, "C", "arch.").get<std::size_t>();
  const double alpha = get_field(arch, "alpha", "arch.").get<double>();

  CsnnModel m;
  m.num_classes = c;

  const json& norm = get_field(doc, "normalizer", "");
  m.normalizer.mu = vector_from_json(get_field(norm, "mu", "normalizer."), d, "normalizer.mu");
  m.normalizer.sigma =
      vector_from_json(get_field(norm, "sigma", "normalizer."), d, "normalizer.sigma");

  const json& params = get_field(doc, "params", "");
  if (type == "csnn") {
    CsnLayer layer;
    layer.W = matrix_from_json(get_field(params, "W", "params."), k, d, "params.W");
    layer.b = vector_from_json(get_field(params, "b", "params."), k, "params.b");
    layer.r = vector_from_json(get_field(params, "r", "params."), k, "params.r");
    if (alpha < 0.0 || alpha > 1.0) {
      throw ParseError("field 'arch.alpha': out of range [0,1]: " + std::to_string(alpha));
    }
    layer.alpha = alpha;
    m.hidden = std::move(layer);
  } else if (type == "standard") {
    StandardLayer layer;
    layer.W = matrix_from_json(get_field(params, "W", "params."), k, d, "params.W");
    layer.b = vector_from_json(get_field(params, "b", "params."), k, "params.b");
    m.hidden = std::move(layer);
  } else if (type == "rbf") {
    RbfLayer layer;
    layer.W = matrix_from_json(get_field(params, "W", "params."), k, d, "params.W");
    layer.log_beta =
        vector_from_json(get_field(params, "log_beta", "params."), k, "params.log_beta");
    m.hidden = std::move(layer);
  } else {
    throw ParseError("field 'arch.type': unknown model type '" + type + "'");
  }
  m.head = matrix_from_json(get_field(params, "L", "params."), c, k, "params.L");

  if (doc.contains("backbone")) {
    const json& bb = doc["backbone"];
    const auto hidden = get_field(bb, "hidden", "backbone.").get<std::size_t>();
    MlpBackbone backbone;
    // Backbone maps raw inputs to the d-dimensional feature space.
    const json& wj = get_field(bb, "W", "backbone.");
    if (!wj.is_string()) throw ParseError("field 'backbone.W': expected base64 string");
    const auto values = decode_f64(wj.get<std::string>(), "backbone.W");
    if (hidden == 0 || values.size() % hidden != 0) {
      throw ParseError("field 'backbone.W': blob size " + std::to_string(values.size()) +
                       " not divisible by hidden " + std::to_string(hidden));
    }
    if (hidden != d) {
      throw ParseError("field 'backbone.hidden': expected " + std::to_string(d) + ", got " +
                       std::to_string(hidden));
    }
    backbone.W = Matrix(hidden, values.size() / hidden);
    std::copy(values.begin(), values.end(), backbone.W.data());
    backbone.b = vector_from_json(get_field(bb, "b", "backbone."), hidden, "backbone.b");
    m.backbone = std::move(backbone);
  }
  return m;
}

}  // namespace csnn
