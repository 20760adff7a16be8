#include "tenar/io.hpp"

#include <charconv>
#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace tenar {

namespace {

using nlohmann::json;

constexpr char kSeriesMagic[] = "TENAR1\n";
constexpr std::size_t kMagicLen = 7;

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& msg) {
  throw InvalidInput(path.string() + ": " + msg);
}

[[noreturn]] void fail_line(const std::filesystem::path& path, std::size_t line,
                            const std::string& msg) {
  throw InvalidInput(path.string() + ":" + std::to_string(line) + ": " + msg);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join_dims(const Dims& dims) {
  std::string out;
  for (std::size_t k = 0; k < dims.size(); ++k) {
    if (k) out += ',';
    out += std::to_string(dims[k]);
  }
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string::npos) {
      parts.push_back(s.substr(start));
      break;
    }
    parts.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return parts;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

bool parse_index(const std::string& s, Index& out) {
  const std::string t = trim(s);
  const char* b = t.data();
  const char* e = b + t.size();
  long long v = 0;
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) return false;
  out = static_cast<Index>(v);
  return true;
}

bool parse_double(const std::string& s, double& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  char* end = nullptr;
  out = std::strtod(t.c_str(), &end);
  return end == t.c_str() + t.size();
}

void write_series_csv(const std::filesystem::path& path, const TensorSeries& s) {
  std::string body;
  body += "# tenar-series v1\n";
  body += "# layout: canonical-v1\n";
  body += "# dims: " + join_dims(s.dims) + "\n";
  body += "# T: " + std::to_string(s.length()) + "\n";
  body += "t";
  for (std::size_t k = 0; k < s.dims.size(); ++k)
    body += ",i" + std::to_string(k + 1);
  body += ",value\n";
  const Index K = static_cast<Index>(s.dims.size());
  std::vector<Index> idx(static_cast<std::size_t>(K), 0);
  for (Index t = 0; t < s.length(); ++t) {
    const Vector& v = s.obs[static_cast<std::size_t>(t)].vec();
    std::fill(idx.begin(), idx.end(), 0);
    for (Index f = 0; f < v.size(); ++f) {
      body += std::to_string(t + 1);
      for (Index k = 0; k < K; ++k)
        body += ',' + std::to_string(idx[static_cast<std::size_t>(k)] + 1);
      body += ',' + format_double(v[f]) + '\n';
      for (Index k = 0; k < K; ++k) {
        if (++idx[static_cast<std::size_t>(k)] < s.dims[static_cast<std::size_t>(k)])
          break;
        idx[static_cast<std::size_t>(k)] = 0;
      }
    }
  }
  atomic_write_text(path, body);
}

void write_series_binary(const std::filesystem::path& path,
                         const TensorSeries& s) {
  std::string body;
  body.append(kSeriesMagic, kMagicLen);
  auto put_u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) body.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  auto put_u64 = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) body.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  put_u32(1);  // format version
  put_u32(static_cast<std::uint32_t>(s.dims.size()));
  for (Index dk : s.dims) put_u32(static_cast<std::uint32_t>(dk));
  put_u64(static_cast<std::uint64_t>(s.length()));
  for (const DenseTensor& x : s.obs) {
    const Vector& v = x.vec();
    for (Index f = 0; f < v.size(); ++f) {
      std::uint64_t bits;
      double d = v[f];
      std::memcpy(&bits, &d, 8);
      for (int i = 0; i < 8; ++i)
        body.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
    }
  }
  atomic_write_text(path, body);
}

TensorSeries read_series_binary(const std::filesystem::path& path,
                                const std::string& data) {
  std::size_t off = kMagicLen;
  auto need = [&](std::size_t n, const char* what) {
    if (data.size() - off < n)
      fail(path, std::string("truncated file while reading ") + what +
                     " at offset " + std::to_string(off));
  };
  auto get_u32 = [&](const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[off + i]))
           << (8 * i);
    off += 4;
    return v;
  };
  auto get_u64 = [&](const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[off + i]))
           << (8 * i);
    off += 8;
    return v;
  };
  const std::uint32_t version = get_u32("version");
  if (version != 1)
    fail(path, "unsupported series format version " + std::to_string(version));
  const std::uint32_t K = get_u32("mode count");
  if (K < 1 || K > 64) fail(path, "implausible mode count");
  TensorSeries s;
  for (std::uint32_t k = 0; k < K; ++k) {
    const std::uint32_t dk = get_u32("mode extent");
    if (dk < 1) fail(path, "mode extents must be positive");
    s.dims.push_back(static_cast<Index>(dk));
  }
  const std::uint64_t T = get_u64("length");
  const Index d = product(s.dims);
  need(static_cast<std::size_t>(T) * static_cast<std::size_t>(d) * 8, "data");
  for (std::uint64_t t = 0; t < T; ++t) {
    Vector v(d);
    for (Index f = 0; f < d; ++f) {
      std::uint64_t bits = 0;
      for (int i = 0; i < 8; ++i)
        bits |= static_cast<std::uint64_t>(
                    static_cast<unsigned char>(data[off + i]))
                << (8 * i);
      off += 8;
      double dv;
      std::memcpy(&dv, &bits, 8);
      v[f] = dv;
    }
    s.obs.emplace_back(s.dims, std::move(v));
  }
  if (off != data.size())
    fail(path, "trailing bytes after series data at offset " +
                   std::to_string(off));
  return s;
}

TensorSeries read_series_csv(const std::filesystem::path& path,
                             const std::string& data) {
  std::istringstream in(data);
  std::string line;
  std::size_t lineno = 0;
  bool saw_format = false;
  std::string layout;
  Dims dims;
  Index T = -1;

  // Header block: comment lines, then the column header.
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t[0] == '#') {
      const std::string body = trim(t.substr(1));
      if (body == "tenar-series v1") {
        saw_format = true;
      } else if (body.rfind("layout:", 0) == 0) {
        layout = trim(body.substr(7));
      } else if (body.rfind("dims:", 0) == 0) {
        for (const std::string& part : split(trim(body.substr(5)), ',')) {
          Index dk;
          if (!parse_index(part, dk) || dk < 1)
            fail_line(path, lineno, "bad mode extent '" + part + "'");
          dims.push_back(dk);
        }
      } else if (body.rfind("T:", 0) == 0) {
        if (!parse_index(trim(body.substr(2)), T) || T < 0)
          fail_line(path, lineno, "bad length");
      } else {
        fail_line(path, lineno, "unrecognized header line");
      }
      continue;
    }
    break;  // the column header line
  }
  if (!saw_format) fail(path, "missing format line '# tenar-series v1'");
  if (layout != "canonical-v1")
    fail(path, "unsupported layout tag '" + layout + "'");
  if (dims.empty()) fail(path, "missing dims header");
  if (T < 0) fail(path, "missing T header");
  const Index K = static_cast<Index>(dims.size());
  {
    std::string expect = "t";
    for (Index k = 0; k < K; ++k) expect += ",i" + std::to_string(k + 1);
    expect += ",value";
    if (trim(line) != expect)
      fail_line(path, lineno, "expected column header '" + expect + "'");
  }

  const Index d = product(dims);
  TensorSeries s;
  s.dims = dims;
  s.obs.assign(static_cast<std::size_t>(T), DenseTensor(dims));
  std::vector<char> seen(static_cast<std::size_t>(T * d), 0);
  std::vector<Index> idx(static_cast<std::size_t>(K));
  while (std::getline(in, line)) {
    ++lineno;
    const std::string row = trim(line);
    if (row.empty()) continue;
    const std::vector<std::string> parts = split(row, ',');
    if (static_cast<Index>(parts.size()) != K + 2)
      fail_line(path, lineno,
                "expected " + std::to_string(K + 2) + " fields, found " +
                    std::to_string(parts.size()));
    Index t;
    if (!parse_index(parts[0], t) || t < 1 || t > T)
      fail_line(path, lineno, "time index out of range: '" + parts[0] + "'");
    for (Index k = 0; k < K; ++k) {
      Index ik;
      if (!parse_index(parts[static_cast<std::size_t>(k + 1)], ik) || ik < 1 ||
          ik > dims[static_cast<std::size_t>(k)])
        fail_line(path, lineno,
                  "index " + std::to_string(k + 1) + " out of range: '" +
                      parts[static_cast<std::size_t>(k + 1)] + "'");
      idx[static_cast<std::size_t>(k)] = ik - 1;
    }
    double value;
    if (!parse_double(parts.back(), value))
      fail_line(path, lineno, "bad value '" + parts.back() + "'");
    DenseTensor& x = s.obs[static_cast<std::size_t>(t - 1)];
    const Index f = x.offset(idx);
    char& mark = seen[static_cast<std::size_t>((t - 1) * d + f)];
    if (mark) {
      std::string where = "t=" + std::to_string(t);
      for (Index k = 0; k < K; ++k)
        where += ",i" + std::to_string(k + 1) + "=" +
                 std::to_string(idx[static_cast<std::size_t>(k)] + 1);
      fail_line(path, lineno, "duplicate cell (" + where + ")");
    }
    mark = 1;
    x.vec()[f] = value;
  }
  for (Index t = 0; t < T; ++t)
    for (Index f = 0; f < d; ++f)
      if (!seen[static_cast<std::size_t>(t * d + f)]) {
        std::vector<Index> miss(static_cast<std::size_t>(K));
        Index rem = f;
        for (Index k = 0; k < K; ++k) {
          miss[static_cast<std::size_t>(k)] = rem % dims[static_cast<std::size_t>(k)];
          rem /= dims[static_cast<std::size_t>(k)];
        }
        std::string where = "t=" + std::to_string(t + 1);
        for (Index k = 0; k < K; ++k)
          where += ",i" + std::to_string(k + 1) + "=" +
                   std::to_string(miss[static_cast<std::size_t>(k)] + 1);
        fail(path, "missing cell (" + where + "); expected " +
                       std::to_string(T * d) + " cells");
      }
  return s;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput(path.string() + ": cannot open file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j, Index rows, Index cols,
                        const std::string& keypath) {
  if (!j.is_array() || static_cast<Index>(j.size()) != rows)
    throw InvalidInput(keypath + ": expected " + std::to_string(rows) +
                       " rows");
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols)
      throw InvalidInput(keypath + "[" + std::to_string(i) + "]: expected " +
                         std::to_string(cols) + " columns");
    for (Index c = 0; c < cols; ++c) {
      const json& v = row[static_cast<std::size_t>(c)];
      if (!v.is_number())
        throw InvalidInput(keypath + "[" + std::to_string(i) + "][" +
                           std::to_string(c) + "]: expected a number");
      m(i, c) = v.get<double>();
    }
  }
  return m;
}

}  // namespace

void atomic_write_text(const std::filesystem::path& path,
                       const std::string& content) {
  std::filesystem::path dir = path.parent_path();
  if (dir.empty()) dir = ".";
  const std::filesystem::path tmp =
      dir / (path.filename().string() + ".tmp-" +
             std::to_string(
                 std::chrono::steady_clock::now().time_since_epoch().count()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidInput(tmp.string() + ": cannot open for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw InvalidInput(tmp.string() + ": write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw InvalidInput(path.string() + ": rename failed: " + ec.message());
  }
}

void write_series(const std::filesystem::path& path, const TensorSeries& s) {
  s.validate();
  if (path.extension() == ".csv")
    write_series_csv(path, s);
  else
    write_series_binary(path, s);
}

TensorSeries read_series(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  TensorSeries s;
  if (data.size() >= kMagicLen &&
      std::memcmp(data.data(), kSeriesMagic, kMagicLen) == 0)
    s = read_series_binary(path, data);
  else
    s = read_series_csv(path, data);
  s.validate();
  return s;
}

void write_model(const std::filesystem::path& path, const TenArModel& m) {
  m.validate();
  json j;
  j["format"] = "tenar-model";
  j["version"] = 1;
  j["dims"] = m.spec.dims;
  j["kranks"] = m.spec.kranks;
  json lags = json::array();
  for (const auto& lag : m.coeffs) {
    json terms = json::array();
    for (const auto& term : lag) {
      json mats = json::array();
      for (const Matrix& a : term) mats.push_back(matrix_to_json(a));
      terms.push_back(std::move(mats));
    }
    lags.push_back(std::move(terms));
  }
  j["coeffs"] = std::move(lags);
  json noise;
  switch (m.noise.kind) {
    case NoiseKind::Identity:
      noise["kind"] = "identity";
      break;
    case NoiseKind::Dense:
      noise["kind"] = "dense";
      noise["sigma"] = matrix_to_json(m.noise.dense);
      break;
    case NoiseKind::Separable: {
      noise["kind"] = "separable";
      json fs = json::array();
      for (const Matrix& f : m.noise.factors) fs.push_back(matrix_to_json(f));
      noise["factors"] = std::move(fs);
      break;
    }
  }
  j["noise"] = std::move(noise);
  atomic_write_text(path, j.dump(2) + "\n");
}

TenArModel read_model(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  json j;
  try {
    j = json::parse(data);
  } catch (const json::parse_error& e) {
    throw InvalidInput(path.string() + ": invalid model file: " + e.what());
  }
  auto require = [&](const char* key) -> const json& {
    if (!j.contains(key))
      throw InvalidInput(path.string() + ": missing key '" + key + "'");
    return j.at(key);
  };
  if (!j.is_object() || !j.contains("format") ||
      j.at("format") != "tenar-model")
    throw InvalidInput(path.string() + ": not a model file (format tag)");
  if (require("version") != 1)
    throw InvalidInput(path.string() + ": unsupported model version " +
                       require("version").dump());

  TenArModel m;
  try {
    m.spec.dims = require("dims").get<Dims>();
    m.spec.kranks = require("kranks").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw InvalidInput(path.string() + ": dims/kranks: " + e.what());
  }
  m.spec.validate();

  const json& lags = require("coeffs");
  if (!lags.is_array() || static_cast<Index>(lags.size()) != m.spec.order())
    throw InvalidInput(path.string() + ": coeffs: expected " +
                       std::to_string(m.spec.order()) + " lags");
  for (Index i = 0; i < m.spec.order(); ++i) {
    const json& terms = lags[static_cast<std::size_t>(i)];
    const int Ri = m.spec.kranks[static_cast<std::size_t>(i)];
    const std::string lp = "coeffs[" + std::to_string(i) + "]";
    if (!terms.is_array() || static_cast<int>(terms.size()) != Ri)
      throw InvalidInput(path.string() + ": " + lp + ": expected " +
                         std::to_string(Ri) + " terms");
    std::vector<std::vector<Matrix>> lag;
    for (int r = 0; r < Ri; ++r) {
      const json& mats = terms[static_cast<std::size_t>(r)];
      const std::string tp = lp + "[" + std::to_string(r) + "]";
      if (!mats.is_array() ||
          static_cast<Index>(mats.size()) != m.spec.mode_count())
        throw InvalidInput(path.string() + ": " + tp + ": expected " +
                           std::to_string(m.spec.mode_count()) + " factors");
      std::vector<Matrix> term;
      for (Index k = 0; k < m.spec.mode_count(); ++k) {
        const Index dk = m.spec.dims[static_cast<std::size_t>(k)];
        term.push_back(matrix_from_json(
            mats[static_cast<std::size_t>(k)], dk, dk,
            path.string() + ": " + tp + "[" + std::to_string(k) + "]"));
      }
      lag.push_back(std::move(term));
    }
    m.coeffs.push_back(std::move(lag));
  }

  const json& noise = require("noise");
  if (!noise.is_object() || !noise.contains("kind"))
    throw InvalidInput(path.string() + ": noise: missing kind");
  const std::string kind = noise.at("kind").get<std::string>();
  if (kind == "identity") {
    m.noise = NoiseSpec::identity();
  } else if (kind == "dense") {
    if (!noise.contains("sigma"))
      throw InvalidInput(path.string() + ": noise: missing sigma");
    const Index d = m.spec.vec_dim();
    m.noise.kind = NoiseKind::Dense;
    m.noise.dense =
        matrix_from_json(noise.at("sigma"), d, d, path.string() + ": noise.sigma");
  } else if (kind == "separable") {
    if (!noise.contains("factors"))
      throw InvalidInput(path.string() + ": noise: missing factors");
    const json& fs = noise.at("factors");
    if (!fs.is_array() || static_cast<Index>(fs.size()) != m.spec.mode_count())
      throw InvalidInput(path.string() + ": noise.factors: expected " +
                         std::to_string(m.spec.mode_count()) + " entries");
    m.noise.kind = NoiseKind::Separable;
    for (Index k = 0; k < m.spec.mode_count(); ++k) {
      const Index dk = m.spec.dims[static_cast<std::size_t>(k)];
      m.noise.factors.push_back(matrix_from_json(
          fs[static_cast<std::size_t>(k)], dk, dk,
          path.string() + ": noise.factors[" + std::to_string(k) + "]"));
    }
  } else {
    throw InvalidInput(path.string() + ": noise: unknown kind '" + kind + "'");
  }
  try {
    m.validate();
  } catch (const InvalidInput& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
  return m;
}

void write_fit_report(const std::filesystem::path& path, const FitReport& r) {
  json j;
  j["sse"] = r.sse;
  j["converged"] = r.converged;
  j["sweeps"] = r.sweeps;
  j["n_eff"] = r.n_eff;
  j["objective_trace"] = r.objective_trace;
  atomic_write_text(path, j.dump(2) + "\n");
}

namespace {

std::string kranks_str(const std::vector<int>& kranks) {
  std::string out;
  for (std::size_t i = 0; i < kranks.size(); ++i) {
    if (i) out += '+';
    out += std::to_string(kranks[i]);
  }
  return out.empty() ? "0" : out;
}

}  // namespace

void write_selection_report(const std::filesystem::path& path,
                            const SelectionReport& r) {
  std::string body;
  body += "# chosen: " + kranks_str(r.chosen) + "\n";
  body += "# order: " + std::to_string(r.chosen_order) + "\n";
  body += std::string("# penalty: ") +
          (r.penalty == Penalty::PerTerm ? "ic1" : "ic2") + "\n";
  body += "kranks,ic,sse,sweeps,converged\n";
  for (const SelectionCell& c : r.cells) {
    body += kranks_str(c.kranks) + ',' + format_double(c.ic) + ',' +
            format_double(c.sse) + ',' + std::to_string(c.sweeps) + ',' +
            (c.converged ? "1" : "0") + '\n';
  }
  atomic_write_text(path, body);
}

void write_forecast_report(const std::filesystem::path& path,
                           const ForecastReport& r) {
  std::string body;
  body += "# t0: " + std::to_string(r.t0) + "\n";
  body += "# origins: " + std::to_string(r.origin_count) + "\n";
  body += "# total: " + format_double(r.total) + "\n";
  body += "method,mse,failed_origins\n";
  for (const MethodResult& m : r.methods)
    body += m.name + ',' + format_double(m.mse) + ',' +
            std::to_string(m.failed_origins) + '\n';
  atomic_write_text(path, body);
}

void write_step_errors(const std::filesystem::path& path,
                       const ForecastReport& r) {
  std::string body = "predicted_index,method,sq_err\n";
  for (const MethodResult& m : r.methods)
    for (std::size_t s = 0; s < m.step_sq_err.size(); ++s)
      body += std::to_string(r.t0 + static_cast<Index>(s)) + ',' + m.name +
              ',' + format_double(m.step_sq_err[s]) + '\n';
  atomic_write_text(path, body);
}

void write_inference_report(const std::filesystem::path& path,
                            const TenArModel& m,
                            const AsymptoticInference& inf, double level) {
  const std::vector<ConfInterval> ci = conf_intervals(m, inf, level);
  std::string body;
  body += "# level: " + format_double(level) + "\n";
  body += "# n_eff: " + std::to_string(inf.n_eff) + "\n";
  body += std::string("# estimator: ") +
          (inf.kind == EstimatorKind::MaximumLikelihood ? "mle" : "lse") + "\n";
  body += "lag,term,mode,row,col,estimate,se,lo,hi\n";
  std::size_t flat = 0;
  for (Index i = 0; i < m.spec.order(); ++i)
    for (Index r = 0; r < m.spec.kranks[static_cast<std::size_t>(i)]; ++r)
      for (Index k = 0; k < m.spec.mode_count(); ++k) {
        const Index dk = m.spec.dims[static_cast<std::size_t>(k)];
        for (Index col = 0; col < dk; ++col)
          for (Index row = 0; row < dk; ++row) {
            const ConfInterval& c = ci[flat++];
            body += std::to_string(i + 1) + ',' + std::to_string(r + 1) + ',' +
                    std::to_string(k + 1) + ',' + std::to_string(row + 1) +
                    ',' + std::to_string(col + 1) + ',' +
                    format_double(c.estimate) + ',' + format_double(c.se) +
                    ',' + format_double(c.lo) + ',' + format_double(c.hi) +
                    '\n';
          }
      }
  atomic_write_text(path, body);
}

void write_meta_sidecar(const std::filesystem::path& artifact,
                        const std::string& command_line) {
  json j;
  const auto now = std::chrono::system_clock::now();
  j["written_at_unix_ms"] =
      std::chrono::duration_cast<std::chrono::milliseconds>(
          now.time_since_epoch())
          .count();
  j["command"] = command_line;
  atomic_write_text(artifact.string() + ".meta.json", j.dump(2) + "\n");
}

}  // namespace tenar
