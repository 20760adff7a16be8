#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "tenar/io.hpp"
#include "tenar/simulate.hpp"

using namespace tenar;
namespace fs = std::filesystem;

namespace {

fs::path work_dir() {
  const fs::path p = fs::temp_directory_path() / "tenar_io_tests";
  fs::create_directories(p);
  return p;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

void write_text(const fs::path& p, const std::string& body) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << body;
}

bool same_bits(const TensorSeries& a, const TensorSeries& b) {
  if (a.dims != b.dims || a.length() != b.length()) return false;
  for (std::size_t t = 0; t < a.obs.size(); ++t) {
    const Vector& x = a.obs[t].vec();
    const Vector& y = b.obs[t].vec();
    if (std::memcmp(x.data(), y.data(),
                    sizeof(double) * static_cast<std::size_t>(x.size())) != 0)
      return false;
  }
  return true;
}

TensorSeries sample_series() {
  TenArModel m = random_model(ModelSpec{{2, 3}, {1}}, 0.7, 61);
  return simulate_series(m, 9, 62);
}

}  // namespace

TEST_CASE("text series round trip preserves every bit") {
  const fs::path p = work_dir() / "roundtrip.csv";
  TensorSeries s = sample_series();
  s.obs[0].vec()(0) = -0.0;
  s.obs[1].vec()(1) = 1.0 / 3.0;
  write_series(p, s);
  CHECK(same_bits(read_series(p), s));
  const std::string body = read_text(p);
  CHECK(body.rfind("# tenar-series v1", 0) == 0);
  CHECK(body.find("# dims: 2,3") != std::string::npos);
  CHECK(body.find("# T: 9") != std::string::npos);
  CHECK(body.find("t,i1,i2,value") != std::string::npos);
}

TEST_CASE("binary series round trip preserves every bit") {
  const fs::path p = work_dir() / "roundtrip.bin";
  TensorSeries s = sample_series();
  s.obs[0].vec()(0) = 5e-324;   // smallest denormal
  s.obs[0].vec()(1) = -1e308;
  s.obs[0].vec()(2) = -0.0;
  write_series(p, s);
  CHECK(same_bits(read_series(p), s));
  CHECK(read_text(p).rfind("TENAR1\n", 0) == 0);
}

TEST_CASE("hand written text series with shuffled rows") {
  const fs::path p = work_dir() / "hand.csv";
  write_text(p,
             "# tenar-series v1\n"
             "# layout: canonical-v1\n"
             "# dims: 2,2\n"
             "# T: 1\n"
             "t,i1,i2,value\n"
             "1,2,1,3.5\n"
             "1,1,1,1.25\n"
             "\n"
             "1,1,2,-2\n"
             "1,2,2,4\n");
  TensorSeries s = read_series(p);
  REQUIRE(s.dims == Dims{2, 2});
  REQUIRE(s.length() == 1);
  Vector want(4);
  want << 1.25, 3.5, -2.0, 4.0;  // first index fastest
  CHECK((s.obs[0].vec() - want).norm() == 0.0);
}

TEST_CASE("text series diagnostics name the offending cell and line") {
  const std::string header =
      "# tenar-series v1\n"
      "# layout: canonical-v1\n"
      "# dims: 2,2\n"
      "# T: 1\n"
      "t,i1,i2,value\n";

  const fs::path missing = work_dir() / "missing.csv";
  write_text(missing, header + "1,2,1,3.5\n1,1,1,1.25\n1,1,2,-2\n");
  CHECK_THROWS_WITH_AS(read_series(missing),
                       doctest::Contains("missing cell (t=1,i1=2,i2=2)"),
                       InvalidInput);

  const fs::path dup = work_dir() / "dup.csv";
  write_text(dup, header +
                      "1,1,1,1\n1,2,1,2\n1,1,2,3\n1,2,2,4\n1,2,2,5\n");
  CHECK_THROWS_WITH_AS(read_series(dup),
                       doctest::Contains(":10: duplicate cell (t=1,i1=2,i2=2)"),
                       InvalidInput);

  const fs::path range = work_dir() / "range.csv";
  write_text(range, header + "1,3,1,1\n");
  CHECK_THROWS_WITH_AS(read_series(range),
                       doctest::Contains("index 1 out of range"), InvalidInput);

  const fs::path noformat = work_dir() / "noformat.csv";
  write_text(noformat, "# dims: 2,2\n# T: 1\nt,i1,i2,value\n");
  CHECK_THROWS_WITH_AS(read_series(noformat),
                       doctest::Contains("missing format line"), InvalidInput);

  const fs::path badvalue = work_dir() / "badvalue.csv";
  write_text(badvalue, header + "1,1,1,abc\n");
  CHECK_THROWS_WITH_AS(read_series(badvalue),
                       doctest::Contains("bad value 'abc'"), InvalidInput);
}

TEST_CASE("binary series diagnostics report offsets") {
  const fs::path p = work_dir() / "trunc.bin";
  TensorSeries s = sample_series();
  write_series(p, s);
  std::string body = read_text(p);

  write_text(p, body.substr(0, body.size() - 5));
  CHECK_THROWS_WITH_AS(read_series(p), doctest::Contains("truncated file"),
                       InvalidInput);

  write_text(p, body + "xx");
  CHECK_THROWS_WITH_AS(read_series(p), doctest::Contains("trailing bytes"),
                       InvalidInput);
}

TEST_CASE("model files round trip for every noise kind") {
  const fs::path p = work_dir() / "model.json";
  TenArModel m = random_model(ModelSpec{{2, 3}, {2, 1}}, 0.8, 63);

  std::vector<NoiseSpec> noises;
  noises.push_back(NoiseSpec::identity());
  Matrix sym = Matrix::Random(6, 6);
  sym = Matrix(0.5 * (sym + sym.transpose())) + 6.0 * Matrix::Identity(6, 6);
  noises.push_back(NoiseSpec::make_dense(sym));
  noises.push_back(noise_cov(NoiseSetting::RandomSeparable, m.spec.dims, 64));

  for (const NoiseSpec& n : noises) {
    m.noise = n;
    write_model(p, m);
    TenArModel back = read_model(p);
    CHECK(back.spec.dims == m.spec.dims);
    CHECK(back.spec.kranks == m.spec.kranks);
    CHECK(back.noise.kind == m.noise.kind);
    for (Index i = 0; i < m.spec.order(); ++i)
      for (Index r = 0; r < m.spec.kranks[static_cast<std::size_t>(i)]; ++r)
        for (Index k = 0; k < m.spec.mode_count(); ++k)
          CHECK((back.coeff(i, r, k) - m.coeff(i, r, k)).cwiseAbs().maxCoeff() ==
                0.0);
    std::vector<Matrix> phi_a = var_coefficients(m);
    std::vector<Matrix> phi_b = var_coefficients(back);
    for (std::size_t i = 0; i < phi_a.size(); ++i)
      CHECK((phi_a[i] - phi_b[i]).norm() <= 1e-15 * (1.0 + phi_a[i].norm()));
    CHECK((back.noise.full_cov(m.spec.dims) - m.noise.full_cov(m.spec.dims))
              .norm() <= 1e-12);
  }
}

TEST_CASE("model file validation") {
  const fs::path good = work_dir() / "good_model.json";
  TenArModel m = random_model(ModelSpec{{2, 2}, {1}}, 0.7, 65);
  write_model(good, m);
  nlohmann::json j = nlohmann::json::parse(read_text(good));

  const fs::path bad = work_dir() / "bad_model.json";

  {
    nlohmann::json v = j;
    v["version"] = 2;
    write_text(bad, v.dump(2));
    CHECK_THROWS_WITH_AS(read_model(bad),
                         doctest::Contains("unsupported model version 2"),
                         InvalidInput);
  }
  {
    nlohmann::json v = j;
    v["format"] = "something-else";
    write_text(bad, v.dump(2));
    CHECK_THROWS_WITH_AS(read_model(bad), doctest::Contains("format tag"),
                         InvalidInput);
  }
  {
    nlohmann::json v = j;
    v["noise"] = {{"kind", "dense"},
                  {"sigma", {{1.0, 2.0}, {2.0, 1.0}, {0.0, 0.0}}}};
    write_text(bad, v.dump(2));
    CHECK_THROWS_AS(read_model(bad), InvalidInput);  // wrong shape
  }
  {
    nlohmann::json v = j;
    // Indefinite covariance over the full 4-dim vectorization.
    nlohmann::json sigma = nlohmann::json::array();
    for (int r = 0; r < 4; ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (int c = 0; c < 4; ++c) row.push_back(r == c ? 1.0 : 2.0);
      sigma.push_back(row);
    }
    v["noise"] = {{"kind", "dense"}, {"sigma", sigma}};
    write_text(bad, v.dump(2));
    CHECK_THROWS_AS(read_model(bad), InvalidInput);  // not positive definite
  }
  {
    nlohmann::json v = j;
    v.erase("coeffs");
    write_text(bad, v.dump(2));
    CHECK_THROWS_WITH_AS(read_model(bad),
                         doctest::Contains("missing key 'coeffs'"),
                         InvalidInput);
  }
  {
    write_text(bad, "{ not json");
    CHECK_THROWS_WITH_AS(read_model(bad),
                         doctest::Contains("invalid model file"), InvalidInput);
  }
}

TEST_CASE("atomic writes leave no temporaries behind") {
  const fs::path dir = work_dir() / "atomic";
  fs::create_directories(dir);
  const fs::path p = dir / "artifact.txt";
  atomic_write_text(p, "first\n");
  atomic_write_text(p, "second\n");
  CHECK(read_text(p) == "second\n");
  std::size_t entries = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    (void)e;
    ++entries;
  }
  CHECK(entries == 1);
}

TEST_CASE("meta sidecar records the command") {
  const fs::path p = work_dir() / "artifact.csv";
  atomic_write_text(p, "x\n");
  write_meta_sidecar(p, "tenar simulate --dims 2,2");
  nlohmann::json j =
      nlohmann::json::parse(read_text(work_dir() / "artifact.csv.meta.json"));
  CHECK(j.at("command") == "tenar simulate --dims 2,2");
  CHECK(j.at("written_at_unix_ms").get<std::int64_t>() > 0);
}

TEST_CASE("report writers emit the documented layouts") {
  const fs::path dir = work_dir();
  TenArModel truth = random_model(ModelSpec{{2, 2}, {1}}, 0.8, 66);
  TensorSeries s = simulate_series(truth, 300, 67);

  FitReport fit = fit_lse(s, truth.spec);
  write_fit_report(dir / "fit.json", fit);
  nlohmann::json fj = nlohmann::json::parse(read_text(dir / "fit.json"));
  CHECK(fj.at("sse").get<double>() == fit.sse);
  CHECK(fj.at("converged").get<bool>() == fit.converged);
  CHECK(fj.at("objective_trace").size() == fit.objective_trace.size());

  SelectionReport sel = select_joint(s, 1, 2, Penalty::PerTerm);
  write_selection_report(dir / "sel.csv", sel);
  const std::string selbody = read_text(dir / "sel.csv");
  CHECK(selbody.rfind("# chosen: ", 0) == 0);
  CHECK(selbody.find("kranks,ic,sse,sweeps,converged\n") != std::string::npos);

  EvalConfig cfg;
  cfg.t0 = 251;
  cfg.baselines = {BaselineMethod::Mean};
  ForecastReport fr = rolling_eval(s, truth.spec,
                                   EstimatorKind::LeastSquares, {}, cfg);
  write_forecast_report(dir / "fc.csv", fr);
  const std::string fcbody = read_text(dir / "fc.csv");
  CHECK(fcbody.find("# t0: 251") != std::string::npos);
  CHECK(fcbody.find("method,mse,failed_origins\n") != std::string::npos);
  CHECK(fcbody.find("tenar-lse,") != std::string::npos);
  write_step_errors(dir / "steps.csv", fr);
  const std::string steps = read_text(dir / "steps.csv");
  CHECK(steps.rfind("predicted_index,method,sq_err\n", 0) == 0);
  CHECK(steps.find("251,tenar-lse,") != std::string::npos);
  CHECK(steps.find("300,mean,") != std::string::npos);

  AsymptoticInference inf =
      asymp_cov(s, fit.model, EstimatorKind::LeastSquares);
  write_inference_report(dir / "inf.csv", fit.model, inf, 0.95);
  const std::string infbody = read_text(dir / "inf.csv");
  CHECK(infbody.find("# estimator: lse") != std::string::npos);
  CHECK(infbody.find("lag,term,mode,row,col,estimate,se,lo,hi\n") !=
        std::string::npos);
  // One data line per stacked parameter, in stacking order.
  std::size_t lines = 0;
  for (char c : infbody)
    if (c == '\n') ++lines;
  CHECK(lines == 4 + static_cast<std::size_t>(stacked_param_count(truth.spec)));
  CHECK(infbody.find("1,1,1,1,1,") != std::string::npos);
  CHECK(infbody.find("1,1,2,2,2,") != std::string::npos);
}
