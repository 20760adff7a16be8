#pragma once

#include <filesystem>
#include <string>

#include "tenar/estimators.hpp"
#include "tenar/forecast.hpp"
#include "tenar/inference.hpp"
#include "tenar/model.hpp"
#include "tenar/selection.hpp"
#include "tenar/series.hpp"

namespace tenar {

/// Series persistence.  Two formats share one canonical cell order
/// (first index fastest, then later modes, then time):
///  - text: comment header lines (format tag, layout tag, dims, T), a
///    column header, then one `t,i_1..i_K,value` row per cell with
///    1-based indices, every cell exactly once in any order;
///  - binary: magic "TENAR1\n", version, mode count, extents, length,
///    then raw little-endian float64 values.
/// write_series picks text for a ".csv" extension and binary
/// otherwise; read_series recognizes the format by content.  Malformed
/// input raises InvalidInput naming the line or offset.
void write_series(const std::filesystem::path& path, const TensorSeries& s);
TensorSeries read_series(const std::filesystem::path& path);

/// Versioned JSON model files; numeric fields round-trip exactly
/// (shortest-round-trip printing).  read_model validates shapes and
/// covariance properties and reports violations with key paths.
void write_model(const std::filesystem::path& path, const TenArModel& m);
TenArModel read_model(const std::filesystem::path& path);

void write_fit_report(const std::filesystem::path& path, const FitReport& r);
void write_selection_report(const std::filesystem::path& path,
                            const SelectionReport& r);
void write_forecast_report(const std::filesystem::path& path,
                           const ForecastReport& r);
void write_step_errors(const std::filesystem::path& path,
                       const ForecastReport& r);
void write_inference_report(const std::filesystem::path& path,
                            const TenArModel& m,
                            const AsymptoticInference& inf, double level);

/// Writes via a temporary file in the same directory plus an atomic
/// rename, so readers never observe partial content.
void atomic_write_text(const std::filesystem::path& path,
                       const std::string& content);

/// Run metadata (timestamp, command line) lives in a sidecar next to
/// the artifact so the artifact itself stays byte-reproducible.
void write_meta_sidecar(const std::filesystem::path& artifact,
                        const std::string& command_line);

}  // namespace tenar
