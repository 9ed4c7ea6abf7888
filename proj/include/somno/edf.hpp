#pragma once

// Read-only EDF support: fixed 256-byte ASCII header, per-signal header
// blocks, then data records of 16-bit little-endian samples laid out
// signal-major within each record. EDF+ annotation signals are not decoded.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "somno/model.hpp"

namespace somno {

struct EdfSignalHeader {
  std::string label;
  std::string transducer;
  std::string dimension;
  double phys_min = 0.0;
  double phys_max = 0.0;
  long dig_min = 0;
  long dig_max = 0;
  std::string prefiltering;
  long samples_per_record = 0;

  double rate_hz(double record_duration_s) const {
    return static_cast<double>(samples_per_record) / record_duration_s;
  }
  /// phys_min + (digital - dig_min) * (phys_max - phys_min) / (dig_max - dig_min)
  double to_physical(long digital) const;
};

struct EdfHeader {
  std::string version;
  std::string patient_info;
  std::string recording_info;
  std::string start_date;
  std::string start_time;
  long header_bytes = 0;
  long n_records = 0;
  double record_duration_s = 0.0;
  long n_signals = 0;
  std::vector<EdfSignalHeader> signals;

  /// Bytes per data record: 2 bytes per sample of every signal.
  std::size_t record_bytes() const;
};

EdfHeader parse_edf_header(const std::string& bytes);
EdfHeader read_edf_header(const std::filesystem::path& path);

/// Decodes the requested signals (all signals when `wanted_labels` is empty),
/// keyed by trimmed label. Throws InputError on truncation, degenerate scaling
/// or a wanted label that is absent.
std::map<std::string, TimeSeries> read_edf(const std::filesystem::path& path,
                                           const std::vector<std::string>& wanted_labels = {});

}  // namespace somno
