#include "somno/edf.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <string_view>

#include "somno/errors.hpp"

namespace somno {

namespace {

constexpr std::size_t kFixedHeader = 256;

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \0", 0, 2);
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \0", std::string_view::npos, 2);
  return std::string(s.substr(first, last - first + 1));
}

class FieldCursor {
 public:
  FieldCursor(const std::string& bytes, std::size_t offset) : bytes_(bytes), offset_(offset) {}

  std::string text(std::size_t width) {
    if (offset_ + width > bytes_.size()) throw InputError("truncated EDF header");
    std::string out = trim(std::string_view(bytes_).substr(offset_, width));
    offset_ += width;
    return out;
  }

  double real(std::size_t width, const char* name) {
    const std::string s = text(width);
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || *end != '\0' || errno == ERANGE)
      throw InputError(std::string("malformed EDF header field ") + name + ": '" + s + "'");
    return v;
  }

  long integer(std::size_t width, const char* name) {
    const std::string s = text(width);
    errno = 0;
    char* end = nullptr;
    const long v = std::strtol(s.c_str(), &end, 10);
    if (s.empty() || *end != '\0' || errno == ERANGE)
      throw InputError(std::string("malformed EDF header field ") + name + ": '" + s + "'");
    return v;
  }

  void skip(std::size_t width) {
    if (offset_ + width > bytes_.size()) throw InputError("truncated EDF header");
    offset_ += width;
  }

 private:
  const std::string& bytes_;
  std::size_t offset_;
};

std::string read_prefix(std::ifstream& in, std::size_t n) {
  std::string buf(n, '\0');
  in.read(buf.data(), static_cast<std::streamsize>(n));
  buf.resize(static_cast<std::size_t>(in.gcount()));
  return buf;
}

}  // namespace

double EdfSignalHeader::to_physical(long digital) const {
  return phys_min + static_cast<double>(digital - dig_min) * (phys_max - phys_min) /
                        static_cast<double>(dig_max - dig_min);
}

std::size_t EdfHeader::record_bytes() const {
  std::size_t total = 0;
  for (const auto& s : signals) total += 2 * static_cast<std::size_t>(s.samples_per_record);
  return total;
}

EdfHeader parse_edf_header(const std::string& bytes) {
  if (bytes.size() < kFixedHeader) throw InputError("truncated EDF header");
  FieldCursor f(bytes, 0);
  EdfHeader h;
  h.version = f.text(8);
  h.patient_info = f.text(80);
  h.recording_info = f.text(80);
  h.start_date = f.text(8);
  h.start_time = f.text(8);
  h.header_bytes = f.integer(8, "header byte count");
  f.skip(44);
  h.n_records = f.integer(8, "number of records");
  h.record_duration_s = f.real(8, "record duration");
  h.n_signals = f.integer(4, "number of signals");

  if (h.n_signals <= 0) throw InputError("EDF header: number of signals must be positive");
  if (!(h.record_duration_s > 0.0)) throw InputError("EDF header: record duration must be positive");
  if (h.n_records < -1) throw InputError("EDF header: invalid number of records");
  const auto ns = static_cast<std::size_t>(h.n_signals);
  if (h.header_bytes != static_cast<long>(kFixedHeader * (1 + ns)))
    throw InputError("EDF header: header byte count does not equal 256 * (1 + n_signals)");
  if (bytes.size() < kFixedHeader * (1 + ns)) throw InputError("truncated EDF header");

  h.signals.resize(ns);
  // Signal blocks are stored field-major: all labels, then all transducers, ...
  FieldCursor s(bytes, kFixedHeader);
  for (auto& sig : h.signals) sig.label = s.text(16);
  for (auto& sig : h.signals) sig.transducer = s.text(80);
  for (auto& sig : h.signals) sig.dimension = s.text(8);
  for (auto& sig : h.signals) sig.phys_min = s.real(8, "physical minimum");
  for (auto& sig : h.signals) sig.phys_max = s.real(8, "physical maximum");
  for (auto& sig : h.signals) sig.dig_min = s.integer(8, "digital minimum");
  for (auto& sig : h.signals) sig.dig_max = s.integer(8, "digital maximum");
  for (auto& sig : h.signals) sig.prefiltering = s.text(80);
  for (auto& sig : h.signals) sig.samples_per_record = s.integer(8, "samples per record");

  for (const auto& sig : h.signals) {
    if (sig.dig_min == sig.dig_max)
      throw InputError("EDF signal " + sig.label + ": digital minimum equals digital maximum");
    if (sig.phys_min == sig.phys_max)
      throw InputError("EDF signal " + sig.label + ": physical minimum equals physical maximum");
    if (sig.samples_per_record <= 0)
      throw InputError("EDF signal " + sig.label + ": samples per record must be positive");
  }
  return h;
}

EdfHeader read_edf_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open EDF file " + path.string());
  std::string bytes = read_prefix(in, kFixedHeader);
  if (bytes.size() < kFixedHeader) throw InputError("truncated EDF header");
  FieldCursor f(bytes, 252);
  const long ns = f.integer(4, "number of signals");
  if (ns <= 0) throw InputError("EDF header: number of signals must be positive");
  bytes += read_prefix(in, kFixedHeader * static_cast<std::size_t>(ns));
  return parse_edf_header(bytes);
}

std::map<std::string, TimeSeries> read_edf(const std::filesystem::path& path,
                                           const std::vector<std::string>& wanted_labels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open EDF file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();
  const EdfHeader h = parse_edf_header(bytes);

  std::vector<std::size_t> selected;
  if (wanted_labels.empty()) {
    for (std::size_t i = 0; i < h.signals.size(); ++i) selected.push_back(i);
  } else {
    for (const auto& want : wanted_labels) {
      auto it = std::find_if(h.signals.begin(), h.signals.end(),
                             [&](const EdfSignalHeader& s) { return s.label == want; });
      if (it == h.signals.end()) throw InputError("EDF signal not found: " + want);
      selected.push_back(static_cast<std::size_t>(it - h.signals.begin()));
    }
  }

  const std::size_t data_offset = static_cast<std::size_t>(h.header_bytes);
  const std::size_t record_bytes = h.record_bytes();
  const std::size_t available = bytes.size() - data_offset;
  std::size_t n_records = 0;
  if (h.n_records == -1) {
    n_records = available / record_bytes;
  } else {
    n_records = static_cast<std::size_t>(h.n_records);
    if (available < n_records * record_bytes) throw InputError("truncated EDF data records");
  }

  // Offset of each signal inside one data record.
  std::vector<std::size_t> offsets(h.signals.size(), 0);
  for (std::size_t i = 1; i < h.signals.size(); ++i)
    offsets[i] = offsets[i - 1] + 2 * static_cast<std::size_t>(h.signals[i - 1].samples_per_record);

  std::map<std::string, TimeSeries> out;
  for (std::size_t idx : selected) {
    const auto& sig = h.signals[idx];
    const auto spr = static_cast<std::size_t>(sig.samples_per_record);
    TimeSeries ts;
    ts.rate_hz = sig.rate_hz(h.record_duration_s);
    ts.units = sig.dimension;
    ts.samples.reserve(spr * n_records);
    for (std::size_t r = 0; r < n_records; ++r) {
      const std::size_t base = data_offset + r * record_bytes + offsets[idx];
      for (std::size_t k = 0; k < spr; ++k) {
        const auto lo = static_cast<unsigned char>(bytes[base + 2 * k]);
        const auto hi = static_cast<unsigned char>(bytes[base + 2 * k + 1]);
        const auto digital = static_cast<std::int16_t>(static_cast<std::uint16_t>(lo | (hi << 8)));
        ts.samples.push_back(sig.to_physical(digital));
      }
    }
    out[sig.label] = std::move(ts);
  }
  return out;
}

}  // namespace somno
