#include "somno/ingest.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "somno/errors.hpp"

namespace somno {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json parse_json(std::string_view text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError("malformed JSON in " + what + ": " + e.what());
  }
}

template <typename T>
T field(const json& j, const char* key, const std::string& what) {
  if (!j.is_object() || !j.contains(key)) throw InputError(what + ": missing field " + key);
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw InputError(what + ": field " + key + " has the wrong type");
  }
}

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
}

std::string encode_f32(const std::vector<double>& samples) {
  std::string bytes(samples.size() * 4, '\0');
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto bits = to_le(std::bit_cast<std::uint32_t>(static_cast<float>(samples[i])));
    std::memcpy(bytes.data() + 4 * i, &bits, 4);
  }
  return bytes;
}

std::vector<double> decode_f32(const std::string& bytes) {
  std::vector<double> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    std::memcpy(&bits, bytes.data() + 4 * i, 4);
    out[i] = static_cast<double>(std::bit_cast<float>(to_le(bits)));
  }
  return out;
}

void check_channel_name(const std::string& name) {
  if (name.empty() || name.find('/') != std::string::npos || name.find('\\') != std::string::npos ||
      name == "." || name == "..")
    throw InputError("invalid channel name: " + name);
}

bool has_triplet_part(const Recording& rec, const std::string& prefix) {
  return rec.has(prefix + ".x") || rec.has(prefix + ".y") || rec.has(prefix + ".z");
}

}  // namespace

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError("cannot write " + path.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw InputError("cannot write " + path.string());
  }
}

BundleManifest read_manifest(const fs::path& manifest_path) {
  const std::string what = manifest_path.string();
  const json j = parse_json(slurp(manifest_path), what);
  BundleManifest manifest;
  manifest.patient_id = field<std::string>(j, "patient_id", what);
  const json channels = j.contains("channels") ? j.at("channels") : json();
  if (!channels.is_array()) throw InputError(what + ": channels must be an array");
  std::set<std::string> seen;
  for (const auto& c : channels) {
    ChannelEntry e;
    e.name = field<std::string>(c, "name", what);
    check_channel_name(e.name);
    if (!seen.insert(e.name).second) throw InputError("duplicate channel name: " + e.name);
    e.file = field<std::string>(c, "file", what);
    e.rate_hz = field<double>(c, "rate_hz", what);
    if (!(e.rate_hz > 0.0)) throw InputError(what + ": channel " + e.name + " has rate_hz <= 0");
    e.start_s = c.contains("start_s") ? field<double>(c, "start_s", what) : 0.0;
    e.units = c.contains("units") ? field<std::string>(c, "units", what) : std::string();
    if (c.contains("resolution") && !c.at("resolution").is_null()) {
      e.resolution = field<double>(c, "resolution", what);
      if (!(*e.resolution > 0.0))
        throw InputError(what + ": channel " + e.name + " has non-positive resolution");
    }
    const auto count = field<long long>(c, "count", what);
    if (count < 0) throw InputError(what + ": negative count for " + e.name);
    e.count = static_cast<std::size_t>(count);
    manifest.channels.push_back(std::move(e));
  }
  return manifest;
}

PatientRecord read_bundle(const fs::path& manifest_path) {
  const BundleManifest manifest = read_manifest(manifest_path);
  const fs::path dir = manifest_path.parent_path();
  PatientRecord record;
  record.id = manifest.patient_id;
  Recording rec;
  for (const auto& e : manifest.channels) {
    const fs::path file = dir / e.file;
    if (!fs::is_regular_file(file)) throw InputError("missing channel file: " + file.string());
    const std::string bytes = slurp(file);
    if (bytes.size() != 4 * e.count)
      throw InputError("size mismatch for channel " + e.name + ": " + std::to_string(bytes.size()) +
                       " bytes, expected " + std::to_string(4 * e.count));
    TimeSeries ts;
    ts.rate_hz = e.rate_hz;
    ts.start_s = e.start_s;
    ts.units = e.units;
    ts.samples = decode_f32(bytes);
    for (double v : ts.samples) {
      if (!std::isfinite(v)) throw InputError("non-finite sample in channel " + e.name);
    }
    if (e.resolution) ts = quantize(ts, *e.resolution);
    validate(ts, e.name);
    rec.channels.emplace(e.name, std::move(ts));
  }
  for (const char* prefix : {"accel", "gyro"}) {
    if (has_triplet_part(rec, prefix)) (void)rec.triaxial(prefix);
  }
  record.recording = std::move(rec);
  return record;
}

fs::path write_bundle(const PatientRecord& record, const fs::path& directory) {
  if (!record.recording || record.recording->channels.empty())
    throw InputError("cannot write an empty bundle: record has no channels");
  std::error_code ec;
  fs::create_directories(directory, ec);
  if (ec || !fs::is_directory(directory))
    throw InputError("unwritable directory: " + directory.string());

  json manifest;
  manifest["format"] = kBundleFormat;
  manifest["patient_id"] = record.id;
  json channels = json::array();
  for (const auto& [name, ts] : record.recording->channels) {
    check_channel_name(name);
    validate(ts, name);
    const std::string file = name + ".f32";
    write_file_atomic(directory / file, encode_f32(ts.samples));
    json c;
    c["name"] = name;
    c["file"] = file;
    c["rate_hz"] = ts.rate_hz;
    c["start_s"] = ts.start_s;
    c["units"] = ts.units;
    if (ts.resolution) c["resolution"] = *ts.resolution;
    c["count"] = ts.samples.size();
    channels.push_back(std::move(c));
  }
  manifest["channels"] = std::move(channels);
  if (record.recording->has("position")) {
    json codes = json::array();
    for (auto n : kPositionCodeNames) codes.push_back(n);
    manifest["position_codes"] = std::move(codes);
  }
  const fs::path path = directory / "manifest.json";
  write_file_atomic(path, manifest.dump(2) + "\n");
  return path;
}

AnnotationSet parse_annotations(std::string_view json_text) {
  const json j = parse_json(json_text, "annotations");
  AnnotationSet set;
  const json* events = &j;
  if (j.is_object()) {
    set.source = field<std::string>(j, "source", "annotations");
    if (!j.contains("events")) throw InputError("annotations: missing field events");
    events = &j.at("events");
  }
  if (!events->is_array()) throw InputError("annotations: events must be an array");
  for (const auto& e : *events) {
    RespEvent ev;
    ev.kind = parse_event_type(field<std::string>(e, "type", "annotation event"));
    ev.start_s = field<double>(e, "start_s", "annotation event");
    ev.end_s = field<double>(e, "end_s", "annotation event");
    validate(ev);
    set.events.push_back(ev);
  }
  std::stable_sort(set.events.begin(), set.events.end(),
                   [](const RespEvent& a, const RespEvent& b) { return a.start_s < b.start_s; });
  return set;
}

AnnotationSet read_annotations(const fs::path& path) { return parse_annotations(slurp(path)); }

std::string dump_annotations(const AnnotationSet& set) {
  json events = json::array();
  for (const auto& e : set.events) {
    events.push_back({{"type", to_string(e.kind)}, {"start_s", e.start_s}, {"end_s", e.end_s}});
  }
  json j;
  j["source"] = set.source;
  j["events"] = std::move(events);
  return j.dump(2) + "\n";
}

void write_annotations(const fs::path& path, const AnnotationSet& set) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  write_file_atomic(path, dump_annotations(set));
}

Hypnogram read_hypnogram(const fs::path& path, std::string* source) {
  const std::string what = path.string();
  const json j = parse_json(slurp(path), what);
  if (j.contains("epoch_s") && field<double>(j, "epoch_s", what) != Hypnogram::epoch_s)
    throw InputError(what + ": epoch_s must be 30");
  Hypnogram h;
  h.start_s = j.contains("start_s") ? field<double>(j, "start_s", what) : 0.0;
  for (const auto& label : field<std::vector<std::string>>(j, "labels", what)) {
    if (label == "sleep") {
      h.labels.push_back(EpochLabel::sleep);
    } else if (label == "wake") {
      h.labels.push_back(EpochLabel::wake);
    } else {
      throw InputError(what + ": unknown epoch label " + label);
    }
  }
  if (source) *source = j.contains("source") ? field<std::string>(j, "source", what) : "";
  return h;
}

void write_hypnogram(const fs::path& path, const std::string& source, const Hypnogram& hypnogram) {
  json labels = json::array();
  for (auto l : hypnogram.labels) labels.push_back(l == EpochLabel::sleep ? "sleep" : "wake");
  json j;
  j["source"] = source;
  j["start_s"] = hypnogram.start_s;
  j["epoch_s"] = Hypnogram::epoch_s;
  j["labels"] = std::move(labels);
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  write_file_atomic(path, j.dump() + "\n");
}

PatientRecord read_patient_dir(const fs::path& directory, bool load_recording) {
  if (!fs::is_directory(directory))
    throw InputError("patient directory not found: " + directory.string());
  PatientRecord record;
  const fs::path manifest = directory / "manifest.json";
  if (fs::is_regular_file(manifest)) {
    if (load_recording) {
      record = read_bundle(manifest);
    } else {
      record.id = read_manifest(manifest).patient_id;
    }
  } else {
    record.id = directory.filename().string();
  }
  auto json_files = [](const fs::path& dir) {
    std::vector<fs::path> files;
    if (fs::is_directory(dir)) {
      for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json")
          files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    return files;
  };
  for (const auto& file : json_files(directory / "annotations")) {
    AnnotationSet set = read_annotations(file);
    if (set.source.empty()) set.source = file.stem().string();
    record.annotations[set.source] = std::move(set.events);
  }
  for (const auto& file : json_files(directory / "hypnograms")) {
    std::string source;
    Hypnogram h = read_hypnogram(file, &source);
    if (source.empty()) source = file.stem().string();
    record.hypnograms[source] = std::move(h);
  }
  return record;
}

}  // namespace somno
