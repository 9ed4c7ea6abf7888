#pragma once

// Readers and writers for the on-disk formats:
//
//   <patient_dir>/manifest.json          bundle manifest
//   <patient_dir>/<channel>.f32          raw little-endian float32 samples
//   <patient_dir>/annotations/<src>.json annotation set of one source
//   <patient_dir>/hypnograms/<src>.json  wake/sleep epochs of one source

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "somno/model.hpp"

namespace somno {

inline constexpr std::string_view kBundleFormat = "somno.bundle/1";

struct ChannelEntry {
  std::string name;
  std::string file;
  double rate_hz = 0.0;
  double start_s = 0.0;
  std::string units;
  std::optional<double> resolution;
  std::size_t count = 0;
};

struct BundleManifest {
  std::string patient_id;
  std::vector<ChannelEntry> channels;
};

BundleManifest read_manifest(const std::filesystem::path& manifest_path);

/// Loads every channel listed in the manifest. Quantized channels are snapped
/// back onto their resolution grid after the float32 round trip.
PatientRecord read_bundle(const std::filesystem::path& manifest_path);

/// Writes one .f32 file per channel plus manifest.json; returns the manifest
/// path. Samples are stored as float32, so only float-representable or
/// quantized channels round-trip bit-exactly.
std::filesystem::path write_bundle(const PatientRecord& record,
                                   const std::filesystem::path& directory);

struct AnnotationSet {
  std::string source;
  std::vector<RespEvent> events;
};

/// Events come back sorted by start time.
AnnotationSet read_annotations(const std::filesystem::path& path);
AnnotationSet parse_annotations(std::string_view json_text);
std::string dump_annotations(const AnnotationSet& set);
void write_annotations(const std::filesystem::path& path, const AnnotationSet& set);

Hypnogram read_hypnogram(const std::filesystem::path& path, std::string* source = nullptr);
void write_hypnogram(const std::filesystem::path& path, const std::string& source,
                     const Hypnogram& hypnogram);

/// Reads annotations/ and hypnograms/ of a patient directory, and the bundle
/// when `load_recording` is set and a manifest exists.
PatientRecord read_patient_dir(const std::filesystem::path& directory, bool load_recording);

/// Writes through a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace somno
