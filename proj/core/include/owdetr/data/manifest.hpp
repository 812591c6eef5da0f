#pragma once

#include <filesystem>
#include <iosfwd>

#include "owdetr/data/types.hpp"

namespace owdetr::data {

inline constexpr int kManifestVersion = 1;

// Line-delimited JSON. Line 1 is a header with a mandatory "version"; then
// one {"image": {...}} record per image and one {"annotation": {...}} record
// per box, boxes as absolute-pixel top-left [x, y, w, h].
void write_manifest(const DatasetManifest& m, std::ostream& out);
DatasetManifest read_manifest(std::istream& in);

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

}  // namespace owdetr::data
