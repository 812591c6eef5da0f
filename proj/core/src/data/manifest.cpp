#include "owdetr/data/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "json.hpp"
#include "owdetr/errors.hpp"

namespace owdetr::data {

using nlohmann::json;

void write_manifest(const DatasetManifest& m, std::ostream& out) {
  json header = {{"format", "owdetr-manifest"},
                 {"version", kManifestVersion},
                 {"images", m.images.size()},
                 {"annotations", m.annotations.size()}};
  out << header.dump() << "\n";
  for (const auto& img : m.images) {
    json rec = {{"image",
                 {{"id", img.image_id},
                  {"file", img.file},
                  {"width", img.width},
                  {"height", img.height}}}};
    out << rec.dump() << "\n";
  }
  for (const auto& a : m.annotations) {
    json rec = {{"annotation",
                 {{"image_id", a.image_id},
                  {"label", a.label},
                  {"bbox", {a.x, a.y, a.w, a.h}}}}};
    out << rec.dump() << "\n";
  }
}

namespace {

[[noreturn]] void fail(std::size_t line, const std::string& what) {
  throw ParseError("manifest line " + std::to_string(line) + ": " + what);
}

}  // namespace

DatasetManifest read_manifest(std::istream& in) {
  DatasetManifest m;
  std::string text;
  std::size_t line = 0;
  bool have_header = false;
  std::set<std::int64_t> ids;
  std::size_t expected_images = 0, expected_annotations = 0;

  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) continue;
    json rec;
    try {
      rec = json::parse(text);
    } catch (const json::parse_error& e) {
      fail(line, std::string("invalid JSON (") + e.what() + ")");
    }
    try {
      if (!have_header) {
        if (!rec.is_object() || !rec.contains("version")) {
          fail(line, "header is missing the mandatory \"version\" field");
        }
        const int version = rec.at("version").get<int>();
        if (version != kManifestVersion) {
          throw VersionError("manifest schema version " + std::to_string(version) +
                             " is not supported (expected " +
                             std::to_string(kManifestVersion) + ")");
        }
        expected_images = rec.value("images", std::size_t{0});
        expected_annotations = rec.value("annotations", std::size_t{0});
        have_header = true;
      } else if (rec.contains("image")) {
        const auto& r = rec.at("image");
        ImageRecord img{r.at("id").get<std::int64_t>(), r.at("file").get<std::string>(),
                        r.at("width").get<int>(), r.at("height").get<int>()};
        if (img.width <= 0 || img.height <= 0) fail(line, "non-positive image size");
        if (!ids.insert(img.image_id).second) {
          fail(line, "duplicate image id " + std::to_string(img.image_id));
        }
        m.images.push_back(std::move(img));
      } else if (rec.contains("annotation")) {
        const auto& r = rec.at("annotation");
        const auto& box = r.at("bbox");
        if (!box.is_array() || box.size() != 4) fail(line, "bbox must have 4 numbers");
        AnnotationRecord a{r.at("image_id").get<std::int64_t>(), r.at("label").get<int>(),
                           box[0].get<double>(), box[1].get<double>(),
                           box[2].get<double>(), box[3].get<double>()};
        if (!ids.contains(a.image_id)) {
          fail(line, "annotation references missing image_id " +
                         std::to_string(a.image_id));
        }
        if (a.label < 0) fail(line, "negative label");
        if (!(a.w > 0 && a.h > 0)) fail(line, "box with non-positive size");
        m.annotations.push_back(a);
      } else {
        fail(line, "record is neither an image nor an annotation");
      }
    } catch (const json::exception& e) {
      fail(line, std::string("bad field (") + e.what() + ")");
    }
  }
  if (!have_header) throw ParseError("manifest is empty (no header line)");
  if (m.images.size() != expected_images ||
      m.annotations.size() != expected_annotations) {
    throw ParseError("manifest record counts do not match its header");
  }
  return m;
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_manifest(m, out);
  if (!out) throw IoError("short write to " + path.string());
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return read_manifest(in);
}

}  // namespace owdetr::data
