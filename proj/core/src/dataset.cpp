#include "lidarnl/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "lidarnl/errors.hpp"
#include "lidarnl/scan_io.hpp"

namespace fs = std::filesystem;

namespace lidarnl {

std::vector<std::string> read_class_names(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) names.push_back(line);
  }
  if (names.size() < 2) throw ConfigError(file.string() + ": need at least 2 classes");
  return names;
}

void write_class_names(const fs::path& file, const std::vector<std::string>& names) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  for (const auto& n : names) out << n << '\n';
}

std::vector<fs::path> list_files(const fs::path& dir, const std::string& extension) {
  if (!fs::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == extension) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::string scene_stem(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06zu", index);
  return buf;
}

Dataset read_dataset(const fs::path& root, const fs::path& labels_dir) {
  Dataset ds;
  ds.class_names = read_class_names(root / "classes.txt");
  const fs::path label_root = labels_dir.empty() ? root / "labels" : labels_dir;
  const int classes = static_cast<int>(ds.class_names.size());
  for (const fs::path& scan_path : list_files(root / "scans", ".bin")) {
    const std::string stem = scan_path.stem().string();
    Scene scene;
    scene.cloud = parse_scan(read_file_bytes(scan_path));
    scene.cloud.frame_id = stem;
    const RawLabels raw = parse_labels(read_file_bytes(label_root / (stem + ".label")));
    if (raw.size() != scene.size()) {
      throw LengthError(stem + ": label count " + std::to_string(raw.size()) +
                        " != point count " + std::to_string(scene.size()));
    }
    scene.labels.num_classes = classes;
    scene.labels.labels.assign(raw.semantic.begin(), raw.semantic.end());
    scene.instance_ids = raw.instance_ids;
    scene.validate();
    ds.scenes.push_back(std::move(scene));
    ds.stems.push_back(stem);
  }
  if (ds.scenes.empty()) throw IoError(root.string() + ": no scans found");
  return ds;
}

std::vector<fs::path> write_dataset(const fs::path& root, const Dataset& dataset) {
  fs::create_directories(root / "scans");
  fs::create_directories(root / "labels");
  std::vector<fs::path> written;
  write_class_names(root / "classes.txt", dataset.class_names);
  written.emplace_back("classes.txt");
  for (std::size_t i = 0; i < dataset.scenes.size(); ++i) {
    const Scene& s = dataset.scenes[i];
    const std::string stem = i < dataset.stems.size() ? dataset.stems[i] : scene_stem(i);
    const fs::path scan_rel = fs::path("scans") / (stem + ".bin");
    const fs::path label_rel = fs::path("labels") / (stem + ".label");
    write_file_bytes(root / scan_rel, serialize_scan(s.cloud));
    write_file_bytes(root / label_rel, serialize_labels(s.labels.labels, s.instance_ids));
    written.push_back(scan_rel);
    written.push_back(label_rel);
  }
  return written;
}

}  // namespace lidarnl
