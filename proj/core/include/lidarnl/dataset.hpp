#ifndef LIDARNL_DATASET_HPP_
#define LIDARNL_DATASET_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "lidarnl/types.hpp"

namespace lidarnl {

// On-disk dataset directory:
//
//   <root>/classes.txt        one class name per line, in id order
//   <root>/scans/NNNNNN.bin   scan files
//   <root>/labels/NNNNNN.label label files holding unified ids (kIgnore for
//                             ignored points)
//
// Raw dataset exports go through a Taxonomy first; this layout always holds
// unified ids.
struct Dataset {
  std::vector<std::string> class_names;
  std::vector<Scene> scenes;
  std::vector<std::string> stems;  // file stem per scene
};

std::vector<std::string> read_class_names(const std::filesystem::path& file);
void write_class_names(const std::filesystem::path& file,
                       const std::vector<std::string>& names);

// Lists "<dir>/*<extension>" sorted by file name.
std::vector<std::filesystem::path> list_files(const std::filesystem::path& dir,
                                              const std::string& extension);

// labels_dir overrides <root>/labels (e.g. a noise-injected copy).
Dataset read_dataset(const std::filesystem::path& root,
                     const std::filesystem::path& labels_dir = {});

// Returns the written file paths (relative to root) in write order.
std::vector<std::filesystem::path> write_dataset(const std::filesystem::path& root,
                                                 const Dataset& dataset);

std::string scene_stem(std::size_t index);

}  // namespace lidarnl

#endif  // LIDARNL_DATASET_HPP_
