#pragma once

// PNG images, disparity grids, checkpoints and on-disk datasets.
//
// Disparity file layout (little-endian):
//   8 bytes  magic "SDSRDISP"
//   uint32   height
//   uint32   width
//   float32  values[height * width], row-major
//   uint8    valid[height * width]
//
// Checkpoint container (little-endian), paired with a JSON manifest at
// <path>.json that lists name, shape, dtype and checksum per tensor:
//   8 bytes  magic "SDSRCKPT"
//   uint32   version (1)
//   uint64   tensor count
//   per tensor: uint32 name length, name bytes, uint32 rank, int32 dims[rank],
//               float64 values[numel]

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdsr/degradation.hpp"

namespace sdsr {

/// Writes a [3,H,W] (or [1,H,W]) tensor as 8-bit RGB PNG; values are clamped to [0,1].
void write_png(const std::string& path, const Tensor& img);
Tensor read_png(const std::string& path);

void write_disparity(const std::string& path, const DisparityMap& d);
DisparityMap read_disparity(const std::string& path);

/// Tiles [3,h,w] images into rows (rows may hold images of different sizes; each
/// cell is upscaled by nearest neighbour to the largest cell size) with a 2 px border.
Tensor make_grid(const std::vector<std::vector<Tensor>>& rows);

struct Checkpoint {
    std::string component;
    std::map<std::string, Tensor> tensors;
    nlohmann::json manifest;
};

/// Writes <path> and <path>.json. `meta` is merged into the manifest.
void save_checkpoint(const std::string& path, const std::string& component,
                     const std::vector<std::pair<std::string, Tensor>>& tensors, const nlohmann::json& meta = {});
/// Reads both files and verifies every checksum; throws std::runtime_error on mismatch.
Checkpoint load_checkpoint(const std::string& path);

/// Dataset directory: <id>_{hr,lr}_{left,right}.png, <id>_disp.bin and <id>.json per pair.
void save_dataset(const std::string& dir, const std::vector<StereoSample>& data);
std::vector<StereoSample> load_dataset(const std::string& dir);

/// Reads LR pairs from a directory of <name>_left.png / <name>_right.png files.
std::vector<std::pair<std::string, StereoImagePair>> load_pair_dir(const std::string& dir);

}  // namespace sdsr
