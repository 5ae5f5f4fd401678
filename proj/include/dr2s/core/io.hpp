#pragma once

#include <filesystem>
#include <string>

#include "dr2s/core/image.hpp"

namespace dr2s {

/// 8-bit gray or RGB PNG. Samples are clamped to [0, 1] and quantized with
/// round-half-up, i.e. floor(v * 255 + 0.5).
void write_png(const std::filesystem::path& path, const ImageF& img);

/// Reads 8-bit (or 16-bit, reduced to 8) gray/RGB PNG as value / 255. Alpha is
/// dropped, palette images are expanded.
ImageF read_png(const std::filesystem::path& path);

/// NumPy .npy v1.0, dtype '<f8', C order. Single-channel images are stored with
/// shape (H, W); multi-channel with shape (C, H, W) matching the planar layout.
void write_npy(const std::filesystem::path& path, const ImageF& img);
ImageF read_npy(const std::filesystem::path& path);

/// Dispatch on extension (.png or .npy).
ImageF read_image(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace dr2s
