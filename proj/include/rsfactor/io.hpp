#pragma once

/// \file io.hpp
/// File formats: PNG (8/16-bit gray and RGB) plus binary PPM/PGM images,
/// JSON checkpoints and configs, and the CSV writers for loss histories
/// and metric tables. All readers throw DataError on unreadable or corrupt
/// inputs; writers are byte-deterministic for identical inputs.

#include <string>
#include <vector>

#include <json.hpp>

#include "rsfactor/errors.hpp"
#include "rsfactor/factorize.hpp"
#include "rsfactor/fusion.hpp"
#include "rsfactor/image.hpp"
#include "rsfactor/metrics.hpp"
#include "rsfactor/trainer.hpp"

namespace rsfactor {

inline constexpr int kCheckpointFormatVersion = 1;

/// Decode an image file into float planes in [0,1]. The format is chosen
/// by extension: .png (8- or 16-bit, grayscale or RGB; palette and alpha
/// are normalized away), .pgm / .ppm (binary, maxval up to 65535).
Image read_image(const std::string& path);

/// Encode float planes in [0,1] to disk; values are clamped then rounded
/// to the chosen depth. 1-channel images write grayscale, 3-channel RGB.
void write_image(const std::string& path, const Image& img, int bit_depth = 8);

/// Learned state persisted between train and the inference commands.
struct Checkpoint {
  ParamVector params;
  FusionConfig fusion;
  nlohmann::json config_echo;  ///< training configuration, for provenance
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

/// Throws DataError on a missing/corrupt file and on a format-version
/// mismatch (the message names both the expected and the found version).
Checkpoint load_checkpoint(const std::string& path);

/// "inf"/"-inf"/"nan" sentinels; otherwise the shortest decimal that
/// round-trips the exact double.
std::string format_double(double v);

struct NamedMetrics {
  std::string name;
  MetricReport metrics;
};

/// Header `name,psnr_y,psnr_c,ssim_y,mse`, one row per entry (the caller
/// appends its own aggregate row).
void write_metrics_csv(const std::string& path, const std::vector<NamedMetrics>& rows);

/// Header `epoch,phase,L_f,L_c,L_e,L_s,total`.
void write_history_csv(const std::string& path, const std::vector<EpochStats>& rows);

/// Per-factor statistics sidecar for cmd_factorize.
void write_factor_meta(const std::string& path, const FactorStack& stack,
                       const std::string& source_name);

/// Parse a JSON file; DataError on unreadable file or malformed JSON.
nlohmann::json load_json(const std::string& path);

/// Build a TrainConfig from a JSON object, rejecting unknown keys.
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Apply fusion-related keys of a JSON object onto a FusionConfig,
/// rejecting unknown keys inside the "fusion" object.
FusionConfig fusion_config_from_json(const nlohmann::json& j, int k_factors);

/// JSON encodings shared by checkpoints and sidecars.
nlohmann::json param_vector_to_json(const ParamVector& p);
ParamVector param_vector_from_json(const nlohmann::json& j);
nlohmann::json fusion_config_to_json(const FusionConfig& f);

}  // namespace rsfactor
