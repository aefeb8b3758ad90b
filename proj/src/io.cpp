#include "rsfactor/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <utility>
#include <vector>

namespace rsfactor {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::string lower_extension(const std::string& path) {
  const std::size_t dot = path.find_last_of('.');
  const std::size_t sep = path.find_last_of('/');
  if (dot == std::string::npos || (sep != std::string::npos && dot < sep)) return "";
  std::string ext = path.substr(dot);
  for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext;
}

Image planes_from_samples(const std::vector<std::uint16_t>& samples, Eigen::Index height,
                          Eigen::Index width, int channels, double maxval) {
  Image img(height, width, channels);
  const double scale = 1.0 / maxval;
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < height; ++r)
    for (Eigen::Index c = 0; c < width; ++c)
      for (int ch = 0; ch < channels; ++ch)
        img.planes[static_cast<std::size_t>(ch)](r, c) =
            static_cast<float>(samples[i++] * scale);
  return img;
}

// ---- PNG ------------------------------------------------------------------

Image read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw DataError("read_image: cannot open " + path);

  unsigned char signature[8];
  if (std::fread(signature, 1, 8, fp.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0)
    throw DataError("read_image: not a PNG file: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw DataError("read_image: PNG reader allocation failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DataError("read_image: PNG reader allocation failed");
  }
  // libpng reports errors by longjmp; land here, clean up, rethrow as data
  // trouble. No C++ objects with destructors live between setjmp and the
  // reads below.
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("read_image: corrupt PNG file: " + path);
  }

  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);

  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  if (bit_depth == 16 && std::endian::native == std::endian::little) png_set_swap(png);
  png_read_update_info(png, info);

  const int channels = png_get_channels(png, info);
  const int out_depth = png_get_bit_depth(png, info);
  if ((channels != 1 && channels != 3) || (out_depth != 8 && out_depth != 16)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("read_image: unsupported PNG layout in " + path + " (" +
                    std::to_string(channels) + " channels, " + std::to_string(out_depth) +
                    "-bit)");
  }

  const std::size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<unsigned char> data(rowbytes * height);
  std::vector<png_bytep> rows(height);
  for (png_uint_32 r = 0; r < height; ++r) rows[r] = data.data() + r * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const double maxval = out_depth == 16 ? 65535.0 : 255.0;
  std::vector<std::uint16_t> samples(static_cast<std::size_t>(width) * height * channels);
  if (out_depth == 8) {
    for (std::size_t i = 0; i < samples.size(); ++i) samples[i] = data[i];
  } else {
    const std::uint16_t* raw = reinterpret_cast<const std::uint16_t*>(data.data());
    for (std::size_t i = 0; i < samples.size(); ++i) samples[i] = raw[i];
  }
  return planes_from_samples(samples, static_cast<Eigen::Index>(height),
                             static_cast<Eigen::Index>(width), channels, maxval);
}

void write_png(const std::string& path, const Image& img, int bit_depth) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw DataError("write_image: cannot open " + path + " for writing");

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw DataError("write_image: PNG writer allocation failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    throw DataError("write_image: PNG writer allocation failed");
  }

  const Eigen::Index height = img.height();
  const Eigen::Index width = img.width();
  const int channels = img.channels();
  const std::uint32_t maxval = bit_depth == 16 ? 65535u : 255u;
  const std::size_t bytes_per_sample = bit_depth == 16 ? 2 : 1;
  const std::size_t rowbytes =
      static_cast<std::size_t>(width) * static_cast<std::size_t>(channels) * bytes_per_sample;

  // Quantize before entering libpng's longjmp zone so no destructor-bearing
  // locals are in scope when an encode error unwinds.
  std::vector<unsigned char> data(rowbytes * static_cast<std::size_t>(height));
  for (Eigen::Index r = 0; r < height; ++r) {
    unsigned char* row = data.data() + static_cast<std::size_t>(r) * rowbytes;
    std::size_t i = 0;
    for (Eigen::Index c = 0; c < width; ++c)
      for (int ch = 0; ch < channels; ++ch) {
        const double v =
            std::clamp(static_cast<double>(img.planes[static_cast<std::size_t>(ch)](r, c)),
                       0.0, 1.0);
        const std::uint32_t q = static_cast<std::uint32_t>(std::lround(v * maxval));
        if (bit_depth == 16) {
          std::uint16_t s = static_cast<std::uint16_t>(q);
          if (std::endian::native == std::endian::big) {
            row[i++] = static_cast<unsigned char>(s >> 8);
            row[i++] = static_cast<unsigned char>(s & 0xff);
          } else {
            // written little-endian here; png_set_swap flips on the way out
            row[i++] = static_cast<unsigned char>(s & 0xff);
            row[i++] = static_cast<unsigned char>(s >> 8);
          }
        } else {
          row[i++] = static_cast<unsigned char>(q);
        }
      }
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (Eigen::Index r = 0; r < height; ++r)
    rows[static_cast<std::size_t>(r)] = data.data() + static_cast<std::size_t>(r) * rowbytes;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("write_image: PNG encoding failed: " + path);
  }

  png_init_io(png, fp.get());
  // Pin the compression settings so identical pixels give identical bytes
  // regardless of any library default drift.
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16 && std::endian::native == std::endian::little) png_set_swap(png);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// ---- PPM / PGM --------------------------------------------------------------

/// Read one whitespace/comment-delimited header token.
std::string pnm_token(std::FILE* f, const std::string& path) {
  std::string tok;
  int c = std::fgetc(f);
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = std::fgetc(f);
    } else if (std::isspace(c)) {
      if (!tok.empty()) break;
    } else {
      tok.push_back(static_cast<char>(c));
    }
    if (!std::isspace(c) || tok.empty()) c = std::fgetc(f);
    if (!tok.empty() && (c == EOF || std::isspace(c) || c == '#')) break;
  }
  if (tok.empty()) throw DataError("read_image: truncated header in " + path);
  return tok;
}

long pnm_number(std::FILE* f, const std::string& path) {
  const std::string tok = pnm_token(f, path);
  long value = 0;
  const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc{} || p != tok.data() + tok.size())
    throw DataError("read_image: bad header field '" + tok + "' in " + path);
  return value;
}

Image read_pnm(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw DataError("read_image: cannot open " + path);

  const std::string magic = pnm_token(fp.get(), path);
  int channels = 0;
  if (magic == "P5") channels = 1;
  else if (magic == "P6") channels = 3;
  else throw DataError("read_image: unsupported PNM magic '" + magic + "' in " + path);

  const long width = pnm_number(fp.get(), path);
  const long height = pnm_number(fp.get(), path);
  const long maxval = pnm_number(fp.get(), path);
  if (width < 1 || height < 1)
    throw DataError("read_image: bad dimensions in " + path);
  if (maxval < 1 || maxval > 65535)
    throw DataError("read_image: bad maxval " + std::to_string(maxval) + " in " + path);
  // The single whitespace byte after maxval was already consumed by the
  // tokenizer; sample data starts here.

  const std::size_t count =
      static_cast<std::size_t>(width) * static_cast<std::size_t>(height) *
      static_cast<std::size_t>(channels);
  std::vector<std::uint16_t> samples(count);
  if (maxval < 256) {
    std::vector<unsigned char> raw(count);
    if (std::fread(raw.data(), 1, count, fp.get()) != count)
      throw DataError("read_image: truncated pixel data in " + path);
    for (std::size_t i = 0; i < count; ++i) samples[i] = raw[i];
  } else {
    std::vector<unsigned char> raw(count * 2);
    if (std::fread(raw.data(), 1, count * 2, fp.get()) != count * 2)
      throw DataError("read_image: truncated pixel data in " + path);
    for (std::size_t i = 0; i < count; ++i)
      samples[i] = static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
  }
  return planes_from_samples(samples, height, width, channels,
                             static_cast<double>(maxval));
}

void write_pnm(const std::string& path, const Image& img, int bit_depth) {
  const std::string ext = lower_extension(path);
  if (ext == ".pgm" && img.channels() != 1)
    throw std::invalid_argument("write_image: .pgm requires a 1-channel image");
  if (ext == ".ppm" && img.channels() != 3)
    throw std::invalid_argument("write_image: .ppm requires a 3-channel image");

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw DataError("write_image: cannot open " + path + " for writing");

  const std::uint32_t maxval = bit_depth == 16 ? 65535u : 255u;
  std::string header = (img.channels() == 1 ? std::string("P5") : std::string("P6")) + "\n" +
                       std::to_string(img.width()) + " " + std::to_string(img.height()) +
                       "\n" + std::to_string(maxval) + "\n";
  if (std::fwrite(header.data(), 1, header.size(), fp.get()) != header.size())
    throw DataError("write_image: write failed: " + path);

  std::vector<unsigned char> data;
  data.reserve(static_cast<std::size_t>(img.samples()) * (bit_depth == 16 ? 2 : 1));
  for (Eigen::Index r = 0; r < img.height(); ++r)
    for (Eigen::Index c = 0; c < img.width(); ++c)
      for (int ch = 0; ch < img.channels(); ++ch) {
        const double v =
            std::clamp(static_cast<double>(img.planes[static_cast<std::size_t>(ch)](r, c)),
                       0.0, 1.0);
        const std::uint32_t q = static_cast<std::uint32_t>(std::lround(v * maxval));
        if (bit_depth == 16) {
          data.push_back(static_cast<unsigned char>(q >> 8));  // big-endian per spec
          data.push_back(static_cast<unsigned char>(q & 0xff));
        } else {
          data.push_back(static_cast<unsigned char>(q));
        }
      }
  if (std::fwrite(data.data(), 1, data.size(), fp.get()) != data.size())
    throw DataError("write_image: write failed: " + path);
}

std::string mode_name(FusionMode mode) {
  return mode == FusionMode::curve ? "curve" : "running_average";
}

FusionMode mode_from_name(const std::string& name) {
  if (name == "curve") return FusionMode::curve;
  if (name == "running_average") return FusionMode::running_average;
  throw std::invalid_argument("fusion mode must be 'curve' or 'running_average', got '" +
                              name + "'");
}

}  // namespace

Image read_image(const std::string& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".png") return read_png(path);
  if (ext == ".ppm" || ext == ".pgm") return read_pnm(path);
  throw DataError("read_image: unsupported image format: " + path);
}

void write_image(const std::string& path, const Image& img, int bit_depth) {
  if (img.channels() != 1 && img.channels() != 3)
    throw std::invalid_argument("write_image: only 1- or 3-channel images, got " +
                                std::to_string(img.channels()));
  if (img.samples() == 0) throw std::invalid_argument("write_image: empty image");
  if (bit_depth != 8 && bit_depth != 16)
    throw std::invalid_argument("write_image: bit depth must be 8 or 16, got " +
                                std::to_string(bit_depth));
  const std::string ext = lower_extension(path);
  if (ext == ".png") return write_png(path, img, bit_depth);
  if (ext == ".ppm" || ext == ".pgm") return write_pnm(path, img, bit_depth);
  throw std::invalid_argument("write_image: unsupported image format: " + path);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0.0 ? "inf" : "-inf";
  char buf[32];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed JSON in " + path + ": " + e.what());
  }
}

nlohmann::json param_vector_to_json(const ParamVector& p) {
  nlohmann::json factors = nlohmann::json::array();
  for (const FactorParams& f : p.factors)
    factors.push_back({{"alpha", f.alpha}, {"beta", f.beta}, {"mu", f.mu}});
  return {{"k_factors", p.k_factors}, {"t_iters", p.t_iters}, {"factors", factors}};
}

ParamVector param_vector_from_json(const nlohmann::json& j) {
  ParamVector p;
  p.k_factors = j.at("k_factors").get<int>();
  p.t_iters = j.at("t_iters").get<int>();
  for (const auto& f : j.at("factors")) {
    FactorParams fp;
    fp.alpha = f.at("alpha").get<std::vector<double>>();
    fp.beta = f.at("beta").get<std::vector<double>>();
    fp.mu = f.at("mu").get<std::vector<double>>();
    p.factors.push_back(std::move(fp));
  }
  return p;
}

nlohmann::json fusion_config_to_json(const FusionConfig& f) {
  return {{"image_weight", f.image_weight},
          {"factor_weights", f.factor_weights},
          {"gammas", f.gammas},
          {"bilateral",
           {{"window", f.bilateral.window},
            {"sigma_color", f.bilateral.sigma_color},
            {"sigma_space", f.bilateral.sigma_space}}},
          {"mode", mode_name(f.mode)},
          {"curve_literal_sum", f.curve_literal_sum}};
}

FusionConfig fusion_config_from_json(const nlohmann::json& j, int k_factors) {
  FusionConfig f = FusionConfig::defaults_for(k_factors);
  if (!j.is_object())
    throw std::invalid_argument("fusion config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "image_weight") f.image_weight = value.get<double>();
    else if (key == "factor_weights") f.factor_weights = value.get<std::vector<double>>();
    else if (key == "gammas") f.gammas = value.get<std::vector<double>>();
    else if (key == "mode") f.mode = mode_from_name(value.get<std::string>());
    else if (key == "curve_literal_sum") f.curve_literal_sum = value.get<bool>();
    else if (key == "bilateral") {
      for (const auto& [bkey, bvalue] : value.items()) {
        if (bkey == "window") f.bilateral.window = bvalue.get<int>();
        else if (bkey == "sigma_color") f.bilateral.sigma_color = bvalue.get<double>();
        else if (bkey == "sigma_space") f.bilateral.sigma_space = bvalue.get<double>();
        else throw std::invalid_argument("unknown config key: fusion.bilateral." + bkey);
      }
    } else {
      throw std::invalid_argument("unknown config key: fusion." + key);
    }
  }
  return f;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "k_factors") cfg.k_factors = value.get<int>();
    else if (key == "t_iters") cfg.t_iters = value.get<int>();
    else if (key == "lambda_f") cfg.weights.lambda_f = value.get<double>();
    else if (key == "lambda_c") cfg.weights.lambda_c = value.get<double>();
    else if (key == "lambda_e") cfg.weights.lambda_e = value.get<double>();
    else if (key == "lambda_s") cfg.weights.lambda_s = value.get<double>();
    else if (key == "learning_rate") cfg.learning_rate = value.get<double>();
    else if (key == "batch_size") cfg.batch_size = value.get<int>();
    else if (key == "epochs") cfg.epochs = value.get<int>();
    else if (key == "freeze_epoch") cfg.freeze_epoch = value.get<int>();
    else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
    else if (key == "fd_step") cfg.fd_step = value.get<double>();
    else if (key == "exposure_target") cfg.exposure_target = value.get<double>();
    else if (key == "exposure_window") cfg.exposure_window = value.get<int>();
    else if (key == "mu_init") cfg.mu_init = value.get<double>();
    else if (key == "threshold_blend") cfg.threshold_blend = value.get<double>();
    else if (key == "factor_loss_only") cfg.factor_loss_only = value.get<bool>();
    else if (key == "jobs") cfg.jobs = value.get<int>();
    else if (key == "fusion") { /* consumed separately by the command layer */ }
    else throw std::invalid_argument("unknown config key: " + key);
  }
  return cfg;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::json j = {{"format_version", kCheckpointFormatVersion},
                      {"params", param_vector_to_json(ckpt.params)},
                      {"fusion", fusion_config_to_json(ckpt.fusion)},
                      {"config", ckpt.config_echo}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("save_checkpoint: cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw DataError("save_checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  const nlohmann::json j = load_json(path);
  if (!j.is_object() || !j.contains("format_version") ||
      !j["format_version"].is_number_integer())
    throw DataError("load_checkpoint: " + path + " has no format_version field");
  const int version = j["format_version"].get<int>();
  if (version != kCheckpointFormatVersion)
    throw DataError("load_checkpoint: format version mismatch in " + path + ": expected " +
                    std::to_string(kCheckpointFormatVersion) + ", found " +
                    std::to_string(version));
  try {
    Checkpoint out;
    out.params = param_vector_from_json(j.at("params"));
    out.fusion = fusion_config_from_json(j.at("fusion"), out.params.k_factors);
    out.config_echo = j.contains("config") ? j.at("config") : nlohmann::json::object();
    out.params.validate();
    out.fusion.validate(out.params.k_factors);
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("load_checkpoint: malformed checkpoint " + path + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError("load_checkpoint: invalid checkpoint " + path + ": " + e.what());
  }
}

void write_metrics_csv(const std::string& path, const std::vector<NamedMetrics>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("write_metrics_csv: cannot open " + path + " for writing");
  out << "name,psnr_y,psnr_c,ssim_y,mse\n";
  for (const NamedMetrics& row : rows)
    out << row.name << ',' << format_double(row.metrics.psnr_y) << ','
        << format_double(row.metrics.psnr_c) << ',' << format_double(row.metrics.ssim_y)
        << ',' << format_double(row.metrics.mse) << '\n';
  if (!out) throw DataError("write_metrics_csv: write failed: " + path);
}

void write_history_csv(const std::string& path, const std::vector<EpochStats>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("write_history_csv: cannot open " + path + " for writing");
  out << "epoch,phase,L_f,L_c,L_e,L_s,total\n";
  for (const EpochStats& row : rows)
    out << row.epoch << ',' << row.phase << ',' << format_double(row.l_f) << ','
        << format_double(row.l_c) << ',' << format_double(row.l_e) << ','
        << format_double(row.l_s) << ',' << format_double(row.total) << '\n';
  if (!out) throw DataError("write_history_csv: write failed: " + path);
}

void write_factor_meta(const std::string& path, const FactorStack& stack,
                       const std::string& source_name) {
  nlohmann::json factors = nlohmann::json::array();
  for (int k = 0; k < stack.k_factors(); ++k) {
    const Image& e = stack.e[static_cast<std::size_t>(k)];
    const Image& f = stack.f[static_cast<std::size_t>(k)];
    double f_abs = 0.0;
    float f_min = 0.0f;
    float f_max = 0.0f;
    bool first = true;
    for (const auto& p : f.planes) {
      f_abs += p.cast<double>().cwiseAbs().sum();
      f_min = first ? p.minCoeff() : std::min(f_min, p.minCoeff());
      f_max = first ? p.maxCoeff() : std::max(f_max, p.maxCoeff());
      first = false;
    }
    factors.push_back({{"index", k + 1},
                       {"e_mean", mean(e)},
                       {"f_mean", mean(f)},
                       {"f_abs_mean", f_abs / static_cast<double>(f.samples())},
                       {"f_min", static_cast<double>(f_min)},
                       {"f_max", static_cast<double>(f_max)}});
  }

  nlohmann::json trace = nlohmann::json::array();
  for (const FactorTrace& tr : stack.trace) {
    std::vector<double> ratios(tr.x_mean.size());
    for (std::size_t k = 0; k < tr.x_mean.size(); ++k)
      ratios[k] = tr.x_mean[k] == 0.0 ? 0.0 : tr.e_pre_mean[k] / tr.x_mean[k];
    trace.push_back({{"x_mean", tr.x_mean},
                     {"e_pre_mean", tr.e_pre_mean},
                     {"energy_ratios", ratios}});
  }

  const nlohmann::json j = {{"source", source_name},
                            {"k_factors", stack.k_factors()},
                            {"height", stack.height()},
                            {"width", stack.width()},
                            {"channels", stack.channels()},
                            {"factors", factors},
                            {"trace", trace}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("write_factor_meta: cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw DataError("write_factor_meta: write failed: " + path);
}

}  // namespace rsfactor
