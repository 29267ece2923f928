#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "pat/errors.hpp"
#include "pat/io.hpp"
#include "pat/metrics.hpp"
#include "pat/pipeline.hpp"
#include "pat/rng.hpp"
#include "pat/stats.hpp"

namespace pat {

namespace fs = std::filesystem;

namespace {

Tensor clamp_nonnegative(Tensor t) {
  for (int64_t i = 0; i < t.numel(); ++i)
    if (t[i] < 0.0) t[i] = 0.0;
  return t;
}

std::string level_dir_name(int64_t n_angles) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "level_%03d", static_cast<int>(n_angles));
  return buf;
}

double mean_of(const std::vector<double>& v) { return mean(v); }

double std_of(const std::vector<double>& v) {
  return v.size() < 2 ? 0.0 : sample_stddev(v);
}

}  // namespace

ScoreRow score_reconstruction(int64_t sample_id, const std::string& method,
                              const Tensor& reconstruction, const Tensor& truth) {
  Tensor recon = clamp_nonnegative(reconstruction);
  Tensor gt = clamp_nonnegative(truth);
  ScoreRow row;
  row.sample_id = sample_id;
  row.method = method;
  row.msssim = ms_ssim(recon, gt);
  row.ssim = ssim(recon, gt);
  row.psnr = psnr(recon, gt, 1.0);
  return row;
}

void write_scores_csv(const std::vector<ScoreRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("write_scores_csv: cannot open " + path);
  out << "sample_id,method,msssim,ssim,psnr\n";
  char buf[160];
  for (const ScoreRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%lld,%s,%.9f,%.9f,%.6f\n",
                  static_cast<long long>(r.sample_id), r.method.c_str(), r.msssim, r.ssim,
                  r.psnr);
    out << buf;
  }
  if (!out) throw IoError("write_scores_csv: write failed for " + path);
}

std::vector<ScoreRow> read_scores_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("read_scores_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "sample_id,method,msssim,ssim,psnr")
    throw IoError("read_scores_csv: unexpected header in " + path);
  std::vector<ScoreRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    ScoreRow r;
    if (!std::getline(ss, field, ',')) throw IoError("read_scores_csv: bad row in " + path);
    r.sample_id = std::stoll(field);
    if (!std::getline(ss, r.method, ',')) throw IoError("read_scores_csv: bad row in " + path);
    if (!std::getline(ss, field, ',')) throw IoError("read_scores_csv: bad row in " + path);
    r.msssim = std::stod(field);
    if (!std::getline(ss, field, ',')) throw IoError("read_scores_csv: bad row in " + path);
    r.ssim = std::stod(field);
    if (!std::getline(ss, field, ',')) throw IoError("read_scores_csv: bad row in " + path);
    r.psnr = std::stod(field);
    rows.push_back(std::move(r));
  }
  return rows;
}

namespace {

// A level whose scores.csv already holds every (sample, method) row is done;
// reruns then skip its dataset build and training entirely. This is what makes
// an interrupted multi-hour study resumable.
bool level_scores_complete(const fs::path& path, int64_t n_test, std::vector<ScoreRow>& rows) {
  if (!fs::exists(path)) return false;
  try {
    rows = read_scores_csv(path.string());
  } catch (const Error&) {
    return false;
  }
  return static_cast<int64_t>(rows.size()) == 3 * n_test;
}

// Reuse a finished training run (final checkpoint at the requested epoch).
bool checkpoint_complete(const fs::path& dir, const NetworkConfig& net, int64_t epochs) {
  if (!fs::exists(dir / "manifest.json")) return false;
  try {
    Checkpoint ckpt = load_checkpoint(dir.string());
    return ckpt.epoch == epochs && ckpt.network.variant == net.variant;
  } catch (const Error&) {
    return false;
  }
}

}  // namespace

StudyReport run_study(const ExperimentConfig& cfg) {
  validate_experiment_config(cfg);
  fs::path out_root(cfg.output_dir);
  std::error_code ec;
  fs::create_directories(out_root, ec);
  if (ec) throw IoError("run_study: cannot create " + out_root.string());
  save_experiment_config(cfg, (out_root / "config.json").string());

  StudyReport report;
  for (int64_t n_angles : cfg.sensors.sparsity_levels) {
    fs::path level_dir = out_root / level_dir_name(n_angles);
    std::vector<ScoreRow> rows;
    if (level_scores_complete(level_dir / "scores.csv", cfg.test_size, rows)) {
      std::printf("[study] %s: reusing completed scores\n", level_dir_name(n_angles).c_str());
      std::fflush(stdout);
    } else {
      std::printf("[study] %s: building dataset (%lld train / %lld test)\n",
                  level_dir_name(n_angles).c_str(), static_cast<long long>(cfg.train_size),
                  static_cast<long long>(cfg.test_size));
      std::fflush(stdout);
      build_dataset(cfg, n_angles, level_dir.string());
      Dataset train = load_dataset_split(level_dir.string(), "train");
      Dataset test = load_dataset_split(level_dir.string(), "test");

      struct Slot {
        const char* name;
        const char* variant;
      };
      const Slot slots[2] = {{"dd", "dd_unet"}, {"fd", "fd_unet"}};
      for (const Slot& slot : slots) {
        NetworkConfig net = cfg.network;
        net.variant = slot.variant;
        if (checkpoint_complete(level_dir / slot.name / "checkpoint", net, cfg.training.epochs)) {
          std::printf("[study] %s: reusing trained %s\n", level_dir_name(n_angles).c_str(),
                      slot.variant);
          std::fflush(stdout);
          continue;
        }
        // Both variants draw their init from the same master seed but distinct
        // tags; shuffling inside train_network is variant-independent, so the
        // two get identical batch schedules.
        uint64_t init_seed =
            Rng(cfg.training.seed, 0, std::string("init/") + slot.name).next_u64();
        train_network(cfg, net, train, &test, init_seed, (level_dir / slot.name).string());
      }

      Checkpoint dd = load_checkpoint((level_dir / "dd" / "checkpoint").string());
      Checkpoint fd = load_checkpoint((level_dir / "fd" / "checkpoint").string());

      std::vector<Tensor> test_inputs;
      test_inputs.reserve(test.samples.size());
      for (const auto& s : test.samples) test_inputs.push_back(s.input);
      std::vector<Tensor> dd_out = run_inference(dd, test_inputs);
      std::vector<Tensor> fd_out = run_inference(fd, test_inputs);

      for (size_t i = 0; i < test.samples.size(); ++i) {
        const DatasetSample& s = test.samples[i];
        rows.push_back(score_reconstruction(s.id, "time_reversal", s.input, s.target));
        rows.push_back(score_reconstruction(s.id, "fd_unet", fd_out[i], s.target));
        rows.push_back(score_reconstruction(s.id, "dd_unet", dd_out[i], s.target));
      }
      write_scores_csv(rows, (level_dir / "scores.csv").string());
    }

    // Pair the per-sample scores by id so the report works identically for
    // freshly computed and reloaded rows.
    std::map<int64_t, double> tr_by_id, fd_by_id, dd_by_id;
    for (const ScoreRow& r : rows) {
      if (r.method == "time_reversal")
        tr_by_id[r.sample_id] = r.msssim;
      else if (r.method == "fd_unet")
        fd_by_id[r.sample_id] = r.msssim;
      else if (r.method == "dd_unet")
        dd_by_id[r.sample_id] = r.msssim;
      else
        throw IoError("run_study: unknown method '" + r.method + "' in scores for " +
                      level_dir.string());
    }
    if (tr_by_id.size() != fd_by_id.size() || tr_by_id.size() != dd_by_id.size())
      throw IoError("run_study: incomplete score rows in " + level_dir.string());

    std::vector<double> tr_scores, fd_scores, dd_scores, diffs;
    for (const auto& [id, tr] : tr_by_id) {
      auto fd_it = fd_by_id.find(id);
      auto dd_it = dd_by_id.find(id);
      if (fd_it == fd_by_id.end() || dd_it == dd_by_id.end())
        throw IoError("run_study: sample " + std::to_string(id) + " missing a method in " +
                      level_dir.string());
      tr_scores.push_back(tr);
      fd_scores.push_back(fd_it->second);
      dd_scores.push_back(dd_it->second);
      diffs.push_back(dd_it->second - fd_it->second);
    }

    StudyLevelReport level;
    level.n_angles = n_angles;
    level.n_test = static_cast<int64_t>(tr_scores.size());
    level.tr_mean = mean_of(tr_scores);
    level.tr_std = std_of(tr_scores);
    level.fd_mean = mean_of(fd_scores);
    level.fd_std = std_of(fd_scores);
    level.dd_mean = mean_of(dd_scores);
    level.dd_std = std_of(dd_scores);
    level.diff_mean = mean_of(diffs);
    level.diff_std = std_of(diffs);
    level.wilcoxon_p = wilcoxon_signed_rank(diffs).p_value;
    report.levels.push_back(level);

    std::printf("[study] %s: tr %.4f fd %.4f dd %.4f diff %.4f p %.2e\n",
                level_dir_name(n_angles).c_str(), level.tr_mean, level.fd_mean, level.dd_mean,
                level.diff_mean, level.wilcoxon_p);
    std::fflush(stdout);
    write_study_summary_csv(report, (out_root / "summary.csv").string());
  }
  return report;
}

void write_study_summary_csv(const StudyReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("write_study_summary_csv: cannot open " + path);
  out << "n_angles,tr_mean,tr_std,fd_mean,fd_std,dd_mean,dd_std,"
         "dd_fd_diff_mean,dd_fd_diff_std,wilcoxon_p,n_test\n";
  char buf[256];
  for (const StudyLevelReport& l : report.levels) {
    std::snprintf(buf, sizeof(buf),
                  "%lld,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.3e,%lld\n",
                  static_cast<long long>(l.n_angles), l.tr_mean, l.tr_std, l.fd_mean, l.fd_std,
                  l.dd_mean, l.dd_std, l.diff_mean, l.diff_std, l.wilcoxon_p,
                  static_cast<long long>(l.n_test));
    out << buf;
  }
  if (!out) throw IoError("write_study_summary_csv: write failed for " + path);
}

std::string format_study_table(const StudyReport& report) {
  std::ostringstream os;
  os << "angles | time reversal     | fd_unet           | dd_unet           | dd-fd             | p\n";
  os << "-------+-------------------+-------------------+-------------------+-------------------+--------\n";
  char buf[256];
  for (const StudyLevelReport& l : report.levels) {
    std::snprintf(buf, sizeof(buf),
                  "%6lld | %7.4f +- %6.4f | %7.4f +- %6.4f | %7.4f +- %6.4f | %7.4f +- %6.4f | %.1e\n",
                  static_cast<long long>(l.n_angles), l.tr_mean, l.tr_std, l.fd_mean, l.fd_std,
                  l.dd_mean, l.dd_std, l.diff_mean, l.diff_std, l.wilcoxon_p);
    os << buf;
  }
  return os.str();
}

void export_image(const Tensor& image, const std::string& path, const std::string& mode,
                  int64_t axis) {
  Tensor flat;
  if (mode == "mip") {
    flat = (image.ndim() == 2) ? image : mip(image, axis);
  } else if (mode == "slice") {
    if (image.ndim() == 2) {
      flat = image;
    } else if (image.ndim() == 3) {
      if (axis < 0 || axis >= 3) throw DimensionError("export_image: invalid slice axis");
      // Middle slice along the chosen axis.
      std::vector<int64_t> ext = image.shape();
      int64_t mid = ext[static_cast<size_t>(axis)] / 2;
      std::vector<int64_t> out_shape;
      for (int64_t d = 0; d < 3; ++d)
        if (d != axis) out_shape.push_back(ext[static_cast<size_t>(d)]);
      flat = Tensor::zeros(out_shape);
      std::vector<int64_t> idx(3, 0);
      idx[static_cast<size_t>(axis)] = mid;
      int64_t k = 0;
      std::vector<int64_t> free_dims;
      for (int64_t d = 0; d < 3; ++d)
        if (d != axis) free_dims.push_back(d);
      for (int64_t a = 0; a < out_shape[0]; ++a) {
        idx[static_cast<size_t>(free_dims[0])] = a;
        for (int64_t b = 0; b < out_shape[1]; ++b) {
          idx[static_cast<size_t>(free_dims[1])] = b;
          flat[k++] = image[image.flat_index(idx)];
        }
      }
    } else {
      throw DimensionError("export_image: expected a 2D image or 3D volume");
    }
  } else {
    throw ConfigError("export_image: mode must be 'slice' or 'mip'");
  }
  if (flat.ndim() != 2) throw DimensionError("export_image: projection is not 2D");
  export_pgm(flat, path);
}

}  // namespace pat
