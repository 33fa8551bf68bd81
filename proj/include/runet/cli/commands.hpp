#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "runet/cli/config.hpp"
#include "runet/cli/train.hpp"
#include "runet/data/annotations.hpp"
#include "runet/data/mhd.hpp"
#include "runet/eval/froc.hpp"
#include "runet/eval/report.hpp"
#include "runet/io/checkpoint.hpp"
#include "runet/io/dataset.hpp"
#include "runet/model/param_count.hpp"

namespace runet {

/// Failure carrying a short machine-readable code, printed as
/// `error: <code>: <message>`.
class CommandError : public std::runtime_error {
public:
  CommandError(std::string code, const std::string& msg) : std::runtime_error(msg), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

private:
  std::string code_;
};

inline constexpr const char* kTrainLogFile = "train_log.csv";
inline constexpr const char* kLastCheckpoint = "last.ckpt";

inline std::string epoch_checkpoint_name(std::size_t epochs_done) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03zu.ckpt", epochs_done);
  return buf;
}

/// Network input for one axial HU slice: clip and normalize, zero outside
/// the lungs, resample to size x size. Shape (1, size, size).
inline Tensor preprocess_slice(const Tensor& hu, std::size_t size, bool lung_mask = true) {
  Tensor image = clip_normalize(hu);
  if (lung_mask) image = apply_mask(image, to_tensor<float>(segment_lung(hu).mask));
  return resize_nearest(image, size, size).reshaped({1, size, size});
}

// ---------------------------------------------------------------- gen-synthetic

inline void cmd_gen_synthetic(const RunConfig& cfg, std::ostream& log) {
  SyntheticParams p;
  p.size = cfg.input_size;
  p.nodules_per_image = cfg.nodules_per_image;
  p.apply_lung_mask = cfg.apply_lung_mask;
  const auto pairs = gen_synthetic(cfg.seed, cfg.count, p);
  save_dataset(cfg.out_dir, pairs);
  log << "wrote " << pairs.size() << " slices of " << p.size << "x" << p.size << " to " << cfg.out_dir << "\n";
}

// ------------------------------------------------------------------ preprocess

/// Positive slices (any nodule pixel) of one volume plus
/// negatives_per_positive times as many nodule-free slices drawn with
/// stream (seed, scan index).
inline std::vector<SlicePair> slices_from_volume(const CtVolume& vol, const std::string& series_id,
                                                 const std::vector<NoduleAnnotation>& nodules, const RunConfig& cfg,
                                                 std::size_t scan_index) {
  std::vector<std::size_t> pos, neg;
  std::vector<Tensor> masks(vol.nz());
  for (std::size_t k = 0; k < vol.nz(); ++k) {
    masks[k] = make_mask(vol, nodules, k, cfg.input_size, cfg.input_size);
    (sum_all(masks[k]) > 0.0 ? pos : neg).push_back(k);
  }
  Rng rng(Rng::derive(cfg.seed, {scan_index}));
  for (std::size_t i = neg.size(); i > 1; --i) std::swap(neg[i - 1], neg[rng.below(i)]);
  neg.resize(std::min(neg.size(), pos.size() * cfg.negatives_per_positive));
  std::vector<std::size_t> keep = pos;
  keep.insert(keep.end(), neg.begin(), neg.end());
  std::sort(keep.begin(), keep.end());
  std::vector<SlicePair> out;
  for (std::size_t k : keep) {
    SlicePair s;
    s.image = preprocess_slice(vol.slice(k), cfg.input_size, cfg.apply_lung_mask);
    s.mask = masks[k].reshaped({1, cfg.input_size, cfg.input_size});
    s.series_id = series_id;
    s.slice = static_cast<std::int64_t>(k);
    s.seed = cfg.seed;
    out.push_back(std::move(s));
  }
  return out;
}

/// `.mhd` files at `path` (a file or a directory), sorted by name.
inline std::vector<std::filesystem::path> list_mhd(const std::filesystem::path& path) {
  if (std::filesystem::is_regular_file(path)) return {path};
  if (!std::filesystem::is_directory(path)) throw CommandError("io", "no such file or directory: " + path.string());
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(path))
    if (e.is_regular_file() && e.path().extension() == ".mhd") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

inline void cmd_preprocess(const RunConfig& cfg, std::ostream& log) {
  if (cfg.mhd.empty()) throw CommandError("config", "preprocess needs mhd (a .mhd file or directory)");
  if (cfg.annotations.empty()) throw CommandError("config", "preprocess needs annotations (CSV)");
  std::ifstream in(cfg.annotations);
  if (!in) throw CommandError("io", "cannot open " + cfg.annotations);
  std::map<std::string, std::vector<NoduleAnnotation>> by_series;
  for (auto& a : read_annotations(in)) by_series[a.series_id].push_back(a);

  const auto files = list_mhd(cfg.mhd);
  std::vector<SlicePair> pairs;
  for (std::size_t i = 0; i < files.size(); ++i) {
    const std::string id = files[i].stem().string();
    const CtVolume vol = load_mhd(files[i]).volume;
    auto it = by_series.find(id);
    const auto s = slices_from_volume(vol, id, it == by_series.end() ? std::vector<NoduleAnnotation>{} : it->second,
                                      cfg, i);
    log << id << ": " << vol.nx() << "x" << vol.ny() << "x" << vol.nz() << ", kept " << s.size() << " slices\n";
    pairs.insert(pairs.end(), s.begin(), s.end());
  }
  save_dataset(cfg.out_dir, pairs);
  log << "wrote " << pairs.size() << " slices from " << files.size() << " scans to " << cfg.out_dir << "\n";
}

// ----------------------------------------------------------------------- train

inline void check_dataset_shapes(const std::vector<SlicePair>& pairs, const ArchSpec& spec) {
  if (pairs.empty()) throw CommandError("data", "dataset is empty");
  const Shape want{spec.in_channels, spec.input_h, spec.input_w};
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].image.shape() != want) {
      throw CommandError("shape", "slice " + std::to_string(i) + " is " + to_string(pairs[i].image.shape()) +
                                      " but the network expects " + to_string(want) +
                                      " (set input_size to match the dataset)");
    }
  }
}

/// Keeps the header and the first `lines` entries of an existing log.
inline std::string truncated_log(const std::filesystem::path& p, std::size_t lines) {
  std::ifstream in(p);
  if (!in) throw CommandError("io", "resume needs the existing log " + p.string());
  std::string out, line;
  for (std::size_t i = 0; i <= lines && std::getline(in, line); ++i) out += line + "\n";
  return out;
}

/// Trains on cfg.data_dir, writing `train_log.csv`, `last.ckpt` after every
/// epoch and `epoch_NNN.ckpt` every checkpoint_every epochs into out_dir.
/// A non-empty cfg.checkpoint resumes from it.
inline void cmd_train(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const ArchSpec spec = cfg.arch_spec();
  const auto pairs = load_dataset(cfg.data_dir);
  check_dataset_shapes(pairs, spec);
  const auto [train_idx, val_idx] = split_indices(pairs, cfg);
  if (train_idx.empty()) throw CommandError("data", "fold leaves no training slices");

  const std::filesystem::path out = cfg.out_dir;
  std::filesystem::create_directories(out);
  const auto log_path = out / kTrainLogFile;

  std::optional<Checkpoint> resume;
  if (!cfg.checkpoint.empty()) {
    resume = load_checkpoint(cfg.checkpoint);
    if (!(resume->spec == spec)) throw CommandError("config", "checkpoint architecture differs from the config");
    if (resume->seed != cfg.seed) {
      throw CommandError("config", "checkpoint seed " + std::to_string(resume->seed) + " differs from seed " +
                                       std::to_string(cfg.seed));
    }
    if (!resume->mean_image) throw CommandError("format", "checkpoint has no mean image");
    if (resume->epoch > cfg.epochs) throw CommandError("config", "checkpoint is past the configured epochs");
  }

  std::vector<Tensor> train_images;
  for (std::size_t i : train_idx) train_images.push_back(pairs[i].image);
  const Tensor mean = resume ? *resume->mean_image : mean_image(train_images);
  if (resume && mean.shape() != pairs.front().image.shape()) throw CommandError("shape", "mean image shape differs");
  const SliceSet train = gather(pairs, train_idx, mean);
  const SliceSet val = gather(pairs, val_idx, mean);

  std::size_t start = 0;
  std::optional<Trainer> trainer;
  std::ofstream logf;
  if (resume) {
    start = resume->epoch;
    trainer.emplace(cfg, restore_network(*resume), resume->adam.value_or(AdamState<float>{}));
    const std::string kept = truncated_log(log_path, start);
    logf.open(log_path, std::ios::trunc);
    logf << kept;
  } else {
    Rng init(Rng::derive(cfg.seed, {1}));
    trainer.emplace(cfg, Network<float>(spec, init));
    logf.open(log_path, std::ios::trunc);
    logf << kTrainLogHeader << "\n";
  }
  if (!logf) throw CommandError("io", "cannot write " + log_path.string());
  if (!resume) save_checkpoint(trainer->checkpoint(0, mean), out / kLastCheckpoint);

  const SliceSet* val_ptr = cfg.fold < 0 ? nullptr : &val;
  for (std::size_t e = start; e < cfg.epochs; ++e) {
    const EpochStats st = trainer->run_epoch(e, train, val_ptr);
    const std::string line = format_log_line(st);
    logf << line << "\n" << std::flush;
    log << line << "\n" << std::flush;
    const Checkpoint c = trainer->checkpoint(e + 1, mean);
    save_checkpoint(c, out / kLastCheckpoint);
    if (cfg.checkpoint_every > 0 && (e + 1) % cfg.checkpoint_every == 0) {
      save_checkpoint(c, out / epoch_checkpoint_name(e + 1));
    }
  }
}

// --------------------------------------------------------------------- predict

/// Writes predictions for cfg.data_dir (or every slice of cfg.mhd) into
/// out_dir and returns the mean soft dice when masks are available.
inline std::optional<double> cmd_predict(const RunConfig& cfg, std::ostream& log) {
  if (cfg.checkpoint.empty()) throw CommandError("config", "predict needs checkpoint");
  const Checkpoint c = load_checkpoint(cfg.checkpoint);
  if (!c.mean_image) throw CommandError("format", "checkpoint has no mean image; cannot reproduce training inputs");
  Network<float> net = restore_network(c);
  const std::size_t size = c.spec.input_h;

  Predictions pred;
  std::vector<Tensor> images, masks;
  if (!cfg.mhd.empty()) {
    const auto path = std::filesystem::path(cfg.mhd);
    const CtVolume vol = load_mhd(path).volume;
    for (std::size_t k = 0; k < vol.nz(); ++k) {
      images.push_back(preprocess_slice(vol.slice(k), size, cfg.apply_lung_mask));
      pred.rows.push_back({path.stem().string(), static_cast<std::int64_t>(k), cfg.seed});
    }
  } else {
    for (auto& p : load_dataset(cfg.data_dir)) {
      images.push_back(std::move(p.image));
      masks.push_back(std::move(p.mask));
      pred.rows.push_back({p.series_id, p.slice, p.seed});
    }
  }
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].shape() != c.mean_image->shape()) {
      throw CommandError("shape", "slice " + std::to_string(i) + " is " + to_string(images[i].shape()) +
                                      " but the checkpoint expects " + to_string(c.mean_image->shape()));
    }
    images[i] = subtract_mean(images[i], *c.mean_image);
  }
  const std::size_t bs = cfg.batch_size > 0 ? cfg.batch_size : (size >= 256 ? 2 : 16);
  pred.prob = predict_all(net, images, bs);
  save_predictions(cfg.out_dir, pred);
  log << "wrote " << pred.prob.size() << " probability maps to " << cfg.out_dir << "\n";
  if (masks.empty()) return std::nullopt;
  double total = 0.0;
  for (std::size_t i = 0; i < masks.size(); ++i) total += soft_dice(pred.prob[i], masks[i], cfg.dice_smooth);
  const double mean_dice = total / static_cast<double>(masks.size());
  char buf[64];
  std::snprintf(buf, sizeof buf, "mean_dice=%.9g\n", mean_dice);
  log << buf;
  return mean_dice;
}

// ------------------------------------------------------------------- eval-froc

/// Groups predictions and ground truth masks into scans by series id.
inline std::vector<ScanResult> build_scans(const Predictions& pred, const std::vector<SlicePair>& truth,
                                           double threshold) {
  if (pred.rows.size() != truth.size()) {
    throw CommandError("data", "predictions hold " + std::to_string(pred.rows.size()) + " slices, ground truth " +
                                   std::to_string(truth.size()));
  }
  std::vector<ScanResult> scans;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto& row = pred.rows[i];
    if (row.series_id != truth[i].series_id || row.slice != truth[i].slice) {
      throw CommandError("data", "slice " + std::to_string(i) + " is " + row.series_id + "/" +
                                     std::to_string(row.slice) + " in predictions but " + truth[i].series_id + "/" +
                                     std::to_string(truth[i].slice) + " in ground truth");
    }
    auto [it, fresh] = index.emplace(row.series_id, scans.size());
    if (fresh) {
      scans.emplace_back();
      scans.back().scan_id = row.series_id;
      scans.back().width = truth[i].mask.dim(2);
    }
    auto& scan = scans[it->second];
    for (auto& d : binarize_and_components(pred.prob[i], threshold, row.series_id, row.slice))
      scan.detections.push_back(std::move(d));
    for (auto& n : nodules_from_mask(truth[i].mask)) {
      scan.nodules.push_back(std::move(n));
      scan.nodule_slices.push_back(row.slice);
    }
  }
  return scans;
}

/// Writes froc.csv, froc.svg, froc_summary.csv and froc_meta.txt.
inline FrocCurve cmd_eval_froc(const RunConfig& cfg, std::ostream& log) {
  if (cfg.predictions_dir.empty()) throw CommandError("config", "eval-froc needs predictions_dir");
  const auto scans = build_scans(load_predictions(cfg.predictions_dir), load_dataset(cfg.data_dir), cfg.threshold);
  if (scans.size() < 2) throw CommandError("data", "eval-froc needs at least 2 scans for the bootstrap");
  std::vector<ScanHits> hits;
  for (const auto& s : scans) hits.push_back(score_scan(s));
  FrocCurve curve = froc(hits);
  attach_ci(curve, hits, cfg.bootstrap_resamples, cfg.seed);
  const FrocSummary summary = summarize(curve, hits, standard_fp_grid(), cfg.bootstrap_resamples, cfg.seed);

  const std::filesystem::path out = cfg.out_dir;
  std::filesystem::create_directories(out);
  std::ostringstream csv, svg, sum, meta;
  write_froc_csv(csv, curve);
  write_froc_svg(svg, curve, hits, cfg.bootstrap_resamples, cfg.seed);
  write_froc_summary_csv(sum, summary);
  std::size_t dets = 0, fps = 0, by_dice = 0, by_center = 0;
  for (std::size_t i = 0; i < scans.size(); ++i) {
    dets += scans[i].detections.size();
    fps += hits[i].fp_scores.size();
    by_dice += hits[i].hit_by_dice;
    by_center += hits[i].hit_by_center;
  }
  meta << "scans = " << curve.n_scans << "\n"
       << "nodules = " << curve.total_nodules << "\n"
       << "detections = " << dets << "\n"
       << "false_positives = " << fps << "\n"
       << "nodules_hit_by_dice = " << by_dice << "\n"
       << "nodules_hit_by_center = " << by_center << "\n"
       << "threshold = " << detail::format_value(cfg.threshold) << "\n"
       << "ci_method = percentile bootstrap over scans, 95%, linear interpolation between order statistics\n"
       << "ci_resamples = " << cfg.bootstrap_resamples << " (" << summary.band.resamples_used
       << " with at least one nodule)\n"
       << "ci_seed = " << cfg.seed << "\n";
  write_file(out / "froc.csv", csv.str());
  write_file(out / "froc.svg", svg.str());
  write_file(out / "froc_summary.csv", sum.str());
  write_file(out / "froc_meta.txt", meta.str());
  log << sum.str();
  return curve;
}

// ------------------------------------------------------- param-count / inspect

inline void cmd_param_count(const RunConfig& cfg, bool all, std::ostream& log) {
  std::vector<ArchKind> kinds{cfg.arch};
  if (all) kinds = {ArchKind::unet, ArchKind::run, ArchKind::dual_path};
  for (ArchKind k : kinds) {
    RunConfig c = cfg;
    c.arch = k;
    log << reconcile_param_count(c.arch_spec()).table;
  }
}

inline void cmd_inspect_checkpoint(const std::filesystem::path& path, std::ostream& log) {
  const Checkpoint c = load_checkpoint(path);
  std::size_t n = 0;
  for (const auto& e : c.params) n += e.tensor.numel();
  const auto& s = c.spec;
  log << "format = " << kCheckpointMagic << " v" << kCheckpointVersion << "\n"
      << "arch = " << to_string(s.kind) << "\n"
      << "base_channels = " << s.base_channels << "\n"
      << "depth = " << s.depth << "\n"
      << "input = " << s.input_h << "x" << s.input_w << "x" << s.in_channels << "\n"
      << "upconv_kernel = " << s.upconv_kernel << "\n"
      << "dropout = " << detail::format_value(s.dropout) << "\n"
      << "parameters = " << n << " in " << c.params.size() << " tensors\n"
      << "buffers = " << c.buffers.size() << " tensors\n"
      << "adam_steps = " << (c.adam ? std::to_string(c.adam->t) : std::string("none")) << "\n"
      << "mean_image = " << (c.mean_image ? to_string(c.mean_image->shape()) : std::string("none")) << "\n"
      << "epoch = " << c.epoch << "\n"
      << "seed = " << c.seed << "\n";
}

}  // namespace runet
