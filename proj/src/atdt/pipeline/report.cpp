#include "atdt/pipeline/report.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>

#include <json.hpp>

#include "atdt/common/error.hpp"
#include "atdt/pipeline/result_json.hpp"
#include "atdt/scenegen/image_io.hpp"

namespace atdt::pipeline {
namespace fs = std::filesystem;
namespace {

struct Row {
  std::string run, method, domain;
  std::string seed;  // number or "mean"
  EvalResult eval;
};

struct LoadedRun {
  std::string name;
  std::string dir;
  std::string direction;
  std::vector<SeedResult> seeds;
};

const std::vector<std::string> kMethodOrder = {
    "baseline", "atdt",     "oracle",    "multitask", "level1",     "level2",
    "level3",   "level4",   "shared",    "nonshared", "bn_with",    "bn_without"};

int method_rank(const std::string& m) {
  for (size_t i = 0; i < kMethodOrder.size(); ++i)
    if (kMethodOrder[i] == m) return static_cast<int>(i);
  return static_cast<int>(kMethodOrder.size());
}

// Flatten methods and ablation arms into (method, domain, eval) rows.
void collect_rows(const LoadedRun& run, std::vector<Row>& rows) {
  auto push = [&](const std::string& method, const std::string& seed, const MethodResult& m) {
    if (m.failed) return;
    for (const auto& [domain, eval] : m.by_domain)
      rows.push_back({run.name, method, domain, seed, eval});
  };
  for (const auto& s : run.seeds) {
    const std::string seed = std::to_string(s.seed);
    for (const auto& [name, m] : s.methods) push(name, seed, m);
    for (const auto& [lv, m] : s.transfer_levels) push("level" + std::to_string(lv), seed, m);
    for (const auto& [arm, m] : s.shared_encoder) push(arm, seed, m);
    for (const auto& [arm, m] : s.batchnorm) push("bn_" + arm, seed, m);
  }
}

// Arithmetic mean of the seed rows for each (run, method, domain).
void append_mean_rows(std::vector<Row>& rows) {
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<const Row*>> groups;
  for (const auto& r : rows) groups[{r.run, r.method, r.domain}].push_back(&r);
  std::vector<Row> means;
  for (const auto& [key, group] : groups) {
    Row mean = *group.front();
    mean.seed = "mean";
    const double n = static_cast<double>(group.size());
    if (mean.eval.seg) {
      metrics::SegMetrics m;
      m.per_class_iou.assign(mean.eval.seg->per_class_iou.size(), std::nullopt);
      std::vector<double> class_sum(m.per_class_iou.size(), 0.0);
      std::vector<int> class_n(m.per_class_iou.size(), 0);
      for (const Row* r : group) {
        m.miou += r->eval.seg->miou / n;
        m.acc += r->eval.seg->acc / n;
        for (size_t c = 0; c < class_sum.size(); ++c)
          if (r->eval.seg->per_class_iou[c]) {
            class_sum[c] += *r->eval.seg->per_class_iou[c];
            ++class_n[c];
          }
      }
      for (size_t c = 0; c < class_sum.size(); ++c)
        if (class_n[c] > 0) m.per_class_iou[c] = class_sum[c] / class_n[c];
      mean.eval.seg = std::move(m);
    } else if (mean.eval.depth) {
      metrics::DepthMetrics m;
      for (const Row* r : group) {
        m.abs_rel += r->eval.depth->abs_rel / n;
        m.sq_rel += r->eval.depth->sq_rel / n;
        m.rmse += r->eval.depth->rmse / n;
        m.rmse_log += r->eval.depth->rmse_log / n;
        m.delta1 += r->eval.depth->delta1 / n;
        m.delta2 += r->eval.depth->delta2 / n;
        m.delta3 += r->eval.depth->delta3 / n;
        m.n_pixels += r->eval.depth->n_pixels;
      }
      mean.eval.depth = std::move(m);
    }
    means.push_back(std::move(mean));
  }
  rows.insert(rows.end(), means.begin(), means.end());
}

void sort_rows(std::vector<Row>& rows) {
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.run != b.run) return a.run < b.run;
    if (method_rank(a.method) != method_rank(b.method))
      return method_rank(a.method) < method_rank(b.method);
    if (a.method != b.method) return a.method < b.method;
    if (a.domain != b.domain) return a.domain < b.domain;
    const bool am = a.seed == "mean", bm = b.seed == "mean";
    if (am != bm) return bm;  // mean last
    return std::stoull(a.seed == "mean" ? "0" : a.seed) <
           std::stoull(b.seed == "mean" ? "0" : b.seed);
  });
}

std::vector<std::string> seg_columns() {
  std::vector<std::string> cols;
  for (int c = 0; c < scenegen::kNumClasses; ++c)
    cols.push_back(std::string("iou_") + scenegen::class_name(c));
  cols.push_back("miou");
  cols.push_back("acc");
  return cols;
}

std::vector<std::string> depth_columns() {
  return {"abs_rel", "sq_rel", "rmse", "rmse_log", "delta1", "delta2", "delta3"};
}

std::vector<std::string> row_values(const Row& r) {
  char buf[32];
  std::vector<std::string> vals;
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return std::string(buf);
  };
  if (r.eval.seg) {
    for (const auto& iou : r.eval.seg->per_class_iou)
      vals.push_back(iou ? fmt(*iou) : std::string("-"));
    vals.push_back(fmt(r.eval.seg->miou));
    vals.push_back(fmt(r.eval.seg->acc));
  } else if (r.eval.depth) {
    vals.push_back(fmt(r.eval.depth->abs_rel));
    vals.push_back(fmt(r.eval.depth->sq_rel));
    vals.push_back(fmt(r.eval.depth->rmse));
    vals.push_back(fmt(r.eval.depth->rmse_log));
    vals.push_back(fmt(r.eval.depth->delta1));
    vals.push_back(fmt(r.eval.depth->delta2));
    vals.push_back(fmt(r.eval.depth->delta3));
  }
  return vals;
}

void write_tables(const std::vector<Row>& rows, const std::string& direction,
                  const fs::path& out_dir) {
  const bool seg = direction == "dep2sem";
  const auto metric_cols = seg ? seg_columns() : depth_columns();
  std::vector<std::string> header = {"run", "method", "domain", "seed"};
  header.insert(header.end(), metric_cols.begin(), metric_cols.end());

  std::vector<std::vector<std::string>> table;
  table.push_back(header);
  for (const auto& r : rows) {
    if ((r.eval.seg.has_value()) != seg) continue;
    std::vector<std::string> line = {r.run, r.method, r.domain, r.seed};
    const auto vals = row_values(r);
    line.insert(line.end(), vals.begin(), vals.end());
    table.push_back(std::move(line));
  }
  if (table.size() == 1) return;

  {
    std::ofstream os(out_dir / ("report_" + direction + ".csv"));
    if (!os) throw IoError("cannot write report csv");
    for (const auto& line : table) {
      for (size_t i = 0; i < line.size(); ++i) os << (i ? "," : "") << line[i];
      os << "\n";
    }
  }
  {
    std::vector<size_t> width(table[0].size(), 0);
    for (const auto& line : table)
      for (size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
    std::ofstream os(out_dir / ("report_" + direction + ".txt"));
    if (!os) throw IoError("cannot write report txt");
    for (const auto& line : table) {
      for (size_t i = 0; i < line.size(); ++i) {
        os << line[i] << std::string(width[i] - line[i].size() + 2, ' ');
      }
      os << "\n";
    }
  }
}

Tensor to_rgb8(const fs::path& file) {
  if (file.extension() == ".ppm") return scenegen::read_ppm(file.string());
  // 16-bit depth map -> normalized grayscale RGB.
  const Tensor d = scenegen::read_depth_pgm16(file.string());
  const int h = d.shape()[1], w = d.shape()[2];
  const int64_t plane = static_cast<int64_t>(h) * w;
  std::vector<double> rgb(static_cast<size_t>(3) * plane);
  for (int64_t i = 0; i < plane; ++i) {
    const double v = std::clamp(d.data()[i] / 100.0, 0.0, 1.0);
    for (int c = 0; c < 3; ++c) rgb[c * plane + i] = v;
  }
  return Tensor::from_vector({3, h, w}, std::move(rgb));
}

// Horizontal strip: input | baseline | AT/DT | ground truth.
void write_strip(const std::vector<fs::path>& files, const fs::path& out) {
  std::vector<Tensor> imgs;
  for (const auto& f : files) {
    if (!fs::exists(f)) return;
    imgs.push_back(to_rgb8(f));
  }
  const int h = imgs[0].shape()[1], w = imgs[0].shape()[2];
  const int total_w = static_cast<int>(imgs.size()) * w;
  std::vector<double> out_rgb(static_cast<size_t>(3) * h * total_w);
  for (size_t k = 0; k < imgs.size(); ++k) {
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          out_rgb[(static_cast<size_t>(c) * h + y) * total_w + k * w + x] =
              imgs[k].data()[(static_cast<size_t>(c) * h + y) * w + x];
  }
  scenegen::write_ppm(out.string(), Tensor::from_vector({3, h, total_w}, std::move(out_rgb)));
}

}  // namespace

std::vector<std::string> write_report(const std::vector<std::string>& run_dirs,
                                      const std::string& out_dir) {
  std::vector<std::string> warnings;
  std::vector<LoadedRun> runs;
  for (const auto& dir : run_dirs) {
    if (!fs::is_directory(dir)) {
      warnings.push_back("missing run directory: " + dir);
      continue;
    }
    LoadedRun run;
    run.dir = dir;
    run.name = fs::path(dir).filename().string();
    std::vector<fs::path> seed_dirs;
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.is_directory() && fs::exists(entry.path() / "metrics.json"))
        seed_dirs.push_back(entry.path());
    std::sort(seed_dirs.begin(), seed_dirs.end());
    for (const auto& sd : seed_dirs) {
      try {
        std::ifstream is(sd / "metrics.json");
        nlohmann::json j;
        is >> j;
        if (run.direction.empty()) run.direction = j.value("direction", "");
        run.seeds.push_back(seed_result_from_json(j));
      } catch (const std::exception& e) {
        warnings.push_back("unreadable metrics in " + sd.string() + ": " + e.what());
      }
    }
    if (run.seeds.empty()) {
      warnings.push_back("no seed results under: " + dir);
      continue;
    }
    runs.push_back(std::move(run));
  }

  fs::create_directories(out_dir);
  std::vector<Row> rows;
  for (const auto& run : runs) collect_rows(run, rows);
  append_mean_rows(rows);
  sort_rows(rows);
  for (const char* direction : {"dep2sem", "sem2dep"}) {
    std::vector<Row> dir_rows;
    for (auto& run : runs)
      if (run.direction == direction)
        for (const auto& r : rows)
          if (r.run == run.name) dir_rows.push_back(r);
    if (!dir_rows.empty()) write_tables(dir_rows, direction, out_dir);
  }

  // Qualitative strips from whatever sample dumps the runs produced.
  for (const auto& run : runs) {
    for (const auto& s : run.seeds) {
      const fs::path samples = fs::path(run.dir) / std::to_string(s.seed) / "samples";
      if (!fs::is_directory(samples)) continue;
      for (int i = 0; i < 8; ++i) {
        const std::string idx = std::to_string(i);
        const bool seg = fs::exists(samples / ("gt_" + idx + ".ppm"));
        const std::string ext = seg ? ".ppm" : ".pgm";
        const fs::path input = samples / ("input_" + idx + ".ppm");
        if (!fs::exists(input)) break;
        write_strip({input, samples / ("baseline_" + idx + ext), samples / ("atdt_" + idx + ext),
                     samples / ("gt_" + idx + ext)},
                    fs::path(out_dir) /
                        (run.name + "_" + std::to_string(s.seed) + "_sample" + idx + ".ppm"));
      }
    }
  }
  return warnings;
}

}  // namespace atdt::pipeline
