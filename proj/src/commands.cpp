#include "mvalign/commands.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "mvalign/association.hpp"
#include "mvalign/config.hpp"
#include "mvalign/datamodel.hpp"
#include "mvalign/errors.hpp"
#include "mvalign/eval.hpp"
#include "mvalign/pipeline.hpp"
#include "mvalign/synth.hpp"

namespace mvalign::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void print_warnings(const Warnings& warnings, std::ostream& log) {
  for (const auto& w : warnings) log << "warning: " << w << "\n";
}

void write_file(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out << text;
  if (!out) throw IoError("write failed for " + file.string());
}

RunConfig load_config(const std::optional<fs::path>& file, std::ostream& log) {
  if (!file) return RunConfig{};
  Warnings warnings;
  RunConfig c = load_run_config(*file, &warnings);
  print_warnings(warnings, log);
  return c;
}

SceneInput read_scene(const fs::path& dir, std::ostream& log) {
  Warnings warnings;
  SceneInput scene = load_scene(dir, &warnings);
  print_warnings(warnings, log);
  return scene;
}

template <typename Fn>
int guarded(const char* command, std::ostream& log, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    log << command << ": " << e.what() << "\n";
    return kInputError;
  } catch (const fs::filesystem_error& e) {
    log << command << ": " << e.what() << "\n";
    return kInputError;
  }
}

json terms_json(const TermBreakdown& t) {
  return {{"translation", t.translation},
          {"center", t.center},
          {"rotation", t.rotation},
          {"scale_box", t.scale_box},
          {"scale_rec", t.scale_rec},
          {"frames_without_box", t.frames_without_box}};
}

json integration_json(const IntegrationResult& r) {
  json objects = json::array();
  for (std::size_t i = 0; i < r.alignments.size(); ++i) {
    const auto& a = r.alignments[i];
    const auto& rep = r.reports[i];
    objects.push_back({{"object_id", a.object_id},
                       {"cad_model_id", a.cad_model_id},
                       {"class_id", a.class_id},
                       {"tracks", r.clusters[i]},
                       {"final_objective", rep.final_objective},
                       {"terms", terms_json(rep.per_term_residuals)},
                       {"iterations", rep.iterations_used},
                       {"converged", rep.converged},
                       {"ill_conditioned", rep.ill_conditioned},
                       {"observations_used", rep.observations_used}});
  }
  double total = 0.0;
  for (const auto& rep : r.reports) total += rep.final_objective;
  return {{"objects", objects},
          {"total_objective", total},
          {"tracks", r.tracks.size()},
          {"failed_objects", r.failed_objects},
          {"diagnostics", r.diagnostics}};
}

std::string chunk_name(std::size_t i) {
  std::ostringstream ss;
  ss << "chunk_" << std::setw(4) << std::setfill('0') << i << ".jsonl";
  return ss.str();
}

std::string format_fixed(double v, int digits) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

}  // namespace

int run_synth(const SynthArgs& args, std::ostream& log) {
  return guarded("synth", log, [&] {
    Warnings warnings;
    SynthSpec spec = load_synth_spec(args.spec, &warnings);
    print_warnings(warnings, log);
    if (args.seed) spec.seed = *args.seed;
    if (args.noiseless) spec.noise = spec.noise.noiseless();
    spec.validate();

    const SynthScene sc = generate(spec);
    save_scene(sc.scene, args.out_dir);
    save_ground_truth(sc.ground_truth, args.out_dir / scene_files::kGroundTruth);
    save_class_stats(compute_class_stats(std::span(&sc, 1)), args.out_dir / out_files::kClassStats);
    log << "synth: " << sc.ground_truth.size() << " objects, " << sc.scene.frames.size() << " frames, "
        << sc.scene.observations.size() << " observations -> " << args.out_dir.string() << "\n";
    return int(kSuccess);
  });
}

int run_solve(const SolveArgs& args, std::ostream& log) {
  return guarded("solve", log, [&] {
    RunConfig config = load_config(args.config, log);
    if (args.jobs) config.jobs = *args.jobs;
    config.validate();
    const SceneInput scene = read_scene(args.scene_dir, log);
    fs::create_directories(args.out_dir);
    const IntegrationOptions options = config.integration_options();

    const Stopwatch total;
    IntegrationResult result;
    json report;
    if (args.online_chunk) {
      if (*args.online_chunk < 1) throw ValidationError("online_chunk", "must be >= 1");
      std::vector<CameraFrame> frames = scene.frames;
      std::stable_sort(frames.begin(), frames.end(),
                       [](const CameraFrame& a, const CameraFrame& b) { return a.frame_index < b.frame_index; });
      SolveSession session(scene.cad_db, config.weights, config.solver, options);
      const fs::path snapshots = args.out_dir / out_files::kSnapshots;
      fs::create_directories(snapshots);
      json chunks = json::array();
      const std::size_t chunk = static_cast<std::size_t>(*args.online_chunk);
      for (std::size_t begin = 0, i = 0; begin < frames.size(); begin += chunk, ++i) {
        const std::size_t end = std::min(frames.size(), begin + chunk);
        std::vector<Observation> observations;
        for (const auto& o : scene.observations) {
          if (o.frame_index >= frames[begin].frame_index && o.frame_index <= frames[end - 1].frame_index) {
            observations.push_back(o);
          }
        }
        const Stopwatch update;
        const IntegrationResult& r = session.update(std::span(frames).subspan(begin, end - begin), observations);
        log << "solve: chunk " << i << " frames " << frames[begin].frame_index << ".." << frames[end - 1].frame_index
            << " objects " << r.alignments.size() << " in " << format_fixed(update.seconds(), 3) << " s\n";
        save_alignments(r.alignments, snapshots / chunk_name(i));
        double objective = 0.0;
        for (const auto& rep : r.reports) objective += rep.final_objective;
        chunks.push_back({{"chunk", i},
                          {"first_frame", frames[begin].frame_index},
                          {"last_frame", frames[end - 1].frame_index},
                          {"objects", r.alignments.size()},
                          {"total_objective", objective},
                          {"snapshot", (fs::path(out_files::kSnapshots) / chunk_name(i)).generic_string()}});
      }
      result = session.result();
      report = integration_json(result);
      report["online_chunk"] = *args.online_chunk;
      report["chunks"] = chunks;
    } else {
      result = integrate_scene(scene, config.weights, config.solver, options);
      report = integration_json(result);
    }
    save_alignments(result.alignments, args.out_dir / out_files::kAlignments);
    write_file(args.out_dir / out_files::kReport, report.dump(2) + "\n");
    for (const auto& d : result.diagnostics) log << "solve: " << d << "\n";
    log << "solve: " << result.alignments.size() << " objects, " << result.failed_objects << " failed, "
        << format_fixed(total.seconds(), 3) << " s\n";
    return int(result.failed_objects > 0 ? kPartial : kSuccess);
  });
}

int run_baseline(const BaselineArgs& args, std::ostream& log) {
  return guarded("baseline", log, [&] {
    const RunConfig config = load_config(args.config, log);
    const BaselineVariant variant = parse_baseline_variant(args.variant);
    ClassStatsTable stats;
    if (args.class_stats) {
      Warnings warnings;
      stats = load_class_stats(*args.class_stats, &warnings);
      print_warnings(warnings, log);
    } else if (variant == BaselineVariant::class_avg) {
      throw ValidationError("class_stats", "the class_avg baseline needs --class-stats");
    }
    const SceneInput scene = read_scene(args.scene_dir, log);
    fs::create_directories(args.out_dir);

    const Stopwatch total;
    const BaselineResult r = run_baseline(scene, variant, config.cluster, args.class_stats ? &stats : nullptr);
    save_alignments(r.alignments, args.out_dir / out_files::kAlignments);
    const json report{{"variant", to_string(variant)},
                      {"per_frame_alignments", r.per_frame_alignments},
                      {"objects", r.alignments.size()},
                      {"dropped_observations", r.diagnostics.size()},
                      {"diagnostics", r.diagnostics}};
    write_file(args.out_dir / out_files::kReport, report.dump(2) + "\n");
    log << "baseline " << to_string(variant) << ": " << r.per_frame_alignments << " per-frame alignments, "
        << r.alignments.size() << " after duplicate removal, " << r.diagnostics.size() << " dropped, "
        << format_fixed(total.seconds(), 3) << " s\n";
    return int(r.diagnostics.empty() ? kSuccess : kPartial);
  });
}

int run_eval(const EvalArgs& args, std::ostream& log) {
  return guarded("eval", log, [&] {
    const RunConfig config = load_config(args.config, log);
    Warnings warnings;
    const auto results = load_alignments(args.alignments, &warnings);
    const auto gt = load_ground_truth(args.ground_truth, &warnings);
    std::optional<fs::path> models_file = args.models;
    if (!models_file) {
      const fs::path sibling = args.ground_truth.parent_path() / scene_files::kModels;
      if (fs::exists(sibling)) models_file = sibling;
    }
    std::vector<CadModel> models;
    if (models_file) models = load_models(*models_file, &warnings);
    print_warnings(warnings, log);
    fs::create_directories(args.out_dir);

    const SymmetryTable symmetry = symmetry_for(config.symmetry, models);
    const EvalReport rep = match_and_score(results, gt, config.thresholds, symmetry);
    const auto curves = sweep_curves(results, gt, config.sweeps, symmetry, config.thresholds);

    json per_class = json::object();
    for (const auto& [cls, c] : rep.per_class) {
      per_class[cls] = {{"n_gt", c.n_gt}, {"n_accurate", c.n_accurate}, {"accuracy", c.accuracy}};
    }
    json matches = json::array();
    for (const auto& m : rep.matches) {
      json row{{"gt_index", m.gt_index}, {"class_id", m.class_id}};
      if (m.result_index) {
        row["result_index"] = *m.result_index;
        row["translation_error"] = m.errors.translation;
        row["rotation_error"] = m.errors.rotation;
        row["scale_error"] = m.errors.scale;
      } else {
        row["result_index"] = nullptr;
      }
      row["accurate"] = m.accurate;
      matches.push_back(row);
    }
    json report{{"thresholds",
                 {{"translation", config.thresholds.translation},
                  {"rotation", config.thresholds.rotation},
                  {"scale", config.thresholds.scale}}},
                {"class_avg", rep.class_avg},
                {"global_avg", rep.global_avg},
                {"per_class", per_class},
                {"matches", matches}};

    std::ostringstream csv;
    csv << "transformation,threshold,class_avg,global_avg\n";
    for (const auto& c : curves) {
      for (std::size_t i = 0; i < c.thresholds.size(); ++i) {
        csv << to_string(c.kind) << "," << c.thresholds[i] << "," << c.class_avg[i] << "," << c.global_avg[i] << "\n";
      }
    }
    write_file(args.out_dir / out_files::kSweeps, csv.str());

    if (!models.empty()) {
      const auto prf = box_iou_prf(results, gt, models, config.iou_thresholds);
      std::ostringstream p;
      p << "iou_threshold,true_positives,false_positives,false_negatives,precision,recall,f1\n";
      json rows = json::array();
      for (const auto& r : prf) {
        p << r.iou_threshold << "," << r.true_positives << "," << r.false_positives << "," << r.false_negatives << ","
          << r.precision << "," << r.recall << "," << r.f1 << "\n";
        rows.push_back({{"iou_threshold", r.iou_threshold},
                        {"precision", r.precision},
                        {"recall", r.recall},
                        {"f1", r.f1}});
      }
      write_file(args.out_dir / out_files::kPrf, p.str());
      report["box_iou"] = rows;
    }
    write_file(args.out_dir / out_files::kReport, report.dump(2) + "\n");

    std::ostringstream table;
    table << std::left << std::setw(16) << "class" << std::right << std::setw(6) << "gt" << std::setw(10) << "accurate"
          << std::setw(10) << "accuracy" << "\n";
    for (const auto& [cls, c] : rep.per_class) {
      table << std::left << std::setw(16) << cls << std::right << std::setw(6) << c.n_gt << std::setw(10)
            << c.n_accurate << std::setw(9) << format_fixed(100.0 * c.accuracy, 1) << "%\n";
    }
    table << "class average  " << format_fixed(100.0 * rep.class_avg, 1) << "%\n";
    table << "global average " << format_fixed(100.0 * rep.global_avg, 1) << "%\n";
    write_file(args.out_dir / out_files::kReportText, table.str());
    log << table.str();
    return int(kSuccess);
  });
}

int run_export(const ExportArgs& args, std::ostream& log) {
  return guarded("export", log, [&] {
    Warnings warnings;
    const auto results = load_alignments(args.alignments, &warnings);
    const auto models = load_models(args.models, &warnings);
    print_warnings(warnings, log);
    if (args.mesh.has_parent_path()) fs::create_directories(args.mesh.parent_path());
    export_scene_mesh(results, models, args.mesh);
    log << "export: " << results.size() << " objects -> " << args.mesh.string() << "\n";
    return int(kSuccess);
  });
}

}  // namespace mvalign::cli
