// ipdf: command-line front end for grid generation, synthetic data,
// training, evaluation, prediction, plotting and timing.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "CLI11.hpp"
#include "json.hpp"

#include "ipdf/ipdf.hpp"

namespace {

using nlohmann::json;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

void log(const std::string& msg) { std::cerr << "[ipdf] " << msg << '\n'; }

std::vector<double> parse_numbers(const std::string& text) {
  std::vector<double> values;
  const std::string trimmed = ipdf::detail::trim(text);
  if (!trimmed.empty() && (trimmed.front() == '[' || trimmed.front() == '{')) {
    json j = json::parse(trimmed);
    if (j.is_object()) j = j.at("d");
    for (const auto& v : j) values.push_back(v.get<double>());
    return values;
  }
  std::istringstream in(text);
  std::string token;
  while (in >> token) {
    std::replace(token.begin(), token.end(), ',', ' ');
    std::istringstream parts(token);
    std::string piece;
    while (parts >> piece) values.push_back(ipdf::parse_double("descriptor", piece));
  }
  return values;
}

// Descriptor files hold a JSON array, a dataset line with "d", or plain
// whitespace/comma separated numbers.
Eigen::VectorXd read_descriptor(const std::string& path) {
  std::ifstream in = ipdf::io::open_for_read(path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  std::vector<double> values;
  try {
    values = parse_numbers(buffer.str());
  } catch (const json::exception& e) {
    throw ipdf::FormatError(path + ": " + e.what());
  }
  if (values.empty()) throw ipdf::FormatError(path + ": no descriptor values");
  return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

std::vector<int> parse_levels(const std::string& text) {
  std::vector<int> levels;
  std::stringstream in(text);
  std::string piece;
  while (std::getline(in, piece, ',')) {
    levels.push_back(static_cast<int>(ipdf::parse_uint("levels", ipdf::detail::trim(piece))));
  }
  if (levels.empty()) throw ipdf::Error("no levels given");
  return levels;
}

json quaternion_json(const ipdf::Rotation& r) {
  const auto& q = r.quaternion();
  return {q[0], q[1], q[2], q[3]};
}

// Config-file keys; each is also a train flag with '-' for '_'.
const std::vector<std::string>& train_keys() {
  static const std::vector<std::string> keys{
      "query_count",  "query_mode",   "base_lr",        "warmup_steps",  "total_steps",    "batch_size",
      "adam_beta1",   "adam_beta2",   "adam_epsilon",   "clip_norm",     "seed",           "pe_frequencies",
      "hidden_width", "hidden_layers", "rotation_format", "include_raw"};
  return keys;
}

int run(int argc, char** argv) {
  CLI::App app{"Implicit pose distributions over SO(3)"};
  app.require_subcommand(1);
  unsigned threads = 0;
  app.add_option("--threads", threads, "Worker threads (0 = all cores)");

  // grid gen
  auto* grid_cmd = app.add_subcommand("grid", "Equivolumetric grids");
  grid_cmd->require_subcommand(1);
  auto* grid_gen = grid_cmd->add_subcommand("gen", "Write an SO3G grid file");
  int grid_level = 0;
  std::string grid_out;
  grid_gen->add_option("--level", grid_level, "Grid level")->required();
  grid_gen->add_option("--out", grid_out, "Output file")->required();

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  std::string synth_kind, synth_out;
  std::size_t synth_n = 0;
  double synth_noise = 0.0;
  std::uint64_t synth_seed = 0;
  int synth_dim = ipdf::kDefaultDescriptorDim;
  synth->add_option("--kind", synth_kind, "tetrahedron|cube|icosahedron|cone|cylinder|sphereX")->required();
  synth->add_option("--n", synth_n, "Number of records")->required();
  synth->add_option("--noise", synth_noise, "Descriptor noise sigma");
  synth->add_option("--seed", synth_seed, "Seed");
  synth->add_option("--dim", synth_dim, "Descriptor dimension");
  synth->add_option("--out", synth_out, "Output JSON-lines file")->required();

  // orbit
  auto* orbit_cmd = app.add_subcommand("orbit", "Write the symmetry orbit of a pose as an SO3G file");
  std::string orbit_kind, orbit_quat, orbit_out;
  int orbit_samples = ipdf::kDefaultOrbitSamples;
  orbit_cmd->add_option("--kind", orbit_kind, "Shape kind")->required();
  orbit_cmd->add_option("--quat", orbit_quat, "Pose quaternion w,x,y,z")->required();
  orbit_cmd->add_option("--samples", orbit_samples, "Samples per circle for continuous kinds");
  orbit_cmd->add_option("--out", orbit_out, "Output file")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  std::string train_config, train_data, train_out, train_loss_csv;
  std::size_t log_every = 100;
  train_cmd->add_option("--config", train_config, "key = value config file");
  train_cmd->add_option("--data", train_data, "Training dataset")->required();
  train_cmd->add_option("--out", train_out, "Checkpoint path")->required();
  train_cmd->add_option("--loss-csv", train_loss_csv, "Per-step loss trace");
  train_cmd->add_option("--log-every", log_every, "Log the loss every N steps (0 = never)");
  std::map<std::string, std::string> train_overrides;
  for (const auto& key : train_keys()) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    train_cmd->add_option(flag, train_overrides[key], "Overrides config key " + key);
  }

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  std::string eval_ckpt, eval_data, eval_report, eval_csv;
  ipdf::EvalOptions eval_opts;
  double eval_link_deg = 0.0;
  std::size_t eval_limit = 0;
  eval_cmd->add_option("--ckpt", eval_ckpt, "Checkpoint")->required();
  eval_cmd->add_option("--data", eval_data, "Dataset")->required();
  eval_cmd->add_option("--grid-level", eval_opts.grid_level, "Evaluation grid level")->required();
  eval_cmd->add_option("--report", eval_report, "JSON report path")->required();
  eval_cmd->add_option("--csv", eval_csv, "Per-record CSV path (default: report path with .csv)");
  eval_cmd->add_option("--topk", eval_opts.topk, "Largest k for top-k metrics");
  eval_cmd->add_option("--density-floor", eval_opts.density_floor, "Mode floor as a multiple of uniform");
  eval_cmd->add_option("--link-radius", eval_link_deg, "Mode link radius in degrees (0 = auto)");
  eval_cmd->add_option("--ascent-steps", eval_opts.ascent_steps, "Gradient ascent steps for point predictions");
  eval_cmd->add_flag("--exact-ll", eval_opts.exact_log_likelihood, "Query the model at the exact annotation");
  eval_cmd->add_option("--orbit-samples", eval_opts.orbit_samples, "Samples per circle of continuous orbits");
  eval_cmd->add_option("--limit", eval_limit, "Evaluate only the first N records");

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "Predict a pose and its modes for one descriptor");
  std::string pred_ckpt, pred_desc, pred_out, pred_dist;
  int pred_level = 3;
  ipdf::AscentOptions ascent;
  double pred_floor = 2.0, pred_link_deg = 0.0;
  predict_cmd->add_option("--ckpt", pred_ckpt, "Checkpoint")->required();
  predict_cmd->add_option("--descriptor", pred_desc, "Descriptor file")->required();
  predict_cmd->add_option("--grid-level", pred_level, "Grid level")->required();
  predict_cmd->add_option("--ascent-steps", ascent.steps, "Gradient ascent steps");
  predict_cmd->add_option("--step-size", ascent.step_size, "Initial ascent step size");
  predict_cmd->add_option("--density-floor", pred_floor, "Mode floor as a multiple of uniform");
  predict_cmd->add_option("--link-radius", pred_link_deg, "Mode link radius in degrees (0 = auto)");
  predict_cmd->add_option("--dist-out", pred_dist, "Write the SO3D distribution");
  predict_cmd->add_option("--out", pred_out, "Output file (default: standard output)");

  // viz
  auto* viz_cmd = app.add_subcommand("viz", "Plot a distribution as SVG");
  std::string viz_dist, viz_grid, viz_out, viz_gt, viz_axis = "z";
  ipdf::VizConfig viz_cfg;
  viz_cmd->add_option("--dist", viz_dist, "SO3D distribution")->required();
  viz_cmd->add_option("--grid", viz_grid, "SO3G grid")->required();
  viz_cmd->add_option("--out", viz_out, "SVG path")->required();
  viz_cmd->add_option("--axis", viz_axis, "Canonical axis x|y|z");
  viz_cmd->add_option("--gt", viz_gt, "SO3G ground-truth rotations");
  viz_cmd->add_option("--floor", viz_cfg.density_floor, "Display floor as a multiple of uniform");
  viz_cmd->add_option("--width", viz_cfg.width, "Image width in px");
  viz_cmd->add_option("--size-scale", viz_cfg.size_scale, "Dot size scale");

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Time full-distribution inference");
  std::string bench_ckpt, bench_levels = "3,4,5", bench_csv;
  int bench_reps = 5;
  bench_cmd->add_option("--ckpt", bench_ckpt, "Checkpoint")->required();
  bench_cmd->add_option("--levels", bench_levels, "Comma separated grid levels");
  bench_cmd->add_option("--repetitions", bench_reps, "Timed repetitions per level");
  bench_cmd->add_option("--csv", bench_csv, "CSV path (default: standard output)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    CLI::App* failing = &app;
    for (CLI::App* sub = &app; sub;) {
      auto subs = sub->get_subcommands();
      if (subs.empty()) break;
      failing = sub = subs.front();
    }
    std::cerr << failing->help();
    return kExitUsage;
  }

  if (grid_gen->parsed()) {
    const auto grid = ipdf::generate_grid(grid_level, threads);
    ipdf::write_grid(grid_out, grid);
    log("wrote " + std::to_string(grid.size()) + " rotations to " + grid_out);
  } else if (synth->parsed()) {
    const auto data =
        ipdf::generate_dataset(ipdf::shape_kind_from_string(synth_kind), synth_n, synth_noise, synth_seed, synth_dim);
    ipdf::write_dataset(synth_out, data);
    log("wrote " + std::to_string(data.size()) + " records to " + synth_out);
  } else if (orbit_cmd->parsed()) {
    const std::vector<double> q = parse_numbers(orbit_quat);
    if (q.size() != 4) throw ipdf::Error("--quat needs 4 values");
    const ipdf::Rotation gt(q[0], q[1], q[2], q[3]);
    const auto members = ipdf::orbit(gt, ipdf::cached_group(ipdf::shape_kind_from_string(orbit_kind)), orbit_samples);
    auto out = ipdf::io::open_for_write(orbit_out);
    ipdf::write_rotation_set(out, ipdf::kFreeFormLevel, members);
    log("wrote " + std::to_string(members.size()) + " orbit members to " + orbit_out);
  } else if (train_cmd->parsed()) {
    ipdf::TrainConfig tcfg;
    ipdf::ModelConfig mcfg;
    ipdf::KeyValues settings;
    if (!train_config.empty()) settings = ipdf::read_key_values(train_config);
    for (const auto& [key, value] : train_overrides) {
      if (!value.empty()) settings[key] = value;
    }
    ipdf::apply_settings(tcfg, mcfg, settings);
    const auto data = ipdf::read_dataset(train_data);
    if (data.empty()) throw ipdf::FormatError(train_data + ": empty dataset");
    mcfg.descriptor_dim = static_cast<int>(data.front().descriptor.size());
    mcfg.validate();
    tcfg.validate();
    ipdf::ImplicitDensityModel model(mcfg);
    log("training on " + std::to_string(data.size()) + " records, " + std::to_string(model.parameters().count()) +
        " parameters, " + std::to_string(ipdf::effective_query_count(tcfg)) + " queries per example");
    const auto result = ipdf::train(model, data, tcfg, [&](const ipdf::TraceEntry& e) {
      if (log_every > 0 && (e.step % log_every == 0 || e.step + 1 == tcfg.total_steps)) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "step %zu lr %.3g loss %.5f", e.step, e.lr, e.loss);
        log(buf);
      }
    });
    json extra;
    extra["train"] = ipdf::to_json(tcfg);
    extra["train"]["effective_query_count"] = ipdf::effective_query_count(tcfg);
    extra["data"] = train_data;
    extra["final_loss"] = result.trace.back().loss;
    ipdf::save_checkpoint(train_out, model, extra);
    if (!train_loss_csv.empty()) {
      auto out = ipdf::io::open_for_write(train_loss_csv);
      ipdf::write_loss_trace_csv(out, result.trace);
    }
    log("wrote checkpoint " + train_out);
  } else if (eval_cmd->parsed()) {
    const auto ckpt = ipdf::load_checkpoint(eval_ckpt);
    auto data = ipdf::read_dataset(eval_data);
    if (eval_limit > 0 && data.size() > eval_limit) data.resize(eval_limit);
    eval_opts.threads = threads;
    eval_opts.link_radius = ipdf::to_radians(eval_link_deg);
    const auto result = ipdf::evaluate_dataset(ckpt.model, data, eval_opts);
    json report = result.report();
    report["eval"] = eval_opts.to_json();
    report["eval"]["data"] = eval_data;
    report["checkpoint"] = ckpt.metadata;
    {
      auto out = ipdf::io::open_for_write(eval_report);
      out << report.dump(2) << '\n';
    }
    std::string csv = eval_csv;
    if (csv.empty()) {
      const auto dot = eval_report.rfind('.');
      const auto slash = eval_report.rfind('/');
      csv = (dot != std::string::npos && (slash == std::string::npos || dot > slash) ? eval_report.substr(0, dot)
                                                                                        : eval_report) +
            ".csv";
    }
    auto out = ipdf::io::open_for_write(csv);
    result.write_csv(out);
    char buf[160];
    std::snprintf(buf, sizeof buf, "avg_log_likelihood %.4f median_error_deg %.3f over %zu records",
                  result.log_likelihood.mean, result.precision.median_error_deg, result.records.size());
    log(buf);
  } else if (predict_cmd->parsed()) {
    const auto ckpt = ipdf::load_checkpoint(pred_ckpt);
    const Eigen::VectorXd descriptor = read_descriptor(pred_desc);
    const auto grid = ipdf::generate_grid(pred_level, threads);
    const auto pose = ipdf::predict_pose(ckpt.model, descriptor, grid, ascent, threads);
    const auto dist = ipdf::evaluate_distribution(ckpt.model, descriptor, grid, threads);
    const double link = pred_link_deg > 0 ? ipdf::to_radians(pred_link_deg) : ipdf::default_link_radius(grid, threads);
    const auto modes = ipdf::modes_or_argmax(dist, grid, pred_floor, link);
    std::ostringstream text;
    json pose_json = {{"quaternion", quaternion_json(pose.rotation)},
                      {"matrix", ipdf::convert(pose.rotation, ipdf::RotationFormat::matrix)},
                      {"log_density", pose.trace.back()},
                      {"start_cell", pose.start_cell},
                      {"ascent_steps", ascent.steps},
                      {"grid_level", pred_level}};
    text << pose_json.dump() << '\n';
    for (std::size_t i = 0; i < modes.modes.size(); ++i) {
      const json m = {{"rank", i + 1}, {"quaternion", quaternion_json(modes.modes[i].center)}, {"mass", modes.modes[i].mass}};
      text << m.dump() << '\n';
    }
    if (pred_out.empty()) {
      std::cout << text.str();
    } else {
      auto out = ipdf::io::open_for_write(pred_out);
      out << text.str();
    }
    if (!pred_dist.empty()) ipdf::write_distribution(pred_dist, dist);
  } else if (viz_cmd->parsed()) {
    const auto dist = ipdf::read_distribution(viz_dist);
    const auto set = ipdf::read_rotation_set(viz_grid);
    if (set.level == ipdf::kFreeFormLevel) throw ipdf::FormatError(viz_grid + ": not a grid file");
    const ipdf::EquivolumetricGrid grid{set.level, set.rotations};
    if (grid.size() != dist.size()) throw ipdf::FormatError(viz_dist + ": distribution does not match " + viz_grid);
    viz_cfg.axis = ipdf::canonical_axis_from_string(viz_axis);
    if (!viz_gt.empty()) viz_cfg.ground_truth = ipdf::read_rotation_set(viz_gt).rotations;
    ipdf::render_svg(viz_out, dist, grid, viz_cfg);
    log("wrote " + viz_out);
  } else if (bench_cmd->parsed()) {
    const auto ckpt = ipdf::load_checkpoint(bench_ckpt);
    std::vector<ipdf::InferenceTiming> timings;
    for (int level : parse_levels(bench_levels)) {
      timings.push_back(ipdf::time_inference(ckpt.model, level, bench_reps, threads));
      char buf[160];
      std::snprintf(buf, sizeof buf, "level %d: %zu cells, median %.4f s", level, timings.back().cells,
                    timings.back().median_seconds);
      log(buf);
    }
    if (bench_csv.empty()) {
      ipdf::write_timings_csv(std::cout, timings);
    } else {
      auto out = ipdf::io::open_for_write(bench_csv);
      ipdf::write_timings_csv(out, timings);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Training allocates and frees large activation buffers every step; keep
  // them on the heap instead of round-tripping through mmap.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  try {
    return run(argc, argv);
  } catch (const ipdf::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
}
