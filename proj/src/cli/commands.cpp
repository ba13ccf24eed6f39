#include "uwbpose/cli.hpp"

#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "uwbpose/crlb.hpp"
#include "uwbpose/estimate.hpp"
#include "uwbpose/io.hpp"
#include "uwbpose/mc.hpp"

namespace uwbpose::cli {

namespace {

constexpr double kDeg = 180.0 / std::numbers::pi;

std::string num(double v, int precision = 17) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

double wrap_angle(double a) { return std::atan2(std::sin(a), std::cos(a)); }

template <typename Body>
int guarded(std::ostream& err, Body&& body) {
  try {
    return body();
  } catch (const Error& e) {
    err << "error (" << to_string(e.code()) << "): " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

void print_table(std::ostream& out, const McResult& result) {
  out << std::left << std::setw(12) << to_string(result.axis) << std::setw(8) << "method"
      << std::setw(9) << "filtered" << std::setw(9) << "failed" << std::setw(14) << "rmse"
      << std::setw(14) << "sqrt_crlb" << "ratio\n";
  for (const McRow& r : result.rows) {
    out << std::left << std::setw(12) << num(r.axis_value, 6) << std::setw(8)
        << to_string(r.estimator) << std::setw(9) << (r.filtered ? "yes" : "no") << std::setw(9)
        << r.failures << std::setw(14) << num(r.combined_rmse, 6) << std::setw(14)
        << num(r.sqrt_crlb, 6) << num(r.combined_rmse / r.sqrt_crlb, 4) << '\n';
  }
}

std::string meta_json(const McConfig& config, const McResult& result) {
  nlohmann::json doc;
  doc["axis"] = to_string(config.axis);
  doc["values"] = config.values;
  doc["trials"] = config.trials;
  doc["seed"] = config.seed;
  std::vector<std::string> names;
  for (Method m : config.estimators) names.emplace_back(to_string(m));
  doc["estimators"] = names;
  doc["repeats"] = config.repeats;
  doc["inject_noise"] = config.inject_noise;
  doc["truth"] = {{"x", config.truth.t().x()},
                  {"y", config.truth.t().y()},
                  {"yaw_deg", config.truth.theta() * kDeg}};
  doc["sigma_slot_order"] = "slot k = anchor * tag_count + tag";
  doc["notes"] = result.notes;
  return doc.dump(2) + "\n";
}

}  // namespace

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::schema: return kExitSchema;
    case ErrorCode::unobservable: return kExitUnobservable;
    default: return kExitFailure;
  }
}

int cmd_simulate(const SimulateArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Scenario sc = load_scenario(args.scenario);
    if (!sc.monte_carlo) {
      throw Error(ErrorCode::schema, "scenario has no 'monte_carlo' section");
    }
    McConfig config = *sc.monte_carlo;
    if (args.seed) config.seed = *args.seed;
    config.threads = args.threads;
    const McResult result = args.outlier_rate > 0.0
                                ? run_outlier_stress(config, args.spike, args.outlier_rate)
                                : run_sweep(config);
    std::ostringstream csv;
    write_csv(csv, result, args.timing);
    std::filesystem::path meta = args.out;
    meta += ".meta.json";
    write_file_atomic(meta, meta_json(config, result));
    write_file_atomic(args.out, csv.str());
    print_table(out, result);
    return kExitOk;
  });
}

int cmd_crlb(const CrlbArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Scenario sc = load_scenario(args.scenario);
    const auto verdict = check_observability(*sc.deployment);
    if (!verdict.observable()) {
      out << "verdict: " << verdict.describe() << '\n';
      return kExitUnobservable;
    }
    if (!sc.truth) throw Error(ErrorCode::schema, "scenario needs a 'truth' pose for the bound");
    const std::size_t repeats = args.repeats.value_or(sc.crlb_repeats);
    const CrlbResult bound = crlb_at(*sc.deployment, repeats, *sc.truth);
    out << "verdict: observable\n"
        << "repeats: " << repeats << '\n'
        << "sqrt_trace: " << num(bound.sqrt_trace, 10) << '\n'
        << "rotation_block_trace: " << num(bound.rotation_block_trace, 10) << '\n'
        << "translation_block_trace: " << num(bound.translation_block_trace, 10) << '\n';
    return kExitOk;
  });
}

ReplayResult replay(const EstimateArgs& args) {
  if (args.gn_iterations < 1) throw Error(ErrorCode::invalid_argument, "gn iterations must be >= 1");
  const auto deployment = std::make_shared<const Deployment>(load_deployment(args.deployment));
  RangeLog log = load_range_log(args.ranges, args.frequency);
  const BiasModel bias = args.bias ? load_bias_model(*args.bias) : BiasModel::identity();
  std::optional<GroundTruthLog> truth;
  if (args.truth) truth = load_ground_truth(*args.truth);
  if (args.reject) log = reject_outliers(log, args.rejection).log;

  const bool refine = args.method == Method::gn_uls || args.method == Method::gn_dac;
  const double offset = args.yaw_offset_deg / kDeg;
  ReplayResult result;
  double pos_sq = 0.0, rot_sq = 0.0;
  std::size_t compared = 0;
  for (const Epoch& epoch : align_and_batch(log, bias, deployment, args.epochs)) {
    EpochEstimate e;
    e.t = epoch.t;
    try {
      Pose2 pose = estimate(epoch.batch, args.method).pose;
      if (refine) {
        for (std::size_t k = 1; k < args.gn_iterations; ++k) pose = gn_step(epoch.batch, pose);
      }
      e.pose = apply_yaw_offset(pose, offset);
    } catch (const Error& ex) {
      e.error = to_string(ex.code());
    }
    if (e.pose && truth) {
      if (const auto ref = truth->interpolate(e.t)) {
        pos_sq += (e.pose->t() - ref->t()).squaredNorm();
        const double d = wrap_angle(e.pose->theta() - ref->theta());
        rot_sq += d * d;
        ++compared;
      }
    }
    result.epochs.push_back(std::move(e));
  }
  if (truth) {
    TrackingSummary s;
    s.compared = compared;
    if (compared > 0) {
      s.position_rmse_cm = 100.0 * std::sqrt(pos_sq / static_cast<double>(compared));
      s.rotation_rmse_deg = kDeg * std::sqrt(rot_sq / static_cast<double>(compared));
    } else {
      s.position_rmse_cm = s.rotation_rmse_deg = std::nan("");
    }
    result.summary = s;
  }
  return result;
}

std::string epochs_csv(const ReplayResult& result, Method method) {
  std::ostringstream os;
  os << "t,x,y,yaw_deg,method,error\r\n";
  for (const EpochEstimate& e : result.epochs) {
    os << num(e.t) << ',';
    if (e.pose) {
      os << num(e.pose->t().x()) << ',' << num(e.pose->t().y()) << ','
         << num(e.pose->theta() * kDeg);
    } else {
      os << ",,";
    }
    os << ',' << to_string(method) << ',' << e.error << "\r\n";
  }
  return os.str();
}

int cmd_estimate(const EstimateArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const ReplayResult result = replay(args);
    write_file_atomic(args.out, epochs_csv(result, args.method));
    std::size_t failed = 0;
    for (const auto& e : result.epochs) failed += e.pose ? 0 : 1;
    out << "epochs: " << result.epochs.size() << " (" << failed << " failed)\n";
    if (result.summary) {
      out << "method        position RMSE (cm)  rotation RMSE (deg)  epochs\n"
          << std::left << std::setw(14) << to_string(args.method) << std::setw(20)
          << num(result.summary->position_rmse_cm, 4) << std::setw(21)
          << num(result.summary->rotation_rmse_deg, 4) << result.summary->compared << '\n';
    }
    return kExitOk;
  });
}

int cmd_calibrate(const CalibrateArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Deployment deployment = load_deployment(args.deployment);
    RangeLog log = load_range_log(args.ranges, args.frequency);
    const GroundTruthLog truth = load_ground_truth(args.truth);
    if (args.reject) log = reject_outliers(log, args.rejection).log;
    BiasModel model = calibrate_bias(
        log, truth, deployment, args.per_pair ? BiasGranularity::per_pair : BiasGranularity::pooled);
    if (args.quiescent) {
      model.sigma = std::max(estimate_sigma(log, args.quiescent->first, args.quiescent->second).pooled,
                             kMinSigma);
    }
    write_file_atomic(args.out, bias_model_to_json(model));
    out << "slope: " << num(model.pooled.slope, 10) << " +/- " << num(model.slope_stderr, 3) << '\n'
        << "intercept: " << num(model.pooled.intercept, 10) << " +/- "
        << num(model.intercept_stderr, 3) << " m\n"
        << "sigma: " << num(model.sigma, 6) << " m\n"
        << "residual_rms: " << num(model.residual_rms, 6) << " m\n"
        << "samples: " << model.samples << '\n';
    for (const auto& [key, b] : model.per_pair) {
      out << "pair " << key.anchor << '/' << key.tag << ": slope " << num(b.slope, 8)
          << " intercept " << num(b.intercept, 8) << '\n';
    }
    return kExitOk;
  });
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Planar rigid-body pose estimation from anchor-to-tag ranges"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Monte-Carlo sweep from a scenario file");
  simulate->add_option("scenario", sim.scenario, "Scenario file")->required();
  simulate->add_option("--out", sim.out, "CSV output path")->required();
  simulate->add_option("--seed", sim.seed, "Override the scenario seed");
  simulate->add_option("--threads", sim.threads, "Worker threads")->check(CLI::PositiveNumber);
  simulate->add_flag("--timing", sim.timing, "Add the mean wall-time column");
  simulate->add_option("--spike", sim.spike, "Outlier spike size (m)");
  simulate->add_option("--outlier-rate", sim.outlier_rate, "Outlier probability per range")
      ->check(CLI::Range(0.0, 0.2));

  CrlbArgs crlb;
  auto* analyze = app.add_subcommand("crlb", "Constrained CRLB and observability of a scenario");
  analyze->alias("analyze");
  analyze->add_option("scenario", crlb.scenario, "Scenario file")->required();
  analyze->add_option("--repeats", crlb.repeats, "Repeated ranging count T")
      ->check(CLI::PositiveNumber);

  EstimateArgs est;
  std::string method = "gn-uls";
  auto* estimate_cmd = app.add_subcommand("estimate", "Per-epoch pose estimates from a range log");
  estimate_cmd->add_option("ranges", est.ranges, "Range CSV (t,anchor,tag,range)")->required();
  estimate_cmd->add_option("--deployment", est.deployment, "Deployment file")->required();
  estimate_cmd->add_option("--truth", est.truth, "Ground-truth CSV (t,x,y,yaw_deg)");
  estimate_cmd->add_option("--bias", est.bias, "Bias model from calibrate");
  estimate_cmd->add_option("--out", est.out, "Per-epoch CSV output path")->required();
  estimate_cmd->add_option("--method", method, "uls, gn-uls, dac or gn-dac");
  estimate_cmd->add_option("--yaw-offset-deg", est.yaw_offset_deg, "Constant added to the yaw");
  estimate_cmd->add_option("--frequency", est.frequency, "Ranging rate (Hz)")
      ->check(CLI::PositiveNumber);
  estimate_cmd->add_option("--rate", est.epochs.rate, "Estimation rate (Hz), 0 = ranging rate");
  estimate_cmd->add_option("--max-gap-periods", est.epochs.max_gap_periods,
                           "Largest tolerated stream gap in ranging periods");
  estimate_cmd->add_option("--window", est.rejection.window, "Outlier window k");
  estimate_cmd->add_option("--vmax", est.rejection.v_max, "Largest speed (m/s)");
  estimate_cmd->add_option("--error-bound", est.rejection.error_bound, "Range error bound (m)");
  bool est_no_reject = false;
  estimate_cmd->add_flag("--no-reject", est_no_reject, "Skip outlier rejection");
  estimate_cmd->add_option("--gn-iterations", est.gn_iterations,
                           "Gauss-Newton steps (diagnostic, default 1)")
      ->check(CLI::PositiveNumber);

  CalibrateArgs cal;
  std::vector<double> quiescent;
  auto* calibrate = app.add_subcommand("calibrate", "Fit the linear range bias against truth");
  calibrate->add_option("ranges", cal.ranges, "Range CSV (t,anchor,tag,range)")->required();
  calibrate->add_option("--truth", cal.truth, "Ground-truth CSV (t,x,y,yaw_deg)")->required();
  calibrate->add_option("--deployment", cal.deployment, "Deployment file")->required();
  calibrate->add_option("--out", cal.out, "Bias model output path")->required();
  calibrate->add_option("--frequency", cal.frequency, "Ranging rate (Hz)")
      ->check(CLI::PositiveNumber);
  calibrate->add_flag("--per-pair", cal.per_pair, "Fit one model per anchor/tag pair");
  bool cal_no_reject = false;
  calibrate->add_flag("--no-reject", cal_no_reject, "Skip outlier rejection");
  calibrate->add_option("--window", cal.rejection.window, "Outlier window k");
  calibrate->add_option("--vmax", cal.rejection.v_max, "Largest speed (m/s)");
  calibrate->add_option("--error-bound", cal.rejection.error_bound, "Range error bound (m)");
  calibrate->add_option("--quiescent", quiescent, "Stationary window T0 T1 for sigma")
      ->expected(2);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitSchema;
  }

  if (simulate->parsed()) return cmd_simulate(sim, out, err);
  if (analyze->parsed()) return cmd_crlb(crlb, out, err);
  if (estimate_cmd->parsed()) {
    est.reject = !est_no_reject;
    try {
      est.method = parse_method(method);
    } catch (const Error& e) {
      err << "error: " << e.what() << '\n';
      return kExitSchema;
    }
    return cmd_estimate(est, out, err);
  }
  if (calibrate->parsed()) {
    cal.reject = !cal_no_reject;
    if (quiescent.size() == 2) cal.quiescent = std::make_pair(quiescent[0], quiescent[1]);
    return cmd_calibrate(cal, out, err);
  }
  return kExitSchema;
}

}  // namespace uwbpose::cli
