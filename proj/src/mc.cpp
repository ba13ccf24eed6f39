#include "uwbpose/mc.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <span>
#include <sstream>
#include <thread>

#include "uwbpose/crlb.hpp"
#include "uwbpose/estimate.hpp"
#include "uwbpose/rng.hpp"

namespace uwbpose {

const char* to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::repeat_t: return "repeat_t";
    case SweepAxis::anchor_count: return "anchor_count";
    case SweepAxis::noise_sigma: return "noise_sigma";
  }
  return "unknown";
}

SweepAxis parse_sweep_axis(const std::string& name) {
  if (name == "repeat_t") return SweepAxis::repeat_t;
  if (name == "anchor_count") return SweepAxis::anchor_count;
  if (name == "noise_sigma") return SweepAxis::noise_sigma;
  throw Error(ErrorCode::invalid_argument, "unknown sweep axis '" + name + "'");
}

namespace {

constexpr std::uint32_t kNoiseStream = 1;
constexpr std::uint32_t kSpikeStream = 2;
constexpr std::uint32_t kAnchorStream = 3;

bool is_count(double v) { return v >= 1.0 && v == std::floor(v) && v < 1e12; }

// Runs body(k) for k in [0, count) on `threads` workers. The first exception wins.
template <typename Body>
void parallel_for(std::size_t count, std::size_t threads, Body&& body) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t k = 0; k < count; ++k) body(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < count; k = next++) {
          try {
            body(k);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
            next = count;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

// Pairwise summation keeps the result independent of scheduling and accurate.
double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

struct Variant {
  Method method;
  bool filtered;
};

struct Spikes {
  double spike;
  double rate;
  OutlierFilter filter;
};

struct VariantTrials {
  std::vector<std::optional<Pose2>> poses;
  std::vector<double> micros;
};

RangeBatch filter_batch(const RangeBatch& batch, const OutlierFilter& filter) {
  const std::size_t reps = batch.repeats();
  std::vector<double> out(batch.ranges().begin(), batch.ranges().end());
  std::vector<double> times(reps);
  for (std::size_t k = 0; k < reps; ++k) times[k] = static_cast<double>(k) / filter.frequency;
  for (std::size_t i = 0; i < batch.tag_count(); ++i) {
    for (std::size_t m = 0; m < batch.anchor_count(); ++m) {
      const std::size_t base = batch.index(i, m, 0);
      const std::span<const double> stream = batch.ranges().subspan(base, reps);
      const auto flags = flag_outliers(stream, filter.params, filter.frequency);
      const auto filled = fill_flagged(times, stream, flags);
      std::copy(filled.begin(), filled.end(), out.begin() + static_cast<long>(base));
    }
  }
  return RangeBatch(batch.deployment_ptr(), reps, std::move(out), RangeCheck::finite_only);
}

std::vector<VariantTrials> simulate(const McConfig& config, std::size_t axis_index,
                                    const std::vector<Variant>& variants, const Spikes* spikes) {
  const McScenario scenario = scenario_for(config, axis_index);
  const std::size_t trials = config.trials;
  std::vector<VariantTrials> out(variants.size());
  for (auto& v : out) {
    v.poses.assign(trials, std::nullopt);
    v.micros.assign(trials, 0.0);
  }

  parallel_for(trials, config.threads, [&](std::size_t trial) {
    RangeBatch raw = synthesize_trial(config, scenario, axis_index, trial);
    if (spikes && spikes->rate > 0.0) {
      const CounterRng rng(config.seed, kSpikeStream, static_cast<std::uint32_t>(axis_index),
                           trial);
      std::vector<double> d(raw.ranges().begin(), raw.ranges().end());
      for (std::size_t j = 0; j < d.size(); ++j) {
        if (rng.uniform(j) < spikes->rate) d[j] += spikes->spike;
      }
      raw = RangeBatch(raw.deployment_ptr(), raw.repeats(), std::move(d), RangeCheck::finite_only);
    }
    std::optional<RangeBatch> filtered;
    for (std::size_t v = 0; v < variants.size(); ++v) {
      if (variants[v].filtered && !filtered) filtered = filter_batch(raw, spikes->filter);
      const RangeBatch& batch = variants[v].filtered ? *filtered : raw;
      const auto start = std::chrono::steady_clock::now();
      try {
        const EstimateReport report = estimate(batch, variants[v].method);
        out[v].poses[trial] = report.pose;
      } catch (const Error&) {
        out[v].poses[trial] = std::nullopt;
      }
      out[v].micros[trial] = std::chrono::duration<double, std::micro>(
                                 std::chrono::steady_clock::now() - start)
                                 .count();
    }
  });
  return out;
}

McRow summarize(const VariantTrials& trials, const Variant& variant, double axis_value,
                const Pose2& truth, double sqrt_crlb) {
  const std::size_t n = trials.poses.size();
  std::vector<double> rot_sq(n, 0.0), trans_sq(n, 0.0), micros(n, 0.0);
  McRow row;
  row.axis_value = axis_value;
  row.estimator = variant.method;
  row.filtered = variant.filtered;
  row.trials = n;
  row.sqrt_crlb = sqrt_crlb;
  const RotMat2 r_true = truth.rotation();
  for (std::size_t l = 0; l < n; ++l) {
    micros[l] = trials.micros[l];
    if (!trials.poses[l]) {
      ++row.failures;
      continue;
    }
    rot_sq[l] = (trials.poses[l]->rotation() - r_true).squaredNorm();
    trans_sq[l] = (trials.poses[l]->t() - truth.t()).squaredNorm();
  }
  row.mean_time_us = pairwise_sum(micros) / static_cast<double>(n);
  const std::size_t ok = n - row.failures;
  if (ok == 0) {
    row.rotation_rmse = row.translation_rmse = row.combined_rmse = std::nan("");
    row.combined_rmse_stderr = std::nan("");
    return row;
  }
  const double denom = static_cast<double>(ok);
  const double rot_mse = pairwise_sum(rot_sq) / denom;
  const double trans_mse = pairwise_sum(trans_sq) / denom;
  row.rotation_rmse = std::sqrt(rot_mse);
  row.translation_rmse = std::sqrt(trans_mse);
  const double mse = rot_mse + trans_mse;
  row.combined_rmse = std::sqrt(mse);

  std::vector<double> dev(n, 0.0);
  for (std::size_t l = 0; l < n; ++l) {
    if (trials.poses[l]) {
      const double c = rot_sq[l] + trans_sq[l] - mse;
      dev[l] = c * c;
    }
  }
  const double var = ok > 1 ? pairwise_sum(dev) / (denom - 1.0) : 0.0;
  const double mse_se = std::sqrt(var / denom);
  row.combined_rmse_stderr = row.combined_rmse > 0.0 ? mse_se / (2.0 * row.combined_rmse) : 0.0;
  return row;
}

void check_observable(const McConfig& config) {
  for (std::size_t a = 0; a < config.values.size(); ++a) {
    const McScenario sc = scenario_for(config, a);
    const auto verdict = check_observability(*sc.deployment);
    if (!verdict.observable()) {
      throw Error(ErrorCode::unobservable, "scenario at " + std::string(to_string(config.axis)) +
                                               " = " + std::to_string(config.values[a]) +
                                               " is " + verdict.describe());
    }
  }
}

McResult run_variants(const McConfig& config, const std::vector<Variant>& variants,
                      const Spikes* spikes) {
  config.validate();
  check_observable(config);
  McResult result;
  result.axis = config.axis;
  result.notes.push_back(
      "combined_rmse = sqrt(rotation_rmse^2 + translation_rmse^2), comparable to "
      "sqrt(trace(CRLB)) over (vec(R), t)");
  result.notes.push_back("rotation_rmse uses the chordal (Frobenius) distance");
  for (std::size_t a = 0; a < config.values.size(); ++a) {
    const McScenario sc = scenario_for(config, a);
    const double bound = crlb_at(*sc.deployment, sc.repeats, config.truth).sqrt_trace;
    const auto sims = simulate(config, a, variants, spikes);
    for (std::size_t v = 0; v < variants.size(); ++v) {
      result.rows.push_back(summarize(sims[v], variants[v], config.values[a], config.truth, bound));
    }
  }
  return result;
}

bool same_double(double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

std::string number(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

void McConfig::validate() const {
  if (!deployment) throw Error(ErrorCode::invalid_argument, "Monte-Carlo config needs a deployment");
  if (trials < 1) throw Error(ErrorCode::invalid_argument, "trial count must be >= 1");
  if (values.empty()) throw Error(ErrorCode::invalid_argument, "sweep needs at least one value");
  if (estimators.empty()) throw Error(ErrorCode::invalid_argument, "no estimators selected");
  if (repeats < 1) throw Error(ErrorCode::invalid_argument, "repeat count must be >= 1");
  if (threads < 1) throw Error(ErrorCode::invalid_argument, "thread count must be >= 1");
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (!(values[k] > 0.0) || !std::isfinite(values[k])) {
      throw Error(ErrorCode::invalid_argument, "sweep values must be positive");
    }
    if (k > 0 && !(values[k] > values[k - 1])) {
      throw Error(ErrorCode::invalid_argument, "sweep values must be increasing");
    }
    if (axis != SweepAxis::noise_sigma && !is_count(values[k])) {
      throw Error(ErrorCode::invalid_argument, "repeat and anchor counts must be integers");
    }
  }
  if (axis == SweepAxis::anchor_count) {
    const auto& s = deployment->sigma();
    if ((s.array() != s(0, 0)).any()) {
      throw Error(ErrorCode::invalid_argument,
                  "anchor-count sweeps need a single sigma shared by all pairs");
    }
    if (!(anchor_region.max.array() > anchor_region.min.array()).all()) {
      throw Error(ErrorCode::invalid_argument, "anchor region is empty");
    }
  }
}

McScenario scenario_for(const McConfig& config, std::size_t axis_index) {
  const Deployment& base = *config.deployment;
  const double value = config.values.at(axis_index);
  switch (config.axis) {
    case SweepAxis::repeat_t:
      return {config.deployment, static_cast<std::size_t>(value)};
    case SweepAxis::noise_sigma: {
      Eigen::MatrixXd s = Eigen::MatrixXd::Constant(base.sigma().rows(), base.sigma().cols(), value);
      return {std::make_shared<const Deployment>(base.with_sigma(std::move(s))), config.repeats};
    }
    case SweepAxis::anchor_count: {
      const auto count = static_cast<std::size_t>(value);
      const auto n = static_cast<Eigen::Index>(base.tag_count());
      std::vector<Vec2> anchors;
      Eigen::MatrixXd dh = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(count));
      const CounterRng rng(config.seed, kAnchorStream, static_cast<std::uint32_t>(axis_index), 0);
      const Vec2 lo = config.anchor_region.min;
      const Vec2 span = config.anchor_region.max - lo;
      for (std::size_t m = 0; m < count; ++m) {
        if (m < base.anchor_count()) {
          anchors.push_back(base.anchor(m));
          dh.col(static_cast<Eigen::Index>(m)) = base.height_diff().col(static_cast<Eigen::Index>(m));
        } else {
          const std::size_t k = m - base.anchor_count();
          anchors.push_back(lo + Vec2(rng.uniform(2 * k) * span.x(), rng.uniform(2 * k + 1) * span.y()));
        }
      }
      Eigen::MatrixXd s = Eigen::MatrixXd::Constant(n, static_cast<Eigen::Index>(count),
                                                    base.sigma()(0, 0));
      return {std::make_shared<const Deployment>(
                  base.with_anchors(std::move(anchors), std::move(s), std::move(dh))),
              config.repeats};
    }
  }
  throw Error(ErrorCode::invalid_argument, "unknown sweep axis");
}

RangeBatch synthesize_trial(const McConfig& config, const McScenario& scenario,
                            std::size_t axis_index, std::size_t trial) {
  const Deployment& dep = *scenario.deployment;
  const std::size_t reps = scenario.repeats;
  const CounterRng rng(config.seed, kNoiseStream, static_cast<std::uint32_t>(axis_index), trial);
  std::vector<double> d(dep.tag_count() * dep.anchor_count() * reps);
  std::size_t j = 0;
  for (std::size_t i = 0; i < dep.tag_count(); ++i) {
    for (std::size_t m = 0; m < dep.anchor_count(); ++m) {
      const double g = predicted_range(dep, config.truth, i, m);
      const double sig = dep.sigma(i, m);
      for (std::size_t k = 0; k < reps; ++k, ++j) {
        d[j] = config.inject_noise ? g + sig * rng.normal(j) : g;
      }
    }
  }
  return RangeBatch(scenario.deployment, reps, std::move(d), RangeCheck::finite_only);
}

McTrials run_trials(const McConfig& config, std::size_t axis_index) {
  config.validate();
  std::vector<Variant> variants;
  for (Method m : config.estimators) variants.push_back({m, false});
  auto sims = simulate(config, axis_index, variants, nullptr);
  McTrials out;
  out.estimators = config.estimators;
  for (auto& s : sims) {
    out.poses.push_back(std::move(s.poses));
    out.microseconds.push_back(std::move(s.micros));
  }
  return out;
}

McResult run_sweep(const McConfig& config) {
  std::vector<Variant> variants;
  for (Method m : config.estimators) variants.push_back({m, false});
  return run_variants(config, variants, nullptr);
}

McResult run_outlier_stress(const McConfig& config, double spike, double rate,
                            const OutlierFilter& filter) {
  if (!(rate >= 0.0 && rate <= 0.2)) {
    throw Error(ErrorCode::invalid_argument, "outlier rate must lie in [0, 0.2]");
  }
  if (!std::isfinite(spike)) throw Error(ErrorCode::invalid_argument, "spike must be finite");
  if (!(filter.frequency > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "filter frequency must be positive");
  }
  std::vector<Variant> variants;
  for (Method m : config.estimators) variants.push_back({m, false});
  for (Method m : config.estimators) variants.push_back({m, true});
  const Spikes spikes{spike, rate, filter};
  McResult result = run_variants(config, variants, &spikes);
  std::ostringstream note;
  note << "outlier stress: spike " << spike << " m with probability " << rate
       << "; filtered rows reject d_t > min(previous " << filter.params.window
       << ") + k*v_max/f + " << filter.params.error_bound;
  result.notes.push_back(note.str());
  return result;
}

bool McResult::same_statistics(const McResult& other) const {
  if (axis != other.axis || rows.size() != other.rows.size()) return false;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const McRow& a = rows[k];
    const McRow& b = other.rows[k];
    if (a.estimator != b.estimator || a.filtered != b.filtered || a.trials != b.trials ||
        a.failures != b.failures || !same_double(a.axis_value, b.axis_value) ||
        !same_double(a.rotation_rmse, b.rotation_rmse) ||
        !same_double(a.translation_rmse, b.translation_rmse) ||
        !same_double(a.combined_rmse, b.combined_rmse) ||
        !same_double(a.combined_rmse_stderr, b.combined_rmse_stderr) ||
        !same_double(a.sqrt_crlb, b.sqrt_crlb)) {
      return false;
    }
  }
  return true;
}

void write_csv(std::ostream& out, const McResult& result, bool include_timing) {
  out << csv_field(to_string(result.axis))
      << ",estimator,filtered,trials,failures,rotation_rmse,translation_rmse,combined_rmse,"
         "combined_rmse_stderr,sqrt_crlb";
  if (include_timing) out << ",mean_time_us";
  out << "\r\n";
  for (const McRow& r : result.rows) {
    out << number(r.axis_value) << ',' << csv_field(std::string(to_string(r.estimator))) << ','
        << (r.filtered ? "true" : "false") << ',' << r.trials << ',' << r.failures << ','
        << number(r.rotation_rmse) << ',' << number(r.translation_rmse) << ','
        << number(r.combined_rmse) << ',' << number(r.combined_rmse_stderr) << ','
        << number(r.sqrt_crlb);
    if (include_timing) out << ',' << number(r.mean_time_us);
    out << "\r\n";
  }
}

}  // namespace uwbpose
