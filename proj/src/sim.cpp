#include "bfb/sim.hpp"

#include "bfb/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace bfb {

namespace {

constexpr double kSkillScale = 2.5;   // u-mean at skill 1
constexpr double kLogAmpScale = 1.0;  // per-unit-u log-amplitude swing
constexpr int kSourceTones = 8;

// Fixed unit mixing vectors for the two latent sources, shared by every
// subject and session.
const Matrix& mixing_vectors() {
  static const Matrix mix = [] {
    Rng rng = make_rng(0xB1A5C0DEull);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix m(kEegChannels, 2);
    for (int c = 0; c < 2; ++c)
      for (int r = 0; r < kEegChannels; ++r) m(r, c) = normal(rng);
    m.col(0).normalize();
    m.col(1) -= m.col(0) * m.col(0).dot(m.col(1));
    m.col(1).normalize();
    return m;
  }();
  return mix;
}

void add_narrowband_source(Matrix& data, const Vector& mixing, double variance, double rate,
                           Rng& rng) {
  const double two_pi = 2.0 * std::numbers::pi;
  std::uniform_real_distribution<double> freq(8.0, 12.0);
  std::uniform_real_distribution<double> phase(0.0, two_pi);
  const double amp = std::sqrt(2.0 * variance / kSourceTones);
  const int n = static_cast<int>(data.cols());
  Vector source = Vector::Zero(n);
  for (int tone = 0; tone < kSourceTones; ++tone) {
    const double f = freq(rng);
    const double ph = phase(rng);
    for (int t = 0; t < n; ++t) source[t] += amp * std::sin(two_pi * f * t / rate + ph);
  }
  data.noalias() += mixing * source.transpose();
}

std::vector<MiClass> balanced_trial_order(int per_class, Rng& rng) {
  std::vector<MiClass> order;
  order.reserve(static_cast<size_t>(2 * per_class));
  for (int i = 0; i < per_class; ++i) {
    order.push_back(MiClass::Left);
    order.push_back(MiClass::Right);
  }
  for (size_t i = order.size() - 1; i > 0; --i) {
    std::uniform_int_distribution<size_t> pick(0, i);
    std::swap(order[i], order[pick(rng)]);
  }
  return order;
}

Vector window_feature(const TrainedChain& chain, const Matrix& filtered, int end_sample,
                      int window_len, double rate) {
  const SampleBlock window{filtered.middleCols(end_sample - window_len, window_len), rate};
  return band_power(apply_csp(chain.bank, window));
}

bool on_target_side(double x, MiClass target) {
  return target == MiClass::Right ? x > 0.5 : x < 0.5;
}

// Scripted "rather optimistic" sham feedback for calibration trials: a slow
// wobble around a strong pull toward the target side.
std::vector<double> sham_angles(MiClass target, Rng& rng) {
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> jitter(0.0, 5.0);
  const double ph = phase(rng);
  std::vector<double> angles(kTicksPerTrial);
  for (int k = 0; k < kTicksPerTrial; ++k) {
    const double t = static_cast<double>(k) / kControlHz;
    double a = class_sign(target) * 25.0 + 12.0 * std::sin(2.0 * std::numbers::pi * 0.4 * t + ph) +
               jitter(rng);
    angles[static_cast<size_t>(k)] = std::clamp(a, -45.0, 45.0);
  }
  return angles;
}

double nominal_run_seconds(int trials) {
  return 5.0 + trials * (kTrialSeconds + kPauseSeconds);
}

}  // namespace

double bayes_window_accuracy(double skill) { return norm_cdf(kSkillScale * skill); }

double skill_for_window_accuracy(double accuracy) {
  if (!(accuracy > 0.5 && accuracy < 1.0))
    throw std::invalid_argument("skill_for_window_accuracy: accuracy in (0.5, 1)");
  return norm_quantile(accuracy) / kSkillScale;
}

std::vector<int> tick_end_samples(double rate) {
  const int warmup = static_cast<int>(std::lround(rate * kWarmupSeconds));
  std::vector<int> ends(kTicksPerTrial);
  for (int k = 0; k < kTicksPerTrial; ++k)
    ends[static_cast<size_t>(k)] =
        warmup + static_cast<int>(std::lround((k + 1) * rate / kControlHz));
  return ends;
}

SampleBlock synth_eeg_epoch(const SubjectProfile& profile, MiClass cls, Rng& rng,
                            const SimParams& params) {
  const double rate = params.sample_rate;
  const int n = static_cast<int>(std::lround(rate * kTrialSeconds));

  std::normal_distribution<double> normal(0.0, 1.0);
  const double u = class_sign(cls) * kSkillScale * profile.skill + normal(rng);
  const double var_hi = std::exp(2.0 * kLogAmpScale * u);
  const double var_lo = std::exp(-2.0 * kLogAmpScale * u);

  SampleBlock epoch;
  epoch.rate = rate;
  epoch.data = Matrix::Zero(kEegChannels, n);
  const Matrix& mix = mixing_vectors();
  add_narrowband_source(epoch.data, mix.col(0), var_hi, rate, rng);
  add_narrowband_source(epoch.data, mix.col(1), var_lo, rate, rng);
  if (profile.noise_scale > 0.0) {
    for (int t = 0; t < n; ++t)
      for (int c = 0; c < kEegChannels; ++c) epoch.data(c, t) += profile.noise_scale * normal(rng);
  }
  return epoch;
}

double angle_from_output(double x) {
  if (!(x >= 0.0 && x <= 1.0)) throw std::domain_error("angle_from_output: x must be in [0,1]");
  return (x - 0.5) * 90.0;
}

double advance_position(double position, double angle_deg, double dt) {
  const double rad = angle_deg * std::numbers::pi / 180.0;
  return std::clamp(position + std::sin(rad) * dt * kPositionGain, -1.0, 1.0);
}

double relax_position(double position, double dt) { return position * std::exp(-dt / kRelaxTau); }

int score_trial(const std::vector<double>& positions, MiClass target) {
  const double sign = class_sign(target);
  bool fish = false, squid = false;
  for (double p : positions) {
    if (std::abs(p - sign * kFishOffset) <= kCatchRadius) fish = true;
    if (std::abs(p - sign * kSquidOffset) <= kCatchRadius) squid = true;
  }
  return (fish ? kFishCount * kFishPoints : 0) + (squid ? kSquidPoints : 0);
}

TrialRecord run_trial(const SubjectProfile& profile, const TrainedChain& chain,
                      const BiasSpec& spec, const RecenterState& state, MiClass cls, Rng& rng,
                      const SimParams& params, double start_position) {
  if (!chain.trained || !chain.model.trained) throw std::runtime_error("run_trial: untrained chain");

  const SampleBlock epoch = synth_eeg_epoch(profile, cls, rng, params);
  const Matrix filtered = filter_offline(chain.coeffs, epoch.data);
  const int window_len = static_cast<int>(std::lround(params.sample_rate * kWarmupSeconds));
  const std::vector<int> ends = tick_end_samples(params.sample_rate);
  const double dt = 1.0 / kControlHz;

  TrialRecord trial;
  trial.target = cls;
  trial.windows.reserve(ends.size());
  double position = start_position;
  std::vector<double> positions;
  positions.reserve(ends.size());
  for (int end : ends) {
    const Vector feature = window_feature(chain, filtered, end, window_len, params.sample_rate);
    WindowSample w;
    w.raw = clamp01(classify(chain.model, feature) + profile.drift);
    w.recentered = recenter(w.raw, state);
    w.biased = apply_bias(spec, w.recentered);
    w.angle = angle_from_output(w.biased);
    position = advance_position(position, w.angle, dt);
    w.position = position;
    w.correct = on_target_side(w.recentered, cls);
    trial.windows.push_back(w);
    positions.push_back(position);
  }
  trial.points = score_trial(positions, cls);
  return trial;
}

SessionRecord run_session(const SubjectProfile& profile, int session_index,
                          const SimParams& params) {
  Rng rng = make_rng(profile.seed, {0x5e55ull, static_cast<std::uint64_t>(session_index)});
  const double rate = params.sample_rate;
  const int window_len = static_cast<int>(std::lround(rate * kWarmupSeconds));
  const std::vector<int> ends = tick_end_samples(rate);
  const double dt = 1.0 / kControlHz;

  SessionRecord session;

  // Calibration phase: EEG is recorded under scripted sham feedback; the
  // decode chain is trained afterwards and replayed over the stored epochs.
  std::vector<SampleBlock> calib_epochs;
  struct ShamTrial {
    MiClass target;
    std::vector<double> angles;
  };
  std::vector<ShamTrial> sham;
  for (int r = 0; r < params.calibration_runs; ++r) {
    const std::vector<MiClass> order = balanced_trial_order(params.trials_per_class, rng);
    for (MiClass cls : order) {
      calib_epochs.push_back(synth_eeg_epoch(profile, cls, rng, params));
      sham.push_back({cls, sham_angles(cls, rng)});
    }
  }
  session.calib_labels.reserve(sham.size());
  for (const ShamTrial& t : sham) session.calib_labels.push_back(t.target);

  // Band selection and CSP operate on the catch-window segment of each epoch.
  const int warmup = window_len;
  std::vector<SampleBlock> catch_segments;
  catch_segments.reserve(calib_epochs.size());
  for (const SampleBlock& e : calib_epochs)
    catch_segments.push_back({e.data.rightCols(e.samples() - warmup), rate});

  session.band = select_band(catch_segments, session.calib_labels, params.band_grid,
                             params.filter_order);
  session.chain.rate = rate;
  session.chain.coeffs = design_bandpass(session.band.band, rate, params.filter_order);

  std::vector<SampleBlock> filtered_catch;
  filtered_catch.reserve(calib_epochs.size());
  std::vector<Matrix> filtered_full;
  filtered_full.reserve(calib_epochs.size());
  for (const SampleBlock& e : calib_epochs) {
    Matrix f = filter_offline(session.chain.coeffs, e.data);
    filtered_catch.push_back({f.rightCols(f.cols() - warmup), rate});
    filtered_full.push_back(std::move(f));
  }
  session.chain.bank =
      train_csp(estimate_class_covariances(filtered_catch, session.calib_labels), 3);

  const int ticks = static_cast<int>(ends.size());
  Matrix features(static_cast<int>(calib_epochs.size()) * ticks, 6);
  std::vector<MiClass> window_labels(features.rows());
  session.calib_features.reserve(calib_epochs.size());
  for (size_t i = 0; i < calib_epochs.size(); ++i) {
    Matrix per_trial(ticks, 6);
    for (int k = 0; k < ticks; ++k) {
      per_trial.row(k) =
          window_feature(session.chain, filtered_full[i], ends[static_cast<size_t>(k)],
                         window_len, rate)
              .transpose();
      features.row(static_cast<int>(i) * ticks + k) = per_trial.row(k);
      window_labels[i * static_cast<size_t>(ticks) + static_cast<size_t>(k)] =
          session.calib_labels[i];
    }
    session.calib_features.push_back(std::move(per_trial));
  }
  session.chain.model = train_classifier(features, window_labels, params.svm_cost);
  session.chain.trained = true;

  // Replay the trained chain over the calibration epochs to fill in the
  // recorded outputs; displayed angles and points stay with the sham script.
  const BiasSpec no_bias{BiasKind::None, params.bias_k};
  const RecenterState zero_state;
  int trial_index = 0;
  for (int r = 0; r < params.calibration_runs; ++r) {
    RunRecord run;
    run.kind = RunKind::Calibration;
    run.recenter_offset = 0.0;
    run.duration_s = nominal_run_seconds(2 * params.trials_per_class);
    for (int t = 0; t < 2 * params.trials_per_class; ++t, ++trial_index) {
      const ShamTrial& sh = sham[static_cast<size_t>(trial_index)];
      TrialRecord trial;
      trial.target = sh.target;
      double position = 0.0;
      std::vector<double> positions;
      positions.reserve(static_cast<size_t>(ticks));
      for (int k = 0; k < ticks; ++k) {
        WindowSample w;
        const Vector f =
            session.calib_features[static_cast<size_t>(trial_index)].row(k).transpose();
        w.raw = classify(session.chain.model, f);
        w.recentered = recenter(w.raw, zero_state);
        w.biased = apply_bias(no_bias, w.recentered);
        w.angle = sh.angles[static_cast<size_t>(k)];
        position = advance_position(position, w.angle, dt);
        w.position = position;
        w.correct = on_target_side(w.recentered, sh.target);
        trial.windows.push_back(w);
        positions.push_back(position);
      }
      trial.points = score_trial(positions, sh.target);
      run.trials.push_back(std::move(trial));
    }
    session.runs.push_back(std::move(run));
  }

  std::normal_distribution<double> score_noise(0.0, 0.1);
  {
    double correct = 0.0, total = 0.0;
    for (int r = 0; r < params.calibration_runs; ++r)
      for (const TrialRecord& t : session.runs[static_cast<size_t>(r)].trials)
        for (const WindowSample& w : t.windows) {
          correct += w.correct ? 1.0 : 0.0;
          total += 1.0;
        }
    const double rate_correct = total > 0.0 ? correct / total : 0.5;
    session.flow_baseline = clamp01(profile.factors[7] + 0.3 * (rate_correct - 0.5) +
                                    score_noise(rng));
    session.nasa_baseline = clamp01(profile.factors[8] - 0.3 * (rate_correct - 0.5) +
                                    score_noise(rng));
  }

  // Testing phase: re-centering is refreshed after every test run from that
  // run's raw outputs only; the first test run starts uncorrected.
  const BiasSpec bias{profile.group, params.bias_k};
  RecenterState state;
  double skill = profile.skill;
  for (int r = 0; r < params.test_runs; ++r) {
    SubjectProfile current = profile;
    current.skill = skill;
    RunRecord run;
    run.kind = RunKind::Test;
    run.recenter_offset = state.c;
    run.duration_s = nominal_run_seconds(2 * params.trials_per_class);
    const std::vector<MiClass> order = balanced_trial_order(params.trials_per_class, rng);
    double position = 0.0;
    std::vector<double> raw_outputs;
    raw_outputs.reserve(order.size() * static_cast<size_t>(ticks));
    double correct = 0.0, seen = 0.0, total = 0.0;
    for (MiClass cls : order) {
      TrialRecord trial = run_trial(current, session.chain, bias, state, cls, rng, params,
                                    position);
      position = trial.windows.back().position;
      position = relax_position(position, kPauseSeconds);
      for (const WindowSample& w : trial.windows) {
        raw_outputs.push_back(w.raw);
        correct += w.correct ? 1.0 : 0.0;
        seen += on_target_side(w.biased, cls) ? 1.0 : 0.0;
        total += 1.0;
      }
      run.trials.push_back(std::move(trial));
    }
    state = update_recenter(raw_outputs, r);
    session.runs.push_back(std::move(run));

    const double correct_rate = correct / total;
    const double seen_rate = seen / total;
    session.flow_by_run.push_back(
        clamp01(profile.factors[7] + 0.3 * (correct_rate - 0.5) + score_noise(rng)));
    session.nasa_by_run.push_back(
        clamp01(profile.factors[8] - 0.3 * (correct_rate - 0.5) + score_noise(rng)));
    skill = clamp01(skill + profile.responsiveness * (seen_rate - 0.5));
  }
  return session;
}

ExperimentData run_experiment(const SimConfig& config) {
  if (config.groups.negative < 0 || config.groups.positive < 0 || config.groups.none < 0 ||
      config.groups.total() == 0)
    throw std::invalid_argument("run_experiment: invalid group counts");

  ExperimentData data;
  data.params = config.params;
  data.sessions = config.sessions;
  data.subjects.resize(static_cast<size_t>(config.groups.total()));

  std::vector<BiasKind> assignment;
  assignment.reserve(data.subjects.size());
  for (int i = 0; i < config.groups.negative; ++i) assignment.push_back(BiasKind::Negative);
  for (int i = 0; i < config.groups.positive; ++i) assignment.push_back(BiasKind::Positive);
  for (int i = 0; i < config.groups.none; ++i) assignment.push_back(BiasKind::None);

  parallel_for(data.subjects.size(), config.jobs, [&](size_t s) {
    SubjectProfile profile;
    profile.id = static_cast<int>(s);
    profile.group = assignment[s];
    profile.seed = mix_seed(config.seed, {0x5b7bull, static_cast<std::uint64_t>(s)});
    Rng rng = make_rng(profile.seed, {0xfac7ull});
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    for (double& f : profile.factors) f = uniform(rng);
    // Latent aptitude drives separability; window accuracy spans ~62-89%.
    profile.skill = 0.12 + 0.38 * profile.factors[6];

    SubjectRecord record;
    record.profile = profile;
    record.sessions.reserve(static_cast<size_t>(config.sessions));
    for (int sess = 0; sess < config.sessions; ++sess)
      record.sessions.push_back(run_session(profile, sess, config.params));
    data.subjects[s] = std::move(record);
  });
  return data;
}

PlantedDataset build_planted_dataset(const GroupCounts& groups, int sessions, int test_runs,
                                     const PlantedSpec& spec, std::uint64_t seed) {
  for (const PlantedEffect& e : spec.effects)
    if (e.factor < 0 || e.factor >= kFactorCount)
      throw std::invalid_argument("build_planted_dataset: bad factor index");

  PlantedDataset out;
  out.runs_per_subject = sessions * test_runs;

  std::vector<BiasKind> assignment;
  for (int i = 0; i < groups.negative; ++i) assignment.push_back(BiasKind::Negative);
  for (int i = 0; i < groups.positive; ++i) assignment.push_back(BiasKind::Positive);
  for (int i = 0; i < groups.none; ++i) assignment.push_back(BiasKind::None);

  std::vector<double> outcomes;
  for (size_t s = 0; s < assignment.size(); ++s) {
    Rng rng = make_rng(seed, {0x91a7ull, static_cast<std::uint64_t>(s)});
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::normal_distribution<double> jitter(0.0, 0.05);
    std::normal_distribution<double> noise(0.0, spec.noise_sd);

    std::array<double, kFactorCount> traits{};
    for (double& f : traits) f = uniform(rng);
    for (int sess = 0; sess < sessions; ++sess) {
      std::array<double, kFactorCount> measured = traits;
      for (int j = 6; j < kFactorCount; ++j) measured[static_cast<size_t>(j)] =
          clamp01(traits[static_cast<size_t>(j)] + jitter(rng));
      double mean = spec.intercept;
      for (const PlantedEffect& e : spec.effects)
        if (e.group == assignment[s]) mean += e.coefficient * measured[static_cast<size_t>(e.factor)];
      for (int r = 0; r < test_runs; ++r) {
        FactorRow row;
        row.subject = static_cast<int>(s);
        row.group = assignment[s];
        row.factors = measured;
        out.rows.push_back(row);
        outcomes.push_back(mean + noise(rng));
      }
    }
  }
  out.y = Eigen::Map<Vector>(outcomes.data(), static_cast<int>(outcomes.size()));
  return out;
}

}  // namespace bfb
