#pragma once

#include "bfb/bias.hpp"
#include "bfb/csp.hpp"
#include "bfb/decode.hpp"
#include "bfb/dsp.hpp"
#include "bfb/enet.hpp"
#include "bfb/types.hpp"

#include <array>
#include <optional>
#include <vector>

namespace bfb {

// Trial/run geometry. A trial is 4 s: the first second warms the sliding
// window, the remaining 3 s catch window is sampled at the 16 Hz control
// cadence (48 ticks).
constexpr int kControlHz = 16;
constexpr int kTicksPerTrial = 48;
constexpr double kTrialSeconds = 4.0;
constexpr double kWarmupSeconds = 1.0;
constexpr double kPauseSeconds = 4.0;
constexpr int kEegChannels = 32;

// Game constants: items are caught when the lateral position passes within
// the catch radius of the row offset on the target side.
constexpr double kPositionGain = 1.5;
constexpr double kRelaxTau = 1.0;
constexpr double kFishOffset = 0.3;
constexpr double kSquidOffset = 0.8;
constexpr double kCatchRadius = 0.05;
constexpr int kFishCount = 8;
constexpr int kFishPoints = 1;
constexpr int kSquidPoints = 5;

struct SimParams {
  double sample_rate{250.0};
  int filter_order{4};
  double bias_k{0.33};
  BandGrid band_grid{};
  int calibration_runs{2};
  int test_runs{6};
  int trials_per_class{20};
  double svm_cost{1.0};
};

// Synthetic subject. Two latent 8-12 Hz sources carry the class evidence: a
// per-trial draw u ~ N(sign * skill * 2.5, 1) sets their log-variance split,
// so the per-window Bayes accuracy is approximately Phi(2.5 * skill).
struct SubjectProfile {
  int id{0};
  BiasKind group{BiasKind::None};
  double skill{0.3};                          // separability in [0,1]
  double drift{0.0};                          // additive output offset in test runs
  double responsiveness{0.0};                 // seen-feedback -> next-run skill coupling
  double noise_scale{0.5};                    // broadband channel noise SD
  std::array<double, kFactorCount> factors{}; // latent scores in [0,1]
  std::uint64_t seed{0};
};

double bayes_window_accuracy(double skill);
double skill_for_window_accuracy(double accuracy);

struct WindowSample {
  double raw{0.5};
  double recentered{0.5};
  double biased{0.5};
  double angle{0.0};
  double position{0.0};
  bool correct{false};
};

enum class RunKind { Calibration, Test };

struct TrialRecord {
  MiClass target{MiClass::Left};
  std::vector<WindowSample> windows;
  int points{0};
};

struct RunRecord {
  RunKind kind{RunKind::Test};
  std::vector<TrialRecord> trials;
  double recenter_offset{0.0};
  double duration_s{325.0};
};

struct TrainedChain {
  FilterCoeffs coeffs;
  SpatialFilterBank bank;
  ProbabilisticLinearModel model;
  double rate{250.0};
  bool trained{false};
};

struct SessionRecord {
  std::vector<RunRecord> runs;  // calibration runs first, then test runs
  BandChoice band;
  TrainedChain chain;
  std::vector<Matrix> calib_features;  // per calibration trial: ticks x 6
  std::vector<MiClass> calib_labels;
  double flow_baseline{0.0};
  double nasa_baseline{0.0};
  std::vector<double> flow_by_run;  // per test run
  std::vector<double> nasa_by_run;
};

struct SubjectRecord {
  SubjectProfile profile;
  std::vector<SessionRecord> sessions;
};

struct GroupCounts {
  int negative{10};
  int positive{10};
  int none{10};
  int total() const { return negative + positive + none; }
};

struct PlantedEffect {
  BiasKind group{BiasKind::Negative};
  int factor{0};  // index into kFactorNames
  double coefficient{0.0};
};

// Planted interaction model for outcome-level ground truth: per-run outcome
// = intercept + sum of coefficient * indicator(group) * factor + N(0, sd).
struct PlantedSpec {
  double intercept{50.0};
  double noise_sd{5.0};
  std::vector<PlantedEffect> effects;
};

struct SimConfig {
  std::uint64_t seed{1};
  GroupCounts groups{};
  int sessions{2};
  SimParams params{};
  std::optional<PlantedSpec> planted{};
  int jobs{1};
};

struct ExperimentData {
  std::vector<SubjectRecord> subjects;
  SimParams params;
  int sessions{2};
};

// 4 s, 32-channel trial epoch: two mixed narrowband sources plus broadband
// channel noise. Identical rng state reproduces the block bit-exactly.
SampleBlock synth_eeg_epoch(const SubjectProfile& profile, MiClass cls, Rng& rng,
                            const SimParams& params = {});

// x=0 -> -45 deg (left), x=1 -> +45 deg (right).
double angle_from_output(double x);

// One 1/16 s control tick of lateral motion, clamped to [-1, 1].
double advance_position(double position, double angle_deg, double dt);

// Between trials the course pulls the player back to center (tau = 1 s).
double relax_position(double position, double dt);

int score_trial(const std::vector<double>& positions, MiClass target);

// One test trial through the full chain: window -> filter -> CSP -> band
// power -> classify -> recenter -> bias -> angle -> position.
TrialRecord run_trial(const SubjectProfile& profile, const TrainedChain& chain,
                      const BiasSpec& spec, const RecenterState& state, MiClass cls, Rng& rng,
                      const SimParams& params = {}, double start_position = 0.0);

SessionRecord run_session(const SubjectProfile& profile, int session_index,
                          const SimParams& params);

ExperimentData run_experiment(const SimConfig& config);

// Outcome-level planted dataset (no EEG chain): measured-style factors and
// per-run outcomes drawn from the planted linear model.
struct PlantedDataset {
  std::vector<FactorRow> rows;  // one per subject-run, baselines vary by session
  Vector y;
  int runs_per_subject{0};
};

PlantedDataset build_planted_dataset(const GroupCounts& groups, int sessions, int test_runs,
                                     const PlantedSpec& spec, std::uint64_t seed);

// Within-trial window boundaries: sample index (exclusive end) of each tick.
std::vector<int> tick_end_samples(double rate);

}  // namespace bfb
