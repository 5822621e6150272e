#include "bfb/harness.hpp"

#include "bfb/metrics.hpp"
#include "bfb/stats.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace bfb {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------- utilities

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string read_text_file(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(std::string(what) + " not found: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out << content;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

int line_of_byte(const std::string& text, std::size_t byte) {
  int line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

// ------------------------------------------------------------ config schema

void reject_unknown_keys(const json& j, const std::set<std::string>& known,
                         const std::string& source, const std::string& path) {
  for (const auto& item : j.items())
    if (!known.count(item.key()))
      throw ConfigError(source + ": unknown key '" + path + item.key() + "'");
}

int factor_index_from_name(const std::string& name, const std::string& source) {
  for (int j = 0; j < kFactorCount; ++j)
    if (name == kFactorNames[static_cast<size_t>(j)]) return j;
  throw ConfigError(source + ": unknown factor '" + name + "'");
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& source) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(source + ": bad value type for '" + std::string(key) + "'");
  }
}

ExperimentConfig parse_config_json(const json& j, const std::string& source) {
  ExperimentConfig cfg;
  reject_unknown_keys(j,
                      {"seed", "groups", "sessions", "runs", "bias_k", "sample_rate",
                       "band_grid", "enet", "planted", "stream", "output_dir"},
                      source, "");

  cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed, source);
  if (j.contains("groups")) {
    const json& g = j.at("groups");
    reject_unknown_keys(g, {"negative", "positive", "none"}, source, "groups.");
    cfg.groups.negative = get_or<int>(g, "negative", cfg.groups.negative, source);
    cfg.groups.positive = get_or<int>(g, "positive", cfg.groups.positive, source);
    cfg.groups.none = get_or<int>(g, "none", cfg.groups.none, source);
    if (cfg.groups.negative < 0 || cfg.groups.positive < 0 || cfg.groups.none < 0 ||
        cfg.groups.total() == 0)
      throw ConfigError(source + ": groups must be non-negative and non-empty");
  }
  cfg.sessions = get_or<int>(j, "sessions", cfg.sessions, source);
  if (cfg.sessions < 1) throw ConfigError(source + ": sessions must be >= 1");

  if (j.contains("runs")) {
    const json& r = j.at("runs");
    reject_unknown_keys(r, {"calibration", "test"}, source, "runs.");
    cfg.params.calibration_runs = get_or<int>(r, "calibration", cfg.params.calibration_runs, source);
    cfg.params.test_runs = get_or<int>(r, "test", cfg.params.test_runs, source);
    if (cfg.params.calibration_runs < 1 || cfg.params.test_runs < 1)
      throw ConfigError(source + ": runs must be >= 1");
  }

  cfg.params.bias_k = get_or<double>(j, "bias_k", cfg.params.bias_k, source);
  if (!(cfg.params.bias_k >= 0.0 && cfg.params.bias_k < 1.0))
    throw ConfigError(source + ": bias_k must be in [0,1)");
  cfg.params.sample_rate = get_or<double>(j, "sample_rate", cfg.params.sample_rate, source);
  if (!(cfg.params.sample_rate > 0.0)) throw ConfigError(source + ": sample_rate must be positive");

  if (j.contains("band_grid")) {
    const json& b = j.at("band_grid");
    reject_unknown_keys(b, {"low_hz", "high_hz", "step_hz", "min_width_hz", "max_width_hz"},
                        source, "band_grid.");
    BandGrid& grid = cfg.params.band_grid;
    grid.low_hz = get_or<double>(b, "low_hz", grid.low_hz, source);
    grid.high_hz = get_or<double>(b, "high_hz", grid.high_hz, source);
    grid.step_hz = get_or<double>(b, "step_hz", grid.step_hz, source);
    grid.min_width_hz = get_or<double>(b, "min_width_hz", grid.min_width_hz, source);
    grid.max_width_hz = get_or<double>(b, "max_width_hz", grid.max_width_hz, source);
    if (!(grid.low_hz > 0.0 && grid.low_hz < grid.high_hz && grid.step_hz > 0.0 &&
          grid.min_width_hz > 0.0 && grid.min_width_hz <= grid.max_width_hz &&
          grid.high_hz < cfg.params.sample_rate / 2.0))
      throw ConfigError(source + ": invalid band_grid");
  }

  if (j.contains("enet")) {
    const json& e = j.at("enet");
    reject_unknown_keys(e, {"alpha_count", "lambda_count", "permutations"}, source, "enet.");
    cfg.enet.alpha_count = get_or<int>(e, "alpha_count", cfg.enet.alpha_count, source);
    cfg.enet.lambda_count = get_or<int>(e, "lambda_count", cfg.enet.lambda_count, source);
    cfg.enet.permutations = get_or<int>(e, "permutations", cfg.enet.permutations, source);
    if (cfg.enet.alpha_count < 1 || cfg.enet.lambda_count < 2 || cfg.enet.permutations < 1)
      throw ConfigError(source + ": invalid enet grid sizes");
  }

  if (j.contains("planted")) {
    const json& p = j.at("planted");
    reject_unknown_keys(p, {"intercept", "noise_sd", "effects"}, source, "planted.");
    PlantedSpec spec;
    spec.intercept = get_or<double>(p, "intercept", spec.intercept, source);
    spec.noise_sd = get_or<double>(p, "noise_sd", spec.noise_sd, source);
    if (!(spec.noise_sd >= 0.0)) throw ConfigError(source + ": planted.noise_sd must be >= 0");
    if (p.contains("effects")) {
      if (!p.at("effects").is_array()) throw ConfigError(source + ": planted.effects must be a list");
      for (const json& e : p.at("effects")) {
        reject_unknown_keys(e, {"group", "factor", "coefficient"}, source, "planted.effects.");
        PlantedEffect effect;
        try {
          effect.group = bias_from_name(e.at("group").get<std::string>());
        } catch (const std::exception&) {
          throw ConfigError(source + ": planted effect needs a valid group");
        }
        if (!e.contains("factor") || !e.contains("coefficient"))
          throw ConfigError(source + ": planted effect needs factor and coefficient");
        effect.factor = factor_index_from_name(e.at("factor").get<std::string>(), source);
        effect.coefficient = e.at("coefficient").get<double>();
        spec.effects.push_back(effect);
      }
    }
    cfg.planted = spec;
  }

  if (j.contains("stream")) {
    const json& s = j.at("stream");
    reject_unknown_keys(s, {"host", "port"}, source, "stream.");
    cfg.stream.host = get_or<std::string>(s, "host", cfg.stream.host, source);
    cfg.stream.port = get_or<int>(s, "port", cfg.stream.port, source);
    if (cfg.stream.port < 0 || cfg.stream.port > 65535)
      throw ConfigError(source + ": stream.port out of range");
  }

  cfg.output_dir = get_or<std::string>(j, "output_dir", cfg.output_dir, source);
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["groups"] = {{"negative", cfg.groups.negative},
                 {"positive", cfg.groups.positive},
                 {"none", cfg.groups.none}};
  j["sessions"] = cfg.sessions;
  j["runs"] = {{"calibration", cfg.params.calibration_runs}, {"test", cfg.params.test_runs}};
  j["bias_k"] = cfg.params.bias_k;
  j["sample_rate"] = cfg.params.sample_rate;
  j["band_grid"] = {{"low_hz", cfg.params.band_grid.low_hz},
                    {"high_hz", cfg.params.band_grid.high_hz},
                    {"step_hz", cfg.params.band_grid.step_hz},
                    {"min_width_hz", cfg.params.band_grid.min_width_hz},
                    {"max_width_hz", cfg.params.band_grid.max_width_hz}};
  j["enet"] = {{"alpha_count", cfg.enet.alpha_count},
               {"lambda_count", cfg.enet.lambda_count},
               {"permutations", cfg.enet.permutations}};
  if (cfg.planted) {
    json effects = json::array();
    for (const PlantedEffect& e : cfg.planted->effects)
      effects.push_back({{"group", bias_name(e.group)},
                         {"factor", kFactorNames[static_cast<size_t>(e.factor)]},
                         {"coefficient", e.coefficient}});
    j["planted"] = {{"intercept", cfg.planted->intercept},
                    {"noise_sd", cfg.planted->noise_sd},
                    {"effects", effects}};
  }
  j["stream"] = {{"host", cfg.stream.host}, {"port", cfg.stream.port}};
  j["output_dir"] = cfg.output_dir;
  return j;
}

// ------------------------------------------------------------- dataset rows

struct MetricsRow {
  int subject{0};
  BiasKind group{BiasKind::None};
  int session{1};
  int run{1};
  double average{0}, peak{0}, calibration{0}, learning_rate{0}, progress{0};
};

struct SubjectRow {
  int subject{0};
  BiasKind group{BiasKind::None};
  int session{1};
  std::array<double, kFactorCount> factors{};
};

constexpr const char* kWindowsHeader =
    "subject,session,run,trial,tick,class,raw,recentered,biased,angle,correct,points";
constexpr const char* kMetricsHeader =
    "subject,group,session,run,average,peak,calibration,learning_rate,progress";

std::string subjects_header() {
  std::string h = "subject,group,session";
  for (int j = 0; j < kFactorCount; ++j) h += std::string(",") + kFactorNames[static_cast<size_t>(j)];
  return h;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text, const std::string& source_name) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(source_name + ":" + std::to_string(line_of_byte(text, e.byte)) + ": " +
                      e.what());
  }
  if (!j.is_object()) throw ConfigError(source_name + ":1: config must be a JSON object");
  return parse_config_json(j, source_name);
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

std::string config_hash(const ExperimentConfig& config) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(config_to_json(config).dump())));
  return std::string("fnv1a64:") + buf;
}

SimConfig to_sim_config(const ExperimentConfig& config, int jobs) {
  SimConfig sim;
  sim.seed = config.seed;
  sim.groups = config.groups;
  sim.sessions = config.sessions;
  sim.params = config.params;
  sim.planted = config.planted;
  sim.jobs = jobs;
  return sim;
}

std::string bias_plot_table(double k) {
  if (!(k >= 0.0 && k < 1.0)) throw ConfigError("bias-plot: k must be in [0,1)");
  const BiasSpec neg{BiasKind::Negative, k};
  const BiasSpec pos{BiasKind::Positive, k};
  std::string out = "x,f_neg,f_pos,identity\n";
  for (int i = 0; i <= 1000; ++i) {
    const double x = static_cast<double>(i) / 1000.0;
    out += fmt_double(x) + "," + fmt_double(apply_bias(neg, x)) + "," +
           fmt_double(apply_bias(pos, x)) + "," + fmt_double(x) + "\n";
  }
  return out;
}

// ------------------------------------------------------------------ simulate

void simulate_to_dir(const ExperimentConfig& config, const std::string& out_dir, int jobs) {
  const ExperimentData data = run_experiment(to_sim_config(config, jobs));
  fs::create_directories(out_dir);

  // windows.csv: one row per recorded control tick.
  {
    std::string out;
    out.reserve(1 << 20);
    out += kWindowsHeader;
    out += '\n';
    std::string chunk;
    std::ofstream file(fs::path(out_dir) / "windows.csv", std::ios::binary | std::ios::trunc);
    if (!file) throw DataError("cannot write windows.csv");
    file << out;
    for (const SubjectRecord& subj : data.subjects) {
      chunk.clear();
      for (size_t sess = 0; sess < subj.sessions.size(); ++sess) {
        const SessionRecord& session = subj.sessions[sess];
        for (size_t r = 0; r < session.runs.size(); ++r) {
          const RunRecord& run = session.runs[r];
          for (size_t t = 0; t < run.trials.size(); ++t) {
            const TrialRecord& trial = run.trials[t];
            for (size_t k = 0; k < trial.windows.size(); ++k) {
              const WindowSample& w = trial.windows[k];
              chunk += std::to_string(subj.profile.id) + ',' + std::to_string(sess + 1) + ',' +
                       std::to_string(r + 1) + ',' + std::to_string(t + 1) + ',' +
                       std::to_string(k + 1) + ',' + class_name(trial.target) + ',' +
                       fmt_double(w.raw) + ',' + fmt_double(w.recentered) + ',' +
                       fmt_double(w.biased) + ',' + fmt_double(w.angle) + ',' +
                       (w.correct ? "1" : "0") + ',' + std::to_string(trial.points) + '\n';
            }
          }
        }
      }
      file << chunk;
    }
  }

  // Metrics and factor tables. With a planted model configured, the per-run
  // outcomes are drawn from the planted interaction model on the measured
  // factors instead of the decode-chain accuracy.
  std::vector<MetricsRow> metrics;
  std::vector<SubjectRow> subjects;
  const int calib_runs = config.params.calibration_runs;
  for (const SubjectRecord& subj : data.subjects) {
    std::vector<double> session_avg_means;
    const size_t subject_first_row = metrics.size();
    for (size_t sess = 0; sess < subj.sessions.size(); ++sess) {
      const SessionRecord& session = subj.sessions[sess];
      const double cp = calibration_performance(
          session,
          mix_seed(config.seed, {0xcf01dull, static_cast<std::uint64_t>(subj.profile.id),
                                 static_cast<std::uint64_t>(sess)}),
          config.params.svm_cost);

      SubjectRow row;
      row.subject = subj.profile.id;
      row.group = subj.profile.group;
      row.session = static_cast<int>(sess + 1);
      for (int j = 0; j < 6; ++j) row.factors[static_cast<size_t>(j)] =
          subj.profile.factors[static_cast<size_t>(j)];
      row.factors[6] = cp;  // percent, like the metrics table
      row.factors[7] = session.flow_baseline;
      row.factors[8] = session.nasa_baseline;
      subjects.push_back(row);

      std::vector<double> avgs, peaks;
      for (int r = 0; r < config.params.test_runs; ++r) {
        const RunRecord& run = session.runs[static_cast<size_t>(calib_runs + r)];
        avgs.push_back(average_performance(run));
        peaks.push_back(peak_performance(run));
      }
      if (config.planted) {
        for (int r = 0; r < config.params.test_runs; ++r) {
          Rng rng = make_rng(config.seed,
                             {0x91a7edull, static_cast<std::uint64_t>(subj.profile.id),
                              static_cast<std::uint64_t>(sess), static_cast<std::uint64_t>(r)});
          std::normal_distribution<double> noise(0.0, config.planted->noise_sd);
          double mean = config.planted->intercept;
          for (const PlantedEffect& e : config.planted->effects)
            if (e.group == subj.profile.group)
              mean += e.coefficient * row.factors[static_cast<size_t>(e.factor)];
          avgs[static_cast<size_t>(r)] = std::clamp(mean + noise(rng), 0.0, 100.0);
          peaks[static_cast<size_t>(r)] = std::min(100.0, avgs[static_cast<size_t>(r)] + 8.0);
        }
      }
      const double lr = avgs.size() >= 2 ? learning_rate(avgs) : 0.0;
      double avg_mean = 0.0;
      for (double v : avgs) avg_mean += v;
      avg_mean /= avgs.empty() ? 1.0 : static_cast<double>(avgs.size());
      session_avg_means.push_back(avg_mean);

      for (int r = 0; r < config.params.test_runs; ++r) {
        MetricsRow m;
        m.subject = subj.profile.id;
        m.group = subj.profile.group;
        m.session = static_cast<int>(sess + 1);
        m.run = r + 1;
        m.average = avgs[static_cast<size_t>(r)];
        m.peak = peaks[static_cast<size_t>(r)];
        m.calibration = cp;
        m.learning_rate = lr;
        m.progress = std::numeric_limits<double>::quiet_NaN();
        metrics.push_back(m);
      }
    }
    if (session_avg_means.size() == 2) {
      const double prog = progress(session_avg_means[0], session_avg_means[1]);
      for (size_t i = subject_first_row; i < metrics.size(); ++i) metrics[i].progress = prog;
    }
  }

  {
    std::string out = kMetricsHeader;
    out += '\n';
    for (const MetricsRow& m : metrics)
      out += std::to_string(m.subject) + ',' + bias_name(m.group) + ',' +
             std::to_string(m.session) + ',' + std::to_string(m.run) + ',' +
             fmt_double(m.average) + ',' + fmt_double(m.peak) + ',' + fmt_double(m.calibration) +
             ',' + fmt_double(m.learning_rate) + ',' + fmt_double(m.progress) + '\n';
    write_text_file((fs::path(out_dir) / "metrics.csv").string(), out);
  }
  {
    std::string out = subjects_header();
    out += '\n';
    for (const SubjectRow& s : subjects) {
      out += std::to_string(s.subject) + ',' + bias_name(s.group) + ',' +
             std::to_string(s.session);
      for (double f : s.factors) out += ',' + fmt_double(f);
      out += '\n';
    }
    write_text_file((fs::path(out_dir) / "subjects.csv").string(), out);
  }

  json manifest;
  manifest["format"] = "bfb-dataset/1";
  manifest["seed"] = config.seed;
  manifest["config_hash"] = config_hash(config);
  manifest["config"] = config_to_json(config);
  manifest["counts"] = {
      {"subjects", config.groups.total()},
      {"sessions_per_subject", config.sessions},
      {"runs_total",
       config.groups.total() * config.sessions *
           (config.params.calibration_runs + config.params.test_runs)},
      {"trials_per_run", 2 * config.params.trials_per_class},
      {"ticks_per_trial", kTicksPerTrial}};
  manifest["files"] = {{"windows", "windows.csv"},
                       {"metrics", "metrics.csv"},
                       {"subjects", "subjects.csv"}};
  write_text_file((fs::path(out_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

// ------------------------------------------------------------------- analyze

namespace {

struct LoadedDataset {
  ExperimentConfig config;
  std::vector<MetricsRow> metrics;
  std::vector<SubjectRow> subjects;
  std::map<std::pair<int, int>, size_t> subject_row;  // (subject, session) -> index
};

double parse_double(const std::string& s) { return std::strtod(s.c_str(), nullptr); }

LoadedDataset load_dataset(const std::string& data_dir) {
  LoadedDataset d;
  const std::string manifest_text =
      read_text_file((fs::path(data_dir) / "manifest.json").string(), "manifest.json");
  json manifest;
  try {
    manifest = json::parse(manifest_text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("manifest.json: ") + e.what());
  }
  if (!manifest.contains("config")) throw DataError("manifest.json: missing config");
  d.config = parse_config_json(manifest.at("config"), "manifest.json#config");

  {
    const std::string text =
        read_text_file((fs::path(data_dir) / "metrics.csv").string(), "metrics.csv");
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || split_csv_line(line) != split_csv_line(kMetricsHeader))
      throw DataError("metrics.csv: unexpected header");
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto f = split_csv_line(line);
      if (f.size() != 9) throw DataError("metrics.csv: malformed row");
      MetricsRow m;
      m.subject = std::stoi(f[0]);
      m.group = bias_from_name(f[1]);
      m.session = std::stoi(f[2]);
      m.run = std::stoi(f[3]);
      m.average = parse_double(f[4]);
      m.peak = parse_double(f[5]);
      m.calibration = parse_double(f[6]);
      m.learning_rate = parse_double(f[7]);
      m.progress = parse_double(f[8]);
      d.metrics.push_back(m);
    }
  }
  {
    const std::string text =
        read_text_file((fs::path(data_dir) / "subjects.csv").string(), "subjects.csv");
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || split_csv_line(line) != split_csv_line(subjects_header()))
      throw DataError("subjects.csv: unexpected header");
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto f = split_csv_line(line);
      if (f.size() != 3 + kFactorCount) throw DataError("subjects.csv: malformed row");
      SubjectRow s;
      s.subject = std::stoi(f[0]);
      s.group = bias_from_name(f[1]);
      s.session = std::stoi(f[2]);
      for (int j = 0; j < kFactorCount; ++j)
        s.factors[static_cast<size_t>(j)] = parse_double(f[static_cast<size_t>(3 + j)]);
      d.subject_row[{s.subject, s.session}] = d.subjects.size();
      d.subjects.push_back(s);
    }
  }
  if (d.metrics.empty() || d.subjects.empty()) throw DataError("dataset is empty");
  return d;
}

struct ModelOutput {
  std::string title;
  CvReport cv;
  PermutationReport perm_both;   // shuffle train and test
  PermutationReport perm_train;  // shuffle train only
  int observations{0};
  int subjects{0};
  bool references{false};
};

std::string stars(double p) {
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

std::string format_model_report(const ModelOutput& m) {
  std::ostringstream out;
  out << "# elastic-net interaction model: " << m.title << "\n";
  out << "alpha: " << fmt_double(m.cv.alpha) << "\n";
  out << "lambda: " << fmt_double(m.cv.lambda) << "\n";
  out << "rmse: " << fmt_double(m.cv.rmse) << "\n";
  out << "adjusted_r2: " << fmt_double(m.cv.adjusted_r2) << "\n";
  out << "model_p_shuffle_train_and_test: " << fmt_double(m.perm_both.p_model) << "\n";
  out << "model_p_shuffle_train_only: " << fmt_double(m.perm_train.p_model) << "\n";
  out << "permutations: " << m.perm_both.n_perm << "\n";
  out << "observations: " << m.observations << "\n";
  out << "subjects: " << m.subjects << "\n";
  out << "\n";
  out << "significance stars from the shuffle-train-and-test permutation null"
      << " (* p<0.05, ** p<0.01)\n\n";

  char buf[64];
  auto cell = [&](int col) {
    const double coef = m.cv.coef[col];
    if (coef == 0.0) return std::string("-");
    const double sd = m.cv.coef_sd[col];
    const double p = m.perm_both.coef_p[col];
    std::snprintf(buf, sizeof(buf), "%.3f%s (%.3f)", coef, stars(p).c_str(), sd);
    return std::string(buf);
  };

  out << "predictor,negative_bias,positive_bias,no_bias\n";
  std::snprintf(buf, sizeof(buf), "%.3f (%.3f)", m.cv.coef[0], m.cv.coef_sd[0]);
  out << "intercept," << buf << ",,\n";
  for (int j = 0; j < kFactorCount; ++j) {
    out << factor_label(j, m.references);
    for (int k = 0; k < 3; ++k) out << ',' << cell(1 + 9 * k + j);
    out << '\n';
  }
  return out.str();
}

ModelOutput fit_model(const std::string& title, const std::vector<FactorRow>& rows,
                      const Vector& y, const ExperimentConfig& cfg, std::uint64_t seed_tag,
                      bool references, int jobs) {
  std::set<int> subject_set;
  for (const FactorRow& r : rows) subject_set.insert(r.subject);
  if (subject_set.size() < 3) throw DataError("analyze: need >= 3 subjects for " + title);

  ModelOutput out;
  out.title = title;
  out.references = references;
  out.observations = static_cast<int>(rows.size());
  out.subjects = static_cast<int>(subject_set.size());

  const DesignMatrix design = build_interactions(rows, references);
  EnetCvOptions opts;
  opts.alpha_count = cfg.enet.alpha_count;
  opts.lambda_count = cfg.enet.lambda_count;
  out.cv = nested_loso_cv(design, y, opts);
  out.perm_both =
      permutation_test(design, y, out.cv.alpha, out.cv.lambda, PermScheme::ShuffleTrainAndTest,
                       cfg.enet.permutations, mix_seed(cfg.seed, {seed_tag, 1}), jobs);
  out.perm_train =
      permutation_test(design, y, out.cv.alpha, out.cv.lambda, PermScheme::ShuffleTrainOnly,
                       cfg.enet.permutations, mix_seed(cfg.seed, {seed_tag, 2}), jobs);
  return out;
}

struct BatteryTest {
  std::string name;
  TestResult result;
  bool ok{true};
};

void append_interaction_tests(const LoadedDataset& d, std::vector<BatteryTest>& tests) {
  // Median split per factor over subject-session units, then a nested-model
  // F-test for the bias x high/low interaction on run-level outcomes, with
  // group, session and split mains included.
  const std::array<int, 8> split_factors{0, 1, 2, 3, 4, 6, 7, 8};  // traits + states

  for (int f : split_factors) {
    std::vector<double> unit_values;
    std::map<std::pair<int, int>, bool> unit_high;
    for (const SubjectRow& s : d.subjects)
      unit_values.push_back(s.factors[static_cast<size_t>(f)]);
    const std::vector<bool> high = median_split(unit_values);
    for (size_t i = 0; i < d.subjects.size(); ++i)
      unit_high[{d.subjects[i].subject, d.subjects[i].session}] = high[i];

    for (const bool use_peak : {false, true}) {
      const int n = static_cast<int>(d.metrics.size());
      Vector y(n);
      Matrix full(n, 7), reduced(n, 5);
      for (int i = 0; i < n; ++i) {
        const MetricsRow& m = d.metrics[static_cast<size_t>(i)];
        y[i] = use_peak ? m.peak : m.average;
        const double g_pos = m.group == BiasKind::Positive ? 1.0 : 0.0;
        const double g_none = m.group == BiasKind::None ? 1.0 : 0.0;
        const double s2 = m.session >= 2 ? 1.0 : 0.0;
        const double h = unit_high.at({m.subject, m.session}) ? 1.0 : 0.0;
        reduced.row(i) << 1.0, g_pos, g_none, s2, h;
        full.row(i) << 1.0, g_pos, g_none, s2, h, g_pos * h, g_none * h;
      }
      BatteryTest t;
      t.name = std::string("interaction:") + (use_peak ? "peak" : "average") + ":bias_x_" +
               kFactorNames[static_cast<size_t>(f)];
      try {
        t.result = lm_ftest(y, full, reduced);
      } catch (const std::exception&) {
        t.ok = false;
      }
      tests.push_back(std::move(t));
    }
  }
}

void append_learning_rate_tests(const LoadedDataset& d, std::vector<BatteryTest>& tests) {
  // Subject-session units; CP split on the per-session calibration value.
  struct Unit {
    BiasKind group;
    int session;
    double lr_avg, lr_peak, cp;
  };
  std::vector<Unit> units;
  std::set<std::pair<int, int>> seen;
  std::map<std::pair<int, int>, std::vector<double>> peaks_by_unit;
  std::map<std::pair<int, int>, double> lr_by_unit, cp_by_unit;
  std::map<std::pair<int, int>, BiasKind> group_by_unit;
  for (const MetricsRow& m : d.metrics) {
    peaks_by_unit[{m.subject, m.session}].push_back(m.peak);
    lr_by_unit[{m.subject, m.session}] = m.learning_rate;
    cp_by_unit[{m.subject, m.session}] = m.calibration;
    group_by_unit[{m.subject, m.session}] = m.group;
  }
  for (const auto& [key, peaks] : peaks_by_unit) {
    if (peaks.size() < 2) continue;  // not enough runs for a slope
    Unit u;
    u.group = group_by_unit[key];
    u.session = key.second;
    u.lr_avg = lr_by_unit[key];
    u.lr_peak = learning_rate(peaks);
    u.cp = cp_by_unit[key];
    units.push_back(u);
  }

  std::vector<double> cps;
  for (const Unit& u : units) cps.push_back(u.cp);
  const std::vector<bool> cp_high = median_split(cps);

  const int n = static_cast<int>(units.size());
  for (const bool use_peak : {false, true}) {
    Vector y(n);
    Matrix base(n, 5);
    Matrix g_s(n, 2), cp_s(n, 1), all3(n, 7);
    for (int i = 0; i < n; ++i) {
      const Unit& u = units[static_cast<size_t>(i)];
      y[i] = use_peak ? u.lr_peak : u.lr_avg;
      const double g_pos = u.group == BiasKind::Positive ? 1.0 : 0.0;
      const double g_none = u.group == BiasKind::None ? 1.0 : 0.0;
      const double s2 = u.session >= 2 ? 1.0 : 0.0;
      const double h = cp_high[static_cast<size_t>(i)] ? 1.0 : 0.0;
      base.row(i) << 1.0, g_pos, g_none, s2, h;
      g_s.row(i) << g_pos * s2, g_none * s2;
      cp_s.row(i) << h * s2;
      all3.row(i) << g_pos * s2, g_none * s2, h * s2, g_pos * h, g_none * h, g_pos * h * s2,
          g_none * h * s2;
    }
    const std::string prefix = std::string("lr:") + (use_peak ? "peak" : "average") + ":";
    const auto run_test = [&](const std::string& name, const Matrix& full_extra,
                              const Matrix& reduced_extra) {
      BatteryTest t;
      t.name = prefix + name;
      Matrix full(n, base.cols() + full_extra.cols());
      full << base, full_extra;
      try {
        if (reduced_extra.cols() == 0) {
          t.result = lm_ftest(y, full, base);
        } else {
          Matrix reduced(n, base.cols() + reduced_extra.cols());
          reduced << base, reduced_extra;
          t.result = lm_ftest(y, full, reduced);
        }
      } catch (const std::exception&) {
        t.ok = false;
      }
      tests.push_back(std::move(t));
    };
    run_test("bias_x_session", g_s, Matrix(n, 0));
    run_test("cp_x_session", cp_s, Matrix(n, 0));
    {
      Matrix reduced_extra(n, 5);
      reduced_extra << all3.leftCols(5);
      run_test("cp_x_bias_x_session", all3, reduced_extra);
    }
  }
}

void append_correlation_tests(const LoadedDataset& d, std::vector<BatteryTest>& tests) {
  // Session-grain correlations between baselines and mean performance, and
  // between traits and the session-1 calibration value.
  std::map<std::pair<int, int>, std::pair<double, double>> perf_sums;
  std::map<std::pair<int, int>, int> perf_counts;
  for (const MetricsRow& m : d.metrics) {
    auto& sums = perf_sums[{m.subject, m.session}];
    sums.first += m.average;
    sums.second += m.peak;
    perf_counts[{m.subject, m.session}] += 1;
  }

  std::vector<double> avg, peak, flow, nasa, cp;
  for (const SubjectRow& s : d.subjects) {
    const auto key = std::make_pair(s.subject, s.session);
    if (!perf_counts.count(key)) continue;
    const double n = perf_counts[key];
    avg.push_back(perf_sums[key].first / n);
    peak.push_back(perf_sums[key].second / n);
    flow.push_back(s.factors[7]);
    nasa.push_back(s.factors[8]);
    cp.push_back(s.factors[6]);
  }
  const auto vec = [](const std::vector<double>& v) {
    return Eigen::Map<const Vector>(v.data(), static_cast<int>(v.size()));
  };
  const auto corr_test = [&](const std::string& name, const std::vector<double>& a,
                             const std::vector<double>& b) {
    BatteryTest t;
    t.name = "corr:" + name;
    try {
      t.result = pearson(vec(a), vec(b));
    } catch (const std::exception&) {
      t.ok = false;
    }
    tests.push_back(std::move(t));
  };
  corr_test("flow_baseline_vs_average", flow, avg);
  corr_test("flow_baseline_vs_peak", flow, peak);
  corr_test("nasa_baseline_vs_average", nasa, avg);
  corr_test("nasa_baseline_vs_peak", nasa, peak);
  corr_test("calib_baseline_vs_average", cp, avg);
  corr_test("calib_baseline_vs_peak", cp, peak);

  std::vector<double> anxiety, extroversion, cp_ref;
  for (const SubjectRow& s : d.subjects) {
    if (s.session != 1) continue;
    anxiety.push_back(s.factors[0]);
    extroversion.push_back(s.factors[1]);
    cp_ref.push_back(s.factors[6]);
  }
  corr_test("anxiety_vs_calib_reference", anxiety, cp_ref);
  corr_test("extroversion_vs_calib_reference", extroversion, cp_ref);
}

}  // namespace

void analyze_dir(const std::string& data_dir, const std::string& out_dir, int jobs) {
  const LoadedDataset d = load_dataset(data_dir);
  const ExperimentConfig& cfg = d.config;
  fs::create_directories(out_dir);

  // --- elastic-net interaction models -------------------------------------
  std::vector<FactorRow> perf_rows;
  std::vector<double> y_avg, y_peak;
  for (const MetricsRow& m : d.metrics) {
    const auto it = d.subject_row.find({m.subject, m.session});
    if (it == d.subject_row.end()) throw DataError("analyze: metrics row without factors");
    FactorRow row;
    row.subject = m.subject;
    row.group = m.group;
    row.factors = d.subjects[it->second].factors;
    perf_rows.push_back(row);
    y_avg.push_back(m.average);
    y_peak.push_back(m.peak);
  }
  const auto vec = [](const std::vector<double>& v) {
    return Eigen::Map<const Vector>(v.data(), static_cast<int>(v.size()));
  };

  const ModelOutput m_avg =
      fit_model("average performance", perf_rows, vec(y_avg), cfg, 0xa001, false, jobs);
  write_text_file((fs::path(out_dir) / "model_performance_average.txt").string(),
                  format_model_report(m_avg));
  const ModelOutput m_peak =
      fit_model("peak performance", perf_rows, vec(y_peak), cfg, 0xa002, false, jobs);
  write_text_file((fs::path(out_dir) / "model_performance_peak.txt").string(),
                  format_model_report(m_peak));

  if (cfg.sessions == 2) {
    // Progress rows: one per subject, factors from session 1 (references).
    std::map<int, std::array<double, 2>> avg_mean, peak_mean;
    std::map<int, std::array<int, 2>> counts;
    for (const MetricsRow& m : d.metrics) {
      if (m.session < 1 || m.session > 2) continue;
      avg_mean[m.subject][static_cast<size_t>(m.session - 1)] += m.average;
      peak_mean[m.subject][static_cast<size_t>(m.session - 1)] += m.peak;
      counts[m.subject][static_cast<size_t>(m.session - 1)] += 1;
    }
    std::vector<FactorRow> prog_rows;
    std::vector<double> y_prog_avg, y_prog_peak;
    for (const auto& [subject, c] : counts) {
      if (c[0] == 0 || c[1] == 0) continue;
      const auto it = d.subject_row.find({subject, 1});
      if (it == d.subject_row.end()) continue;
      FactorRow row;
      row.subject = subject;
      row.group = d.subjects[it->second].group;
      row.factors = d.subjects[it->second].factors;
      prog_rows.push_back(row);
      y_prog_avg.push_back(avg_mean[subject][1] / c[1] - avg_mean[subject][0] / c[0]);
      y_prog_peak.push_back(peak_mean[subject][1] / c[1] - peak_mean[subject][0] / c[0]);
    }
    const ModelOutput m_prog_avg =
        fit_model("average progress", prog_rows, vec(y_prog_avg), cfg, 0xa003, true, jobs);
    write_text_file((fs::path(out_dir) / "model_progress_average.txt").string(),
                    format_model_report(m_prog_avg));
    const ModelOutput m_prog_peak =
        fit_model("peak progress", prog_rows, vec(y_prog_peak), cfg, 0xa004, true, jobs);
    write_text_file((fs::path(out_dir) / "model_progress_peak.txt").string(),
                    format_model_report(m_prog_peak));
  }

  // --- classical test battery with FDR correction -------------------------
  std::vector<BatteryTest> tests;
  for (int f = 0; f < kFactorCount; ++f) {
    BatteryTest t;
    t.name = std::string("balance_anova:") + kFactorNames[static_cast<size_t>(f)];
    std::vector<std::vector<double>> groups(3);
    for (const SubjectRow& s : d.subjects) {
      if (s.session != 1) continue;
      groups[static_cast<size_t>(group_block(s.group))].push_back(
          s.factors[static_cast<size_t>(f)]);
    }
    try {
      t.result = oneway_anova(groups);
    } catch (const std::exception&) {
      t.ok = false;
    }
    tests.push_back(std::move(t));
  }
  append_interaction_tests(d, tests);
  append_learning_rate_tests(d, tests);
  append_correlation_tests(d, tests);

  std::vector<double> valid_p;
  std::vector<size_t> valid_idx;
  for (size_t i = 0; i < tests.size(); ++i)
    if (tests[i].ok && std::isfinite(tests[i].result.p)) {
      valid_p.push_back(tests[i].result.p);
      valid_idx.push_back(i);
    }
  const FdrResult fdr = fdr_bh(valid_p, 0.05);

  {
    std::string out = "test,effect,statistic,df1,df2,p,p_adjusted,reject\n";
    std::vector<double> adjusted(tests.size(), std::numeric_limits<double>::quiet_NaN());
    std::vector<bool> reject(tests.size(), false);
    for (size_t i = 0; i < valid_idx.size(); ++i) {
      adjusted[valid_idx[i]] = fdr.adjusted[i];
      reject[valid_idx[i]] = fdr.reject[i];
    }
    for (size_t i = 0; i < tests.size(); ++i) {
      const BatteryTest& t = tests[i];
      out += t.name + ',' + (t.ok ? std::string(1, t.result.effect) : "x") + ',' +
             (t.ok ? fmt_double(t.result.statistic) : "nan") + ',' +
             (t.ok ? fmt_double(t.result.df1) : "nan") + ',' +
             (t.ok ? fmt_double(t.result.df2) : "nan") + ',' +
             (t.ok ? fmt_double(t.result.p) : "nan") + ',' + fmt_double(adjusted[i]) + ',' +
             (reject[i] ? "1" : "0") + '\n';
    }
    write_text_file((fs::path(out_dir) / "tests_fdr.csv").string(), out);
  }

  // --- plot data -----------------------------------------------------------
  write_text_file((fs::path(out_dir) / "bias_curves.csv").string(),
                  bias_plot_table(cfg.params.bias_k));

  {
    std::map<std::tuple<int, int, int>, std::pair<double, double>> sums;  // (group, sess, run)
    std::map<std::tuple<int, int, int>, int> counts;
    for (const MetricsRow& m : d.metrics) {
      const auto key = std::make_tuple(group_block(m.group), m.session, m.run);
      sums[key].first += m.average;
      sums[key].second += m.peak;
      counts[key] += 1;
    }
    std::string out = "group,session,run,mean_average,mean_peak\n";
    for (const auto& [key, sum] : sums) {
      const auto& [g, sess, run] = key;
      const double n = counts[key];
      out += std::string(bias_name(kGroupOrder[static_cast<size_t>(g)])) + ',' +
             std::to_string(sess) + ',' + std::to_string(run) + ',' +
             fmt_double(sum.first / n) + ',' + fmt_double(sum.second / n) + '\n';
    }
    write_text_file((fs::path(out_dir) / "accuracy_by_run.csv").string(), out);
  }

  {
    // Per-offset accuracy curves from the window records (test runs only).
    const std::string path = (fs::path(data_dir) / "windows.csv").string();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("windows.csv not found: " + path);
    std::string line;
    if (!std::getline(in, line) || split_csv_line(line) != split_csv_line(kWindowsHeader))
      throw DataError("windows.csv: unexpected header");

    std::map<int, BiasKind> subject_group;
    for (const SubjectRow& s : d.subjects) subject_group[s.subject] = s.group;

    std::map<std::pair<int, int>, std::pair<double, double>> acc;  // (group, tick)
    const int calib_runs = cfg.params.calibration_runs;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto f = split_csv_line(line);
      if (f.size() != 12) throw DataError("windows.csv: malformed row");
      const int run = std::stoi(f[2]);
      if (run <= calib_runs) continue;
      const int subject = std::stoi(f[0]);
      const int tick = std::stoi(f[4]);
      auto& slot = acc[{group_block(subject_group.at(subject)), tick}];
      slot.first += f[10] == "1" ? 1.0 : 0.0;
      slot.second += 1.0;
    }
    std::string out = "group,tick,accuracy\n";
    for (const auto& [key, sums] : acc)
      out += std::string(bias_name(kGroupOrder[static_cast<size_t>(key.first)])) + ',' +
             std::to_string(key.second) + ',' + fmt_double(sums.first / sums.second) + '\n';
    write_text_file((fs::path(out_dir) / "offset_accuracy.csv").string(), out);
  }
}

}  // namespace bfb
