#include "bfb/harness.hpp"
#include "bfb/metrics.hpp"
#include "bfb/stream.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

namespace {

using namespace bfb;

ExperimentConfig resolve_config(const std::string& config_path) {
  std::string path = config_path;
  if (path.empty()) {
    if (const char* env = std::getenv("BFB_CONFIG")) path = env;
  }
  if (path.empty()) return ExperimentConfig{};
  return load_config(path);
}

// Continuous alternating-class MI signal for the streaming demo.
Matrix demo_samples(const ExperimentConfig& cfg, double seconds) {
  SubjectProfile profile;
  profile.seed = mix_seed(cfg.seed, {0x57ea8ull});
  profile.skill = 0.35;
  Rng rng = make_rng(profile.seed, {1});
  const int trials = std::max(1, static_cast<int>(seconds / kTrialSeconds) + 1);
  const int total = static_cast<int>(seconds * cfg.params.sample_rate);
  Matrix out(kEegChannels, total);
  int written = 0;
  for (int t = 0; t < trials && written < total; ++t) {
    const MiClass cls = t % 2 == 0 ? MiClass::Left : MiClass::Right;
    const SampleBlock epoch = synth_eeg_epoch(profile, cls, rng, cfg.params);
    const int take = std::min(epoch.samples(), total - written);
    out.middleCols(written, take) = epoch.data.leftCols(take);
    written += take;
  }
  return out;
}

// Trains a session chain on quick synthetic calibration data so the player
// side can decode a live stream.
TrainedChain demo_chain(const ExperimentConfig& cfg) {
  SubjectProfile profile;
  profile.seed = mix_seed(cfg.seed, {0x57ea8ull});
  profile.skill = 0.35;
  const SessionRecord session = run_session(profile, 0, cfg.params);
  return session.chain;
}

int run(int argc, char** argv) {
  CLI::App app{"biased-feedback MI-BCI simulation and analysis toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed_override = 0;
  bool seed_set = false;
  std::string out_override;
  int jobs = 1;
  app.add_option("--config", config_path, "config JSON path (or $BFB_CONFIG)");
  app.add_option("--seed", seed_override, "override config seed")->each([&](const std::string&) {
    seed_set = true;
  });
  app.add_option("--out", out_override, "override output directory/file");
  app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);

  auto* sim_cmd = app.add_subcommand("simulate", "run the experiment and write the dataset");

  std::string data_dir;
  auto* analyze_cmd = app.add_subcommand("analyze", "fit models and tests on a dataset");
  analyze_cmd->add_option("data", data_dir, "dataset directory (default: config output_dir)");

  double k = -1.0;
  auto* bias_cmd = app.add_subcommand("bias-plot", "emit the bias transfer curves");
  bias_cmd->add_option("--k", k, "bias shift in [0,1) (default: config bias_k)");

  int port = -1;
  double seconds = 10.0;
  auto* serve_cmd = app.add_subcommand("stream-serve", "serve framed EEG samples over TCP");
  serve_cmd->add_option("--port", port, "TCP port (default: config stream.port)");
  serve_cmd->add_option("--seconds", seconds, "signal duration to stream");

  std::string host;
  auto* play_cmd = app.add_subcommand("stream-play", "subscribe and decode a sample stream");
  play_cmd->add_option("--host", host, "server host (default: config stream.host)");
  play_cmd->add_option("--port", port, "TCP port (default: config stream.port)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  ExperimentConfig cfg = resolve_config(config_path);
  if (seed_set) cfg.seed = seed_override;

  if (sim_cmd->parsed()) {
    const std::string out = out_override.empty() ? cfg.output_dir : out_override;
    simulate_to_dir(cfg, out, jobs);
    std::cout << "dataset written to " << out << "\n";
    return 0;
  }
  if (analyze_cmd->parsed()) {
    const std::string dir = data_dir.empty() ? cfg.output_dir : data_dir;
    const std::string out =
        out_override.empty() ? (std::filesystem::path(dir) / "reports").string() : out_override;
    analyze_dir(dir, out, jobs);
    std::cout << "reports written to " << out << "\n";
    return 0;
  }
  if (bias_cmd->parsed()) {
    const double kk = k >= 0.0 ? k : cfg.params.bias_k;
    const std::string table = bias_plot_table(kk);
    if (out_override.empty()) {
      std::cout << table;
    } else {
      std::ofstream f(out_override, std::ios::binary | std::ios::trunc);
      if (!f) throw DataError("cannot write " + out_override);
      f << table;
      std::cout << "bias curves written to " << out_override << "\n";
    }
    return 0;
  }
  if (serve_cmd->parsed()) {
    const int p = port >= 0 ? port : cfg.stream.port;
    stream::SampleServer server(static_cast<std::uint16_t>(p));
    std::cout << "serving " << seconds << " s of samples on port " << server.port() << "\n";
    stream::SampleServer::Options options;
    options.rate = cfg.params.sample_rate;
    server.run(demo_samples(cfg, seconds), options);
    std::cout << "stream finished\n";
    return 0;
  }
  if (play_cmd->parsed()) {
    const int p = port >= 0 ? port : cfg.stream.port;
    const std::string h = host.empty() ? cfg.stream.host : host;
    std::cout << "training decode chain...\n";
    const TrainedChain chain = demo_chain(cfg);
    stream::DecodePipeline pipeline(chain.coeffs, chain.bank, chain.model,
                                    BiasSpec{BiasKind::None, cfg.params.bias_k}, RecenterState{},
                                    cfg.params.sample_rate);
    const stream::SubscribeResult result =
        stream::subscribe_and_decode(h, static_cast<std::uint16_t>(p), pipeline);
    std::cout << "received " << result.sample_frames << " sample frames, emitted "
              << result.controls.size() << " control frames"
              << (result.clean_eos ? "" : " (partial frame discarded at EOS)") << "\n";
    if (!out_override.empty()) {
      std::ofstream f(out_override, std::ios::binary | std::ios::trunc);
      if (!f) throw DataError("cannot write " + out_override);
      f << "timestamp_us,raw,recentered,biased,angle\n";
      for (const stream::ControlFrame& c : result.controls)
        f << c.timestamp_us << ',' << c.raw << ',' << c.recentered << ',' << c.biased << ','
          << c.angle << "\n";
      std::cout << "control trace written to " << out_override << "\n";
    }
    return 0;
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const bfb::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const bfb::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}
