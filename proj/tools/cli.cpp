#include "cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <zlib.h>

#include "plot.hpp"
#include "riskid/attention.hpp"
#include "riskid/episode_io.hpp"
#include "riskid/errors.hpp"
#include "riskid/fusion.hpp"
#include "riskid/intervene.hpp"
#include "riskid/metrics.hpp"
#include "riskid/synthgen.hpp"
#include "riskid/text_format.hpp"
#include "riskid/train.hpp"

namespace fs = std::filesystem;

namespace riskid::cli {
namespace {

constexpr const char* kArtifactVersion = "0.1.0";

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
  bool verbose = false;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

KeyValueConfig load_config(const Globals& g) { return g.config.empty() ? KeyValueConfig{} : KeyValueConfig::load(g.config); }

fs::path out_dir(const Globals& g) {
  std::string dir = g.out;
  if (dir.empty()) {
    const char* env = std::getenv(kOutEnv);
    dir = env && *env ? env : ".";
  }
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw InvalidInput("cannot create output directory '" + dir + "'");
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInput("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw InvalidInput("failed writing '" + path.string() + "'");
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string hex_crc(const std::string& text) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(text.data()), static_cast<uInt>(text.size()));
  std::ostringstream s;
  s << std::hex << std::setw(8) << std::setfill('0') << crc;
  return s.str();
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// The only file carrying a timestamp.
void write_manifest(const fs::path& dir, const std::string& command, const std::string& config_text,
                    std::uint64_t seed, const std::vector<std::string>& inputs, const std::vector<fs::path>& outputs) {
  Json j;
  j["command"] = command;
  j["config_hash"] = hex_crc(config_text);
  j["seed"] = seed;
  j["inputs"] = inputs;
  Json outs = Json::array();
  for (const auto& p : outputs) outs.push_back(p.string());
  j["outputs"] = outs;
  j["artifact_version"] = kArtifactVersion;
  j["timestamp"] = utc_now();
  write_text(dir / ("manifest_" + command + ".json"), j.dump(2) + "\n");
}

attention::AttentionTrainConfig attention_recipe(const KeyValueConfig& kv, std::uint64_t seed) {
  attention::AttentionTrainConfig a;
  a.epochs = static_cast<int>(kv.get_int("attention.epochs", a.epochs));
  a.batch_size = static_cast<int>(kv.get_int("attention.batch_size", a.batch_size));
  a.learning_rate = kv.get_double("attention.learning_rate", a.learning_rate);
  a.momentum = kv.get_double("attention.momentum", a.momentum);
  a.seed = static_cast<std::uint64_t>(kv.get_int("attention.seed", static_cast<long long>(seed)));
  a.validate();
  return a;
}

int cmd_gen(const Globals& g, int episodes, double split_ratio, std::ostream& out) {
  if (episodes < 1) throw UsageError("--episodes must be >= 1");
  const KeyValueConfig kv = load_config(g);
  synth::WorldConfig world = synth::WorldConfig::from_kv(kv);
  if (g.seed) world.seed = *g.seed;
  const fs::path dir = out_dir(g);
  const std::vector<Episode> eps = synth::generate(world, episodes);
  std::vector<fs::path> outputs{dir / "episodes.jsonl"};
  write_episodes(outputs.back().string(), eps);
  if (split_ratio > 0.0) {
    const synth::Split parts = synth::split(eps, split_ratio, world.seed);
    for (const auto& w : parts.warnings) out << "warning: " << w << '\n';
    outputs.push_back(dir / "train.jsonl");
    write_episodes(outputs.back().string(), parts.train);
    outputs.push_back(dir / "test.jsonl");
    write_episodes(outputs.back().string(), parts.test);
  }
  KeyValueConfig snapshot;
  world.write(snapshot);
  write_manifest(dir, "gen", snapshot.dump(), world.seed, {}, outputs);
  if (g.verbose) out << "wrote " << eps.size() << " episodes to " << outputs.front().string() << '\n';
  return kOk;
}

int cmd_train(const Globals& g, const std::string& data, const std::string& resume_path,
              std::optional<int> iterations, std::ostream& out) {
  const KeyValueConfig kv = load_config(g);
  TrainConfig config = TrainConfig::from_kv(kv);
  if (g.seed) config.seed = *g.seed;
  if (iterations) config.iterations = *iterations;
  config.validate();
  const std::vector<Episode> episodes = synth::ingest_raid(data);
  const fs::path dir = out_dir(g);

  std::optional<Checkpoint> resume;
  if (!resume_path.empty()) resume = load_checkpoint(resume_path, &config.model);
  TrainResult result = train(config, episodes, resume, [&](const LossRecord& r) {
    if (g.verbose) {
      out << "iter " << r.iteration << " response " << fixed(r.response, 4) << " action " << fixed(r.action, 4)
          << " total " << fixed(r.total, 4) << '\n';
    }
  });

  // The attention head follows its own recipe from a fresh, seeded start so a
  // resumed run ends with the same head as an uninterrupted one.
  const auto samples = attention::attention_samples(episodes);
  if (!samples.empty()) {
    ParameterSet fresh = init_model_params(config.model, config.seed);
    for (auto& [name, m] : result.checkpoint.params) {
      if (name.rfind("attention.", 0) == 0) m = fresh.at(name);
    }
    attention::train_attention(result.checkpoint.params, samples, attention_recipe(kv, config.seed));
  }

  const fs::path ckpt_path = dir / "checkpoint.bin";
  save_checkpoint(result.checkpoint, ckpt_path.string());
  std::vector<LossRecord> losses = result.losses;
  std::ostringstream csv;
  write_loss_csv(csv, losses);
  const fs::path loss_path = dir / "loss.csv";
  write_text(loss_path, csv.str());
  std::vector<std::string> inputs{data};
  if (!resume_path.empty()) inputs.push_back(resume_path);
  write_manifest(dir, "train", config.to_kv().dump(), config.seed, inputs, {ckpt_path, loss_path});
  if (g.verbose) out << "checkpoint at iteration " << result.checkpoint.iteration << " -> " << ckpt_path.string() << '\n';
  return kOk;
}

void print_summary(std::ostream& out, const std::vector<metrics::MethodScores>& methods) {
  out << std::left << std::setw(10) << "method";
  for (RiskSituation s : kAllSituations) out << ' ' << std::setw(10) << synth::situation_slug(s).substr(0, 10);
  out << ' ' << "Avg mAcc" << '\n';
  for (const auto& m : methods) {
    out << std::left << std::setw(10) << m.method;
    for (RiskSituation s : kAllSituations) {
      auto it = m.scores.per_situation.find(s);
      out << ' ' << std::setw(10) << (it == m.scores.per_situation.end() || it->second.count == 0 ? "-" : fixed(it->second.macc, 2));
    }
    out << ' ' << fixed(m.scores.average.macc, 2) << '\n';
  }
}

int cmd_eval(const Globals& g, const std::string& ckpt_path, const std::string& data, const std::string& baseline,
             std::ostream& out) {
  if (!baseline.empty() && baseline != "random") throw UsageError("--baseline accepts only 'random'");
  const KeyValueConfig kv = load_config(g);
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  if (!g.config.empty()) {
    const TrainConfig expected = TrainConfig::from_kv(kv);
    if (!(expected.model == ckpt.config.model)) {
      throw ConfigError("checkpoint architecture does not match the configuration");
    }
  }
  const std::vector<Episode> episodes = synth::ingest_raid(data);
  const std::uint64_t seed = g.seed.value_or(static_cast<std::uint64_t>(kv.get_int("eval.seed", 0)));
  const EvalReport report = evaluate(ckpt, episodes, seed);
  if (report.scored == 0) throw InvalidInput("eval: no Alter episodes with a ground-truth risk object");

  std::vector<metrics::MethodScores> methods{{"model", report.model}};
  if (baseline == "random") methods.push_back({"random", report.random});
  const fs::path dir = out_dir(g);
  std::ostringstream macc_csv;
  metrics::write_macc_csv(macc_csv, methods);
  const fs::path macc_path = dir / "macc.csv";
  write_text(macc_path, macc_csv.str());

  std::vector<metrics::ApRow> ap_rows;
  ap_rows.push_back({"model", report.action_ap, report.response_ap, report.model.average.macc});
  if (baseline == "random") ap_rows.push_back({"random", {}, {}, report.random.average.macc});
  std::ostringstream ap_csv;
  metrics::write_ap_csv(ap_csv, ap_rows);
  const fs::path ap_path = dir / "ap.csv";
  write_text(ap_path, ap_csv.str());

  print_summary(out, methods);
  out << "risk object accuracy " << fixed(100.0 * report.id_accuracy, 2) << "% over " << report.scored
      << " episodes (random " << fixed(100.0 * report.random_id_accuracy, 2) << "%)\n";
  write_manifest(dir, "eval", ckpt.config.to_kv().dump(), seed, {ckpt_path, data}, {macc_path, ap_path});
  return kOk;
}

int cmd_infer(const Globals& g, const std::string& ckpt_path, const std::string& data, int index, double beta,
              std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const std::vector<Episode> episodes = synth::ingest_raid(data);
  if (index < 0 || index >= static_cast<int>(episodes.size())) {
    throw InvalidInput("episode index " + std::to_string(index) + " out of range (file has " +
                       std::to_string(episodes.size()) + ")");
  }
  const Episode& e = episodes[static_cast<std::size_t>(index)];
  const InterventionResult result = identify_risk_object(e, ckpt.params, ckpt.config.model);
  std::map<int, double> looks;
  for (const auto& [id, p] : result.continue_confidence) {
    const Frame& last = e.last_frame();
    const AgentNode& node = last.nodes[find_slot(last, id)];
    looks[id] = (node.cls == AgentClass::kPerson && node.face) ? attention::looking_score(e, id, ckpt.params)
                                                                : fusion::kNeutralLook;
  }
  const auto ranking = fusion::rank_agents(result, looks, beta);
  Json j = intervention_to_json(result, index);
  j["ranking"] = fusion::ranking_to_json(ranking);
  Json persons = Json::object();
  for (const auto& r : ranking) {
    const Frame& last = e.last_frame();
    if (last.nodes[find_slot(last, r.track_id)].cls == AgentClass::kPerson) persons[std::to_string(r.track_id)] = r.s_look;
  }
  j["s_look"] = persons;

  const fs::path dir = out_dir(g);
  const fs::path path = dir / "infer.json";
  write_text(path, j.dump(2) + "\n");
  write_manifest(dir, "infer", ckpt.config.to_kv().dump(), g.seed.value_or(0), {ckpt_path, data}, {path});
  out << "risk object: track " << result.chosen_track_id << " (continue confidence "
      << fixed(result.continue_confidence.at(result.chosen_track_id), 4) << ")\n";
  return kOk;
}

int cmd_plot(const Globals& g, const std::string& input, std::ostream& out) {
  const std::string text = read_text(input);
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw InvalidInput("plot: '" + input + "' is empty");
  const fs::path dir = out_dir(g);
  fs::path path;
  if (fs::path(input).extension() == ".json") {
    Json j;
    try {
      j = Json::parse(text);
    } catch (const Json::exception& e) {
      throw ParseError(std::string("plot: ") + e.what());
    }
    path = dir / (fs::path(input).stem().string() + "_risk.svg");
    write_text(path, plot::risk_chart(j));
  } else {
    path = dir / (fs::path(input).stem().string() + ".svg");
    write_text(path, plot::line_chart(fs::path(input).stem().string(), plot::series_from_csv(text)));
  }
  write_manifest(dir, "plot", "", g.seed.value_or(0), {input}, {path});
  if (g.verbose) out << "wrote " << path.string() << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Risk-object identification toolkit", "riskid"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--config", g.config, "Key-value configuration file");
  app.add_option("--out", g.out, std::string("Output directory (default $") + kOutEnv + " or .)");
  app.add_flag("-v,--verbose", g.verbose, "Progress output");

  int episodes = 0;
  double split_ratio = 0.0;
  auto* gen = app.add_subcommand("gen", "Generate synthetic episodes");
  gen->add_option("--episodes", episodes, "Number of episodes")->required();
  gen->add_option("--split", split_ratio, "Also write a stratified train/test split with this train ratio");

  std::string data, resume, ckpt, baseline;
  std::optional<int> iterations;
  auto* tr = app.add_subcommand("train", "Train the risk-object model");
  tr->add_option("--data", data, "Training episodes (JSONL)")->required();
  tr->add_option("--resume", resume, "Continue from a checkpoint");
  tr->add_option("--iterations", iterations, "Override train.iterations");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  ev->add_option("--data", data, "Test episodes (JSONL)")->required();
  ev->add_option("--baseline", baseline, "Add the 'random' selection rows");

  int index = 0;
  double beta = 1.0;
  auto* inf = app.add_subcommand("infer", "Identify the risk object of one episode");
  inf->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  inf->add_option("--data", data, "Episode file (JSONL)")->required();
  inf->add_option("--index", index, "Episode line (0-based)");
  inf->add_option("--beta", beta, "Attention weight in the joint risk");

  std::string input;
  auto* pl = app.add_subcommand("plot", "Render an inference JSON or a loss CSV to SVG");
  pl->add_option("--input", input, "infer.json or loss.csv")->required();

  std::vector<std::string> argv_store{"riskid"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_gen(g, episodes, split_ratio, out);
    if (*tr) return cmd_train(g, data, resume, iterations, out);
    if (*ev) return cmd_eval(g, ckpt, data, baseline, out);
    if (*inf) return cmd_infer(g, ckpt, data, index, beta, out);
    if (*pl) return cmd_plot(g, input, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const DivergenceError& e) {
    err << "training diverged: " << e.what() << '\n';
    return kDiverged;
  } catch (const DegenerateScene& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const Json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace riskid::cli
