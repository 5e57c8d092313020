#include "riskid/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include <zlib.h>

#include "riskid/actionnet.hpp"
#include "riskid/episode_io.hpp"
#include "riskid/errors.hpp"
#include "riskid/text_format.hpp"

namespace riskid {
namespace {

constexpr char kMagic[8] = {'R', 'I', 'S', 'K', 'I', 'D', 'C', 'K'};

// Parameters owned by the response/action objective; the attention head has
// its own recipe and is left untouched here.
bool optimised(const std::string& name) { return name.rfind("attention.", 0) != 0; }

std::string num(double v) { return exact(v); }

template <typename T>
void put(std::string& out, const T& value) {
  const char* p = reinterpret_cast<const char*>(&value);
  out.append(p, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw CorruptArchive("checkpoint is truncated");
  T value;
  std::memcpy(&value, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

Json tensor_index(const ParameterSet& set) {
  Json arr = Json::array();
  for (const auto& [name, m] : set) arr.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  return arr;
}

void put_tensors(std::string& out, const ParameterSet& set) {
  for (const auto& [name, m] : set) {
    // Column-major, as stored by Eigen.
    out.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double));
  }
}

ParameterSet take_tensors(const std::string& in, std::size_t& pos, const Json& index) {
  ParameterSet set;
  for (const auto& entry : index) {
    const std::string name = entry.at("name").get<std::string>();
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();
    if (rows < 0 || cols < 0) throw CorruptArchive("checkpoint tensor '" + name + "' has a negative shape");
    const std::size_t bytes = static_cast<std::size_t>(rows * cols) * sizeof(double);
    if (pos + bytes > in.size()) throw CorruptArchive("checkpoint is truncated inside tensor '" + name + "'");
    Matrix m(rows, cols);
    std::memcpy(m.data(), in.data() + pos, bytes);
    pos += bytes;
    set.add(name, std::move(m));
  }
  return set;
}

std::uint32_t crc_of(const std::string& bytes, std::size_t length) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(length));
  return static_cast<std::uint32_t>(crc);
}

template <typename F>
void parallel_for(std::size_t count, F&& body) {
  const std::size_t workers = std::max<std::size_t>(
      1, std::min<std::size_t>(count, static_cast<std::size_t>(std::thread::hardware_concurrency())));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < count; i += workers) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.iterations = 2000;
  return c;
}

void TrainConfig::validate() const {
  if (iterations < 0) throw ConfigError("train.iterations must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train betas must lie in [0,1)");
  if (!(epsilon > 0.0)) throw ConfigError("train.epsilon must be > 0");
  if (z < 1) throw ConfigError("train.z must be >= 1");
  if (n_agents < 1) throw ConfigError("train.n_agents must be >= 1");
  if (!(response_weight >= 0.0) || !(action_weight >= 0.0)) throw ConfigError("loss weights must be >= 0");
  if (eval_every < 1) throw ConfigError("train.eval_every must be >= 1");
  model.validate();
  if (model.use_action_branch && model.p_e != z) {
    throw ConfigError("train.z=" + std::to_string(z) + " must equal model.p_e=" + std::to_string(model.p_e));
  }
}

TrainConfig TrainConfig::from_kv(const KeyValueConfig& kv) {
  TrainConfig c;
  c.iterations = static_cast<int>(kv.get_int("train.iterations", c.iterations));
  c.batch_size = static_cast<int>(kv.get_int("train.batch_size", c.batch_size));
  c.learning_rate = kv.get_double("train.learning_rate", c.learning_rate);
  c.weight_decay = kv.get_double("train.weight_decay", c.weight_decay);
  c.beta1 = kv.get_double("train.beta1", c.beta1);
  c.beta2 = kv.get_double("train.beta2", c.beta2);
  c.epsilon = kv.get_double("train.epsilon", c.epsilon);
  c.z = static_cast<int>(kv.get_int("train.z", c.z));
  c.n_agents = static_cast<int>(kv.get_int("train.n_agents", c.n_agents));
  c.seed = static_cast<std::uint64_t>(kv.get_int("train.seed", static_cast<long long>(c.seed)));
  c.response_weight = kv.get_double("train.response_weight", c.response_weight);
  c.action_weight = kv.get_double("train.action_weight", c.action_weight);
  c.eval_every = static_cast<int>(kv.get_int("train.eval_every", c.eval_every));
  // p_e and p_d default to z unless set explicitly.
  c.model.p_e = c.z;
  c.model.p_d = c.z;
  c.model.read(kv);
  c.validate();
  return c;
}

KeyValueConfig TrainConfig::to_kv() const {
  KeyValueConfig kv;
  kv.set("train.iterations", std::to_string(iterations));
  kv.set("train.batch_size", std::to_string(batch_size));
  kv.set("train.learning_rate", num(learning_rate));
  kv.set("train.weight_decay", num(weight_decay));
  kv.set("train.beta1", num(beta1));
  kv.set("train.beta2", num(beta2));
  kv.set("train.epsilon", num(epsilon));
  kv.set("train.z", std::to_string(z));
  kv.set("train.n_agents", std::to_string(n_agents));
  kv.set("train.seed", std::to_string(seed));
  kv.set("train.response_weight", num(response_weight));
  kv.set("train.action_weight", num(action_weight));
  kv.set("train.eval_every", std::to_string(eval_every));
  model.write(kv);
  return kv;
}

bool Checkpoint::operator==(const Checkpoint& other) const {
  return config.to_kv().dump() == other.config.to_kv().dump() && iteration == other.iteration &&
         params == other.params && adam_m == other.adam_m && adam_v == other.adam_v;
}

Checkpoint initial_checkpoint(const TrainConfig& config) {
  config.validate();
  Checkpoint c;
  c.config = config;
  c.params = init_model_params(config.model, config.seed);
  return c;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  Json header;
  header["config"] = ckpt.config.to_kv().values();
  header["iteration"] = ckpt.iteration;
  header["params"] = tensor_index(ckpt.params);
  header["adam_m"] = tensor_index(ckpt.adam_m);
  header["adam_v"] = tensor_index(ckpt.adam_v);
  const std::string text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put(out, kCheckpointVersion);
  put(out, static_cast<std::uint64_t>(text.size()));
  out += text;
  put_tensors(out, ckpt.params);
  put_tensors(out, ckpt.adam_m);
  put_tensors(out, ckpt.adam_v);
  put(out, crc_of(out, out.size()));
  return out;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInput("cannot write checkpoint '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InvalidInput("failed writing checkpoint '" + path + "'");
}

Checkpoint deserialize_checkpoint(const std::string& bytes, const ModelConfig* expected) {
  if (bytes.size() < sizeof(kMagic) + sizeof(std::uint32_t) * 2 + sizeof(std::uint64_t) ||
      std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CorruptArchive("not a checkpoint archive");
  }
  std::size_t pos = sizeof(kMagic);
  const auto version = take<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) {
    throw CorruptArchive("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                         std::to_string(kCheckpointVersion) + ")");
  }
  const std::size_t body = bytes.size() - sizeof(std::uint32_t);
  std::size_t crc_pos = body;
  if (take<std::uint32_t>(bytes, crc_pos) != crc_of(bytes, body)) {
    throw CorruptArchive("checkpoint checksum mismatch (truncated or damaged file)");
  }
  const auto header_len = take<std::uint64_t>(bytes, pos);
  if (pos + header_len > body) throw CorruptArchive("checkpoint header is truncated");
  Json header;
  try {
    header = Json::parse(bytes.substr(pos, header_len));
  } catch (const Json::exception& e) {
    throw CorruptArchive(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  pos += header_len;

  Checkpoint c;
  try {
    KeyValueConfig kv;
    for (const auto& [k, v] : header.at("config").items()) kv.set(k, v.get<std::string>());
    c.config = TrainConfig::from_kv(kv);
    c.iteration = header.at("iteration").get<std::int64_t>();
    const std::string data = bytes.substr(0, body);
    c.params = take_tensors(data, pos, header.at("params"));
    c.adam_m = take_tensors(data, pos, header.at("adam_m"));
    c.adam_v = take_tensors(data, pos, header.at("adam_v"));
  } catch (const Json::exception& e) {
    throw CorruptArchive(std::string("checkpoint header is malformed: ") + e.what());
  }
  if (pos != body) throw CorruptArchive("checkpoint has trailing bytes");
  check_shapes(c.params, expected ? *expected : c.config.model);
  return c;
}

Checkpoint load_checkpoint(const std::string& path, const ModelConfig* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str(), expected);
}

void check_shapes(const ParameterSet& params, const ModelConfig& cfg) {
  const ParameterSet reference = init_model_params(cfg, 0);
  for (const auto& [name, ref] : reference) {
    if (!params.contains(name)) throw ShapeError("checkpoint lacks tensor '" + name + "'");
    const Matrix& m = params.at(name);
    if (m.rows() != ref.rows() || m.cols() != ref.cols()) {
      throw ShapeError("tensor '" + name + "' is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                       " but the configuration expects " + std::to_string(ref.rows()) + "x" +
                       std::to_string(ref.cols()));
    }
  }
  for (const auto& [name, m] : params) {
    if (!reference.contains(name)) throw ShapeError("checkpoint has unexpected tensor '" + name + "'");
  }
}

void write_loss_csv(std::ostream& os, const std::vector<LossRecord>& records) {
  os << "iteration,response_loss,action_loss,total\n";
  for (const auto& r : records) {
    os << r.iteration << ',' << fixed(r.response, 8) << ',' << fixed(r.action, 8) << ',' << fixed(r.total, 8) << '\n';
  }
}

std::vector<std::size_t> batch_indices(std::uint64_t seed, std::int64_t iteration, int batch_size,
                                       std::size_t dataset_size) {
  if (dataset_size == 0) throw InvalidInput("batch_indices: empty dataset");
  std::vector<std::size_t> out;
  std::int64_t cached_epoch = -1;
  std::vector<std::size_t> perm(dataset_size);
  for (int j = 0; j < batch_size; ++j) {
    const auto position = static_cast<std::uint64_t>(iteration) * static_cast<std::uint64_t>(batch_size) +
                          static_cast<std::uint64_t>(j);
    const auto epoch = static_cast<std::int64_t>(position / dataset_size);
    if (epoch != cached_epoch) {
      std::iota(perm.begin(), perm.end(), 0);
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
      std::mt19937_64 rng(seq);
      std::shuffle(perm.begin(), perm.end(), rng);
      cached_epoch = epoch;
    }
    out.push_back(perm[position % dataset_size]);
  }
  return out;
}

LossBreakdown batch_objective(const std::vector<const Episode*>& batch, const ParameterSet& params,
                              const TrainConfig& config, ParameterSet* grads) {
  if (batch.empty()) throw InvalidInput("batch_objective: empty batch");
  std::vector<LossBreakdown> parts(batch.size());
  std::vector<ParameterSet> local(grads ? batch.size() : 0);
  if (grads) {
    for (auto& g : local) g = params.zeros_like();
  }
  parallel_for(batch.size(), [&](std::size_t i) {
    parts[i] = episode_objective(*batch[i], params, config.model, config.response_weight, config.action_weight,
                                 grads ? &local[i] : nullptr);
  });
  // Fixed summation order keeps the reduction bitwise reproducible.
  const double inv = 1.0 / static_cast<double>(batch.size());
  LossBreakdown mean;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    mean.response += parts[i].response;
    mean.action += parts[i].action;
    mean.total += parts[i].total;
    if (grads) grads->add_scaled(local[i], inv);
  }
  mean.response *= inv;
  mean.action *= inv;
  mean.total *= inv;
  return mean;
}

void adamw_step(ParameterSet& params, const ParameterSet& grads, ParameterSet& m, ParameterSet& v, std::int64_t t,
                const TrainConfig& config) {
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
  for (auto& [name, p] : params) {
    if (!optimised(name)) continue;
    const Matrix& g = grads.at(name);
    Matrix& mm = m.at(name);
    Matrix& vv = v.at(name);
    mm = config.beta1 * mm + (1.0 - config.beta1) * g;
    vv = config.beta2 * vv + (1.0 - config.beta2) * g.cwiseProduct(g);
    p *= 1.0 - config.learning_rate * config.weight_decay;
    p.array() -= config.learning_rate * (mm.array() / bc1) / ((vv.array() / bc2).sqrt() + config.epsilon);
  }
}

TrainResult train(const TrainConfig& config, const std::vector<Episode>& episodes,
                  const std::optional<Checkpoint>& resume, const ProgressFn& progress) {
  config.validate();
  if (episodes.empty()) throw InvalidInput("train: empty training set");
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    const Episode& e = episodes[i];
    if (e.z() != config.z) {
      throw InvalidInput("train: episode " + std::to_string(i) + " has Z=" + std::to_string(e.z()) + ", config z=" +
                         std::to_string(config.z));
    }
    if (e.n() > config.n_agents) {
      throw InvalidInput("train: episode " + std::to_string(i) + " has " + std::to_string(e.n()) +
                         " slots, more than n_agents=" + std::to_string(config.n_agents));
    }
    if (e.d() != config.model.d) {
      throw InvalidInput("train: episode " + std::to_string(i) + " has d=" + std::to_string(e.d()) +
                         ", model expects " + std::to_string(config.model.d));
    }
  }

  TrainResult result;
  Checkpoint& ckpt = result.checkpoint;
  if (resume) {
    ckpt = *resume;
    check_shapes(ckpt.params, config.model);
    ckpt.config = config;
  } else {
    ckpt = initial_checkpoint(config);
  }
  if (ckpt.adam_m.size() == 0) {
    ckpt.adam_m = ckpt.params.zeros_like();
    ckpt.adam_v = ckpt.params.zeros_like();
  }

  ParameterSet grads = ckpt.params.zeros_like();
  while (ckpt.iteration < config.iterations) {
    const std::int64_t it = ckpt.iteration;
    const std::vector<std::size_t> idx = batch_indices(config.seed, it, config.batch_size, episodes.size());
    std::vector<const Episode*> batch;
    for (std::size_t i : idx) batch.push_back(&episodes[i]);
    grads.set_zero();
    const LossBreakdown loss = batch_objective(batch, ckpt.params, config, &grads);
    if (!std::isfinite(loss.total) || !grads.all_finite()) {
      std::ostringstream msg;
      msg << "non-finite loss at iteration " << it + 1 << " (response " << loss.response << ", action "
          << loss.action << ") on episodes";
      for (std::size_t i : idx) msg << ' ' << i;
      throw DivergenceError(msg.str());
    }
    adamw_step(ckpt.params, grads, ckpt.adam_m, ckpt.adam_v, it + 1, config);
    ckpt.iteration = it + 1;
    if (ckpt.iteration % config.eval_every == 0 || ckpt.iteration == config.iterations) {
      LossRecord rec{ckpt.iteration, loss.response, loss.action, loss.total};
      result.losses.push_back(rec);
      if (progress) progress(rec);
    }
  }
  return result;
}

EvalReport evaluate(const Checkpoint& ckpt, const std::vector<Episode>& episodes, std::uint64_t baseline_seed) {
  const ModelConfig& cfg = ckpt.config.model;
  check_shapes(ckpt.params, cfg);
  EvalReport report;
  report.episodes = episodes.size();

  std::vector<Episode> scored;
  std::vector<metrics::EvalRecord> records;
  std::size_t hits = 0;
  std::vector<InterventionResult> results(episodes.size());
  std::vector<char> eligible(episodes.size(), 0);
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    const Episode& e = episodes[i];
    eligible[i] = e.response == DriverResponse::kAlter && e.causal_track_id && e.gt_box && !candidate_tracks(e).empty();
  }
  parallel_for(episodes.size(), [&](std::size_t i) {
    if (eligible[i]) results[i] = identify_risk_object(episodes[i], ckpt.params, cfg);
  });
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    if (!eligible[i]) continue;
    const Episode& e = episodes[i];
    if (results[i].chosen_track_id == *e.causal_track_id) ++hits;
    records.push_back({static_cast<int>(i), results[i].chosen_box, *e.gt_box, e.situation});
    report.interventions.push_back(results[i]);
    report.scored_episode_index.push_back(static_cast<int>(i));
    scored.push_back(e);
  }
  report.scored = records.size();
  if (!records.empty()) {
    report.id_accuracy = static_cast<double>(hits) / static_cast<double>(records.size());
    report.model = metrics::macc(records, true);
    std::vector<int> chosen;
    const auto random_records = metrics::random_selection(scored, baseline_seed, &chosen);
    std::size_t random_hits = 0;
    for (std::size_t i = 0; i < scored.size(); ++i) {
      if (chosen[i] == *scored[i].causal_track_id) ++random_hits;
    }
    report.random_id_accuracy = static_cast<double>(random_hits) / static_cast<double>(scored.size());
    report.random = metrics::macc(random_records, true);
  }

  // Response AP over every episode, action AP over every frame.
  std::vector<std::array<double, 2>> response_scores(episodes.size());
  std::vector<std::vector<Vector>> action_scores(episodes.size());
  parallel_for(episodes.size(), [&](std::size_t i) {
    const ResponsePrediction p = predict_response(episodes[i], ckpt.params, cfg);
    response_scores[i] = {p.p_continue, p.p_alter};
    if (cfg.use_action_branch) action_scores[i] = action::predict_action(episodes[i], ckpt.params, cfg).p_act();
  });
  std::array<std::vector<double>, 2> rs;
  std::vector<int> r_labels;
  std::array<std::vector<double>, 3> as;
  std::vector<int> a_labels;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    for (int c = 0; c < 2; ++c) rs[c].push_back(response_scores[i][c]);
    r_labels.push_back(static_cast<int>(episodes[i].response));
    if (!cfg.use_action_branch) continue;
    for (std::size_t t = 0; t < action_scores[i].size(); ++t) {
      for (int c = 0; c < kNumActions; ++c) as[c].push_back(action_scores[i][t][c]);
      a_labels.push_back(static_cast<int>(episodes[i].actions[t]));
    }
  }
  for (int c = 0; c < 2; ++c) {
    if (std::count(r_labels.begin(), r_labels.end(), c) > 0) {
      report.response_ap[c] = metrics::average_precision(rs[c], r_labels, c);
    }
  }
  for (int c = 0; c < kNumActions; ++c) {
    if (std::count(a_labels.begin(), a_labels.end(), c) > 0) {
      report.action_ap[c] = metrics::average_precision(as[c], a_labels, c);
    }
  }
  return report;
}

}  // namespace riskid
