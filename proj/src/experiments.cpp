// Copyright 2026 The POEM Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "poem/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "poem/models.hpp"
#include "poem/rng.hpp"

namespace poem {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json desk_preset() {
  return {
      {"command", ""},
      {"preset", "desk"},
      {"seed", 1},
      {"threads", 1},
      {"images",
       {{"channels", 3},
        {"height", 24},
        {"width", 24},
        {"base_components", 4},
        {"detail_blobs", 6},
        {"families", 64},
        {"images_per_family", 64}}},
      {"sampler",
       {{"crop", 6},
        {"support_views", 8},
        {"query_views", 2},
        {"ways_min", 3},
        {"ways_max", 8},
        {"classes_max", 5},
        {"noise_sigma", 0.02},
        {"gain_jitter", 0.1},
        {"coverage_budget", 0.5}}},
      {"encoder", {{"hidden", 128}, {"embedding", 64}}},
      {"prior", {{"mode", "neglect"}, {"mean", 0.0}, {"precision", kDefaultPriorPrecision}}},
      {"train",
       {{"steps", 3000},
        {"episodes_per_step", 1},
        {"lr", 3e-4},
        {"beta1", 0.9},
        {"beta2", 0.999},
        {"adam_eps", 1e-8},
        {"eval_every", 1000},
        {"eval_episodes", 300},
        {"diag_views", 1000}}},
      {"gridworld",
       {{"environments", 5},
        {"queries", 2},
        {"size", 11},
        {"explore_budget", 200},
        {"max_retries", 20},
        {"steps", 6000},
        {"eval_every", 2000},
        {"eval_episodes", 100}}},
      {"decoder",
       {{"hidden", 256},
        {"steps", 1500},
        {"grids_per_step", 8},
        {"lr", 1e-3},
        {"eval_every", 500},
        {"eval_grids", 50},
        {"encoder_checkpoint", ""}}},
  };
}

json paper_preset() {
  json c = desk_preset();
  c["preset"] = "paper";
  c["images"]["height"] = 84;
  c["images"]["width"] = 84;
  c["sampler"]["crop"] = 14;
  c["sampler"]["support_views"] = 18;
  c["sampler"]["ways_min"] = 5;
  c["sampler"]["ways_max"] = 25;
  c["encoder"]["hidden"] = 256;
  c["encoder"]["embedding"] = 128;
  c["train"]["steps"] = 20000;
  c["train"]["eval_every"] = 5000;
  c["train"]["eval_episodes"] = 600;
  c["gridworld"]["steps"] = 20000;
  c["gridworld"]["eval_every"] = 5000;
  c["decoder"]["steps"] = 5000;
  return c;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

// Assigns `value` over `slot`, keeping the slot's JSON type.
void assign_typed(json& slot, const json& value, const std::string& key) {
  const bool ok = (slot.is_number_integer() && value.is_number_integer() &&
                   !(slot.is_number_unsigned() && value.get<std::int64_t>() < 0)) ||
                  (slot.is_number_float() && value.is_number()) || (slot.is_string() && value.is_string()) ||
                  (slot.is_boolean() && value.is_boolean());
  if (!ok) throw ConfigError("invalid value for config key '" + key + "': " + value.dump(), key);
  slot = slot.is_number_float() ? json(value.get<double>()) : value;
}

template <class T>
T get(const json& c, const char* section, const char* key) {
  return c.at(section).at(key).get<T>();
}

// Range checks on one key; the message names the key.
void require(bool ok, const std::string& key, const std::string& why) {
  if (!ok) throw ConfigError("config key '" + key + "' " + why, key);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class RunFiles {
 public:
  RunFiles(const fs::path& dir, const json& config) : dir_(dir) {
    std::error_code ec;
    fs::create_directories(dir_ / "checkpoints", ec);
    if (ec) throw IoError("cannot create output directory " + dir_.string() + ": " + ec.message());
    write_text("config.json", config.dump(2) + "\n");
    metrics_.open(dir_ / "metrics.jsonl", std::ios::trunc);
    if (!metrics_) throw IoError("cannot write " + (dir_ / "metrics.jsonl").string());
  }

  void event(const std::string& method, json e) {  // one metrics.jsonl line
    e["method"] = method;
    metrics_ << e.dump() << '\n';
    metrics_.flush();
    if (!metrics_) throw IoError("metrics write failed in " + dir_.string());
  }

  void write_text(const std::string& name, const std::string& text) {
    std::ofstream out(dir_ / name, std::ios::trunc);
    out << text;
    if (!out) throw IoError("cannot write " + (dir_ / name).string());
  }

  fs::path checkpoint(const std::string& name) const { return dir_ / "checkpoints" / (name + ".ckpt"); }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  std::ofstream metrics_;
};

template <class Params>
void save_params(const Params& params, std::uint64_t embedding, const fs::path& path) {
  const auto tensors = params.tensors();
  try {
    save_checkpoint(path, tensors, embedding, shape_hash(tensors));
  } catch (const std::runtime_error& e) {
    throw IoError(e.what());
  }
}

struct MethodResult {
  std::string method;
  Accuracy accuracy;
  double precision_ratio = 0.0;
  std::vector<double> per_episode;
  RunRecord record;
};

MethodResult train_and_evaluate(const json& config, Objective objective, const EpisodeSource& train,
                                const EpisodeSource& eval, bool gridworld, RunFiles& files, std::ostream* log) {
  const std::string method = to_string(objective);
  const std::uint64_t seed = config.at("seed").get<std::uint64_t>();
  EncoderParams enc = init_encoder(encoder_config(config, train.feature_width()), stream_seed(seed, Stream::kInit));
  const TrainConfig tc = train_config(config, objective, gridworld);

  auto sink = [&](const json& e) {
    files.event(method, e);
    if (log && e.at("event") == "eval")
      *log << "[" << config.at("command").get<std::string>() << "] " << method << " step " << e.at("step") << "/"
           << tc.steps << " accuracy " << e.at("accuracy") << '\n';
  };
  MethodResult out;
  out.method = method;
  try {
    out.record = train_fewshot(enc, train, tc, &eval, sink);
  } catch (const TrainingAborted& e) {
    files.event(method, {{"event", "abort"},
                         {"step", e.step()},
                         {"episode_index", e.episode_index()},
                         {"episode_seed", e.episode_seed()},
                         {"reason", e.what()}});
    write_episode(train.episode(e.episode_index()), files.dir() / ("abort_" + method + "_episode"));
    throw;
  }
  out.per_episode = out.record.final_episode_accuracies;
  out.accuracy = summarize_accuracy(out.per_episode);
  out.precision_ratio = objective == Objective::kPoem ? out.record.evals.back().precision_ratio
                                                      : precision_variance_ratio(enc, eval, tc.diag_views,
                                                                                 PrecisionMode::kFixedUnit);
  const fs::path ckpt = files.checkpoint(method);
  save_params(enc, enc.config.embedding, ckpt);
  out.record.checkpoint = ckpt.filename().string();
  files.event(method, {{"event", "final"},
                       {"accuracy", out.accuracy.mean},
                       {"ci95", out.accuracy.ci95},
                       {"precision_ratio", out.precision_ratio},
                       {"wall_seconds", out.record.wall_seconds},
                       {"checkpoint", "checkpoints/" + out.record.checkpoint}});
  return out;
}

json paired_summary(const MethodResult& a, const MethodResult& b, RunFiles& files) {
  std::vector<double> diff(a.per_episode.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = a.per_episode[i] - b.per_episode[i];
  const Accuracy d = summarize_accuracy(diff);

  std::string csv = "method,accuracy,ci95,precision_ratio\n";
  json summary;
  for (const auto* r : {&a, &b}) {
    csv += r->method + "," + fmt(r->accuracy.mean) + "," + fmt(r->accuracy.ci95) + "," + fmt(r->precision_ratio) + "\n";
    summary[r->method] = {{"accuracy", r->accuracy.mean},
                          {"ci95", r->accuracy.ci95},
                          {"precision_ratio", r->precision_ratio},
                          {"wall_seconds", r->record.wall_seconds},
                          {"per_episode", r->per_episode}};
  }
  // Paired over identical evaluation episodes; precision_ratio is left empty.
  csv += a.method + "_minus_" + b.method + "," + fmt(d.mean) + "," + fmt(d.ci95) + ",\n";
  summary["difference"] = {{"accuracy", d.mean}, {"ci95", d.ci95}};
  files.write_text("summary.csv", csv);
  return summary;
}

std::vector<std::pair<double, double>> smoothed_losses(const std::vector<double>& losses, std::size_t window) {
  std::vector<std::pair<double, double>> out;
  double acc = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    acc += losses[i];
    if (i >= window) acc -= losses[i - window];
    if ((i + 1) % window == 0) out.emplace_back(static_cast<double>(i + 1), acc / static_cast<double>(window));
  }
  return out;
}

std::vector<std::pair<double, double>> eval_series(const RunRecord& r) {
  std::vector<std::pair<double, double>> out;
  for (const auto& e : r.evals) out.emplace_back(static_cast<double>(e.step), e.accuracy);
  return out;
}

void emit_plots(RunFiles& files, const std::vector<const MethodResult*>& results) {
  std::vector<std::string> names;
  std::vector<std::vector<std::pair<double, double>>> loss, acc;
  for (const auto* r : results) {
    names.push_back(r->method);
    loss.push_back(smoothed_losses(r->record.losses, 50));
    acc.push_back(eval_series(r->record));
  }
  files.write_text("loss.svg", line_plot_svg("training loss (50-step mean)", names, loss));
  files.write_text("accuracy.svg", line_plot_svg("evaluation accuracy", names, acc));
}

json run_bench(const json& config, Condition condition, RunFiles& files, bool svg, std::ostream* log) {
  const std::uint64_t seed = config.at("seed").get<std::uint64_t>();
  const ImageEpisodeSource train(sampler_config(config, false), condition, stream_seed(seed, Stream::kTrainEpisodes));
  const ImageEpisodeSource eval(sampler_config(config, true), condition, stream_seed(seed, Stream::kEvalEpisodes));
  const MethodResult poem = train_and_evaluate(config, Objective::kPoem, train, eval, false, files, log);
  const MethodResult proto = train_and_evaluate(config, Objective::kProtoNet, train, eval, false, files, log);
  if (svg) emit_plots(files, {&poem, &proto});
  return paired_summary(poem, proto, files);
}

json run_grid_train(const json& config, RunFiles& files, bool svg, std::ostream* log) {
  const std::uint64_t seed = config.at("seed").get<std::uint64_t>();
  const GridEpisodeSource train(grid_config(config), stream_seed(seed, Stream::kTrainEpisodes));
  const GridEpisodeSource eval(grid_config(config), stream_seed(seed, Stream::kEvalEpisodes));
  const MethodResult poem = train_and_evaluate(config, Objective::kPoem, train, eval, true, files, log);
  const MethodResult proto = train_and_evaluate(config, Objective::kProtoNet, train, eval, true, files, log);
  if (svg) emit_plots(files, {&poem, &proto});
  return paired_summary(poem, proto, files);
}

json run_grid_recon(const json& config, RunFiles& files, bool svg, std::ostream* log) {
  const std::uint64_t seed = config.at("seed").get<std::uint64_t>();
  const auto source_path = config.at("decoder").at("encoder_checkpoint").get<std::string>();
  EncoderParams enc = init_encoder(encoder_config(config, kObservationWidth), stream_seed(seed, Stream::kInit));
  json summary;
  if (!source_path.empty()) {
    const auto tensors = enc.tensors();
    try {
      load_checkpoint(source_path, tensors);
    } catch (const std::runtime_error& e) {
      throw IoError(e.what());
    }
    summary["encoder"] = {{"checkpoint", source_path}};
  } else {
    // No encoder supplied: train the POEM gridworld encoder first.
    const GridEpisodeSource train(grid_config(config), stream_seed(seed, Stream::kTrainEpisodes));
    const TrainConfig tc = train_config(config, Objective::kPoem, true);
    auto sink = [&](const json& e) { files.event("poem", e); };
    const RunRecord rec = train_fewshot(enc, train, tc, nullptr, sink);
    save_params(enc, enc.config.embedding, files.checkpoint("encoder"));
    summary["encoder"] = {{"checkpoint", "checkpoints/encoder.ckpt"}, {"wall_seconds", rec.wall_seconds}};
  }

  const DecoderTrainConfig dc = decoder_train_config(config);
  const auto size = static_cast<std::size_t>(dc.size);
  DecoderParams dec =
      init_decoder({enc.config.embedding, config.at("decoder").at("hidden").get<std::size_t>(), size, size, kCellTypes},
                   mix_seed(stream_seed(seed, Stream::kInit), 1));
  auto sink = [&](const json& e) {
    files.event("decoder", e);
    if (log && e.at("event") == "eval")
      *log << "[gridworld-recon] decoder step " << e.at("step") << "/" << dc.steps << " cell accuracy "
           << e.at("cell_accuracy") << '\n';
  };
  const RunRecord rec = train_decoder(dec, enc, dc, sink);
  save_params(dec, enc.config.embedding, files.checkpoint("decoder"));
  const ReconstructionScore score = evaluate_decoder(dec, enc, dc.precision, dc.seed, dc.eval_grids, dc.size);

  // One held-out maze next to its reconstruction, for eyeballing.
  const Grid example = gen_maze(decoder_test_grid_seed(dc.seed, 0), dc.size);
  const auto logits = decode(dec, environment_embedding(enc, example, dc.precision));
  Grid recon = example;
  for (std::size_t c = 0; c < recon.cells.size(); ++c) {
    const auto* l = logits.data() + c * kCellTypes;
    recon.cells[c] = static_cast<CellType>(std::max_element(l, l + kCellTypes) - l);
  }
  files.write_text("reconstruction_example.json",
                   json{{"maze", grid_to_json(example)}, {"reconstruction", grid_to_json(recon)}}.dump(2) + "\n");

  files.write_text("summary.csv", "model,cell_accuracy,all_empty_accuracy,mse\ndecoder," + fmt(score.cell_accuracy) +
                                      "," + fmt(score.all_empty_accuracy) + "," + fmt(score.mse) + "\n");
  if (svg) {
    std::vector<std::pair<double, double>> acc;
    for (const auto& e : rec.evals) acc.emplace_back(static_cast<double>(e.step), e.accuracy);
    files.write_text("loss.svg", line_plot_svg("decoder MSE (50-step mean)", {"decoder"}, {smoothed_losses(rec.losses, 50)}));
    files.write_text("accuracy.svg", line_plot_svg("held-out cell accuracy", {"decoder"}, {acc}));
  }
  summary["decoder"] = {{"cell_accuracy", score.cell_accuracy},
                        {"all_empty_accuracy", score.all_empty_accuracy},
                        {"mse", score.mse},
                        {"mse_series", rec.losses},
                        {"wall_seconds", rec.wall_seconds}};
  return summary;
}

json run_diag(const json& config, RunFiles& files, std::ostream* log) {
  const std::uint64_t seed = config.at("seed").get<std::uint64_t>();
  std::string csv = "condition,accuracy,ci95,precision_ratio\n";
  json summary;
  double ratios[2] = {0.0, 0.0};
  int k = 0;
  for (Condition c : {Condition::kPartial, Condition::kFull}) {
    const ImageEpisodeSource train(sampler_config(config, false), c, stream_seed(seed, Stream::kTrainEpisodes));
    const ImageEpisodeSource eval(sampler_config(config, true), c, stream_seed(seed, Stream::kEvalEpisodes));
    EncoderParams enc = init_encoder(encoder_config(config, train.feature_width()), stream_seed(seed, Stream::kInit));
    const TrainConfig tc = train_config(config, Objective::kPoem, false);
    const std::string name = to_string(c);
    auto sink = [&](const json& e) {
      files.event(name, e);
      if (log && e.at("event") == "eval")
        *log << "[diag] " << name << " step " << e.at("step") << " precision ratio " << e.at("precision_ratio") << '\n';
    };
    const RunRecord rec = train_fewshot(enc, train, tc, &eval, sink);
    save_params(enc, enc.config.embedding, files.checkpoint("poem_" + name));
    const EvalRecord& last = rec.evals.back();
    ratios[k++] = last.precision_ratio;
    csv += name + "," + fmt(last.accuracy) + "," + fmt(last.ci95) + "," + fmt(last.precision_ratio) + "\n";
    json series = json::array();
    for (const auto& e : rec.evals) series.push_back({{"step", e.step}, {"precision_ratio", e.precision_ratio}});
    summary[name] = {{"accuracy", last.accuracy}, {"ci95", last.ci95}, {"precision_ratio", last.precision_ratio},
                     {"series", series}};
  }
  const double quotient = ratios[1] > 0.0 ? ratios[0] / ratios[1] : INFINITY;
  csv += "partial_over_full,,," + fmt(quotient) + "\n";
  summary["partial_over_full"] = quotient;
  files.write_text("summary.csv", csv);
  return summary;
}

}  // namespace

const std::vector<std::string>& experiment_commands() {
  static const std::vector<std::string> commands{"bench-po", "bench-full", "gridworld-train", "gridworld-recon", "diag"};
  return commands;
}

json preset_config(const std::string& preset) {
  if (preset == "desk") return desk_preset();
  if (preset == "paper") return paper_preset();
  throw ConfigError("unknown preset '" + preset + "' (expected desk or paper)", "preset");
}

void merge_config(json& config, const json& overlay, const std::string& prefix) {
  if (!overlay.is_object()) throw ConfigError("config must be a JSON object", prefix.empty() ? "<root>" : prefix);
  for (const auto& [k, v] : overlay.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (!config.contains(k)) throw ConfigError("unknown config key '" + key + "'", key);
    json& slot = config[k];
    if (slot.is_object()) {
      merge_config(slot, v, key);
    } else {
      assign_typed(slot, v, key);
    }
  }
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override must look like key=value: '" + assignment + "'", assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json* slot = &config;
  for (const auto& part : split(key, '.')) {
    if (!slot->is_object() || !slot->contains(part)) throw ConfigError("unknown config key '" + key + "'", key);
    slot = &(*slot)[part];
  }
  if (slot->is_object()) throw ConfigError("config key '" + key + "' is a section, not a value", key);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  assign_typed(*slot, value, key);
}

json resolve_config(const RunSpec& spec) {
  const auto& cmds = experiment_commands();
  if (std::find(cmds.begin(), cmds.end(), spec.command) == cmds.end())
    throw ConfigError("unknown command '" + spec.command + "'", "command");

  json file_config = json::object();
  if (spec.config_file) {
    std::ifstream in(*spec.config_file);
    if (!in) throw IoError("cannot read config file " + spec.config_file->string());
    file_config = json::parse(in, nullptr, false);
    if (file_config.is_discarded()) throw ConfigError("config file is not valid JSON", spec.config_file->string());
  }
  std::string preset = spec.preset;
  if (file_config.is_object() && file_config.contains("preset") && file_config["preset"].is_string())
    preset = file_config["preset"].get<std::string>();
  json config = preset_config(preset);
  merge_config(config, file_config);
  const auto file_command = config.at("command").get<std::string>();
  if (!file_command.empty() && file_command != spec.command)
    throw ConfigError("config file is for command '" + file_command + "', not '" + spec.command + "'", "command");
  config["command"] = spec.command;
  for (const auto& o : spec.overrides) apply_override(config, o);
  if (spec.seed) config["seed"] = *spec.seed;
  if (spec.threads) config["threads"] = *spec.threads;
  validate_config(config);
  return config;
}

void validate_config(const json& c) {
  auto positive = [&](const char* section, const char* key) {
    const std::string name = std::string(section) + "." + key;
    require(c.at(section).at(key).get<double>() > 0.0, name, "must be positive");
  };
  require(c.at("threads").get<std::int64_t>() >= 1, "threads", "must be at least 1");
  for (const char* k : {"channels", "height", "width", "base_components", "detail_blobs", "families",
                        "images_per_family"})
    positive("images", k);
  for (const char* k : {"crop", "support_views", "query_views", "ways_min", "ways_max", "classes_max"})
    positive("sampler", k);
  require(get<double>(c, "sampler", "noise_sigma") >= 0.0, "sampler.noise_sigma", "must be non-negative");
  require(get<double>(c, "sampler", "gain_jitter") >= 0.0, "sampler.gain_jitter", "must be non-negative");
  require(get<std::size_t>(c, "sampler", "ways_min") <= get<std::size_t>(c, "sampler", "ways_max"), "sampler.ways_min",
          "must not exceed sampler.ways_max");
  require(get<std::size_t>(c, "sampler", "classes_max") <= get<std::size_t>(c, "images", "families"),
          "sampler.classes_max", "must not exceed images.families");
  const auto crop = get<std::size_t>(c, "sampler", "crop");
  require(crop <= get<std::size_t>(c, "images", "height") && crop <= get<std::size_t>(c, "images", "width"),
          "sampler.crop", "must fit inside the image");
  require(coverage_fraction(sampler_config(c, false)) <= get<double>(c, "sampler", "coverage_budget") + 1e-12,
          "sampler.support_views", "exceeds the coverage budget");
  positive("encoder", "hidden");
  positive("encoder", "embedding");
  const auto mode = get<std::string>(c, "prior", "mode");
  require(mode == "neglect" || mode == "gaussian", "prior.mode", "must be 'neglect' or 'gaussian'");
  positive("prior", "precision");
  for (const char* k : {"steps", "episodes_per_step", "lr", "adam_eps", "eval_episodes"}) positive("train", k);
  require(get<std::size_t>(c, "train", "eval_episodes") >= 30, "train.eval_episodes", "must be at least 30");
  require(get<std::size_t>(c, "train", "diag_views") >= 100, "train.diag_views", "must be at least 100");
  for (const char* k : {"beta1", "beta2"}) {
    const double b = get<double>(c, "train", k);
    require(b >= 0.0 && b < 1.0, std::string("train.") + k, "must lie in [0, 1)");
  }
  for (const char* k : {"environments", "queries", "size", "explore_budget", "max_retries", "steps", "eval_episodes"})
    positive("gridworld", k);
  require(get<std::int64_t>(c, "gridworld", "size") >= 7, "gridworld.size", "must be at least 7");
  require(get<std::size_t>(c, "gridworld", "eval_episodes") >= 30, "gridworld.eval_episodes", "must be at least 30");
  for (const char* k : {"hidden", "steps", "grids_per_step", "lr", "eval_grids"}) positive("decoder", k);
}

SamplerConfig sampler_config(const json& c, bool eval_split) {
  SamplerConfig s;
  const json& im = c.at("images");
  s.pool.image.channels = im.at("channels").get<std::size_t>();
  s.pool.image.height = im.at("height").get<std::size_t>();
  s.pool.image.width = im.at("width").get<std::size_t>();
  s.pool.image.base_components = im.at("base_components").get<std::size_t>();
  s.pool.image.detail_blobs = im.at("detail_blobs").get<std::size_t>();
  s.pool.families = im.at("families").get<std::size_t>();
  s.pool.images_per_family = im.at("images_per_family").get<std::size_t>();
  s.pool.master_seed = c.at("seed").get<std::uint64_t>();
  // Evaluation draws from a disjoint block of families.
  s.pool.family_offset = eval_split ? s.pool.families : 0;
  const json& sm = c.at("sampler");
  s.crop = sm.at("crop").get<std::size_t>();
  s.support_views = sm.at("support_views").get<std::size_t>();
  s.query_views = sm.at("query_views").get<std::size_t>();
  s.ways_min = sm.at("ways_min").get<std::size_t>();
  s.ways_max = sm.at("ways_max").get<std::size_t>();
  s.classes_max = sm.at("classes_max").get<std::size_t>();
  s.noise_sigma = sm.at("noise_sigma").get<double>();
  s.gain_jitter = sm.at("gain_jitter").get<double>();
  s.coverage_budget = sm.at("coverage_budget").get<double>();
  return s;
}

GridEpisodeConfig grid_config(const json& c) {
  const json& g = c.at("gridworld");
  GridEpisodeConfig out;
  out.environments = g.at("environments").get<std::size_t>();
  out.queries = g.at("queries").get<std::size_t>();
  out.size = g.at("size").get<int>();
  out.explore_budget = g.at("explore_budget").get<std::size_t>();
  out.max_retries = g.at("max_retries").get<std::size_t>();
  return out;
}

EncoderConfig encoder_config(const json& c, std::size_t input_width) {
  return {input_width, get<std::size_t>(c, "encoder", "hidden"), get<std::size_t>(c, "encoder", "embedding")};
}

TrainConfig train_config(const json& c, Objective objective, bool gridworld) {
  const json& t = c.at("train");
  TrainConfig tc;
  tc.steps = gridworld ? get<std::size_t>(c, "gridworld", "steps") : t.at("steps").get<std::size_t>();
  tc.episodes_per_step = t.at("episodes_per_step").get<std::size_t>();
  tc.adam = {t.at("lr").get<double>(), t.at("beta1").get<double>(), t.at("beta2").get<double>(),
             t.at("adam_eps").get<double>()};
  tc.seed = c.at("seed").get<std::uint64_t>();
  tc.loss.objective = objective;
  tc.loss.precision = PrecisionMode::kLearned;
  tc.loss.prior = {prior_mode_from_string(get<std::string>(c, "prior", "mode")), get<double>(c, "prior", "mean"),
                   get<double>(c, "prior", "precision")};
  tc.eval_every =
      gridworld ? get<std::size_t>(c, "gridworld", "eval_every") : t.at("eval_every").get<std::size_t>();
  tc.eval_episodes =
      gridworld ? get<std::size_t>(c, "gridworld", "eval_episodes") : t.at("eval_episodes").get<std::size_t>();
  tc.diag_views = t.at("diag_views").get<std::size_t>();
  tc.threads = c.at("threads").get<std::size_t>();
  return tc;
}

DecoderTrainConfig decoder_train_config(const json& c) {
  const json& d = c.at("decoder");
  DecoderTrainConfig dc;
  dc.steps = d.at("steps").get<std::size_t>();
  dc.grids_per_step = d.at("grids_per_step").get<std::size_t>();
  dc.adam = {d.at("lr").get<double>(), get<double>(c, "train", "beta1"), get<double>(c, "train", "beta2"),
             get<double>(c, "train", "adam_eps")};
  dc.seed = c.at("seed").get<std::uint64_t>();
  dc.size = get<int>(c, "gridworld", "size");
  dc.eval_every = d.at("eval_every").get<std::size_t>();
  dc.eval_grids = d.at("eval_grids").get<std::size_t>();
  dc.precision = PrecisionMode::kLearned;
  return dc;
}

json run_experiment(const json& config, const fs::path& out_dir, bool emit_svg, std::ostream* log) {
  validate_config(config);
  RunFiles files(out_dir, config);
  const auto command = config.at("command").get<std::string>();
  if (command == "bench-po") return run_bench(config, Condition::kPartial, files, emit_svg, log);
  if (command == "bench-full") return run_bench(config, Condition::kFull, files, emit_svg, log);
  if (command == "gridworld-train") return run_grid_train(config, files, emit_svg, log);
  if (command == "gridworld-recon") return run_grid_recon(config, files, emit_svg, log);
  if (command == "diag") return run_diag(config, files, log);
  throw ConfigError("unknown command '" + command + "'", "command");
}

std::string line_plot_svg(const std::string& title, const std::vector<std::string>& names,
                          const std::vector<std::vector<std::pair<double, double>>>& series) {
  static const char* kColours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  const double w = 640, h = 400, left = 60, right = 20, top = 40, bottom = 40;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series)
    for (const auto& [x, y] : s) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  if (!(x0 < x1)) x1 = x0 + 1.0;
  if (!(y0 < y1)) y1 = y0 + 1.0;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * (w - left - right); };
  auto py = [&](double y) { return h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom); };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << left << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n"
      << "<line x1=\"" << left << "\" y1=\"" << h - bottom << "\" x2=\"" << w - right << "\" y2=\"" << h - bottom
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << h - bottom
      << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << left << "\" y=\"" << h - 10 << "\" font-family=\"sans-serif\" font-size=\"11\">" << x0
      << "</text>\n"
      << "<text x=\"" << w - right - 40 << "\" y=\"" << h - 10 << "\" font-family=\"sans-serif\" font-size=\"11\">"
      << x1 << "</text>\n"
      << "<text x=\"4\" y=\"" << h - bottom << "\" font-family=\"sans-serif\" font-size=\"11\">" << y0 << "</text>\n"
      << "<text x=\"4\" y=\"" << top + 4 << "\" font-family=\"sans-serif\" font-size=\"11\">" << y1 << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* colour = kColours[k % 4];
    out << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : series[k]) out << px(x) << ',' << py(y) << ' ';
    out << "\"/>\n";
    if (k < names.size())
      out << "<text x=\"" << w - right - 120 << "\" y=\"" << top + 16 * static_cast<double>(k + 1)
          << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" << colour << "\">" << names[k] << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace poem
