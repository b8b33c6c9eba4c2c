#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "exactk/dataio/features.hpp"
#include "exactk/dataio/implicit.hpp"
#include "exactk/dataio/oracle.hpp"
#include "exactk/errors.hpp"
#include "exactk/eval/eval.hpp"
#include "exactk/gattn/decode.hpp"
#include "exactk/graph/graph.hpp"
#include "exactk/kv.hpp"
#include "exactk/training/training.hpp"

#ifndef EXACTK_VERSION
#define EXACTK_VERSION "unknown"
#endif

namespace fs = std::filesystem;
namespace nc = exactk::numcore;
namespace dio = exactk::dataio;
namespace kv = exactk::kv;
using exactk::ConfigError;
using exactk::DataError;
using exactk::IoError;
using json = nlohmann::ordered_json;

namespace {

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kIo = 3, kInfeasible = 4 };

constexpr double kInfeasibleStormRate = 0.01;

struct Manifest {
  std::string command;
  kv::Entries config;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> outputs;
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

  void write(const fs::path& path) const {
    json j;
    j["command"] = command;
    json cfg = json::object();
    for (const auto& [k, v] : config) cfg[k] = v;
    j["config"] = cfg;
    j["seed"] = seed;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["version"] = EXACTK_VERSION;
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - started;
    j["duration_seconds"] = elapsed.count();
    const fs::path tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      if (!out) throw IoError("cannot write " + tmp.string());
      out << j.dump(2) << '\n';
      if (!out) throw IoError("failed writing " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move manifest into place at " + path.string() + ": " + ec.message());
  }
};

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("EXACTK_SEED")) return kv::to_u64("EXACTK_SEED", env);
  return 0;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

// ---------------------------------------------------------------- datasets

struct DatasetInfo {
  std::string mode;
  std::size_t k = 0;
  std::size_t n = 0;
  exactk::graph::Constraint constraint;
};

const char* kDatasetFile = "dataset.kv";

DatasetInfo read_dataset_info(const fs::path& dir) {
  const fs::path path = dir / kDatasetFile;
  if (!fs::exists(path)) throw IoError("no dataset description at " + path.string());
  DatasetInfo info;
  for (const auto& [k, v] : kv::read_file(path)) {
    if (k == "mode") info.mode = v;
    else if (k == "k") info.k = kv::to_size(k, v);
    else if (k == "n") info.n = kv::to_size(k, v);
    else if (k == "constraint") info.constraint.kind = v == "min_ned" ? exactk::graph::Constraint::Kind::min_ned
                                                                     : exactk::graph::Constraint::Kind::none;
    else if (k == "tau") info.constraint.tau = kv::to_double(k, v);
  }
  return info;
}

struct Dataset {
  DatasetInfo info;
  std::vector<dio::Sample> train;
  std::vector<dio::Sample> test;
  std::shared_ptr<const dio::OracleWorld> world;
  exactk::graph::GraphBuilder builder;
};

Dataset load_dataset(const fs::path& dir) {
  Dataset d;
  d.info = read_dataset_info(dir);
  d.train = dio::read_samples(dir / "train.tsv");
  d.test = dio::read_samples(dir / "test.tsv");
  std::unordered_map<dio::ItemId, std::string> titles;
  if (fs::exists(dir / "world.bin")) {
    auto world = std::make_shared<dio::OracleWorld>(dio::world_from_archive(nc::read_archive(dir / "world.bin")));
    for (std::size_t i = 0; i < world->item_titles.size(); ++i) titles.emplace(static_cast<dio::ItemId>(i), world->item_titles[i]);
    d.world = world;
  }
  d.builder = exactk::graph::GraphBuilder(d.info.constraint, std::move(titles));
  return d;
}

// Dense oracle features when the dataset ships a world, learned id embeddings
// otherwise.
dio::FeatureSpec resolve_features(const Dataset& d, std::optional<std::string> mode, const dio::FeatureSpec& base) {
  dio::FeatureSpec spec = base;
  if (!mode) mode = d.world ? "dense" : "id_embedding";
  spec.mode = dio::parse_feature_mode(*mode);
  if (spec.mode == dio::FeatureMode::dense) {
    if (!d.world) throw ConfigError("feature_mode=dense needs an oracle dataset");
    return dio::dense_spec_for(*d.world);
  }
  std::size_t items = 0, users = 0;
  for (const auto* set : {&d.train, &d.test}) {
    for (const auto& s : *set) {
      users = std::max(users, static_cast<std::size_t>(s.user) + 1);
      for (auto id : s.candidates) items = std::max(items, static_cast<std::size_t>(id) + 1);
    }
  }
  if (spec.item_vocab == 0) spec.item_vocab = items;
  if (spec.user_vocab == 0) spec.user_vocab = users;
  return spec;
}

void attach_world(dio::FeatureEncoder& features, const Dataset& d) {
  if (features.spec().mode == dio::FeatureMode::dense) {
    if (!d.world) throw ConfigError("dense features need an oracle dataset");
    features.attach(d.world);
  }
}

// ---------------------------------------------------------------- gen-data

struct GenOptions {
  std::string mode = "oracle";
  std::size_t k = 4;
  std::size_t n = 20;
  std::size_t users = 1000;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string ratings;
  double split = 0.8;
  std::size_t items = 200;
  std::size_t dim = 8;
  std::size_t clusters = 4;
  double beta = 1.0;
  double temperature = 0.0;
  std::string constraint = "none";
  double tau = 0.5;
  std::size_t ratings_per_user = 60;
};

int cmd_gen_data(const GenOptions& o) {
  Manifest manifest;
  manifest.command = "gen-data";
  manifest.seed = resolve_seed(o.seed);
  const dio::DatasetSpec spec{o.k, o.n, o.split, manifest.seed};
  spec.validate();
  if (o.mode != "oracle" && o.mode != "implicit") throw ConfigError("--mode must be oracle or implicit");
  exactk::graph::Constraint constraint;
  if (o.constraint == "min_ned") constraint = exactk::graph::Constraint::min_ned(o.tau);
  else if (o.constraint != "none") throw ConfigError("--constraint must be none or min_ned");
  constraint.validate();
  if (constraint.kind != exactk::graph::Constraint::Kind::none && o.mode != "oracle") {
    throw ConfigError("min_ned constraints need item titles, which only oracle mode provides");
  }

  const fs::path out(o.out);
  fs::create_directories(out);
  nc::Rng rng(nc::mix_seed(manifest.seed, 0x47454E44ULL));
  std::vector<dio::Sample> samples;
  kv::Entries description{{"mode", o.mode},
                          {"k", kv::format(o.k)},
                          {"n", kv::format(o.n)},
                          {"users", kv::format(o.users)},
                          {"split", kv::format(o.split)},
                          {"seed", std::to_string(manifest.seed)},
                          {"constraint", o.constraint}};
  if (constraint.tau) description.emplace_back("tau", kv::format(*constraint.tau));

  if (o.mode == "oracle") {
    dio::OracleWorldParams params;
    params.users = o.users;
    params.items = o.items;
    params.dim = o.dim;
    params.clusters = o.clusters;
    params.beta = o.beta;
    params.temperature = o.temperature;
    const dio::OracleWorld world = dio::make_oracle_world(params, rng);
    dio::PairFeasibility feasible;
    if (constraint.kind == exactk::graph::Constraint::Kind::min_ned) {
      feasible = [&world, tau = *constraint.tau](dio::ItemId a, dio::ItemId b) {
        return exactk::graph::ned(world.item_titles[a], world.item_titles[b]) >= tau;
      };
    }
    samples = dio::generate_oracle_dataset(world, spec, o.users, rng, feasible);
    nc::write_archive(dio::world_to_archive(world), out / "world.bin");
    manifest.outputs["world"] = (out / "world.bin").string();
    for (auto kvp : kv::Entries{{"items", kv::format(o.items)},
                                {"dim", kv::format(o.dim)},
                                {"clusters", kv::format(o.clusters)},
                                {"beta", kv::format(o.beta)},
                                {"temperature", kv::format(o.temperature)}}) {
      description.push_back(kvp);
    }
  } else {
    std::vector<dio::Rating> ratings;
    if (!o.ratings.empty()) {
      ratings = dio::read_ratings(o.ratings);
      manifest.inputs["ratings"] = o.ratings;
    } else {
      ratings = dio::synthesize_ratings(o.users, o.items, o.ratings_per_user, rng);
      description.emplace_back("items", kv::format(o.items));
      description.emplace_back("ratings_per_user", kv::format(o.ratings_per_user));
    }
    auto built = dio::build_from_implicit_feedback(ratings, spec, rng);
    if (built.skipped_users > 0) std::cerr << "skipped " << built.skipped_users << " users with too few ratings\n";
    samples = std::move(built.samples);
  }
  if (samples.empty()) throw DataError("no samples were generated");

  const auto parts = dio::split(samples, o.split, rng);
  dio::write_samples(parts.train, out / "train.tsv");
  dio::write_samples(parts.test, out / "test.tsv");
  {
    auto f = open_out(out / kDatasetFile);
    for (const auto& [k, v] : description) f << k << '=' << v << '\n';
  }
  manifest.config = description;
  manifest.outputs["train"] = (out / "train.tsv").string();
  manifest.outputs["test"] = (out / "test.tsv").string();
  manifest.outputs["dataset"] = (out / kDatasetFile).string();
  manifest.write(out / "manifest.json");
  std::cout << "wrote " << parts.train.size() << " train and " << parts.test.size() << " test samples to " << out.string()
            << '\n';
  return kOk;
}

// ---------------------------------------------------------------- train

struct TrainOptions {
  std::string data;
  std::string config;
  std::optional<double> alpha;
  std::optional<std::string> policy_sampling;
  std::optional<std::string> hill_climbing;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
  std::string out;
};

struct FullConfig {
  exactk::gattn::ModelConfig model;
  exactk::training::TrainConfig train;
  std::size_t reward_hidden = 128;
  exactk::reward::CrossMode reward_cross = exactk::reward::CrossMode::elementwise;
  bool reward_tied = true;
  std::optional<std::string> feature_mode;
  bool seed_set = false;

  void apply(const std::string& key, const std::string& value) {
    if (key == "seed") seed_set = true;
    if (key == "feature_mode") feature_mode = dio::feature_mode_name(dio::parse_feature_mode(value));
    else if (key == "reward_hidden") reward_hidden = kv::to_size(key, value);
    else if (key == "reward_cross") reward_cross = exactk::reward::parse_cross_mode(value);
    else if (key == "reward_tied") reward_tied = kv::to_bool(key, value);
    else if (!train.apply(key, value) && !model.apply(key, value)) throw ConfigError("unknown config key '" + key + "'");
  }

  kv::Entries entries() const {
    kv::Entries all = train.entries();
    for (auto& e : model.entries()) all.push_back(e);
    all.emplace_back("reward_hidden", kv::format(reward_hidden));
    all.emplace_back("reward_cross", exactk::reward::cross_mode_name(reward_cross));
    all.emplace_back("reward_tied", kv::format(reward_tied));
    return all;
  }
};

int cmd_train(const TrainOptions& o) {
  Manifest manifest;
  manifest.command = "train";
  FullConfig cfg;
  if (!o.config.empty()) {
    if (!fs::exists(o.config)) throw IoError("config file not found: " + o.config);
    for (const auto& [k, v] : kv::read_file(o.config)) cfg.apply(k, v);
    manifest.inputs["config"] = o.config;
  }
  if (o.alpha) cfg.train.alpha = *o.alpha;
  if (o.policy_sampling) cfg.train.policy_sampling = kv::to_bool("--policy-sampling", *o.policy_sampling);
  if (o.hill_climbing) cfg.train.hill_climbing = kv::to_bool("--hill-climbing", *o.hill_climbing);
  if (o.epochs) cfg.train.epochs = *o.epochs;
  if (o.seed || !cfg.seed_set) cfg.train.seed = resolve_seed(o.seed);
  cfg.train.validate();

  const Dataset d = load_dataset(o.data);
  manifest.inputs["data"] = o.data;
  cfg.model.k = d.info.k;
  cfg.model.n = d.info.n;
  cfg.model.features = resolve_features(d, cfg.feature_mode, cfg.model.features);
  cfg.model.validate();
  exactk::reward::RewardConfig reward_cfg;
  reward_cfg.k = d.info.k;
  reward_cfg.hidden = cfg.reward_hidden;
  reward_cfg.cross = cfg.reward_cross;
  reward_cfg.tied = cfg.reward_tied;
  reward_cfg.features = cfg.model.features;

  exactk::training::TrainInputs inputs{d.train, d.builder, d.world};
  exactk::training::TrainPaths paths;
  paths.out_dir = fs::path(o.out);
  const auto result = exactk::training::run_training(inputs, cfg.model, reward_cfg, cfg.train, paths);

  manifest.seed = cfg.train.seed;
  manifest.config = cfg.entries();
  manifest.config.emplace_back("feature_mode", dio::feature_mode_name(cfg.model.features.mode));
  const double rate = result.infeasible_rate();
  if (rate > kInfeasibleStormRate) {
    std::cerr << "error: infeasible decodes in " << kv::format(rate * 100.0) << "% of reinforcement steps ("
              << result.rl_failures << " of " << result.rl_draws << ")\n";
    return kInfeasible;
  }
  const fs::path out(o.out);
  manifest.outputs["policy"] = (out / "policy.bin").string();
  manifest.outputs["curve"] = (out / "curve.csv").string();
  if (result.reward) {
    manifest.outputs["reward"] = (out / "reward.bin").string();
    manifest.outputs["reward_loss"] = (out / "reward_loss.csv").string();
  } else {
    std::cout << "alpha = 1: reward estimator phase skipped\n";
  }
  manifest.write(out / "manifest.json");
  if (!result.curve.empty()) {
    const auto& last = result.curve.back();
    std::cout << "trained " << last.iter << " iterations; final loss " << kv::format(last.loss_total) << '\n';
  }
  return kOk;
}

// ---------------------------------------------------------------- eval

struct EvalOptions {
  std::string data;
  std::string policy;
  std::string reward;
  std::string method;
  std::string report;
  std::optional<std::size_t> beam_size;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> feature_mode;
};

nc::Archive load_checkpoint(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("this method needs --") + what);
  if (!fs::exists(path)) throw IoError(std::string(what) + " checkpoint not found: " + path);
  return nc::read_archive(path);
}

int cmd_eval(const EvalOptions& o) {
  Manifest manifest;
  manifest.command = "eval";
  manifest.seed = resolve_seed(o.seed);
  const auto method = exactk::eval::parse_method(o.method);
  const Dataset d = load_dataset(o.data);
  manifest.inputs["data"] = o.data;

  exactk::eval::EvalContext ctx;
  ctx.builder = d.builder;
  ctx.world = d.world.get();
  if (o.beam_size) ctx.beam_size = *o.beam_size;

  std::optional<exactk::gattn::PolicyModel> policy;
  std::optional<exactk::reward::RewardModel> reward;
  std::optional<exactk::eval::PointwiseScorer> scorer;
  if (method == exactk::eval::Method::policy_beam) {
    policy.emplace(exactk::gattn::PolicyModel::from_archive(load_checkpoint(o.policy, "policy")));
    attach_world(policy->features(), d);
    ctx.policy = &*policy;
    manifest.inputs["policy"] = o.policy;
  }
  if (method == exactk::eval::Method::brute_force_oracle && !d.world) {
    throw ConfigError("brute_force_oracle needs an oracle dataset (no world.bin in " + o.data + ")");
  }
  if (method == exactk::eval::Method::greedy_baseline) {
    nc::Rng rng(nc::mix_seed(manifest.seed, 0x47524459ULL));
    scorer.emplace(resolve_features(d, o.feature_mode, dio::FeatureSpec{dio::FeatureMode::id_embedding, 16, 16, 0, 0}), rng);
    attach_world(scorer->features(), d);
    exactk::eval::PointwiseTrainConfig pc;
    pc.seed = manifest.seed;
    exactk::eval::train_pointwise(*scorer, d.train, pc);
    ctx.scorer = &*scorer;
  }
  if (!o.reward.empty()) {
    reward.emplace(exactk::reward::RewardModel::from_archive(load_checkpoint(o.reward, "reward")));
    attach_world(reward->features(), d);
    ctx.reward = &*reward;
    manifest.inputs["reward"] = o.reward;
  }

  const auto report = exactk::eval::evaluate(method, d.test, ctx);
  const std::vector<exactk::eval::EvalReport> reports{report};
  const fs::path csv(o.report);
  {
    auto f = open_out(csv);
    exactk::eval::write_report_csv(reports, f);
  }
  fs::path table = csv;
  table.replace_extension(".txt");
  {
    auto f = open_out(table);
    exactk::eval::write_report_table(reports, f);
  }
  exactk::eval::write_report_table(reports, std::cout);
  manifest.config = {{"method", o.method}, {"beam_size", o.beam_size ? kv::format(*o.beam_size) : "model"}};
  if (scorer) manifest.config.emplace_back("feature_mode", dio::feature_mode_name(scorer->spec().mode));
  manifest.outputs["report_csv"] = csv.string();
  manifest.outputs["report_table"] = table.string();
  manifest.write(fs::path(csv.string() + ".manifest.json"));
  return kOk;
}

// ---------------------------------------------------------------- export-attention

struct ExportOptions {
  std::string policy;
  std::string data;
  std::size_t sample_index = 0;
  std::string split = "test";
  std::string out;
};

int cmd_export_attention(const ExportOptions& o) {
  Manifest manifest;
  manifest.command = "export-attention";
  const Dataset d = load_dataset(o.data);
  auto policy = exactk::gattn::PolicyModel::from_archive(load_checkpoint(o.policy, "policy"));
  attach_world(policy.features(), d);
  if (o.split != "train" && o.split != "test") throw ConfigError("--split must be train or test");
  const auto& samples = o.split == "train" ? d.train : d.test;
  if (o.sample_index >= samples.size()) {
    throw ConfigError("--sample-index " + std::to_string(o.sample_index) + " out of range; the " + o.split +
                      " split holds " + std::to_string(samples.size()) + " samples");
  }
  nc::NoGradScope no_grad;
  const auto enc = policy.encode_sample(samples[o.sample_index]);
  {
    auto f = open_out(o.out);
    exactk::gattn::write_attention_csv(enc, policy.config().heads, f);
  }
  manifest.inputs["policy"] = o.policy;
  manifest.inputs["data"] = o.data;
  manifest.config = {{"sample_index", kv::format(o.sample_index)}, {"split", o.split}};
  manifest.outputs["attention"] = o.out;
  manifest.write(fs::path(o.out + ".manifest.json"));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exact-K card recommendation: data generation, training and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", EXACTK_VERSION);

  GenOptions gen;
  auto* g = app.add_subcommand("gen-data", "Generate a dataset (train/test TSVs)");
  g->add_option("--mode", gen.mode, "oracle or implicit")->check(CLI::IsMember({"oracle", "implicit"}));
  g->add_option("--k", gen.k, "Card size K");
  g->add_option("--n", gen.n, "Candidate count N");
  g->add_option("--users", gen.users, "Users to simulate");
  g->add_option("--seed", gen.seed, "Random seed (falls back to EXACTK_SEED)");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--ratings", gen.ratings, "Ratings file 'user item rating' for implicit mode");
  g->add_option("--split", gen.split, "Train fraction");
  g->add_option("--items", gen.items, "Item pool size");
  g->add_option("--dim", gen.dim, "Latent dimension of the oracle world");
  g->add_option("--clusters", gen.clusters, "Item clusters in the oracle world");
  g->add_option("--beta", gen.beta, "Pairwise synergy weight");
  g->add_option("--temperature", gen.temperature, "Gumbel noise scale on click choice");
  g->add_option("--constraint", gen.constraint, "none or min_ned");
  g->add_option("--tau", gen.tau, "Minimum normalized edit distance for min_ned");
  g->add_option("--ratings-per-user", gen.ratings_per_user, "Synthetic ratings per user (implicit mode)");

  TrainOptions tr;
  auto* t = app.add_subcommand("train", "Train the reward estimator and the policy");
  t->add_option("--data", tr.data, "Dataset directory")->required();
  t->add_option("--config", tr.config, "key=value configuration file");
  t->add_option("--alpha", tr.alpha, "Supervised weight in [0, 1]");
  t->add_option("--policy-sampling", tr.policy_sampling, "on or off");
  t->add_option("--hill-climbing", tr.hill_climbing, "on or off");
  t->add_option("--epochs", tr.epochs, "Policy training epochs");
  t->add_option("--seed", tr.seed, "Random seed (falls back to EXACTK_SEED)");
  t->add_option("--out", tr.out, "Output directory")->required();

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "Evaluate a decoding method on the test split");
  e->add_option("--data", ev.data, "Dataset directory")->required();
  e->add_option("--policy", ev.policy, "Policy checkpoint");
  e->add_option("--reward", ev.reward, "Reward checkpoint (adds mean_reward)");
  e->add_option("--method", ev.method, std::string("One of ") + exactk::eval::kMethodNames)->required();
  e->add_option("--report", ev.report, "Report CSV path; a .txt table is written beside it")->required();
  e->add_option("--beam-size", ev.beam_size, "Override the policy's beam width");
  e->add_option("--seed", ev.seed, "Random seed (falls back to EXACTK_SEED)");
  e->add_option("--feature-mode", ev.feature_mode, "Greedy scorer features: dense or id_embedding");

  ExportOptions ex;
  auto* x = app.add_subcommand("export-attention", "Dump encoder attention weights for one sample");
  x->add_option("--policy", ex.policy, "Policy checkpoint")->required();
  x->add_option("--data", ex.data, "Dataset directory")->required();
  x->add_option("--sample-index", ex.sample_index, "Sample position in the split")->required();
  x->add_option("--split", ex.split, "train or test");
  x->add_option("--out", ex.out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*g) return cmd_gen_data(gen);
    if (*t) return cmd_train(tr);
    if (*e) return cmd_eval(ev);
    if (*x) return cmd_export_attention(ex);
  } catch (const ConfigError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kUsage;
  } catch (const IoError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kIo;
  } catch (const DataError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kIo;
  } catch (const exactk::InfeasibleError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kInfeasible;
  } catch (const fs::filesystem_error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kIo;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kFailure;
  }
  return kUsage;
}
