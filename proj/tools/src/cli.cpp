#include "granenc_cli/cli.hpp"

#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "granenc/checkpoint.hpp"
#include "granenc/evaluation.hpp"
#include "granenc/gradcheck.hpp"
#include "granenc/synthetic.hpp"
#include "granenc/training.hpp"

namespace fs = std::filesystem;

namespace granenc::cli {
namespace {

fs::path first_existing(const fs::path& dir, std::initializer_list<const char*> names) {
  for (const char* n : names)
    if (fs::exists(dir / n)) return dir / n;
  return {};
}

void apply_overrides(TrainConfig& config, const std::vector<std::string>& assignments) {
  for (const std::string& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos) throw ConfigError("override \"" + a + "\" is not key=value");
    set_config_value(config, a.substr(0, eq), a.substr(eq + 1));
  }
}

TrainConfig read_config(const std::string& path, const std::vector<std::string>& overrides) {
  TrainConfig config;
  if (!path.empty()) {
    if (!fs::exists(path)) throw ConfigError("config file " + path + " does not exist");
    config = load_config(path);
  }
  apply_overrides(config, overrides);
  apply_seed_override(config);
  config.validate();
  return config;
}

// Every qid in a SQuAD file, including questions the parser would drop.
std::vector<std::string> squad_question_ids(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": malformed JSON at byte " + std::to_string(e.byte));
  }
  std::vector<std::string> ids;
  for (const auto& article : root.at("data"))
    for (const auto& para : article.at("paragraphs"))
      for (const auto& qa : para.at("qas")) ids.push_back(qa.at("id").get<std::string>());
  return ids;
}

struct TrainArgs {
  std::string config;
  std::string squad;
  std::string snips;
  std::string out;
  std::vector<std::string> overrides;
  long warm_start_slu = -1;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  TrainConfig config = read_config(a.config, a.overrides);
  if (a.warm_start_slu >= 0) config.warm_start_slu = static_cast<std::size_t>(a.warm_start_slu);

  const fs::path squad_dir(a.squad), snips_dir(a.snips), out_dir(a.out);
  const fs::path squad_train = first_existing(squad_dir, {"train-v2.0.json", "train.json"});
  if (squad_train.empty()) throw IoError("no train-v2.0.json or train.json under " + squad_dir.string());
  const fs::path squad_dev = first_existing(squad_dir, {"dev-v2.0.json", "dev.json"});

  SquadOptions squad_opts;
  squad_opts.max_passage_tokens = config.max_passage_len;
  TrainingData data;
  data.mrc_train = parse_squad(squad_train, squad_opts).examples;
  if (!squad_dev.empty()) data.mrc_dev = parse_squad(squad_dev, squad_opts).examples;
  data.slu_train = parse_snips(snips_dir, Split::train);
  if (fs::exists(snips_dir / "valid")) data.slu_dev = parse_snips(snips_dir, Split::valid);

  fs::create_directories(out_dir);
  write_manifest(make_manifest(config, squad_dir, snips_dir, out_dir), out_dir / "manifest.json");

  JointModel model(config, build_model_vocab(config, data.mrc_train, data.slu_train));
  if (!config.glove_path.empty()) {
    const std::size_t n = load_glove(config.glove_path, model.vocab().words, model.embedder().words());
    out << "loaded " << n << " pretrained vectors\n";
  }
  TrainingOptions opts;
  opts.out_dir = out_dir;
  TrainingResult result = run_training(model, data, opts);
  out << "trained " << result.history.size() << " steps over " << config.epochs << " epoch(s); "
      << result.checkpoints.size() << " checkpoint(s) under " << (out_dir / "checkpoints").string() << '\n';
  return kExitOk;
}

struct PredictArgs {
  std::string checkpoint;
  std::string squad_dev;
  std::string out;
  std::string config;
};

int cmd_predict(const PredictArgs& a, std::ostream& out) {
  std::unique_ptr<JointModel> model;
  if (a.config.empty()) {
    model = load_model(a.checkpoint);
  } else {
    const TrainConfig config = read_config(a.config, {});
    model = load_model(a.checkpoint, &config);
  }
  SquadOptions opts;
  opts.max_passage_tokens = model->config().max_passage_len;
  opts.keep_unaligned = true;
  const auto examples = parse_squad(a.squad_dev, opts).examples;
  std::map<std::string, std::string> predictions = model->predict_answers(examples);
  for (const std::string& qid : squad_question_ids(a.squad_dev)) predictions.emplace(qid, "");

  const fs::path out_path(a.out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  std::ofstream f(out_path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write predictions " + out_path.string());
  write_predictions_json(f, predictions);
  if (!f) throw IoError("failed writing predictions " + out_path.string());
  out << "wrote " << predictions.size() << " predictions to " << out_path.string() << '\n';
  return kExitOk;
}

int cmd_evaluate(const std::string& pred_path, const std::string& gold_path, std::ostream& out) {
  std::ifstream in(pred_path, std::ios::binary);
  if (!in) throw IoError("cannot open predictions " + pred_path);
  std::map<std::string, std::string> predictions;
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    if (!j.is_object()) throw SchemaError(pred_path + ": predictions must be a JSON object");
    for (const auto& [qid, answer] : j.items()) {
      if (!answer.is_string()) throw SchemaError(pred_path + ": prediction for " + qid + " is not a string");
      predictions[qid] = answer.get<std::string>();
    }
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(pred_path + ": malformed JSON at byte " + std::to_string(e.byte));
  }
  out << report_to_json(evaluate_squad(predictions, load_squad_golds(gold_path))) << '\n';
  return kExitOk;
}

int cmd_gradcheck(std::vector<std::string> selectors, std::size_t size, std::uint64_t seed, std::ostream& out) {
  if (selectors.empty() || (selectors.size() == 1 && selectors[0] == "all")) selectors = gradcheck_selectors();
  GradcheckOptions opts;
  opts.instance_size = size;
  opts.seed = seed;
  bool pass = true;
  for (const std::string& s : selectors) {
    GradcheckReport r = gradcheck(s, opts);
    out << r.to_string();
    pass = pass && r.pass;
  }
  return pass ? kExitOk : kExitFailure;
}

int cmd_make_toy(const std::string& dir, std::size_t n_mrc, std::size_t n_slu, std::uint64_t seed, std::ostream& out) {
  const fs::path root(dir);
  fs::create_directories(root / "squad");
  ToyMrcOptions train_opts;
  train_opts.examples = n_mrc;
  train_opts.seed = seed;
  ToyMrcOptions dev_opts = train_opts;
  dev_opts.seed = seed + 1;
  auto write_text = [](const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + p.string());
    f << text;
  };
  write_text(root / "squad" / "train.json", toy_squad_json(train_opts));
  write_text(root / "squad" / "dev.json", toy_squad_json(dev_opts));
  write_snips(root / "snips" / "train", toy_slu_examples(n_slu, seed + 2));
  write_snips(root / "snips" / "valid", toy_slu_examples(n_slu / 4 + 1, seed + 3));
  write_text(root / "toy.cfg", config_to_string(toy_config()));
  out << "wrote toy corpora under " << root.string() << '\n';
  return kExitOk;
}

int exit_code_for(const Error& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const IntegrationError*>(&e)) return kExitCheckpoint;
  if (dynamic_cast<const CoverageError*>(&e)) return kExitCoverage;
  if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const SchemaError*>(&e) ||
      dynamic_cast<const AlignmentError*>(&e) || dynamic_cast<const ValidationError*>(&e) ||
      dynamic_cast<const LabelError*>(&e) || dynamic_cast<const IoError*>(&e)) {
    return kExitData;
  }
  return kExitFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Joint reading comprehension and language understanding trainer", "granenc"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train the joint model");
  train->add_option("config", train_args.config, "key=value config file");
  train->add_option("--squad", train_args.squad, "Directory with train.json and optional dev.json")->required();
  train->add_option("--snips", train_args.snips, "Directory with train/ and optional valid/ splits")->required();
  train->add_option("--out", train_args.out, "Output directory")->required();
  train->add_option("--set", train_args.overrides, "Override a config key (key=value)");
  train->add_option("--warm-start-slu", train_args.warm_start_slu, "SLU-only steps before joint training");

  PredictArgs predict_args;
  auto* predict = app.add_subcommand("predict", "Write qid to answer JSON for a SQuAD file");
  predict->add_option("checkpoint", predict_args.checkpoint, "Checkpoint file")->required();
  predict->add_option("--squad-dev", predict_args.squad_dev, "SQuAD 2.0 JSON file")->required();
  predict->add_option("--out", predict_args.out, "Output JSON file")->required();
  predict->add_option("--config", predict_args.config, "Config to build the model with instead of the stored one");

  std::string pred_path, gold_path;
  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against a SQuAD 2.0 file");
  evaluate->add_option("--pred", pred_path, "Predictions JSON")->required();
  evaluate->add_option("--gold", gold_path, "SQuAD 2.0 JSON")->required();

  std::vector<std::string> selectors;
  std::size_t gc_size = 4;
  std::uint64_t gc_seed = 7;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gc->add_option("selectors", selectors, "Modules to check (default all)");
  gc->add_option("--size", gc_size, "Sequence length of the check instance");
  gc->add_option("--seed", gc_seed, "Instance seed");

  std::string toy_dir;
  std::size_t toy_mrc = 32, toy_slu = 32;
  std::uint64_t toy_seed = 11;
  auto* toy = app.add_subcommand("make-toy", "Write synthetic toy corpora and a matching config");
  toy->add_option("--out", toy_dir, "Output directory")->required();
  toy->add_option("--mrc", toy_mrc, "Reading examples");
  toy->add_option("--slu", toy_slu, "Utterances");
  toy->add_option("--seed", toy_seed, "Seed");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) return cmd_train(train_args, out);
    if (*predict) return cmd_predict(predict_args, out);
    if (*evaluate) return cmd_evaluate(pred_path, gold_path, out);
    if (*gc) return cmd_gradcheck(selectors, gc_size, gc_seed, out);
    if (*toy) return cmd_make_toy(toy_dir, toy_mrc, toy_slu, toy_seed, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace granenc::cli
