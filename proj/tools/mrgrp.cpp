#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mrgrp/config.hpp"
#include "mrgrp/dataset_io.hpp"
#include "mrgrp/generator.hpp"
#include "mrgrp/parallel.hpp"
#include "mrgrp/training.hpp"

namespace {

constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;

mrgrp::RunConfig read_config(const std::string& path) {
  return path.empty() ? mrgrp::RunConfig{} : mrgrp::load_run_config(path);
}

/// MRGRP_SEED wins over --seed when set.
std::optional<std::uint64_t> effective_seed(const std::optional<std::uint64_t>& flag) {
  if (const char* env = std::getenv("MRGRP_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
      return v;
    } catch (const std::exception&) {
      throw mrgrp::ConfigError(std::string("MRGRP_SEED is not an unsigned integer: ") + env);
    }
  }
  return flag;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw mrgrp::Error("cannot write " + path);
  os << text;
  if (!os) throw mrgrp::Error("failed writing " + path);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Courier pickup-and-delivery route prediction"};
  app.require_subcommand(1);
  std::size_t threads = mrgrp::default_thread_count();
  app.add_option("--threads", threads, "Worker threads for data preparation and evaluation")
      ->check(CLI::PositiveNumber);

  std::string config_path, out_path, train_path, val_path, data_path, model_path, pred_path, log_path;
  std::string baselines = "disgreedy,timerank,tsfh,model";
  std::string predictor = "model";
  std::size_t count = 0;
  std::int64_t first_id = 0;
  std::optional<std::uint64_t> seed_flag;

  auto* gen = app.add_subcommand("generate", "Write a synthetic JSONL dataset");
  gen->add_option("--config", config_path, "TOML config");
  gen->add_option("--out", out_path, "Output JSONL")->required();
  gen->add_option("--count", count, "Number of instances")->required();
  gen->add_option("--seed", seed_flag, "Generator seed");
  gen->add_option("--first-id", first_id, "instance_id of the first instance");

  auto* tr = app.add_subcommand("train", "Train a model and write a checkpoint plus CSV log");
  tr->add_option("--train", train_path, "Training JSONL")->required();
  tr->add_option("--val", val_path, "Validation JSONL")->required();
  tr->add_option("--config", config_path, "TOML config");
  tr->add_option("--out", out_path, "Checkpoint path")->required();
  tr->add_option("--log", log_path, "Training log CSV (default: <out>.log.csv)");
  tr->add_option("--seed", seed_flag, "Training seed");

  auto* pr = app.add_subcommand("predict", "Greedy-decode a dataset into prediction JSONL");
  pr->add_option("--data", data_path, "Dataset JSONL")->required();
  pr->add_option("--model", model_path, "Checkpoint (needed for predictor 'model')");
  pr->add_option("--predictor", predictor, "model, tsfh, disgreedy or timerank");
  pr->add_option("--config", config_path, "TOML config for heuristic predictors");
  pr->add_option("--out", out_path, "Prediction JSONL")->required();

  auto* ev = app.add_subcommand("evaluate", "Score prediction JSONL against labels");
  ev->add_option("--pred", pred_path, "Prediction JSONL")->required();
  ev->add_option("--data", data_path, "Dataset JSONL")->required();
  ev->add_option("--out", out_path, "Metric CSV")->required();

  auto* cmp = app.add_subcommand("compare", "Metric CSV with one row per predictor");
  cmp->add_option("--data", data_path, "Dataset JSONL")->required();
  cmp->add_option("--model", model_path, "Checkpoint (needed for predictor 'model')");
  cmp->add_option("--baselines", baselines, "Comma-separated predictors: model,tsfh,disgreedy,timerank");
  cmp->add_option("--config", config_path, "TOML config for baseline-only runs");
  cmp->add_option("--out", out_path, "Metric CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitInput;
  }

  try {
    if (*gen) {
      auto cfg = read_config(config_path);
      if (auto s = effective_seed(seed_flag)) cfg.generator.seed = *s;
      mrgrp::save_dataset(out_path, mrgrp::generate_dataset(cfg.generator, count, first_id));
    } else if (*tr) {
      auto cfg = read_config(config_path);
      if (auto s = effective_seed(seed_flag)) cfg.train.seed = *s;
      const auto train_data = mrgrp::load_dataset(train_path);
      const auto val_data = mrgrp::load_dataset(val_path);
      const auto norm = mrgrp::dataset_norm_stats(train_data);
      mrgrp::Model model(cfg.model, norm, cfg.train.seed);
      const auto train_set = mrgrp::prepare(train_data, cfg.model, norm, threads);
      const auto val_set = mrgrp::prepare(val_data, cfg.model, norm, threads);
      const auto result = mrgrp::train(model, train_set, val_set, cfg.train, threads, [](const mrgrp::EpochLog& e) {
        std::cerr << "epoch " << e.epoch << " train_ce " << e.train_ce << " val_ce " << e.val_ce << " val_sr "
                  << e.val_sr << " val_lsd " << e.val_lsd << '\n';
      });
      mrgrp::save_model(out_path, model,
                        {{"best_epoch", result.best_epoch}, {"seed", cfg.train.seed}, {"epochs_run", result.log.size()}});
      write_text(log_path.empty() ? out_path + ".log.csv" : log_path, mrgrp::training_log_csv(result.log));
    } else if (*pr) {
      const auto data = mrgrp::load_dataset(data_path);
      if (predictor == "model") {
        if (model_path.empty()) throw mrgrp::ConfigError("predictor 'model' requires --model");
        const auto model = mrgrp::load_model(model_path);
        const auto prepared = mrgrp::prepare(data, model.cfg, model.norm, threads);
        mrgrp::save_predictions(out_path, mrgrp::predict(model, prepared, threads));
      } else {
        const auto mcfg = read_config(config_path).model;
        const auto prepared = mrgrp::prepare(data, mcfg, mrgrp::dataset_norm_stats(data), threads);
        mrgrp::save_predictions(out_path, mrgrp::heuristic_predictions(predictor, prepared, mcfg.heuristic, threads));
      }
    } else if (*ev) {
      const auto data = mrgrp::load_dataset(data_path);
      const auto records = mrgrp::load_predictions(pred_path);
      mrgrp::MetricReport report;
      report.rows.push_back(mrgrp::evaluate_predictions(records, data));
      write_text(out_path, report.to_csv());
    } else if (*cmp) {
      const auto names = split_list(baselines);
      if (names.empty()) throw mrgrp::ConfigError("--baselines lists no predictors");
      const bool need_model = std::find(names.begin(), names.end(), "model") != names.end();
      if (need_model && model_path.empty()) throw mrgrp::ConfigError("predictor 'model' requires --model");
      std::optional<mrgrp::Model> model;
      mrgrp::ModelConfig mcfg = read_config(config_path).model;
      mrgrp::NormStats norm;
      const auto data = mrgrp::load_dataset(data_path);
      if (!model_path.empty()) {
        model.emplace(mrgrp::load_model(model_path));
        mcfg = model->cfg;
        norm = model->norm;
      } else {
        norm = mrgrp::dataset_norm_stats(data);
      }
      const auto prepared = mrgrp::prepare(data, mcfg, norm, threads);
      const auto report = mrgrp::evaluate(prepared, model ? &*model : nullptr, names, threads);
      write_text(out_path, report.to_csv());
    }
  } catch (const mrgrp::TrainingError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const mrgrp::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return 0;
}
