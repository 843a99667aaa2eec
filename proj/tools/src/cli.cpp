#include "cli.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "price/eval.hpp"
#include "price/featurizer.hpp"
#include "price/synthetic.hpp"
#include "price/workload.hpp"

namespace price::cli {

namespace {

struct Corpus {
  Catalog catalog;
  StatsStore stats;
  std::vector<WorkloadRecord> records;
};

StatsStore load_stats_for(const std::string& path, const Catalog& catalog) {
  auto stats = StatsStore::load(path);
  stats.check_compatible(catalog);
  return stats;
}

/// "catalog,stats,workload"
std::unique_ptr<Corpus> load_corpus(const std::string& spec) {
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  for (std::string part; std::getline(ss, part, ',');) parts.push_back(part);
  if (parts.size() != 3) throw CLI::ValidationError("--corpus", "expected CATALOG,STATS,WORKLOAD, got '" + spec + "'");
  auto corpus = std::make_unique<Corpus>();
  corpus->catalog = Catalog::load_snapshot(parts[0]);
  corpus->stats = load_stats_for(parts[1], corpus->catalog);
  corpus->records = read_workload(parts[2]);
  return corpus;
}

struct Settings {
  // paths
  std::string schema, data, catalog, stats, workload, model, from, out, report_json, report_csv, addr = "-";
  std::vector<std::string> corpora;
  std::string query;
  // workload / parallelism
  std::size_t n = 1000;
  std::uint64_t min_card = 1;
  std::uint64_t seed = 42;
  unsigned threads = 1;
  // synthetic
  SyntheticOptions synth;
  std::string shape = "chain";
  // model and training
  ModelConfig config;
  TrainOptions train;
  bool baseline = false;
};

void add_training_flags(CLI::App& cmd, Settings& s) {
  cmd.add_option("--epochs", s.train.epochs, "Training epochs")->capture_default_str();
  cmd.add_option("--batch-size", s.train.batch_size, "Queries per optimizer step")->capture_default_str()->check(CLI::PositiveNumber);
  cmd.add_option("--lr", s.train.learning_rate, "Adam learning rate")->capture_default_str();
  cmd.add_option("--weight-decay", s.train.weight_decay, "Decoupled weight decay")->capture_default_str();
  cmd.add_option("--step-size", s.train.schedule.step_size, "Epochs per learning-rate decay step")->capture_default_str();
  cmd.add_option("--gamma", s.train.schedule.gamma, "Learning-rate decay factor")->capture_default_str();
  cmd.add_flag("--subqueries", s.train.include_subqueries, "Also train on every labeled connected sub-query");
  cmd.add_option("--seed", s.seed, "Shuffle and dropout seed")->capture_default_str();
  cmd.add_option("--out", s.out, "Checkpoint to write")->required();
}

void log_epoch(std::size_t epoch, double loss) { spdlog::info("epoch {} loss {:.5f}", epoch + 1, loss); }

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pretrained multi-table cardinality estimator"};
  app.require_subcommand(1);
  Settings s;

  auto* ingest = app.add_subcommand("ingest", "Load a schema and its CSV files into a catalog file");
  ingest->add_option("--schema", s.schema, "Schema JSON")->required()->check(CLI::ExistingFile);
  ingest->add_option("--data", s.data, "Directory with one <table>.csv per table")->required()->check(CLI::ExistingDirectory);
  ingest->add_option("--out", s.out, "Catalog file to write")->required();

  auto* synth = app.add_subcommand("synth", "Generate a synthetic correlated database (schema.json + CSVs)");
  synth->add_option("--shape", s.shape, "chain | star | cycle | tree")->capture_default_str();
  synth->add_option("--tables", s.synth.tables, "Number of tables")->capture_default_str();
  synth->add_option("--rows", s.synth.rows, "Mean rows per table")->capture_default_str();
  synth->add_option("--correlation", s.synth.correlation, "Attribute correlation in [0, 1]")->capture_default_str();
  synth->add_option("--skew", s.synth.skew, "Join fanout skew (>= 1)")->capture_default_str();
  synth->add_option("--nulls", s.synth.null_fraction, "Null fraction of non-key attributes")->capture_default_str();
  synth->add_option("--continuous", s.synth.continuous_attributes, "Continuous attributes per table")->capture_default_str();
  synth->add_option("--categorical", s.synth.categorical_attributes, "Categorical attributes per table")->capture_default_str();
  synth->add_option("--name", s.synth.name, "Database name")->capture_default_str();
  synth->add_option("--seed", s.seed, "Generator seed")->capture_default_str();
  synth->add_option("--out", s.out, "Output directory")->required();

  auto* stats = app.add_subcommand("stats", "Build per-column and per-join statistics");
  stats->add_option("--catalog", s.catalog, "Catalog file")->required()->check(CLI::ExistingFile);
  stats->add_option("--threads", s.threads, "Worker threads")->capture_default_str();
  stats->add_option("--out", s.out, "Statistics file to write")->required();

  auto* genwork = app.add_subcommand("genwork", "Generate a labeled training workload");
  genwork->add_option("--catalog", s.catalog, "Catalog file")->required()->check(CLI::ExistingFile);
  genwork->add_option("--stats", s.stats, "Statistics file")->required()->check(CLI::ExistingFile);
  genwork->add_option("--n", s.n, "Number of queries")->capture_default_str()->check(CLI::PositiveNumber);
  genwork->add_option("--seed", s.seed, "Workload seed")->capture_default_str();
  genwork->add_option("--min-card", s.min_card, "Redraw queries with fewer result rows (0 keeps empty results)")
      ->capture_default_str();
  genwork->add_option("--threads", s.threads, "Worker threads")->capture_default_str();
  genwork->add_option("--out", s.out, "JSONL workload to write")->required();

  auto* train = app.add_subcommand("train", "Pretrain a model on one or more databases");
  train->add_option("--corpus", s.corpora, "CATALOG,STATS,WORKLOAD (repeatable)")->required();
  train->add_option("--embed-dim", s.config.embed_dim, "Token embedding width")->capture_default_str();
  train->add_option("--heads", s.config.heads, "Attention heads")->capture_default_str();
  train->add_option("--blocks", s.config.blocks_per_stage, "Encoder blocks per stage")->capture_default_str();
  train->add_option("--mlp-hidden", s.config.mlp_hidden, "Hidden widths of the output MLP")->capture_default_str();
  train->add_option("--dropout", s.config.dropout, "Dropout probability")->capture_default_str();
  train->add_option("--init-seed", s.config.seed, "Parameter initialization seed")->capture_default_str();
  add_training_flags(*train, s);

  auto* finetune_cmd = app.add_subcommand("finetune", "Continue training a checkpoint on one database");
  finetune_cmd->add_option("--from", s.from, "Pretrained checkpoint")->required()->check(CLI::ExistingFile);
  finetune_cmd->add_option("--corpus", s.corpora, "CATALOG,STATS,WORKLOAD")->required()->expected(1);
  s.train.learning_rate = TrainOptions{}.finetune_defaults().learning_rate;
  add_training_flags(*finetune_cmd, s);

  auto* estimate = app.add_subcommand("estimate", "Estimate one query's cardinality");
  estimate->add_option("--model", s.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  estimate->add_option("--catalog", s.catalog, "Catalog file")->required()->check(CLI::ExistingFile);
  estimate->add_option("--stats", s.stats, "Statistics file")->required()->check(CLI::ExistingFile);
  estimate->add_option("--query", s.query, "SELECT COUNT(*) ... query")->required();

  auto* eval = app.add_subcommand("eval", "Report Q-ERROR and P-ERROR quantiles on a labeled workload");
  auto* model_opt = eval->add_option("--model", s.model, "Checkpoint")->check(CLI::ExistingFile);
  eval->add_flag("--baseline", s.baseline, "Evaluate the independence baseline instead of a model")->excludes(model_opt);
  eval->add_option("--catalog", s.catalog, "Catalog file")->required()->check(CLI::ExistingFile);
  eval->add_option("--stats", s.stats, "Statistics file")->required()->check(CLI::ExistingFile);
  eval->add_option("--workload", s.workload, "Labeled JSONL workload")->required()->check(CLI::ExistingFile);
  eval->add_option("--report-json", s.report_json, "Quantile report")->required();
  eval->add_option("--report-csv", s.report_csv, "Per-query rows")->required();
  eval->add_option("--threads", s.threads, "Worker threads")->capture_default_str();

  auto* serve = app.add_subcommand("serve", "Answer newline-delimited JSON estimation requests");
  serve->add_option("--model", s.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  serve->add_option("--catalog", s.catalog, "Catalog file")->required()->check(CLI::ExistingFile);
  serve->add_option("--stats", s.stats, "Statistics file")->required()->check(CLI::ExistingFile);
  serve->add_option("--addr", s.addr, "host:port to listen on, or - for standard input/output")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (ingest->parsed()) {
      auto catalog = load_schema(s.schema);
      catalog.ingest_directory(s.data);
      catalog.save_snapshot(s.out);
      spdlog::info("ingested {} tables into {}", catalog.tables().size(), s.out);
    } else if (synth->parsed()) {
      s.synth.shape = parse_schema_shape(s.shape);
      s.synth.seed = s.seed;
      write_database(generate_synthetic(s.synth), s.out);
      spdlog::info("wrote synthetic database to {}", s.out);
    } else if (stats->parsed()) {
      const auto catalog = Catalog::load_snapshot(s.catalog);
      const auto built = StatsStore::build(catalog, {.threads = s.threads});
      built.save(s.out);
      spdlog::info("statistics for {} tables written to {}", catalog.tables().size(), s.out);
    } else if (genwork->parsed()) {
      const auto catalog = Catalog::load_snapshot(s.catalog);
      const auto st = load_stats_for(s.stats, catalog);
      write_workload(s.out, generate_workload(catalog, st, {.count = s.n, .seed = s.seed, .threads = s.threads, .min_card = s.min_card}));
      spdlog::info("{} labeled queries written to {}", s.n, s.out);
    } else if (train->parsed() || finetune_cmd->parsed()) {
      std::vector<std::unique_ptr<Corpus>> loaded;
      std::vector<TrainingCorpus> corpora;
      for (const auto& spec : s.corpora) {
        loaded.push_back(load_corpus(spec));
        corpora.push_back({&loaded.back()->catalog, &loaded.back()->stats, loaded.back()->records});
      }
      s.train.seed = s.seed;
      s.train.on_epoch = log_epoch;
      const auto result = train->parsed() ? price::train(s.config, corpora, s.train)
                                          : price::finetune(load_checkpoint(s.from), corpora.front(), s.train);
      save_checkpoint(result.model, s.out);
      spdlog::info("checkpoint written to {}", s.out);
    } else if (estimate->parsed()) {
      const auto model = load_checkpoint(s.model);
      const auto catalog = Catalog::load_snapshot(s.catalog);
      const auto st = load_stats_for(s.stats, catalog);
      const auto query = parse_query(s.query, catalog);
      const double log_card = model.predict_log_card(featurize(query, catalog, st));
      nlohmann::ordered_json doc;
      doc["log_card"] = log_card;
      doc["card"] = std::max(1.0, std::exp(log_card));
      doc["baseline"] = baseline_estimate(query, catalog, st);
      out << doc.dump() << '\n';
    } else if (eval->parsed()) {
      if (s.model.empty() && !s.baseline) throw CLI::ValidationError("eval", "needs --model or --baseline");
      const auto catalog = Catalog::load_snapshot(s.catalog);
      const auto st = load_stats_for(s.stats, catalog);
      std::unique_ptr<Model> model;
      if (!s.baseline) model = std::make_unique<Model>(load_checkpoint(s.model));
      Estimator estimator = [&](const QuerySpec& q) {
        return model ? estimate_cardinality(*model, q, catalog, st) : baseline_estimate(q, catalog, st);
      };
      const auto report = evaluate(read_workload(s.workload), catalog, estimator, {.threads = s.threads});
      for (const auto& reason : report.skip_reasons) spdlog::warn("skipped {}", reason);
      write_report(report, s.report_json, s.report_csv);
      out << report.to_json() << '\n';
    } else if (serve->parsed()) {
      EstimationService service(load_checkpoint(s.model), Catalog::load_snapshot(s.catalog), StatsStore::load(s.stats));
      if (s.addr == "-") {
        serve_stream(service, std::cin, out);
      } else {
        const std::atomic<bool> stop{false};
        serve_tcp(service, s.addr, stop);
      }
    }
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ModelError& e) {
    err << "model error: " << e.what() << '\n';
    return kExitModel;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const QueryError& e) {
    err << "query error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return 0;
}

}  // namespace price::cli
