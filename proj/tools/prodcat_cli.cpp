// prodcat: multi-level retail product classification pipeline.
//
// Subcommands mirror the pipeline stages: preprocess, split, merge,
// build-vocab, inspect-embeddings, train, evaluate, predict. Exit codes:
// 0 success, 1 usage, 2 I/O, 3 data validation, 4 numerical failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "prodcat/checkpoint.hpp"
#include "prodcat/config.hpp"
#include "prodcat/corpus.hpp"
#include "prodcat/embedding.hpp"
#include "prodcat/metrics.hpp"
#include "prodcat/models.hpp"
#include "prodcat/textnorm.hpp"
#include "prodcat/train.hpp"
#include "prodcat/util.hpp"
#include "prodcat/vocab.hpp"

namespace {

using prodcat::DataError;
using prodcat::IoError;
using prodcat::NumericalError;
using prodcat::UsageError;

struct GlobalOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
};

prodcat::config::KeyValueConfig load_config(const GlobalOpts& g) {
  prodcat::config::KeyValueConfig cfg;
  if (!g.config_path.empty()) {
    cfg = prodcat::config::KeyValueConfig::load(g.config_path);
  }
  cfg.validate();
  return cfg;
}

char delimiter_from(const prodcat::config::KeyValueConfig& cfg,
                    const std::string& flag_value) {
  std::string d = flag_value.empty() ? cfg.get("csv.delimiter", ";") : flag_value;
  if (d.size() != 1) throw DataError("delimiter must be a single character");
  return d[0];
}

prodcat::corpus::ColumnMap column_map_from(
    const prodcat::config::KeyValueConfig& cfg) {
  prodcat::corpus::ColumnMap map;
  map.item = cfg.get("csv.col_item", map.item);
  map.segment = cfg.get("csv.col_segment", map.segment);
  map.category = cfg.get("csv.col_category", map.category);
  map.subcategory = cfg.get("csv.col_subcategory", map.subcategory);
  map.product = cfg.get("csv.col_product", map.product);
  return map;
}

prodcat::corpus::Corpus load_clean(const std::string& path,
                                   const prodcat::config::KeyValueConfig& cfg,
                                   char delimiter, unsigned threads,
                                   prodcat::corpus::CleanStats* stats = nullptr,
                                   std::size_t* rejected = nullptr) {
  prodcat::corpus::LoadResult loaded = prodcat::corpus::load_csv(
      path, column_map_from(cfg), delimiter);
  if (rejected) *rejected = loaded.rejected.size();
  prodcat::textnorm::Normalizer normalizer(
      prodcat::config::norm_config_from(cfg));
  return prodcat::corpus::clean(loaded.records, normalizer, stats, threads);
}

prodcat::models::ModelConfig model_config_from(
    const prodcat::config::KeyValueConfig& cfg, prodcat::models::Arch arch) {
  prodcat::models::ModelConfig mc;
  mc.arch = arch;
  mc.embed_dim = static_cast<std::size_t>(
      cfg.get_int("model.embed_dim", static_cast<long long>(mc.embed_dim)));
  mc.max_len = static_cast<std::size_t>(
      cfg.get_int("model.max_len", static_cast<long long>(mc.max_len)));
  mc.spatial_dropout_rate =
      cfg.get_double("model.spatial_dropout", mc.spatial_dropout_rate);
  mc.head_dropout = cfg.get_double(
      "model.head_dropout",
      arch == prodcat::models::Arch::transformer ? 0.5 : mc.head_dropout);
  if (cfg.get("model.pooling", "first") == "mean") {
    mc.pooling = prodcat::models::Pooling::mean;
  }
  if (cfg.has("model.lstm_layers")) {
    mc.lstm_layers.clear();
    for (const std::string& item : cfg.get_strings("model.lstm_layers")) {
      std::size_t colon = item.find(':');
      prodcat::models::LstmLayerSpec spec;
      try {
        if (colon == std::string::npos) {
          spec.units = std::stoull(item);
          spec.dropout = 0.0;
        } else {
          spec.units = std::stoull(item.substr(0, colon));
          spec.dropout = std::stod(item.substr(colon + 1));
        }
      } catch (const std::exception&) {
        throw DataError("config key 'model.lstm_layers': malformed entry '" +
                        item + "'");
      }
      mc.lstm_layers.push_back(spec);
    }
  }
  mc.attention.num_heads = static_cast<std::size_t>(cfg.get_int(
      "model.attn_heads", static_cast<long long>(mc.attention.num_heads)));
  mc.attention.d_model = static_cast<std::size_t>(cfg.get_int(
      "model.attn_d_model", static_cast<long long>(mc.attention.d_model)));
  mc.attention.d_k = static_cast<std::size_t>(
      cfg.get_int("model.attn_d_k",
                  static_cast<long long>(mc.attention.d_model /
                                         mc.attention.num_heads)));
  mc.attention.ff_dim = static_cast<std::size_t>(cfg.get_int(
      "model.attn_ff_dim", static_cast<long long>(mc.attention.ff_dim)));
  mc.attention.num_blocks = static_cast<std::size_t>(cfg.get_int(
      "model.attn_blocks", static_cast<long long>(mc.attention.num_blocks)));
  return mc;
}

prodcat::train::TrainConfig train_config_from(
    const prodcat::config::KeyValueConfig& cfg, prodcat::models::Arch arch) {
  prodcat::train::TrainConfig tc =
      prodcat::train::TrainConfig::defaults_for(arch);
  tc.lr = cfg.get_double("train.lr", tc.lr);
  tc.batch_size = static_cast<std::size_t>(
      cfg.get_int("train.batch_size", static_cast<long long>(tc.batch_size)));
  tc.max_epochs = static_cast<std::size_t>(
      cfg.get_int("train.epochs", static_cast<long long>(tc.max_epochs)));
  tc.patience = static_cast<std::size_t>(
      cfg.get_int("train.patience", static_cast<long long>(tc.patience)));
  tc.seed = static_cast<std::uint64_t>(
      cfg.get_int("train.seed", static_cast<long long>(tc.seed)));
  tc.max_words = static_cast<std::size_t>(
      cfg.get_int("train.max_words", static_cast<long long>(tc.max_words)));
  const std::string loss = cfg.get("train.loss", "");
  if (loss == "ce") tc.loss = prodcat::train::LossKind::ce;
  if (loss == "focal") tc.loss = prodcat::train::LossKind::focal;
  tc.focal.alpha = cfg.get_double("train.alpha", tc.focal.alpha);
  if (cfg.has("train.gammas")) {
    std::vector<double> gammas = cfg.get_doubles("train.gammas");
    if (gammas.size() != 4) {
      throw DataError("config key 'train.gammas': expected four values");
    }
    for (std::size_t i = 0; i < 4; ++i) tc.focal.gamma_per_head[i] = gammas[i];
  }
  const std::string opt = cfg.get("train.optimizer", "");
  if (opt == "adam") tc.adam.adamw = false;
  if (opt == "adamw") tc.adam.adamw = true;
  tc.adam.weight_decay =
      cfg.get_double("train.weight_decay", tc.adam.weight_decay);
  return tc;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open output file: " + path);
  out << content;
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-level retail product classifier"};
  app.require_subcommand(1);

  GlobalOpts global;
  app.add_option("--config", global.config_path, "flat key=value config file");
  app.add_option("--seed", global.seed, "override the random seed");
  app.add_option("--threads", global.threads,
                 "preprocessing worker threads");

  int exit_code = 0;

  // ---- preprocess ----
  auto* pre = app.add_subcommand("preprocess",
                                 "clean and normalize a raw CSV dataset");
  struct {
    std::string input, output, delimiter;
  } pre_opts;
  pre->add_option("--input", pre_opts.input, "raw CSV file")->required();
  pre->add_option("--output", pre_opts.output, "cleaned CSV file")->required();
  pre->add_option("--delimiter", pre_opts.delimiter, "field delimiter");
  pre->callback([&] {
    auto cfg = load_config(global);
    char delim = delimiter_from(cfg, pre_opts.delimiter);
    prodcat::corpus::CleanStats stats;
    std::size_t rejected = 0;
    prodcat::corpus::Corpus corpus = load_clean(
        pre_opts.input, cfg, delim, global.threads, &stats, &rejected);
    prodcat::corpus::write_csv(pre_opts.output, corpus, column_map_from(cfg),
                               delim);
    std::cout << "OK preprocess records=" << corpus.size()
              << " rejected=" << rejected
              << " dropped_missing=" << stats.dropped_missing
              << " dropped_empty=" << stats.dropped_empty_text
              << " dropped_duplicates=" << stats.dropped_duplicates << "\n";
  });

  // ---- split ----
  auto* split = app.add_subcommand(
      "split", "stratified train/validation/test partition");
  struct {
    std::string input, prefix, ratios, stratify = "product", delimiter;
    std::uint64_t seed = 0;
  } split_opts;
  split->add_option("--input", split_opts.input, "cleaned CSV")->required();
  split->add_option("--output-prefix", split_opts.prefix,
                    "writes <prefix>.train.csv/.val.csv/.test.csv")
      ->required();
  split->add_option("--ratios", split_opts.ratios,
                    "train,val,test fractions (default 0.7,0.15,0.15)");
  split->add_option("--seed", split_opts.seed, "shuffle seed");
  split->add_option("--stratify-by", split_opts.stratify,
                    "segment|category|subcategory|product");
  split->add_option("--delimiter", split_opts.delimiter, "field delimiter");
  split->callback([&] {
    auto cfg = load_config(global);
    char delim = delimiter_from(cfg, split_opts.delimiter);
    prodcat::corpus::Corpus corpus =
        load_clean(split_opts.input, cfg, delim, global.threads);

    prodcat::corpus::SplitSpec spec;
    std::string ratios = split_opts.ratios.empty()
                             ? cfg.get("split.ratios", "")
                             : split_opts.ratios;
    if (!ratios.empty()) {
      prodcat::config::KeyValueConfig tmp;
      tmp.set("split.ratios", ratios);
      tmp.validate();
      std::vector<double> r = tmp.get_doubles("split.ratios");
      spec.ratios = {r[0], r[1], r[2]};
    }
    spec.seed = global.seed.value_or(
        split->count("--seed") ? split_opts.seed
                               : static_cast<std::uint64_t>(
                                     cfg.get_int("split.seed", 0)));
    spec.stratify_level = prodcat::corpus::level_from_name(
        split->count("--stratify-by")
            ? split_opts.stratify
            : cfg.get("split.stratify_by", split_opts.stratify));

    prodcat::corpus::Splits splits =
        prodcat::corpus::stratified_split(corpus, spec);
    const auto map = column_map_from(cfg);
    prodcat::corpus::write_csv(split_opts.prefix + ".train.csv", splits.train,
                               map, delim);
    prodcat::corpus::write_csv(split_opts.prefix + ".val.csv", splits.val, map,
                               delim);
    prodcat::corpus::write_csv(split_opts.prefix + ".test.csv", splits.test,
                               map, delim);
    std::cout << "OK split train=" << splits.train.size()
              << " val=" << splits.val.size()
              << " test=" << splits.test.size() << "\n";
  });

  // ---- merge ----
  auto* merge = app.add_subcommand(
      "merge", "merge an augmentation corpus with label harmonization");
  struct {
    std::string base, extra, map_path, output, delimiter;
  } merge_opts;
  merge->add_option("--base", merge_opts.base, "base CSV")->required();
  merge->add_option("--extra", merge_opts.extra, "augmentation CSV")
      ->required();
  merge->add_option("--map", merge_opts.map_path,
                    "two-column from;to harmonization CSV");
  merge->add_option("--output", merge_opts.output, "merged CSV")->required();
  merge->add_option("--delimiter", merge_opts.delimiter, "field delimiter");
  merge->callback([&] {
    auto cfg = load_config(global);
    char delim = delimiter_from(cfg, merge_opts.delimiter);
    prodcat::corpus::Corpus base =
        load_clean(merge_opts.base, cfg, delim, global.threads);
    prodcat::corpus::Corpus extra =
        load_clean(merge_opts.extra, cfg, delim, global.threads);
    prodcat::corpus::LabelMap label_map;
    if (!merge_opts.map_path.empty()) {
      label_map = prodcat::corpus::load_label_map(merge_opts.map_path, delim);
    }
    prodcat::corpus::MergeStats stats;
    prodcat::corpus::Corpus merged =
        prodcat::corpus::merge_augmentation(base, extra, label_map, &stats);
    prodcat::corpus::write_csv(merge_opts.output, merged, column_map_from(cfg),
                               delim);
    std::cout << "OK merge records=" << merged.size()
              << " duplicates_removed=" << stats.duplicates_removed
              << " unmapped_labels=" << stats.unmapped_labels << "\n";
  });

  // ---- build-vocab ----
  auto* bv = app.add_subcommand("build-vocab",
                                "token vocabulary from a train split");
  struct {
    std::string input, output, delimiter;
    std::size_t max_words = 42000;
  } bv_opts;
  bv->add_option("--input", bv_opts.input, "cleaned train CSV")->required();
  bv->add_option("--output", bv_opts.output, "vocabulary file")->required();
  bv->add_option("--max-words", bv_opts.max_words, "vocabulary capacity");
  bv->add_option("--delimiter", bv_opts.delimiter, "field delimiter");
  bv->callback([&] {
    auto cfg = load_config(global);
    char delim = delimiter_from(cfg, bv_opts.delimiter);
    prodcat::corpus::Corpus corpus =
        load_clean(bv_opts.input, cfg, delim, global.threads);
    std::vector<std::string> texts;
    texts.reserve(corpus.size());
    for (const auto& rec : corpus.records) texts.push_back(rec.item_text);
    prodcat::vocab::Vocabulary vocabulary =
        prodcat::vocab::Vocabulary::build(texts, bv_opts.max_words);
    vocabulary.save(bv_opts.output);
    std::cout << "OK build-vocab size=" << vocabulary.size()
              << " tokens=" << vocabulary.tokens().size() << "\n";
  });

  // ---- inspect-embeddings ----
  auto* ie = app.add_subcommand("inspect-embeddings",
                                "report on a pre-trained embedding file");
  struct {
    std::string file, vocab_path;
  } ie_opts;
  ie->add_option("--file", ie_opts.file, "embedding text file")->required();
  ie->add_option("--vocab", ie_opts.vocab_path, "vocabulary for coverage");
  ie->callback([&] {
    prodcat::embedding::EmbeddingTable table =
        prodcat::embedding::load_embedding_file(ie_opts.file);
    std::cout << "dim=" << table.dim << " tokens=" << table.vectors.size();
    if (!ie_opts.vocab_path.empty()) {
      prodcat::vocab::Vocabulary vocabulary =
          prodcat::vocab::Vocabulary::load(ie_opts.vocab_path);
      prodcat::embedding::EmbeddingMatrix matrix =
          prodcat::embedding::build_matrix(table, vocabulary,
                                           global.seed.value_or(0));
      char cov[32];
      std::snprintf(cov, sizeof(cov), "%.4f", matrix.coverage);
      std::cout << " coverage=" << cov;
    }
    std::cout << "\nOK inspect-embeddings\n";
  });

  // ---- train ----
  auto* tr = app.add_subcommand("train", "train a classifier");
  struct {
    std::string train_path, val_path, out, model = "bilstm", loss, delimiter;
    std::string embeddings, history;
    bool freeze_embeddings = false;
    bool retrain_with_val = false;
  } tr_opts;
  tr->add_option("--train", tr_opts.train_path, "train CSV")->required();
  tr->add_option("--val", tr_opts.val_path, "validation CSV")->required();
  tr->add_option("--out", tr_opts.out, "checkpoint path")->required();
  tr->add_option("--model", tr_opts.model, "bilstm|transformer");
  tr->add_option("--loss", tr_opts.loss, "ce|focal");
  tr->add_option("--embeddings", tr_opts.embeddings,
                 "pre-trained embedding file (bilstm)");
  tr->add_option("--history", tr_opts.history,
                 "history CSV path (default <out>.history.csv)");
  tr->add_option("--delimiter", tr_opts.delimiter, "field delimiter");
  tr->add_flag("--freeze-embeddings", tr_opts.freeze_embeddings,
               "do not fine-tune pre-trained embeddings");
  tr->add_flag("--retrain-with-val", tr_opts.retrain_with_val,
               "after model selection, retrain on train+val");
  tr->callback([&] {
    auto cfg = load_config(global);
    char delim = delimiter_from(cfg, tr_opts.delimiter);
    prodcat::models::Arch arch = prodcat::models::arch_from_name(tr_opts.model);

    prodcat::corpus::Corpus train_corpus =
        load_clean(tr_opts.train_path, cfg, delim, global.threads);
    prodcat::corpus::Corpus val_corpus =
        load_clean(tr_opts.val_path, cfg, delim, global.threads);

    prodcat::models::ModelConfig mc = model_config_from(cfg, arch);
    prodcat::train::TrainConfig tc = train_config_from(cfg, arch);
    if (!tr_opts.loss.empty()) {
      if (tr_opts.loss == "ce") {
        tc.loss = prodcat::train::LossKind::ce;
      } else if (tr_opts.loss == "focal") {
        tc.loss = prodcat::train::LossKind::focal;
      } else {
        throw UsageError("unknown loss: " + tr_opts.loss);
      }
    }
    if (global.seed) tc.seed = *global.seed;
    tc.freeze_embeddings = tr_opts.freeze_embeddings;

    std::optional<prodcat::embedding::EmbeddingTable> table;
    if (!tr_opts.embeddings.empty()) {
      table = prodcat::embedding::load_embedding_file(tr_opts.embeddings);
    }
    prodcat::textnorm::NormalizerConfig norm =
        prodcat::config::norm_config_from(cfg);

    prodcat::train::TrainResult result = prodcat::train::fit(
        mc, tc, train_corpus, val_corpus, norm, table ? &*table : nullptr);

    if (tr_opts.retrain_with_val && !result.diverged) {
      prodcat::corpus::Corpus combined = prodcat::corpus::merge_augmentation(
          train_corpus, val_corpus, {}, nullptr);
      result = prodcat::train::fit(mc, tc, combined, val_corpus, norm,
                                   table ? &*table : nullptr);
    }

    result.checkpoint.save(tr_opts.out);
    const std::string history_path =
        tr_opts.history.empty() ? tr_opts.out + ".history.csv"
                                : tr_opts.history;
    write_text_file(history_path, prodcat::train::history_csv(result.history));

    if (result.diverged) {
      std::cerr << "training diverged (non-finite loss); last good "
                   "checkpoint retained at "
                << tr_opts.out << "\n";
      exit_code = 4;
      return;
    }
    std::cout << "OK train best_epoch=" << result.best_epoch
              << " val_macro_f1_mean=" << result.best_metric
              << " epochs=" << result.history.size() << "\n";
  });

  // ---- evaluate ----
  auto* ev = app.add_subcommand("evaluate", "evaluate a checkpoint");
  struct {
    std::string model, data, report, vocab_path, delimiter;
  } ev_opts;
  ev->add_option("--model", ev_opts.model, "checkpoint")->required();
  ev->add_option("--data", ev_opts.data, "evaluation CSV")->required();
  ev->add_option("--report", ev_opts.report, "JSON report path");
  ev->add_option("--vocab", ev_opts.vocab_path,
                 "cross-check an external vocabulary file");
  ev->add_option("--delimiter", ev_opts.delimiter, "field delimiter");
  ev->callback([&] {
    auto cfg = load_config(global);
    char delim = delimiter_from(cfg, ev_opts.delimiter);
    prodcat::Checkpoint ckpt = prodcat::Checkpoint::load(ev_opts.model);
    if (!ev_opts.vocab_path.empty()) {
      prodcat::vocab::Vocabulary external =
          prodcat::vocab::Vocabulary::load(ev_opts.vocab_path);
      if (external.hash() != ckpt.vocab_hash()) {
        throw DataError("vocabulary hash mismatch between checkpoint and " +
                        ev_opts.vocab_path);
      }
    }
    // Evaluation data is normalized with the checkpoint's own config.
    prodcat::config::KeyValueConfig data_cfg = cfg;
    prodcat::corpus::LoadResult loaded = prodcat::corpus::load_csv(
        ev_opts.data, column_map_from(data_cfg), delim);
    prodcat::textnorm::Normalizer normalizer(ckpt.norm);
    prodcat::corpus::Corpus data =
        prodcat::corpus::clean(loaded.records, normalizer, nullptr,
                               global.threads);

    prodcat::train::EvalOutcome outcome = prodcat::train::evaluate(ckpt, data);
    if (!ev_opts.report.empty()) {
      write_text_file(ev_opts.report,
                      prodcat::metrics::to_json(outcome.report, ckpt.labels));
    }
    std::cout << "OK evaluate seg_f1=" << outcome.report.heads[0].macro_f1
              << " cat_f1=" << outcome.report.heads[1].macro_f1
              << " sub_f1=" << outcome.report.heads[2].macro_f1
              << " prod_f1=" << outcome.report.heads[3].macro_f1
              << " mean=" << outcome.report.macro_f1_mean
              << " skipped_unseen=" << outcome.report.skipped_unseen << "\n";
  });

  // ---- predict ----
  auto* pr = app.add_subcommand("predict", "classify one description");
  struct {
    std::string model, text;
  } pr_opts;
  pr->add_option("--model", pr_opts.model, "checkpoint")->required();
  pr->add_option("--text", pr_opts.text, "raw item description")->required();
  pr->callback([&] {
    prodcat::Checkpoint ckpt = prodcat::Checkpoint::load(pr_opts.model);
    std::optional<prodcat::train::Prediction> pred =
        prodcat::train::predict(ckpt, pr_opts.text);
    if (!pred) {
      std::cout << "OK predict unclassifiable=1\n";
      return;
    }
    static const char* names[4] = {"segment", "category", "subcategory",
                                   "product"};
    for (int h = 0; h < 4; ++h) {
      char prob[32];
      std::snprintf(prob, sizeof(prob), "%.6f",
                    pred->probabilities[static_cast<std::size_t>(h)]);
      std::cout << names[h] << "\t"
                << pred->labels[static_cast<std::size_t>(h)] << "\t" << prob
                << "\n";
    }
    std::cout << "OK predict unclassifiable=0\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return exit_code;
}
