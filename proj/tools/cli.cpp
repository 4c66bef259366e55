#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tgnet/checkpoint.hpp"
#include "tgnet/data.hpp"
#include "tgnet/eval.hpp"
#include "tgnet/model.hpp"
#include "tgnet/search.hpp"
#include "tgnet/stopwords.hpp"
#include "tgnet/train.hpp"

namespace tgnet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  Hyperparams hp;
  std::uint64_t seed = kDefaultSeed;
  std::size_t threads = 1;
  std::string config_file;

  // preprocess
  std::string train_path, valid_path, test_path, out_dir;
  // shared data selection
  std::string data_dir, split = "test", input;
  // train
  std::string checkpoint, log_path, ablation = "full";
  std::size_t epochs = 50;
  std::size_t eval_every = 0;
  std::size_t patience = 3;
  double target_nll = 0.0;
  // predict / eval / stats
  std::string predictions, json_path, corpus, post_mode = "train-domain";
  bool length_normalize = false;
};

json to_json(const RunConfig& c, const std::string& command) {
  return json{{"command", command},
              {"hyperparams", c.hp},
              {"seed", c.seed},
              {"threads", c.threads},
              {"config_file", c.config_file},
              {"train", c.train_path},
              {"valid", c.valid_path},
              {"test", c.test_path},
              {"out", c.out_dir},
              {"data", c.data_dir},
              {"split", c.split},
              {"input", c.input},
              {"checkpoint", c.checkpoint},
              {"log", c.log_path},
              {"ablation", c.ablation},
              {"epochs", c.epochs},
              {"eval_every", c.eval_every},
              {"patience", c.patience},
              {"target_nll", c.target_nll},
              {"predictions", c.predictions},
              {"json", c.json_path},
              {"corpus", c.corpus},
              {"post_mode", c.post_mode},
              {"length_normalize", c.length_normalize}};
}

void add_model_flags(CLI::App& app, RunConfig& c) {
  auto& hp = c.hp;
  app.add_option("--embedding-dim", hp.embedding_dim, "Word embedding size d_e");
  app.add_option("--hidden-dim", hp.hidden_dim, "Memory bank / decoder width d (even)");
  app.add_option("--lambda", hp.lambda, "Weight of the plain context encoding in (0, 1)");
  app.add_option("--vocab-size", hp.vocab_size, "Vocabulary cap, special tokens included");
  app.add_option("--dropout", hp.dropout, "Dropout rate");
  app.add_option("--batch-size", hp.batch_size, "Triplets per batch");
  app.add_option("--learning-rate", hp.learning_rate, "Initial Adam learning rate");
  app.add_option("--clip-norm", hp.clip_norm, "Global gradient norm limit");
  app.add_option("--beam-size", hp.beam_size, "Beam width");
  app.add_option("--max-depth", hp.max_depth, "Maximum generated phrase length");
  app.add_option("--init-range", hp.init_range, "Uniform initialization half-width");
  app.add_option("--max-context-len", hp.max_context_len, "Context truncation length");
  app.add_option("--seed", c.seed, "Random seed")->envname("TGNET_SEED");
  app.add_option("--threads", c.threads, "Worker threads for predict")->check(CLI::PositiveNumber);
  app.add_option("--config", c.config_file, "key=value settings file (flags override it)");
}

void add_data_flags(CLI::App& app, RunConfig& c) {
  app.add_option("--data", c.data_dir, "Directory written by preprocess");
  app.add_option("--split", c.split, "Split inside --data")->check(CLI::IsMember({"train", "valid", "test"}));
  app.add_option("--input", c.input, "Explicit cache file instead of --data/--split");
}

// "--config path" or "--config=path" anywhere after the subcommand.
std::string find_config_path(const std::vector<std::string>& args) {
  for (std::size_t i = 2; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return {};
}

// key=value lines become flags placed ahead of the real ones, so explicit
// flags win (options take the last value).
std::vector<std::string> config_flags(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read config file " + path);
  std::vector<std::string> flags;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    };
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    auto key = trim(line.substr(0, eq));
    std::replace(key.begin(), key.end(), '_', '-');
    if (key == "config") throw UsageError(path + ": nested config files are not supported");
    flags.push_back("--" + key);
    flags.push_back(trim(line.substr(eq + 1)));
  }
  return flags;
}

fs::path split_cache(const std::string& dir, const std::string& split) {
  return fs::path(dir) / (split + ".cache.jsonl");
}

fs::path input_cache(const RunConfig& c) {
  if (!c.input.empty()) return c.input;
  if (c.data_dir.empty()) throw UsageError("either --data or --input is required");
  return split_cache(c.data_dir, c.split);
}

void write_json_output(const std::string& path, const json& j, std::ostream& out) {
  if (path.empty()) return;
  if (path == "-") {
    out << j.dump(2) << '\n';
    return;
  }
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path);
  f << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

int cmd_preprocess(const RunConfig& c, std::ostream& out) {
  const EncodeOptions options{c.hp.max_context_len};
  const auto train = load_corpus(c.train_path);
  if (train.documents.empty()) throw DataError("no usable documents in " + c.train_path);
  const auto vocab = Vocabulary::build(train.documents, c.hp.vocab_size);
  fs::create_directories(c.out_dir);
  vocab.save(fs::path(c.out_dir) / "vocab.txt");

  json summary{{"vocab_size", vocab.size()}, {"config", to_json(c, "preprocess")}};
  auto emit = [&](const std::string& split, const Corpus& corpus) {
    const auto cache = build_cache(corpus.documents, vocab, options);
    save_cache(split_cache(c.out_dir, split), cache);
    summary[split] = {{"lines", corpus.stats.lines},
                      {"documents", corpus.stats.documents},
                      {"malformed", corpus.stats.malformed},
                      {"dropped_keyphrases", corpus.stats.dropped_keyphrases}};
    out << split << ": " << corpus.stats.documents << " documents (" << corpus.stats.malformed
        << " malformed lines skipped)\n";
  };
  emit("train", train);
  if (!c.valid_path.empty()) emit("valid", load_corpus(c.valid_path));
  if (!c.test_path.empty()) emit("test", load_corpus(c.test_path));
  std::ofstream meta(fs::path(c.out_dir) / "preprocess.json");
  meta << summary.dump(2) << '\n';
  out << "vocabulary: " << vocab.size() << " entries\n";
  return kExitOk;
}

int cmd_train(RunConfig c, std::ostream& out) {
  if (c.data_dir.empty()) throw UsageError("train needs --data");
  const auto vocab = Vocabulary::load(fs::path(c.data_dir) / "vocab.txt");
  const auto train_docs = load_cache(split_cache(c.data_dir, "train"));
  const auto valid_path = split_cache(c.data_dir, "valid");
  if (!fs::exists(valid_path)) throw DataError("missing validation split " + valid_path.string());
  const auto valid_docs = load_cache(valid_path);
  const auto train = triplets_from_cache(train_docs);
  const auto valid = triplets_from_cache(valid_docs);
  if (train.empty() || valid.empty()) throw DataError("train and valid splits need keyphrases");

  // The output layer matches the vocabulary actually built.
  c.hp.vocab_size = vocab.size();
  const auto ablation = parse_ablation(c.ablation);
  if (c.log_path.empty()) c.log_path = c.checkpoint + ".log.jsonl";

  Rng rng(c.seed);
  auto model = build_model<float>(c.hp, ablation, rng);
  std::ofstream log(c.log_path);
  if (!log) throw DataError("cannot write training log " + c.log_path);

  TrainConfig tc;
  tc.schedule.eval_every = c.eval_every;
  tc.schedule.patience = c.patience;
  tc.max_epochs = c.epochs;
  tc.target_valid_nll = c.target_nll;
  tc.log = &log;
  tc.run_config = to_json(c, "train");
  const auto result = train_loop(std::move(model), train, valid, tc, rng);

  Checkpoint ckpt{vocab, result.best, result.optimizer, result.best_perplexity};
  save_checkpoint(c.checkpoint, ckpt);
  out << "steps " << result.steps << ", epochs " << result.epochs << ", best validation perplexity "
      << result.best_perplexity << (result.early_stopped ? " (early stop)" : "") << '\n';
  return kExitOk;
}

std::string format_prediction_line(const std::vector<Phrase>& phrases) {
  std::string line;
  for (std::size_t i = 0; i < phrases.size(); ++i) {
    if (i) line += ';';
    for (std::size_t t = 0; t < phrases[i].size(); ++t) {
      if (t) line += ' ';
      line += phrases[i][t];
    }
  }
  return line;
}

std::vector<Phrase> parse_prediction_line(const std::string& line) {
  std::vector<Phrase> out;
  std::stringstream ss(line);
  std::string part;
  while (std::getline(ss, part, ';')) {
    std::stringstream ts(part);
    Phrase p;
    std::string tok;
    while (ts >> tok) p.push_back(tok);
    if (!p.empty()) out.push_back(std::move(p));
  }
  return out;
}

int cmd_predict(const RunConfig& c, const CLI::App& sub, std::ostream& out) {
  const auto ckpt = load_checkpoint(c.checkpoint);
  const auto& params = ckpt.params;
  if (sub.count("--ablation") && parse_ablation(c.ablation) != params.ablation) {
    throw UsageError("checkpoint was trained with ablation '" +
                     std::string(ablation_name(params.ablation)) + "', not '" + c.ablation + "'");
  }
  const auto docs = load_cache(input_cache(c));
  BeamOptions beam;
  beam.beam_size = c.hp.beam_size;
  beam.max_depth = c.hp.max_depth;
  beam.length_normalize = c.length_normalize;
  if (beam.beam_size == 0 || beam.max_depth == 0) {
    throw UsageError("--beam-size and --max-depth must be positive");
  }
  const auto mode = parse_post_mode(c.post_mode);
  const EncodeOptions enc{params.hp.max_context_len};

  std::vector<std::string> lines(docs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < docs.size(); i = next++) {
      const auto source = encode_source(docs[i].document, ckpt.vocab, enc);
      const auto pred = postprocess(predict(params, source, beam), mode);
      lines[i] = format_prediction_line(render_phrases(pred, ckpt.vocab, source.oov_words));
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(c.threads, docs.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::ofstream f(c.predictions);
  if (!f) throw DataError("cannot write predictions " + c.predictions);
  for (const auto& l : lines) f << l << '\n';
  out << "wrote predictions for " << docs.size() << " documents to " << c.predictions << '\n';
  return kExitOk;
}

int cmd_eval(const RunConfig& c, std::ostream& out) {
  const auto docs = load_cache(input_cache(c));
  std::ifstream in(c.predictions);
  if (!in) throw DataError("cannot read predictions " + c.predictions);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  if (lines.size() != docs.size()) {
    throw DataError("predictions file has " + std::to_string(lines.size()) + " lines for " +
                    std::to_string(docs.size()) + " documents");
  }
  std::vector<EvalDocument> eval_docs;
  eval_docs.reserve(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto& d = docs[i].document;
    eval_docs.push_back({d.title, d.context(), d.keyphrases, parse_prediction_line(lines[i])});
  }
  const auto report = evaluate(eval_docs);
  out << format_report(report);
  write_json_output(c.json_path, json(report), out);
  return kExitOk;
}

int cmd_stats(const RunConfig& c, std::ostream& out) {
  std::vector<Document> docs;
  if (!c.corpus.empty()) {
    docs = load_corpus(c.corpus).documents;
  } else {
    for (auto& d : load_cache(input_cache(c))) docs.push_back(std::move(d.document));
  }
  const auto related = title_related_stats(docs, default_stopwords());
  const auto buckets = bucket_by_title_ratio(docs);
  std::array<std::size_t, kBucketCount> counts{};
  for (int b : buckets) ++counts[static_cast<std::size_t>(b - 1)];

  char line[128];
  out << "documents: " << docs.size() << '\n';
  out << "keyphrases     total  title-related  percent\n";
  std::snprintf(line, sizeof line, "present   %10zu  %13zu  %6.2f%%\n", related.present.total,
                related.present.related, related.present.percentage);
  out << line;
  std::snprintf(line, sizeof line, "absent    %10zu  %13zu  %6.2f%%\n", related.absent.total,
                related.absent.related, related.absent.percentage);
  out << line;
  static const char* const names[kBucketCount] = {"<3%", "3-6%", "6-9%", "9-12%", ">=12%"};
  out << "title/context length ratio buckets:\n";
  json bucket_json = json::array();
  for (std::size_t b = 0; b < kBucketCount; ++b) {
    std::snprintf(line, sizeof line, "  %-6s %zu\n", names[b], counts[b]);
    out << line;
    bucket_json.push_back({{"bucket", b + 1}, {"range", names[b]}, {"documents", counts[b]}});
  }
  write_json_output(c.json_path,
                    {{"documents", docs.size()},
                     {"stopwords", kStopwordListVersion},
                     {"title_related", json(related)},
                     {"buckets", bucket_json}},
                    out);
  return kExitOk;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig c;
  CLI::App app{"Title-guided keyphrase generation", args.empty() ? "tgnet" : args[0]};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);

  auto* pre = app.add_subcommand("preprocess", "Tokenize corpora, build the vocabulary and caches");
  pre->add_option("--train", c.train_path, "Training corpus (JSON Lines)")->required();
  pre->add_option("--valid", c.valid_path, "Validation corpus");
  pre->add_option("--test", c.test_path, "Test corpus");
  pre->add_option("--out", c.out_dir, "Output directory")->required();
  add_model_flags(*pre, c);

  auto* train = app.add_subcommand("train", "Train a model and write the best checkpoint");
  train->add_option("--data", c.data_dir, "Directory written by preprocess")->required();
  train->add_option("--out", c.checkpoint, "Checkpoint path")->required();
  train->add_option("--log", c.log_path, "Training log (JSON Lines)");
  train->add_option("--epochs", c.epochs, "Maximum epochs");
  train->add_option("--eval-every", c.eval_every, "Batches between validations (0 = per epoch)");
  train->add_option("--patience", c.patience, "Non-improving validations before stopping");
  train->add_option("--target-nll", c.target_nll, "Stop once validation NLL per token drops below");
  train->add_option("--ablation", c.ablation, "full | no_title | no_copy");
  add_model_flags(*train, c);

  auto* predict_cmd = app.add_subcommand("predict", "Generate ranked keyphrases");
  predict_cmd->add_option("--checkpoint", c.checkpoint, "Trained checkpoint")->required();
  predict_cmd->add_option("--out", c.predictions, "Predictions file")->required();
  predict_cmd->add_option("--post-mode", c.post_mode, "train-domain | transfer")
      ->check(CLI::IsMember({"train-domain", "transfer"}));
  predict_cmd->add_option("--ablation", c.ablation, "Expected ablation of the checkpoint");
  predict_cmd->add_flag("--length-normalize", c.length_normalize,
                        "Rank finished phrases by mean log-probability");
  add_data_flags(*predict_cmd, c);
  add_model_flags(*predict_cmd, c);

  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against the targets");
  eval_cmd->add_option("--predictions", c.predictions, "Predictions file")->required();
  eval_cmd->add_option("--json", c.json_path, "Write the JSON report here ('-' for stdout)");
  add_data_flags(*eval_cmd, c);
  add_model_flags(*eval_cmd, c);

  auto* stats = app.add_subcommand("stats", "TitleRelated and title-ratio statistics");
  stats->add_option("--corpus", c.corpus, "Raw corpus instead of a cache");
  stats->add_option("--json", c.json_path, "Write the JSON report here ('-' for stdout)");
  add_data_flags(*stats, c);
  add_model_flags(*stats, c);

  try {
    std::vector<std::string> argv(args.begin() + (args.empty() ? 0 : 1), args.end());
    const auto config_path = find_config_path(args);
    if (!config_path.empty() && !argv.empty()) {
      const auto extra = config_flags(config_path);
      argv.insert(argv.begin() + 1, extra.begin(), extra.end());
    }
    std::reverse(argv.begin(), argv.end());
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }

  try {
    c.hp.validate();
    if (pre->parsed()) return cmd_preprocess(c, out);
    if (train->parsed()) return cmd_train(c, out);
    if (predict_cmd->parsed()) return cmd_predict(c, *predict_cmd, out);
    if (eval_cmd->parsed()) return cmd_eval(c, out);
    if (stats->parsed()) return cmd_stats(c, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace tgnet::cli
