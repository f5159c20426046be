// xsalign command-line pipeline: synthetic worlds, tokenizer and encoder
// training, static-vector extraction, cross-lingual mapping, continued
// pre-training, and the evaluation harnesses. One subcommand per stage,
// key = value configs with flag override, deterministic under --seed.

#include <algorithm>
#include <cstdio>
#include <set>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "xsalign/alignloss.hpp"
#include "xsalign/corpus.hpp"
#include "xsalign/dictionary.hpp"
#include "xsalign/embedding.hpp"
#include "xsalign/encoder.hpp"
#include "xsalign/evalx.hpp"
#include "xsalign/mapping.hpp"
#include "xsalign/pretrain.hpp"
#include "xsalign/synth.hpp"
#include "xsalign/tokenizer.hpp"
#include "xsalign/util.hpp"
#include "xsalign/x2static.hpp"

namespace fs = std::filesystem;
using namespace xsalign;

namespace {

// Outputs are written to <path>.part and renamed on commit; anything left
// staged when an error unwinds is deleted, so failures leave no partial
// files behind.
class OutputStager {
 public:
  ~OutputStager() {
    for (const auto& [tmp, final_path] : staged_) {
      std::error_code ec;
      fs::remove(tmp, ec);
    }
  }

  std::string stage(const std::string& final_path) {
    if (!fs::path(final_path).parent_path().empty())
      fs::create_directories(fs::path(final_path).parent_path());
    std::string tmp = final_path + ".part";
    staged_.emplace_back(tmp, final_path);
    return tmp;
  }

  void commit() {
    for (const auto& [tmp, final_path] : staged_) fs::rename(tmp, final_path);
    staged_.clear();
  }

 private:
  std::vector<std::pair<std::string, std::string>> staged_;
};

std::string config_hash_hex(const KvMap& effective) {
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(effective.hash()));
  return hash;
}

void write_meta(OutputStager& stager, const std::string& out_path,
                const std::string& command, uint64_t seed, const KvMap& effective,
                const KvMap& extra = {}) {
  KvMap meta;
  meta.set("tool", "xsalign");
  meta.set("command", command);
  meta.set("seed", std::to_string(seed));
  meta.set("config_hash", config_hash_hex(effective));
  for (const auto& [k, v] : extra.items) meta.set(k, v);
  meta.write(stager.stage(out_path + ".meta"));
}

std::vector<NormStep> parse_normalize(const std::string& spec) {
  std::vector<NormStep> steps;
  for (auto part : split_char(spec, ',')) {
    if (part == "unit")
      steps.push_back(NormStep::Unit);
    else if (part == "center")
      steps.push_back(NormStep::Center);
    else
      fail("unknown normalization step '" + std::string(part) + "' (unit|center)");
  }
  return steps;
}

// "--config FILE" merge: file keys are long option names and act as
// defaults; options given explicitly on the command line win. The file is
// expanded into synthetic arguments before CLI11 parses.
std::vector<std::string> expand_config_args(CLI::App& app, int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  if (args.empty() || args[0].rfind("-", 0) == 0) return args;

  std::string config_path;
  std::vector<std::string> rest;
  rest.push_back(args[0]);
  for (size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) fail("--config requires a file path");
      config_path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (config_path.empty()) return rest;

  CLI::App* sub = app.get_subcommand_no_throw(rest[0]);
  if (!sub) return rest;  // unknown subcommand; CLI11 reports it
  KvMap kv = KvMap::parse_file(config_path);

  std::set<std::string> explicit_flags;
  for (size_t i = 1; i < rest.size(); ++i)
    if (rest[i].rfind("--", 0) == 0)
      explicit_flags.insert(rest[i].substr(0, rest[i].find('=')));

  std::vector<std::string> out;
  out.push_back(rest[0]);
  for (const auto& [key, value] : kv.items) {
    std::string flag = "--" + key;
    if (explicit_flags.count(flag)) continue;
    CLI::Option* opt = sub->get_option_no_throw(flag);
    if (!opt)
      fail(config_path + ": unknown key '" + key + "' for subcommand " + rest[0]);
    if (opt->get_expected_min() == 0) {
      if (value == "true" || value == "1" || value == "yes")
        out.push_back(flag);
      else if (!(value == "false" || value == "0" || value == "no" || value.empty()))
        fail(config_path + ": key '" + key + "' expects a boolean");
    } else {
      out.push_back(flag);
      out.push_back(value);
    }
  }
  out.insert(out.end(), rest.begin() + 1, rest.end());
  return out;
}

struct SynthGenArgs {
  std::string out_dir;
  uint64_t seed = 1;
  std::string languages = "aa:0.0,bb:0.0";
  int concepts = 200;
  int dim = 16;
  int sentences = 800;
  int min_len = 7, max_len = 12;
  int para_min = 2, para_max = 5;
  double temperature = 0.35;
  int topic_min = 1, topic_max = 2;
  double short_fraction = 0.0;
  int synonyms = 0;
  int parallel = 200;
};

KvMap synth_effective(const SynthGenArgs& a) {
  KvMap kv;
  kv.set("languages", a.languages);
  kv.set_int("concepts", a.concepts);
  kv.set_int("dim", a.dim);
  kv.set_int("sentences", a.sentences);
  kv.set_int("min-len", a.min_len);
  kv.set_int("max-len", a.max_len);
  kv.set_int("para-min", a.para_min);
  kv.set_int("para-max", a.para_max);
  kv.set_double("temperature", a.temperature);
  kv.set_int("topic-min", a.topic_min);
  kv.set_int("topic-max", a.topic_max);
  kv.set_double("short-fraction", a.short_fraction);
  kv.set_int("synonyms", a.synonyms);
  kv.set_int("parallel", a.parallel);
  kv.set_int("seed", static_cast<long long>(a.seed));
  return kv;
}

int run_synth_gen(const SynthGenArgs& a) {
  SynthConfig cfg;
  cfg.concepts = a.concepts;
  cfg.dim = a.dim;
  cfg.sentences = a.sentences;
  cfg.min_sentence_len = a.min_len;
  cfg.max_sentence_len = a.max_len;
  cfg.para_min = a.para_min;
  cfg.para_max = a.para_max;
  cfg.temperature = a.temperature;
  cfg.topic_min = a.topic_min;
  cfg.topic_max = a.topic_max;
  cfg.short_fraction = a.short_fraction;
  cfg.synonyms = a.synonyms;
  cfg.seed = a.seed;
  for (auto lang : split_char(a.languages, ',')) {
    auto parts = split_char(lang, ':');
    if (parts.empty() || parts.size() > 2 || parts[0].empty())
      fail("bad --languages entry '" + std::string(lang) + "', want name:sigma");
    SynthLanguageConfig lc;
    lc.name = std::string(parts[0]);
    if (parts.size() == 2) lc.sigma = parse_double(parts[1], "language sigma");
    cfg.languages.push_back(lc);
  }

  SynthWorld world = gen_world(cfg);
  OutputStager stager;
  KvMap manifest;
  manifest.set("tool", "xsalign");
  manifest.set("command", "synth-gen");
  manifest.set("seed", std::to_string(a.seed));
  manifest.set("config_hash", config_hash_hex(synth_effective(a)));
  manifest.set_int("languages", static_cast<long long>(cfg.languages.size()));
  manifest.set_int("concepts", cfg.concepts);
  manifest.set_int("dim", cfg.dim);
  manifest.set_int("synonyms", cfg.synonyms);

  std::vector<std::pair<std::string, std::string>> files;  // name -> staged path
  auto emit = [&](const std::string& name) {
    std::string staged = stager.stage((fs::path(a.out_dir) / name).string());
    files.emplace_back(name, staged);
    return staged;
  };

  for (size_t l = 0; l < cfg.languages.size(); ++l) {
    const std::string& lang = cfg.languages[l].name;
    Corpus raw;
    raw.paragraphs = gen_paragraphs(world, static_cast<int>(l));
    write_corpus(raw, emit("corpus." + lang + ".txt"));
    write_space(world.ideal_space(static_cast<int>(l)), emit("ideal." + lang + ".vec"));
  }
  for (size_t i = 0; i < cfg.languages.size(); ++i)
    for (size_t j = 0; j < cfg.languages.size(); ++j) {
      if (i == j) continue;
      write_dictionary(world.gold_dictionary(static_cast<int>(i), static_cast<int>(j)),
                       emit("dict." + cfg.languages[i].name + "-" +
                            cfg.languages[j].name + ".txt"));
    }
  for (size_t i = 0; i < cfg.languages.size(); ++i)
    for (size_t j = i + 1; j < cfg.languages.size(); ++j) {
      std::vector<Sentence> sa, sb;
      gen_parallel(world, static_cast<int>(i), static_cast<int>(j), a.parallel, &sa, &sb);
      const std::string stem =
          "parallel." + cfg.languages[i].name + "-" + cfg.languages[j].name;
      std::string pa, pb;
      for (const auto& s : sa) {
        for (size_t t = 0; t < s.size(); ++t) pa += (t ? " " : "") + s[t];
        pa += '\n';
      }
      for (const auto& s : sb) {
        for (size_t t = 0; t < s.size(); ++t) pb += (t ? " " : "") + s[t];
        pb += '\n';
      }
      write_file(emit(stem + "." + cfg.languages[i].name + ".txt"), pa);
      write_file(emit(stem + "." + cfg.languages[j].name + ".txt"), pb);
    }

  for (const auto& [name, staged] : files) {
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx",
                  static_cast<unsigned long long>(file_fnv(staged)));
    manifest.set("file." + name, hash);
  }
  manifest.write(stager.stage((fs::path(a.out_dir) / "world.manifest").string()));
  stager.commit();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"static/contextual multilingual embedding pipeline"};
  app.require_subcommand(1);

  // every subcommand accepts a key = value config file whose keys are the
  // long option names; explicit flags win (expanded in expand_config_args)
  auto add_config = [](CLI::App* cmd) {
    cmd->add_option("--config", "key = value defaults; explicit flags win");
  };

  SynthGenArgs sg;
  CLI::App* synth_cmd = app.add_subcommand("synth-gen", "generate a synthetic world");
  add_config(synth_cmd);
  synth_cmd->add_option("--out", sg.out_dir, "output directory")->required();
  synth_cmd->add_option("--seed", sg.seed);
  synth_cmd->add_option("--languages", sg.languages, "name:sigma list");
  synth_cmd->add_option("--concepts", sg.concepts);
  synth_cmd->add_option("--dim", sg.dim);
  synth_cmd->add_option("--sentences", sg.sentences, "per language");
  synth_cmd->add_option("--min-len", sg.min_len);
  synth_cmd->add_option("--max-len", sg.max_len);
  synth_cmd->add_option("--para-min", sg.para_min);
  synth_cmd->add_option("--para-max", sg.para_max);
  synth_cmd->add_option("--temperature", sg.temperature);
  synth_cmd->add_option("--topic-min", sg.topic_min);
  synth_cmd->add_option("--topic-max", sg.topic_max);
  synth_cmd->add_option("--short-fraction", sg.short_fraction, "injected filter fodder");
  synth_cmd->add_option("--synonyms", sg.synonyms);
  synth_cmd->add_option("--parallel", sg.parallel, "parallel sentence pairs");

  struct {
    std::string corpus, out;
    int vocab_size = 256;
    int min_tokens = 7;
    uint64_t seed = 1;
  } tt;
  CLI::App* tok_cmd = app.add_subcommand("tokenizer-train", "learn BPE subwords");
  add_config(tok_cmd);
  tok_cmd->add_option("--corpus", tt.corpus)->required()->check(CLI::ExistingFile);
  tok_cmd->add_option("--vocab-size", tt.vocab_size)->required();
  tok_cmd->add_option("--out", tt.out)->required();
  tok_cmd->add_option("--min-tokens", tt.min_tokens);
  tok_cmd->add_option("--seed", tt.seed);

  struct {
    std::string corpus, tokenizer, out, ckpt_dir;
    int layers = 2, heads = 4, d_model = 32, d_ff = 64, max_positions = 64;
    int steps = 500, mlm_batch = 16, val_interval = 100;
    double lr = 1e-3, p_mask = 0.15, val_fraction = 0.05;
    int extract_layer = 0, retrieval_layer = 0;
    bool untied = false;
    int min_tokens = 7;
    uint64_t seed = 1;
  } mt;
  CLI::App* mlm_cmd = app.add_subcommand("mlm-train", "train the base encoder with MLM");
  add_config(mlm_cmd);
  mlm_cmd->add_option("--corpus", mt.corpus)->required()->check(CLI::ExistingFile);
  mlm_cmd->add_option("--tokenizer", mt.tokenizer)->required()->check(CLI::ExistingFile);
  mlm_cmd->add_option("--out", mt.out)->required();
  mlm_cmd->add_option("--layers", mt.layers);
  mlm_cmd->add_option("--heads", mt.heads);
  mlm_cmd->add_option("--d-model", mt.d_model);
  mlm_cmd->add_option("--d-ff", mt.d_ff);
  mlm_cmd->add_option("--max-positions", mt.max_positions);
  mlm_cmd->add_option("--steps", mt.steps);
  mlm_cmd->add_option("--mlm-batch", mt.mlm_batch);
  mlm_cmd->add_option("--val-interval", mt.val_interval);
  mlm_cmd->add_option("--val-fraction", mt.val_fraction);
  mlm_cmd->add_option("--lr", mt.lr);
  mlm_cmd->add_option("--p-mask", mt.p_mask);
  mlm_cmd->add_option("--extract-layer", mt.extract_layer, "0 = middle layer");
  mlm_cmd->add_option("--retrieval-layer", mt.retrieval_layer, "0 = middle + 1");
  mlm_cmd->add_flag("--untied", mt.untied, "untie the MLM head from the embeddings");
  mlm_cmd->add_option("--min-tokens", mt.min_tokens);
  mlm_cmd->add_option("--ckpt-dir", mt.ckpt_dir);
  mlm_cmd->add_option("--seed", mt.seed);

  struct {
    std::string corpus, model, out;
    int layer = 0, negatives = 10, epochs = 4, dim = 0, min_count = 5;
    double lr = 0.05, exponent = 0.75;
    long long max_sentences = 0;
    std::string sample = "head";
    bool cosine = false;
    int min_tokens = 7;
    uint64_t seed = 1;
  } xs;
  CLI::App* ext_cmd = app.add_subcommand("extract-static", "distill static vectors");
  add_config(ext_cmd);
  ext_cmd->add_option("--corpus", xs.corpus)->required()->check(CLI::ExistingFile);
  ext_cmd->add_option("--model", xs.model)->required()->check(CLI::ExistingFile);
  ext_cmd->add_option("--out", xs.out)->required();
  ext_cmd->add_option("--layer", xs.layer, "0 = model's extract layer");
  ext_cmd->add_option("--negatives", xs.negatives);
  ext_cmd->add_option("--epochs", xs.epochs);
  ext_cmd->add_option("--lr", xs.lr);
  ext_cmd->add_option("--dim", xs.dim, "0 = d_model");
  ext_cmd->add_option("--min-count", xs.min_count);
  ext_cmd->add_option("--exponent", xs.exponent, "negative-table smoothing");
  ext_cmd->add_option("--max-sentences", xs.max_sentences, "0 = all");
  ext_cmd->add_option("--sample", xs.sample)->check(CLI::IsMember({"head", "random"}));
  ext_cmd->add_flag("--cosine", xs.cosine, "cosine similarity instead of dot");
  ext_cmd->add_option("--min-tokens", xs.min_tokens);
  ext_cmd->add_option("--seed", xs.seed);

  struct {
    std::string src, tgt, out;
    int cutoff = 0;
    double min_score = -1.0;  // confidence threshold on signature similarity; off by default
    int threads = 1;
    uint64_t seed = 1;
  } id;
  CLI::App* ind_cmd =
      app.add_subcommand("induce-dict", "unsupervised seed dictionary induction");
  add_config(ind_cmd);
  ind_cmd->add_option("--src", id.src)->required()->check(CLI::ExistingFile);
  ind_cmd->add_option("--tgt", id.tgt)->required()->check(CLI::ExistingFile);
  ind_cmd->add_option("--out", id.out)->required();
  ind_cmd->add_option("--cutoff", id.cutoff, "0 = min(2000, vocabulary)");
  ind_cmd->add_option("--min-score", id.min_score,
                      "drop pairs whose signature similarity falls below this");
  ind_cmd->add_option("--threads", id.threads);
  ind_cmd->add_option("--seed", id.seed);

  struct {
    std::string src, tgt, dict, out_src, out_tgt, report;
    bool self_learn_flag = false, whiten = false;
    std::string normalize = "unit,center,unit";
    int csls_k = 10, cutoff = 2000, max_iterations = 500, patience = 10;
    double keep_prob = 0.1, keep_prob_mult = 2.0, threshold = 1e-6, reweight = 0.5;
    int threads = 1;
    uint64_t seed = 1;
  } al;
  CLI::App* align_cmd = app.add_subcommand("align", "map source into the target space");
  add_config(align_cmd);
  align_cmd->add_option("--src", al.src)->required()->check(CLI::ExistingFile);
  align_cmd->add_option("--tgt", al.tgt)->required()->check(CLI::ExistingFile);
  align_cmd->add_option("--dict", al.dict)->required()->check(CLI::ExistingFile);
  align_cmd->add_option("--out-src", al.out_src)->required();
  align_cmd->add_option("--out-tgt", al.out_tgt)->required();
  align_cmd->add_option("--report", al.report, "default <out-src>.report");
  align_cmd->add_flag("--self-learn", al.self_learn_flag,
                      "robust self-learning from the dictionary as seed");
  align_cmd->add_flag("--whiten", al.whiten, "whitening + reweighting chain");
  align_cmd->add_option("--normalize", al.normalize, "comma list of unit|center");
  align_cmd->add_option("--csls-k", al.csls_k);
  align_cmd->add_option("--cutoff", al.cutoff);
  align_cmd->add_option("--max-iterations", al.max_iterations);
  align_cmd->add_option("--patience", al.patience);
  align_cmd->add_option("--keep-prob", al.keep_prob);
  align_cmd->add_option("--keep-prob-mult", al.keep_prob_mult);
  align_cmd->add_option("--threshold", al.threshold);
  align_cmd->add_option("--reweight", al.reweight);
  align_cmd->add_option("--threads", al.threads);
  align_cmd->add_option("--seed", al.seed);

  struct {
    std::string aligned, unaligned, val_dict, pivot, out, report;
    int csls_k = 10;
    int threads = 1;
    uint64_t seed = 1;
  } se;
  CLI::App* sel_cmd =
      app.add_subcommand("select", "pick aligned or unaligned by validation BLI");
  add_config(sel_cmd);
  sel_cmd->add_option("--aligned", se.aligned)->required()->check(CLI::ExistingFile);
  sel_cmd->add_option("--unaligned", se.unaligned)->required()->check(CLI::ExistingFile);
  sel_cmd->add_option("--val-dict", se.val_dict)->required()->check(CLI::ExistingFile);
  sel_cmd->add_option("--pivot", se.pivot)->required()->check(CLI::ExistingFile);
  sel_cmd->add_option("--out", se.out, "write the chosen space here");
  sel_cmd->add_option("--report", se.report, "report path (stdout regardless)");
  sel_cmd->add_option("--csls-k", se.csls_k);
  sel_cmd->add_option("--threads", se.threads);
  sel_cmd->add_option("--seed", se.seed);

  struct {
    std::string model, corpus, statics, out, log, ckpt_dir, loss = "mlm";
    int steps = 500, mlm_batch = 16, align_batch = 64, val_interval = 100;
    int align_layer = 0;
    double lambda = 1.0, lr = 1e-3, val_fraction = 0.05, dcca_r = 1e-3;
    int min_tokens = 7;
    uint64_t seed = 1;
  } cp;
  CLI::App* cont_cmd =
      app.add_subcommand("continue-pretrain", "MLM plus alignment loss training");
  add_config(cont_cmd);
  cont_cmd->add_option("--model", cp.model)->required()->check(CLI::ExistingFile);
  cont_cmd->add_option("--corpus", cp.corpus)->required()->check(CLI::ExistingFile);
  cont_cmd->add_option("--static", cp.statics)->check(CLI::ExistingFile);
  cont_cmd->add_option("--loss", cp.loss)->check(CLI::IsMember({"mlm", "mse", "dcca"}));
  cont_cmd->add_option("--steps", cp.steps);
  cont_cmd->add_option("--out", cp.out)->required();
  cont_cmd->add_option("--log", cp.log, "default <out>.log");
  cont_cmd->add_option("--mlm-batch", cp.mlm_batch);
  cont_cmd->add_option("--align-batch", cp.align_batch);
  cont_cmd->add_option("--val-interval", cp.val_interval);
  cont_cmd->add_option("--val-fraction", cp.val_fraction);
  cont_cmd->add_option("--align-layer", cp.align_layer, "0 = final layer");
  cont_cmd->add_option("--lambda", cp.lambda, "alignment loss weight");
  cont_cmd->add_option("--lr", cp.lr);
  cont_cmd->add_option("--dcca-r", cp.dcca_r, "DCCA covariance regularizer");
  cont_cmd->add_option("--min-tokens", cp.min_tokens);
  cont_cmd->add_option("--ckpt-dir", cp.ckpt_dir);
  cont_cmd->add_option("--seed", cp.seed);

  struct {
    std::string src, tgt, gold, out, predictions, method = "csls";
    int k = 10, threads = 1;
    uint64_t seed = 1;
  } eb;
  CLI::App* bli_cmd = app.add_subcommand("eval-bli", "bilingual lexicon induction P@1");
  add_config(bli_cmd);
  bli_cmd->add_option("--src", eb.src)->required()->check(CLI::ExistingFile);
  bli_cmd->add_option("--tgt", eb.tgt)->required()->check(CLI::ExistingFile);
  bli_cmd->add_option("--gold", eb.gold)->required()->check(CLI::ExistingFile);
  bli_cmd->add_option("--out", eb.out)->required();
  bli_cmd->add_option("--predictions", eb.predictions, "per-query top-1 file");
  bli_cmd->add_option("--method", eb.method)->check(CLI::IsMember({"nn", "csls"}));
  bli_cmd->add_option("--k", eb.k);
  bli_cmd->add_option("--threads", eb.threads);
  bli_cmd->add_option("--seed", eb.seed);

  struct {
    std::string space, space2, gold, out;
    uint64_t seed = 1;
  } es;
  CLI::App* sim_cmd = app.add_subcommand("eval-sim", "word similarity (Spearman)");
  add_config(sim_cmd);
  sim_cmd->add_option("--space", es.space)->required()->check(CLI::ExistingFile);
  sim_cmd->add_option("--space2", es.space2, "second space for cross-lingual mode")
      ->check(CLI::ExistingFile);
  sim_cmd->add_option("--gold", es.gold)->required()->check(CLI::ExistingFile);
  sim_cmd->add_option("--out", es.out)->required();
  sim_cmd->add_option("--seed", es.seed);

  struct {
    std::string model, src, tgt, out;
    int layer = 0, threads = 1;
    uint64_t seed = 1;
  } er;
  CLI::App* ret_cmd = app.add_subcommand("eval-retrieval", "parallel sentence retrieval");
  add_config(ret_cmd);
  ret_cmd->add_option("--model", er.model)->required()->check(CLI::ExistingFile);
  ret_cmd->add_option("--src", er.src)->required()->check(CLI::ExistingFile);
  ret_cmd->add_option("--tgt", er.tgt)->required()->check(CLI::ExistingFile);
  ret_cmd->add_option("--out", er.out)->required();
  ret_cmd->add_option("--layer", er.layer, "0 = model's retrieval layer");
  ret_cmd->add_option("--threads", er.threads);
  ret_cmd->add_option("--seed", er.seed);

  try {
    std::vector<std::string> args = expand_config_args(app, argc, argv);
    std::reverse(args.begin(), args.end());  // CLI11's vector parse order
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "xsalign: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "xsalign: " << e.what() << "\n";
    return 1;
  }

  try {
    if (synth_cmd->parsed()) return run_synth_gen(sg);

    if (tok_cmd->parsed()) {
      Corpus corpus = load_corpus(tt.corpus, tt.min_tokens);
      SubwordTokenizer tok = train_tokenizer(corpus, tt.vocab_size);
      OutputStager stager;
      tok.save(stager.stage(tt.out));
      KvMap eff;
      eff.set_int("vocab-size", tt.vocab_size);
      eff.set_int("min-tokens", tt.min_tokens);
      eff.set_int("seed", static_cast<long long>(tt.seed));
      write_meta(stager, tt.out, "tokenizer-train", tt.seed, eff);
      stager.commit();
      return 0;
    }

    if (mlm_cmd->parsed()) {
      Corpus corpus = load_corpus(mt.corpus, mt.min_tokens);
      SubwordTokenizer tok = SubwordTokenizer::load(mt.tokenizer);
      EncoderConfig ecfg;
      ecfg.n_layers = mt.layers;
      ecfg.n_heads = mt.heads;
      ecfg.d_model = mt.d_model;
      ecfg.d_ff = mt.d_ff;
      ecfg.max_positions = mt.max_positions;
      ecfg.vocab_size = tok.vocab_size();
      ecfg.p_mask = mt.p_mask;
      ecfg.extract_layer = mt.extract_layer;
      ecfg.retrieval_layer = mt.retrieval_layer;
      ecfg.tied_head = !mt.untied;
      ecfg.validate();

      Rng rng(mt.seed);
      EncoderModel model = EncoderModel::init(ecfg, rng);
      PretrainConfig pcfg;
      pcfg.steps = mt.steps;
      pcfg.mlm_batch = mt.mlm_batch;
      pcfg.val_interval = mt.val_interval;
      pcfg.val_fraction = mt.val_fraction;
      pcfg.adam.lr = mt.lr;
      pcfg.seed = mt.seed;
      pcfg.ckpt_dir = mt.ckpt_dir;
      TrainLog log = mlm_only_baseline(model, corpus, tok, pcfg);

      KvMap eff;
      eff.set_int("layers", mt.layers);
      eff.set_int("heads", mt.heads);
      eff.set_int("d-model", mt.d_model);
      eff.set_int("d-ff", mt.d_ff);
      eff.set_int("max-positions", mt.max_positions);
      eff.set_int("steps", mt.steps);
      eff.set_int("mlm-batch", mt.mlm_batch);
      eff.set_int("val-interval", mt.val_interval);
      eff.set_double("val-fraction", mt.val_fraction);
      eff.set_double("lr", mt.lr);
      eff.set_double("p-mask", mt.p_mask);
      eff.set_int("extract-layer", mt.extract_layer);
      eff.set_int("retrieval-layer", mt.retrieval_layer);
      eff.set_int("seed", static_cast<long long>(mt.seed));

      OutputStager stager;
      KvMap meta;
      meta.set("seed", std::to_string(mt.seed));
      meta.set("config_hash", config_hash_hex(eff));
      meta.set("selected", log.selected);
      save_checkpoint(model, tok, stager.stage(mt.out), meta);
      write_train_log(log, stager.stage(mt.out + ".log"));
      write_meta(stager, mt.out + ".log", "mlm-train", mt.seed, eff);
      stager.commit();
      return 0;
    }

    if (ext_cmd->parsed()) {
      Corpus corpus = load_corpus(xs.corpus, xs.min_tokens);
      Checkpoint ckpt = load_checkpoint(xs.model);
      ExtractionConfig cfg;
      cfg.layer = xs.layer;
      cfg.negatives = xs.negatives;
      cfg.epochs = xs.epochs;
      cfg.lr = xs.lr;
      cfg.dim = xs.dim;
      cfg.min_count = xs.min_count;
      cfg.neg_exponent = xs.exponent;
      cfg.max_sentences = xs.max_sentences;
      cfg.sample_random = xs.sample == "random";
      cfg.cosine = xs.cosine;
      cfg.seed = xs.seed;
      EmbeddingSpace space = extract_static(corpus, ckpt.model, ckpt.tokenizer, cfg);

      KvMap eff;
      eff.set_int("layer", xs.layer);
      eff.set_int("negatives", xs.negatives);
      eff.set_int("epochs", xs.epochs);
      eff.set_double("lr", xs.lr);
      eff.set_int("dim", xs.dim);
      eff.set_int("min-count", xs.min_count);
      eff.set_double("exponent", xs.exponent);
      eff.set_int("max-sentences", xs.max_sentences);
      eff.set("sample", xs.sample);
      eff.set("cosine", xs.cosine ? "true" : "false");
      eff.set_int("seed", static_cast<long long>(xs.seed));

      OutputStager stager;
      write_space(space, stager.stage(xs.out));
      write_meta(stager, xs.out, "extract-static", xs.seed, eff);
      stager.commit();
      return 0;
    }

    if (ind_cmd->parsed()) {
      EmbeddingSpace src = read_space(id.src);
      EmbeddingSpace tgt = read_space(id.tgt);
      int cutoff = id.cutoff > 0 ? id.cutoff : std::min({2000, src.size(), tgt.size()});
      std::vector<double> scores;
      Dictionary dict = induce_seed_unsupervised(src, tgt, cutoff, id.threads, &scores);
      if (id.min_score > -1.0) {
        Dictionary kept;
        for (size_t i = 0; i < dict.pairs.size(); ++i)
          if (scores[i] >= id.min_score) kept.pairs.push_back(dict.pairs[i]);
        if (kept.empty()) fail("induce-dict: no pair reaches --min-score");
        dict = std::move(kept);
      }
      KvMap eff;
      eff.set_int("cutoff", cutoff);
      eff.set_double("min-score", id.min_score);
      eff.set_int("seed", static_cast<long long>(id.seed));
      OutputStager stager;
      write_dictionary(dict, stager.stage(id.out));
      write_meta(stager, id.out, "induce-dict", id.seed, eff);
      stager.commit();
      return 0;
    }

    if (align_cmd->parsed()) {
      EmbeddingSpace src = read_space(al.src);
      EmbeddingSpace tgt = read_space(al.tgt);
      Dictionary dict = read_dictionary(al.dict);
      MappingConfig cfg;
      cfg.normalize = parse_normalize(al.normalize);
      cfg.whiten = al.whiten;
      cfg.reweight = al.reweight;
      cfg.csls_k = al.csls_k;
      cfg.cutoff = al.cutoff;
      cfg.keep_prob_start = al.keep_prob;
      cfg.keep_prob_mult = al.keep_prob_mult;
      cfg.threshold = al.threshold;
      cfg.max_iterations = al.max_iterations;
      cfg.stagnation_patience = al.patience;
      cfg.seed = al.seed;
      cfg.threads = al.threads;

      MappedPair mapped = al.self_learn_flag ? self_learn(src, tgt, dict, cfg)
                                             : map_supervised(src, tgt, dict, cfg);

      KvMap eff;
      eff.set("self-learn", al.self_learn_flag ? "true" : "false");
      eff.set("whiten", al.whiten ? "true" : "false");
      eff.set("normalize", al.normalize);
      eff.set_int("csls-k", al.csls_k);
      eff.set_int("cutoff", al.cutoff);
      eff.set_int("max-iterations", al.max_iterations);
      eff.set_int("patience", al.patience);
      eff.set_double("keep-prob", al.keep_prob);
      eff.set_double("keep-prob-mult", al.keep_prob_mult);
      eff.set_double("threshold", al.threshold);
      eff.set_double("reweight", al.reweight);
      eff.set_int("seed", static_cast<long long>(al.seed));

      OutputStager stager;
      write_space(mapped.src, stager.stage(al.out_src));
      write_space(mapped.tgt, stager.stage(al.out_tgt));
      write_meta(stager, al.out_src, "align", al.seed, eff);
      write_meta(stager, al.out_tgt, "align", al.seed, eff);

      KvMap report;
      report.set("command", "align");
      report.set("mode", al.self_learn_flag ? "self-learn" : "supervised");
      report.set("seed", std::to_string(al.seed));
      report.set("config_hash", config_hash_hex(eff));
      report.set_double("objective", mapped.objective);
      report.set_int("iterations", mapped.iterations);
      report.set("converged", mapped.converged ? "true" : "false");
      report.set("orthogonal", mapped.orthogonal ? "true" : "false");
      report.set_int("dropped_pairs", mapped.dropped_pairs);
      for (size_t i = 0; i < mapped.objective_trace.size(); ++i)
        report.set_double("objective_" + std::to_string(i), mapped.objective_trace[i]);
      report.write(stager.stage(al.report.empty() ? al.out_src + ".report" : al.report));
      stager.commit();
      return 0;
    }

    if (sel_cmd->parsed()) {
      EmbeddingSpace aligned = read_space(se.aligned);
      EmbeddingSpace unaligned = read_space(se.unaligned);
      EmbeddingSpace pivot = read_space(se.pivot);
      Dictionary val = read_dictionary(se.val_dict);
      MappingConfig cfg;
      cfg.csls_k = se.csls_k;
      cfg.threads = se.threads;
      SelectionReport rep = select_aligned(aligned, unaligned, val, pivot, cfg);

      KvMap eff;
      eff.set_int("csls-k", se.csls_k);
      eff.set_int("seed", static_cast<long long>(se.seed));

      KvMap report;
      report.set("command", "select");
      report.set("seed", std::to_string(se.seed));
      report.set("config_hash", config_hash_hex(eff));
      report.set_double("aligned_p1", rep.aligned_p1);
      report.set_double("unaligned_p1", rep.unaligned_p1);
      report.set("chosen", rep.chose_aligned ? "aligned" : "unaligned");

      OutputStager stager;
      if (!se.report.empty()) report.write(stager.stage(se.report));
      if (!se.out.empty()) {
        write_space(rep.chose_aligned ? aligned : unaligned, stager.stage(se.out));
        write_meta(stager, se.out, "select", se.seed, eff);
      }
      stager.commit();
      std::cout << report.serialize();
      return 0;
    }

    if (cont_cmd->parsed()) {
      Checkpoint ckpt = load_checkpoint(cp.model);
      Corpus corpus = load_corpus(cp.corpus, cp.min_tokens);
      PretrainConfig cfg;
      cfg.steps = cp.steps;
      cfg.mlm_batch = cp.mlm_batch;
      cfg.align_batch = cp.align_batch;
      cfg.val_interval = cp.val_interval;
      cfg.val_fraction = cp.val_fraction;
      cfg.lambda = cp.lambda;
      cfg.align_layer = cp.align_layer;
      cfg.adam.lr = cp.lr;
      cfg.dcca.r1 = cfg.dcca.r2 = cp.dcca_r;
      cfg.seed = cp.seed;
      cfg.ckpt_dir = cp.ckpt_dir;
      cfg.loss = cp.loss == "mlm"   ? PretrainLoss::MlmOnly
                 : cp.loss == "mse" ? PretrainLoss::Mse
                                    : PretrainLoss::Dcca;

      EmbeddingSpace statics;
      const EmbeddingSpace* statics_ptr = nullptr;
      if (cfg.loss != PretrainLoss::MlmOnly) {
        if (cp.statics.empty())
          fail("continue-pretrain: --static is required for mse/dcca losses");
        statics = read_space(cp.statics);
        statics_ptr = &statics;
      }

      TrainLog log = run_pretraining(ckpt.model, corpus, statics_ptr, ckpt.tokenizer, cfg);

      KvMap eff;
      eff.set("loss", cp.loss);
      eff.set_int("steps", cp.steps);
      eff.set_int("mlm-batch", cp.mlm_batch);
      eff.set_int("align-batch", cp.align_batch);
      eff.set_int("val-interval", cp.val_interval);
      eff.set_double("val-fraction", cp.val_fraction);
      eff.set_double("lambda", cp.lambda);
      eff.set_int("align-layer", cp.align_layer);
      eff.set_double("lr", cp.lr);
      eff.set_double("dcca-r", cp.dcca_r);
      eff.set_int("seed", static_cast<long long>(cp.seed));

      OutputStager stager;
      KvMap meta;
      meta.set("seed", std::to_string(cp.seed));
      meta.set("config_hash", config_hash_hex(eff));
      meta.set("selected", log.selected);
      meta.set("loss", cp.loss);
      save_checkpoint(ckpt.model, ckpt.tokenizer, stager.stage(cp.out), meta);
      std::string log_path = cp.log.empty() ? cp.out + ".log" : cp.log;
      write_train_log(log, stager.stage(log_path));
      write_meta(stager, log_path, "continue-pretrain", cp.seed, eff);
      stager.commit();
      return 0;
    }

    if (bli_cmd->parsed()) {
      EmbeddingSpace src = read_space(eb.src);
      EmbeddingSpace tgt = read_space(eb.tgt);
      Dictionary gold = read_dictionary(eb.gold);
      BliResult res = eval_bli(src, tgt, gold,
                               eb.method == "nn" ? BliMethod::Nn : BliMethod::Csls,
                               eb.k, eb.threads);
      KvMap eff;
      eff.set("method", eb.method);
      eff.set_int("k", eb.k);
      eff.set_int("seed", static_cast<long long>(eb.seed));

      KvMap report;
      report.set("command", "eval-bli");
      report.set("seed", std::to_string(eb.seed));
      report.set("config_hash", config_hash_hex(eff));
      report.set("method", eb.method);
      report.set_int("k", eb.k);
      report.set_double("p_at_1", res.p_at_1);
      report.set_double("coverage", res.coverage);
      report.set_int("n_covered", res.n_covered);
      report.set_int("n_gold_sources", res.n_gold_sources);

      OutputStager stager;
      report.write(stager.stage(eb.out));
      if (!eb.predictions.empty()) {
        std::string pred;
        for (const auto& [q, p] : res.predictions) pred += q + " " + p + "\n";
        write_file(stager.stage(eb.predictions), pred);
        write_meta(stager, eb.predictions, "eval-bli", eb.seed, eff);
      }
      stager.commit();
      return 0;
    }

    if (sim_cmd->parsed()) {
      EmbeddingSpace space = read_space(es.space);
      EmbeddingSpace space2;
      const EmbeddingSpace* second = nullptr;
      if (!es.space2.empty()) {
        space2 = read_space(es.space2);
        second = &space2;
      }
      SimilarityGold gold = read_similarity_file(es.gold);
      SimilarityResult res = eval_similarity(space, second, gold);

      KvMap eff;
      eff.set_int("seed", static_cast<long long>(es.seed));

      KvMap report;
      report.set("command", "eval-sim");
      report.set("seed", std::to_string(es.seed));
      report.set("config_hash", config_hash_hex(eff));
      report.set("mode", second ? "cross-lingual" : "monolingual");
      report.set_double("spearman", res.spearman);
      report.set_int("n_scored", res.n_scored);
      report.set_int("n_skipped", res.n_skipped);

      OutputStager stager;
      report.write(stager.stage(es.out));
      stager.commit();
      return 0;
    }

    if (ret_cmd->parsed()) {
      Checkpoint ckpt = load_checkpoint(er.model);
      auto src = read_sentence_file(er.src);
      auto tgt = read_sentence_file(er.tgt);
      int layer = er.layer > 0 ? er.layer : ckpt.model.cfg.effective_retrieval_layer();
      RetrievalResult res =
          eval_retrieval(ckpt.model, ckpt.tokenizer, src, tgt, layer, er.threads);

      KvMap eff;
      eff.set_int("layer", layer);
      eff.set_int("seed", static_cast<long long>(er.seed));

      KvMap report;
      report.set("command", "eval-retrieval");
      report.set("seed", std::to_string(er.seed));
      report.set("config_hash", config_hash_hex(eff));
      report.set_int("layer", layer);
      report.set_int("n", res.n);
      report.set_double("acc_src2tgt", res.acc_src2tgt);
      report.set_double("acc_tgt2src", res.acc_tgt2src);

      OutputStager stager;
      report.write(stager.stage(er.out));
      stager.commit();
      return 0;
    }
  } catch (const std::exception& e) {
    std::string cmd;
    for (const auto* sub : app.get_subcommands()) cmd = sub->get_name();
    std::cerr << "xsalign " << cmd << ": " << e.what() << "\n";
    return 1;
  }
  std::cerr << "xsalign: no subcommand\n";
  return 1;
}
