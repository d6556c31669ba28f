// tropeline: command-line driver for the Select-and-Refine similarity pipeline.
//
// Exit codes: 0 success, 1 usage error, 2 data or protocol error.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tropeline/tropeline.hpp"

namespace fs = std::filesystem;
using namespace tropeline;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string output_dir = ".";
};

// Scorer and select flags shared by run, exhaustive, overlap and sweep.
struct ScorerFlags {
  std::string scorer = "lexical";
  double noise = 0.05;
  long long timeout_ms = 30000;
  std::size_t max_inflight = 8;
};

struct SelectFlags {
  std::string method = "cosine";
  std::string embeddings;
  std::string head;
};

std::string out_path(const Globals& g, const std::string& name) { return (fs::path(g.output_dir) / name).string(); }

void write_text(const std::string& path, const std::string& text) {
  auto out = open_output(path);
  out << text;
}

void write_json(const std::string& path, const ordered_json& obj) { write_text(path, obj.dump(2) + "\n"); }

std::vector<std::size_t> parse_k_list(const std::string& text) {
  std::vector<std::size_t> ks;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      long long v = std::stoll(item, &pos);
      if (pos != item.size() || v < 1) throw std::invalid_argument(item);
      ks.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw UsageError("invalid k value '" + item + "' in --k");
    }
  }
  if (ks.empty()) throw UsageError("--k needs at least one value");
  return ks;
}

RecallMode parse_recall_mode(const std::string& s) {
  if (s == "dedup") return RecallMode::kDedup;
  if (s == "directed") return RecallMode::kDirected;
  throw UsageError("unknown recall mode '" + s + "'");
}

TieBreak parse_tie_break(const std::string& s) {
  if (s == "id") return TieBreak::kCandidateId;
  if (s == "select") return TieBreak::kSelectRank;
  throw UsageError("unknown tie break '" + s + "'");
}

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

// Owns whatever a scorer borrows (idf tables, heads, embeddings).
struct ScorerBundle {
  std::unique_ptr<EmbeddingSet> embeddings;
  std::unique_ptr<HeadWeights> head;
  std::unique_ptr<PairScorer> scorer;
};

ScorerBundle make_scorer(const ScorerFlags& flags, const SelectFlags& select, const Corpus& corpus,
                         const Globals& g) {
  ScorerBundle b;
  const std::string& s = flags.scorer;
  if (s == "lexical") {
    b.scorer = std::make_unique<LexicalScorer>(IdfTable::fit(corpus), corpus);
  } else if (s == "planted") {
    b.scorer = std::make_unique<PlantedScorer>(flags.noise, g.seed);
  } else if (s.rfind("constant:", 0) == 0) {
    double v;
    try {
      v = std::stod(s.substr(9));
    } catch (const std::exception&) {
      throw UsageError("invalid constant score in '" + s + "'");
    }
    b.scorer = std::make_unique<ConstantScorer>(v);
  } else if (s == "head") {
    if (select.embeddings.empty() || select.head.empty()) throw UsageError("--scorer head needs --embeddings and --head");
    b.embeddings = std::make_unique<EmbeddingSet>(load_embeddings(select.embeddings));
    b.head = std::make_unique<HeadWeights>(load_head(select.head));
    b.scorer = std::make_unique<HeadScorer>(*b.head, *b.embeddings);
  } else if (s.rfind("external:", 0) == 0) {
    ExternalScorerOptions options;
    options.command = split_words(s.substr(9));
    if (options.command.empty()) throw UsageError("--scorer external: needs a command");
    options.timeout = std::chrono::milliseconds(flags.timeout_ms);
    options.max_inflight = flags.max_inflight;
    b.scorer = std::make_unique<ExternalScorer>(std::move(options));
  } else {
    throw UsageError("unknown scorer '" + s + "'");
  }
  return b;
}

struct SelectorBundle {
  std::unique_ptr<EmbeddingSet> embeddings;
  std::unique_ptr<Selector> selector;
};

SelectorBundle make_selector(const SelectFlags& flags, const Corpus& corpus, const Globals& g) {
  SelectorBundle b;
  if (flags.method == "random") {
    b.selector = std::make_unique<RandomSelector>(corpus, g.seed);
    return b;
  }
  if (flags.embeddings.empty()) throw UsageError("--select " + flags.method + " needs --embeddings");
  b.embeddings = std::make_unique<EmbeddingSet>(load_embeddings(flags.embeddings));
  if (flags.method == "cosine") {
    b.selector = std::make_unique<CosineSelector>(corpus, *b.embeddings);
  } else if (flags.method == "siamese") {
    if (flags.head.empty()) throw UsageError("--select siamese needs --head");
    b.selector = std::make_unique<SiameseSelector>(corpus, *b.embeddings, load_head(flags.head));
  } else {
    throw UsageError("unknown select method '" + flags.method + "'");
  }
  return b;
}

void add_scorer_flags(CLI::App* cmd, ScorerFlags& f) {
  cmd->add_option("--scorer", f.scorer, "lexical | head | planted | constant:<v> | external:<command>")
      ->capture_default_str();
  cmd->add_option("--noise", f.noise, "noise sigma for the planted scorer")->capture_default_str();
  cmd->add_option("--timeout-ms", f.timeout_ms, "external scorer per-request timeout")->capture_default_str();
  cmd->add_option("--max-inflight", f.max_inflight, "external scorer pipelining depth")->capture_default_str();
}

void add_select_flags(CLI::App* cmd, SelectFlags& f) {
  cmd->add_option("--select", f.method, "cosine | siamese | random")->capture_default_str();
  cmd->add_option("--embeddings", f.embeddings, "embedding file (text or binary)");
  cmd->add_option("--head", f.head, "trained head weights (for siamese select or head scorer)");
}

ordered_json echo(const ScorerFlags& f) {
  return {{"scorer", f.scorer}, {"noise", f.noise}, {"timeout_ms", f.timeout_ms}, {"max_inflight", f.max_inflight}};
}

ordered_json echo(const SelectFlags& f) {
  return {{"select", f.method}, {"embeddings", f.embeddings}, {"head", f.head}};
}

std::string utc_now() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

// Every command records its effective parameters. The timestamp lives in a
// separate metadata file so that reports stay byte-identical across runs.
void write_config_echo(const Globals& g, const std::string& command, ordered_json params) {
  ordered_json obj;
  obj["command"] = command;
  obj["seed"] = g.seed;
  obj["threads"] = g.threads;
  obj["output_dir"] = g.output_dir;
  obj["parameters"] = std::move(params);
  write_json(out_path(g, command + ".config.json"), obj);
  write_json(out_path(g, command + ".metadata.json"), ordered_json{{"command", command}, {"finished_at", utc_now()}});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tropeline: two-stage Select-and-Refine similarity search and evaluation"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "random seed (TROPELINE_SEED overrides)")->capture_default_str();
  app.add_option("--threads", g.threads, "worker threads; 0 = all cores, 1 = serial")->capture_default_str();
  app.add_option("--output-dir", g.output_dir, "directory for outputs")->capture_default_str();

  // ingest
  std::string ingest_input, ingest_out;
  std::size_t min_words = 100;
  auto* ingest_cmd = app.add_subcommand("ingest", "filter a raw corpus and report statistics");
  ingest_cmd->add_option("--input", ingest_input, "raw corpus file")->required();
  ingest_cmd->add_option("--min-words", min_words, "keep descriptions with more than this many words")
      ->capture_default_str();
  ingest_cmd->add_option("--out", ingest_out, "filtered corpus (default <output-dir>/corpus.jsonl)");

  // split
  std::string split_corpus;
  double eval_fraction = 0.2;
  auto* split_cmd = app.add_subcommand("split", "random record-level train/eval split");
  split_cmd->add_option("--corpus", split_corpus)->required();
  split_cmd->add_option("--eval-fraction", eval_fraction)->capture_default_str();

  // pairs
  std::string pairs_corpus, pairs_out;
  bool negatives = false;
  auto* pairs_cmd = app.add_subcommand("pairs", "generate IsSimilar (and NotSimilar) pairs");
  pairs_cmd->add_option("--corpus", pairs_corpus)->required();
  pairs_cmd->add_flag("--negatives", negatives, "add one NotSimilar pair per IsSimilar pair");
  pairs_cmd->add_option("--out", pairs_out, "default <output-dir>/pairs.jsonl");

  // embed
  std::string embed_corpus, embed_method = "bow", embed_vectors, embed_format = "text", embed_out;
  long long embed_dim = 256;
  auto* embed_cmd = app.add_subcommand("embed", "embed every record");
  embed_cmd->add_option("--corpus", embed_corpus)->required();
  embed_cmd->add_option("--method", embed_method, "bow | tfidf | hashed | file")->capture_default_str();
  embed_cmd->add_option("--dim", embed_dim, "hashed dimension")->capture_default_str();
  embed_cmd->add_option("--vectors", embed_vectors, "external vectors for --method file");
  embed_cmd->add_option("--format", embed_format, "text | binary")->capture_default_str();
  embed_cmd->add_option("--out", embed_out, "default <output-dir>/embeddings.jsonl or .bin");

  // train-head
  std::string th_pairs, th_embeddings, th_out;
  HeadTrainOptions train_options;
  auto* train_cmd = app.add_subcommand("train-head", "train the logistic head over cached embeddings");
  train_cmd->add_option("--pairs", th_pairs)->required();
  train_cmd->add_option("--embeddings", th_embeddings)->required();
  train_cmd->add_option("--epochs", train_options.epochs)->capture_default_str();
  train_cmd->add_option("--lr", train_options.learning_rate)->capture_default_str();
  train_cmd->add_option("--batch", train_options.batch_size, "0 = full batch")->capture_default_str();
  train_cmd->add_option("--out", th_out, "default <output-dir>/head.json");

  // run
  std::string run_corpus, run_k = "1,5,10", run_tie = "id";
  std::size_t run_top_n = 10;
  SelectFlags run_select;
  ScorerFlags run_scorer;
  auto* run_cmd = app.add_subcommand("run", "Select then Refine every record");
  run_cmd->add_option("--corpus", run_corpus)->required();
  run_cmd->add_option("--top-n", run_top_n)->capture_default_str();
  run_cmd->add_option("--k", run_k, "comma-separated k values")->capture_default_str();
  run_cmd->add_option("--tie-break", run_tie, "id | select")->capture_default_str();
  add_select_flags(run_cmd, run_select);
  add_scorer_flags(run_cmd, run_scorer);

  // exhaustive
  std::string ex_corpus;
  std::size_t ex_max = 2000;
  bool ex_force = false;
  SelectFlags ex_select;
  ScorerFlags ex_scorer;
  auto* ex_cmd = app.add_subcommand("exhaustive", "score every ordered pair (small corpora only)");
  ex_cmd->add_option("--corpus", ex_corpus)->required();
  ex_cmd->add_option("--max-records", ex_max)->capture_default_str();
  ex_cmd->add_flag("--force", ex_force, "ignore --max-records");
  ex_cmd->add_option("--embeddings", ex_select.embeddings, "for --scorer head");
  ex_cmd->add_option("--head", ex_select.head, "for --scorer head");
  add_scorer_flags(ex_cmd, ex_scorer);

  // evaluate
  std::string ev_corpus, ev_rankings, ev_labels, ev_k = "1,5,10", ev_mode = "dedup";
  auto* ev_cmd = app.add_subcommand("evaluate", "Recall@k, nDCG@k, MRR (and Precision@k with labels)");
  ev_cmd->add_option("--corpus", ev_corpus, "evaluation corpus")->required();
  ev_cmd->add_option("--rankings", ev_rankings)->required();
  ev_cmd->add_option("--k", ev_k)->capture_default_str();
  ev_cmd->add_option("--recall-mode", ev_mode, "dedup | directed")->capture_default_str();
  ev_cmd->add_option("--labels", ev_labels, "relevance labels for Precision@k");

  // overlap
  std::string ov_corpus;
  std::vector<std::string> ov_methods;
  OverlapOptions ov_options;
  bool ov_random = false, ov_self = false;
  SelectFlags ov_siamese;
  ScorerFlags ov_scorer;
  auto* ov_cmd = app.add_subcommand("overlap", "share of the refine scorer's top results each select method finds");
  ov_cmd->add_option("--corpus", ov_corpus)->required();
  ov_cmd->add_option("--method", ov_methods, "cosine select method as NAME=EMBEDDINGS (repeatable)");
  ov_cmd->add_flag("--random", ov_random, "include a random select method");
  ov_cmd->add_flag("--self", ov_self, "include the refine scorer's own ranking");
  ov_cmd->add_option("--embeddings", ov_siamese.embeddings, "with --head, adds a siamese select method");
  ov_cmd->add_option("--head", ov_siamese.head);
  ov_cmd->add_option("--queries", ov_options.n_queries)->capture_default_str();
  ov_cmd->add_option("--oracle-top", ov_options.oracle_top)->capture_default_str();
  ov_cmd->add_option("--select-top", ov_options.select_top)->capture_default_str();
  add_scorer_flags(ov_cmd, ov_scorer);

  // sweep
  std::string sw_corpus, sw_range = "1:500:1", sw_k = "1,5,10", sw_mode = "dedup", sw_tie = "id";
  std::size_t sw_smooth = 10;
  SelectFlags sw_select;
  ScorerFlags sw_scorer;
  auto* sw_cmd = app.add_subcommand("sweep", "metrics as a function of top_n from one refinement pass");
  sw_cmd->add_option("--corpus", sw_corpus)->required();
  sw_cmd->add_option("--range", sw_range, "MIN:MAX:STEP")->capture_default_str();
  sw_cmd->add_option("--smooth", sw_smooth)->capture_default_str();
  sw_cmd->add_option("--k", sw_k)->capture_default_str();
  sw_cmd->add_option("--recall-mode", sw_mode)->capture_default_str();
  sw_cmd->add_option("--tie-break", sw_tie, "id | select")->capture_default_str();
  add_select_flags(sw_cmd, sw_select);
  add_scorer_flags(sw_cmd, sw_scorer);

  // synth
  SynthSpec spec;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "generate a planted-group corpus");
  synth_cmd->add_option("--groups", spec.n_groups)->capture_default_str();
  synth_cmd->add_option("--members", spec.members_per_group)->capture_default_str();
  synth_cmd->add_option("--members-max", spec.members_max, "draw group sizes in [members, members-max]")
      ->capture_default_str();
  synth_cmd->add_option("--topic-vocab", spec.topic_vocab_size)->capture_default_str();
  synth_cmd->add_option("--shared-vocab", spec.shared_vocab_size)->capture_default_str();
  synth_cmd->add_option("--words", spec.words_per_description)->capture_default_str();
  synth_cmd->add_option("--topic-fraction", spec.topic_word_fraction)->capture_default_str();
  synth_cmd->add_option("--noise", spec.scorer_noise, "recorded for the planted scorer")->capture_default_str();
  synth_cmd->add_option("--out", synth_out, "default <output-dir>/corpus.jsonl");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (const char* env = std::getenv("TROPELINE_SEED")) {
      try {
        g.seed = std::stoull(env);
      } catch (const std::exception&) {
        throw UsageError(std::string("TROPELINE_SEED is not an integer: ") + env);
      }
    }
    fs::create_directories(g.output_dir);

    if (*ingest_cmd) {
      auto corpus = ingest(ingest_input, min_words);
      std::string out = ingest_out.empty() ? out_path(g, "corpus.jsonl") : ingest_out;
      write_corpus(out, corpus);
      auto s = stats(corpus);
      write_json(out_path(g, "stats.json"), to_json(s));
      std::cout << format_stats_table({{"corpus", s}});
      write_config_echo(g, "ingest", {{"input", ingest_input}, {"min_words", min_words}, {"out", out}});
    } else if (*split_cmd) {
      auto corpus = load_corpus(split_corpus);
      auto [train, eval] = split(corpus, eval_fraction, g.seed);
      write_corpus(out_path(g, "train.jsonl"), train);
      write_corpus(out_path(g, "eval.jsonl"), eval);
      auto train_stats = stats(train, true);
      auto eval_stats = stats(eval, false);
      write_json(out_path(g, "split_stats.json"), {{"train", to_json(train_stats)}, {"eval", to_json(eval_stats)}});
      std::cout << format_stats_table({{"train", train_stats}, {"eval", eval_stats}});
      write_config_echo(g, "split", {{"corpus", split_corpus}, {"eval_fraction", eval_fraction}});
    } else if (*pairs_cmd) {
      auto corpus = load_corpus(pairs_corpus);
      auto pairs = generate_pairs(corpus, negatives, g.seed);
      std::string out = pairs_out.empty() ? out_path(g, "pairs.jsonl") : pairs_out;
      auto os = open_output(out);
      write_pairs(os, pairs);
      std::size_t pos = 0;
      for (const auto& p : pairs) pos += p.label == PairLabel::kIsSimilar;
      std::cout << "pairs\t" << pairs.size() << "\nIsSimilar\t" << pos << "\nNotSimilar\t" << pairs.size() - pos
                << '\n';
      write_config_echo(g, "pairs", {{"corpus", pairs_corpus}, {"negatives", negatives}, {"out", out}});
    } else if (*embed_cmd) {
      auto corpus = load_corpus(embed_corpus);
      EmbeddingSet set;
      if (embed_method == "file") {
        if (embed_vectors.empty()) throw UsageError("--method file needs --vectors");
        set = restrict_to_corpus(corpus, load_embeddings(embed_vectors));
      } else {
        EmbedderKind kind;
        if (embed_method == "bow") {
          kind = EmbedderKind::kBow;
        } else if (embed_method == "tfidf") {
          kind = EmbedderKind::kTfidf;
        } else if (embed_method == "hashed") {
          kind = EmbedderKind::kHashed;
        } else {
          throw UsageError("unknown embedding method '" + embed_method + "'");
        }
        auto embedder = fit_embedder(kind, corpus, {embed_dim});
        set = embed_all(*embedder, corpus);
      }
      bool binary = embed_format == "binary";
      if (!binary && embed_format != "text") throw UsageError("unknown format '" + embed_format + "'");
      std::string out = embed_out.empty() ? out_path(g, binary ? "embeddings.bin" : "embeddings.jsonl") : embed_out;
      auto os = open_output(out);
      binary ? write_embeddings_binary(os, set) : write_embeddings_text(os, set);
      if (set.zero_norm_rows() > 0) {
        std::cerr << "warning: " << set.zero_norm_rows() << " records have zero-norm vectors (cosine treated as 0)\n";
      }
      std::cout << "records\t" << set.size() << "\ndimension\t" << set.dimension() << '\n';
      write_config_echo(g, "embed",
                        {{"corpus", embed_corpus}, {"method", embed_method}, {"dim", embed_dim},
                         {"vectors", embed_vectors}, {"format", embed_format}, {"out", out}});
    } else if (*train_cmd) {
      auto in = open_input(th_pairs);
      auto pairs = read_pairs(in, th_pairs);
      auto embeddings = load_embeddings(th_embeddings);
      train_options.seed = g.seed;
      auto head = train_head(pairs, embeddings, train_options);
      std::string out = th_out.empty() ? out_path(g, "head.json") : th_out;
      write_json(out, to_json(head));
      std::cout << "final_loss\t" << head.final_loss << '\n';
      write_config_echo(g, "train-head",
                        {{"pairs", th_pairs}, {"embeddings", th_embeddings}, {"epochs", train_options.epochs},
                         {"learning_rate", train_options.learning_rate}, {"batch_size", train_options.batch_size},
                         {"out", out}});
    } else if (*run_cmd) {
      RunConfig config;
      config.top_n = run_top_n;
      config.k_values = parse_k_list(run_k);
      config.seed = g.seed;
      config.threads = g.threads;
      config.tie_break = parse_tie_break(run_tie);
      config.validate();
      auto corpus = load_corpus(run_corpus);
      auto selector = make_selector(run_select, corpus, g);
      auto scorer = make_scorer(run_scorer, run_select, corpus, g);
      std::size_t effective = clamp_top_n(corpus, run_top_n);
      if (effective != run_top_n) {
        std::cerr << "warning: --top-n " << run_top_n << " exceeds corpus size - 1; clamped to " << effective << '\n';
      }
      auto result = select_and_refine(corpus, *selector.selector, *scorer.scorer, config);
      {
        auto os = open_output(out_path(g, "candidates.jsonl"));
        write_candidates(os, corpus, result.candidates);
      }
      {
        auto os = open_output(out_path(g, "rankings.jsonl"));
        write_rankings(os, corpus, result.ranking);
      }
      ordered_json report;
      report["queries"] = corpus.size();
      report["requested_top_n"] = result.requested_top_n;
      report["effective_top_n"] = result.effective_top_n;
      report["scorer"] = scorer.scorer->name();
      report["select"] = selector.selector->name();
      report["scorer_calls"] = result.scorer_calls;
      ordered_json warnings = ordered_json::object();
      if (effective != run_top_n) warnings["top_n_clamped"] = 1;
      if (selector.embeddings && selector.embeddings->zero_norm_rows() > 0) {
        warnings["zero_norm_vectors"] = selector.embeddings->zero_norm_rows();
      }
      report["warnings"] = warnings;
      write_json(out_path(g, "run.json"), report);
      std::cout << "queries\t" << corpus.size() << "\ntop_n\t" << effective << "\nscorer_calls\t"
                << result.scorer_calls << '\n';
      ordered_json params = echo(run_select);
      params.update(echo(run_scorer));
      params["corpus"] = run_corpus;
      params["top_n"] = run_top_n;
      params["effective_top_n"] = effective;
      params["k"] = config.k_values;
      params["tie_break"] = run_tie;
      write_config_echo(g, "run", params);
    } else if (*ex_cmd) {
      auto corpus = load_corpus(ex_corpus);
      auto scorer = make_scorer(ex_scorer, ex_select, corpus, g);
      auto ranking = exhaustive(corpus, *scorer.scorer, {ex_max, ex_force, g.threads});
      {
        auto os = open_output(out_path(g, "rankings.jsonl"));
        write_rankings(os, corpus, ranking);
      }
      write_json(out_path(g, "exhaustive.json"),
                 {{"queries", corpus.size()}, {"scorer", scorer.scorer->name()}, {"scorer_calls", scorer.scorer->calls()}});
      std::cout << "queries\t" << corpus.size() << "\nscorer_calls\t" << scorer.scorer->calls() << '\n';
      ordered_json params = echo(ex_scorer);
      params["corpus"] = ex_corpus;
      params["max_records"] = ex_max;
      params["force"] = ex_force;
      write_config_echo(g, "exhaustive", params);
    } else if (*ev_cmd) {
      auto corpus = load_corpus(ev_corpus);
      auto in = open_input(ev_rankings);
      auto ranking = read_rankings(in, corpus, ev_rankings);
      auto gt = ground_truth(corpus);
      EvalOptions options;
      options.k_values = parse_k_list(ev_k);
      options.recall_mode = parse_recall_mode(ev_mode);
      RelevanceLabels labels;
      if (!ev_labels.empty()) {
        auto lin = open_input(ev_labels);
        labels = read_labels(lin, corpus, ev_labels);
        options.labels = &labels;
      }
      auto report = evaluate(ranking, gt, options, &corpus);
      report.config = {{"corpus", ev_corpus},
                       {"rankings", ev_rankings},
                       {"labels", ev_labels},
                       {"k", options.k_values},
                       {"recall_mode", ev_mode}};
      if (report.recall_exceeds_100) std::cerr << "warning: directed recall exceeds 100%\n";
      write_json(out_path(g, "metrics.json"), to_json(report));
      write_text(out_path(g, "metrics.tsv"), to_tsv(report));
      std::cout << to_tsv(report);
      write_config_echo(g, "evaluate", report.config);
    } else if (*ov_cmd) {
      auto corpus = load_corpus(ov_corpus);
      auto scorer = make_scorer(ov_scorer, ov_siamese, corpus, g);
      ov_options.seed = g.seed;
      ov_options.threads = g.threads;
      std::vector<std::unique_ptr<EmbeddingSet>> sets;
      std::vector<std::unique_ptr<Selector>> owned;
      for (const auto& m : ov_methods) {
        auto eq = m.find('=');
        if (eq == std::string::npos) throw UsageError("--method expects NAME=EMBEDDINGS, got '" + m + "'");
        sets.push_back(std::make_unique<EmbeddingSet>(load_embeddings(m.substr(eq + 1))));
        owned.push_back(std::make_unique<CosineSelector>(corpus, *sets.back(), m.substr(0, eq)));
      }
      if (!ov_siamese.head.empty()) {
        if (ov_siamese.embeddings.empty()) throw UsageError("siamese overlap method needs --embeddings");
        sets.push_back(std::make_unique<EmbeddingSet>(load_embeddings(ov_siamese.embeddings)));
        owned.push_back(std::make_unique<SiameseSelector>(corpus, *sets.back(), load_head(ov_siamese.head)));
      }
      if (ov_random) owned.push_back(std::make_unique<RandomSelector>(corpus, g.seed));
      if (ov_self) owned.push_back(std::make_unique<ScorerSelector>(corpus, *scorer.scorer));
      if (owned.empty()) throw UsageError("overlap needs at least one select method");
      std::vector<const Selector*> methods;
      for (const auto& s : owned) methods.push_back(s.get());
      auto result = overlap_harness(corpus, *scorer.scorer, methods, ov_options);
      auto report = to_json(result, corpus);
      write_json(out_path(g, "overlap.json"), report);
      std::cout << "method\toverlap_percent\n";
      for (const auto& m : result.methods) std::cout << m.method << '\t' << m.overlap << '\n';
      ordered_json params = echo(ov_scorer);
      params["corpus"] = ov_corpus;
      params["methods"] = ov_methods;
      params["random"] = ov_random;
      params["self"] = ov_self;
      params["siamese_head"] = ov_siamese.head;
      params["queries"] = ov_options.n_queries;
      params["oracle_top"] = ov_options.oracle_top;
      params["select_top"] = ov_options.select_top;
      write_config_echo(g, "overlap", params);
    } else if (*sw_cmd) {
      auto corpus = load_corpus(sw_corpus);
      SweepOptions options;
      {
        std::vector<std::size_t> parts;
        std::stringstream ss(sw_range);
        std::string item;
        try {
          while (std::getline(ss, item, ':')) parts.push_back(std::stoull(item));
        } catch (const std::exception&) {
          throw UsageError("--range expects MIN:MAX:STEP, got '" + sw_range + "'");
        }
        if (parts.size() != 3) throw UsageError("--range expects MIN:MAX:STEP, got '" + sw_range + "'");
        options.min_top_n = parts[0];
        options.max_top_n = parts[1];
        options.step = parts[2];
      }
      options.smooth_window = sw_smooth;
      options.k_values = parse_k_list(sw_k);
      options.recall_mode = parse_recall_mode(sw_mode);
      options.tie_break = parse_tie_break(sw_tie);
      options.threads = g.threads;
      auto selector = make_selector(sw_select, corpus, g);
      auto scorer = make_scorer(sw_scorer, sw_select, corpus, g);
      auto gt = ground_truth(corpus);
      auto result = sweep_top_n(corpus, gt, *selector.selector, *scorer.scorer, options);
      write_json(out_path(g, "sweep.json"), to_json(result));
      write_text(out_path(g, "sweep_summary.tsv"), sweep_summary_tsv(result));
      fs::create_directories(out_path(g, "series"));
      for (const auto& s : result.metrics) {
        std::string file = s.metric;
        for (auto& c : file) {
          if (c == '@') c = '_';
        }
        write_text(out_path(g, "series/" + file + ".tsv"), series_tsv(result, s));
      }
      std::cout << sweep_summary_tsv(result);
      ordered_json params = echo(sw_select);
      params.update(echo(sw_scorer));
      params["corpus"] = sw_corpus;
      params["range"] = sw_range;
      params["smooth"] = sw_smooth;
      params["k"] = options.k_values;
      params["recall_mode"] = sw_mode;
      params["tie_break"] = sw_tie;
      write_config_echo(g, "sweep", params);
    } else if (*synth_cmd) {
      spec.seed = g.seed;
      auto corpus = generate(spec);
      std::string out = synth_out.empty() ? out_path(g, "corpus.jsonl") : synth_out;
      write_corpus(out, corpus);
      write_json(out_path(g, "synth.json"), to_json(spec));
      std::cout << "records\t" << corpus.size() << "\ngroups\t" << corpus.trope_index().size() << '\n';
      ordered_json params = to_json(spec);
      params["out"] = out;
      write_config_echo(g, "synth", params);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
