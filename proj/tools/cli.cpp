#include "cli.hpp"

#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>

#include "macr/causal_lab.hpp"
#include "macr/config.hpp"
#include "macr/decider.hpp"
#include "macr/evalharness.hpp"
#include "macr/mediator.hpp"
#include "macr/reasoner.hpp"
#include "macr/stores.hpp"
#include "macr/treemodel.hpp"

namespace macr::cli {

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool stub = false;
  bool dry_run = false;
  bool verbose = false;
};

class Session {
 public:
  Session(const Globals& g, std::ostream& err, RunTrace* trace) : globals_(g), err_(err), trace_(trace) {}
  ~Session() { record(); }

  PipelineConfig& config() {
    if (!cfg_) {
      cfg_ = globals_.config_path.empty() ? PipelineConfig::defaults() : load_config(globals_.config_path);
      if (globals_.seed) cfg_->set_master_seed(*globals_.seed);
      if (globals_.stub) cfg_->stub = true;
    }
    return *cfg_;
  }

  // Validates and prints warnings.
  void validate() {
    for (const auto& w : config().validate()) err_ << "warning: " << w << '\n';
  }

  Backend& backend() {
    if (!backend_) {
      auto& cfg = config();
      std::shared_ptr<Transport> transport;
      if (cfg.stub) transport = std::make_shared<StubTransport>(make_scripted_responder(cfg.labels));
      else transport = std::make_shared<HttpTransport>(cfg.backend.timeout);
      if (trace_) {
        trace_->backend_created = true;
        trace_->network_transport = transport->is_network();
      }
      backend_ = std::make_unique<Backend>(cfg.backend, std::move(transport));
    }
    return *backend_;
  }

  void record() {
    if (!backend_) return;
    if (trace_) trace_->stats = backend_->stats();
    if (globals_.verbose) {
      const auto s = backend_->stats();
      err_ << "backend: chat=" << s.chat_requests << " embed=" << s.embed_requests
           << " transport=" << s.transport_calls << " network=" << s.network_calls << " cache_hits=" << s.cache_hits
           << " retries=" << s.retries << '\n';
    }
  }

 private:
  const Globals& globals_;
  std::ostream& err_;
  RunTrace* trace_;
  std::optional<PipelineConfig> cfg_;
  std::unique_ptr<Backend> backend_;
};

std::ofstream open_out(const std::string& path) {
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ValidationError("cannot open output file " + path);
  return out;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err, RunTrace* trace) {
  CLI::App app{"Deconfounded risk-level prediction over conversation trees with a multi-agent debate and "
               "front-door adjustment.",
               "macr"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config_path, "Pipeline config file (key = value)");
  app.add_option("--seed", g.seed, "Master seed; every other seed is derived from it");
  app.add_flag("--stub", g.stub, "Use the offline scripted backend");
  app.add_flag("--dry-run", g.dry_run, "Validate and print the resolved plan without model calls");
  app.add_flag("--verbose", g.verbose, "Print backend counters to stderr");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Parse and validate a dataset file");
  std::string ingest_input, ingest_labels, ingest_out;
  bool validate_only = false;
  ingest->add_option("--input", ingest_input, "Dataset file (one JSON tree per line)")->required();
  ingest->add_option("--labels", ingest_labels, "Comma separated risk levels, lowest first");
  ingest->add_flag("--validate-only", validate_only, "Only validate, do not write records");
  ingest->add_option("--out", ingest_out, "Write normalised records here instead of stdout");

  // reason
  auto* reason = app.add_subcommand("reason", "Generate counterfactual inferences for every tree");
  std::string reason_dataset, reason_out;
  std::optional<int> reason_n;
  reason->add_option("--dataset", reason_dataset, "Dataset file")->required();
  reason->add_option("--n", reason_n, "Inferences per tree (default from config)");
  reason->add_option("--out", reason_out, "Inference store to write")->required();

  // cluster
  auto* cluster = app.add_subcommand("cluster", "Cluster stored inferences into mediator representatives");
  std::string cluster_in, cluster_out;
  std::optional<int> cluster_k;
  std::optional<std::uint64_t> cluster_seed;
  cluster->add_option("--inferences", cluster_in, "Inference store")->required();
  cluster->add_option("--k", cluster_k, "Number of clusters (default from config)");
  cluster->add_option("--seed", cluster_seed, "k-means seed (default derived from the master seed)");
  cluster->add_option("--out", cluster_out, "Mediator store to write")->required();

  // predict
  auto* predict = app.add_subcommand("predict", "Predict a risk level for every tree");
  std::string predict_dataset, predict_pool, predict_out;
  predict->add_option("--dataset", predict_dataset, "Trees to predict")->required();
  predict->add_option("--pool", predict_pool, "Labelled demonstration pool")->required();
  predict->add_option("--out", predict_out, "Predictions file to write")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "k-fold evaluation with ablations");
  std::string eval_dataset, eval_report, eval_ablations = "full";
  int eval_k = 5;
  eval->add_option("--dataset", eval_dataset, "Labelled dataset")->required();
  eval->add_option("--k", eval_k, "Number of folds")->capture_default_str();
  eval->add_option("--ablations", eval_ablations, "Comma separated: full,no_reasoner,no_decider,analyst_only")
      ->capture_default_str();
  eval->add_option("--report", eval_report, "Report directory")->required();

  // scm-verify
  auto* verify = app.add_subcommand("scm-verify", "Check the front-door estimator against exact enumeration");
  std::string scm_path = "builtin:scm-a", scm_report;
  std::size_t scm_samples = 100000;
  int scm_seeds = 20;
  verify->add_option("--scm", scm_path, "Model file, or builtin:scm-a")->capture_default_str();
  verify->add_option("--samples", scm_samples, "Samples per seed")->capture_default_str();
  verify->add_option("--seeds", scm_seeds, "Number of seeds")->capture_default_str();
  verify->add_option("--report", scm_report, "Report file (stdout when omitted)");

  // cache
  auto* cache = app.add_subcommand("cache", "Inspect or clear the response cache");
  cache->require_subcommand(1);
  auto* cache_stats_cmd = cache->add_subcommand("stats", "Entry count and size");
  auto* cache_clear_cmd = cache->add_subcommand("clear", "Delete every cache entry");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return kOk;
    err << '\n' << app.help();
    return kUsage;
  }

  Session session(g, err, trace);
  try {
    if (*ingest) {
      const RiskLabelSet labels = ingest_labels.empty() ? session.config().labels : RiskLabelSet::parse(ingest_labels);
      const Dataset ds = parse_dataset(fs::path(ingest_input), labels);
      std::size_t labelled = 0, nodes = 0;
      for (const auto& t : ds.trees) {
        labelled += t.gold_label ? 1 : 0;
        nodes += t.node_count;
      }
      if (validate_only || !ingest_out.empty()) {
        out << "valid: trees=" << ds.trees.size() << " labelled=" << labelled << " nodes=" << nodes << '\n';
      }
      if (!validate_only) {
        if (ingest_out.empty()) write_dataset(out, ds);
        else {
          auto f = open_out(ingest_out);
          write_dataset(f, ds);
        }
      }
      return kOk;
    }

    if (*verify) {
      const lab::DiscreteScm scm = scm_path == "builtin:scm-a" ? lab::DiscreteScm::scm_a() : lab::load_scm(scm_path);
      const std::uint64_t seed = g.seed.value_or(session.config().master_seed);
      if (g.dry_run) {
        out << lab::format_scm(scm) << "samples=" << scm_samples << "\nseeds=" << scm_seeds << '\n';
        return kOk;
      }
      const auto rep = lab::verify(scm, scm_samples, scm_seeds, seed);
      if (scm_report.empty()) lab::write_report(out, rep);
      else {
        auto f = open_out(scm_report);
        lab::write_report(f, rep);
        out << "frontdoor_tv<=0.02: " << rep.frontdoor_within(0.02) << "/" << rep.seeds.size()
            << "  naive_tv>0.05: " << rep.naive_beyond(0.05) << "/" << rep.seeds.size() << '\n';
      }
      return kOk;
    }

    if (*cache) {
      const fs::path dir = session.config().backend.cache_dir;
      if (dir.empty()) throw ValidationError("cache.dir is not configured");
      if (*cache_stats_cmd) {
        const auto s = cache_stats(dir);
        out << "dir=" << dir.string() << "\nentries=" << s.entries << "\nbytes=" << s.bytes << '\n';
      } else if (*cache_clear_cmd) {
        out << "removed=" << cache_clear(dir) << '\n';
      }
      return kOk;
    }

    auto& cfg = session.config();
    if (*reason && reason_n) cfg.reasoner.n = *reason_n;
    if (*cluster) {
      if (cluster_k) cfg.mediator.k = *cluster_k;
      if (cluster_seed) cfg.mediator.seed = *cluster_seed;
    }
    session.validate();

    if (g.dry_run) {
      out << describe_plan(cfg);
      return kOk;
    }

    if (*reason) {
      const Dataset ds = parse_dataset(fs::path(reason_dataset), cfg.labels);
      ReasonerConfig rc = cfg.reasoner;
      rc.analyst_only = cfg.ablation == Ablation::AnalystOnly;
      const Reasoner reasoner(session.backend(), cfg.prompts, rc);
      auto f = open_out(reason_out);
      for (const auto& tree : ds.trees) {
        const auto outcome = reasoner.generate_inferences(tree, cfg.reasoner.n);
        for (const auto& msg : outcome.skipped) err << "skipped: " << tree.id << ": " << msg << '\n';
        for (const auto& inf : outcome.inferences) f << serialize_inference(inf) << '\n';
      }
      return kOk;
    }

    if (*cluster) {
      std::ifstream in(cluster_in);
      if (!in) throw ValidationError("cannot open inference store " + cluster_in);
      const auto groups = read_inference_store(in);
      auto f = open_out(cluster_out);
      for (const auto& [tree_id, inferences] : groups) f << serialize_mediators(build_mediators(inferences, cfg.mediator, tree_id)) << '\n';
      return kOk;
    }

    if (*predict) {
      const Dataset ds = parse_dataset(fs::path(predict_dataset), cfg.labels);
      const Dataset pool_ds = parse_dataset(fs::path(predict_pool), cfg.labels);
      const Pipeline pipeline(cfg, session.backend());
      const DemonstrationPool pool = pipeline.make_pool(pool_ds);
      auto f = open_out(predict_out);
      for (const auto& tree : ds.trees) f << serialize_prediction(pipeline.predict(tree, pool), cfg.labels) << '\n';
      return kOk;
    }

    if (*eval) {
      const Dataset ds = parse_dataset(fs::path(eval_dataset), cfg.labels);
      std::vector<MetricReport> reports;
      std::stringstream list(eval_ablations);
      std::string name;
      std::vector<Ablation> variants;
      while (std::getline(list, name, ',')) variants.push_back(parse_ablation(name));
      if (variants.empty()) throw ValidationError("--ablations: at least one variant is required");
      for (auto variant : variants) {
        PipelineConfig vc = cfg;
        vc.ablation = variant;
        reports.push_back(run_experiment(ds, vc, eval_k, session.backend()));
      }
      write_report_dir(eval_report, reports, cfg.labels);
      std::ifstream summary(fs::path(eval_report) / "summary.tsv");
      out << summary.rdbuf();
      bool complete = true;
      for (const auto& r : reports) complete = complete && r.complete;
      return complete ? kOk : kPipeline;
    }
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kPipeline;
  }
  err << app.help();
  return kUsage;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, RunTrace* trace) {
  std::vector<const char*> argv{"macr"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err, trace);
}

}  // namespace macr::cli
