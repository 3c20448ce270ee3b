// signnet command-line front end.
#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>

#include "signnet/errors.hpp"
#include "signnet/io.hpp"
#include "signnet/pipeline.hpp"
#include "signnet/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace signnet;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string out;
  bool resume = false;
  bool quiet = false;
};

RunConfig build_config(const Globals& g) {
  RunConfig c = g.config_path.empty() ? RunConfig{} : load_config(g.config_path);
  if (g.seed) c.seed = *g.seed;
  return c;
}

fs::path require_out(const Globals& g) {
  if (g.out.empty()) throw ValidationError("--out is required for this command");
  return g.out;
}

void log_line(const Globals& g, const std::string& msg) {
  if (!g.quiet) std::cerr << msg << '\n';
}

std::string accuracy_json(const EvalReport& r) {
  ordered_json j = {{"test_accuracy", r.test_accuracy},
                    {"val_accuracy", r.val_accuracy},
                    {"train_accuracy", r.train_accuracy}};
  return j.dump(2);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SIGNNet node classification toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "Run seed");
  app.add_option("--config", g.config_path, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "Output directory");
  app.add_flag("--resume", g.resume, "Skip stages whose inputs are unchanged");
  app.add_flag("-q,--quiet", g.quiet, "No progress output");

  std::string dataset_dir;

  auto* metrics_cmd = app.add_subcommand("metrics", "Print dataset metrics as JSON");
  metrics_cmd->add_option("dataset", dataset_dir, "Dataset directory")->required();

  auto* pre_cmd = app.add_subcommand("preprocess", "Write enriched features (xfinal.txt)");
  pre_cmd->add_option("dataset", dataset_dir, "Dataset directory")->required();
  std::string class_reps;
  bool deg_norm = false;
  pre_cmd->add_option("--class-reps", class_reps, "Representative nodes")
      ->check(CLI::IsMember({"train", "all"}));
  pre_cmd->add_flag("--deg-norm", deg_norm, "Divide the connection score by the maximum degree");

  auto* sample_cmd = app.add_subcommand("sample", "Write subgraph sequences (subgraphs.txt)");
  sample_cmd->add_option("dataset", dataset_dir, "Dataset directory")->required();
  std::optional<double> c_opt;
  std::optional<int> k1_opt, q_opt;
  std::string propagation;
  sample_cmd->add_option("--c", c_opt, "Damping factor");
  sample_cmd->add_option("--k1", k1_opt, "Context nodes per sequence");
  sample_cmd->add_option("--q", q_opt, "Sequences per node");
  sample_cmd->add_option("--propagation", propagation, "random_walk or symmetric")
      ->check(CLI::IsMember({"random_walk", "symmetric"}));

  auto* train_cmd = app.add_subcommand("train", "Run the full pipeline");
  train_cmd->add_option("dataset", dataset_dir, "Dataset directory")->required();
  bool emit_embeddings = false;
  std::vector<std::uint64_t> seeds;
  train_cmd->add_flag("--emit-embeddings", emit_embeddings, "Write embeddings.txt");
  train_cmd->add_option("--seeds", seeds, "Run once per seed into <out>/seed-<s>")->delimiter(',');

  auto* eval_cmd = app.add_subcommand("eval", "Recompute accuracies of a run directory");
  std::string run_dir;
  eval_cmd->add_option("run-dir", run_dir, "Run directory")->required();
  eval_cmd->add_flag("--emit-embeddings", emit_embeddings, "Write embeddings.txt");

  auto* sbm_cmd = app.add_subcommand("gen-sbm", "Write a stochastic block model dataset");
  SbmOptions sbm;
  sbm_cmd->add_option("--nodes", sbm.nodes, "Node count");
  sbm_cmd->add_option("--blocks", sbm.blocks, "Block (class) count");
  sbm_cmd->add_option("--p-in", sbm.p_in, "Intra-block edge probability");
  sbm_cmd->add_option("--p-out", sbm.p_out, "Inter-block edge probability");
  sbm_cmd->add_option("--dim", sbm.feature_dim, "Feature dimension");
  sbm_cmd->add_option("--shift", sbm.shift, "Class mean offset per feature");

  for (auto* cmd : {metrics_cmd, pre_cmd, sample_cmd, train_cmd, eval_cmd, sbm_cmd}) {
    cmd->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*metrics_cmd) {
      const Dataset d = load_dataset(dataset_dir);
      std::cout << metrics_to_json(dataset_metrics(d.graph)) << '\n';
    } else if (*pre_cmd) {
      RunConfig c = build_config(g);
      if (!class_reps.empty()) c.enrichment.class_reps_all = class_reps == "all";
      if (deg_norm) c.enrichment.deg_norm = true;
      c.validate();
      const fs::path out = require_out(g);
      const Dataset d = load_dataset(dataset_dir);
      const PreprocessOutput pre = preprocess(d.graph, c);
      if (!pre.splits.warning.empty()) log_line(g, "warning: " + pre.splits.warning);
      write_splits(out / "splits.txt", pre.splits);
      write_matrix(out / "xfinal.txt", pre.features.x_final);
      write_matrix(out / "class_reps.txt", pre.features.class_reps);
      ordered_json prov = {{"stage", "preprocess"},
                           {"dataset", fs::absolute(dataset_dir).string()},
                           {"tau", c.tau},
                           {"gcn_layers", c.gcn.layers},
                           {"seed", c.seed},
                           {"xfinal_hash", file_hash(out / "xfinal.txt")}};
      write_text(out / "provenance.json", prov.dump(2) + "\n");
      log_line(g, "wrote " + (out / "xfinal.txt").string());
    } else if (*sample_cmd) {
      RunConfig c = build_config(g);
      if (c_opt) c.sampler.c = *c_opt;
      if (k1_opt) c.sampler.k1 = *k1_opt;
      if (q_opt) c.sampler.q = *q_opt;
      if (!propagation.empty()) c.sampler.propagation = propagation_from_string(propagation);
      c.validate();
      const fs::path out = require_out(g);
      const Dataset d = load_dataset(dataset_dir);
      if (c.sampler.k1 >= d.graph.num_nodes()) {
        throw ValidationError("k1 = " + std::to_string(c.sampler.k1) + " must be below n = " +
                              std::to_string(d.graph.num_nodes()));
      }
      write_subgraphs(out / "subgraphs.txt", sample(d.graph, c));
      log_line(g, "wrote " + (out / "subgraphs.txt").string());
    } else if (*train_cmd) {
      const RunConfig base = build_config(g);
      const fs::path out = require_out(g);
      auto run = [&](const RunConfig& c, const fs::path& dir) {
        PipelineOptions o;
        o.dataset_dir = dataset_dir;
        o.out_dir = dir;
        o.config = c;
        o.resume = g.resume;
        o.emit_embeddings = emit_embeddings;
        o.log = [&](const std::string& m) { log_line(g, m); };
        o.on_epoch = [&](const EpochRecord& r) {
          char buf[128];
          std::snprintf(buf, sizeof buf, "epoch %d  loss %.4f  train_acc %.4f  val_acc %.4f",
                        r.epoch, r.train_loss, r.train_acc, r.val_acc);
          log_line(g, buf);
        };
        return run_pipeline(o);
      };
      if (seeds.empty()) {
        run(base, out);
        std::cout << read_text(out / "result.json");
      } else {
        ordered_json summary;
        summary["runs"] = ordered_json::array();
        double sum = 0, sum_sq = 0;
        for (std::uint64_t s : seeds) {
          RunConfig c = base;
          c.seed = s;
          const PipelineResult r = run(c, out / ("seed-" + std::to_string(s)));
          summary["runs"].push_back({{"seed", s}, {"test_accuracy", r.eval.test_accuracy}});
          sum += r.eval.test_accuracy;
          sum_sq += r.eval.test_accuracy * r.eval.test_accuracy;
        }
        const double k = static_cast<double>(seeds.size());
        const double mean = sum / k;
        summary["mean_test_accuracy"] = mean;
        summary["std_test_accuracy"] = std::sqrt(std::max(0.0, sum_sq / k - mean * mean));
        write_text(out / "summary.json", summary.dump(2) + "\n");
        std::cout << summary.dump(2) << '\n';
      }
    } else if (*eval_cmd) {
      std::cout << accuracy_json(evaluate_run(run_dir, emit_embeddings)) << '\n';
    } else if (*sbm_cmd) {
      const fs::path out = require_out(g);
      const RunConfig c = build_config(g);
      save_dataset(out, Dataset{"sbm", generate_sbm(sbm, c.seed)});
      log_line(g, "wrote " + out.string());
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
