#include "signnet/pipeline.hpp"

#include <json.hpp>

#include "signnet/errors.hpp"
#include "signnet/model.hpp"
#include "signnet/rng.hpp"
#include "signnet/sampler.hpp"

namespace signnet {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kProvenanceVersion = 1;
const char* const kDatasetFiles[] = {"edges.txt", "features.txt", "labels.txt", "meta.json"};

std::string dataset_hash(const fs::path& dir) {
  std::uint64_t h = fnv1a("");
  for (const char* f : kDatasetFiles) h = fnv1a(file_hash(dir / f), h);
  return hex64(h);
}

std::string combine(std::initializer_list<std::string> parts) {
  std::uint64_t h = fnv1a("");
  for (const auto& p : parts) {
    h = fnv1a(p, h);
    h = fnv1a(std::string_view("\x1f", 1), h);
  }
  return hex64(h);
}

ordered_json section(const RunConfig& c, std::initializer_list<const char*> keys) {
  const auto full = ordered_json::parse(config_to_json(c, -1));
  ordered_json out = ordered_json::object();
  for (const char* k : keys) out[k] = full.at(k);
  return out;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,train_loss,train_acc,val_acc\n";
  for (const auto& r : history) {
    out += std::to_string(r.epoch) + "," + format_double(r.train_loss) + "," +
           format_double(r.train_acc) + "," + format_double(r.val_acc) + "\n";
  }
  return out;
}

DatasetMetrics metrics_from_json(const std::string& text) {
  const auto j = ordered_json::parse(text);
  DatasetMetrics m;
  m.avg_degree = j.at("avg_degree").get<double>();
  m.clustering = j.at("clustering").get<double>();
  m.triangles_per_node = j.at("triangles_per_node").get<double>();
  m.mean_pagerank = j.at("mean_pagerank").get<double>();
  m.homophily = j.at("homophily").get<double>();
  return m;
}

template <typename F>
auto in_stage(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ValidationError& e) {
    throw ValidationError(stage + ": " + e.what());
  } catch (const std::exception& e) {
    throw RuntimeFailure(stage + ": " + e.what());
  }
}

class Provenance {
 public:
  Provenance(fs::path dir, bool load) : path_(std::move(dir) / "provenance.json") {
    if (load && fs::exists(path_)) {
      try {
        doc_ = ordered_json::parse(read_text(path_));
      } catch (const nlohmann::json::exception&) {
        doc_ = ordered_json::object();
      }
    }
    if (!doc_.is_object() || doc_.value("version", 0) != kProvenanceVersion) {
      doc_ = ordered_json::object();
    }
    doc_["version"] = kProvenanceVersion;
    if (!doc_.contains("stages")) doc_["stages"] = ordered_json::object();
  }

  ordered_json& doc() { return doc_; }

  bool up_to_date(const std::string& stage, const std::string& key,
                  const std::vector<std::string>& outputs) const {
    const auto& stages = doc_.at("stages");
    if (!stages.contains(stage)) return false;
    const auto& rec = stages.at(stage);
    if (rec.value("key", "") != key) return false;
    for (const auto& name : outputs) {
      const fs::path p = path_.parent_path() / name;
      if (!fs::exists(p) || !rec.contains("outputs") || !rec["outputs"].contains(name) ||
          rec["outputs"][name].get<std::string>() != file_hash(p)) {
        return false;
      }
    }
    return true;
  }

  void record(const std::string& stage, const std::string& key,
              const std::vector<std::string>& outputs, ordered_json extra = {}) {
    ordered_json rec;
    rec["key"] = key;
    rec["outputs"] = ordered_json::object();
    for (const auto& name : outputs) rec["outputs"][name] = file_hash(path_.parent_path() / name);
    if (!extra.is_null()) rec["summary"] = std::move(extra);
    doc_["stages"][stage] = std::move(rec);
    save();
  }

  const ordered_json& summary(const std::string& stage) const {
    return doc_.at("stages").at(stage).at("summary");
  }

  void save() const { write_text(path_, doc_.dump(2) + "\n"); }

 private:
  fs::path path_;
  ordered_json doc_ = ordered_json::object();
};

struct RunArtifacts {
  Graph graph;
  Eigen::MatrixXd x_final;
  SplitMasks splits;
  SubgraphSet sequences;
};

RunArtifacts load_artifacts(const Graph& g, const fs::path& dir) {
  RunArtifacts a;
  a.graph = g;
  a.x_final = read_matrix(dir / "xfinal.txt");
  if (a.x_final.rows() != g.num_nodes()) {
    throw ValidationError("xfinal.txt has " + std::to_string(a.x_final.rows()) + " rows, graph has " +
                          std::to_string(g.num_nodes()) + " nodes");
  }
  a.splits = read_splits(dir / "splits.txt", g.num_nodes());
  a.sequences = read_subgraphs(dir / "subgraphs.txt", g.num_nodes());
  return a;
}

EvalReport evaluate_artifacts(const RunArtifacts& a, const fs::path& dir, bool emit_embeddings) {
  const auto [model_config, params] = load_checkpoint(dir / "checkpoint.json");
  const StructuralEncoding enc(a.graph, model_config.num_encodings);
  TransformerData data;
  data.graph = &a.graph;
  data.features = ad::Tensor::constant(ad::Matrix(a.x_final));
  data.sequences = &a.sequences;
  data.encoding = &enc;
  EvalReport report;
  report.test_accuracy = evaluate(data, params, model_config, a.splits, Split::kTest);
  report.val_accuracy = evaluate(data, params, model_config, a.splits, Split::kVal);
  report.train_accuracy = evaluate(data, params, model_config, a.splits, Split::kTrain);
  if (emit_embeddings) write_matrix(dir / "embeddings.txt", node_embeddings(data, params, model_config));
  return report;
}

}  // namespace

std::string metrics_to_json(const DatasetMetrics& m, int indent) {
  ordered_json j = {{"avg_degree", m.avg_degree},
                    {"clustering", m.clustering},
                    {"triangles_per_node", m.triangles_per_node},
                    {"mean_pagerank", m.mean_pagerank},
                    {"homophily", m.homophily}};
  return j.dump(indent);
}

PreprocessOutput preprocess(const Graph& g, const RunConfig& config) {
  PreprocessOutput out;
  out.splits = make_splits(g, config.split, config.seed);
  const CompatibilityMatrix comp = compatibility_matrix(g, config.tau);
  out.gcn = train_gcn_stage(g, comp, out.splits, config.gcn, config.seed);
  const NodeMask rep_mask =
      config.enrichment.class_reps_all ? NodeMask(g.num_nodes(), 1) : out.splits.mask(Split::kTrain);
  out.features = enrich(g, out.gcn.p, rep_mask, EnrichOptions{config.enrichment.deg_norm});
  return out;
}

SubgraphSet sample(const Graph& g, const RunConfig& config) {
  const SamplingMatrix s = sampling_matrix(g, config.sampler.c, config.sampler.propagation);
  const std::uint64_t sampler_seed = make_rng(config.seed, RngStream::kSampler)();
  return sample_subgraphs(s, config.sampler.k1, config.sampler.q, sampler_seed);
}

PipelineResult run_pipeline(const PipelineOptions& options) {
  const RunConfig& config = options.config;
  config.validate();
  const fs::path& out = options.out_dir;
  auto log = [&](const std::string& msg) {
    if (options.log) options.log(msg);
  };

  const Dataset dataset = in_stage("load", [&] { return load_dataset(options.dataset_dir); });
  const Graph& g = dataset.graph;
  fs::create_directories(out);

  Provenance prov(out, options.resume);
  const std::string data_hash = dataset_hash(options.dataset_dir);
  prov.doc()["dataset"] = {{"path", fs::absolute(options.dataset_dir).string()},
                           {"name", dataset.name},
                           {"hash", data_hash}};
  prov.doc()["config"] = ordered_json::parse(config_to_json(config, -1));

  PipelineResult result;
  auto stage = [&](const std::string& name, const std::string& key,
                   const std::vector<std::string>& outputs, bool force, auto&& run) {
    if (options.resume && !force && prov.up_to_date(name, key, outputs)) {
      log(name + ": up to date, skipped");
      result.stages.push_back({name, true});
      return false;
    }
    log(name + ": running");
    in_stage(name, run);
    result.stages.push_back({name, false});
    return true;
  };

  // metrics
  const std::string metrics_key = combine({data_hash});
  if (!stage("metrics", metrics_key, {"metrics.json"}, false, [&] {
        result.metrics = dataset_metrics(g);
        write_text(out / "metrics.json", metrics_to_json(result.metrics) + "\n");
        prov.record("metrics", metrics_key, {"metrics.json"});
      })) {
    result.metrics = metrics_from_json(read_text(out / "metrics.json"));
  }

  // preprocess
  const std::vector<std::string> pre_outputs = {"splits.txt", "xfinal.txt", "class_reps.txt"};
  const std::string pre_key = combine(
      {data_hash, section(config, {"seed", "tau", "split", "enrichment", "gcn"}).dump()});
  const bool pre_ran = stage("preprocess", pre_key, pre_outputs, false, [&] {
    const PreprocessOutput pre = preprocess(g, config);
    if (!pre.splits.warning.empty()) log("preprocess: warning: " + pre.splits.warning);
    write_splits(out / "splits.txt", pre.splits);
    write_matrix(out / "xfinal.txt", pre.features.x_final);
    write_matrix(out / "class_reps.txt", pre.features.class_reps);
    prov.record("preprocess", pre_key, pre_outputs,
                {{"gcn_final_loss", pre.gcn.final_loss},
                 {"gcn_train_accuracy", pre.gcn.train_accuracy}});
  });

  // sample
  const std::string sample_key = combine({data_hash, section(config, {"seed", "sampler"}).dump()});
  const bool sample_ran = stage("sample", sample_key, {"subgraphs.txt"}, false, [&] {
    write_subgraphs(out / "subgraphs.txt", sample(g, config));
    prov.record("sample", sample_key, {"subgraphs.txt"});
  });
  bool upstream_ran = pre_ran || sample_ran;

  // train
  const std::vector<std::string> train_outputs = {"checkpoint.json", "history.csv"};
  auto artifact_hashes = [&] {
    return combine({file_hash(out / "xfinal.txt"), file_hash(out / "splits.txt"),
                    file_hash(out / "subgraphs.txt")});
  };
  const std::string train_key = combine(
      {artifact_hashes(), section(config, {"seed", "sampler", "model", "transformer"}).dump()});
  const bool train_ran = stage("train", train_key, train_outputs, upstream_ran, [&] {
    const RunArtifacts a = load_artifacts(g, out);
    const ModelConfig model_config = config.model_config();
    const StructuralEncoding enc(g, model_config.num_encodings);
    TransformerData data;
    data.graph = &a.graph;
    data.features = ad::Tensor::constant(ad::Matrix(a.x_final));
    data.sequences = &a.sequences;
    data.encoding = &enc;
    const TransformerResult trained = train_transformer_stage(
        data, a.splits, model_config, config.transformer, config.seed, options.on_epoch);
    save_checkpoint(out / "checkpoint.json", model_config, trained.params);
    write_text(out / "history.csv", history_csv(trained.history));
    prov.record("train", train_key, train_outputs,
                {{"best_epoch", trained.best_epoch},
                 {"epochs_run", static_cast<int>(trained.history.size())},
                 {"best_val_accuracy", trained.best_val_accuracy}});
  });
  upstream_ran = upstream_ran || train_ran;
  result.best_epoch = prov.summary("train").at("best_epoch").get<int>();
  result.epochs_run = prov.summary("train").at("epochs_run").get<int>();

  // eval
  std::vector<std::string> eval_outputs = {"result.json"};
  if (options.emit_embeddings) eval_outputs.push_back("embeddings.txt");
  const std::string eval_key = combine({artifact_hashes(), file_hash(out / "checkpoint.json")});
  if (!stage("eval", eval_key, eval_outputs, upstream_ran, [&] {
        const RunArtifacts a = load_artifacts(g, out);
        result.eval = evaluate_artifacts(a, out, options.emit_embeddings);
        ordered_json j;
        j["dataset"] = dataset.name;
        j["seed"] = config.seed;
        j["test_accuracy"] = result.eval.test_accuracy;
        j["val_accuracy"] = result.eval.val_accuracy;
        j["train_accuracy"] = result.eval.train_accuracy;
        j["best_epoch"] = result.best_epoch;
        j["epochs_run"] = result.epochs_run;
        j["config"] = ordered_json::parse(config_to_json(config, -1));
        write_text(out / "result.json", j.dump(2) + "\n");
        prov.record("eval", eval_key, eval_outputs);
      })) {
    const auto j = ordered_json::parse(read_text(out / "result.json"));
    result.eval.test_accuracy = j.at("test_accuracy").get<double>();
    result.eval.val_accuracy = j.at("val_accuracy").get<double>();
    result.eval.train_accuracy = j.at("train_accuracy").get<double>();
  }
  return result;
}

EvalReport evaluate_run(const fs::path& run_dir, bool emit_embeddings) {
  const fs::path prov_path = run_dir / "provenance.json";
  if (!fs::exists(prov_path)) throw ValidationError("not a run directory (no provenance.json): " + run_dir.string());
  ordered_json prov;
  try {
    prov = ordered_json::parse(read_text(prov_path));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("provenance.json: " + std::string(e.what()));
  }
  const fs::path dataset_dir = prov.at("dataset").at("path").get<std::string>();
  const Dataset dataset = load_dataset(dataset_dir);
  const RunArtifacts a = load_artifacts(dataset.graph, run_dir);
  return evaluate_artifacts(a, run_dir, emit_embeddings);
}

}  // namespace signnet
