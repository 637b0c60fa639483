// Command-line front end: learn, eval, sample, topics, cluster, nmi.
//
// Every file or report written starts with a "# ltm-run {...}" line holding
// the full effective configuration; passing such a file to --config replays
// the run.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "ltm/ltm.hpp"

namespace {

using namespace ltm;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Writes to the configured output path, or stdout when none is set.
void emit(const RunConfig& cfg, const std::string& body) {
  if (cfg.output.empty() || cfg.output == "-") {
    std::cout << body;
    return;
  }
  std::ofstream out(cfg.output, std::ios::binary);
  if (!out) throw DataError("cannot write '" + cfg.output + "'");
  out << body;
}

WeightedDataset load_input(const RunConfig& cfg) {
  if (cfg.inputs.empty()) throw DataError("no input data given");
  const auto& path = cfg.inputs[0];
  if (cfg.vocab_size > 0) {
    const auto corpus = read_corpus(path);
    return ingest_bag_of_words(corpus, cfg.vocab_size);
  }
  return load_categorical_csv(path);
}

std::vector<std::string> run_metadata(const RunConfig& cfg) {
  auto header = run_header(cfg);
  header.pop_back();
  return {header.substr(2)};
}

void add_score_lines(std::vector<std::string>& meta, const LatentTreeModel& m,
                     const WeightedDataset& data) {
  const double ll = log_likelihood(m, data);
  meta.push_back("log_likelihood " + format_double(ll));
  meta.push_back("bic " + format_double(bic_from(ll, dimension(m), data.total_weight())));
  meta.push_back("records " + std::to_string(data.total_weight()));
}

int cmd_learn(const std::string& method, const RunConfig& cfg) {
  const auto started = std::chrono::steady_clock::now();
  const auto learn_cfg = cfg.learn_config();
  auto data = load_input(cfg);
  WeightedDataset test_data = data;
  const bool held_out = cfg.test_fraction > 0.0;
  if (held_out) std::tie(data, test_data) = split(data, cfg.test_fraction, cfg.seed);

  LatentTreeModel model;
  std::map<std::string, int> levels;
  if (method == "bi") {
    model = learn_bi(data, learn_cfg).model;
  } else if (method == "clrg") {
    model = clrg(data, learn_cfg).model;
  } else {
    auto h = build_hierarchy(data, cfg.max_levels, learn_cfg);
    model = std::move(h.merged);
    levels = std::move(h.latent_level);
  }
  auto meta = run_metadata(cfg);
  add_score_lines(meta, model, data);
  for (const auto& [name, level] : levels) meta.push_back("level " + name + " " + std::to_string(level));
  emit(cfg, serialize(model, meta));

  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  std::ostream& report = cfg.output.empty() ? std::cerr : std::cout;
  report << "latents " << model.latent_nodes().size() << '\n'
         << "log_likelihood " << format_double(log_likelihood(model, data)) << '\n'
         << "bic " << format_double(bic(model, data)) << '\n';
  if (held_out)
    report << "test_log_likelihood " << format_double(log_likelihood(model, test_data)) << '\n';
  report << "runtime_seconds " << seconds << '\n';
  return 0;
}

LatentTreeModel load_model_input(const std::string& path) { return load_model(path); }

int cmd_eval(const RunConfig& cfg, const std::string& model_path) {
  const auto model = load_model_input(model_path);
  const auto data = load_input(cfg);
  const double ll = checked_log_likelihood(model, data);
  std::ostringstream out;
  out << run_header(cfg);
  out << "log_likelihood " << format_double(ll) << '\n'
      << "records " << data.total_weight() << '\n'
      << "per_record " << format_double(ll / static_cast<double>(data.total_weight())) << '\n';
  if (data.num_variables() == model.observed_nodes().size())
    out << "bic " << format_double(bic_from(ll, dimension(model), data.total_weight())) << '\n';
  emit(cfg, out.str());
  return 0;
}

int cmd_sample(const RunConfig& cfg, const std::string& model_path) {
  const auto model = load_model_input(model_path);
  const auto data = forward_sample(model, cfg.samples, cfg.seed);
  std::ostringstream out;
  out << run_header(cfg);
  write_categorical_csv(out, data);
  emit(cfg, out.str());
  return 0;
}

// Hierarchy levels recorded in a model file's metadata ("# level NAME K").
std::map<std::string, int> read_levels(const std::string& text) {
  std::map<std::string, int> levels;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string hash, key, name;
    int level = 0;
    if (fields >> hash >> key >> name >> level && hash == "#" && key == "level") levels[name] = level;
  }
  return levels;
}

int cmd_topics(const RunConfig& cfg, const std::string& model_path) {
  const auto text = read_text_file(model_path);
  HierarchicalModel h;
  h.merged = deserialize(text);
  h.latent_level = read_levels(text);
  for (int z : h.merged.latent_nodes())
    h.latent_level.emplace(h.merged.variable(z).name, 1);
  const auto data = load_input(cfg);
  const auto topics = extract_topics(h, data);
  const auto roots = topic_hierarchy(topics, h);
  std::ostringstream out;
  if (cfg.format == "json") {
    // JSON cannot carry comment lines; the configuration travels as a field.
    auto doc = nlohmann::json::parse(hierarchy_to_json(roots));
    doc["run"] = nlohmann::json(cfg);
    out << doc.dump(2) << '\n';
  } else if (cfg.format == "html") {
    out << "<!-- " << run_header(cfg).substr(2, run_header(cfg).size() - 3) << " -->\n"
        << hierarchy_to_html(roots);
  } else if (cfg.format == "text") {
    out << run_header(cfg) << hierarchy_to_text(roots) << '\n';
    for (const auto& t : topics) {
      write_topic_table(out, t);
      out << '\n';
    }
  } else {
    throw CLI::ValidationError("--format", "expected text, json or html");
  }
  emit(cfg, out.str());
  return 0;
}

int cmd_cluster(const RunConfig& cfg, const std::string& model_path) {
  const auto data = load_input(cfg);
  LatentTreeModel model;
  std::vector<std::string> selected;
  if (model_path.empty()) {
    auto learned = build_unidimensional_model(data, cfg.learn_config());
    model = std::move(learned.fitted.model);
    if (!cfg.all_latents) selected.push_back(learned.designated);
  } else {
    model = load_model_input(model_path);
  }
  std::vector<std::string> kept;
  for (const auto& name : data.names())
    if (model.index_of(name) >= 0) kept.push_back(name);
  const auto aligned = project(data, kept);
  const auto partitions = extract_partitions(model, aligned, selected);
  std::ostringstream out;
  out << run_header(cfg);
  auto names = aligned.names();
  for (const auto& p : partitions) names.push_back(p.source);
  for (std::size_t i = 0; i < names.size(); ++i) out << (i ? "," : "") << names[i];
  out << '\n';
  for (std::size_t r = 0; r < aligned.num_rows(); ++r) {
    std::string line;
    for (int v : aligned.row(r)) line += std::to_string(v) + ",";
    for (const auto& p : partitions) line += std::to_string(p.labels[r]) + ",";
    line.pop_back();
    for (std::int64_t k = 0; k < aligned.weight(r); ++k) out << line << '\n';
  }
  emit(cfg, out.str());
  for (const auto& p : partitions) {
    write_profile(std::cerr, model, describe_partition(model, p.source));
    std::cerr << '\n';
  }
  return 0;
}

// Labels from the last column of a CSV file, one per record, so that the
// output of `cluster` can be passed directly.
std::vector<int> read_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::vector<int> labels;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto field = line.substr(line.rfind(',') + 1);
    if (header) {
      header = false;
      continue;
    }
    labels.push_back(detail::parse_state(field, labels.size() + 2));
  }
  return labels;
}

int cmd_nmi(const RunConfig& cfg) {
  if (cfg.inputs.size() != 2) throw DataError("nmi needs exactly two label files");
  const auto a = read_labels(cfg.inputs[0]);
  const auto b = read_labels(cfg.inputs[1]);
  std::ostringstream out;
  out << run_header(cfg) << "nmi " << format_double(normalized_mutual_information(a, b)) << '\n'
      << "ari " << format_double(adjusted_rand_index(a, b)) << '\n';
  emit(cfg, out.str());
  return 0;
}

// Options shared by the subcommands, bound directly to the configuration.
void add_common(CLI::App* app, RunConfig& cfg) {
  app->add_option("--seed", cfg.seed, "Random seed");
  app->add_option("--smoothing", cfg.smoothing, "Pseudo-count for tables and MI")
      ->check(CLI::NonNegativeNumber);
  app->add_option("--em-max-iterations", cfg.em_max_iterations, "EM iteration cap")
      ->check(CLI::PositiveNumber);
  app->add_option("--em-tolerance", cfg.em_tolerance, "Relative EM convergence tolerance")
      ->check(CLI::PositiveNumber);
  app->add_option("--em-restarts", cfg.em_restarts, "EM random restarts")->check(CLI::PositiveNumber);
  app->add_option("--threads", cfg.threads, "Worker threads for EM restarts")
      ->check(CLI::PositiveNumber);
  app->add_option("-o,--output", cfg.output, "Output file (default: stdout)");
}

void add_learning(CLI::App* app, RunConfig& cfg) {
  app->add_option("--ud-threshold", cfg.ud_threshold, "Unidimensionality test threshold (BIC)")
      ->check(CLI::NonNegativeNumber);
  app->add_option("--rg-tolerance", cfg.rg_tolerance, "Relative recursive grouping tolerance")
      ->check(CLI::NonNegativeNumber);
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  // A configuration file is applied first so that explicit flags override it.
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) != "--config") continue;
    try {
      cfg = parse_run_config(read_text_file(argv[i + 1]));
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kExitData;
    }
  }
  const std::string replayed_command = cfg.command;

  CLI::App app{"Latent tree analysis toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  app.add_option("--config", config_path, "Run configuration (JSON or any output with a run header)");

  std::string model_path;
  std::vector<std::string> data_paths;

  auto* learn = app.add_subcommand("learn", "Learn a latent tree model");
  learn->require_subcommand(1);
  learn->fallthrough();
  std::map<std::string, CLI::App*> learners;
  for (const char* name : {"bi", "clrg", "hlta"}) {
    auto* sub = learn->add_subcommand(name, std::string("Learn with ") + name);
    sub->fallthrough();
    add_common(sub, cfg);
    add_learning(sub, cfg);
    sub->add_option("data", data_paths, "Input CSV (or corpus with --vocab-size)");
    sub->add_option("--test-fraction", cfg.test_fraction, "Hold out this fraction for testing")
        ->check(CLI::Range(0.0, 1.0));
    sub->add_option("--vocab-size", cfg.vocab_size, "Read a text corpus, keeping this many words");
    if (std::string(name) == "bi") sub->add_flag("--binary-latents", cfg.binary_latents, "Binary latents only");
    if (std::string(name) == "hlta")
      sub->add_option("--max-levels", cfg.max_levels, "Maximum number of latent levels")
          ->check(CLI::PositiveNumber);
    learners[name] = sub;
  }

  auto* eval = app.add_subcommand("eval", "Log-likelihood and BIC of a model on data");
  add_common(eval, cfg);
  eval->add_option("model", model_path, "Model file")->required();
  eval->add_option("data", data_paths, "Data CSV")->required();
  eval->add_option("--vocab-size", cfg.vocab_size, "Read a text corpus, keeping this many words");

  auto* sample = app.add_subcommand("sample", "Draw records from a model");
  add_common(sample, cfg);
  sample->add_option("model", model_path, "Model file")->required();
  sample->add_option("-n,--records", cfg.samples, "Number of records")->required();

  auto* topics = app.add_subcommand("topics", "Topic tables and hierarchy of an HLTA model");
  add_common(topics, cfg);
  topics->add_option("model", model_path, "Model file written by 'learn hlta'")->required();
  topics->add_option("data", data_paths, "Word data the model was learned from")->required();
  topics->add_option("--vocab-size", cfg.vocab_size, "Read a text corpus, keeping this many words");
  topics->add_option("--format", cfg.format, "text, json or html")
      ->check(CLI::IsMember({"text", "json", "html"}));

  auto* cluster = app.add_subcommand("cluster", "Cluster records; labels appended as columns");
  add_common(cluster, cfg);
  add_learning(cluster, cfg);
  cluster->add_option("data", data_paths, "Data CSV");
  cluster->add_option("--model", model_path, "Use this model instead of learning one");
  cluster->add_flag("--all-latents", cfg.all_latents, "One partition per latent");

  auto* nmi = app.add_subcommand("nmi", "Agreement between two label files");
  add_common(nmi, cfg);
  nmi->add_option("labels", data_paths, "Two label CSV files")->required()->expected(2);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (!data_paths.empty()) cfg.inputs = data_paths;
    if (!model_path.empty()) cfg.inputs.insert(cfg.inputs.begin(), model_path);
    std::string command;
    for (auto* sub : app.get_subcommands()) {
      command = sub->get_name();
      for (auto* inner : sub->get_subcommands()) command += " " + inner->get_name();
    }
    if (!replayed_command.empty() && replayed_command != command)
      std::cerr << "note: configuration was recorded for '" << replayed_command << "'\n";
    cfg.command = command;
    cfg.check();
    // inputs holds the model first (when any), then data files.
    RunConfig run = cfg;
    if (!model_path.empty()) run.inputs.erase(run.inputs.begin());
    if (learn->parsed()) {
      for (const auto& [name, sub] : learners)
        if (sub->parsed()) return cmd_learn(name, run);
    }
    if (eval->parsed()) return cmd_eval(run, model_path);
    if (sample->parsed()) return cmd_sample(run, model_path);
    if (topics->parsed()) return cmd_topics(run, model_path);
    if (cluster->parsed()) return cmd_cluster(run, model_path);
    if (nmi->parsed()) return cmd_nmi(run);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const ModelError& e) {
    std::cerr << "model error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  }
  return kExitUsage;
}
