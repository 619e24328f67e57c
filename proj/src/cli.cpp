#include "clsa/cli.hpp"

#include "clsa/cachesim.hpp"
#include "clsa/checkpoint.hpp"
#include "clsa/evaluation.hpp"
#include "clsa/ingest.hpp"
#include "clsa/placement.hpp"
#include "clsa/report.hpp"
#include "clsa/synth.hpp"
#include "clsa/training.hpp"
#include "clsa/windows.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#ifndef CLSA_VERSION
#define CLSA_VERSION "unknown"
#endif

namespace clsa::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string version() { return CLSA_VERSION; }

namespace {

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("missing file: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// Every floating value rounded to `digits` decimals so equal runs give equal bytes.
json round_floats(const json& j, int digits = 6) {
  if (j.is_number_float()) {
    const double scale = std::pow(10.0, digits);
    double v = std::round(j.get<double>() * scale) / scale;
    if (v == 0.0) v = 0.0;  // drop negative zero
    return v;
  }
  if (j.is_array() || j.is_object()) {
    json out = j;
    for (auto it = out.begin(); it != out.end(); ++it) *it = round_floats(*it, digits);
    return out;
  }
  return j;
}

std::string fixed6(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void require_file(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw InputError("missing file: " + path.string());
}

std::string abs_path(const fs::path& p) { return fs::weakly_canonical(fs::absolute(p)).string(); }

struct Dataset {
  std::vector<ingest::RequestEvent> events;
  windows::PreparedDataset prepared;
};

Dataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InputError("missing dataset directory: " + dir.string());
  require_file(dir / "events.jsonl");
  Dataset d;
  d.events = ingest::read_events(dir / "events.jsonl");
  d.prepared = windows::read_prepared(dir, d.events);
  return d;
}

fs::path run_dataset(const fs::path& run) {
  if (!fs::is_directory(run)) throw InputError("missing run directory: " + run.string());
  const auto rec = read_json(run / "runrecord.json");
  if (!rec.contains("dataset")) throw ConsistencyError("runrecord.json names no dataset");
  return rec.at("dataset").get<std::string>();
}

model::ClsaModel load_checkpoint(const fs::path& run, int fold) {
  const auto path = run / ("fold_" + std::to_string(fold) + ".ckpt");
  if (!fs::is_regular_file(path)) throw ConsistencyError("missing checkpoint: " + path.string());
  return checkpoint::load(path);
}

std::size_t library_size(const std::vector<ingest::RequestEvent>& events) {
  std::set<int> ids;
  for (const auto& e : events) ids.insert(e.content_id);
  return ids.size();
}

// ---- prep -----------------------------------------------------------------

struct PrepOptions {
  std::string data_dir;
  std::string out;
  std::string zip_table;
  int n_obs = 20;
  int t_study = 1;
  int tau_stride = 1;
  int folds = 5;
  std::uint64_t seed = 1;
};

int cmd_prep(const PrepOptions& o) {
  const auto started = utc_now();
  const fs::path dir = o.data_dir;
  if (o.data_dir.empty()) throw InputError("--data-dir is required (or set CLSA_DATA_DIR)");
  for (const char* f : {"u.data", "u.user", "u.occupation"}) require_file(dir / f);

  const auto occupations = ingest::parse_occupations(dir / "u.occupation");
  const auto users = ingest::parse_users(dir / "u.user", occupations);
  const auto ratings = ingest::parse_ratings(dir / "u.data");
  fs::path zip_path = o.zip_table;
  if (zip_path.empty() && fs::is_regular_file(dir / "zip_coords.csv")) zip_path = dir / "zip_coords.csv";
  if (!zip_path.empty()) require_file(zip_path);
  const auto zips = zip_path.empty() ? ingest::ZipLookup{} : ingest::ZipLookup::load(zip_path);

  const auto layout = ingest::FeatureLayout::from_vocabulary(occupations);
  const auto data = ingest::join_and_encode(ratings, users, layout, zips);
  const auto taus = windows::default_tau_range(data.events, o.t_study, o.tau_stride);
  auto ds = windows::build_dataset(data.events, o.n_obs, taus, o.t_study);
  ds.layout = data.layout;
  ds.scaling = data.scaling;
  ds.fold_seed = derive_seed(o.seed, "fold");
  ds.folds = windows::kfold_split(ds, o.folds, ds.fold_seed);
  ds.k = o.folds;

  const fs::path out = o.out;
  fs::create_directories(out);
  ingest::write_events(out / "events.jsonl", data.events);
  auto meta = ingest::metadata_json(data);
  meta["zip_table"] = zip_path.empty() ? "" : zip_path.filename().string();
  write_json(out / "metadata.json", meta);
  windows::write_prepared(out, ds);

  std::cout << "events " << data.events.size() << "\n"
            << "windows " << ds.windows.size() << "\n"
            << "positives " << ds.positives() << "\n"
            << "T_total " << ds.t_total << "\n";
  if (data.report.geocode_misses > 0)
    std::cerr << "warning: " << data.report.geocode_misses
              << " users not found in the ZIP table; centroid used\n";

  append_manifest(out, {{"command", "prep"},
                        {"config_path", ""},
                        {"config",
                         {{"n_obs", o.n_obs},
                          {"t_study", o.t_study},
                          {"tau_stride", o.tau_stride},
                          {"folds", o.folds},
                          {"seed", o.seed}}},
                        {"inputs", json::array({abs_path(dir)})},
                        {"outputs",
                         {"events.jsonl", "metadata.json", "windows.jsonl", "dataset.json"}},
                        {"seed", o.seed},
                        {"started", started},
                        {"finished", utc_now()}});
  return kExitOk;
}

// ---- train ----------------------------------------------------------------

struct TrainOptions {
  std::string dataset;
  std::string out;
  std::string config;
  std::string ablation;
  std::string form;
  std::string input;
  int model_id = 2;
  std::uint64_t seed = 1;
  int epochs = 50;
  int patience = 10;
  int batch_size = 256;
  int encoder_dim = 512;
  int decoder_dim = 512;
  int mlp_dim = 128;
  double learning_rate = 1e-3;
  // Which flags were given explicitly.
  std::set<std::string> given;
};

model::ContrastiveForm parse_form(const std::string& s) {
  if (s == "printed") return model::ContrastiveForm::kPrinted;
  if (s == "standard") return model::ContrastiveForm::kStandard;
  throw InputError("unknown contrastive form '" + s + "'");
}

model::ContrastiveInput parse_input(const std::string& s) {
  if (s == "projection") return model::ContrastiveInput::kProjection;
  if (s == "hidden") return model::ContrastiveInput::kHidden;
  throw InputError("unknown contrastive input '" + s + "'");
}

int cmd_train(const TrainOptions& o) {
  const auto started = utc_now();
  const auto data = load_dataset(o.dataset);
  const auto& ds = data.prepared;
  auto has = [&o](const char* flag) { return o.given.count(flag) > 0; };

  auto cfg = training::variant_config(o.model_id);
  cfg.n_obs = ds.n_obs;
  if (!o.config.empty()) {
    if (has("model-id")) std::cerr << "warning: --config overrides --model-id\n";
    cfg = training::TrainConfig::from_json(read_json(o.config), cfg);
  }
  if (!o.ablation.empty()) cfg.weights = training::ablation_config(o.ablation);
  if (has("seed")) cfg.seed = o.seed;
  if (has("epochs")) cfg.epochs = o.epochs;
  if (has("patience")) cfg.patience = o.patience;
  if (has("batch-size")) cfg.batch_size = o.batch_size;
  if (has("encoder-dim")) cfg.encoder_dim = o.encoder_dim;
  if (has("decoder-dim")) cfg.decoder_dim = o.decoder_dim;
  if (has("mlp-dim")) cfg.mlp_dim = o.mlp_dim;
  if (has("lr")) cfg.learning_rate = o.learning_rate;
  if (!o.form.empty()) cfg.contrastive_form = parse_form(o.form);
  if (!o.input.empty()) cfg.contrastive_input = parse_input(o.input);
  cfg.validate();
  training::model_config(ds, cfg);  // dimension mismatch fails before any training

  const fs::path out = o.out;
  fs::create_directories(out);
  write_json(out / "config.json", cfg.to_json());

  auto rec = training::cross_validate(ds, cfg, [&](const training::TrainedFold& f) {
    auto net = f.model;
    checkpoint::save(out / ("fold_" + std::to_string(f.result.fold) + ".ckpt"), net);
    std::cout << "fold " << f.result.fold << " accuracy " << fixed6(f.result.metrics.accuracy)
              << " epochs " << f.result.history.size() << "\n";
  });

  auto rj = rec.to_json();
  rj["dataset"] = abs_path(o.dataset);
  write_json(out / "runrecord.json", rj);

  std::ostringstream curves;
  curves << "fold,epoch,cl,rn,sa,total,val_total\n";
  for (const auto& f : rec.folds)
    for (std::size_t e = 0; e < f.history.size(); ++e) {
      const auto& h = f.history[e];
      curves << f.fold << ',' << e + 1 << ',' << fixed6(h.cl) << ',' << fixed6(h.rn) << ','
             << fixed6(h.sa) << ',' << fixed6(h.total) << ',' << fixed6(h.val_total) << '\n';
    }
  write_text(out / "loss_curves.csv", curves.str());

  std::cout << "accuracy " << fixed6(rec.accuracy.mean) << " +- " << fixed6(rec.accuracy.stddev)
            << "\n";

  std::vector<std::string> outputs{"config.json", "runrecord.json", "loss_curves.csv"};
  for (int f = 1; f <= ds.k; ++f) outputs.push_back("fold_" + std::to_string(f) + ".ckpt");
  append_manifest(out, {{"command", "train"},
                        {"config_path", o.config.empty() ? "" : abs_path(o.config)},
                        {"config", cfg.to_json()},
                        {"inputs", json::array({abs_path(o.dataset)})},
                        {"outputs", outputs},
                        {"seed", cfg.seed},
                        {"started", started},
                        {"finished", utc_now()}});
  return kExitOk;
}

// ---- evaluate -------------------------------------------------------------

struct EvaluateOptions {
  std::string run;
  std::string out;
};

int cmd_evaluate(const EvaluateOptions& o) {
  const auto started = utc_now();
  const fs::path run = o.run;
  const auto dataset_dir = run_dataset(run);
  const auto data = load_dataset(dataset_dir);
  const auto& ds = data.prepared;
  if (ds.k < 2) throw ConsistencyError("dataset has no fold assignment");

  std::vector<evaluation::MetricsReport> reports;
  std::vector<double> oof_cif(ds.windows.size(), 0.0);
  std::vector<int> all_pred, all_truth;
  std::vector<double> acc;
  std::string embeddings;
  for (int f = 1; f <= ds.k; ++f) {
    const auto net = load_checkpoint(run, f);
    checkpoint::check_compatible(net.config(), ds);
    std::vector<const windows::ContentWindow*> test;
    std::vector<std::size_t> index;
    for (std::size_t i = 0; i < ds.windows.size(); ++i)
      if (ds.folds[i] == f) {
        test.push_back(&ds.windows[i]);
        index.push_back(i);
      }
    const auto cif = training::predict_cif(net, test);
    const auto pred = evaluation::classify(cif);
    std::vector<int> truth;
    for (const auto* w : test) truth.push_back(w->y);
    auto rep = evaluation::metrics(pred, truth);
    rep.fold = f;
    rep.n_obs = ds.n_obs;
    reports.push_back(rep);
    acc.push_back(rep.accuracy);
    for (std::size_t j = 0; j < index.size(); ++j) oof_cif[index[j]] = cif[j];
    all_pred.insert(all_pred.end(), pred.begin(), pred.end());
    all_truth.insert(all_truth.end(), truth.begin(), truth.end());

    std::ostringstream emb;
    evaluation::write_embeddings_csv(emb, net, test);
    auto text = emb.str();
    if (f > 1) text = text.substr(text.find('\n') + 1);
    embeddings += text;
  }

  const auto summary = evaluation::summarize(acc);
  auto pooled = evaluation::metrics(all_pred, all_truth);
  pooled.n_obs = ds.n_obs;
  json folds = json::array();
  for (const auto& r : reports) folds.push_back(r.to_json());
  const json metrics = {{"folds", folds},
                        {"aggregate",
                         {{"k", ds.k},
                          {"n_obs", ds.n_obs},
                          {"accuracy_mean", summary.mean},
                          {"accuracy_std", summary.stddev},
                          {"pooled", pooled.to_json()}}}};

  const fs::path out = o.out.empty() ? run : fs::path(o.out);
  fs::create_directories(out);
  write_json(out / "metrics.json", round_floats(metrics));
  std::ostringstream conf;
  evaluation::write_confusion_csv(conf, reports);
  write_text(out / "confusion.csv", conf.str());
  write_text(out / "embeddings.csv", embeddings);

  // Top-K per evaluation day from out-of-fold predictions.
  const auto k = cachesim::capacity_for(0.1, library_size(data.events));
  std::map<int, std::vector<evaluation::ScoredContent>> by_day;
  for (std::size_t i = 0; i < ds.windows.size(); ++i)
    by_day[ds.windows[i].tau].push_back({ds.windows[i].content_id, oof_cif[i]});
  std::ostringstream topk;
  topk << "day,rank,content_id,cif\n";
  for (auto& [day, scores] : by_day) {
    const auto top = evaluation::rank_top_k(std::move(scores), k);
    for (std::size_t r = 0; r < top.items.size(); ++r)
      topk << day << ',' << r + 1 << ',' << top.items[r].content_id << ','
           << fixed6(top.items[r].score) << '\n';
  }
  write_text(out / "topk.csv", topk.str());

  std::cout << "accuracy " << fixed6(summary.mean) << " +- " << fixed6(summary.stddev) << "\n";
  for (const auto& w : pooled.warnings) std::cerr << "warning: " << w << "\n";

  append_manifest(out, {{"command", "evaluate"},
                        {"config_path", ""},
                        {"config", {{"top_k", k}, {"threshold", 0.5}}},
                        {"inputs", {abs_path(run), dataset_dir.string()}},
                        {"outputs", {"metrics.json", "confusion.csv", "embeddings.csv", "topk.csv"}},
                        {"seed", read_json(run / "runrecord.json").value("seed", 0)},
                        {"started", started},
                        {"finished", utc_now()}});
  return kExitOk;
}

// ---- simulate -------------------------------------------------------------

struct SimulateOptions {
  std::string events;
  std::string run;
  std::string out;
  std::string policy = "all";
  std::string capacity = "0.1";
  std::string mode = "aggregate";
  std::uint64_t seed = 1;
  int from_day = cachesim::kCountAll;
  int fold = 1;
};

int cmd_simulate(const SimulateOptions& o) {
  const auto started = utc_now();
  const std::vector<std::string> known{"lru", "lfu", "optimal", "clsa"};
  std::vector<std::string> policies;
  if (o.policy == "all") {
    policies = {"lru", "lfu", "optimal"};
    if (!o.run.empty()) policies.push_back("clsa");
    else std::cerr << "notice: no --run given; clsa policy skipped\n";
  } else {
    if (std::find(known.begin(), known.end(), o.policy) == known.end())
      throw InputError("unknown policy '" + o.policy + "'");
    policies = {o.policy};
  }
  const bool want_clsa = std::find(policies.begin(), policies.end(), "clsa") != policies.end();
  if (want_clsa && o.run.empty()) throw InputError("policy clsa needs --run");
  if (o.mode != "aggregate" && o.mode != "per-node")
    throw InputError("unknown mode '" + o.mode + "'");
  const auto fractions = cachesim::parse_sweep(o.capacity);

  const fs::path events_path = o.events;
  require_file(events_path);
  std::vector<ingest::RequestEvent> events;
  std::vector<cachesim::TraceRequest> trace;
  if (events_path.extension() == ".csv") {
    if (want_clsa) throw InputError("policy clsa needs an events.jsonl file, not a trace CSV");
    trace = cachesim::read_trace_csv(events_path);
  } else {
    events = ingest::read_events(events_path);
    trace = placement::trace_from_events(events);
  }
  std::set<int> library;
  for (const auto& r : trace) library.insert(r.content_id);

  std::shared_ptr<placement::CifPredictor> predictor;
  if (want_clsa) {
    auto net = load_checkpoint(o.run, o.fold);
    if (!events.empty() &&
        static_cast<int>(events.front().features.size()) != net.config().feature_dim)
      throw ConsistencyError("events feature width does not match the checkpoint");
    predictor = std::make_shared<placement::CifPredictor>(std::move(net), events);
  }

  std::unordered_map<int, int> user_node;
  int nodes = 1;
  json topology;
  if (o.mode == "per-node") {
    cachesim::TopologySpec spec;
    spec.mixture = cachesim::default_mixture(spec.region);
    std::set<int> users;
    for (const auto& r : trace) users.insert(r.user_id);
    spec.n_users = std::max(spec.n_users, static_cast<int>(users.size()));
    const auto topo = cachesim::generate_topology(spec, o.seed);
    user_node = cachesim::map_users(trace, topo);
    nodes = spec.n_fap + spec.n_uav;
    topology = topo.to_json();
  }

  json hits = json::object();
  std::ostringstream sweep, per_day;
  sweep << "capacity_frac,capacity,policy,hits,total,ratio\n";
  per_day << "capacity_frac,policy,day,hits,total,ratio\n";
  for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
    const double frac = fractions[fi];
    const auto k = cachesim::capacity_for(frac, library.size());
    for (const auto& p : policies) {
      cachesim::CacheFactory make;
      if (p == "lru") make = [k] { return std::make_unique<cachesim::LruCache>(k); };
      if (p == "lfu") make = [k] { return std::make_unique<cachesim::LfuCache>(k); };
      if (p == "optimal") make = [] { return std::make_unique<cachesim::OptimalCache>(); };
      if (p == "clsa")
        make = [k, predictor] {
          return std::make_unique<cachesim::PlacementCache>(
              k, [predictor](int day) { return (*predictor)(day); });
        };
      const auto r = o.mode == "aggregate"
                         ? cachesim::replay(trace, make, o.from_day)
                         : cachesim::replay_per_node(trace, make, user_node, nodes, o.from_day);
      if (fi == 0)
        hits[p] = {{"hits", r.hits}, {"total", r.total}, {"ratio", r.ratio()},
                   {"capacity", p == "optimal" ? library.size() : k}};
      sweep << fixed6(frac) << ',' << k << ',' << p << ',' << r.hits << ',' << r.total << ','
            << fixed6(r.ratio()) << '\n';
      for (const auto& d : r.per_day)
        per_day << fixed6(frac) << ',' << p << ',' << d.day << ',' << d.hits << ',' << d.total
                << ',' << fixed6(d.total ? static_cast<double>(d.hits) / d.total : 0.0) << '\n';
      std::cout << "capacity " << fixed6(frac) << " " << p << " hit_ratio " << fixed6(r.ratio())
                << "\n";
    }
  }

  const fs::path out = o.out;
  fs::create_directories(out);
  write_json(out / "hits.json", round_floats(hits));
  write_text(out / "sweep.csv", sweep.str());
  write_text(out / "per_day.csv", per_day.str());
  std::vector<std::string> outputs{"hits.json", "sweep.csv", "per_day.csv"};
  if (o.mode == "per-node") {
    write_json(out / "topology.json", round_floats(topology));
    outputs.push_back("topology.json");
  }

  json inputs = json::array({abs_path(events_path)});
  if (!o.run.empty()) inputs.push_back(abs_path(o.run));
  append_manifest(out, {{"command", "simulate"},
                        {"config_path", ""},
                        {"config",
                         {{"policies", policies},
                          {"capacity_frac", o.capacity},
                          {"mode", o.mode},
                          {"from_day", o.from_day == cachesim::kCountAll ? json() : json(o.from_day)},
                          {"fold", o.fold},
                          {"library_size", library.size()}}},
                        {"inputs", inputs},
                        {"outputs", outputs},
                        {"seed", o.seed},
                        {"started", started},
                        {"finished", utc_now()}});
  return kExitOk;
}

// ---- report ---------------------------------------------------------------

struct ReportOptions {
  std::string run;
  std::string sim;
  std::string out;
};

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("missing file: " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

double to_double(const std::string& s, const fs::path& file) {
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    throw InputError(file.string() + ": bad number '" + s + "'");
  }
}

int cmd_report(const ReportOptions& o) {
  const auto started = utc_now();
  const fs::path run = o.run;
  if (!fs::is_directory(run)) throw InputError("missing run directory: " + run.string());
  const auto curves_path = run / "loss_curves.csv";
  const auto rows = read_csv(curves_path);
  const auto rec = read_json(run / "runrecord.json");
  if (!o.sim.empty() && !fs::is_directory(o.sim))
    throw InputError("missing simulation directory: " + o.sim);

  report::LineChart losses{"Training loss", "epoch", "loss", {}};
  std::map<int, std::pair<report::Series, report::Series>> per_fold;
  for (const auto& r : rows) {
    if (r.size() != 7) throw InputError(curves_path.string() + ": expected 7 columns");
    const int fold = static_cast<int>(to_double(r[0], curves_path));
    auto& [train, val] = per_fold[fold];
    train.name = "fold " + std::to_string(fold) + " train";
    val.name = "fold " + std::to_string(fold) + " val";
    const double epoch = to_double(r[1], curves_path);
    train.x.push_back(epoch);
    train.y.push_back(to_double(r[5], curves_path));
    val.x.push_back(epoch);
    val.y.push_back(to_double(r[6], curves_path));
  }
  for (auto& [fold, s] : per_fold) {
    losses.series.push_back(s.first);
    losses.series.push_back(s.second);
  }

  std::array<std::array<long, 2>, 2> counts{};
  for (const auto& f : rec.at("folds")) {
    const auto c = f.at("metrics").at("confusion");
    for (std::size_t t = 0; t < 2; ++t)
      for (std::size_t p = 0; p < 2; ++p) counts[t][p] += c.at(t).at(p).get<long>();
  }

  const fs::path out = o.out;
  fs::create_directories(out);
  write_text(out / "loss_curves.svg", report::line_chart_svg(losses));
  write_text(out / "confusion.svg", report::confusion_svg(counts, "Confusion matrix (all folds)"));
  std::vector<std::string> outputs{"loss_curves.svg", "confusion.svg"};

  json inputs = json::array({abs_path(run)});
  if (o.sim.empty()) {
    std::cerr << "notice: no --sim given; hit-ratio plot skipped\n";
  } else {
    const auto sweep_path = fs::path(o.sim) / "sweep.csv";
    report::LineChart hits{"Cache hit ratio", "capacity fraction", "hit ratio", {}};
    std::map<std::string, report::Series> by_policy;
    for (const auto& r : read_csv(sweep_path)) {
      if (r.size() != 6) throw InputError(sweep_path.string() + ": expected 6 columns");
      auto& s = by_policy[r[2]];
      s.name = r[2];
      s.x.push_back(to_double(r[0], sweep_path));
      s.y.push_back(to_double(r[5], sweep_path));
    }
    for (auto& [name, s] : by_policy) hits.series.push_back(s);
    write_text(out / "hit_ratio.svg", report::line_chart_svg(hits));
    outputs.push_back("hit_ratio.svg");
    inputs.push_back(abs_path(o.sim));
  }
  for (const auto& f : outputs) std::cout << (out / f).string() << "\n";

  append_manifest(out, {{"command", "report"},
                        {"config_path", ""},
                        {"config", json::object()},
                        {"inputs", inputs},
                        {"outputs", outputs},
                        {"seed", rec.value("seed", 0)},
                        {"started", started},
                        {"finished", utc_now()}});
  return kExitOk;
}

// ---- synth ----------------------------------------------------------------

int cmd_synth(const synth::SynthSpec& spec, const std::string& out) {
  const auto started = utc_now();
  const auto n = synth::write_corpus(out, spec);
  std::cout << "ratings " << n << "\n";
  append_manifest(out, {{"command", "synth"},
                        {"config_path", ""},
                        {"config",
                         {{"users", spec.users},
                          {"items", spec.items},
                          {"days", spec.days},
                          {"target_events", spec.target_events}}},
                        {"inputs", json::array()},
                        {"outputs", {"u.data", "u.user", "u.occupation", "zip_coords.csv"}},
                        {"seed", spec.seed},
                        {"started", started},
                        {"finished", utc_now()}});
  return kExitOk;
}

}  // namespace

void append_manifest(const fs::path& dir, json entry) {
  const auto path = dir / "manifest.json";
  json m = fs::exists(path) ? read_json(path) : json{{"entries", json::array()}};
  if (!m.contains("entries") || !m["entries"].is_array())
    throw ConsistencyError(path.string() + " is not a manifest");
  entry["version"] = version();
  m["entries"].push_back(std::move(entry));
  write_json(path, m);
}

int run(int argc, char** argv) {
  CLI::App app{"Content popularity prediction and cache simulation"};
  app.set_version_flag("--version", version());
  app.require_subcommand(1);

  PrepOptions prep;
  auto* p = app.add_subcommand("prep", "Encode a MovieLens directory into windows and folds");
  p->add_option("--data-dir", prep.data_dir, "Directory with u.data, u.user, u.occupation")
      ->envname("CLSA_DATA_DIR");
  p->add_option("--out", prep.out, "Output directory")->required();
  p->add_option("--zip-table", prep.zip_table, "zip,lat,lon CSV (default: data-dir/zip_coords.csv)");
  p->add_option("--n-obs", prep.n_obs, "Requests per observational window")
      ->check(CLI::PositiveNumber);
  p->add_option("--t-study", prep.t_study, "Study window in days")->check(CLI::PositiveNumber);
  p->add_option("--tau-stride", prep.tau_stride, "Days between evaluation days")
      ->check(CLI::PositiveNumber);
  p->add_option("--folds", prep.folds, "Cross-validation folds")->check(CLI::Range(2, 100));
  p->add_option("--seed", prep.seed, "Root seed");

  TrainOptions train;
  auto* t = app.add_subcommand("train", "Cross-validate a model on a prepared dataset");
  t->add_option("--dataset", train.dataset, "Prepared dataset directory")->required();
  t->add_option("--out", train.out, "Run directory")->required();
  t->add_option("--model-id", train.model_id, "Architecture variant")->check(CLI::Range(1, 5));
  t->add_option("--config", train.config, "JSON training config (wins over --model-id)");
  t->add_option("--ablation", train.ablation, "Loss weights L1..L7");
  t->add_option("--seed", train.seed, "Root seed");
  t->add_option("--epochs", train.epochs, "Maximum epochs")->check(CLI::PositiveNumber);
  t->add_option("--patience", train.patience, "Early-stopping patience, 0 disables")
      ->check(CLI::NonNegativeNumber);
  t->add_option("--batch-size", train.batch_size)->check(CLI::PositiveNumber);
  t->add_option("--encoder-dim", train.encoder_dim)->check(CLI::PositiveNumber);
  t->add_option("--decoder-dim", train.decoder_dim)->check(CLI::PositiveNumber);
  t->add_option("--mlp-dim", train.mlp_dim)->check(CLI::PositiveNumber);
  t->add_option("--lr", train.learning_rate)->check(CLI::PositiveNumber);
  t->add_option("--contrastive-form", train.form, "printed or standard")
      ->check(CLI::IsMember({"printed", "standard"}));
  t->add_option("--contrastive-input", train.input, "projection or hidden")
      ->check(CLI::IsMember({"projection", "hidden"}));

  EvaluateOptions eval;
  auto* e = app.add_subcommand("evaluate", "Score checkpoints on their held-out folds");
  e->add_option("--run", eval.run, "Run directory")->required();
  e->add_option("--out", eval.out, "Output directory (default: the run directory)");

  SimulateOptions sim;
  auto* s = app.add_subcommand("simulate", "Replay the request trace through cache policies");
  s->add_option("--events", sim.events, "events.jsonl or day,user_id,content_id CSV")->required();
  s->add_option("--run", sim.run, "Run directory (needed by the clsa policy)");
  s->add_option("--out", sim.out, "Output directory")->required();
  s->add_option("--policy", sim.policy, "lru, lfu, optimal, clsa or all")
      ->check(CLI::IsMember({"lru", "lfu", "optimal", "clsa", "all"}));
  s->add_option("--capacity-frac", sim.capacity, "Fraction of the library, or start:stop:step");
  s->add_option("--mode", sim.mode, "aggregate or per-node")
      ->check(CLI::IsMember({"aggregate", "per-node"}));
  s->add_option("--seed", sim.seed, "Topology seed");
  s->add_option("--from-day", sim.from_day, "First counted day; earlier requests only warm caches");
  s->add_option("--fold", sim.fold, "Checkpoint fold used by clsa")->check(CLI::PositiveNumber);

  ReportOptions rep;
  auto* r = app.add_subcommand("report", "Write SVG plots for a run and a simulation");
  r->add_option("--run", rep.run, "Run directory")->required();
  r->add_option("--sim", rep.sim, "Simulation directory");
  r->add_option("--out", rep.out, "Plot directory")->required();

  synth::SynthSpec spec;
  std::string synth_out;
  auto* y = app.add_subcommand("synth", "Write a small synthetic corpus in MovieLens format");
  y->add_option("--out", synth_out, "Output directory")->required();
  y->add_option("--users", spec.users)->check(CLI::PositiveNumber);
  y->add_option("--items", spec.items)->check(CLI::PositiveNumber);
  y->add_option("--days", spec.days)->check(CLI::PositiveNumber);
  y->add_option("--events", spec.target_events, "Expected number of ratings")
      ->check(CLI::PositiveNumber);
  y->add_option("--seed", spec.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  for (const char* flag : {"model-id", "seed", "epochs", "patience", "batch-size", "encoder-dim",
                           "decoder-dim", "mlp-dim", "lr"})
    if (t->count(std::string("--") + flag) > 0) train.given.insert(flag);

  try {
    if (p->parsed()) return cmd_prep(prep);
    if (t->parsed()) return cmd_train(train);
    if (e->parsed()) return cmd_evaluate(eval);
    if (s->parsed()) return cmd_simulate(sim);
    if (r->parsed()) return cmd_report(rep);
    if (y->parsed()) return cmd_synth(spec, synth_out);
  } catch (const InputError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitUsage;
  } catch (const ConsistencyError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitConsistency;
  } catch (const fs::filesystem_error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace clsa::cli
