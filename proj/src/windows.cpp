#include "clsa/windows.hpp"

#include <algorithm>
#include <fstream>
#include <map>

namespace clsa::windows {

int ContentWindow::real_count() const {
  int n = 0;
  for (auto m : pad_mask) n += m ? 1 : 0;
  return n;
}

std::size_t PreparedDataset::positives() const {
  std::size_t n = 0;
  for (const auto& w : windows) n += w.y == 1 ? 1 : 0;
  return n;
}

std::optional<ContentWindow> build_window(std::span<const ingest::RequestEvent> content_events,
                                          int tau, int n_obs, long base_index) {
  // Events with day <= tau form a prefix of the time-sorted span.
  const auto end = std::upper_bound(
      content_events.begin(), content_events.end(), tau,
      [](int day, const ingest::RequestEvent& e) { return day < e.day; });
  const auto available = static_cast<int>(end - content_events.begin());
  if (available == 0) return std::nullopt;

  const int real = std::min(available, n_obs);
  const int first = available - real;
  const std::size_t dim = content_events.front().features.size();

  ContentWindow w;
  w.content_id = content_events.front().content_id;
  w.tau = tau;
  w.x = Matrix::Zero(n_obs, static_cast<Eigen::Index>(dim));
  w.t.assign(static_cast<std::size_t>(n_obs), 0);
  w.pad_mask.assign(static_cast<std::size_t>(n_obs), 0);
  w.event_index.assign(static_cast<std::size_t>(n_obs), -1);
  const int pad = n_obs - real;
  for (int r = 0; r < real; ++r) {
    const auto& e = content_events[static_cast<std::size_t>(first + r)];
    const auto row = static_cast<std::size_t>(pad + r);
    for (std::size_t c = 0; c < dim; ++c)
      w.x(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c)) = e.features[c];
    w.t[row] = e.day;
    w.pad_mask[row] = 1;
    w.event_index[row] = base_index + first + r;
  }
  const int first_day = w.t[static_cast<std::size_t>(pad)];
  for (int r = 0; r < pad; ++r) w.t[static_cast<std::size_t>(r)] = first_day;
  w.t_last = w.t.back();
  return w;
}

int label_window(std::span<const ingest::RequestEvent> content_events, int tau, int t_study) {
  const auto it = std::upper_bound(
      content_events.begin(), content_events.end(), tau,
      [](int day, const ingest::RequestEvent& e) { return day < e.day; });
  return it != content_events.end() && it->day <= tau + t_study ? 1 : 0;
}

TauRange default_tau_range(std::span<const ingest::RequestEvent> events, int t_study,
                           int stride) {
  if (events.empty()) throw InputError("no events");
  int lo = events.front().day, hi = events.front().day;
  for (const auto& e : events) {
    lo = std::min(lo, e.day);
    hi = std::max(hi, e.day);
  }
  return {lo, hi - t_study, stride};
}

int compute_t_total(const std::vector<ContentWindow>& windows, int t_study) {
  int max_span = 1;
  for (const auto& w : windows) max_span = std::max(max_span, w.span());
  return t_study + max_span;
}

PreparedDataset build_dataset(std::span<const ingest::RequestEvent> events, int n_obs,
                              const TauRange& taus, int t_study) {
  if (n_obs <= 0) throw InputError("n_obs must be positive");
  if (t_study <= 0) throw InputError("t_study must be positive");
  if (taus.stride <= 0) throw InputError("tau stride must be positive");

  PreparedDataset ds;
  ds.n_obs = n_obs;
  ds.t_study = t_study;

  std::size_t begin = 0;
  while (begin < events.size()) {
    std::size_t end = begin;
    while (end < events.size() && events[end].content_id == events[begin].content_id) ++end;
    const auto content = events.subspan(begin, end - begin);
    for (int tau = taus.first; tau <= taus.last; tau += taus.stride) {
      auto w = build_window(content, tau, n_obs, static_cast<long>(begin));
      if (!w) continue;
      w->y = label_window(content, tau, t_study);
      ds.windows.push_back(std::move(*w));
    }
    begin = end;
  }
  if (ds.windows.empty()) throw InputError("no windows produced");
  ds.t_total = compute_t_total(ds.windows, t_study);
  return ds;
}

std::vector<std::size_t> oversample_indices(const std::vector<ContentWindow>& windows,
                                            const std::vector<std::size_t>& indices,
                                            std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  for (auto i : indices) (windows[i].y == 1 ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty())
    throw InputError("oversampling needs both classes in the training portion");
  const auto& minority = pos.size() < neg.size() ? pos : neg;
  const std::size_t deficit =
      std::max(pos.size(), neg.size()) - std::min(pos.size(), neg.size());
  std::vector<std::size_t> out = indices;
  out.reserve(indices.size() + deficit);
  Rng rng(seed);
  for (std::size_t d = 0; d < deficit; ++d)
    out.push_back(minority[uniform_index(rng, minority.size())]);
  return out;
}

PreparedDataset oversample(const PreparedDataset& dataset, std::uint64_t seed,
                           int holdout_fold) {
  PreparedDataset out = dataset;
  std::map<int, std::vector<std::size_t>> by_fold;
  for (std::size_t i = 0; i < dataset.windows.size(); ++i) {
    const int f = dataset.folds.empty() ? 0 : dataset.folds[i];
    if (holdout_fold != 0 && f == holdout_fold) continue;
    by_fold[f].push_back(i);
  }
  for (const auto& [fold, idx] : by_fold) {
    const auto balanced =
        oversample_indices(dataset.windows, idx, derive_seed(seed, "oversample",
                                                             static_cast<std::uint64_t>(fold)));
    for (std::size_t j = idx.size(); j < balanced.size(); ++j) {
      out.windows.push_back(dataset.windows[balanced[j]]);
      if (!out.folds.empty()) out.folds.push_back(fold);
    }
  }
  return out;
}

std::vector<int> kfold_split(const PreparedDataset& dataset, int k, std::uint64_t seed) {
  if (k < 2) throw InputError("k must be at least 2");
  const auto n = dataset.windows.size();
  if (n < static_cast<std::size_t>(k)) throw InputError("fewer windows than folds");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < n; ++i) (dataset.windows[i].y == 1 ? pos : neg).push_back(i);
  Rng rng(seed);
  auto shuffle = [&rng](std::vector<std::size_t>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
  };
  shuffle(pos);
  shuffle(neg);
  // Dealing positives then negatives round-robin keeps fold sizes within one
  // of each other and per-fold positive counts within one.
  std::vector<int> folds(n, 0);
  std::size_t slot = 0;
  for (const auto* group : {&pos, &neg})
    for (auto i : *group) folds[i] = static_cast<int>(slot++ % static_cast<std::size_t>(k)) + 1;
  return folds;
}

void write_prepared(const std::filesystem::path& dir, const PreparedDataset& dataset) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "windows.jsonl");
  if (!out) throw InputError("cannot write " + (dir / "windows.jsonl").string());
  for (std::size_t i = 0; i < dataset.windows.size(); ++i) {
    const auto& w = dataset.windows[i];
    nlohmann::json j = {{"content_id", w.content_id}, {"tau", w.tau},
                        {"y", w.y},                   {"t_last", w.t_last},
                        {"t", w.t},                   {"pad_mask", w.pad_mask},
                        {"event_index", w.event_index}};
    if (!dataset.folds.empty()) j["fold"] = dataset.folds[i];
    out << j.dump() << '\n';
  }
  nlohmann::json meta = {{"N_o", dataset.n_obs},
                         {"T_s", dataset.t_study},
                         {"T_total", dataset.t_total},
                         {"folds", dataset.k},
                         {"seed", dataset.fold_seed},
                         {"windows", dataset.windows.size()},
                         {"positives", dataset.positives()},
                         {"layout", dataset.layout.to_json()},
                         {"scaling", dataset.scaling.to_json()}};
  std::ofstream m(dir / "dataset.json");
  m << meta.dump(2) << '\n';
}

PreparedDataset read_prepared(const std::filesystem::path& dir,
                              std::span<const ingest::RequestEvent> events) {
  std::ifstream m(dir / "dataset.json");
  if (!m) throw InputError("missing " + (dir / "dataset.json").string());
  const auto meta = nlohmann::json::parse(m);
  PreparedDataset ds;
  ds.n_obs = meta.at("N_o");
  ds.t_study = meta.at("T_s");
  ds.t_total = meta.at("T_total");
  ds.k = meta.value("folds", 0);
  ds.fold_seed = meta.value("seed", std::uint64_t{0});
  ds.layout = ingest::FeatureLayout::from_json(meta.at("layout"));
  ds.scaling = ingest::ScalingStats::from_json(meta.at("scaling"));
  const auto dim = static_cast<Eigen::Index>(ds.layout.total_dim());

  std::ifstream in(dir / "windows.jsonl");
  if (!in) throw InputError("missing " + (dir / "windows.jsonl").string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    ContentWindow w;
    w.content_id = j.at("content_id");
    w.tau = j.at("tau");
    w.y = j.at("y");
    w.t_last = j.at("t_last");
    w.t = j.at("t").get<std::vector<int>>();
    w.pad_mask = j.at("pad_mask").get<std::vector<std::uint8_t>>();
    w.event_index = j.at("event_index").get<std::vector<long>>();
    if (static_cast<int>(w.t.size()) != ds.n_obs)
      throw ConsistencyError("window length does not match N_o");
    w.x = Matrix::Zero(ds.n_obs, dim);
    for (int r = 0; r < ds.n_obs; ++r) {
      const long idx = w.event_index[static_cast<std::size_t>(r)];
      if (idx < 0) continue;
      if (static_cast<std::size_t>(idx) >= events.size())
        throw ConsistencyError("window references an event outside the events file");
      const auto& f = events[static_cast<std::size_t>(idx)].features;
      if (static_cast<Eigen::Index>(f.size()) != dim)
        throw ConsistencyError("event feature width does not match layout");
      for (Eigen::Index c = 0; c < dim; ++c) w.x(r, c) = f[static_cast<std::size_t>(c)];
    }
    if (j.contains("fold")) ds.folds.push_back(j.at("fold"));
    ds.windows.push_back(std::move(w));
  }
  if (!ds.folds.empty() && ds.folds.size() != ds.windows.size())
    throw ConsistencyError("fold assignment missing for some windows");
  return ds;
}

}  // namespace clsa::windows
