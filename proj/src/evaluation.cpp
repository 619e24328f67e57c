#include "clsa/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>

namespace clsa::evaluation {

std::vector<int> classify(std::span<const double> cif_values, double threshold) {
  std::vector<int> out;
  out.reserve(cif_values.size());
  for (double f : cif_values) out.push_back(f >= threshold ? 1 : 0);
  return out;
}

Confusion confusion(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size()) throw InputError("prediction/truth length mismatch");
  Confusion c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if ((pred[i] != 0 && pred[i] != 1) || (truth[i] != 0 && truth[i] != 1))
      throw InputError("labels must be 0 or 1");
    ++c.counts[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(pred[i])];
  }
  for (std::size_t r = 0; r < 2; ++r) {
    const long row = c.counts[r][0] + c.counts[r][1];
    c.row_defined[r] = row > 0;
    for (std::size_t k = 0; k < 2; ++k)
      c.rates[r][k] = row > 0 ? 100.0 * static_cast<double>(c.counts[r][k]) / row : 0.0;
  }
  return c;
}

MetricsReport metrics(std::span<const int> pred, std::span<const int> truth) {
  if (pred.empty()) throw InputError("metrics need at least one sample");
  MetricsReport r;
  r.confusion = confusion(pred, truth);
  const auto& n = r.confusion.counts;
  r.accuracy = static_cast<double>(n[0][0] + n[1][1]) / static_cast<double>(r.confusion.total());
  for (std::size_t c = 0; c < 2; ++c) {
    const std::size_t o = 1 - c;
    const long tp = n[c][c];
    const long predicted = n[c][c] + n[o][c];
    const long actual = n[c][c] + n[c][o];
    auto& s = r.classes[c];
    s.support = actual;
    if (predicted > 0) {
      s.precision = static_cast<double>(tp) / predicted;
    } else {
      r.warnings.push_back("class " + std::to_string(c) + " never predicted; precision set to 0");
    }
    if (actual > 0) {
      s.recall = static_cast<double>(tp) / actual;
    } else {
      r.warnings.push_back("class " + std::to_string(c) + " absent from truth; recall set to 0");
    }
    s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
                                        : 0.0;
  }
  return r;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& c : classes)
    per_class.push_back(
        {{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}});
  return {{"fold", fold},
          {"n_obs", n_obs},
          {"accuracy", accuracy},
          {"classes", per_class},
          {"confusion", confusion.counts},
          {"confusion_rates", confusion.rates},
          {"warnings", warnings}};
}

Summary summarize(std::span<const double> values) {
  Summary s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

TopK rank_top_k(std::vector<ScoredContent> scores, std::size_t k) {
  if (k == 0) throw InputError("K must be at least 1");
  std::sort(scores.begin(), scores.end(), [](const ScoredContent& a, const ScoredContent& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.content_id < b.content_id;
  });
  TopK out;
  out.shortfall = scores.size() < k;
  if (scores.size() > k) scores.resize(k);
  out.items = std::move(scores);
  return out;
}

void write_embeddings_csv(std::ostream& out, const model::ClsaModel& net,
                          std::span<const windows::ContentWindow* const> windows,
                          std::size_t batch_size) {
  const int dim = net.config().projection_dim();
  out << "content_id,tau,y";
  for (int d = 0; d < dim; ++d) out << ",z" << d;
  out << '\n';
  out << std::setprecision(9);
  for (std::size_t start = 0; start < windows.size(); start += batch_size) {
    const auto chunk = windows.subspan(start, std::min(batch_size, windows.size() - start));
    const auto preds = net.predict(chunk);
    for (std::size_t j = 0; j < chunk.size(); ++j) {
      out << chunk[j]->content_id << ',' << chunk[j]->tau << ',' << chunk[j]->y;
      for (double v : preds[j].z) out << ',' << v;
      out << '\n';
    }
  }
}

void write_confusion_csv(std::ostream& out, const std::vector<MetricsReport>& reports) {
  out << "fold,truth,pred,count,row_percent\n";
  out << std::fixed << std::setprecision(6);
  for (const auto& r : reports)
    for (std::size_t t = 0; t < 2; ++t)
      for (std::size_t p = 0; p < 2; ++p)
        out << r.fold << ',' << t << ',' << p << ',' << r.confusion.counts[t][p] << ','
            << r.confusion.rates[t][p] << '\n';
}

}  // namespace clsa::evaluation
