#include "minidrive/ood.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "minidrive/parallel.hpp"

namespace minidrive {

std::string metric_name(OodMetric m) {
  return m == OodMetric::euclidean ? "euclidean" : "cosine";
}

namespace {

// Keeps the k smallest values seen; max at front.
struct SmallestK {
  explicit SmallestK(int k) : k_(static_cast<std::size_t>(k)) {}
  void offer(double v) {
    if (heap_.size() < k_) {
      heap_.push_back(v);
      std::push_heap(heap_.begin(), heap_.end());
    } else if (v < heap_.front()) {
      std::pop_heap(heap_.begin(), heap_.end());
      heap_.back() = v;
      std::push_heap(heap_.begin(), heap_.end());
    }
  }
  double mean() const {
    double acc = 0.0;
    for (const double v : heap_) acc += v;
    return acc / static_cast<double>(heap_.size());
  }
  std::size_t k_;
  std::vector<double> heap_;
};

double cosine_distance(double dot, double na, double nb) {
  if (na < 1e-300 || nb < 1e-300) return 1.0;  // zero-vector convention
  double c = dot / (na * nb);
  c = std::fmax(-1.0, std::fmin(1.0, c));
  return 1.0 - c;
}

}  // namespace

double knn_distance(const ReferenceSet& reference, const std::vector<double>& query, int k) {
  const auto& refs = reference.embeddings;
  if (k <= 0 || static_cast<std::size_t>(k) > refs.size()) {
    throw std::invalid_argument("knn_distance: k out of range (k=" + std::to_string(k) +
                                ", reference size=" + std::to_string(refs.size()) + ")");
  }
  const double qn = std::sqrt(std::inner_product(query.begin(), query.end(), query.begin(), 0.0));
  SmallestK best(k);
  for (const auto& r : refs) {
    if (r.size() != query.size()) throw std::invalid_argument("knn_distance: dim mismatch");
    if (reference.metric == OodMetric::euclidean) {
      double acc = 0.0;
      for (std::size_t i = 0; i < r.size(); ++i) {
        const double d = r[i] - query[i];
        acc += d * d;
      }
      best.offer(std::sqrt(acc));
    } else {
      double dot = 0.0, rn2 = 0.0;
      for (std::size_t i = 0; i < r.size(); ++i) {
        dot += r[i] * query[i];
        rn2 += r[i] * r[i];
      }
      best.offer(cosine_distance(dot, std::sqrt(rn2), qn));
    }
  }
  return best.mean();
}

KnnBatchResult knn_distances(const std::vector<std::vector<double>>& reference,
                             const std::vector<std::vector<double>>& queries, int k, int jobs) {
  if (k <= 0 || static_cast<std::size_t>(k) > reference.size()) {
    throw std::invalid_argument("knn_distances: k out of range");
  }
  KnnBatchResult out;
  out.euclidean.assign(queries.size(), 0.0);
  out.cosine.assign(queries.size(), 0.0);
  if (queries.empty()) return out;

  // Contiguous row-major copy of the references; the scan is memory-bound.
  const std::size_t dim = reference.front().size();
  const std::size_t nref = reference.size();
  std::vector<double> ref_flat(nref * dim);
  std::vector<double> ref_norm2(nref, 0.0);
  for (std::size_t r = 0; r < nref; ++r) {
    if (reference[r].size() != dim) throw std::invalid_argument("knn_distances: ragged reference");
    std::copy(reference[r].begin(), reference[r].end(), ref_flat.begin() + static_cast<long>(r * dim));
    double acc = 0.0;
    for (const double v : reference[r]) acc += v * v;
    ref_norm2[r] = acc;
  }

  parallel_for(jobs, queries.size(), [&](std::size_t q) {
    const auto& query = queries[q];
    if (query.size() != dim) throw std::invalid_argument("knn_distances: query dim mismatch");
    double qn2 = 0.0;
    for (const double v : query) qn2 += v * v;
    const double qn = std::sqrt(qn2);
    SmallestK eu(k), co(k);
    const double* refp = ref_flat.data();
    for (std::size_t r = 0; r < nref; ++r, refp += dim) {
      double dot = 0.0;
      for (std::size_t i = 0; i < dim; ++i) dot += refp[i] * query[i];
      const double d2 = std::fmax(0.0, ref_norm2[r] + qn2 - 2.0 * dot);
      eu.offer(std::sqrt(d2));
      co.offer(cosine_distance(dot, std::sqrt(ref_norm2[r]), qn));
    }
    out.euclidean[q] = eu.mean();
    out.cosine[q] = co.mean();
  });
  return out;
}

double auroc(const std::vector<double>& negatives, const std::vector<double>& positives) {
  if (negatives.empty() || positives.empty()) {
    throw std::invalid_argument("auroc: both score lists must be non-empty");
  }
  // Rank-sum (Mann-Whitney U) with midranks for ties.
  struct Scored {
    double v;
    bool pos;
  };
  std::vector<Scored> all;
  all.reserve(negatives.size() + positives.size());
  for (const double v : negatives) all.push_back({v, false});
  for (const double v : positives) all.push_back({v, true});
  std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) { return a.v < b.v; });

  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].v == all[i].v) ++j;
    const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t t = i; t < j; ++t) {
      if (all[t].pos) rank_sum_pos += midrank;
    }
    i = j;
  }
  const double n1 = static_cast<double>(positives.size());
  const double n0 = static_cast<double>(negatives.size());
  const double u = rank_sum_pos - n1 * (n1 + 1.0) / 2.0;
  return u / (n1 * n0);
}

OodReport run_ood_study(const std::vector<OodStudySide>& sides, int k, int jobs) {
  OodReport report;
  constexpr TapLocation kLocations[] = {TapLocation::post_linear, TapLocation::post_norm,
                                        TapLocation::post_activation};
  for (const auto& side : sides) {
    const int folds = static_cast<int>(side.fold_models->size());
    struct PerMetric {
      double same_sum = 0.0, novel_sum = 0.0, auroc_sum = 0.0;
      int count = 0;
    };
    PerMetric agg_eu, agg_co;

    for (int fold = 0; fold < folds; ++fold) {
      const Policy& model = (*side.fold_models)[static_cast<std::size_t>(fold)];
      const DataView train_view = DataView::fold(*side.dataset, *side.fold_assignment, fold, false);
      const DataView val_view = DataView::fold(*side.dataset, *side.fold_assignment, fold, true);
      const DataView novel_view = DataView::all(*side.novel_dataset);

      for (const TapLocation loc : kLocations) {
        if (loc == TapLocation::post_norm && !model.spec().use_norm) continue;
        const auto reference = extract_embeddings(model, train_view, loc);
        const auto same_emb = extract_embeddings(model, val_view, loc);
        const auto novel_emb = extract_embeddings(model, novel_view, loc);
        const KnnBatchResult same_d = knn_distances(reference, same_emb, k, jobs);
        const KnnBatchResult novel_d = knn_distances(reference, novel_emb, k, jobs);

        for (const OodMetric metric : {OodMetric::euclidean, OodMetric::cosine}) {
          const auto& same = metric == OodMetric::euclidean ? same_d.euclidean : same_d.cosine;
          const auto& novel = metric == OodMetric::euclidean ? novel_d.euclidean : novel_d.cosine;
          OodCell cell;
          cell.train_speed = side.name;
          cell.metric = metric;
          cell.location = loc;
          cell.fold = fold;
          cell.mean_dist_same = std::accumulate(same.begin(), same.end(), 0.0) /
                                static_cast<double>(same.size());
          cell.mean_dist_novel = std::accumulate(novel.begin(), novel.end(), 0.0) /
                                 static_cast<double>(novel.size());
          cell.auroc = auroc(same, novel);
          report.cells.push_back(cell);
          PerMetric& agg = metric == OodMetric::euclidean ? agg_eu : agg_co;
          agg.same_sum += cell.mean_dist_same;
          agg.novel_sum += cell.mean_dist_novel;
          agg.auroc_sum += cell.auroc;
          agg.count += 1;
        }
      }
    }
    for (const OodMetric metric : {OodMetric::euclidean, OodMetric::cosine}) {
      const PerMetric& agg = metric == OodMetric::euclidean ? agg_eu : agg_co;
      if (agg.count == 0) continue;
      OodAggregate a;
      a.train_speed = side.name;
      a.metric = metric;
      a.mean_dist_same = agg.same_sum / agg.count;
      a.mean_dist_novel = agg.novel_sum / agg.count;
      a.mean_auroc = agg.auroc_sum / agg.count;
      report.aggregates.push_back(a);
    }
  }
  return report;
}

ShiftedDataset synth_fast_by_frameskip(const Recording& slow) {
  const double hz = slow.manifest.capture_hz;
  const double tick_s = 1.0 / hz;
  const auto& samples = slow.samples;
  if (samples.size() < 5) throw std::invalid_argument("synth_fast_by_frameskip: recording too short");

  ShiftedDataset ds;
  ds.stack_size = 3;
  ds.shift_ms = 0;
  ds.input_dim = 3 * slow.manifest.ray_count;
  ds.source_hash = slow.content_hash();

  const long n = static_cast<long>(samples.size());
  for (long i = 4; i < n; ++i) {
    const long ids[3] = {i - 4, i - 2, i};
    bool ok = true;
    for (const long k : ids) {
      if (samples[k].perturb_mask || samples[k].infraction_window) ok = false;
    }
    // The skipped window must be contiguous in time (no cleaning gaps).
    for (long k = i - 4; k < i && ok; ++k) {
      if (std::fabs(samples[k + 1].t - samples[k].t - tick_s) > 1e-6) ok = false;
    }
    if (!ok) continue;
    std::vector<double> input;
    input.reserve(static_cast<std::size_t>(ds.input_dim));
    for (const long k : ids) {
      input.insert(input.end(), samples[k].frame.begin(), samples[k].frame.end());
    }
    ds.inputs.push_back(std::move(input));
    ds.labels.push_back(samples[i].steer);
    ds.newest_frame_times.push_back(samples[i].t);
    ds.label_times.push_back(samples[i].t);
    ds.source_index.push_back(static_cast<int>(i));
  }
  ds.dropped_pairs = static_cast<int>(n - static_cast<long>(ds.inputs.size()));
  return ds;
}

}  // namespace minidrive
