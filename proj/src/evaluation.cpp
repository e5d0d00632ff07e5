#include "amofa/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "amofa/gaussian.hpp"
#include "amofa/rng.hpp"

namespace amofa {

namespace {

std::vector<long> cluster_counts(const Clustering& u) {
  std::vector<long> counts(u.cluster_count, 0);
  for (Eigen::Index i = 0; i < u.assignments.size(); ++i) ++counts[u.assignments(i)];
  return counts;
}

}  // namespace

Clustering Clustering::from_labels(const Eigen::VectorXi& labels) {
  if (labels.size() == 0) throw InvalidInput("empty clustering");
  std::map<int, int> remap;
  for (Eigen::Index i = 0; i < labels.size(); ++i) remap.emplace(labels(i), 0);
  int next = 0;
  for (auto& [value, canonical] : remap) canonical = next++;

  Clustering out;
  out.assignments.resize(labels.size());
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    out.assignments(i) = remap.at(labels(i));
  }
  out.cluster_count = next;
  return out;
}

double clustering_entropy(const Clustering& u) {
  const double n = static_cast<double>(u.assignments.size());
  double entropy = 0.0;
  for (long count : cluster_counts(u)) {
    if (count == 0) continue;
    const double share = count / n;
    entropy -= share * std::log(share);
  }
  return entropy;
}

double mutual_information(const Clustering& u, const Clustering& v) {
  if (u.assignments.size() != v.assignments.size()) {
    throw InvalidInput("clusterings cover different sample counts");
  }
  const double n = static_cast<double>(u.assignments.size());
  const std::vector<long> a = cluster_counts(u);
  const std::vector<long> b = cluster_counts(v);
  std::map<std::pair<int, int>, long> joint;
  for (Eigen::Index i = 0; i < u.assignments.size(); ++i) {
    ++joint[{u.assignments(i), v.assignments(i)}];
  }
  double info = 0.0;
  for (const auto& [cell, count] : joint) {
    const double p = count / n;
    info += p * std::log(p * n * n /
                         (static_cast<double>(a[cell.first]) * b[cell.second]));
  }
  return info;
}

double nid(const Clustering& u, const Clustering& v) {
  const double h_max = std::max(clustering_entropy(u), clustering_entropy(v));
  if (h_max <= 0.0) return 0.0;  // both trivial single-cluster partitions
  // Fix the argument order so the summation order, and with it the rounding,
  // is the same for nid(u,v) and nid(v,u): symmetry holds exactly.
  const bool swap = std::lexicographical_compare(
      v.assignments.begin(), v.assignments.end(), u.assignments.begin(),
      u.assignments.end());
  const double info = swap ? mutual_information(v, u) : mutual_information(u, v);
  return std::clamp(1.0 - info / h_max, 0.0, 1.0);
}

Clustering hard_cluster(const MixtureModel& model, const Dataset& data) {
  const Responsibilities resp = responsibilities(model, data);
  Clustering out;
  out.assignments.resize(resp.values.rows());
  for (Eigen::Index i = 0; i < resp.values.rows(); ++i) {
    int best = 0;
    for (int k = 1; k < resp.values.cols(); ++k) {
      if (resp.values(i, k) > resp.values(i, best)) best = k;
    }
    out.assignments(i) = best;
  }
  out.cluster_count = model.component_count();
  return out;
}

int ClassifierBundle::dim() const {
  if (models.empty()) throw InvalidInput("empty classifier bundle");
  return models.begin()->second.dim;
}

int classify(const ClassifierBundle& bundle, const Eigen::VectorXd& x) {
  if (bundle.models.empty()) throw InvalidInput("empty classifier bundle");
  Dataset point;
  point.points = x.transpose();
  int best_label = bundle.models.begin()->first;
  double best_score = -std::numeric_limits<double>::infinity();
  for (const auto& [label, model] : bundle.models) {
    const double score = mixture_log_likelihood(model, point);
    if (score > best_score) {
      best_score = score;
      best_label = label;
    }
  }
  return best_label;
}

ClassifierBundle train_classifier(const Dataset& data, const AmofaConfig& config) {
  data.validate();
  if (!data.labels) throw InvalidInput("classifier training needs labels");
  std::map<int, std::vector<Eigen::Index>> by_class;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    by_class[(*data.labels)(i)].push_back(i);
  }

  ClassifierBundle bundle;
  for (const auto& [label, rows] : by_class) {
    Dataset subset;
    subset.points.resize(static_cast<Eigen::Index>(rows.size()), data.dim());
    for (Eigen::Index r = 0; r < subset.points.rows(); ++r) {
      subset.points.row(r) = data.points.row(rows[r]);
    }
    bundle.models.emplace(label, amofa_fit(subset, config).first);
  }
  return bundle;
}

CvResult cross_validate(const Dataset& data, int folds, const AmofaConfig& config,
                        std::uint64_t seed) {
  data.validate();
  if (!data.labels) throw InvalidInput("cross-validation needs labels");
  if (folds < 2) throw InvalidInput("need at least 2 folds");

  // Stratified assignment: shuffle each class's rows, deal them round-robin.
  std::map<int, std::vector<Eigen::Index>> by_class;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    by_class[(*data.labels)(i)].push_back(i);
  }
  Rng rng(seed);
  std::vector<int> fold_of(data.size(), 0);
  for (auto& [label, rows] : by_class) {
    rng.shuffle(rows);
    for (std::size_t j = 0; j < rows.size(); ++j) {
      fold_of[rows[j]] = static_cast<int>(j % folds);
    }
  }

  CvResult result;
  for (int fold = 0; fold < folds; ++fold) {
    std::vector<Eigen::Index> train_rows, test_rows;
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      (fold_of[i] == fold ? test_rows : train_rows).push_back(i);
    }
    if (test_rows.empty()) continue;

    Dataset train;
    train.points.resize(static_cast<Eigen::Index>(train_rows.size()), data.dim());
    Eigen::VectorXi train_labels(static_cast<Eigen::Index>(train_rows.size()));
    for (Eigen::Index r = 0; r < train.points.rows(); ++r) {
      train.points.row(r) = data.points.row(train_rows[r]);
      train_labels(r) = (*data.labels)(train_rows[r]);
    }
    train.labels = train_labels;

    for (const auto& [label, rows] : by_class) {
      if ((train_labels.array() == label).count() == 0) {
        std::ostringstream msg;
        msg << "class " << label << " absent from training fold " << fold;
        throw InvalidInput(msg.str());
      }
    }

    const ClassifierBundle bundle = train_classifier(train, config);
    long correct = 0;
    for (Eigen::Index row : test_rows) {
      if (classify(bundle, data.points.row(row).transpose()) == (*data.labels)(row)) {
        ++correct;
      }
    }
    result.fold_accuracies.push_back(static_cast<double>(correct) /
                                     static_cast<double>(test_rows.size()));
  }

  const double count = static_cast<double>(result.fold_accuracies.size());
  double mean = 0.0;
  for (double accuracy : result.fold_accuracies) mean += accuracy;
  mean /= count;
  double variance = 0.0;
  for (double accuracy : result.fold_accuracies) {
    variance += (accuracy - mean) * (accuracy - mean);
  }
  result.mean_accuracy = mean;
  result.std_accuracy = count > 1 ? std::sqrt(variance / (count - 1.0)) : 0.0;
  return result;
}

}  // namespace amofa
