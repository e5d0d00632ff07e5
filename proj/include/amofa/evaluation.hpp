#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <vector>

#include "amofa/adaptation.hpp"
#include "amofa/types.hpp"

namespace amofa {

/// A hard partition of N samples; labels are canonicalized to 0..R-1 in
/// ascending order of the original values.
struct Clustering {
  Eigen::VectorXi assignments;
  int cluster_count = 0;

  static Clustering from_labels(const Eigen::VectorXi& labels);
};

/// Partition entropy in nats, with 0 log 0 = 0.
double clustering_entropy(const Clustering& u);

/// Mutual information between two partitions of the same samples, in nats.
double mutual_information(const Clustering& u, const Clustering& v);

/// Normalized information distance 1 - MI / max(H(u), H(v)); 0 when both
/// partitions are the trivial single cluster.
double nid(const Clustering& u, const Clustering& v);

/// Max-responsibility assignment, ties to the lowest component index.
Clustering hard_cluster(const MixtureModel& model, const Dataset& data);

/// One density model per class; classification by maximum likelihood with no
/// class priors, ties to the lowest class label.
struct ClassifierBundle {
  std::map<int, MixtureModel> models;

  int dim() const;
};

int classify(const ClassifierBundle& bundle, const Eigen::VectorXd& x);

/// Trains one AMoFA model per class label on the full dataset.
ClassifierBundle train_classifier(const Dataset& data, const AmofaConfig& config = {});

struct CvResult {
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // sample std across folds
  std::vector<double> fold_accuracies;
};

/// Stratified k-fold cross-validation of class-conditional AMoFA models.
/// Fold assignment shuffles each class's rows with the given seed, so runs
/// are reproducible; a class missing from any training fold is an error.
CvResult cross_validate(const Dataset& data, int folds, const AmofaConfig& config,
                        std::uint64_t seed);

}  // namespace amofa
